"""Synthetic listing pages and a complete demo workspace.

Everything here is deterministic: the same arguments always produce the same
archive bytes, so the demo doubles as the end-to-end regression fixture.
Territory shapes are coarse boxes placed near the real regions, not official
boundaries.
"""
from __future__ import annotations

import html
import json
import random
import shutil
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

from .listing import THEMES, default_rules_path
from .snapshot import RawSnapshot, store_snapshot

FETCH_EPOCH = datetime(2020, 2, 3, 8, 0, tzinfo=timezone.utc)

UNIT_LABELS = {
    "room": "Chambre double",
    "apartment": "Appartement",
    "suite": "Suite junior",
    "studio": "Studio",
    "holiday_home": "Maison de vacances",
    "other": "Tente de luxe",
}

COUNTRY_NAMES = {"FR": "France", "DE": "Allemagne", "GB": "Royaume-Uni", "ES": "Espagne",
                 "IT": "Italie", "MA": "Maroc", "TN": "Tunisie", "US": "États-Unis"}


@dataclass
class ReviewSpec:
    text: str
    posted_at: str
    reviewer_country: str = "FR"
    language: str | None = "fr"
    score: float | None = None
    review_id: str | None = None


@dataclass
class ListingSpec:
    accommodation_id: str
    name: str
    country: str
    latitude: float
    longitude: float
    unit_type: str = "room"
    star_class: int | None = None
    price: float | None = None
    currency: str = "EUR"
    tax: float | None = None
    tax_unknown: bool = False
    rating_overall: float | None = None
    rating_themes: dict[str, float] = field(default_factory=dict)
    review_count: int | None = None
    reviews: list[ReviewSpec] = field(default_factory=list)
    address: str | None = None


def fr_number(value: float, decimals: int = 2) -> str:
    """French display format: narrow grouping space, decimal comma."""
    text = f"{value:,.{decimals}f}".replace(",", "\u202f").replace(".", ",")
    if decimals and text.endswith("," + "0" * decimals):
        text = text[: -(decimals + 1)]
    return text


def render_listing_html(spec: ListingSpec) -> str:
    e = html.escape
    out = [
        "<!DOCTYPE html>",
        '<html lang="fr"><head><meta charset="utf-8">',
        f"<title>{e(spec.name)}</title>",
        f'<meta name="country" content="{e(spec.country)}">',
        "</head><body>",
        f'<div id="hotel" data-hotel-id="{e(spec.accommodation_id)}" '
        f'data-lat="{spec.latitude:.6f}" data-lng="{spec.longitude:.6f}">',
        f'<h1 class="hp-name">{e(spec.name)}</h1>',
        f'<span class="hp-type">{e(UNIT_LABELS[spec.unit_type])}</span>',
    ]
    if spec.address:
        out.append(f'<p class="hp-address">{e(spec.address)}</p>')
    if spec.star_class is not None:
        out.append(f'<span class="hp-stars" data-stars="{spec.star_class}">'
                   f'{"★" * spec.star_class}</span>')
    if spec.price is not None:
        out.append(f'<div class="hp-price" data-currency="{spec.currency}">'
                   f"{fr_number(spec.price)} {spec.currency}</div>")
    if spec.tax_unknown:
        out.append('<div class="hp-extra-charges">Des frais supplémentaires peuvent '
                   "s'appliquer</div>")
    elif spec.tax is not None:
        out.append(f'<div class="hp-tax">Taxes et frais : {fr_number(spec.tax)} {spec.currency}</div>')
    if spec.rating_overall is not None:
        out.append(f'<div class="hp-score">Note globale {fr_number(spec.rating_overall, 1)}</div>')
    if spec.rating_themes:
        out.append('<ul class="hp-subscores">')
        for theme in THEMES:
            if theme in spec.rating_themes:
                out.append(f'<li data-theme="{theme}">{theme} <span class="value">'
                           f"{fr_number(spec.rating_themes[theme], 1)}</span></li>")
        out.append("</ul>")
    count = spec.review_count if spec.review_count is not None else len(spec.reviews)
    out.append(f'<span class="hp-review-count">{fr_number(count, 0)} commentaires</span>')
    out.append("</div>")
    out.append('<div class="hp-reviews">')
    for i, rv in enumerate(spec.reviews):
        rid = rv.review_id or f"{spec.accommodation_id}-r{i:02d}"
        lang = f' lang="{rv.language}"' if rv.language else ""
        out.append(f'<div class="review" data-review-id="{e(rid)}"{lang}>')
        out.append(f'<span class="review-country">{e(COUNTRY_NAMES.get(rv.reviewer_country, rv.reviewer_country))}</span>')
        out.append(f'<span class="review-date">{e(rv.posted_at)}</span>')
        if rv.score is not None:
            out.append(f'<span class="review-score">{fr_number(rv.score, 1)}</span>')
        out.append(f'<p class="review-text">{e(rv.text)}</p>')
        out.append("</div>")
    out.append("</div></body></html>")
    return "\n".join(out) + "\n"


def write_archive(specs: Sequence[ListingSpec], archive: str | Path,
                  epoch: datetime = FETCH_EPOCH) -> list[str]:
    ids = []
    for i, spec in enumerate(specs):
        body = render_listing_html(spec).encode("utf-8")
        snap = RawSnapshot.create(f"https://listings.example/{spec.accommodation_id}.html", body,
                                  fetched_at=epoch + timedelta(minutes=i))
        ids.append(store_snapshot(snap, archive))
    return ids


def box(x0: float, y0: float, x1: float, y1: float) -> list[list[float]]:
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]


def territories_geojson(territories: Sequence[dict]) -> dict:
    return {
        "type": "FeatureCollection",
        "features": [
            {"type": "Feature",
             "properties": {k: t[k] for k in ("territory_id", "country", "name", "level_label",
                                              "area_km2")},
             "geometry": {"type": "Polygon", "coordinates": [t["ring"]]}}
            for t in territories
        ],
    }


DEMO_TERRITORIES = [
    {"territory_id": "MA-06", "country": "MA", "name": "Casablanca-Settat", "level_label": "region",
     "area_km2": 19448.0, "ring": box(-8.6, 32.4, -7.0, 33.8)},
    {"territory_id": "MA-07", "country": "MA", "name": "Marrakech-Safi", "level_label": "region",
     "area_km2": 39167.0, "ring": box(-9.8, 30.8, -7.0, 32.4)},
    {"territory_id": "MA-08", "country": "MA", "name": "Drâa-Tafilalet", "level_label": "region",
     "area_km2": 88836.0, "ring": box(-7.0, 29.5, -3.5, 32.4)},
    {"territory_id": "TN-11", "country": "TN", "name": "Tunis", "level_label": "governorate",
     "area_km2": 346.0, "ring": box(10.0, 36.7, 10.4, 37.0)},
    {"territory_id": "TN-51", "country": "TN", "name": "Sousse", "level_label": "governorate",
     "area_km2": 2669.0, "ring": box(10.2, 35.6, 10.8, 36.2)},
    {"territory_id": "TN-61", "country": "TN", "name": "Sfax", "level_label": "governorate",
     "area_km2": 7545.0, "ring": box(10.2, 34.3, 11.2, 35.2)},
]

POSITIVE_PHRASES = [
    "Très belle piscine, le personnel est accueillant",
    "emplacement idéal près de la médina",
    "petit déjeuner délicieux et copieux",
    "chambre propre et confortable",
    "vue magnifique sur la mer",
    "séjour agréable et calme",
    "excellent rapport qualité prix",
    "accueil chaleureux du personnel",
    "jardin magnifique et terrasse agréable",
]
NEGATIVE_PHRASES = [
    "chambre sale et salle de bain vétuste",
    "personnel désagréable à la réception",
    "bruit insupportable la nuit",
    "wifi lent et petit déjeuner décevant",
    "climatisation bruyante",
]
ENGLISH_PHRASES = [
    "Great location and friendly staff",
    "Lovely pool but noisy rooms",
]

DEMO_LEXICON = [
    # word, polarity, joy, fear, sadness, anger, surprise, disgust
    ("belle", "positive", 1, 0, 0, 0, 0, 0),
    ("accueillant", "positive", 1, 0, 0, 0, 0, 0),
    ("idéal", "positive", 1, 0, 0, 0, 0, 0),
    ("délicieux", "positive", 1, 0, 0, 0, 0, 0),
    ("copieux", "positive", 1, 0, 0, 0, 0, 0),
    ("propre", "positive", 0, 0, 0, 0, 0, 0),
    ("confortable", "positive", 1, 0, 0, 0, 0, 0),
    ("magnifique", "positive", 1, 0, 0, 0, 1, 0),
    ("agréable", "positive", 1, 0, 0, 0, 0, 0),
    ("calme", "positive", 1, 0, 0, 0, 0, 0),
    ("excellent", "positive", 1, 0, 0, 0, 0, 0),
    ("chaleureux", "positive", 1, 0, 0, 0, 0, 0),
    ("sale", "negative", 0, 0, 0, 0, 0, 1),
    ("vétuste", "negative", 0, 0, 1, 0, 0, 1),
    ("désagréable", "negative", 0, 0, 0, 1, 0, 1),
    ("bruit", "negative", 0, 0, 0, 1, 0, 0),
    ("insupportable", "negative", 0, 0, 0, 1, 0, 1),
    ("lent", "negative", 0, 0, 1, 0, 0, 0),
    ("décevant", "negative", 0, 0, 1, 0, 0, 0),
    ("bruyante", "negative", 0, 0, 0, 1, 0, 0),
]
FEEL_HEADER = "id;word;polarity;joy;fear;sadness;anger;surprise;disgust"

# 1 EUR-equivalent per unit on the reference booking date
DEMO_RATES = {"MAD": "0.0937", "TND": "0.3198"}


def demo_listings(n: int = 60, unassigned: int = 2, seed: int = 2020) -> list[ListingSpec]:
    """``n`` listings; the last ``unassigned`` lie outside every demo territory."""
    rng = random.Random(seed)
    specs = []
    origins = ["FR", "FR", "FR", "DE", "GB", "GB", "ES", "IT", "MA", "TN", "US"]
    for i in range(n):
        terr = DEMO_TERRITORIES[i % len(DEMO_TERRITORIES)]
        country = terr["country"]
        (x0, y0), (x1, y1) = terr["ring"][0], terr["ring"][2]
        if i >= n - unassigned:
            # offshore, inside no box of its country
            lon, lat = (-11.5, 31.0) if country == "MA" else (12.5, 36.0)
        else:
            lon = round(rng.uniform(x0 + 0.01, x1 - 0.01), 6)
            lat = round(rng.uniform(y0 + 0.01, y1 - 0.01), 6)
        unit = rng.choice(["room", "room", "room", "apartment", "suite", "studio", "holiday_home", "other"])
        star = rng.choice([None, None, None, 3, 4, 5])
        currency = "MAD" if country == "MA" else ("TND" if i % 4 else "EUR")
        base = rng.uniform(300, 2500)
        rate = 1.0 if currency == "EUR" else float(DEMO_RATES[currency])
        price = round(base / rate, 0)
        tax_unknown = i % 13 == 5
        tax = None if tax_unknown else round(rng.uniform(10, 90) / rate, 0)
        rating = round(rng.uniform(6.5, 9.8), 1)
        themes = {t: round(min(10.0, max(1.0, rating + rng.uniform(-1.2, 0.8))), 1)
                  for t in THEMES if rng.random() > 0.15}
        reviews = []
        for k in range(rng.randint(0, 14)):
            day = date(2019, 6, 1) + timedelta(days=rng.randint(0, 240))
            origin = rng.choice(origins)
            if origin in ("GB", "US") and rng.random() < 0.5:
                text = rng.choice(ENGLISH_PHRASES)
                lang = "en"
            else:
                parts = rng.sample(POSITIVE_PHRASES, rng.randint(1, 2))
                if rng.random() < 0.35:
                    parts.append(rng.choice(NEGATIVE_PHRASES))
                text = ", ".join(parts) + "."
                lang = "fr"
            posted = day.isoformat() if k % 3 else f"{day.day} {_FR_MONTH_NAMES[day.month]} {day.year}"
            reviews.append(ReviewSpec(text=text[0].upper() + text[1:], posted_at=posted,
                                      reviewer_country=origin, language=lang,
                                      score=round(rng.uniform(5.0, 10.0), 1)))
        if i == 7 and reviews:
            reviews[0].posted_at = "date inconnue"
        specs.append(ListingSpec(
            accommodation_id=f"{country.lower()}-{i:04d}",
            name=f"{rng.choice(['Riad', 'Dar', 'Hôtel', 'Résidence', 'Villa'])} "
                 f"{rng.choice(['Yasmine', 'Atlas', 'Medina', 'Zitouna', 'Carthage', 'Soleil'])} {i}",
            country=country, latitude=lat, longitude=lon, unit_type=unit, star_class=star,
            price=price, currency=currency, tax=tax, tax_unknown=tax_unknown,
            rating_overall=rating, rating_themes=themes,
            review_count=len(reviews) + rng.randint(0, 400), reviews=reviews,
            address=f"{i} rue {terr['name']}",
        ))
    return specs


_FR_MONTH_NAMES = {1: "janvier", 2: "février", 3: "mars", 4: "avril", 5: "mai", 6: "juin",
                   7: "juillet", 8: "août", 9: "septembre", 10: "octobre", 11: "novembre",
                   12: "décembre"}


def write_lexicon(path: str | Path, entries=DEMO_LEXICON) -> None:
    lines = [FEEL_HEADER]
    for i, (word, pol, *emo) in enumerate(entries, 1):
        lines.append(";".join([str(i), word, pol, *map(str, emo)]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


PIPELINE_TOML = """\
[inputs]
archive = "archive"
rules = "rules.toml"
territories = "territories.geojson"
stay = "stay.json"
fx = "fx.csv"
lexicon = "feel.csv"
stopwords = ["builtin:fr"]
extra_stopwords = ["custom-stopwords.txt"]

[mining]
sample = {sample}
seed = 42
top_comments = 10
min_corr = 0.25
top_words = 20

[output]
dir = "out"
format = "csv"
group_by = "all,country,territory"
choropleth_metrics = ["mean.price_eur", "mean.tax_eur", "mean.rating_overall"]
summary_top = 5
"""


def write_workspace(root: str | Path, specs: Sequence[ListingSpec] | None = None,
                    territories: Sequence[dict] = DEMO_TERRITORIES, sample: float = 0.5) -> Path:
    """Write archive, inputs and ``pipeline.toml`` under ``root``; return the config path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    specs = demo_listings() if specs is None else specs
    write_archive(specs, root / "archive")
    shutil.copyfile(default_rules_path(), root / "rules.toml")
    (root / "territories.geojson").write_text(
        json.dumps(territories_geojson(territories), ensure_ascii=False, indent=1) + "\n",
        encoding="utf-8")
    (root / "stay.json").write_text(json.dumps({
        "adults": 2, "nights": 6, "checkin": "2020-08-01", "checkout": "2020-08-07",
        "booked_on": "2020-02-03"}, indent=1) + "\n", encoding="utf-8")
    fx_lines = ["currency,date,rate_to_eur"] + [f"{c},2020-02-03,{r}" for c, r in sorted(DEMO_RATES.items())]
    (root / "fx.csv").write_text("\n".join(fx_lines) + "\n", encoding="utf-8")
    write_lexicon(root / "feel.csv")
    (root / "custom-stopwords.txt").write_text("séjour\nchambre\n", encoding="utf-8")
    config = root / "pipeline.toml"
    config.write_text(PIPELINE_TOML.format(sample=sample), encoding="utf-8")
    return config
