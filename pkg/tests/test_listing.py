import random
from datetime import date, datetime, timedelta, timezone
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_record
from tourmonitor.demo import ListingSpec, ReviewSpec, render_listing_html
from tourmonitor.errors import ConversionError, ParseError, ValidationError
from tourmonitor.listing import (REFERENCE_STAY, RULE_FIELDS, UNIT_TYPES, AccommodationRecord,
                                 CurrencyTable, ExtractionRules, ReviewRecord, StayQuery,
                                 dedupe, default_rules_path, dumps_record, extract_accommodation,
                                 extract_reviews, map_unit_type, parse_number, parse_review_date,
                                 read_ndjson, validate, write_ndjson)
from tourmonitor.snapshot import RawSnapshot

RULES = ExtractionRules.load(default_rules_path())
FX = CurrencyTable()
FX.add("MAD", date(2020, 2, 3), "0.0937")
TS = datetime(2020, 2, 3, 8, tzinfo=timezone.utc)

RIAD_X = """<!DOCTYPE html><html><head><meta name="country" content="MA"></head><body>
<div id="hotel" data-hotel-id="ma-riad-x" data-lat="31.628" data-lng="-7.989">
<h1 class="hp-name">Riad X</h1>
<span class="hp-type">Chambre Double</span>
<span class="hp-stars" data-stars="5">★★★★★</span>
<div class="hp-price" data-currency="EUR">675 €</div>
<div class="hp-tax">Taxes : 12,50 €</div>
<div class="hp-score">Note 8,7</div>
<span class="hp-review-count">1 204 commentaires</span>
</div>
<div class="hp-reviews">
<div class="review" lang="fr"><span class="review-country">France</span>
<span class="review-date">12 mars 2020</span><p class="review-text">Très belle piscine</p></div>
<div class="review" lang="fr"><span class="review-country">Allemagne</span>
<span class="review-date">2020-01-05</span><p class="review-text">Accueil chaleureux</p></div>
<div class="review" lang="en"><span class="review-country">Royaume-Uni</span>
<span class="review-date">3 janvier 2020</span><p class="review-text">Lovely pool</p></div>
</div></body></html>"""


def snap_of(html, ts=TS):
    return RawSnapshot.create("https://listings.example/x.html", html.encode("utf-8"), fetched_at=ts)


def spec(**kw):
    base = dict(accommodation_id="ma-0001", name="Dar Atlas", country="MA",
                latitude=31.6, longitude=-8.0, price=1000, currency="MAD", tax=50,
                rating_overall=8.1)
    base.update(kw)
    return ListingSpec(**base)


def test_riad_x_fields():
    rec = extract_accommodation(snap_of(RIAD_X), RULES, REFERENCE_STAY, FX)
    assert rec.name == "Riad X"
    assert rec.accommodation_id == "ma-riad-x"
    assert rec.star_class == 5
    assert rec.price_eur == 675
    assert rec.tax_eur == 12.5
    assert rec.country == "MA"
    assert rec.unit_type == "room"
    assert rec.rating_overall == pytest.approx(8.7)
    assert rec.review_count == 1204
    assert (rec.latitude, rec.longitude) == (31.628, -7.989)
    assert validate(rec) == []


def test_missing_star_badge_is_unclassified():
    html = RIAD_X.replace('<span class="hp-stars" data-stars="5">★★★★★</span>', "")
    assert extract_accommodation(snap_of(html), RULES, REFERENCE_STAY, FX).star_class is None


def test_rating_out_of_range_is_validation_error():
    with pytest.raises(ValidationError, match="rating_overall"):
        extract_accommodation(snap_of(RIAD_X.replace("Note 8,7", "Note 11")), RULES, REFERENCE_STAY, FX)


def test_missing_name_is_parse_error():
    html = RIAD_X.replace('<h1 class="hp-name">Riad X</h1>', "")
    with pytest.raises(ParseError) as info:
        extract_accommodation(snap_of(html), RULES, REFERENCE_STAY, FX)
    assert info.value.field == "name"
    assert isinstance(info.value, ValidationError)


def test_currency_conversion_uses_booking_date():
    rec = extract_accommodation(snap_of(render_listing_html(spec())), RULES, REFERENCE_STAY, FX)
    assert rec.price_eur == pytest.approx(93.7, abs=1e-9)
    assert rec.tax_eur == pytest.approx(4.685, abs=1e-9)


def test_missing_rate_is_conversion_error():
    later = StayQuery(adults=2, nights=6, checkin=date(2020, 8, 1), checkout=date(2020, 8, 7),
                      booked_on=date(2020, 2, 4))
    with pytest.raises(ConversionError):
        extract_accommodation(snap_of(render_listing_html(spec())), RULES, later, FX)


def test_tax_unknown_flag():
    rec = extract_accommodation(snap_of(render_listing_html(spec(tax_unknown=True))),
                                RULES, REFERENCE_STAY, FX)
    assert rec.tax_unknown and rec.tax_eur is None


def test_three_reviews_in_page_order():
    reviews = extract_reviews(snap_of(RIAD_X), RULES)
    assert [r.text for r in reviews] == ["Très belle piscine", "Accueil chaleureux", "Lovely pool"]
    assert [r.posted_at for r in reviews] == [date(2020, 3, 12), date(2020, 1, 5), date(2020, 1, 3)]
    assert [r.reviewer_country for r in reviews] == ["FR", "DE", "GB"]
    assert [r.language for r in reviews] == ["fr", "fr", "en"]
    assert len({r.review_id for r in reviews}) == 3
    assert all(r.accommodation_id == "ma-riad-x" for r in reviews)


def test_empty_review_section():
    html = render_listing_html(spec(reviews=[]))
    assert extract_reviews(snap_of(html), RULES) == []


def test_malformed_date_is_dropped():
    reviews = [ReviewSpec("Très propre", "2020-01-01"), ReviewSpec("Bruyant", "date inconnue"),
               ReviewSpec("Parfait", "5 février 2020")]
    drops = []
    out = extract_reviews(snap_of(render_listing_html(spec(reviews=reviews))), RULES, drops)
    assert [r.text for r in out] == ["Très propre", "Parfait"]
    assert len(drops) == 1 and drops[0].index == 1


def test_extraction_is_deterministic():
    s = snap_of(RIAD_X)
    a = [dumps_record(extract_accommodation(s, RULES, REFERENCE_STAY, FX))
         for _ in range(3)]
    assert len(set(a)) == 1


def test_rules_must_cover_every_field():
    import tomli

    data = tomli.loads(default_rules_path().read_text(encoding="utf-8"))
    del data["fields"]["tax"]
    with pytest.raises(ValidationError, match="tax"):
        ExtractionRules.from_dict(data)
    data["fields"]["tax"] = {"absent": True}
    assert ExtractionRules.from_dict(data).fields["tax"].absent
    data["fields"]["bogus"] = {"selector": "x"}
    with pytest.raises(ValidationError, match="bogus"):
        ExtractionRules.from_dict(data)


def test_rule_fields_are_complete():
    assert set(RULES.fields) == set(RULE_FIELDS)


@pytest.mark.parametrize("text,locale,expected", [
    ("1 406,50 €", "fr", "1406.50"), ("1 406,5", "fr", "1406.5"),
    ("1.406,50", "fr", "1406.50"), ("675 €", "fr", "675"), ("1,406.50", "en", "1406.50"),
    ("-7.989", "en", "-7.989"), ("Note 8,7/10", "fr", "8.7"),
])
def test_parse_number(text, locale, expected):
    assert parse_number(text, locale) == Decimal(expected)


def test_parse_number_rejects_text():
    with pytest.raises(ValueError):
        parse_number("gratuit")


@pytest.mark.parametrize("text,expected", [
    ("2020-01-05", date(2020, 1, 5)), ("12 mars 2020", date(2020, 3, 12)),
    ("1er août 2019", date(2019, 8, 1)), ("Publié le 3 décembre 2019", date(2019, 12, 3)),
])
def test_parse_review_date(text, expected):
    assert parse_review_date(text) == expected


@given(st.text(max_size=30))
def test_unit_type_mapping_is_total(label):
    assert map_unit_type(label) in UNIT_TYPES


@pytest.mark.parametrize("label,unit", [("Chambre Double", "room"), ("Appartement 2 pièces", "apartment"),
                                        ("Suite Junior", "suite"), ("Tente berbère", "other")])
def test_unit_type_examples(label, unit):
    assert map_unit_type(label) == unit


def test_stay_query_checks_nights():
    with pytest.raises(ValidationError):
        StayQuery(adults=2, nights=5, checkin=date(2020, 8, 1), checkout=date(2020, 8, 7),
                  booked_on=date(2020, 2, 3))


@pytest.mark.parametrize("change,field", [
    ({"rating_overall": 0.5}, "rating_overall"), ({"star_class": 6}, "star_class"),
    ({"price_eur": -1.0}, "price_eur"), ({"latitude": 91.0}, "latitude"),
    ({"country": "mar"}, "country"), ({"unit_type": "tent"}, "unit_type"),
    ({"tax_unknown": True, "tax_eur": 3.0}, "tax_eur"),
    ({"rating_themes": {"staff": 10.5}}, "rating_themes.staff"),
    ({"price_eur": float("nan")}, "price_eur"),
])
def test_validate_flags(change, field):
    assert field in {v.field for v in validate(make_record(**change))}


def test_validate_review_count_vs_attached():
    rec = make_record(review_count=1)
    reviews = [ReviewRecord(f"r{i}", rec.accommodation_id, "ok", "fr", "FR", date(2020, 1, 1), None)
               for i in range(2)]
    assert [v.field for v in validate(rec, reviews)] == ["review_count"]
    assert validate(rec, reviews[:1]) == []


def test_record_roundtrip(tmp_path):
    rec = make_record(3, star_class=4, price_eur=12.5, rating_themes={"wifi": 7.0}, extras={"a": "b"},
                      territory_id="MA-07")
    assert AccommodationRecord.from_dict(rec.to_dict()) == rec
    write_ndjson(tmp_path / "r.ndjson", [rec, rec])
    rows = read_ndjson(tmp_path / "r.ndjson")
    assert [AccommodationRecord.from_dict(d) for d in rows] == [rec, rec]


def test_dedupe_keeps_newest():
    old = make_record(1, name="Riad  Atlas", snapshot_id="s-old",
                      fetched_at=TS, price_eur=10.0)
    new = make_record(2, name="riad atlas", snapshot_id="s-new",
                      fetched_at=TS + timedelta(days=1), price_eur=20.0)
    assert dedupe([old, new]) == [new]
    assert dedupe([new, old]) == [new]


def test_dedupe_distinct_coordinates():
    a = make_record(1, name="Dar", latitude=31.60001)
    b = make_record(2, name="Dar", latitude=31.60002)
    assert len(dedupe([a, b])) == 2


def _random_records(rng, n):
    names = ["Riad A", "riad a", "Dar B", "Villa C", "Hôtel D"]
    return [make_record(i, name=rng.choice(names), latitude=rng.choice([31.6, 31.7]),
                        longitude=rng.choice([-8.0, -7.9]),
                        fetched_at=TS + timedelta(hours=rng.randint(0, 5)))
            for i in range(n)]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_dedupe_idempotent_and_order_free(seed):
    rng = random.Random(seed)
    records = _random_records(rng, 50)
    once = dedupe(records)
    assert dedupe(once) == once
    shuffled = records[:]
    rng.shuffle(shuffled)
    assert dedupe(shuffled) == once
    keys = {(r.name.casefold(), r.latitude, r.longitude) for r in records}
    assert len(once) == len(keys)
