"""Extraction of accommodation and review records from archived snapshots.

Extraction logic lives in a TOML rules file (see ``data/rules-default.toml``
for the documented schema) so markup drift is handled without code changes.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import re
import unicodedata
from dataclasses import dataclass, field, fields
from datetime import date, datetime
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Any, Iterable

from bs4 import BeautifulSoup

from .errors import ConversionError, ParseError, ValidationError
from .snapshot import RawSnapshot, format_timestamp, parse_timestamp

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

UNIT_TYPES = ("room", "apartment", "suite", "studio", "holiday_home", "other")
THEMES = ("staff", "cleanliness", "comfort", "facilities", "breakfast", "wifi",
          "value_for_money", "location")
RULE_FIELDS = (
    "accommodation_id", "name", "country", "unit_type", "star_class", "price",
    "currency", "tax", "tax_unknown", "latitude", "longitude", "rating_overall",
    *(f"rating_themes.{t}" for t in THEMES), "review_count",
)
REVIEW_FIELDS = ("review_id", "text", "language", "reviewer_country", "posted_at", "score")
REQUIRED_FIELDS = ("name", "latitude", "longitude", "country")
UNKNOWN_COUNTRY = "unknown"

DEFAULT_UNIT_LABELS = {
    "room": "room", "chambre": "room", "double room": "room", "chambre double": "room",
    "twin room": "room", "chambre lits jumeaux": "room",
    "apartment": "apartment", "appartement": "apartment",
    "suite": "suite", "studio": "studio",
    "holiday home": "holiday_home", "maison de vacances": "holiday_home",
    "villa": "holiday_home",
}

_FR_MONTHS = {
    "janvier": 1, "février": 2, "fevrier": 2, "mars": 3, "avril": 4, "mai": 5, "juin": 6,
    "juillet": 7, "août": 8, "aout": 8, "septembre": 9, "octobre": 10, "novembre": 11,
    "décembre": 12, "decembre": 12,
}


# ---------------------------------------------------------------------------
# Stay query and currency conversion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StayQuery:
    adults: int
    nights: int
    checkin: date
    checkout: date
    booked_on: date

    def __post_init__(self):
        if (self.checkout - self.checkin).days != self.nights:
            raise ValidationError(
                f"stay nights={self.nights} but checkout-checkin="
                f"{(self.checkout - self.checkin).days} days")
        if self.adults < 1:
            raise ValidationError("stay needs at least one adult")

    @classmethod
    def from_dict(cls, data: dict) -> "StayQuery":
        checkin = date.fromisoformat(data["checkin"])
        checkout = date.fromisoformat(data["checkout"])
        return cls(
            adults=int(data["adults"]),
            nights=int(data.get("nights", (checkout - checkin).days)),
            checkin=checkin,
            checkout=checkout,
            booked_on=date.fromisoformat(data["booked_on"]),
        )

    def to_dict(self) -> dict:
        return {"adults": self.adults, "nights": self.nights, "checkin": self.checkin.isoformat(),
                "checkout": self.checkout.isoformat(), "booked_on": self.booked_on.isoformat()}


# two adults, six nights in August 2020, booked in early February 2020
REFERENCE_STAY = StayQuery(adults=2, nights=6, checkin=date(2020, 8, 1),
                           checkout=date(2020, 8, 7), booked_on=date(2020, 2, 3))


def load_stay(path: str | Path) -> StayQuery:
    return StayQuery.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class CurrencyTable:
    """EUR conversion rates keyed by (currency, date).

    CSV columns: ``currency,date,rate_to_eur`` where one unit of ``currency``
    is worth ``rate_to_eur`` euros on ``date``.
    """

    def __init__(self, rates: dict[tuple[str, date], Decimal] | None = None):
        self.rates: dict[tuple[str, date], Decimal] = {}
        for (code, day), rate in (rates or {}).items():
            self.add(code, day, rate)

    def add(self, currency: str, day: date, rate) -> None:
        rate = Decimal(str(rate))
        if not rate > 0:
            raise ValidationError(f"non-positive rate for {currency} on {day}: {rate}")
        self.rates[(currency.upper(), day)] = rate

    @classmethod
    def load(cls, path: str | Path) -> "CurrencyTable":
        table = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                table.add(row["currency"].strip(), date.fromisoformat(row["date"].strip()),
                          row["rate_to_eur"].strip())
        return table

    def rate(self, currency: str, day: date) -> Decimal:
        code = currency.upper()
        if code == "EUR":
            return Decimal(1)
        try:
            return self.rates[(code, day)]
        except KeyError:
            raise ConversionError(f"no EUR rate for {code} on {day.isoformat()}") from None

    def to_eur(self, amount: Decimal | float, currency: str, day: date) -> float:
        return float(Decimal(str(amount)) * self.rate(currency, day))


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AccommodationRecord:
    accommodation_id: str
    name: str
    country: str
    unit_type: str
    star_class: int | None
    price_eur: float | None
    tax_eur: float | None
    tax_unknown: bool
    latitude: float
    longitude: float
    rating_overall: float | None
    rating_themes: dict[str, float]
    review_count: int
    snapshot_id: str
    fetched_at: datetime | None = None
    extras: dict[str, Any] = field(default_factory=dict)
    territory_id: str | None = None

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "rating_themes":
                value = {t: value[t] for t in THEMES if t in value}
            elif f.name == "extras":
                value = {k: value[k] for k in sorted(value)}
            elif f.name == "fetched_at":
                value = format_timestamp(value) if value is not None else None
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "AccommodationRecord":
        kwargs = {f.name: data.get(f.name) for f in fields(cls) if f.name in data}
        if kwargs.get("fetched_at"):
            kwargs["fetched_at"] = parse_timestamp(kwargs["fetched_at"])
        kwargs["rating_themes"] = dict(kwargs.get("rating_themes") or {})
        kwargs["extras"] = dict(kwargs.get("extras") or {})
        return cls(**kwargs)


@dataclass(frozen=True)
class ReviewRecord:
    review_id: str
    accommodation_id: str
    text: str
    language: str | None
    reviewer_country: str
    posted_at: date
    score: float | None

    def to_dict(self) -> dict:
        return {
            "review_id": self.review_id,
            "accommodation_id": self.accommodation_id,
            "text": self.text,
            "language": self.language,
            "reviewer_country": self.reviewer_country,
            "posted_at": self.posted_at.isoformat(),
            "score": self.score,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReviewRecord":
        return cls(
            review_id=data["review_id"],
            accommodation_id=data["accommodation_id"],
            text=data["text"],
            language=data.get("language"),
            reviewer_country=data.get("reviewer_country") or UNKNOWN_COUNTRY,
            posted_at=date.fromisoformat(data["posted_at"]),
            score=data.get("score"),
        )


def dumps_record(obj) -> str:
    """Serialize a record as one NDJSON line with its documented key order."""
    return json.dumps(obj.to_dict(), ensure_ascii=False, separators=(",", ":"), allow_nan=False)


def write_ndjson(path: str | Path, items: Iterable) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item in items:
            fh.write(dumps_record(item) if hasattr(item, "to_dict") else
                     json.dumps(item, ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")
            n += 1
    return n


def read_ndjson(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


# ---------------------------------------------------------------------------
# Extraction rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FieldRule:
    name: str
    selector: str | None = None
    path: str | None = None
    attr: str | None = None
    regex: str | None = None
    post: str = "trim"
    locale: str | None = None
    default: Any = None
    absent: bool = False
    date_formats: tuple[str, ...] = ()

    def describe(self) -> str:
        if self.absent:
            return "absent"
        return self.selector or self.path or "<item>"


_POSTS = {"trim", "number", "int", "stars", "enum", "flag", "date", "country", "raw"}


def _field_rule(name: str, spec: dict) -> FieldRule:
    unknown = set(spec) - {"selector", "path", "attr", "regex", "post", "locale", "default",
                           "absent", "date_format"}
    if unknown:
        raise ValidationError(f"rule {name!r}: unknown keys {sorted(unknown)}")
    post = spec.get("post", "trim")
    if post not in _POSTS:
        raise ValidationError(f"rule {name!r}: unknown post-processor {post!r}")
    fmts = spec.get("date_format", ())
    if isinstance(fmts, str):
        fmts = (fmts,)
    rule = FieldRule(name=name, selector=spec.get("selector"), path=spec.get("path"),
                     attr=spec.get("attr"), regex=spec.get("regex"), post=post,
                     locale=spec.get("locale"), default=spec.get("default"),
                     absent=bool(spec.get("absent", False)), date_formats=tuple(fmts))
    if rule.absent and (rule.selector or rule.path):
        raise ValidationError(f"rule {name!r}: 'absent' excludes selector/path")
    if rule.regex:
        re.compile(rule.regex)
    return rule


@dataclass(frozen=True)
class ExtractionRules:
    fields: dict[str, FieldRule]
    review_item: str | None
    review_fields: dict[str, FieldRule]
    enums: dict[str, dict[str, str]]
    extras: dict[str, FieldRule]
    format: str = "html"
    number_locale: str = "fr"
    default_currency: str | None = None
    version: str = "1"

    @classmethod
    def from_dict(cls, data: dict) -> "ExtractionRules":
        fmt = data.get("format", "html")
        if fmt not in ("html", "json"):
            raise ValidationError(f"unsupported rules format {fmt!r}")
        raw_fields = data.get("fields", {})
        flat: dict[str, dict] = {}
        for key, spec in raw_fields.items():
            if key == "rating_themes" and isinstance(spec, dict):
                for theme, sub in spec.items():
                    flat[f"rating_themes.{theme}"] = sub
            else:
                flat[key] = spec
        missing = [f for f in RULE_FIELDS if f not in flat]
        extra = [f for f in flat if f not in RULE_FIELDS]
        if missing:
            raise ValidationError(f"rules missing entries (use absent = true): {missing}")
        if extra:
            raise ValidationError(f"rules define unknown fields {extra}; use [extra.*]")
        field_rules = {name: _field_rule(name, flat[name]) for name in RULE_FIELDS}
        for name in REQUIRED_FIELDS:
            r = field_rules[name]
            if r.absent and r.default is None:
                raise ValidationError(f"required field {name!r} cannot be absent without a default")
        reviews = data.get("reviews", {})
        review_fields = {n: _field_rule(n, s) for n, s in reviews.get("fields", {}).items()}
        unknown_rev = set(review_fields) - set(REVIEW_FIELDS)
        if unknown_rev:
            raise ValidationError(f"unknown review fields {sorted(unknown_rev)}")
        if reviews.get("item") and not {"text", "posted_at"} <= set(review_fields):
            raise ValidationError("review rules need at least text and posted_at")
        enums = {k: {str(a).casefold(): str(b) for a, b in v.items()}
                 for k, v in data.get("enums", {}).items()}
        bad = {v for v in enums.get("unit_type", {}).values() if v not in UNIT_TYPES}
        if bad:
            raise ValidationError(f"unit_type enum maps to unknown values {sorted(bad)}")
        return cls(
            fields=field_rules,
            review_item=reviews.get("item"),
            review_fields=review_fields,
            enums=enums,
            extras={n: _field_rule(n, s) for n, s in data.get("extra", {}).items()},
            format=fmt,
            number_locale=data.get("number_locale", "fr"),
            default_currency=data.get("default_currency"),
            version=str(data.get("version", "1")),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ExtractionRules":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))


def default_rules_path() -> Path:
    return Path(__file__).with_name("data") / "rules-default.toml"


# ---------------------------------------------------------------------------
# Value parsing
# ---------------------------------------------------------------------------

_NUM_RE = re.compile(r"[-+]?\d[\d.,\s\u00a0\u202f']*")


def parse_number(text: str, locale: str = "fr") -> Decimal:
    """Parse the first number in ``text``.

    ``fr`` reads ``1 406,50`` and ``1.406,50``; ``en`` reads ``1,406.50``.
    """
    m = _NUM_RE.search(text)
    if not m:
        raise ValueError(f"no number in {text!r}")
    raw = m.group(0).rstrip(".,' \t\n\u00a0\u202f")
    raw = re.sub(r"[\s\u00a0\u202f']", "", raw)
    if locale == "fr":
        raw = raw.replace(".", "").replace(",", ".")
    elif locale == "en":
        raw = raw.replace(",", "")
    else:
        raise ValueError(f"unknown number locale {locale!r}")
    try:
        return Decimal(raw)
    except InvalidOperation:
        raise ValueError(f"bad number {text!r}") from None


def parse_review_date(text: str, formats: Iterable[str] = ()) -> date:
    text = " ".join(text.split())
    for fmt in formats:
        try:
            return datetime.strptime(text, fmt).date()
        except ValueError:
            pass
    m = re.search(r"\d{4}-\d{2}-\d{2}", text)
    if m:
        return date.fromisoformat(m.group(0))
    m = re.search(r"(\d{1,2})(?:er)?\s+([^\W\d_]+)\s+(\d{4})", text.casefold())
    if m and m.group(2) in _FR_MONTHS:
        return date(int(m.group(3)), _FR_MONTHS[m.group(2)], int(m.group(1)))
    raise ValueError(f"unparseable date {text!r}")


def normalize_name(name: str) -> str:
    return " ".join(unicodedata.normalize("NFKC", name).casefold().split())


def map_unit_type(label: str, table: dict[str, str] | None = None) -> str:
    key = " ".join(label.casefold().split())
    if table and key in table:
        return table[key]
    if key in DEFAULT_UNIT_LABELS:
        return DEFAULT_UNIT_LABELS[key]
    for probe, unit in sorted(DEFAULT_UNIT_LABELS.items(), key=lambda kv: -len(kv[0])):
        if probe in key:
            return unit
    return "other"


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------


class _Doc:
    """Uniform access over an HTML tree or a JSON object."""

    def __init__(self, snapshot: RawSnapshot, rules: ExtractionRules):
        self.rules = rules
        text = snapshot.text()
        if rules.format == "json":
            self.root = json.loads(text)
        else:
            self.root = BeautifulSoup(text, "html.parser")

    def raw(self, rule: FieldRule, scope=None):
        scope = self.root if scope is None else scope
        if rule.absent:
            return None
        if self.rules.format == "json":
            node = scope
            for part in (rule.path or "").split(".") if rule.path else ():
                if isinstance(node, list):
                    try:
                        node = node[int(part)]
                    except (ValueError, IndexError):
                        return None
                elif isinstance(node, dict):
                    node = node.get(part)
                else:
                    return None
                if node is None:
                    return None
            if rule.post == "flag":
                return node if node not in (None, False, "") else None
            value = node if not isinstance(node, (dict, list)) else None
            if value is None:
                return None
            value = str(value) if not isinstance(value, bool) else value
        else:
            node = scope.select_one(rule.selector) if rule.selector else scope
            if node is None:
                return None
            if rule.attr:
                value = node.get(rule.attr)
                if value is None:
                    return None
                if isinstance(value, list):
                    value = " ".join(value)
            else:
                value = node.get_text(" ", strip=True)
        if rule.regex and isinstance(value, str):
            m = re.search(rule.regex, value)
            if not m:
                return None
            value = m.group(1) if m.groups() else m.group(0)
        return value

    def items(self, selector: str):
        if self.rules.format == "json":
            node = self.root
            for part in selector.split("."):
                node = node.get(part) if isinstance(node, dict) else None
            return list(node or [])
        return self.root.select(selector)


def _convert(rule: FieldRule, raw, rules: ExtractionRules, enum_name: str | None = None):
    if raw is None:
        if rule.post == "flag":
            return bool(rule.default) if rule.default is not None else False
        return rule.default
    post = rule.post
    if post == "flag":
        return True
    if post == "raw":
        return raw
    text = raw if isinstance(raw, str) else str(raw)
    text = " ".join(text.split())
    if post == "trim":
        return text or rule.default
    if post == "number":
        return float(parse_number(text, rule.locale or rules.number_locale))
    if post == "int":
        return int(parse_number(text, rule.locale or rules.number_locale))
    if post == "stars":
        glyphs = text.count("★")
        if glyphs:
            return glyphs
        return int(parse_number(text, "en"))
    if post == "enum":
        if enum_name == "unit_type":
            return map_unit_type(text, rules.enums.get("unit_type"))
        table = rules.enums.get(enum_name or rule.name, {})
        return table.get(text.casefold(), text)
    if post == "country":
        return _country_code(text, rules.enums.get("country", {}))
    if post == "date":
        return parse_review_date(text, rule.date_formats)
    raise AssertionError(post)


def _country_code(text: str, table: dict[str, str]) -> str:
    key = " ".join(text.split()).casefold()
    if not key:
        return UNKNOWN_COUNTRY
    if key in table:
        return table[key].upper()
    if len(key) == 2 and key.isascii() and key.isalpha():
        return key.upper()
    return UNKNOWN_COUNTRY


def _field(doc: _Doc, name: str, scope=None):
    rule = doc.rules.fields[name]
    raw = doc.raw(rule, scope)
    try:
        return _convert(rule, raw, doc.rules, enum_name=name)
    except ValueError as exc:
        raise ParseError(name, rule.describe(), str(exc)) from None


def derive_accommodation_id(name: str, latitude: float, longitude: float) -> str:
    key = f"{normalize_name(name)}|{round(latitude, 5):.5f}|{round(longitude, 5):.5f}"
    return "acc-" + hashlib.sha256(key.encode("utf-8")).hexdigest()[:16]


def _identity(doc: _Doc) -> tuple[str, str, float, float]:
    name = _field(doc, "name")
    if not name:
        raise ParseError("name", doc.rules.fields["name"].describe())
    coords = []
    for axis in ("latitude", "longitude"):
        rule = doc.rules.fields[axis]
        raw = doc.raw(rule)
        if raw is None and rule.default is None:
            raise ParseError(axis, rule.describe())
        try:
            coords.append(float(parse_number(str(raw), rule.locale or "en"))
                          if raw is not None else float(rule.default))
        except ValueError as exc:
            raise ParseError(axis, rule.describe(), str(exc)) from None
    lat, lon = coords
    acc_id = _field(doc, "accommodation_id")
    if not acc_id:
        acc_id = derive_accommodation_id(name, lat, lon)
    return str(acc_id), name, lat, lon


def extract_accommodation(snapshot: RawSnapshot, rules: ExtractionRules, stay: StayQuery,
                          fx: CurrencyTable) -> AccommodationRecord:
    """Build one validated AccommodationRecord from a listing snapshot.

    Prices and taxes are read in the page currency and converted to EUR at the
    rate for ``stay.booked_on``.

    Raises:
        ParseError: a required field (name, coordinates, country) is missing.
        ConversionError: no EUR rate for the page currency on the booking date.
        ValidationError: any record invariant fails (e.g. rating outside 1..10).
    """
    doc = _Doc(snapshot, rules)
    acc_id, name, lat, lon = _identity(doc)
    country = _field(doc, "country")
    if not country:
        raise ParseError("country", rules.fields["country"].describe())
    unit = _field(doc, "unit_type")
    unit = unit if unit in UNIT_TYPES else "other"
    star = _field(doc, "star_class")

    tax_unknown = bool(_field(doc, "tax_unknown"))
    price = _field(doc, "price")
    tax = None if tax_unknown else _field(doc, "tax")
    currency = _field(doc, "currency") or rules.default_currency
    if (price is not None or tax is not None) and not currency:
        raise ConversionError(f"{acc_id}: price present but currency unknown")
    price_eur = fx.to_eur(price, currency, stay.booked_on) if price is not None else None
    tax_eur = fx.to_eur(tax, currency, stay.booked_on) if tax is not None else None

    themes = {}
    for theme in THEMES:
        value = _field(doc, f"rating_themes.{theme}")
        if value is not None:
            themes[theme] = value
    review_count = _field(doc, "review_count")
    if review_count is None:
        review_count = len(doc.items(rules.review_item)) if rules.review_item else 0

    extras = {}
    for key, rule in rules.extras.items():
        try:
            extras[key] = _convert(rule, doc.raw(rule), rules)
        except ValueError as exc:
            raise ParseError(key, rule.describe(), str(exc)) from None

    record = AccommodationRecord(
        accommodation_id=acc_id,
        name=name,
        country=str(country).upper(),
        unit_type=unit,
        star_class=star,
        price_eur=price_eur,
        tax_eur=tax_eur,
        tax_unknown=tax_unknown,
        latitude=lat,
        longitude=lon,
        rating_overall=_field(doc, "rating_overall"),
        rating_themes=themes,
        review_count=review_count,
        snapshot_id=snapshot.snapshot_id,
        fetched_at=snapshot.fetched_at,
        extras=extras,
    )
    problems = validate(record)
    if problems:
        raise ValidationError(f"{acc_id}: " + "; ".join(str(p) for p in problems))
    return record


@dataclass(frozen=True)
class ReviewDrop:
    snapshot_id: str
    index: int
    reason: str


def extract_reviews(snapshot: RawSnapshot, rules: ExtractionRules,
                    drops: list[ReviewDrop] | None = None) -> list[ReviewRecord]:
    """Reviews in page order. Malformed reviews are skipped and appended to ``drops``."""
    if not rules.review_item:
        return []
    doc = _Doc(snapshot, rules)
    acc_id = _identity(doc)[0]
    out: list[ReviewRecord] = []
    for index, item in enumerate(doc.items(rules.review_item)):
        values: dict[str, Any] = {}
        try:
            for name in REVIEW_FIELDS:
                rule = rules.review_fields.get(name)
                if rule is None:
                    values[name] = None
                    continue
                raw = doc.raw(rule, item)
                if name == "reviewer_country":
                    values[name] = _country_code(str(raw or ""), rules.enums.get("country", {}))
                elif name == "posted_at":
                    if raw is None:
                        raise ValueError("missing date")
                    values[name] = parse_review_date(str(raw), rule.date_formats)
                elif name == "score":
                    values[name] = (float(parse_number(str(raw), rule.locale or rules.number_locale))
                                    if raw is not None else None)
                else:
                    values[name] = _convert(rule, raw, rules, enum_name=name)
            text = (values.get("text") or "").strip()
            if not text:
                raise ValueError("empty text")
            score = values.get("score")
            if score is not None and not 1 <= score <= 10:
                raise ValueError(f"score {score} outside [1, 10]")
        except (ValueError, ParseError) as exc:
            log.warning("dropping review %d of %s: %s", index, snapshot.snapshot_id, exc)
            if drops is not None:
                drops.append(ReviewDrop(snapshot.snapshot_id, index, str(exc)))
            continue
        review_id = values.get("review_id") or (
            f"{acc_id}-" + hashlib.sha256(
                f"{values['posted_at'].isoformat()}|{text}".encode("utf-8")).hexdigest()[:12])
        out.append(ReviewRecord(
            review_id=str(review_id),
            accommodation_id=acc_id,
            text=text,
            language=values.get("language") or None,
            reviewer_country=values.get("reviewer_country") or UNKNOWN_COUNTRY,
            posted_at=values["posted_at"],
            score=score,
        ))
    return out


# ---------------------------------------------------------------------------
# Validation and dedupe
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    field: str
    value: Any
    rule: str

    def __str__(self) -> str:
        return f"{self.field}={self.value!r} violates {self.rule}"


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def validate(record: AccommodationRecord,
             reviews: Iterable[ReviewRecord] | None = None) -> list[Violation]:
    """Return every invariant violation of ``record`` (empty list when valid)."""
    v: list[Violation] = []
    if not record.accommodation_id:
        v.append(Violation("accommodation_id", record.accommodation_id, "non-empty"))
    if not record.name or not record.name.strip():
        v.append(Violation("name", record.name, "non-empty"))
    if not (isinstance(record.country, str) and len(record.country) == 2
            and record.country.isalpha() and record.country.isupper()):
        v.append(Violation("country", record.country, "ISO-3166 alpha-2"))
    if record.unit_type not in UNIT_TYPES:
        v.append(Violation("unit_type", record.unit_type, f"one of {UNIT_TYPES}"))
    if record.star_class is not None and (
            isinstance(record.star_class, bool) or record.star_class not in (1, 2, 3, 4, 5)):
        v.append(Violation("star_class", record.star_class, "in 1..5 or absent"))
    for name in ("price_eur", "tax_eur"):
        value = getattr(record, name)
        if value is not None and not (_finite(value) and value >= 0):
            v.append(Violation(name, value, ">= 0"))
    if record.tax_unknown and record.tax_eur is not None:
        v.append(Violation("tax_eur", record.tax_eur, "absent when tax_unknown"))
    if not (_finite(record.latitude) and -90 <= record.latitude <= 90):
        v.append(Violation("latitude", record.latitude, "in [-90, 90]"))
    if not (_finite(record.longitude) and -180 <= record.longitude <= 180):
        v.append(Violation("longitude", record.longitude, "in [-180, 180]"))
    if record.rating_overall is not None and not (
            _finite(record.rating_overall) and 1 <= record.rating_overall <= 10):
        v.append(Violation("rating_overall", record.rating_overall, "in [1, 10]"))
    for theme, value in record.rating_themes.items():
        if theme not in THEMES:
            v.append(Violation(f"rating_themes.{theme}", value, f"theme in {THEMES}"))
        elif not (_finite(value) and 1 <= value <= 10):
            v.append(Violation(f"rating_themes.{theme}", value, "in [1, 10]"))
    if not (isinstance(record.review_count, int) and record.review_count >= 0):
        v.append(Violation("review_count", record.review_count, ">= 0"))
    elif reviews is not None:
        attached = sum(1 for r in reviews if r.accommodation_id == record.accommodation_id)
        if attached > record.review_count:
            v.append(Violation("review_count", record.review_count,
                               f">= attached reviews ({attached})"))
    return v


def _dedupe_key(r: AccommodationRecord) -> tuple:
    return (normalize_name(r.name), round(r.latitude, 5), round(r.longitude, 5))


def _recency(r: AccommodationRecord) -> tuple:
    ts = r.fetched_at.timestamp() if r.fetched_at is not None else float("-inf")
    return (ts, r.snapshot_id, r.accommodation_id)


def dedupe(records: Iterable[AccommodationRecord]) -> list[AccommodationRecord]:
    """Collapse listings sharing normalized name and 5-decimal coordinates.

    The survivor is the record from the newest snapshot. Output is sorted by
    accommodation_id and independent of input order.
    """
    best: dict[tuple, AccommodationRecord] = {}
    for r in records:
        key = _dedupe_key(r)
        cur = best.get(key)
        if cur is None or _recency(r) > _recency(cur):
            best[key] = r
    return sorted(best.values(), key=lambda r: (r.accommodation_id, r.snapshot_id))
