"""Territorial aggregates: offer concentration, structure, prices, taxes and ratings.

All means are unweighted per-accommodation arithmetic means. Records are
sorted by ``accommodation_id`` before every floating-point reduction and the
sum itself is exactly rounded (``math.fsum``), so results do not depend on
ingest order. A mean over zero contributing records is ``None`` (no data),
never 0.
"""
from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Sequence

from .listing import THEMES, UNIT_TYPES, AccommodationRecord

STAR_BUCKETS = ("unclassified", "1", "2", "3", "4", "5")
ALL_COUNTRIES = "*"
BASE_METRICS = ("price_eur", "tax_eur", "rating_overall")
METRICS = BASE_METRICS + tuple(f"rating_themes.{t}" for t in THEMES)
GROUP_LEVELS = ("all", "country", "territory", "star")
CSV_COLUMNS = ("country", "territory_id", "star_bucket", "metric", "value", "coverage", "n")
NO_DATA = "NA"

ASSUMPTIONS = {
    "mean_weighting": "unweighted per accommodation",
    "tax_mean": "excludes tax_unknown records; their count is reported as count.tax_unknown",
    "concentration": "shares over territory-assigned records of the country",
}


@dataclass(frozen=True)
class GroupKey:
    country: str
    territory_id: str | None = None
    star_bucket: str | None = None

    def sort_key(self) -> tuple:
        return (self.country != ALL_COUNTRIES, self.country, self.territory_id or "",
                STAR_BUCKETS.index(self.star_bucket) + 1 if self.star_bucket else 0)

    def matches(self, r: AccommodationRecord) -> bool:
        if self.country != ALL_COUNTRIES and r.country != self.country:
            return False
        if self.territory_id is not None and r.territory_id != self.territory_id:
            return False
        if self.star_bucket is not None and star_bucket(r) != self.star_bucket:
            return False
        return True


@dataclass
class AggregateReport:
    group: GroupKey
    n: int
    shares: dict[str, dict[str, float]] = field(default_factory=dict)
    means: dict[str, float | None] = field(default_factory=dict)
    coverage: dict[str, int] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)
    values: dict[str, float] = field(default_factory=dict)
    share_totals: dict[str, int] = field(default_factory=dict)


def star_bucket(r: AccommodationRecord) -> str:
    return "unclassified" if r.star_class is None else str(r.star_class)


def _sorted(records: Iterable[AccommodationRecord]) -> list[AccommodationRecord]:
    return sorted(records, key=lambda r: (r.accommodation_id, r.snapshot_id))


def select(records: Iterable[AccommodationRecord], group: GroupKey | None) -> list[AccommodationRecord]:
    if group is None:
        return list(records)
    return [r for r in records if group.matches(r)]


def _ratios(counts: Counter, order: Sequence[str] | None = None) -> dict[str, float]:
    total = sum(counts.values())
    if not total:
        return {}
    keys = [k for k in order if counts.get(k)] if order else sorted(k for k, v in counts.items() if v)
    return {k: counts[k] / total for k in keys}


def concentration_shares(records: Iterable[AccommodationRecord], country: str) -> dict[str, float]:
    """Share of the country's territory-assigned records held by each territory."""
    counts = Counter(r.territory_id for r in records
                     if r.territory_id is not None and (country == ALL_COUNTRIES or r.country == country))
    return _ratios(counts)


def type_structure(records: Iterable[AccommodationRecord], group: GroupKey | None = None) -> dict[str, float]:
    return _ratios(Counter(r.unit_type for r in select(records, group)), UNIT_TYPES)


def classification_structure(records: Iterable[AccommodationRecord],
                             group: GroupKey | None = None) -> tuple[float | None, dict[str, float]]:
    """Unclassified share of the group and the star distribution over classified records."""
    rs = select(records, group)
    if not rs:
        return None, {}
    stars = Counter(str(r.star_class) for r in rs if r.star_class is not None)
    unclassified = len(rs) - sum(stars.values())
    return unclassified / len(rs), _ratios(stars, STAR_BUCKETS[1:])


def metric_value(r: AccommodationRecord, metric: str) -> float | None:
    if metric == "tax_eur":
        return None if r.tax_unknown else r.tax_eur
    if metric in ("price_eur", "rating_overall"):
        return getattr(r, metric)
    if metric.startswith("rating_themes."):
        return r.rating_themes.get(metric.split(".", 1)[1])
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def mean_metric(records: Iterable[AccommodationRecord], metric: str,
                group: GroupKey | None = None) -> tuple[float | None, int]:
    """(mean, coverage) over records carrying ``metric``; mean is None when coverage is 0."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    values = [v for v in (metric_value(r, metric) for r in _sorted(select(records, group)))
              if v is not None]
    if not values:
        return None, 0
    return math.fsum(values) / len(values), len(values)


@dataclass(frozen=True)
class ClassComparison:
    mean_unclassified: float | None
    coverage_unclassified: int
    mean_classified: float | None
    coverage_classified: int


def classified_vs_unclassified(records: Iterable[AccommodationRecord],
                               group: GroupKey | None = None) -> ClassComparison:
    rs = select(records, group)
    mu, cu = mean_metric([r for r in rs if r.star_class is None], "rating_overall")
    mc, cc = mean_metric([r for r in rs if r.star_class is not None], "rating_overall")
    return ClassComparison(mu, cu, mc, cc)


def parse_group_by(text: str | Sequence[str]) -> tuple[str, ...]:
    levels = [p.strip() for p in text.split(",")] if isinstance(text, str) else list(text)
    bad = [p for p in levels if p not in GROUP_LEVELS]
    if bad or not levels:
        raise ValueError(f"group-by levels must be from {GROUP_LEVELS}, got {levels}")
    return tuple(p for p in GROUP_LEVELS if p in levels)


def _group_keys(records: Sequence[AccommodationRecord], levels: tuple[str, ...]) -> list[GroupKey]:
    keys: set[GroupKey] = set()
    countries = {r.country for r in records}
    if "all" in levels:
        keys.add(GroupKey(ALL_COUNTRIES))
        if "star" in levels:
            keys.update(GroupKey(ALL_COUNTRIES, None, star_bucket(r)) for r in records)
    if {"country", "territory", "star"} & set(levels):
        keys.update(GroupKey(c) for c in countries)
    if "territory" in levels:
        keys.update(GroupKey(r.country, r.territory_id) for r in records if r.territory_id)
    if "star" in levels:
        keys.update(GroupKey(r.country, None, star_bucket(r)) for r in records)
        if "territory" in levels:
            keys.update(GroupKey(r.country, r.territory_id, star_bucket(r))
                        for r in records if r.territory_id)
    return sorted(keys, key=GroupKey.sort_key)


def aggregate(records: Sequence[AccommodationRecord], group: GroupKey,
              areas: dict[str, float] | None = None) -> AggregateReport:
    rs = _sorted(select(records, group))
    rep = AggregateReport(group=group, n=len(rs))
    if not rs:
        return rep
    if group.territory_id is None and group.star_bucket is None:
        shares = concentration_shares(rs, group.country)
        if shares:
            rep.shares["territory"] = shares
            rep.share_totals["territory"] = sum(1 for r in rs if r.territory_id is not None)
    rep.shares["unit_type"] = type_structure(rs)
    rep.share_totals["unit_type"] = len(rs)
    classified = Counter("unclassified" if r.star_class is None else "classified" for r in rs)
    rep.shares["classification"] = _ratios(classified, ("unclassified", "classified"))
    rep.share_totals["classification"] = len(rs)
    _, stars = classification_structure(rs)
    if stars:
        rep.shares["star"] = stars
        rep.share_totals["star"] = classified["classified"]
    for metric in METRICS:
        rep.means[metric], rep.coverage[metric] = mean_metric(rs, metric)
    cmp = classified_vs_unclassified(rs)
    rep.means["rating_overall.unclassified"] = cmp.mean_unclassified
    rep.coverage["rating_overall.unclassified"] = cmp.coverage_unclassified
    rep.means["rating_overall.classified"] = cmp.mean_classified
    rep.coverage["rating_overall.classified"] = cmp.coverage_classified
    rep.counts["tax_unknown"] = sum(1 for r in rs if r.tax_unknown)
    if areas and group.territory_id in areas and group.star_bucket is None:
        from .geo import density_per_100km2
        rep.values["density_per_100km2"] = density_per_100km2(len(rs), areas[group.territory_id])
    return rep


def build_report(records: Iterable[AccommodationRecord], group_by="country,territory",
                 areas: dict[str, float] | None = None) -> list[AggregateReport]:
    """One report per group, ordered by (country, territory_id, star_bucket)."""
    rs = _sorted(records)
    levels = parse_group_by(group_by)
    return [aggregate(rs, key, areas) for key in _group_keys(rs, levels)]


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def fmt_fixed(value: float | None, places: int) -> str:
    if value is None:
        return NO_DATA
    q = Decimal(1).scaleb(-places)
    out = Decimal(repr(float(value))).quantize(q, rounding=ROUND_HALF_UP)
    if out == 0:
        out = abs(out)
    return f"{out:.{places}f}"


def report_rows(reports: Iterable[AggregateReport]) -> list[dict]:
    """Flatten reports into (group, metric) rows with unrounded values."""
    rows = []
    for rep in reports:
        g = rep.group
        base = {"country": g.country, "territory_id": g.territory_id or "",
                "star_bucket": g.star_bucket or ""}

        def row(metric, value, coverage, kind):
            rows.append({**base, "metric": metric, "value": value, "coverage": coverage,
                         "n": rep.n, "kind": kind})

        row("count", rep.n, rep.n, "count")
        for dim in ("territory", "unit_type", "classification", "star"):
            dist = rep.shares.get(dim)
            if not dist:
                continue
            denom = rep.share_totals[dim]
            for label, ratio in dist.items():
                row(f"share.{dim}.{label}", ratio, denom, "ratio")
        for metric, value in rep.means.items():
            row(f"mean.{metric}", value, rep.coverage[metric], "mean")
        for name, value in rep.counts.items():
            row(f"count.{name}", value, rep.n, "count")
        for name, value in rep.values.items():
            row(name, value, rep.n, "mean")
    return rows


def render_value(kind: str, value) -> str:
    if kind == "ratio":
        return fmt_fixed(value, 4)
    if kind == "mean":
        return fmt_fixed(value, 2)
    return str(value)


def _render(row: dict) -> dict:
    text = render_value(row["kind"], row["value"])
    return {"country": row["country"], "territory_id": row["territory_id"],
            "star_bucket": row["star_bucket"], "metric": row["metric"], "value": text,
            "coverage": row["coverage"], "n": row["n"]}


def reports_to_csv(reports: Iterable[AggregateReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in report_rows(reports):
        writer.writerow(_render(row))
    return buf.getvalue()


def reports_to_json(reports: Iterable[AggregateReport]) -> str:
    doc = {"assumptions": ASSUMPTIONS, "rows": [_render(r) for r in report_rows(reports)]}
    return json.dumps(doc, ensure_ascii=False, indent=1) + "\n"
