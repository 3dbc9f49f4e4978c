"""Pipeline stages, end-to-end orchestration and publication-shaped outputs."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__
from .errors import MonitorError, StageError, ValidationError
from .geo import TerritoryIndex, assign_many, load_territories
from .listing import (
    AccommodationRecord,
    CurrencyTable,
    ExtractionRules,
    ReviewDrop,
    ReviewRecord,
    StayQuery,
    dedupe,
    extract_accommodation,
    extract_reviews,
    load_stay,
    validate,
    write_ndjson,
)
from .sentiment import (
    DEFAULT_MIN_CORR,
    Corpus,
    Document,
    IdentityTranslator,
    SentimentLexicon,
    StopList,
    Translator,
    build_corpus,
    build_tdm,
    default_stopwords_path,
    frequency_table,
    group_key,
    origin_structure,
    polarity_counts,
    positive_ratios,
    word_correlation,
)
from .snapshot import archive_digest, list_snapshots, load_snapshot
from .stats import (
    ASSUMPTIONS,
    AggregateReport,
    build_report,
    fmt_fixed,
    render_value,
    report_rows,
    reports_to_csv,
    reports_to_json,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

MANIFEST_NAME = "run.manifest.json"
BUILTIN_STOPWORDS = "builtin:fr"
SENTIMENT_ASSUMPTIONS = {
    "ratio_counting": "word tokens (not types) per comment",
    "untranslated": "non-French comments without a translator are excluded from polarity, "
                    "frequency and association tables but kept in origin shares",
    "sample_rounding": "round half up, minimum 1",
}


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


@dataclass
class ParseResult:
    records: list[AccommodationRecord]
    reviews: list[ReviewRecord]
    counts: dict[str, int]
    failures: list[dict]
    review_drops: list[ReviewDrop]


def parse_archive(archive: str | Path, rules: ExtractionRules, stay: StayQuery,
                  fx: CurrencyTable) -> ParseResult:
    """Extract, validate and dedupe every 2xx snapshot in the archive.

    Per-snapshot extraction failures are reported, not fatal.
    """
    ids = list_snapshots(archive)
    if not ids:
        raise ValidationError(f"no snapshots in archive {archive}")
    records: list[AccommodationRecord] = []
    reviews: list[ReviewRecord] = []
    failures: list[dict] = []
    review_drops: list[ReviewDrop] = []
    skipped_http = 0
    for sid in ids:
        snap = load_snapshot(sid, archive)
        if not 200 <= snap.http_status < 300:
            skipped_http += 1
            continue
        try:
            rec = extract_accommodation(snap, rules, stay, fx)
            revs = extract_reviews(snap, rules, review_drops)
            problems = validate(rec, revs)
            if problems:
                raise ValidationError("; ".join(map(str, problems)))
        except ValidationError as exc:
            failures.append({"snapshot_id": sid, "error": str(exc)})
            log.warning("snapshot %s not parsed: %s", sid, exc)
            continue
        records.append(rec)
        reviews.extend(revs)
    parsed = len(records)
    survivors = dedupe(records)
    keep = {r.accommodation_id for r in survivors}
    seen: set[str] = set()
    kept_reviews = []
    for rv in sorted(reviews, key=lambda r: (r.accommodation_id, r.review_id)):
        if rv.accommodation_id in keep and rv.review_id not in seen:
            seen.add(rv.review_id)
            kept_reviews.append(rv)
    counts = {
        "snapshots": len(ids),
        "skipped_http": skipped_http,
        "parse_failed": len(failures),
        "parsed": parsed,
        "duplicates_dropped": parsed - len(survivors),
        "records": len(survivors),
        "reviews": len(kept_reviews),
        "reviews_dropped": len(review_drops),
    }
    return ParseResult(survivors, kept_reviews, counts, failures, review_drops)


@dataclass
class GeoResult:
    records: list[AccommodationRecord]
    counts: dict[str, int]
    ties: list[dict]


def locate_records(records: Sequence[AccommodationRecord], index: TerritoryIndex) -> GeoResult:
    from dataclasses import replace

    before = len(index.tie_log)
    ids = assign_many(records, index)
    located = [replace(r, territory_id=t) for r, t in zip(records, ids)]
    ties = [{"longitude": lon, "latitude": lat, "claimants": list(c), "assigned": c[0]}
            for lon, lat, c in index.tie_log[before:]]
    n_loc = sum(1 for t in ids if t is not None)
    return GeoResult(located, {"located": n_loc, "unassigned": len(ids) - n_loc,
                               "border_ties": len(ties)}, ties)


@dataclass
class MiningResult:
    corpus: Corpus
    rows: list[dict]
    frequencies: list[dict]
    associations: list[dict]
    skipped_words: dict[str, list[str]]
    counts: dict[str, int]


def _ratio_text(value: float | None) -> str:
    return fmt_fixed(value, 4)


def mine_reviews(records: Sequence[AccommodationRecord], reviews: Sequence[ReviewRecord],
                 lexicon: SentimentLexicon, stoplist: frozenset, *, fraction=0.10, seed: int = 42,
                 top_comments: int = 10, min_corr: float = DEFAULT_MIN_CORR,
                 assoc_words: Sequence[str] = (), top_words: int = 30, n_assoc_targets: int = 10,
                 translator: Translator | None = None) -> MiningResult:
    corpus = build_corpus(records, reviews, stoplist, fraction=fraction, seed=seed,
                          top_comments=top_comments, translator=translator or IdentityTranslator())
    docs = corpus.documents
    polar_docs = [d for d in docs if d.polar_eligible]
    rows: list[dict] = []

    def add(group, metric, value, coverage):
        rows.append({"group": group, "metric": metric, "value": value, "coverage": coverage})

    groupings = [
        ("all", group_key()),
        ("territory", group_key("territory_id")),
        ("origin", group_key("reviewer_country")),
        ("territory_origin", group_key("territory_id", "reviewer_country")),
    ]
    for level, key in groupings:
        all_by_group: dict[str, list[Document]] = {}
        for d in docs:
            all_by_group.setdefault(key(d), []).append(d)
        ratios = positive_ratios(polar_docs, lexicon, key)
        for g in sorted(all_by_group):
            members = all_by_group[g]
            add(g, "documents", str(len(members)), len(members))
            res = ratios.get(g)
            polar_members = [d for d in members if d.polar_eligible]
            counts = [polarity_counts(d.tokens, lexicon) for d in polar_members]
            add(g, "positive_words", str(sum(c.positive for c in counts)), len(polar_members))
            add(g, "negative_words", str(sum(c.negative for c in counts)), len(polar_members))
            add(g, "unlabeled_words", str(sum(c.unlabeled for c in counts)), len(polar_members))
            add(g, "positive_ratio", _ratio_text(res.ratio if res else None), res.polar if res else 0)
            if level in ("all", "territory"):
                for country, share in origin_structure(members).items():
                    add(g, f"origin_share.{country}", _ratio_text(share), len(members))

    frequencies = []
    for level, key in groupings[:2]:
        for g, table in frequency_table(polar_docs, key).items():
            for rank, (word, count) in enumerate(table[:top_words], start=1):
                frequencies.append({"group": g, "rank": rank, "word": word, "count": count})

    tdm = build_tdm(polar_docs)
    targets = list(assoc_words)
    if not targets:
        n = tdm.n_docs
        for word, count in frequency_table(polar_docs):
            col_sum = int(tdm.column(word).sum())
            if 0 < col_sum < n:
                targets.append(word)
            if len(targets) >= n_assoc_targets:
                break
    associations = []
    skipped: dict[str, list[str]] = {}
    for word in targets:
        if word not in tdm.vocabulary:
            skipped[word] = ["<not in vocabulary>"]
            continue
        try:
            assoc = word_correlation(tdm, word, min_corr)
        except MonitorError as exc:
            skipped[word] = [f"<{exc}>"]
            continue
        skipped[word] = assoc.skipped
        for other, r in assoc.pairs:
            associations.append({"word": word, "associated_word": other, "r": fmt_fixed(r, 4)})

    counts = {
        "sampled_accommodations": len(corpus.sampled),
        "documents": len(docs),
        "polar_documents": len(polar_docs),
        "untranslated_documents": corpus.untranslated,
        "translation_dropped": len(corpus.dropped),
    }
    return MiningResult(corpus, rows, frequencies, associations, skipped, counts)


def _csv_text(rows: Iterable[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def sentiment_csv(result: MiningResult) -> str:
    return _csv_text(result.rows, ("group", "metric", "value", "coverage"))


def frequencies_csv(result: MiningResult) -> str:
    return _csv_text(result.frequencies, ("group", "rank", "word", "count"))


def associations_csv(result: MiningResult) -> str:
    return _csv_text(result.associations, ("word", "associated_word", "r"))


# ---------------------------------------------------------------------------
# Choropleth and summary
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChoroplethRow:
    territory_id: str
    metric: str
    value: float
    coverage: int
    kind: str = "mean"


def emit_choropleth(reports: Iterable[AggregateReport], metric: str = "mean.price_eur") -> list[ChoroplethRow]:
    """Per-territory values of ``metric``, joinable on territory_id; no-data territories omitted."""
    out = []
    for row in report_rows(r for r in reports
                           if r.group.territory_id is not None and r.group.star_bucket is None):
        if row["metric"] == metric and row["value"] is not None:
            out.append(ChoroplethRow(row["territory_id"], metric, row["value"], row["coverage"],
                                     row["kind"]))
    return sorted(out, key=lambda c: c.territory_id)


def choropleth_csv(rows: Iterable[ChoroplethRow]) -> str:
    return _csv_text(({"territory_id": r.territory_id, "metric": r.metric,
                       "value": render_value(r.kind, r.value), "coverage": r.coverage}
                      for r in rows),
                     ("territory_id", "metric", "value", "coverage"))


def emit_summary(reports: Sequence[AggregateReport], ratio_rows: Sequence[dict] = (), top_n: int = 5,
                 names: dict[str, str] | None = None) -> str:
    names = names or {}
    territory_reps = [r for r in reports if r.group.territory_id and r.group.star_bucket is None]
    ratios = [r for r in ratio_rows if r["metric"] == "positive_ratio"]
    if not reports and not ratios:
        return "Territorial tourism monitor summary\n\nNo data.\n"

    def label(rep: AggregateReport) -> str:
        tid = rep.group.territory_id
        name = names.get(tid)
        return f"{tid} {name} ({rep.group.country})" if name else f"{tid} ({rep.group.country})"

    lines = ["Territorial tourism monitor summary", ""]
    country_reps = [r for r in reports if r.group.territory_id is None and r.group.star_bucket is None
                    and r.group.country != "*"]
    total = sum(r.n for r in country_reps)
    lines.append(f"Accommodations: {total} in {len(country_reps)} countries, "
                 f"{len(territory_reps)} territories")
    lines.append("")

    lines.append(f"Top {top_n} territories by accommodation count")
    by_count = sorted(territory_reps, key=lambda r: (-r.n, r.group.territory_id))[:top_n]
    for i, rep in enumerate(by_count, 1):
        lines.append(f"  {i}. {label(rep)}: {rep.n}")
    if not by_count:
        lines.append("  no data")
    lines.append("")

    for metric, title in (("price_eur", "mean price per stay (EUR)"),
                          ("rating_overall", "mean overall rating")):
        lines.append(f"Top {top_n} territories by {title}")
        with_data = [r for r in territory_reps if r.means.get(metric) is not None]
        ranked = sorted(with_data, key=lambda r: (-r.means[metric], r.group.territory_id))[:top_n]
        for i, rep in enumerate(ranked, 1):
            lines.append(f"  {i}. {label(rep)}: {fmt_fixed(rep.means[metric], 2)} "
                         f"(n={rep.coverage[metric]})")
        if not ranked:
            lines.append("  no data")
        lines.append("")

    lines.append("Positive-word ratio by group")
    for row in sorted(ratios, key=lambda r: r["group"]):
        lines.append(f"  {row['group']}: {row['value']} (polar words: {row['coverage']})")
    if not ratios:
        lines.append("  no data")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------


@dataclass
class PipelineConfig:
    archive: Path
    rules: Path
    territories: Path
    stay: Path
    fx: Path
    lexicon: Path
    stopwords: list[Path | str]
    extra_stopwords: list[Path] = field(default_factory=list)
    sample: float = 0.10
    seed: int = 42
    top_comments: int = 10
    min_corr: float = DEFAULT_MIN_CORR
    assoc_words: list[str] = field(default_factory=list)
    top_words: int = 30
    output_dir: Path = Path("out")
    format: str = "csv"
    group_by: str = "all,country,territory"
    choropleth_metrics: list[str] = field(default_factory=lambda: ["mean.price_eur"])
    summary_top: int = 5
    base_dir: Path = Path(".")

    def __post_init__(self):
        if self.format not in ("csv", "json"):
            raise ValidationError(f"format must be csv or json, got {self.format!r}")
        if not 0 < self.sample <= 1:
            raise ValidationError(f"sample fraction must be in (0, 1], got {self.sample}")

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        base = path.parent
        inputs = data.get("inputs", {})
        mining = data.get("mining", {})
        output = data.get("output", {})

        def p(value):
            return value if str(value).startswith("builtin:") else base / value

        try:
            return cls(
                archive=p(inputs["archive"]), rules=p(inputs["rules"]),
                territories=p(inputs["territories"]), stay=p(inputs["stay"]), fx=p(inputs["fx"]),
                lexicon=p(inputs["lexicon"]),
                stopwords=[p(s) for s in inputs.get("stopwords", [BUILTIN_STOPWORDS])],
                extra_stopwords=[p(s) for s in inputs.get("extra_stopwords", [])],
                sample=float(mining.get("sample", 0.10)), seed=int(mining.get("seed", 42)),
                top_comments=int(mining.get("top_comments", 10)),
                min_corr=float(mining.get("min_corr", DEFAULT_MIN_CORR)),
                assoc_words=list(mining.get("assoc_words", [])),
                top_words=int(mining.get("top_words", 30)),
                output_dir=p(output.get("dir", "out")), format=output.get("format", "csv"),
                group_by=output.get("group_by", "all,country,territory"),
                choropleth_metrics=list(output.get("choropleth_metrics", ["mean.price_eur"])),
                summary_top=int(output.get("summary_top", 5)),
                base_dir=base,
            )
        except KeyError as exc:
            raise ValidationError(f"{path}: missing [inputs] key {exc}") from None

    def input_files(self) -> dict[str, Path]:
        files = {"rules": self.rules, "territories": self.territories, "stay": self.stay,
                 "fx": self.fx, "lexicon": self.lexicon}
        for i, s in enumerate(self.stopwords):
            if not str(s).startswith("builtin:"):
                files[f"stopwords[{i}]"] = Path(s)
        for i, s in enumerate(self.extra_stopwords):
            files[f"extra_stopwords[{i}]"] = Path(s)
        return files

    def check_inputs(self) -> None:
        missing = [f"{k}: {v}" for k, v in self.input_files().items() if not Path(v).is_file()]
        if not Path(self.archive).is_dir():
            missing.append(f"archive: {self.archive}")
        if missing:
            raise ValidationError("missing input(s): " + ", ".join(missing))

    def display_path(self, path) -> str:
        try:
            return Path(os.path.relpath(path, self.base_dir)).as_posix()
        except ValueError:
            return str(path)


def load_stoplist(paths: Sequence, extra: Sequence = ()) -> StopList:
    resolved = [default_stopwords_path() if str(p) == BUILTIN_STOPWORDS else p for p in paths]
    return StopList.load(*resolved, *extra)


def _stage(name: str, path=None):
    class _Ctx:
        def __enter__(self):
            log.info("stage %s", name)

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, StageError) and isinstance(exc, Exception):
                raise StageError(name, str(path) if path else None, exc) from exc
            return False
    return _Ctx()


def run_pipeline(config: PipelineConfig, translator: Translator | None = None) -> dict:
    """Run parse, geo, stats and mine; write every output plus ``run.manifest.json``.

    Outputs are written to a temporary sibling directory and swapped into
    place only when all stages succeed.
    """
    config.check_inputs()
    out_dir = Path(config.output_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.tmp-", dir=out_dir.parent))
    try:
        manifest = _run_into(config, tmp, translator)
        if out_dir.exists():
            old = out_dir.with_name(f".{out_dir.name}.old-{os.getpid()}")
            os.replace(out_dir, old)
            os.replace(tmp, out_dir)
            shutil.rmtree(old, ignore_errors=True)
        else:
            os.replace(tmp, out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return manifest


def _run_into(config: PipelineConfig, out: Path, translator: Translator | None) -> dict:
    with _stage("parse", config.rules):
        rules = ExtractionRules.load(config.rules)
        stay = load_stay(config.stay)
        fx = CurrencyTable.load(config.fx)
    with _stage("parse", config.archive):
        parsed = parse_archive(config.archive, rules, stay, fx)
    with _stage("geo", config.territories):
        index = load_territories(config.territories)
        geo = locate_records(parsed.records, index)
    with _stage("stats"):
        areas = {t.territory_id: t.area_km2 for t in index.territories}
        reports = build_report(geo.records, config.group_by, areas)
    with _stage("mine", config.lexicon):
        lexicon = SentimentLexicon.load(config.lexicon)
        stoplist = load_stoplist(config.stopwords, config.extra_stopwords)
        mined = mine_reviews(geo.records, parsed.reviews, lexicon, stoplist,
                             fraction=config.sample, seed=config.seed,
                             top_comments=config.top_comments, min_corr=config.min_corr,
                             assoc_words=config.assoc_words, top_words=config.top_words,
                             translator=translator)

    outputs: dict[str, str] = {}

    def put(name: str, text: str):
        (out / name).write_text(text, encoding="utf-8", newline="\n")
        outputs[name] = hashlib.sha256(text.encode("utf-8")).hexdigest()

    with _stage("report", out):
        write_ndjson(out / "records.ndjson", parsed.records)
        write_ndjson(out / "reviews.ndjson", parsed.reviews)
        write_ndjson(out / "located.ndjson", geo.records)
        for name in ("records.ndjson", "reviews.ndjson", "located.ndjson"):
            outputs[name] = file_digest(out / name)
        if config.format == "csv":
            put("report.csv", reports_to_csv(reports))
        else:
            put("report.json", reports_to_json(reports))
        for metric in config.choropleth_metrics:
            put(f"choropleth.{metric}.csv", choropleth_csv(emit_choropleth(reports, metric)))
        put("sentiment.csv", sentiment_csv(mined))
        put("frequencies.csv", frequencies_csv(mined))
        put("associations.csv", associations_csv(mined))
        names = {t.territory_id: t.name for t in index.territories}
        put("summary.txt", emit_summary(reports, mined.rows, config.summary_top, names))
        put("drops.json", json.dumps({
            "parse_failures": parsed.failures,
            "review_drops": [d.__dict__ for d in parsed.review_drops],
            "translation_drops": [{"review_id": r, "error": e} for r, e in mined.corpus.dropped],
            "border_ties": geo.ties,
            "association_skipped": mined.skipped_words,
        }, ensure_ascii=False, indent=1) + "\n")

        counts = {
            "parse": parsed.counts,
            "geo": geo.counts,
            "stats": {"groups": len(reports)},
            "mine": mined.counts,
        }
        reconcile = {
            "parsed": parsed.counts["parsed"],
            "located": geo.counts["located"],
            "unassigned": geo.counts["unassigned"],
            "dropped": parsed.counts["duplicates_dropped"],
        }
        reconcile["ok"] = reconcile["parsed"] == (reconcile["located"] + reconcile["unassigned"]
                                                  + reconcile["dropped"])
        manifest = {
            "tool": "tourmonitor",
            "version": __version__,
            "seed": config.seed,
            "sample_fraction": config.sample,
            "top_comments": config.top_comments,
            "min_corr": config.min_corr,
            "group_by": config.group_by,
            "stay": stay.to_dict(),
            "inputs": {
                "archive": {"path": config.display_path(config.archive),
                            "sha256": archive_digest(config.archive)},
                **{k: {"path": config.display_path(v), "sha256": file_digest(v)}
                   for k, v in config.input_files().items()},
                **({"stopwords_builtin": {"path": BUILTIN_STOPWORDS,
                                          "sha256": file_digest(default_stopwords_path())}}
                   if any(str(s) == BUILTIN_STOPWORDS for s in config.stopwords) else {}),
            },
            "counts": counts,
            "reconciliation": reconcile,
            "assumptions": {**ASSUMPTIONS, **SENTIMENT_ASSUMPTIONS},
            "outputs": dict(sorted(outputs.items())),
        }
        (out / MANIFEST_NAME).write_text(
            json.dumps(manifest, ensure_ascii=False, indent=1) + "\n", encoding="utf-8", newline="\n")
    return manifest
