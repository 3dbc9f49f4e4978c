"""``monitor`` command line entry point.

Exit codes: 0 success, 2 validation errors (bad input data or configuration),
1 anything else.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import MonitorError, StageError, ValidationError

log = logging.getLogger("tourmonitor")


def _cmd_fetch(args) -> int:
    from .snapshot import CrawlPolicy, Fetcher, store_snapshot

    policy = CrawlPolicy(min_interval_ms=args.min_interval_ms, max_retries=args.max_retries,
                         backoff_factor=args.backoff_factor, respect_robots=args.respect_robots,
                         user_agent=args.user_agent)
    urls = [u.strip() for u in Path(args.urls).read_text(encoding="utf-8").splitlines()
            if u.strip() and not u.lstrip().startswith("#")]
    fetcher = Fetcher(policy)
    failures = 0
    for url, result in zip(urls, fetcher.fetch_many(urls, workers=args.workers)):
        if isinstance(result, BaseException):
            failures += 1
            print(f"FAIL\t{url}\t{result}", file=sys.stderr)
            continue
        sid = store_snapshot(result, args.archive)
        print(f"{result.http_status}\t{sid}\t{url}")
    return 1 if failures else 0


def _cmd_parse(args) -> int:
    from .listing import CurrencyTable, ExtractionRules, load_stay, write_ndjson
    from .report import parse_archive

    result = parse_archive(args.archive, ExtractionRules.load(args.rules), load_stay(args.stay),
                           CurrencyTable.load(args.fx))
    write_ndjson(args.out, result.records)
    if args.reviews:
        write_ndjson(args.reviews, result.reviews)
    if args.drops:
        Path(args.drops).write_text(json.dumps({
            "parse_failures": result.failures,
            "review_drops": [d.__dict__ for d in result.review_drops]},
            ensure_ascii=False, indent=1) + "\n", encoding="utf-8")
    print(json.dumps(result.counts))
    return 0


def _load_records(path):
    from .listing import AccommodationRecord, read_ndjson

    return [AccommodationRecord.from_dict(d) for d in read_ndjson(path)]


def _cmd_geo(args) -> int:
    from .geo import load_territories
    from .listing import write_ndjson
    from .report import locate_records

    result = locate_records(_load_records(args.records), load_territories(args.territories))
    write_ndjson(args.out, result.records)
    print(json.dumps(result.counts))
    return 0


def _cmd_stats(args) -> int:
    from .stats import ASSUMPTIONS, build_report, reports_to_csv, reports_to_json

    areas = None
    if args.territories:
        from .geo import load_territories

        areas = {t.territory_id: t.area_km2 for t in load_territories(args.territories).territories}
    reports = build_report(_load_records(args.input), args.group_by, areas)
    text = reports_to_json(reports) if args.format == "json" else reports_to_csv(reports)
    Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    Path(str(args.out) + ".meta.json").write_text(
        json.dumps({"group_by": args.group_by, "assumptions": ASSUMPTIONS}, indent=1) + "\n",
        encoding="utf-8")
    return 0


def _cmd_mine(args) -> int:
    from .listing import ReviewRecord, read_ndjson
    from .report import associations_csv, frequencies_csv, load_stoplist, mine_reviews, sentiment_csv
    from .sentiment import SentimentLexicon

    result = mine_reviews(
        _load_records(args.records),
        [ReviewRecord.from_dict(d) for d in read_ndjson(args.reviews)],
        SentimentLexicon.load(args.lexicon),
        load_stoplist(args.stopwords, args.extra_stopwords or []),
        fraction=args.sample, seed=args.seed, top_comments=args.top_comments,
        min_corr=args.min_corr, assoc_words=args.assoc_words or (),
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sentiment.csv").write_text(sentiment_csv(result), encoding="utf-8", newline="\n")
    (out / "frequencies.csv").write_text(frequencies_csv(result), encoding="utf-8", newline="\n")
    (out / "associations.csv").write_text(associations_csv(result), encoding="utf-8", newline="\n")
    print(json.dumps(result.counts))
    return 0


def _cmd_report(args) -> int:
    import csv

    from .report import choropleth_csv, emit_choropleth, emit_summary
    from .stats import build_report

    names = {}
    areas = None
    if args.territories:
        from .geo import load_territories

        index = load_territories(args.territories)
        names = {t.territory_id: t.name for t in index.territories}
        areas = {t.territory_id: t.area_km2 for t in index.territories}
    reports = build_report(_load_records(args.input), args.group_by, areas)
    ratio_rows = []
    if args.sentiment:
        with open(args.sentiment, newline="", encoding="utf-8") as fh:
            ratio_rows = list(csv.DictReader(fh))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for metric in args.metric:
        (out / f"choropleth.{metric}.csv").write_text(
            choropleth_csv(emit_choropleth(reports, metric)), encoding="utf-8", newline="\n")
    (out / "summary.txt").write_text(emit_summary(reports, ratio_rows, args.top, names),
                                     encoding="utf-8", newline="\n")
    return 0


def _cmd_run(args) -> int:
    from .report import PipelineConfig, run_pipeline

    manifest = run_pipeline(PipelineConfig.load(args.config))
    print(json.dumps({"counts": manifest["counts"], "reconciliation": manifest["reconciliation"]}))
    return 0


def _cmd_demo(args) -> int:
    from .demo import write_workspace

    config = write_workspace(args.out)
    print(config)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="monitor", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("fetch", help="fetch URLs into the snapshot archive")
    s.add_argument("--urls", required=True, help="file with one URL per line")
    s.add_argument("--archive", required=True)
    s.add_argument("--min-interval-ms", type=int, default=1000)
    s.add_argument("--max-retries", type=int, default=3)
    s.add_argument("--backoff-factor", type=float, default=2.0)
    s.add_argument("--respect-robots", action=argparse.BooleanOptionalAction, default=True)
    s.add_argument("--user-agent", default="tourmonitor/0.1 (+research; polite crawler)")
    s.add_argument("--workers", type=int, default=4)
    s.set_defaults(func=_cmd_fetch)

    s = sub.add_parser("parse", help="extract records and reviews from snapshots")
    s.add_argument("--archive", required=True)
    s.add_argument("--rules", required=True)
    s.add_argument("--stay", required=True)
    s.add_argument("--fx", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--reviews")
    s.add_argument("--drops")
    s.set_defaults(func=_cmd_parse)

    s = sub.add_parser("geo", help="territory assignment")
    geo_sub = s.add_subparsers(dest="geo_command", required=True)
    g = geo_sub.add_parser("assign")
    g.add_argument("--records", required=True)
    g.add_argument("--territories", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_geo)

    s = sub.add_parser("stats", help="territorial aggregate tables")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--group-by", default="country,territory")
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.add_argument("--territories", help="GeoJSON file, enables density rows")
    s.set_defaults(func=_cmd_stats)

    s = sub.add_parser("mine", help="sentiment and word-association tables")
    s.add_argument("--reviews", required=True)
    s.add_argument("--records", required=True)
    s.add_argument("--lexicon", required=True)
    s.add_argument("--stopwords", nargs="+", default=["builtin:fr"])
    s.add_argument("--extra-stopwords", nargs="*")
    s.add_argument("--sample", type=float, default=0.10)
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--top-comments", type=int, default=10)
    s.add_argument("--min-corr", type=float, default=0.25)
    s.add_argument("--assoc-words", nargs="*")
    s.add_argument("--out-dir", default=".")
    s.set_defaults(func=_cmd_mine)

    s = sub.add_parser("report", help="choropleth data and text summary")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--territories")
    s.add_argument("--sentiment", help="sentiment.csv from the mine stage")
    s.add_argument("--group-by", default="all,country,territory")
    s.add_argument("--metric", nargs="+", default=["mean.price_eur"])
    s.add_argument("--top", type=int, default=5)
    s.add_argument("--out-dir", default=".")
    s.set_defaults(func=_cmd_report)

    s = sub.add_parser("run", help="run the whole pipeline from a TOML config")
    s.add_argument("--config", required=True)
    s.set_defaults(func=_cmd_run)

    s = sub.add_parser("demo", help="write a synthetic demo workspace")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc.cause, (ValidationError, ValueError)) else 1
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (MonitorError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
