"""docforge command line: gen, filter, stats, balance, iterate, eval.

Exit codes: 0 success, 2 configuration error, 3 input schema error,
4 partial failure (some samples failed; outputs were still written).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import evalkit, pipeline
from .docmodel import Category, CorpusSchemaError, load_corpus, write_corpus
from .pipeline import ConfigError, FilterReport, PipelineConfig
from .synthgen import (
    GENERATED_CATEGORIES,
    GenerationRun,
    HttpEndpoint,
    RendererCommand,
    StubEndpoint,
    build_specs,
    load_table_pool,
    load_topics,
)
from .textfilter import load_references

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_PARTIAL = 4

_GEN_CATEGORY = {
    "plain": Category.PLAIN_ONLY,
    "formula": Category.WITH_FORMULA,
    "table": Category.WITH_TABLE,
    "multicolumn": Category.MULTI_COLUMN,
}


def _parse_ratios(raw: str) -> dict:
    ratios = {}
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        key, _, value = part.partition("=")
        try:
            ratios[key.strip()] = float(value)
        except ValueError as exc:
            raise ConfigError(f"bad ratio {part!r}: {exc}") from exc
    return ratios


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="docforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate synthetic image/annotation pairs")
    gen.add_argument("--category", default="all", choices=[*_GEN_CATEGORY, "all"])
    gen.add_argument("--count", type=int, default=10, help="samples per category")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--columns", type=int, default=None, choices=(2, 3), help="fix the multi-column count")
    gen.add_argument("--out", required=True)
    gen.add_argument("--config", default=None, help="JSON file with endpoint/renderer settings; flags win")
    gen.add_argument("--endpoint", default=None, help="'stub' or a generation endpoint URL")
    gen.add_argument("--model", default=None, help="model name sent to an HTTP endpoint")
    gen.add_argument("--renderer-cmd", default=None, help="'stub' or a command template with {input}/{output}")
    gen.add_argument("--topics", default=None, help="topic list file (one per line)")
    gen.add_argument("--tables", default=None, help="table pool file (one canonical table per line)")
    gen.add_argument("--parallelism", type=int, default=None)

    flt = sub.add_parser("filter", help="run the quality-filter cascade over predictions")
    flt.add_argument("--predictions", required=True)
    flt.add_argument("--references", default=None)
    flt.add_argument("--config", default=None)
    flt.add_argument("--out", required=True)
    flt.add_argument("--f1-threshold", type=float, default=None)
    flt.add_argument("--env-inventory", default=None)
    flt.add_argument("--parallelism", type=int, default=None)
    flt.add_argument("--no-aspect-filter", action="store_true")

    stats = sub.add_parser("stats", help="iteration statistics from a filter report")
    stats.add_argument("--report", required=True)
    stats.add_argument("--previous", default=None, help="previous retained manifest (JSONL)")
    stats.add_argument("--iteration", type=int, default=0)
    stats.add_argument("--out", default=None)

    balance = sub.add_parser("balance", help="re-sample a manifest by content class")
    balance.add_argument("--in", dest="input", required=True)
    balance.add_argument("--ratios", default="plain=1.0,table=1.0,formula=1.0")
    balance.add_argument("--seed", type=int, default=0)
    balance.add_argument("--out", required=True)

    iterate = sub.add_parser("iterate", help="filter + stats + commit in one step")
    iterate.add_argument("--from", dest="workdir", required=True)
    iterate.add_argument("--out", default=None)
    iterate.add_argument("--iteration", type=int, default=0)

    ev = sub.add_parser("eval", help="normalized edit distance between corpora")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--target", required=True)
    ev.add_argument("--out", required=True)

    hidden = sub.add_parser("render-stub")
    hidden.add_argument("input")
    hidden.add_argument("output")
    return parser


_GEN_CONFIG_KEYS = {
    "endpoint", "model", "renderer_cmd", "topics", "tables",
    "parallelism", "page_width_px", "render_timeout_s",
}


def _gen_settings(args) -> dict:
    settings = {
        "endpoint": "stub",
        "model": "default",
        "renderer_cmd": "stub",
        "topics": None,
        "tables": None,
        "parallelism": 1,
        "page_width_px": 1240,
        "render_timeout_s": 30.0,
    }
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        unknown = set(loaded) - _GEN_CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown gen config keys: {sorted(unknown)}")
        settings.update(loaded)
    for key in ("endpoint", "model", "renderer_cmd", "topics", "tables", "parallelism"):
        flag = getattr(args, key, None)
        if flag is not None:
            settings[key] = flag
    return settings


def _cmd_gen(args) -> int:
    if args.count < 1:
        raise ConfigError("--count must be >= 1")
    settings = _gen_settings(args)
    categories = list(GENERATED_CATEGORIES) if args.category == "all" else [_GEN_CATEGORY[args.category]]
    if settings["endpoint"] == "stub":
        endpoint = StubEndpoint()
    else:
        endpoint = HttpEndpoint(url=settings["endpoint"], model=settings["model"])
    renderer = RendererCommand.from_config(
        settings["renderer_cmd"], timeout_s=float(settings["render_timeout_s"])
    )
    topics = load_topics(settings["topics"])
    tables = load_table_pool(settings["tables"])
    specs = build_specs(categories, args.count, args.seed, topics, columns=args.columns)
    run = GenerationRun(
        endpoint=endpoint,
        renderer=renderer,
        out_dir=Path(args.out),
        topics=topics,
        table_pool=tables,
        page_width_px=int(settings["page_width_px"]),
        parallelism=int(settings["parallelism"]),
        backoff_s=0.5,
    )
    report = run.run(specs)
    print(f"requested {sum(report.requested.values())}, wrote {report.written}, failures {len(report.failures)}")
    for failure in report.failures:
        print(f"  FAILED {failure.sample_id} at {failure.stage}: {failure.error}", file=sys.stderr)
    if report.failures and report.written:
        return EXIT_PARTIAL
    if report.failures:
        return EXIT_INPUT
    return EXIT_OK


def _load_filter_config(args) -> PipelineConfig:
    config = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    if args.f1_threshold is not None:
        config.f1_threshold = args.f1_threshold
    if args.env_inventory is not None:
        config.env_inventory_path = args.env_inventory
    if args.parallelism is not None:
        config.parallelism = args.parallelism
    if args.no_aspect_filter:
        config.apply_aspect_filter = False
    config.validate()
    return config


def _run_filter(predictions_path, references_path, config) -> tuple[list, FilterReport]:
    samples = pipeline.load_predictions(predictions_path)
    references = load_references(references_path) if references_path else {}
    return pipeline.run_filter_pass(samples, references, config)


def _cmd_filter(args) -> int:
    config = _load_filter_config(args)
    retained, report = _run_filter(args.predictions, args.references, config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report.to_json(), indent=2), encoding="utf-8")
    write_corpus(retained, out_dir / "retained.jsonl")
    print(
        f"input {report.input_count}, retained {report.retained_total}, "
        f"discarded {sum(report.discard_breakdown.values())}, errors {len(report.errors)}"
    )
    return EXIT_PARTIAL if report.errors else EXIT_OK


def _cmd_stats(args) -> int:
    report = FilterReport.from_json(json.loads(Path(args.report).read_text("utf-8")))
    previous_ids = None
    if args.previous:
        previous_ids = {record.sample_id for record in load_corpus(args.previous)}
    stats = pipeline.iteration_stats(report, previous_retained_ids=previous_ids, iteration=args.iteration)
    payload = json.dumps(stats.to_json(), indent=2)
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
    print(payload)
    return EXIT_OK


def _cmd_balance(args) -> int:
    ratios = _parse_ratios(args.ratios)
    records = load_corpus(args.input)
    balanced = pipeline.sample_balance(records, ratios, args.seed)
    count = write_corpus(balanced, args.out)
    print(f"wrote {count} records ({len(records)} in)")
    return EXIT_OK


def _cmd_iterate(args) -> int:
    workdir = Path(args.workdir)
    out_dir = Path(args.out) if args.out else workdir / "out"
    config_path = workdir / "config.json"
    config = PipelineConfig.from_file(config_path) if config_path.exists() else PipelineConfig()
    predictions = workdir / "predictions.jsonl"
    references = workdir / "references.jsonl"
    if not predictions.exists():
        raise FileNotFoundError(f"missing {predictions}")
    retained, report = _run_filter(predictions, references if references.exists() else None, config)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report.to_json(), indent=2), encoding="utf-8")
    previous_ids = None
    previous_manifest = workdir / "previous_manifest.jsonl"
    if previous_manifest.exists():
        previous_ids = {record.sample_id for record in load_corpus(previous_manifest)}
    stats = pipeline.iteration_stats(report, previous_retained_ids=previous_ids, iteration=args.iteration)
    (out_dir / "stats.json").write_text(json.dumps(stats.to_json(), indent=2), encoding="utf-8")
    version = pipeline.commit_dataset(retained, config, out_dir, iteration=args.iteration)
    print(
        f"iteration {args.iteration}: retained {report.retained_total}/{report.input_count}, "
        f"digest {version.content_digest[:12]}"
    )
    return EXIT_PARTIAL if report.errors else EXIT_OK


def _cmd_eval(args) -> int:
    predictions = evalkit.load_eval_corpus(args.pred)
    targets = evalkit.load_eval_corpus(args.target)
    pairs = evalkit.pair_corpora(predictions, targets)
    report = evalkit.evaluate_corpus(pairs)
    Path(args.out).write_text(json.dumps(report.to_json(), indent=2), encoding="utf-8")
    means = {k: (round(v, 4) if v is not None else None) for k, v in report.means.items()}
    print(json.dumps(means))
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "gen":
            return _cmd_gen(args)
        if args.command == "filter":
            return _cmd_filter(args)
        if args.command == "stats":
            return _cmd_stats(args)
        if args.command == "balance":
            return _cmd_balance(args)
        if args.command == "iterate":
            return _cmd_iterate(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "render-stub":
            from .synthgen import stub_render

            return stub_render.main([args.input, args.output])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CorpusSchemaError, FileNotFoundError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
