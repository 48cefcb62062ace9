"""``codesurgeon`` command line: one file-to-file subcommand per pipeline stage.

Exit codes: 0 success, 1 domain rejection (bad records, nothing to work on),
2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import __version__
from .analysis import analyze_matrix, write_plot_data
from .benchmark import EvalProtocol, generator_from_spec, read_matrix_csv, run_matrix, write_matrix_csv
from .config import ConfigError, PipelineConfig, load_config, load_weights
from .evaluation import ScoreCard, cross_evaluate
from .gateway import AuditLog, EndpointConfig, Gateway
from .generation import CampaignConfig, run_campaign
from .repair_format import FormatError, task_from_record, task_from_sample, training_record
from .samples import (
    corpus_stats,
    dedup_corpus,
    fingerprint,
    load_corpus,
    parse_timestamp,
    read_jsonl,
    remove_overlap,
    save_corpus,
    write_jsonl,
)
from .scoring import GROUPINGS, aggregate, filter_corpus, histogram, rows_to_dicts, summarize
from .templates import TEMPLATE_VERSION

logger = logging.getLogger("codesurgeon")


class DomainError(Exception):
    """Input data was rejected; maps to exit code 1."""


def _csv_list(text: str) -> list[str]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise argparse.ArgumentTypeError("expected a comma-separated list")
    return items


def _write_json(path: str | Path, data) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(data, fh, indent=2, ensure_ascii=False)
        fh.write("\n")


def _endpoint(cfg: PipelineConfig, args) -> EndpointConfig:
    e = cfg.endpoint
    base = getattr(args, "base_url", None) or os.environ.get("CODESURGEON_BASE_URL") or e.base_url
    return EndpointConfig(
        base_url=base,
        api_key=os.environ.get("CODESURGEON_API_KEY"),
        max_in_flight=getattr(args, "max_in_flight", None) or e.max_in_flight,
        retry_max=e.retry_max,
        timeout_ms=e.timeout_ms,
        backoff_base_ms=e.backoff_base_ms,
        constrained_decoding=e.constrained_decoding,
    )


def _gateway(cfg: PipelineConfig, args) -> Gateway:
    audit = AuditLog(args.audit_log) if getattr(args, "audit_log", None) else None
    return Gateway(_endpoint(cfg, args), audit_log=audit)


def _epoch(text: str | None) -> datetime:
    if text:
        return parse_timestamp(text)
    if os.environ.get("SOURCE_DATE_EPOCH"):
        return datetime.fromtimestamp(int(os.environ["SOURCE_DATE_EPOCH"]), timezone.utc)
    return datetime.now(timezone.utc).replace(microsecond=0)


def _load_samples(path: str):
    try:
        return load_corpus(path)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except (ValueError, TypeError) as exc:
        raise DomainError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args, cfg: PipelineConfig) -> int:
    models = args.models or cfg.campaign.models
    if not models:
        raise ConfigError("campaign.models: no generator models given (use --models)")
    camp = CampaignConfig(
        models=tuple(models),
        samples_per_model=args.per_model or cfg.campaign.samples_per_model,
        temperature=cfg.campaign.temperature if args.temperature is None else args.temperature,
        rng_seed=cfg.campaign.seed if args.seed is None else args.seed,
        max_tokens=cfg.campaign.max_tokens,
        epoch=_epoch(args.epoch),
    )
    result = run_campaign(camp, _gateway(cfg, args))
    corpus, dropped = dedup_corpus(result.corpus)
    save_corpus(args.out, corpus)
    stats = result.stats.to_dict()
    stats["duplicates_dropped"] = dropped
    stats["unique_total"] = len(corpus)
    stats["outcomes"] = dict(sorted(_count(result.outcomes).items()))
    stats["percent_by_language"] = result.stats.percentages("language")
    stats["percent_by_bug"] = result.stats.percentages("bug")
    stats["campaign"] = {"models": list(camp.models), "samples_per_model": camp.samples_per_model,
                         "temperature": camp.temperature, "seed": camp.rng_seed,
                         "template_version": TEMPLATE_VERSION}
    if args.report:
        _write_json(args.report, stats)
    logger.info("generated %d valid samples (%d duplicates dropped)", len(corpus), dropped)
    return 0


def _count(items) -> dict[str, int]:
    out: dict[str, int] = {}
    for it in items:
        out[it] = out.get(it, 0) + 1
    return out


def cmd_score(args, cfg: PipelineConfig) -> int:
    corpus = _load_samples(args.corpus)
    evaluators = args.evaluators or cfg.evaluation.evaluators
    if not evaluators:
        raise ConfigError("evaluation.evaluators: no evaluator models given (use --evaluators)")
    weights = load_weights(args.weights) if args.weights else cfg.weights.to_weight_config()
    res = cross_evaluate(
        corpus, evaluators, _gateway(cfg, args),
        temperature=cfg.evaluation.temperature if args.temperature is None else args.temperature,
        weights=weights,
        seed=cfg.evaluation.seed if args.seed is None else args.seed,
        max_tokens=cfg.evaluation.max_tokens,
    )
    write_jsonl(args.out, (c.to_dict() for c in res.cards))
    if args.report:
        _write_json(args.report, {
            "samples": len(corpus), "evaluators": list(evaluators), "cards": len(res.cards),
            "rejections": dict(sorted(res.rejections.items())), "failures": res.failures,
        })
    return 0


def cmd_filter(args, cfg: PipelineConfig) -> int:
    corpus = _load_samples(args.corpus)
    try:
        cards = [ScoreCard.from_dict(r) for r in read_jsonl(args.cards)]
    except OSError as exc:
        raise ConfigError(f"cannot read {args.cards}: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"{args.cards}: malformed score card: {exc}") from exc
    weights = load_weights(args.weights) if args.weights else cfg.weights.to_weight_config()
    threshold = cfg.filter.threshold if args.threshold is None else args.threshold
    combiner = args.combiner or cfg.filter.combiner
    agg = aggregate(cards, corpus, weights, threshold, combiner)
    kept, report = filter_corpus(agg.records, threshold)
    kept_ids = {r.sample_id for r in kept}
    retained = [s for s in corpus if s.id in kept_ids]
    save_corpus(args.out, retained)

    width = args.bin_width or cfg.filter.bin_width
    out = {
        "filter": report.to_dict(),
        "excluded_without_cards": agg.excluded,
        "weights": weights.to_dict(),
        "combiner": combiner,
        "before": {g: rows_to_dicts(summarize(agg.records, corpus, g)) for g in GROUPINGS},
        "after": {g: rows_to_dicts(summarize(kept, corpus, g)) for g in GROUPINGS},
        "histogram_before": histogram([r.final_score for r in agg.records], width),
        "histogram_after": histogram([r.final_score for r in kept], width),
        "records": [r.to_dict() for r in agg.records],
    }
    if args.report:
        _write_json(args.report, out)
        stem = Path(args.report).with_suffix("")
        for phase in ("before", "after"):
            for g in GROUPINGS:
                _write_rows(f"{stem}.{phase}.{g}.csv", ("group", "mean", "std", "count", "pct"),
                            [(r["group"], r["mean"], r["std"], r["count"], r["percentage"]) for r in out[phase][g]])
            _write_rows(f"{stem}.{phase}.histogram.csv", ("bin_left", "count"), out[f"histogram_{phase}"])
    logger.info("retained %d of %d samples", report.retained, report.total)
    return 0


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_preprocess(args, cfg: PipelineConfig) -> int:
    samples = _load_samples(args.input)
    dropped = 0
    if not args.keep_duplicates:
        samples, dropped = dedup_corpus(samples)
    removed = 0
    if args.exclude:
        test_fps = {fingerprint(s) for s in _load_samples(args.exclude)}
        before = len(samples)
        samples = remove_overlap(samples, test_fps)
        removed = before - len(samples)
    records, skipped = [], 0
    for s in samples:
        try:
            task = task_from_sample(s)
        except FormatError as exc:
            logger.warning("skipping %s: %s", s.id, exc)
            skipped += 1
            continue
        records.append(training_record(task, id=s.id, language=s.language, bug_type=s.bug_type))
    write_jsonl(args.out, records)
    if args.report:
        _write_json(args.report, {"input": len(samples) + dropped + removed, "duplicates_dropped": dropped,
                                  "overlap_removed": removed, "skipped": skipped, "written": len(records)})
    return 0


def _parse_config_gen(items: Sequence[str]) -> dict[str, str]:
    out = {}
    for item in items:
        name, sep, spec = item.partition("=")
        if not sep or not name or not spec:
            raise ConfigError(f"--config-gen expects name=spec, got {item!r}")
        if name in out:
            raise ConfigError(f"--config-gen: duplicate configuration {name!r}")
        out[name] = spec
    return out


def cmd_bench(args, cfg: PipelineConfig) -> int:
    try:
        tasks = [task_from_record(r) for r in read_jsonl(args.tasks)]
    except OSError as exc:
        raise ConfigError(f"cannot read {args.tasks}: {exc}") from exc
    except (KeyError, FormatError, ValueError) as exc:
        raise DomainError(f"{args.tasks}: {exc}") from exc
    if not tasks:
        raise DomainError(f"{args.tasks}: no tasks")
    specs = _parse_config_gen(args.config_gen)
    b = cfg.benchmark
    default_temp = b.top1_temperature if args.k == 1 else b.top5_temperature
    protocol = EvalProtocol(
        k=args.k,
        temperature=default_temp if args.temperature is None else args.temperature,
        runs=args.runs or b.runs,
        seed=b.seed if args.seed is None else args.seed,
    )
    try:
        gens = {name: generator_from_spec(spec, lambda: _gateway(cfg, args)) for name, spec in specs.items()}
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    matrix = run_matrix(tasks, gens, protocol)
    matrices = [matrix]
    if args.append and Path(args.out).exists():
        prior = [m for m in read_matrix_csv(args.out) if m.setting != matrix.setting]
        matrices = prior + matrices
    write_matrix_csv(args.out, matrices)
    for row in matrix.summary():
        logger.info("%s %s mean=%.4f std=%.4f", row["configuration"], row["setting"], row["mean"], row["std"])
    return 0


def cmd_analyze(args, cfg: PipelineConfig) -> int:
    try:
        matrices = read_matrix_csv(args.matrix)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.matrix}: {exc}") from exc
    except (KeyError, ValueError) as exc:
        raise DomainError(f"{args.matrix}: {exc}") from exc
    alpha = cfg.benchmark.alpha if args.alpha is None else args.alpha
    report = {
        "alpha": alpha,
        "settings": [analyze_matrix(m, alpha) for m in matrices],
        "config": cfg.to_dict(),
    }
    _write_json(args.out, report)
    plots = Path(args.plots_dir) if args.plots_dir else Path(args.out).parent
    plots.mkdir(parents=True, exist_ok=True)
    write_plot_data(matrices, plots / "qq.csv", plots / "density.csv")
    return 0


def cmd_stats(args, cfg: PipelineConfig) -> int:
    corpus = _load_samples(args.corpus)
    stats = corpus_stats(corpus)
    out = stats.to_dict()
    out["percent_by_language"] = stats.percentages("language")
    out["percent_by_bug"] = stats.percentages("bug")
    out["percent_by_model"] = stats.percentages("model")
    if args.out:
        _write_json(args.out, out)
    else:
        json.dump(out, sys.stdout, indent=2)
        sys.stdout.write("\n")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="codesurgeon", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version",
                   version=f"codesurgeon {__version__} (templates {TEMPLATE_VERSION})")
    p.add_argument("--config", help="pipeline TOML configuration")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="run a generation campaign")
    g.add_argument("--models", type=_csv_list)
    g.add_argument("--per-model", type=int)
    g.add_argument("--temperature", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.add_argument("--report")
    g.add_argument("--base-url")
    g.add_argument("--max-in-flight", type=int)
    g.add_argument("--audit-log")
    g.add_argument("--epoch", help="RFC 3339 creation timestamp recorded on every sample")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("score", help="cross-evaluate a corpus")
    s.add_argument("--corpus", required=True)
    s.add_argument("--evaluators", type=_csv_list)
    s.add_argument("--temperature", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--weights")
    s.add_argument("--out", required=True)
    s.add_argument("--report")
    s.add_argument("--base-url")
    s.add_argument("--max-in-flight", type=int)
    s.add_argument("--audit-log")
    s.set_defaults(func=cmd_score)

    f = sub.add_parser("filter", help="aggregate scores and apply the quality threshold")
    f.add_argument("--cards", required=True)
    f.add_argument("--corpus", required=True)
    f.add_argument("--threshold", type=float)
    f.add_argument("--weights")
    f.add_argument("--combiner", choices=("mean", "median"))
    f.add_argument("--bin-width", type=float)
    f.add_argument("--out", required=True)
    f.add_argument("--report")
    f.set_defaults(func=cmd_filter)

    pp = sub.add_parser("preprocess", help="encode samples into training pairs")
    pp.add_argument("--in", dest="input", required=True)
    pp.add_argument("--out", required=True)
    pp.add_argument("--exclude", help="corpus whose samples must not appear in the output")
    pp.add_argument("--keep-duplicates", action="store_true")
    pp.add_argument("--report")
    pp.set_defaults(func=cmd_preprocess)

    b = sub.add_parser("bench", help="perfect-prediction benchmark")
    b.add_argument("--tasks", required=True)
    b.add_argument("--config-gen", action="append", required=True, metavar="NAME=SPEC",
                   help="mock:oracle | mock:never | mock:p=0.3 | model:<name>")
    b.add_argument("--k", type=int, default=1)
    b.add_argument("--temperature", type=float)
    b.add_argument("--runs", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--out", required=True)
    b.add_argument("--append", action="store_true", help="keep other settings already in --out")
    b.add_argument("--base-url")
    b.add_argument("--max-in-flight", type=int)
    b.add_argument("--audit-log")
    b.set_defaults(func=cmd_bench)

    a = sub.add_parser("analyze", help="statistical report over a run matrix")
    a.add_argument("--matrix", required=True)
    a.add_argument("--alpha", type=float)
    a.add_argument("--out", required=True)
    a.add_argument("--plots-dir")
    a.set_defaults(func=cmd_analyze)

    st = sub.add_parser("stats", help="corpus distribution counts")
    st.add_argument("--corpus", required=True)
    st.add_argument("--out")
    st.set_defaults(func=cmd_stats)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"codesurgeon: configuration error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"codesurgeon: rejected: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"codesurgeon: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
