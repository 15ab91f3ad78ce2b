"""Command-line entry point: ``remtime {stats,run,report,synth}``.

Exit codes: 0 success, 1 results produced with warnings, 2 configuration or I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

from . import __version__
from .config import ConfigError, RunConfig, example_config, load_config
from .eventlog import (
    EventLog,
    ParseError,
    extract_prefix_log,
    log_stats,
    mean_case_duration_seconds,
    parse_event_log,
    preprocess,
)
from .evaluate import MethodResult, evaluate_method, rank_methods, temporal_split, weighted_summary
from .predict.bundle import save_bundle
from .synth import Pattern, generate_rows, rows_to_csv

logger = logging.getLogger("remtime")

EXIT_OK, EXIT_WARN, EXIT_FAIL = 0, 1, 2

RESULTS_HEADER = ["dataset", "method", "bucketing", "encoding", "predictor", "k", "n_prefixes", "mae_seconds"]
SUMMARY_HEADER = ["dataset", "method", "weighted_mae", "weighted_std", "normalized_mae", "mean_rank"]
TIMEOUT = "timeout"


class _WarningCounter(logging.Handler):
    def __init__(self):
        super().__init__(logging.WARNING)
        self.count = 0

    def emit(self, record):
        self.count += 1


def _fmt(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6f}"


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def load_log(cfg: RunConfig, raw: bool = False) -> EventLog:
    if not cfg.log_path.exists():
        raise FileNotFoundError(f"event log not found: {cfg.log_path}")
    log = parse_event_log(cfg.log_path, cfg.mapping, cfg.attributes)
    return log if raw else preprocess(log, cfg.preprocess)


# ---------------------------------------------------------------------------
# stats

def cmd_stats(args) -> int:
    cfg = load_config(args.config)
    log = load_log(cfg, raw=args.raw)
    stats = log_stats(log)
    row = {"dataset": cfg.dataset, **stats.as_row()}
    if args.format == "json":
        text = json.dumps(row, indent=1) + "\n"
    else:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
        w.writeheader()
        w.writerow(row)
        text = buf.getvalue()
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# run

def _run_one(args):
    return evaluate_method(*args[:4], **args[4])


def run_experiment(cfg: RunConfig, jobs: int | None = None) -> tuple[list[MethodResult], dict]:
    """Split, then per method: grid search, final fit, earliness curve on the test cases."""
    log = load_log(cfg)
    split = temporal_split(log, cfg.train_ratio)
    # test prefixes are extracted here but only read by evaluate_method after fitting
    train = extract_prefix_log(log.subset(split.train_case_ids), cfg.max_prefix)
    test = extract_prefix_log(log.subset(split.test_case_ids), cfg.max_prefix)
    if not train:
        raise ValueError("the training split yields no prefixes")
    train_cases = log.subset(split.train_case_ids)
    metadata = {
        "log_sha256": _sha256(cfg.log_path),
        "train_period_end": max(t.events[-1].timestamp for t in train_cases.traces).isoformat(),
        "n_train_cases": len(split.train_case_ids),
        "n_train_prefixes": len(train),
    }
    calls = [(train, test, m.descriptor, m.grid,
              dict(folds=cfg.cv_folds, seed=cfg.seed, attributes=log.schema, max_prefix=cfg.max_prefix,
                   timeout=cfg.timeout_seconds, metadata=metadata))
             for m in cfg.methods]
    jobs = cfg.jobs if jobs is None else jobs
    if jobs > 1 and len(calls) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, calls))
    else:
        results = [_run_one(c) for c in calls]
    context = {
        "mean_case_duration_seconds": mean_case_duration_seconds(log),
        "n_train_cases": len(split.train_case_ids),
        "n_test_cases": len(split.test_case_ids),
        "n_test_prefixes": len(test),
        "split_instant": split.split_instant.isoformat() if split.split_instant else None,
        "stats": log_stats(log).as_row(),
    }
    return results, context


def write_results(cfg: RunConfig, results: list[MethodResult], context: dict, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    ds = cfg.dataset
    result_rows, summaries = [], {}
    for r in results:
        d = r.descriptor
        for c in r.curve:
            result_rows.append([ds, d.name, d.bucketing or "", d.encoding or "", d.predictor,
                                c.k, c.n_prefixes, _fmt(c.mae_seconds)])
        if not r.timed_out and r.curve:
            summaries[d.name] = weighted_summary(r.curve, context["mean_case_duration_seconds"])
    ranks = rank_methods({ds: {name: s.weighted_mae for name, s in summaries.items()}}) if summaries else None
    summary_rows = []
    for r in results:
        name = r.descriptor.name
        if name in summaries:
            s = summaries[name]
            summary_rows.append([ds, name, _fmt(s.weighted_mae), _fmt(s.weighted_mae_std),
                                 _fmt(s.normalized_mae), _fmt(float(ranks.mean_rank[name]))])
        else:
            status = TIMEOUT if r.timed_out else "no_test_prefixes"
            summary_rows.append([ds, name, status, "", "", ""])
    _write_csv(out / "results.csv", RESULTS_HEADER, result_rows)
    _write_csv(out / "summary.csv", SUMMARY_HEADER, summary_rows)

    for r in results:
        if r.bundle is not None:
            save_bundle(r.bundle, out / "models" / r.descriptor.name)

    lines = [f"# {ds}", "",
             f"train cases: {context['n_train_cases']}, test cases: {context['n_test_cases']}, "
             f"test prefixes: {context['n_test_prefixes']}",
             f"mean case duration: {context['mean_case_duration_seconds'] / 86400:.3f} days", "",
             "| method | weighted MAE (days) | std (days) | normalized MAE | rank | hyperparameters |",
             "|---|---|---|---|---|---|"]
    for r in results:
        name = r.descriptor.name
        if name in summaries:
            s = summaries[name]
            lines.append(f"| {name} | {s.weighted_mae / 86400:.4f} | {s.weighted_mae_std / 86400:.4f} | "
                         f"{s.normalized_mae:.4f} | {ranks.mean_rank[name]:g} | "
                         f"{json.dumps(r.hyperparams, sort_keys=True)} |")
        else:
            lines.append(f"| {name} | {TIMEOUT if r.timed_out else '-'} | | | | |")
    lines += ["", "Ranks: ascending weighted MAE, tied methods share the lowest rank of their block.", ""]
    (out / "summary.md").write_text("\n".join(lines), encoding="utf-8")
    return sum(r.timed_out for r in results)


def cmd_run(args) -> int:
    cfg = load_config(args.config, output_dir=args.output)
    if args.timeout is not None:
        cfg.timeout_seconds = args.timeout
    t0 = time.perf_counter()
    results, context = run_experiment(cfg, jobs=args.jobs)
    n_timeouts = write_results(cfg, results, context, cfg.output_dir)
    manifest = {
        "remtime_version": __version__,
        "config_path": str(Path(args.config).resolve()),
        "config_hash": cfg.config_hash,
        "seed": cfg.seed,
        "dataset": cfg.dataset,
        "split": {k: context[k] for k in ("n_train_cases", "n_test_cases", "split_instant")},
        "methods": {r.descriptor.name: {"hyperparams": r.hyperparams, "timed_out": r.timed_out,
                                        "train_seconds": round(r.train_seconds, 3),
                                        "predict_seconds": round(r.predict_seconds, 3)} for r in results},
        "wall_clock_seconds": round(time.perf_counter() - t0, 3),
    }
    (cfg.output_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n",
                                                  encoding="utf-8")
    print(f"wrote results for {len(results)} method(s) to {cfg.output_dir}")
    return EXIT_WARN if n_timeouts else EXIT_OK


# ---------------------------------------------------------------------------
# report

def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def build_report(results_dir: Path) -> tuple[str, dict[str, str], bool]:
    """Markdown report, gnuplot data files (name -> text), and whether the Friedman block ran."""
    summaries = sorted(results_dir.rglob("summary.csv"))
    if not summaries:
        raise FileNotFoundError(f"no summary.csv found under {results_dir}")
    table: dict[str, dict[str, float]] = defaultdict(dict)
    for path in summaries:
        for row in _read_csv(path):
            ds, m = row["dataset"], row["method"]
            if m in table[ds]:
                raise ConfigError(f"duplicate descriptor {m!r} for dataset {ds!r} ({path})")
            try:
                table[ds][m] = float(row["weighted_mae"])
            except ValueError:
                table[ds][m] = math.nan
    ranks = rank_methods(table)

    lines = ["# Method ranking", "", "Ranks per dataset (1 = lowest weighted MAE; ties share the lowest rank).", ""]
    lines.append("| method | " + " | ".join(ranks.datasets) + " | mean rank |")
    lines.append("|---" * (len(ranks.datasets) + 2) + "|")
    for m in sorted(ranks.methods, key=lambda m: (ranks.mean_rank[m], m)):
        cells = [f"{ranks.ranks[ds][m]:g}" for ds in ranks.datasets]
        lines.append(f"| {m} | " + " | ".join(cells) + f" | {ranks.mean_rank[m]:.3f} |")
    if ranks.excluded:
        lines += ["", f"Excluded (incomplete results): {', '.join(ranks.excluded)}"]
    lines += ["", "## Friedman test", ""]
    if ranks.friedman is None:
        lines.append(f"Skipped: needs at least 3 methods with complete results on at least one dataset "
                     f"(have {len(ranks.methods)} method(s), {len(ranks.datasets)} complete dataset(s)).")
    else:
        f = ranks.friedman
        lines += [f"Computed on average ranks (ties share the mean of their positions).", "",
                  f"- datasets N = {f.n_datasets}, methods M = {f.n_methods}",
                  f"- chi2_F = {f.statistic:.6f}, df = {f.df}, p = {f.p_value:.6g}"]
    lines.append("")

    data_files = {}
    curves: dict[str, dict[str, dict[int, str]]] = defaultdict(lambda: defaultdict(dict))
    for path in sorted(results_dir.rglob("results.csv")):
        for row in _read_csv(path):
            curves[row["dataset"]][row["method"]][int(row["k"])] = row["mae_seconds"]
    for ds, by_method in sorted(curves.items()):
        methods = sorted(by_method)
        ks = sorted({k for v in by_method.values() for k in v})
        body = ["# k " + " ".join(methods) + "  (MAE in days)"]
        for k in ks:
            vals = []
            for m in methods:
                v = by_method[m].get(k)
                vals.append(f"{float(v) / 86400:.6f}" if v else "NaN")
            body.append(f"{k} " + " ".join(vals))
        data_files[f"earliness_{ds}.dat"] = "\n".join(body) + "\n"
    return "\n".join(lines), data_files, ranks.friedman is not None


def cmd_report(args) -> int:
    results_dir = Path(args.results_dir)
    if not results_dir.is_dir():
        raise FileNotFoundError(f"results directory not found: {results_dir}")
    text, files, friedman_ran = build_report(results_dir)
    out = Path(args.output) if args.output else results_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.md").write_text(text, encoding="utf-8")
    for name, body in files.items():
        (out / name).write_text(body, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK if friedman_ran else EXIT_WARN


# ---------------------------------------------------------------------------
# synth

def cmd_synth(args) -> int:
    patterns = [Pattern.parse(p) for p in (args.pattern or ["A,B,C,D:100"])]
    resources = [r for r in (args.resources or "").split(",") if r]
    rows = generate_rows(args.cases, patterns, noise=args.noise, seed=args.seed, resources=resources)
    out = Path(args.out)
    out.write_text(rows_to_csv(rows), encoding="utf-8")
    print(f"wrote {len(rows)} events of {args.cases} cases to {out}")
    if args.config_out:
        attrs = [{"name": "resource", "kind": "categorical", "static": False}] if resources else []
        cfg_path = Path(args.config_out)
        log_ref = str(out.resolve()) if cfg_path.parent.resolve() != out.parent.resolve() else out.name
        cfg_path.write_text(example_config(log_ref, args.methods or ["mean_baseline", "transition_system"],
                                           args.seed, attrs), encoding="utf-8")
        print(f"wrote run configuration to {cfg_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="remtime", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="dataset statistics of a configured log")
    p.add_argument("config")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--output", help="also write the statistics to this file")
    p.add_argument("--raw", action="store_true", help="skip preprocessing")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("run", help="train and evaluate every configured method")
    p.add_argument("config")
    p.add_argument("--output", help="output directory (overrides output_dir in the config)")
    p.add_argument("--jobs", type=int, default=None, help="methods evaluated in parallel")
    p.add_argument("--timeout", type=float, default=None, help="per-method time budget in seconds")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="cross-dataset rankings and Friedman test from result directories")
    p.add_argument("results_dir")
    p.add_argument("--output", help="directory for report.md and earliness data files")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="write a synthetic event log")
    p.add_argument("--cases", type=int, default=100)
    p.add_argument("--pattern", action="append",
                   help="activity pattern 'A,B,C[:gap_seconds[:weight]]'; repeatable")
    p.add_argument("--noise", type=float, default=0.0, help="relative uniform jitter of the gaps")
    p.add_argument("--resources", help="comma separated resource pool for a random event attribute")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--config-out", help="also write a run configuration for the log")
    p.add_argument("--methods", nargs="*", help="methods listed in the generated configuration")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    counter = _WarningCounter()
    logger.addHandler(counter)
    try:
        code = args.func(args)
    except (ConfigError, ParseError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    finally:
        logger.removeHandler(counter)
    if code == EXIT_OK and counter.count and args.command == "run":
        code = EXIT_WARN
    return code


if __name__ == "__main__":
    sys.exit(main())
