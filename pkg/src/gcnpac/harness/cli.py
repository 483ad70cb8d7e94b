"""Command-line entry point.

Commands::

    gcnpac verify [--config FILE] [--only MODULE]
    gcnpac sweep --config FILE [--jobs N]
    gcnpac bound-report --config FILE --n N [--seed S]
    gcnpac trial --config FILE --seed S

Exit codes: 0 success, 1 failed check, 2 configuration error. Output files go
to ``run.output_dir`` unless the ``GCNPAC_OUTPUT_DIR`` environment variable is set.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .. import bound_engine as be
from .. import risk_gap as rg
from .config import ConfigError, ExperimentConfig, load_config
from .suites import run_suites

OUTPUT_ENV = "GCNPAC_OUTPUT_DIR"
BOUND_COLUMNS = (
    "seed",
    "n",
    "theorem",
    "total",
    *be.TERM_FIELDS,
    "D_alpha",
    "delta",
    "M",
    "c_a",
    "gamma_norm",
    "gamma_tilde_inf",
    "corollary_total",
)
SUMMARY_METRICS = (
    "posterior_gap_mean",
    "bound_total",
    "corollary_total",
    *be.TERM_FIELDS,
)


def output_dir(cfg: ExperimentConfig) -> Path:
    path = Path(os.environ.get(OUTPUT_ENV) or cfg.run.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def bound_row(rec: rg.TrialRecord) -> dict:
    rep = rec.bound
    row = {"seed": rec.seed, "n": rec.n, "theorem": rep.theorem, "total": rep.total}
    for k in be.TERM_FIELDS:
        row[k] = rep.terms.get(k)
    row.update(
        {
            "D_alpha": rep.renyi_term_inputs["D_alpha"],
            "delta": rep.renyi_term_inputs["delta"],
            "M": rep.inputs["M"],
            "c_a": rep.inputs["c_a"],
            "gamma_norm": rep.inputs["gamma_norm"],
            "gamma_tilde_inf": rep.inputs["gamma_tilde_inf"],
            "corollary_total": rec.corollary_total,
        }
    )
    return row


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(["" if r[c] is None else rg.format_value(r[c]) for c in columns])
    return buf.getvalue()


def loglog_slope(ns, values) -> float:
    """Least-squares slope of log(value) on log(n); NaN unless every value is positive and finite."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.asarray(values, dtype=float)
    if len(x) < 2 or np.any(~np.isfinite(y)) or np.any(y <= 0):
        return float("nan")
    return float(np.polyfit(x, np.log(y), 1)[0])


def summarize(records: list[rg.TrialRecord]) -> list[dict]:
    """Per-n means and standard errors of each metric, plus a final row of log-log slopes."""
    by_n: dict[int, list[dict]] = {}
    for rec in records:
        row = rec.row()
        row.update({k: rec.bound.terms.get(k) for k in be.TERM_FIELDS})
        by_n.setdefault(rec.n, []).append(row)
    out, means = [], {m: [] for m in SUMMARY_METRICS}
    ns = sorted(by_n)
    for n in ns:
        row = {"n": n}
        for m in SUMMARY_METRICS:
            vals = np.array([np.nan if r[m] is None else r[m] for r in by_n[n]], dtype=float)
            mu = float(vals.mean())
            se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else float("nan")
            row[f"{m}_mean"], row[f"{m}_stderr"] = mu, se
            means[m].append(mu)
        out.append(row)
    slope = {"n": "slope"}
    for m in SUMMARY_METRICS:
        slope[f"{m}_mean"], slope[f"{m}_stderr"] = loglog_slope(ns, means[m]), None
    out.append(slope)
    return out


def summary_columns() -> list[str]:
    cols = ["n"]
    for m in SUMMARY_METRICS:
        cols += [f"{m}_mean", f"{m}_stderr"]
    return cols


def _trial_job(args):
    cfg, n, seed = args
    return rg.run_trial(cfg.with_n(n), seed)


def run_sweep(cfg: ExperimentConfig, jobs: int = 1) -> list[rg.TrialRecord]:
    tasks = [(cfg, int(n), int(s)) for n in cfg.run.sweep for s in cfg.run.seed_list()]
    if jobs <= 1:
        return [_trial_job(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_trial_job, tasks))


def write_sweep(cfg: ExperimentConfig, records: list[rg.TrialRecord], outdir: Path) -> dict[str, Path]:
    records = sorted(records, key=lambda r: (r.n, r.seed))
    paths = {
        "trials": outdir / "trials.csv",
        "trials_jsonl": outdir / "trials.jsonl",
        "bounds": outdir / "bounds.csv",
        "summary": outdir / "summary.csv",
    }
    paths["trials"].write_text(rg.records_to_csv(records))
    paths["trials_jsonl"].write_text(rg.records_to_jsonl(records))
    paths["bounds"].write_text(_csv(BOUND_COLUMNS, [bound_row(r) for r in records]))
    paths["summary"].write_text(_csv(summary_columns(), summarize(records)))
    return paths


def bound_report(cfg: ExperimentConfig, n: int, seed: int = 0) -> dict:
    """Full breakdown for one instance: main bound, corollary (one-layer), gap and ingredients."""
    cfg = cfg.with_n(n)
    rec = rg.run_trial(cfg, seed)
    ctx = rg.build_trial(cfg, seed)
    return {
        "n": n,
        "seed": seed,
        "arity": cfg.model.arity,
        "bound": rec.bound.to_dict(),
        "corollary": rec.corollary.to_dict() if rec.corollary else None,
        "realized": {
            "empirical_risk": rec.empirical_risk,
            "expected_risk": rec.expected_risk,
            "gap": rec.gap,
            "posterior_gap_mean": rec.posterior_gap_mean,
            "posterior_gap_stderr": rec.posterior_gap_stderr,
            "posterior_samples": cfg.model.n_weight_samples,
        },
        "provenance": ctx.provenance,
        "clamp_events": rec.clamp_events,
    }


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gcnpac", description="GCN generalization-bound verification harness")
    sub = parser.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", help="run the invariant suites")
    v.add_argument("--config", default=None)
    v.add_argument("--only", default=None, help="module name to restrict the suites to")
    s = sub.add_parser("sweep", help="run trials over the configured n values")
    s.add_argument("--config", required=True)
    s.add_argument("--jobs", type=int, default=1)
    b = sub.add_parser("bound-report", help="full bound breakdown for one instance")
    b.add_argument("--config", required=True)
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--seed", type=int, default=0)
    t = sub.add_parser("trial", help="run one trial and print its record")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(getattr(args, "config", None))
        if args.command == "verify":
            results = run_suites(cfg, args.only)
            doc = {"passed": all(r.passed for r in results), "checks": [r.to_dict() for r in results]}
            print(json.dumps(doc, indent=2))
            return 0 if doc["passed"] else 1
        if args.command == "sweep":
            records = run_sweep(cfg, args.jobs)
            paths = write_sweep(cfg, records, output_dir(cfg))
            print(json.dumps({k: str(v) for k, v in paths.items()}))
            return 0
        if args.command == "bound-report":
            if args.n < 2:
                raise ConfigError("--n", "must be >= 2")
            doc = _jsonable(bound_report(cfg, args.n, args.seed))
            text = json.dumps(doc, indent=2)
            (output_dir(cfg) / f"bound_report_n{args.n}_seed{args.seed}.json").write_text(text + "\n")
            print(text)
            return 0
        if args.command == "trial":
            print(rg.run_trial(cfg, args.seed).to_json())
            return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
