"""CSV outputs: bit-stable formatting, one file per report table."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from rnpe import metrics
from rnpe.tasks import Task

REPORT_FILES = ("coverage.csv", "logprob_box.csv", "mse.csv", "misspec_probs.csv",
                "joint_z.csv", "denoised_samples.csv", "metrics.csv")


def fmt(v) -> str:
    """Shortest round-trip decimal for floats; plain text otherwise."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return "" if v is None else str(v)


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_records(records, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_records(path):
    from rnpe.harness.benchmark import RunRecord

    with open(path, encoding="utf-8") as fh:
        return [RunRecord.from_json(line) for line in fh if line.strip()]


def _groups(records):
    """Successful records grouped by (task, method) in first-seen order."""
    out: dict = {}
    for r in records:
        if r.ok:
            out.setdefault((r.task, r.method), []).append(r)
    return out


def _names(task: Task | None, attr: str, n: int, prefix: str):
    names = getattr(task, attr, ()) if task is not None else ()
    return list(names) if len(names) == n else [f"{prefix}{j}" for j in range(n)]


def coverage_rows(records):
    rows = []
    for (task, method), recs in _groups(records).items():
        curve = metrics.coverage_curve([r.containment for r in recs], recs[0].levels)
        for lv, cv in zip(curve.levels, curve.coverage):
            rows.append([task, method, float(lv), float(cv), curve.trials])
    return rows


def logprob_rows(records):
    rows = []
    for (task, method), recs in _groups(records).items():
        b = metrics.box_stats([r.log_prob for r in recs])
        rows.append([task, method, len(recs)] + [b[k] for k in metrics.BOX_FIELDS])
    return rows


def mse_rows(records, task: Task | None):
    rows = []
    for (tname, method), recs in _groups(records).items():
        ts = np.array([r.theta_star for r in recs])
        pm = np.array([r.posterior_mean for r in recs])
        if task is not None and task.name == tname:
            mean, sd = task.prior_moments()
        else:
            mean, sd = np.zeros(ts.shape[1]), np.ones(ts.shape[1])
        mse = metrics.mse_table(ts, pm, mean, sd)
        names = _names(task, "param_names", ts.shape[1], "theta")
        for name, v in zip(names, mse):
            rows.append([tname, method, name, float(v)])
        if ts.shape[1] > 1:
            rows.append([tname, method, "average", float(np.mean(mse))])
    return rows


def metric_table(records, task: Task | None = None):
    """Long-format rows (task, method, metric, value)."""
    rows = []
    for (tname, method), recs in _groups(records).items():
        lps = [r.log_prob for r in recs]
        rows.append([tname, method, "median_log_prob", metrics.box_stats(lps)["median"]])
        rows.append([tname, method, "catastrophic_failures", sum(not math.isfinite(v) for v in lps)])
        rows.append([tname, method, "trials", len(recs)])
        c2 = [r.c2st for r in recs if r.c2st is not None]
        if c2:
            rows.append([tname, method, "mean_c2st", float(np.mean(c2))])
    for tname, method, lv, cv, _ in coverage_rows(records):
        rows.append([tname, method, f"coverage@{lv!r}", cv])
    for tname, method, name, v in mse_rows(records, task):
        rows.append([tname, method, f"mse_{name}", v])
    failed = [r for r in records if not r.ok]
    for r in failed:
        rows.append([r.task, r.method, f"failed_pair_{r.pair}", r.reason])
    return rows


def emit_report(records, out_dir, task: Task | None = None) -> list[Path]:
    """Write all report CSVs into ``out_dir``; empty inputs give header-only files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rnpe = [r for r in records if r.ok and r.misspec_probs is not None]
    stat_names = _names(task, "summary_names", len(rnpe[0].misspec_probs), "x") if rnpe else []

    written = []

    def out(name, header, rows):
        write_csv(out_dir / name, header, rows)
        written.append(out_dir / name)

    out("coverage.csv", ["task", "method", "level", "coverage", "trials"], coverage_rows(records))
    out("logprob_box.csv", ["task", "method", "trials", *metrics.BOX_FIELDS], logprob_rows(records))
    out("mse.csv", ["task", "method", "parameter", "mse"], mse_rows(records, task))
    out("misspec_probs.csv", ["task", "pair", "statistic", "probability"],
        [[r.task, r.pair, stat_names[j], p] for r in rnpe for j, p in enumerate(r.misspec_probs)])
    out("joint_z.csv", ["task", "pair", "statistic_j", "statistic_k", "z_j", "z_k", "frequency"],
        [[r.task, r.pair, stat_names[row[0]], stat_names[row[1]], a, b, row[2 + 2 * a + b]]
         for r in rnpe for row in r.joint_z for a in (0, 1) for b in (0, 1)])
    out("denoised_samples.csv", ["task", "pair", "draw", *stat_names],
        [[r.task, r.pair, i, *x] for r in rnpe for i, x in enumerate(r.denoised)])
    out("metrics.csv", ["task", "method", "metric", "value"], metric_table(records, task))
    return written
