"""Command-line entry point: ``rnpe <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from rnpe import seeding
from rnpe.denoise import misspecification_probabilities
from rnpe.harness.benchmark import build_task, obtain_artifacts, observe, run_benchmark, sweep_misspecification
from rnpe.harness.config import load_config
from rnpe.harness.report import emit_report, read_records, write_csv
from rnpe.pipeline import TrainedArtifacts, npe_posterior, nnpe_posterior, rnpe_posterior, simulate_bank


def _common(p: argparse.ArgumentParser, method: bool = False) -> None:
    p.add_argument("--task", help="gaussian, gaussian_linear, sir or cs")
    p.add_argument("--config", type=Path, help="TOML configuration file")
    p.add_argument("--profile", choices=("desk", "full"), help="base profile (default: desk)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--pairs", type=int, help="number of observation/ground-truth pairs")
    p.add_argument("--misspecified", dest="misspecified", action="store_true", default=None,
                   help="observe through the corrupted process (default)")
    p.add_argument("--well-specified", dest="misspecified", action="store_false",
                   help="observe through the model itself (control)")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--workers", type=int, help="parallel worker processes")
    if method:
        p.add_argument("--method", action="append", choices=("NPE", "NNPE", "RNPE", "npe", "nnpe", "rnpe"),
                       help="method(s) to run; repeatable")


def _config(args):
    methods = tuple(m.upper() for m in args.method) if getattr(args, "method", None) else None
    return load_config(args.config, args.profile, task=args.task, master_seed=args.seed, pairs=args.pairs,
                       misspecified=args.misspecified, workers=args.workers, methods=methods)


def _observations(args, cfg, task):
    """Either the explicit ``--y`` summaries or the configured pairs' observations."""
    if getattr(args, "y", None):
        y = np.array([float(v) for v in args.y.split(",")])
        if y.size != task.summary_dim:
            raise SystemExit(f"--y needs {task.summary_dim} comma-separated values")
        return [(0, y)]
    return [(i, observe(cfg, task, i)[2]) for i in range(cfg.pairs)]


def _artifacts(args, cfg, task):
    if getattr(args, "artifacts", None):
        return TrainedArtifacts.load(args.artifacts)
    return obtain_artifacts(cfg, task, args.out)[0]


def cmd_simulate(args) -> int:
    cfg = _config(args)
    task = build_task(cfg)
    bank = simulate_bank(task, cfg.n_sims, cfg.master_seed)
    bank.save(args.out / "bank")
    names = list(task.param_names) + list(task.summary_names)
    write_csv(args.out / "bank.csv", names, np.concatenate([bank.theta, bank.x], axis=1).tolist())
    print(f"wrote {bank.n} simulations to {args.out / 'bank'}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    task = build_task(cfg)
    art, ref = obtain_artifacts(cfg, task, args.out)
    from rnpe.training import write_training_curve

    for name, curve in art.curves.items():
        write_training_curve(curve, args.out / ref / f"{name}_curve.csv")
    print(f"trained artifacts in {args.out / ref}")
    return 0


def cmd_denoise(args) -> int:
    cfg = _config(args)
    task = build_task(cfg)
    art = _artifacts(args, cfg, task)
    rows = []
    for pair, y in _observations(args, cfg, task):
        rng = seeding.stream(cfg.master_seed, pair, "infer.RNPE")
        _, _, res = rnpe_posterior(y, art, cfg.hmc(), cfg.m_prime, rng)
        res.save(args.out / "denoised" / f"pair{pair:05d}")
        for name, p in zip(task.summary_names, misspecification_probabilities(res)):
            rows.append([task.name, pair, name, p])
    write_csv(args.out / "misspec_probs.csv", ["task", "pair", "statistic", "probability"], rows)
    print(f"denoised {len(rows) // task.summary_dim} observation(s) into {args.out}")
    return 0


def cmd_infer(args) -> int:
    cfg = _config(args)
    task = build_task(cfg)
    art = _artifacts(args, cfg, task)
    rows = []
    for pair, y in _observations(args, cfg, task):
        for method in cfg.methods:
            rng = seeding.stream(cfg.master_seed, pair, f"infer.{method}")
            if method == "NPE":
                _, draws = npe_posterior(y, art.q_theta_given_x, cfg.hdr_samples, rng)
            elif method == "NNPE":
                _, draws = nnpe_posterior(y, art.q_theta_given_y, cfg.hdr_samples, rng)
            else:
                _, draws, _ = rnpe_posterior(y, art, cfg.hmc(), cfg.m_prime, rng)
            rows.extend([task.name, pair, method, i, *d] for i, d in enumerate(draws.tolist()))
    write_csv(args.out / "posterior_samples.csv", ["task", "pair", "method", "draw", *task.param_names], rows)
    print(f"wrote posterior draws to {args.out / 'posterior_samples.csv'}")
    return 0


def cmd_benchmark(args) -> int:
    cfg = _config(args)
    table, records = run_benchmark(cfg, args.out)
    failed = sum(not r.ok for r in records)
    for row in table:
        if isinstance(row[3], float) and not row[2].startswith("coverage@"):
            print(f"{row[0]:<16}{row[1]:<6}{row[2]:<28}{row[3]:.4f}")
    print(f"{len(records)} records ({failed} failed) in {args.out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    levels = [float(v) for v in args.levels.split(",")]
    rows = sweep_misspecification(levels, cfg, args.out)
    print(f"wrote {len(rows)} rows to {args.out / 'sweep.csv'}")
    return 0


def cmd_report(args) -> int:
    src = args.records or (args.out / "records.jsonl")
    records = read_records(src) if Path(src).exists() else []
    task = None
    cfg_path = Path(src).parent / "config.json"
    if cfg_path.exists():
        from rnpe.tasks import get_task

        cfgd = json.loads(cfg_path.read_text())
        task = get_task(cfgd["task"], **cfgd.get("task_options", {}))
    elif args.task:
        from rnpe.tasks import get_task

        task = get_task(args.task)
    emit_report(records, args.out, task)
    print(f"report written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rnpe", description="Robust neural posterior estimation toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate and store a training bank")
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train q(theta|x), q(x) and the noisy-training flow")
    _common(p, method=True)
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (("denoise", cmd_denoise, "denoise observations with HMC"),
                                 ("infer", cmd_infer, "draw posterior samples")):
        p = sub.add_parser(name, help=helptext)
        _common(p, method=name == "infer")
        p.add_argument("--artifacts", type=Path, help="directory of trained artifacts to load")
        p.add_argument("--y", help="observed summaries, comma separated (overrides --pairs)")
        p.set_defaults(func=func)

    p = sub.add_parser("benchmark", help="run the benchmark and write report CSVs")
    _common(p, method=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("sweep", help="gaussian task under increasing observation variance")
    _common(p)
    p.add_argument("--levels", default="1,2,4,8", help="comma-separated observation variances")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="re-emit report CSVs from stored records")
    p.add_argument("--records", type=Path, help="records.jsonl (default: OUT/records.jsonl)")
    p.add_argument("--task", help="task name for column labels when no config.json is present")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
