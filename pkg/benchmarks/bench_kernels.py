"""Compiled vs numpy HMC kernels.

Times ``logp_grad`` and a 100-step ``leapfrog`` on BNAF targets of the
sizes the tasks use (2, 4 and 6 summaries), plus one full denoising chain
per backend. Run with ``python3 benchmarks/bench_kernels.py``.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from rnpe import _kernels_py, kernels
from rnpe.flows import BnafSpec, FlowModel, init_bnaf_params
from rnpe.standardize import Standardizer

try:
    from rnpe import _kernels as compiled
except ImportError:
    compiled = None


def _arrays(dim, block, seed=0):
    spec = BnafSpec(dim, block=block)
    model = FlowModel(spec, init_bnaf_params(spec, np.random.default_rng(seed)), Standardizer.identity(dim))
    return model.kernel_arrays()


def _per_call(stmt, number):
    return min(timeit.repeat(stmt, number=number, repeat=5)) / number


def kernel_rows(block, calls):
    rows = []
    for dim in (2, 4, 6):
        arrays = _arrays(dim, block)
        rng = np.random.default_rng(dim)
        y, x, p = rng.normal(size=dim), rng.normal(size=dim), rng.normal(size=dim)
        for name, mod in (("python", _kernels_py), ("cython", compiled)):
            if mod is None:
                continue
            t = mod.Target(kernels.KIND_BNAF, arrays, y=y)
            _, g = t.logp_grad(x)
            rows.append((dim, name,
                         _per_call(lambda: t.logp_grad(x), calls),
                         _per_call(lambda: t.leapfrog(x, p, g, 0.01, 100), max(1, calls // 100))))
    return rows


CHAIN = """
import time, numpy as np
from rnpe import kernels
from rnpe.denoise import HmcConfig, denoise_observation
from rnpe.errormodel import SpikeSlabConfig
from rnpe.flows import BnafSpec, FlowModel, init_bnaf_params
from rnpe.standardize import Standardizer
spec = BnafSpec(4, block={block})
qx = FlowModel(spec, init_bnaf_params(spec, np.random.default_rng(0)), Standardizer.identity(4))
t = time.perf_counter()
denoise_observation(np.array([0.3, -1.0, 4.0, 0.1]), qx, SpikeSlabConfig(), HmcConfig(samples={n}, warmup={n} // 5),
                    np.zeros(4), np.random.default_rng(1))
print(kernels.BACKEND, time.perf_counter() - t)
"""


def chain_seconds(block, n, pure):
    env = dict(os.environ, RNPE_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", CHAIN.format(block=block, n=n)], env=env,
                         capture_output=True, text=True, check=True).stdout.split()
    return out[0], float(out[1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--block", type=int, default=8, help="BNAF block size (the benchmark default)")
    ap.add_argument("--calls", type=int, default=2000, help="logp_grad calls per timing")
    ap.add_argument("--chain", type=int, default=2000, help="denoising draws per backend (0 skips)")
    args = ap.parse_args(argv)

    if compiled is None:
        print("compiled extension not built; only the numpy fallback is timed")
    print(f"{'dim':>4} {'backend':>8} {'logp_grad us':>13} {'leapfrog(100) ms':>17}")
    rows = kernel_rows(args.block, args.calls)
    for dim, name, lg, lf in rows:
        print(f"{dim:>4} {name:>8} {lg * 1e6:>13.1f} {lf * 1e3:>17.2f}")
    if compiled is not None:
        for dim in (2, 4, 6):
            py, cy = (r for r in rows if r[0] == dim)
            print(f"dim {dim}: compiled speed-up {py[2] / cy[2]:.1f}x (gradient), {py[3] / cy[3]:.1f}x (leapfrog)")
    if args.chain:
        for pure in (True, False):
            backend, secs = chain_seconds(args.block, args.chain, pure)
            print(f"denoising chain, {args.chain} draws, 4-D, {backend}: {secs:.2f} s")


if __name__ == "__main__":
    main()
