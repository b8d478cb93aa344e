"""Denoising of observed summaries: HMC on p(y | x) q(x) with z collapsed.

Because the spike-and-slab error model factorizes over statistics, the
indicator z is summed out of the target and redrawn exactly from
``posterior_z_given`` for every retained x. The chain itself is plain HMC
with dual-averaging step-size adaptation in standardized summary space.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from rnpe import kernels
from rnpe.errormodel import SpikeSlabConfig, posterior_z_given
from rnpe.flows.bnaf import BnafSpec
from rnpe.flows.model import FlowModel
from rnpe.standardize import Standardizer

DIVERGENCE_THRESHOLD = 1000.0


class HmcInitError(ValueError):
    pass


@dataclass(frozen=True)
class HmcConfig:
    samples: int = 100_000
    warmup: int = 20_000
    trajectory_length: float = 1.0
    target_accept: float = 0.95
    rng_seed: int = 0
    max_leapfrog_steps: int = 1000

    def __post_init__(self):
        if self.warmup < 1:
            raise ValueError("warmup must be >= 1")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.trajectory_length <= 0:
            raise ValueError("trajectory_length must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class HmcChain:
    draws: np.ndarray
    log_density: np.ndarray
    accept_prob: np.ndarray
    step_size: float
    leapfrog_steps: int
    divergences: int
    warmup_divergences: int

    @property
    def mean_accept(self) -> float:
        return float(np.mean(self.accept_prob))


class _CallableTarget:
    """Adapts a ``f(x) -> (log_density, gradient)`` callable to the kernel API."""

    def __init__(self, fn):
        self.fn = fn

    def logp_grad(self, x):
        lp, g = self.fn(np.asarray(x, dtype=np.float64))
        return float(lp), np.asarray(g, dtype=np.float64)

    def leapfrog(self, x, p, grad, eps, n_steps):
        x = np.array(x, dtype=np.float64)
        p = np.array(p, dtype=np.float64) + 0.5 * eps * np.asarray(grad)
        g = np.asarray(grad, dtype=np.float64)
        lp = -math.inf
        for step in range(n_steps):
            x = x + eps * p
            lp, g = self.logp_grad(x)
            if not math.isfinite(lp):
                return x, p, g, lp, False
            if step < n_steps - 1:
                p = p + eps * g
        p = p + 0.5 * eps * g
        return x, p, g, lp, bool(np.all(np.isfinite(g)))


def _transition(target, x, lp, g, eps, n_steps, rng):
    p0 = rng.standard_normal(x.size)
    h0 = -lp + 0.5 * float(p0 @ p0)
    x1, p1, g1, lp1, ok = target.leapfrog(x, p0, g, eps, n_steps)
    if not ok:
        return x, lp, g, 0.0, True
    h1 = -lp1 + 0.5 * float(p1 @ p1)
    dh = h1 - h0
    if not math.isfinite(dh) or dh > DIVERGENCE_THRESHOLD:
        return x, lp, g, 0.0, True
    acc = 1.0 if dh <= 0 else math.exp(-dh)
    if rng.random() < acc:
        return x1, lp1, g1, acc, False
    return x, lp, g, acc, False


def _initial_step_size(target, x, lp, g, rng, goal: float = 0.8) -> float:
    """Double or halve a single-step proposal's size until it brackets ``goal`` acceptance."""
    eps = 0.1

    def accept(e):
        p = rng.standard_normal(x.size)
        x1, p1, _, lp1, ok = target.leapfrog(x, p, g, e, 1)
        if not ok:
            return 0.0
        dh = (-lp1 + 0.5 * float(p1 @ p1)) - (-lp + 0.5 * float(p @ p))
        if not math.isfinite(dh):
            return 0.0
        return 1.0 if dh <= 0 else math.exp(-dh)

    up = accept(eps) > goal
    for _ in range(60):
        e2 = eps * 2.0 if up else eps * 0.5
        a = accept(e2)
        eps = e2
        if (a > goal) != up:
            break
    return eps


def _n_steps(cfg: HmcConfig, eps: float) -> int:
    return max(1, min(cfg.max_leapfrog_steps, math.ceil(cfg.trajectory_length / eps)))


def hmc_run(target, init, cfg: HmcConfig, rng: np.random.Generator | None = None) -> HmcChain:
    """HMC with dual-averaging step size during warmup, then a frozen step.

    ``target`` is a kernel target (``logp_grad``/``leapfrog``) or a callable
    returning ``(log_density, gradient)``.
    """
    if not hasattr(target, "leapfrog"):
        target = _CallableTarget(target)
    rng = rng if rng is not None else np.random.default_rng(cfg.rng_seed)
    x = np.array(init, dtype=np.float64).ravel()
    lp, g = target.logp_grad(x)
    if not math.isfinite(lp) or not np.all(np.isfinite(g)):
        raise HmcInitError("log density or gradient is not finite at the initial point")

    eps = _initial_step_size(target, x, lp, g, rng)
    mu = math.log(10.0 * eps)
    gamma, t0, kappa = 0.05, 10.0, 0.75
    hbar, log_eps_bar = 0.0, 0.0
    warm_div = 0
    for t in range(1, cfg.warmup + 1):
        x, lp, g, acc, div = _transition(target, x, lp, g, eps, _n_steps(cfg, eps), rng)
        warm_div += div
        w = 1.0 / (t + t0)
        hbar = (1.0 - w) * hbar + w * (cfg.target_accept - acc)
        log_eps = mu - math.sqrt(t) / gamma * hbar
        eta = t ** (-kappa)
        log_eps_bar = eta * log_eps + (1.0 - eta) * log_eps_bar
        eps = math.exp(log_eps)
    eps = math.exp(log_eps_bar)
    n_steps = _n_steps(cfg, eps)

    d = x.size
    draws = np.empty((cfg.samples, d))
    lps = np.empty(cfg.samples)
    accs = np.empty(cfg.samples)
    div_count = 0
    for i in range(cfg.samples):
        x, lp, g, acc, div = _transition(target, x, lp, g, eps, n_steps, rng)
        div_count += div
        draws[i] = x
        lps[i] = lp
        accs[i] = acc
    return HmcChain(draws, lps, accs, eps, n_steps, div_count, warm_div)


# ------------------------------------------------------------- marginals


@dataclass(frozen=True)
class GaussianMarginal:
    """Analytic Gaussian stand-in for q(x); mean/cov are in standardized space."""

    mean: np.ndarray
    cov: np.ndarray
    input_standardizer: Standardizer | None = None

    @property
    def dim(self) -> int:
        return int(np.atleast_1d(self.mean).size)

    def standardizer(self) -> Standardizer:
        return self.input_standardizer or Standardizer.identity(self.dim)

    def kernel(self) -> tuple[int, dict]:
        return kernels.KIND_GAUSSIAN, kernels.gaussian_arrays(self.mean, self.cov)


def _kernel_for(qx) -> tuple[int, dict, Standardizer]:
    if isinstance(qx, GaussianMarginal):
        kind, arrays = qx.kernel()
        return kind, arrays, qx.standardizer()
    if isinstance(qx, FlowModel) and isinstance(qx.spec, BnafSpec):
        return kernels.KIND_BNAF, qx.kernel_arrays(), qx.input_standardizer
    raise TypeError("q(x) must be a block autoregressive FlowModel or a GaussianMarginal")


# ---------------------------------------------------------------- results


@dataclass
class DenoiseResult:
    x_draws: np.ndarray  # raw summary space
    z_draws: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.x_draws.shape != self.z_draws.shape:
            raise ValueError("x and z draws must have the same shape")

    @property
    def n(self) -> int:
        return self.x_draws.shape[0]

    def save(self, path) -> None:
        """Write ``<path>.npz`` (arrays) and ``<path>.json`` (diagnostics)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path.with_suffix(".npz"), "wb") as fh:
            np.savez(fh, x_draws=self.x_draws, z_draws=self.z_draws)
        path.with_suffix(".json").write_text(json.dumps(self.diagnostics, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> DenoiseResult:
        path = Path(path)
        with np.load(path.with_suffix(".npz")) as npz:
            x, z = npz["x_draws"], npz["z_draws"]
        return cls(x, z, json.loads(path.with_suffix(".json").read_text()))


def denoise_observation(
    y_obs,
    qx,
    err: SpikeSlabConfig,
    cfg: HmcConfig,
    init_sim,
    rng: np.random.Generator | None = None,
) -> DenoiseResult:
    """Sample x ~ p(x | y) proportional to p(y | x) q(x), plus z per draw.

    ``y_obs`` and ``init_sim`` are raw summaries; both are mapped into the
    standardized space of q(x) (the simulation standardizer), where the
    error model is defined. Returned x draws are raw.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.rng_seed)
    kind, arrays, std = _kernel_for(qx)
    y = std.apply(np.atleast_1d(y_obs))
    x0 = std.apply(np.atleast_1d(init_sim))
    if y.shape != (std.dim,) or x0.shape != (std.dim,):
        raise ValueError(f"observation and init must have dimension {std.dim}")
    if not np.all(np.isfinite(y)):
        raise ValueError("observed summaries must be finite")
    marginal = kernels.Target(kind, arrays)
    lq, gq = marginal.logp_grad(x0)
    if not math.isfinite(lq) or not np.all(np.isfinite(gq)):
        raise HmcInitError("q(x) is not finite at the initial simulation; draw a different init_sim")
    target = kernels.Target(kind, arrays, y=y, rho=err.rho, sigma=err.spike_scale, tau=err.slab_scale)
    chain = hmc_run(target, x0, cfg, rng)
    probs = posterior_z_given(y, chain.draws, err)
    z = (rng.random(probs.shape) < probs).astype(np.int8)
    diagnostics = {
        "mean_accept": chain.mean_accept,
        "step_size": chain.step_size,
        "leapfrog_steps": chain.leapfrog_steps,
        "divergences": chain.divergences,
        "warmup_divergences": chain.warmup_divergences,
        "samples": cfg.samples,
        "warmup": cfg.warmup,
        "backend": kernels.BACKEND,
    }
    return DenoiseResult(std.invert(chain.draws), z, diagnostics)


def misspecification_probabilities(res: DenoiseResult) -> np.ndarray:
    """Pr(z_j = 1 | y) estimated by column means of the z draws."""
    if res.n < 1:
        raise ValueError("no draws")
    return res.z_draws.mean(axis=0)


def joint_z_frequencies(res: DenoiseResult, dims: tuple[int, int]) -> np.ndarray:
    """2x2 table ``t[a, b]`` = frequency of (z_j, z_k) == (a, b)."""
    j, k = dims
    d = res.z_draws.shape[1]
    if j == k or not (0 <= j < d and 0 <= k < d):
        raise ValueError(f"need two distinct statistic indices in [0, {d})")
    zj = res.z_draws[:, j].astype(int)
    zk = res.z_draws[:, k].astype(int)
    table = np.zeros((2, 2))
    np.add.at(table, (zj, zk), 1.0)
    return table / res.n
