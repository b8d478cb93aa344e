"""Spike-and-slab error model on standardized summary statistics.

Per statistic j, ``z_j ~ Bernoulli(rho)`` and
``y_j | x_j, z_j ~ N(x_j, spike_scale**2)`` if ``z_j == 0`` else
``Cauchy(x_j, slab_scale)``. Everything here works in log space; spike and
slab densities are never exponentiated on their own.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class SpikeSlabConfig:
    rho: float = 0.5
    spike_scale: float = 0.01
    slab_scale: float = 0.25

    def __post_init__(self):
        # rho == 0 is kept as the exact no-slab limit
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if self.spike_scale <= 0 or self.slab_scale <= 0:
            raise ValueError("spike and slab scales must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> SpikeSlabConfig:
        return cls(**{k: float(d[k]) for k in ("rho", "spike_scale", "slab_scale") if k in d})


def _pair(y, x):
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if y.shape[-1] != x.shape[-1]:
        raise ValueError(f"dimension mismatch: y has {y.shape[-1]}, x has {x.shape[-1]}")
    return y, x


def component_log_terms(y, x, cfg: SpikeSlabConfig):
    """Per-statistic ``log((1-rho) N(y; x, s^2))`` and ``log(rho Cauchy(y; x, t))``."""
    y, x = _pair(y, x)
    r = y - x
    s, t = cfg.spike_scale, cfg.slab_scale
    log_spike = np.log1p(-cfg.rho) - np.log(s) - _HALF_LOG_2PI - 0.5 * (r / s) ** 2
    with np.errstate(divide="ignore"):
        log_rho = np.log(cfg.rho)
    log_slab = log_rho - np.log(np.pi * t) - np.log1p((r / t) ** 2)
    return log_spike, log_slab


def error_log_likelihood(y, x, cfg: SpikeSlabConfig):
    """z-marginalised log p(y | x); sums over the last axis."""
    log_spike, log_slab = component_log_terms(y, x, cfg)
    return np.sum(np.logaddexp(log_spike, log_slab), axis=-1)


def joint_log_likelihood(y, x, z, cfg: SpikeSlabConfig):
    """log p(y | x, z) + log p(z) for an explicit indicator vector."""
    log_spike, log_slab = component_log_terms(y, x, cfg)
    z = np.asarray(z).astype(bool)
    return np.sum(np.where(z, log_slab, log_spike), axis=-1)


def posterior_z_given(y, x, cfg: SpikeSlabConfig) -> np.ndarray:
    """Pr(z_j = 1 | y_j, x_j) for every statistic."""
    log_spike, log_slab = component_log_terms(y, x, cfg)
    return np.exp(log_slab - np.logaddexp(log_spike, log_slab))


def sample_error(x, cfg: SpikeSlabConfig, rng: np.random.Generator):
    """Draw (y, z) from the error model around standardized x (any lead shape)."""
    x = np.asarray(x, dtype=np.float64)
    z = rng.random(x.shape) < cfg.rho
    spike = rng.standard_normal(x.shape) * cfg.spike_scale
    slab = rng.standard_cauchy(x.shape) * cfg.slab_scale
    y = x + np.where(z, slab, spike)
    return y, z.astype(np.int8)
