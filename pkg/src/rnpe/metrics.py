"""Posterior evaluation: log-prob of the truth, HDR coverage, C2ST and MSE."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from rnpe import diffcore as dc
from rnpe.training import Adam

COVERAGE_LEVELS = tuple(round(0.05 * k, 2) for k in range(1, 20))
MIN_COVERAGE_RECORDS = 50


def log_prob_at(handle, theta_star) -> float:
    """log density of ``theta_star``; non-finite values come back as -inf, never dropped."""
    v = float(np.asarray(handle.log_prob(np.atleast_2d(theta_star)))[0])
    return v if math.isfinite(v) else -math.inf


def hdr_containment(sample_log_density, star_log_density: float, levels=COVERAGE_LEVELS) -> np.ndarray:
    """Whether the truth lies in the HDR of each nominal credibility level.

    The region of level c is {density >= q}, where q is the empirical
    (1 - c)-quantile of the density over posterior samples.
    """
    vals = np.asarray(sample_log_density, dtype=np.float64)
    if vals.size < 1:
        raise ValueError("need posterior samples")
    alphas = 1.0 - np.asarray(levels, dtype=np.float64)
    thresholds = _robust_quantile(vals, alphas)
    return np.asarray(star_log_density >= thresholds)


def hdr_coverage(samples, density, theta_star, alpha: float) -> bool:
    """True iff density(theta_star) is at least the alpha-quantile of density(samples).

    ``density`` may return densities or log densities; only order matters.
    """
    if np.asarray(samples).shape[0] < 1000:
        warnings.warn("fewer than 1,000 samples for an HDR estimate", stacklevel=2)
    d_samples = np.asarray(density(samples), dtype=np.float64)
    d_star = float(np.asarray(density(np.atleast_2d(theta_star)))[0])
    return bool(hdr_containment(d_samples, d_star, [1.0 - alpha])[0])


def _robust_quantile(values, qs) -> np.ndarray:
    """Linear-interpolated quantiles that tolerate -inf entries."""
    v = np.sort(np.where(np.isnan(values), -np.inf, values))
    n = v.size
    out = np.empty(len(np.atleast_1d(qs)))
    for k, q in enumerate(np.atleast_1d(qs)):
        pos = q * (n - 1)
        lo = int(math.floor(pos))
        hi = min(lo + 1, n - 1)
        f = pos - lo
        if f == 0.0 or not (math.isfinite(v[lo]) and math.isfinite(v[hi])):
            out[k] = v[lo] if f < 1.0 else v[hi]
        else:
            out[k] = v[lo] + (v[hi] - v[lo]) * f
    return out


@dataclass(frozen=True)
class CoverageCurve:
    levels: np.ndarray
    coverage: np.ndarray
    trials: int
    note: str = ""

    def below_diagonal(self) -> np.ndarray:
        return self.coverage < self.levels


def coverage_curve(containments, levels=COVERAGE_LEVELS) -> CoverageCurve:
    """Empirical coverage per level from a (records x levels) containment array."""
    c = np.asarray(containments, dtype=np.float64)
    levels = np.asarray(levels, dtype=np.float64)
    if c.ndim == 1:
        c = c[None, :]
    if c.size == 0:
        return CoverageCurve(levels, np.full(levels.size, np.nan), 0, "no records")
    note = ""
    if c.shape[0] < MIN_COVERAGE_RECORDS:
        note = f"only {c.shape[0]} records; coverage is noisy"
    return CoverageCurve(levels, c.mean(axis=0), c.shape[0], note)


# --------------------------------------------------------------------- C2ST


def _mlp_logits(p, x):
    h = dc.tanh(dc.add(dc.matmul(x, p["w0"]), p["b0"]))
    h = dc.tanh(dc.add(dc.matmul(h, p["w1"]), p["b1"]))
    return dc.add(dc.matmul(h, p["w2"]), p["b2"])


def c2st(samples_a, samples_b, seed: int = 0, steps: int = 2000, batch_size: int = 256,
         learning_rate: float = 5e-3) -> float:
    """Held-out accuracy of an MLP trained to tell ``samples_a`` from ``samples_b``."""
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape != b.shape:
        raise ValueError("c2st needs equal sample counts and dimensions")
    x = np.concatenate([a, b])
    sd = x.std(axis=0)
    if np.any(sd == 0) or np.all(a.std(axis=0) == 0) or np.all(b.std(axis=0) == 0):
        raise ValueError("degenerate (constant) input to c2st")
    x = (x - x.mean(axis=0)) / sd
    labels = np.concatenate([np.ones(a.shape[0]), -np.ones(b.shape[0])])
    rng = np.random.default_rng(seed)
    perm = rng.permutation(x.shape[0])
    n_tr = x.shape[0] // 2
    tr, te = perm[:n_tr], perm[n_tr:]

    d = x.shape[1]
    w = 10 * d
    pv = dc.ParameterVector.pack({
        "w0": rng.normal(0, 1 / np.sqrt(d), (d, w)), "b0": np.zeros(w),
        "w1": rng.normal(0, 1 / np.sqrt(w), (w, w)), "b1": np.zeros(w),
        "w2": rng.normal(0, 1 / np.sqrt(w), (w, 1)), "b2": np.zeros(1),
    })
    flat = pv.flat.copy()
    opt = Adam(learning_rate)
    for _ in range(steps):
        idx = tr[rng.integers(0, tr.size, size=min(batch_size, tr.size))]
        xb, yb = x[idx], labels[idx, None]

        def loss(theta):
            z = _mlp_logits(pv.unpack(theta), xb)
            return dc.mean(dc.softplus(dc.mul(z, -yb)))

        _, g = dc.evaluate_with_gradient(loss, flat)
        flat = opt.step(flat, g)
    logits = np.asarray(_mlp_logits(pv.unpack(flat), x[te]))[:, 0]
    return float(np.mean(np.sign(logits) == labels[te]))


# ----------------------------------------------------------------- MSE, box


def mse_table(theta_stars, posterior_means, prior_mean, prior_sd) -> np.ndarray:
    """Per-parameter mean of squared error of posterior means, on prior-standardized parameters."""
    ts = (np.atleast_2d(theta_stars) - prior_mean) / prior_sd
    pm = (np.atleast_2d(posterior_means) - prior_mean) / prior_sd
    if ts.shape != pm.shape:
        raise ValueError("theta_stars and posterior_means must align")
    if ts.shape[0] == 0:
        return np.full(np.size(prior_mean), np.nan)
    return np.mean((pm - ts) ** 2, axis=0)


BOX_FIELDS = ("min", "q1", "median", "q3", "max", "outliers")


def box_stats(values) -> dict:
    """Five-number summary plus the count of points beyond 1.5 IQR (non-finite values included)."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return {k: math.nan for k in BOX_FIELDS[:-1]} | {"outliers": 0}
    q1, med, q3 = _robust_quantile(v, [0.25, 0.5, 0.75])
    iqr = q3 - q1
    if math.isfinite(iqr):
        outliers = int(np.sum((v < q1 - 1.5 * iqr) | (v > q3 + 1.5 * iqr) | ~np.isfinite(v)))
    else:
        outliers = int(np.sum(~np.isfinite(v)))
    return {"min": float(np.min(v)), "q1": float(q1), "median": float(med), "q3": float(q3),
            "max": float(np.max(v)), "outliers": outliers}
