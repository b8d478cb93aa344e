"""Monotone rational-quadratic splines with identity (linear) tails."""

from __future__ import annotations

import numpy as np

from rnpe import diffcore as dc

MIN_BIN_WIDTH = 1e-3
MIN_BIN_HEIGHT = 1e-3
MIN_DERIVATIVE = 1e-3

# softplus(IDENTITY_DERIVATIVE_LOGIT) + MIN_DERIVATIVE == 1
IDENTITY_DERIVATIVE_LOGIT = float(np.log(np.expm1(1.0 - MIN_DERIVATIVE)))


def _search(knots: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Bin index of x among ``knots[..., 0..K]``; values broadcast against knots' lead dims."""
    inner = knots[..., 1:-1]
    idx = np.sum(x[..., None] >= inner, axis=-1)
    return idx[..., None]


def _rq_core(x, cumw, cumh, derivs, inverse: bool):
    """Spline on the interior; ``x`` must already be inside [cumw[0], cumw[-1]].

    cumw/cumh: (..., K+1) knot positions; derivs: (..., K+1) knot slopes.
    Returns (y, log|dy/dx|) where the log-derivative is always of the
    forward map evaluated at the matching point.
    """
    knots = dc.value_of(cumh if inverse else cumw)
    idx = _search(knots, dc.value_of(x))
    take = lambda a: dc.take_along_axis(a, idx)[..., 0]  # noqa: E731

    x_k = take(cumw[..., :-1])
    w_k = take(cumw[..., 1:]) - x_k
    y_k = take(cumh[..., :-1])
    h_k = take(cumh[..., 1:]) - y_k
    d_k = take(derivs[..., :-1])
    d_k1 = take(derivs[..., 1:])
    s = h_k / w_k
    curv = d_k1 + d_k - 2.0 * s

    if not inverse:
        xi = (x - x_k) / w_k
        one_m = 1.0 - xi
        xo = xi * one_m
        denom = s + curv * xo
        y = y_k + h_k * (s * xi * xi + d_k * xo) / denom
        dnum = s * s * (d_k1 * xi * xi + 2.0 * s * xo + d_k * one_m * one_m)
        lad = dc.log(dnum) - 2.0 * dc.log(denom)
        return y, lad

    dy = x - y_k
    a = h_k * (s - d_k) + dy * curv
    b = h_k * d_k - dy * curv
    c = -s * dy
    disc = b * b - 4.0 * a * c
    disc = dc.where(dc.value_of(disc) > 0, disc, 0.0)
    xi = (2.0 * c) / (-b - dc.sqrt(disc))
    out = xi * w_k + x_k
    one_m = 1.0 - xi
    xo = xi * one_m
    denom = s + curv * xo
    dnum = s * s * (d_k1 * xi * xi + 2.0 * s * xo + d_k * one_m * one_m)
    lad = dc.log(dnum) - 2.0 * dc.log(denom)
    return out, lad


def knots_from_unnormalized(uw, uh, ud, bound: float):
    """Map unconstrained network outputs to knot positions and slopes.

    uw, uh: (..., K); ud: (..., K-1) interior slopes. Boundary slopes are
    fixed at 1 so the spline joins the identity tails smoothly.
    """
    k = dc.value_of(uw).shape[-1]
    widths = MIN_BIN_WIDTH + (1.0 - MIN_BIN_WIDTH * k) * dc.softmax(uw, axis=-1)
    heights = MIN_BIN_HEIGHT + (1.0 - MIN_BIN_HEIGHT * k) * dc.softmax(uh, axis=-1)
    cumw = 2.0 * bound * dc.pad_last(dc.cumsum(widths[..., :-1], axis=-1), 0.0, 1.0) - bound
    cumh = 2.0 * bound * dc.pad_last(dc.cumsum(heights[..., :-1], axis=-1), 0.0, 1.0) - bound
    derivs = dc.pad_last(MIN_DERIVATIVE + dc.softplus(ud), 1.0, 1.0)
    return cumw, cumh, derivs


def rq_spline(x, uw, uh, ud, bound: float = 5.0, inverse: bool = False):
    """Elementwise spline transform with identity outside [-bound, bound].

    Parameter arrays broadcast against ``x`` on the leading axes.
    """
    cumw, cumh, derivs = knots_from_unnormalized(uw, uh, ud, bound)
    xv = dc.value_of(x)
    inside = np.abs(xv) < bound
    x_in = dc.where(inside, x, 0.0)
    y, lad = _rq_core(x_in, cumw, cumh, derivs, inverse)
    y = dc.where(inside, y, x)
    lad = dc.where(inside, lad, 0.0)
    return y, lad


def rq_spline_apply(value: float, bin_params: dict, inverse: bool = False,
                    interval: tuple[float, float] = (-5.0, 5.0)) -> tuple[float, float]:
    """Scalar spline from explicit bin parameters.

    ``bin_params`` holds ``widths`` and ``heights`` (positive fractions of
    the interval summing to one) and ``derivatives`` (positive slopes at the
    K+1 knots, or at the K-1 interior knots with unit boundary slopes).
    Returns the output and log|d forward / dx| at the matching point.
    """
    lo, hi = interval
    if not lo < hi:
        raise ValueError("interval lower bound must be below upper bound")
    widths = np.asarray(bin_params["widths"], dtype=np.float64)
    heights = np.asarray(bin_params["heights"], dtype=np.float64)
    derivs = np.asarray(bin_params["derivatives"], dtype=np.float64)
    k = widths.size
    if k < 1 or heights.size != k:
        raise ValueError("widths and heights must have the same positive length")
    for name, arr in (("widths", widths), ("heights", heights)):
        if np.any(arr <= 0) or abs(arr.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} must be positive and sum to one")
    if derivs.size == k - 1:
        derivs = np.concatenate([[1.0], derivs, [1.0]])
    if derivs.size != k + 1 or np.any(derivs <= 0):
        raise ValueError("derivatives must be positive, one per knot")
    span = hi - lo
    cumw = lo + span * np.concatenate([[0.0], np.cumsum(widths)])
    cumh = lo + span * np.concatenate([[0.0], np.cumsum(heights)])
    cumw[-1] = cumh[-1] = hi
    if not lo <= value <= hi:
        return float(value), 0.0
    y, lad = _rq_core(np.asarray(value, dtype=np.float64), cumw, cumh, derivs, inverse)
    return float(y), float(lad)
