"""Block neural autoregressive flow with one hidden block layer.

The density-evaluation direction maps data to the standard Gaussian base:
``u = W2 act(W1 x + b1) + b2`` where both weight matrices are block
lower-triangular with strictly positive diagonal blocks. Because each
output coordinate depends only on inputs at or before its own index, the
Jacobian is triangular and its log-determinant is a per-coordinate
log-sum-exp over the diagonal block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rnpe import diffcore as dc

LOG_2PI = float(np.log(2.0 * np.pi))
LOG4 = float(np.log(4.0))

ACTIVATIONS = ("leaky_tanh", "tanh", "identity")


@dataclass(frozen=True)
class BnafSpec:
    dim: int
    block: int = 8
    activation: str = "leaky_tanh"
    cutoff: float = 1.0

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.dim < 1 or self.block < 1:
            raise ValueError("dim and block must be positive")

    @property
    def kind(self) -> str:
        return "bnaf"

    @property
    def hidden_width(self) -> int:
        return self.dim * self.block

    @property
    def effective_cutoff(self) -> float:
        """Activation switch point: inf for pure tanh, 0 for identity."""
        if self.activation == "tanh":
            return float("inf")
        if self.activation == "identity":
            return 0.0
        return float(self.cutoff)

    def to_dict(self) -> dict:
        return {"kind": "bnaf", "dim": self.dim, "block": self.block,
                "activation": self.activation, "cutoff": self.cutoff}

    @classmethod
    def from_dict(cls, d: dict) -> BnafSpec:
        return cls(d["dim"], d["block"], d["activation"], d["cutoff"])


def masks(spec: BnafSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(diag1, lower1, diag2, lower2) boolean masks for W1 (DH, D) and W2 (D, DH)."""
    d, h = spec.dim, spec.block
    row_block = np.repeat(np.arange(d), h)
    col = np.arange(d)
    diag1 = row_block[:, None] == col[None, :]
    lower1 = row_block[:, None] > col[None, :]
    diag2 = diag1.T.copy()
    lower2 = (row_block[None, :] < col[:, None])
    return diag1, lower1, diag2, lower2


def init_bnaf_params(spec: BnafSpec, rng: np.random.Generator) -> dc.ParameterVector:
    d, h = spec.dim, spec.block
    diag1, lower1, diag2, lower2 = masks(spec)
    w1 = rng.normal(0.0, 0.3, size=(d * h, d)) * diag1 + rng.normal(0.0, 0.1 / np.sqrt(d), size=(d * h, d)) * lower1
    w2 = (rng.normal(0.0, 0.3, size=(d, d * h)) - 0.5 * np.log(h)) * diag2
    w2 = w2 + rng.normal(0.0, 0.1 / np.sqrt(d * h), size=(d, d * h)) * lower2
    b1 = np.tile(np.linspace(-2.0, 2.0, h), d) + rng.normal(0.0, 0.1, size=d * h)
    b2 = np.zeros(d)
    return dc.ParameterVector.pack({"w1": w1, "b1": b1, "w2": w2, "b2": b2})


def identity_bnaf_params(spec: BnafSpec) -> dc.ParameterVector:
    """Weights making the block network the identity map (with ``activation='identity'``)."""
    d, h = spec.dim, spec.block
    diag1, _, diag2, _ = masks(spec)
    w1 = np.where(diag1, -np.log(h), 0.0)
    w2 = np.where(diag2, 0.0, 0.0)
    return dc.ParameterVector.pack({"w1": w1, "b1": np.zeros(d * h), "w2": w2, "b2": np.zeros(d)})


def effective_weights(p: dict, spec: BnafSpec):
    """Masked weights with exponentiated diagonal blocks."""
    diag1, lower1, diag2, lower2 = masks(spec)
    w1 = dc.where(diag1, dc.exp(p["w1"]), dc.where(lower1, p["w1"], 0.0))
    w2 = dc.where(diag2, dc.exp(p["w2"]), dc.where(lower2, p["w2"], 0.0))
    return w1, w2


def diag_log_weights(p: dict, spec: BnafSpec):
    """Log of the diagonal-block entries as (D, H) arrays for W1 and W2."""
    d, h = spec.dim, spec.block
    rows = np.arange(d * h).reshape(d, h)
    cols = np.repeat(np.arange(d), h).reshape(d, h)
    return dc.getitem(p["w1"], (rows, cols)), dc.getitem(p["w2"], (cols, rows))


def activation(x, cutoff: float):
    """tanh on [-c, c], continued linearly with matching slope outside."""
    if cutoff == 0.0:
        return x
    xv = dc.value_of(x)
    if np.isinf(cutoff):
        return dc.tanh(x)
    inside = np.abs(xv) <= cutoff
    sgn = np.sign(xv)
    t_c = np.tanh(cutoff)
    tail = sgn * t_c + (1.0 - t_c * t_c) * (x - sgn * cutoff)
    return dc.where(inside, dc.tanh(dc.where(inside, x, 0.0)), tail)


def log_activation_derivative(x, cutoff: float):
    if cutoff == 0.0:
        return dc.mul(x, 0.0)
    xv = dc.value_of(x)
    a = dc.abs_(x)
    # log sech^2(x) = log 4 - 2|x| - 2 softplus(-2|x|)
    inner = LOG4 - 2.0 * a - 2.0 * dc.softplus(-2.0 * a)
    if np.isinf(cutoff):
        return inner
    t_c = np.tanh(cutoff)
    return dc.where(np.abs(xv) <= cutoff, inner, float(np.log(1.0 - t_c * t_c)))


def bnaf_forward(params: dict, spec: BnafSpec, x):
    """Return (u, log|det J|) for x of shape (..., D) in standardized space."""
    w1, w2 = effective_weights(params, spec)
    lw1, lw2 = diag_log_weights(params, spec)
    c = spec.effective_cutoff
    pre = dc.matmul(x, dc.swapaxes(w1, 0, 1)) + params["b1"]
    act = activation(pre, c)
    u = dc.matmul(act, dc.swapaxes(w2, 0, 1)) + params["b2"]
    lead = dc.value_of(pre).shape[:-1]
    lact = dc.reshape(log_activation_derivative(pre, c), lead + (spec.dim, spec.block))
    ladj = dc.logsumexp(lact + lw1 + lw2, axis=-1)
    return u, dc.sum_(ladj, axis=-1)


def bnaf_log_prob(params: dict, spec: BnafSpec, x):
    u, lad = bnaf_forward(params, spec, x)
    return -0.5 * dc.sum_(dc.square(u), axis=-1) - 0.5 * spec.dim * LOG_2PI + lad


def kernel_arrays(pv: dc.ParameterVector, spec: BnafSpec) -> dict:
    """Plain-array view used by the compiled/fallback HMC kernels."""
    p = pv.unpack()
    w1, w2 = effective_weights(p, spec)
    lw1, lw2 = diag_log_weights(p, spec)
    return {
        "w1": np.ascontiguousarray(w1, dtype=np.float64),
        "b1": np.ascontiguousarray(p["b1"], dtype=np.float64),
        "w2": np.ascontiguousarray(w2, dtype=np.float64),
        "b2": np.ascontiguousarray(p["b2"], dtype=np.float64),
        "ldiag": np.ascontiguousarray(np.asarray(lw1) + np.asarray(lw2), dtype=np.float64),
        "block": spec.block,
        "cutoff": spec.effective_cutoff,
    }
