"""Conditional neural spline flow built from rational-quadratic coupling layers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rnpe import diffcore as dc
from rnpe.flows.spline import IDENTITY_DERIVATIVE_LOGIT, rq_spline

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class SplineFlowSpec:
    dim: int
    context_dim: int
    num_layers: int = 5
    bins: int = 10
    interval: tuple[float, float] = (-5.0, 5.0)
    hidden: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.bins < 1:
            raise ValueError("bins must be >= 1")
        if not self.interval[0] < self.interval[1]:
            raise ValueError("interval lower bound must be below upper bound")
        if self.num_layers < 1:
            raise ValueError("need at least one coupling layer")
        if not self.hidden:
            w = max(50, 10 * self.context_dim)
            object.__setattr__(self, "hidden", (w, w))
        if self.interval[0] != -self.interval[1]:
            raise ValueError("only symmetric intervals are supported")

    @property
    def kind(self) -> str:
        return "spline"

    @property
    def bound(self) -> float:
        return float(self.interval[1])

    @property
    def n_identity(self) -> int:
        """Coordinates passed through (and fed to the conditioner) in each layer."""
        return self.dim // 2

    @property
    def n_transformed(self) -> int:
        return self.dim - self.n_identity

    def to_dict(self) -> dict:
        return {
            "kind": "spline", "dim": self.dim, "context_dim": self.context_dim,
            "num_layers": self.num_layers, "bins": self.bins,
            "interval": list(self.interval), "hidden": list(self.hidden),
        }

    @classmethod
    def from_dict(cls, d: dict) -> SplineFlowSpec:
        return cls(d["dim"], d["context_dim"], d["num_layers"], d["bins"],
                   tuple(d["interval"]), tuple(d["hidden"]))


def init_spline_params(spec: SplineFlowSpec, rng: np.random.Generator) -> dc.ParameterVector:
    """Random hidden weights; zero output layer so every spline starts at identity."""
    k = spec.bins
    n_out = spec.n_transformed * (3 * k - 1)
    identity_bias = np.concatenate([
        np.zeros(2 * k), np.full(k - 1, IDENTITY_DERIVATIVE_LOGIT)
    ])
    arrays = {}
    for layer in range(spec.num_layers):
        sizes = [spec.n_identity + spec.context_dim, *spec.hidden]
        for j, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            arrays[f"l{layer}.w{j}"] = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
            arrays[f"l{layer}.b{j}"] = np.zeros(fan_out)
        arrays[f"l{layer}.wout"] = np.zeros((sizes[-1], n_out))
        arrays[f"l{layer}.bout"] = np.tile(identity_bias, spec.n_transformed)
    return dc.ParameterVector.pack(arrays)


def _conditioner(p: dict, layer: int, spec: SplineFlowSpec, z_id, ctx):
    """Spline parameters for the transformed block; shapes broadcast on lead axes."""
    w0 = p[f"l{layer}.w0"]
    d1 = spec.n_identity
    h = dc.matmul(ctx, w0[d1:]) + p[f"l{layer}.b0"]
    if d1:
        h = h + dc.matmul(z_id, w0[:d1])
    h = dc.tanh(h)
    for j in range(1, len(spec.hidden)):
        h = dc.tanh(dc.matmul(h, p[f"l{layer}.w{j}"]) + p[f"l{layer}.b{j}"])
    out = dc.matmul(h, p[f"l{layer}.wout"]) + p[f"l{layer}.bout"]
    k = spec.bins
    lead = dc.value_of(out).shape[:-1]
    out = dc.reshape(out, lead + (spec.n_transformed, 3 * k - 1))
    return out[..., :k], out[..., k:2 * k], out[..., 2 * k:]


def _split(z, spec):
    d1 = spec.n_identity
    return z[..., :d1], z[..., d1:]


def _reverse(z):
    n = dc.value_of(z).shape[-1]
    return dc.getitem(z, (Ellipsis, slice(n - 1, None, -1) if n > 1 else slice(None)))


def spline_forward(params, spec: SplineFlowSpec, theta, ctx):
    """Map standardized theta to base space; returns (u, sum log|det J|).

    ``params`` is a dict of named arrays/Tensors. ``theta`` (..., dim) and
    ``ctx`` (..., context_dim) broadcast on their lead axes.
    """
    z = theta
    total = 0.0
    for layer in range(spec.num_layers):
        z_id, z_tr = _split(z, spec)
        uw, uh, ud = _conditioner(params, layer, spec, z_id, ctx)
        z_tr, lad = rq_spline(z_tr, uw, uh, ud, spec.bound)
        total = total + dc.sum_(lad, axis=-1)
        if spec.n_identity:
            lead = np.broadcast_shapes(dc.value_of(z_id).shape[:-1], dc.value_of(z_tr).shape[:-1])
            z_id = _broadcast_lead(z_id, lead)
            z = dc.concat([z_id, z_tr], axis=-1)
        else:
            z = z_tr
        z = _reverse(z)
    return z, total


def spline_inverse(params, spec: SplineFlowSpec, u, ctx):
    z = u
    for layer in reversed(range(spec.num_layers)):
        z = _reverse(z)
        z_id, z_tr = _split(z, spec)
        uw, uh, ud = _conditioner(params, layer, spec, z_id, ctx)
        z_tr, _ = rq_spline(z_tr, uw, uh, ud, spec.bound, inverse=True)
        z = np.concatenate([np.asarray(z_id), np.asarray(z_tr)], axis=-1) if spec.n_identity else z_tr
    return z


def _broadcast_lead(z, lead):
    v = dc.value_of(z)
    if v.shape[:-1] == lead:
        return z
    return z + np.zeros(lead + (1,))


def spline_log_prob(params, spec: SplineFlowSpec, theta, ctx):
    u, lad = spline_forward(params, spec, theta, ctx)
    return -0.5 * dc.sum_(dc.square(u), axis=-1) - 0.5 * spec.dim * LOG_2PI + lad
