"""Maximum-likelihood fitting of the spline and block autoregressive flows."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from rnpe import diffcore as dc
from rnpe.flows.bnaf import BnafSpec, bnaf_log_prob, init_bnaf_params
from rnpe.flows.coupling import SplineFlowSpec, init_spline_params, spline_log_prob
from rnpe.flows.model import FlowModel
from rnpe.standardize import Standardizer, fit_standardizer

__all__ = [
    "Adam",
    "TrainConfig",
    "TrainingDivergedError",
    "fit_density_estimator",
    "fit_standardizer",
    "write_training_curve",
]

log = logging.getLogger(__name__)

BNAF_LEARNING_RATE = 1e-2
SPLINE_LEARNING_RATE = 5e-4


class TrainingDivergedError(FloatingPointError):
    def __init__(self, epoch: int, batch: int, detail: str = ""):
        msg = f"non-finite loss at epoch {epoch}, batch {batch}"
        super().__init__(msg + (f" ({detail})" if detail else ""))
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    max_epochs: int = 50
    patience: int = 5
    validation_fraction: float = 0.10
    learning_rate: float | None = None  # None picks the per-family default
    rng_seed: int = 0
    clip_norm: float | None = 5.0

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.patience > self.max_epochs:
            raise ValueError("patience cannot exceed max_epochs")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be positive")

    def lr_for(self, spec) -> float:
        if self.learning_rate is not None:
            return float(self.learning_rate)
        return BNAF_LEARNING_RATE if isinstance(spec, BnafSpec) else SPLINE_LEARNING_RATE

    def to_dict(self) -> dict:
        return asdict(self)


class Adam:
    """Adaptive-moment gradient descent on a flat parameter vector."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _std_log_prob(spec, p, z, ctx):
    if isinstance(spec, SplineFlowSpec):
        return spline_log_prob(p, spec, z, ctx)
    return bnaf_log_prob(p, spec, z)


def _mean_nll(pv: dc.ParameterVector, spec, z, ctx, chunk: int = 4096) -> float:
    """Mean negative log-likelihood in standardized space (no tape)."""
    p = pv.unpack()
    total = 0.0
    for s in range(0, z.shape[0], chunk):
        c = None if ctx is None else ctx[s:s + chunk]
        total -= float(np.sum(_std_log_prob(spec, p, z[s:s + chunk], c)))
    return total / z.shape[0]


def write_training_curve(curve: list[dict], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_nll", "val_nll"])
        for row in curve:
            w.writerow([row["epoch"], repr(row["train_nll"]), repr(row["val_nll"])])


def fit_density_estimator(
    data,
    context=None,
    spec: SplineFlowSpec | BnafSpec | None = None,
    config: TrainConfig | None = None,
    *,
    input_standardizer: Standardizer | None = None,
    context_standardizer: Standardizer | None = None,
    curve_path=None,
) -> tuple[FlowModel, list[dict]]:
    """Fit q(data | context) (spline) or q(data) (BNAF) by maximum likelihood.

    Standardizers are fitted on the training split unless given. The returned
    model carries the parameters of the best validation epoch. NLL values in
    the curve are per point in raw data units (standardizer Jacobian included).
    """
    config = config or TrainConfig()
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    if data.shape[0] == 0:
        raise ValueError("cannot fit a density estimator to empty data")
    if context is not None:
        context = np.asarray(context, dtype=np.float64)
        if context.ndim == 1:
            context = context[:, None]
        if context.shape[0] != data.shape[0]:
            raise ValueError("data and context row counts differ")
    if spec is None:
        spec = BnafSpec(data.shape[1]) if context is None else SplineFlowSpec(data.shape[1], context.shape[1])
    conditional = isinstance(spec, SplineFlowSpec)
    if conditional and context is None:
        raise ValueError("a conditional spline flow needs context")
    if not conditional and context is not None:
        raise ValueError("the block autoregressive flow is unconditional")
    if data.shape[1] != spec.dim:
        raise ValueError(f"data dimension {data.shape[1]} does not match spec dimension {spec.dim}")

    rng = np.random.default_rng(config.rng_seed)
    n = data.shape[0]
    n_val = max(1, int(round(config.validation_fraction * n)))
    if n - n_val < 1:
        raise ValueError("too few rows for a train/validation split")
    order = rng.permutation(n)
    tr_idx, va_idx = order[: n - n_val], order[n - n_val:]

    in_std = input_standardizer or fit_standardizer(data[tr_idx])
    z = in_std.apply(data)
    ctx = None
    ctx_std = None
    if conditional:
        ctx_std = context_standardizer or fit_standardizer(context[tr_idx])
        ctx = ctx_std.apply(context)
    z_tr, z_va = z[tr_idx], z[va_idx]
    c_tr = None if ctx is None else ctx[tr_idx]
    c_va = None if ctx is None else ctx[va_idx]
    offset = -in_std.log_abs_det()  # raw NLL = standardized NLL + sum log scale

    pv = init_spline_params(spec, rng) if conditional else init_bnaf_params(spec, rng)
    opt = Adam(config.lr_for(spec))
    flat = pv.flat.copy()
    best_flat = flat.copy()
    best_val = _mean_nll(pv, spec, z_va, c_va) + offset
    curve = [{"epoch": 0, "train_nll": _mean_nll(pv, spec, z_tr, c_tr) + offset, "val_nll": best_val}]
    stale = 0
    bs = config.batch_size
    n_tr = z_tr.shape[0]

    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(n_tr)
        seen = 0
        run = 0.0
        for b, s in enumerate(range(0, n_tr, bs)):
            idx = perm[s:s + bs]
            zb = z_tr[idx]
            cb = None if c_tr is None else c_tr[idx]

            def loss(theta):
                lp = _std_log_prob(spec, pv.unpack(theta), zb, cb)
                return dc.neg(dc.mean(lp))

            try:
                val, grad = dc.evaluate_with_gradient(loss, flat)
            except dc.NonFiniteError as exc:
                raise TrainingDivergedError(epoch, b, str(exc)) from exc
            if not (math.isfinite(val) and np.all(np.isfinite(grad))):
                raise TrainingDivergedError(epoch, b)
            if config.clip_norm is not None:
                gn = float(np.sqrt(grad @ grad))
                if gn > config.clip_norm:
                    grad = grad * (config.clip_norm / gn)
            flat = opt.step(flat, grad)
            run += val * idx.size
            seen += idx.size
        val_nll = _mean_nll(pv.with_flat(flat), spec, z_va, c_va) + offset
        if not math.isfinite(val_nll):
            raise TrainingDivergedError(epoch, -1, "validation loss")
        curve.append({"epoch": epoch, "train_nll": run / seen + offset, "val_nll": val_nll})
        log.debug("epoch %d train %.4f val %.4f", epoch, run / seen + offset, val_nll)
        if val_nll < best_val:
            best_val = val_nll
            best_flat = flat.copy()
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    model = FlowModel(spec, pv.with_flat(best_flat), in_std, ctx_std)
    if curve_path is not None:
        write_training_curve(curve, curve_path)
    return model, curve
