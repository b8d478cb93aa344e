from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from rnpe import diffcore as dc
from rnpe.flows.bnaf import BnafSpec, bnaf_log_prob, kernel_arrays
from rnpe.flows.coupling import SplineFlowSpec, spline_inverse, spline_log_prob
from rnpe.standardize import Standardizer

FORMAT_TAG = "rnpe-flow/1"


class FlowUsageError(ValueError):
    pass


@dataclass(frozen=True)
class FlowModel:
    """A trained density estimator with its standardizers (immutable)."""

    spec: SplineFlowSpec | BnafSpec
    params: dc.ParameterVector
    input_standardizer: Standardizer
    context_standardizer: Standardizer | None = None

    @property
    def conditional(self) -> bool:
        return isinstance(self.spec, SplineFlowSpec)

    @property
    def dim(self) -> int:
        return self.spec.dim

    def _std_log_prob(self, z, ctx=None, params=None):
        p = self.params.unpack() if params is None else params
        if self.conditional:
            return spline_log_prob(p, self.spec, z, ctx)
        return bnaf_log_prob(p, self.spec, z)

    def _check(self, point, context):
        point = np.asarray(point, dtype=np.float64)
        if point.shape[-1] != self.dim:
            raise FlowUsageError(f"expected points of dimension {self.dim}, got {point.shape[-1]}")
        if self.conditional:
            if context is None:
                raise FlowUsageError("conditional flow needs a context")
            context = np.asarray(context, dtype=np.float64)
            if context.shape[-1] != self.spec.context_dim:
                raise FlowUsageError(
                    f"expected context of dimension {self.spec.context_dim}, got {context.shape[-1]}")
        elif context is not None:
            raise FlowUsageError("unconditional flow takes no context")
        return point, context

    def log_prob(self, point, context=None) -> np.ndarray:
        """Raw-space log density; batch axes of point and context broadcast."""
        point, context = self._check(point, context)
        z = self.input_standardizer.apply(point)
        ctx = None if context is None else self.context_standardizer.apply(context)
        out = self._std_log_prob(z, ctx)
        return np.asarray(out) + self.input_standardizer.log_abs_det()

    def sample(self, n: int, context, rng: np.random.Generator) -> np.ndarray:
        if not self.conditional:
            raise FlowUsageError("the block autoregressive flow is evaluation-only; it cannot sample")
        _, context = self._check(np.zeros(self.dim), context)
        ctx = self.context_standardizer.apply(context)
        u = rng.standard_normal((n, self.dim))
        z = spline_inverse(self.params.unpack(), self.spec, u, ctx)
        return self.input_standardizer.invert(np.asarray(z))

    def sample_per_context(self, contexts, rng: np.random.Generator) -> np.ndarray:
        """One draw for each row of ``contexts``."""
        contexts = np.atleast_2d(np.asarray(contexts, dtype=np.float64))
        if not self.conditional:
            raise FlowUsageError("the block autoregressive flow is evaluation-only; it cannot sample")
        ctx = self.context_standardizer.apply(contexts)
        u = rng.standard_normal((contexts.shape[0], self.dim))
        z = spline_inverse(self.params.unpack(), self.spec, u, ctx)
        return self.input_standardizer.invert(np.asarray(z))

    def mixture_log_prob(self, points, contexts, chunk: int = 256) -> np.ndarray:
        """log (1/M) sum_m q(point | context_m) for every point."""
        points, _ = self._check(np.atleast_2d(points), np.atleast_2d(contexts))
        contexts = np.atleast_2d(np.asarray(contexts, dtype=np.float64))
        ctx = self.context_standardizer.apply(contexts)[None, :, :]
        z_all = self.input_standardizer.apply(points)
        p = self.params.unpack()
        out = np.empty(points.shape[0])
        for s in range(0, points.shape[0], chunk):
            z = z_all[s:s + chunk, None, :]
            lp = np.asarray(self._std_log_prob(z, ctx, p))
            out[s:s + chunk] = dc.logsumexp(lp, axis=1) - np.log(contexts.shape[0])
        return out + self.input_standardizer.log_abs_det()

    def grad_log_prob_input(self, point) -> np.ndarray:
        """d log q(x) / dx in raw space (unconditional flow only)."""
        from rnpe import kernels

        if self.conditional:
            raise FlowUsageError("input gradient is provided for the marginal flow only")
        point, _ = self._check(point, None)
        z = self.input_standardizer.apply(point)
        arrays = kernel_arrays(self.params, self.spec)
        _, g = kernels.bnaf_logp_grad(arrays, np.ascontiguousarray(z, dtype=np.float64))
        return np.asarray(g) / self.input_standardizer.scale

    def kernel_arrays(self) -> dict:
        if self.conditional:
            raise FlowUsageError("kernel arrays exist for the marginal flow only")
        return kernel_arrays(self.params, self.spec)

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.params.save(directory / "params.bin")
        meta = {
            "format": FORMAT_TAG,
            "spec": self.spec.to_dict(),
            "input_standardizer": self.input_standardizer.to_dict(),
            "context_standardizer": (None if self.context_standardizer is None
                                     else self.context_standardizer.to_dict()),
        }
        (directory / "model.json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    @classmethod
    def load(cls, directory) -> FlowModel:
        directory = Path(directory)
        meta = json.loads((directory / "model.json").read_text())
        if meta.get("format") != FORMAT_TAG:
            raise ValueError(f"unsupported model format {meta.get('format')!r}")
        spec_d = meta["spec"]
        spec = SplineFlowSpec.from_dict(spec_d) if spec_d["kind"] == "spline" else BnafSpec.from_dict(spec_d)
        ctx = meta["context_standardizer"]
        return cls(
            spec,
            dc.ParameterVector.load(directory / "params.bin"),
            Standardizer.from_dict(meta["input_standardizer"]),
            None if ctx is None else Standardizer.from_dict(ctx),
        )


def flow_log_prob(model: FlowModel, point, context=None):
    return model.log_prob(point, context)


def flow_sample(model: FlowModel, n: int, context, rng: np.random.Generator):
    return model.sample(n, context, rng)


def flow_grad_log_prob_input(model: FlowModel, point):
    return model.grad_log_prob_input(point)
