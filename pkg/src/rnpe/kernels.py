"""Backend selection for the HMC hot path.

The compiled extension ``rnpe._kernels`` is used when importable; setting
``RNPE_PURE_PYTHON=1`` forces the numpy fallback. Both expose ``Target``
with ``logp_grad`` and ``leapfrog``.
"""

from __future__ import annotations

import os

import numpy as np

from rnpe import _kernels_py

KIND_BNAF = _kernels_py.KIND_BNAF
KIND_GAUSSIAN = _kernels_py.KIND_GAUSSIAN

BACKEND = "python"
Target = _kernels_py.Target
if os.environ.get("RNPE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from rnpe._kernels import Target  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        pass


def gaussian_arrays(mean, cov) -> dict:
    """Kernel arrays for an analytic Gaussian target N(mean, cov)."""
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    _, logdet = np.linalg.slogdet(cov)
    return {
        "mean": mean,
        "prec": np.linalg.inv(cov),
        "logz": -0.5 * (mean.size * np.log(2.0 * np.pi) + logdet),
    }


def bnaf_logp_grad(arrays: dict, z) -> tuple[float, np.ndarray]:
    """Standardized-space BNAF log density and its input gradient."""
    return Target(KIND_BNAF, arrays).logp_grad(np.asarray(z, dtype=np.float64))
