"""Common task interface and the analytic Gaussian posterior."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GaussianPosterior:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.size

    def log_prob(self, theta) -> np.ndarray:
        theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
        r = theta - self.mean
        prec = np.linalg.inv(self.cov)
        _, logdet = np.linalg.slogdet(self.cov)
        q = np.einsum("ni,ij,nj->n", r, prec, r)
        return -0.5 * (q + logdet + self.dim * np.log(2.0 * np.pi))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        chol = np.linalg.cholesky(self.cov)
        return self.mean + rng.standard_normal((n, self.dim)) @ chol.T


class Task:
    """A benchmark task: prior, simulator, summaries and the observation process.

    ``simulate_observed`` produces raw data from the true data-generating
    process (the misspecified one); ``corrupt`` is the raw-data operator
    applied on top of a model simulation, which is the identity for tasks
    whose misspecification lives in the sampling distribution itself.
    """

    name: str = ""
    theta_dim: int = 0
    summary_dim: int = 0
    param_names: tuple[str, ...] = ()
    summary_names: tuple[str, ...] = ()

    def sample_prior(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def prior_log_prob(self, theta) -> np.ndarray:
        raise NotImplementedError

    def prior_moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Prior mean and standard deviation per parameter (for MSE scaling)."""
        raise NotImplementedError

    def simulate(self, theta, rng: np.random.Generator):
        raise NotImplementedError

    def simulate_observed(self, theta, rng: np.random.Generator):
        return self.corrupt(self.simulate(theta, rng), rng)

    def corrupt(self, raw, rng: np.random.Generator):
        return raw

    def summarize(self, raw) -> np.ndarray:
        raise NotImplementedError

    def simulate_summaries(self, thetas, rng: np.random.Generator) -> np.ndarray:
        """Summaries of one model simulation per row of ``thetas``."""
        thetas = np.atleast_2d(thetas)
        return np.stack([self.summarize(self.simulate(t, rng)) for t in thetas])

    def true_posterior(self, raw_observed):
        """Analytic posterior under the true data-generating process, or None."""
        return None
