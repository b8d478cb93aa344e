from __future__ import annotations

import numpy as np

from rnpe.tasks.base import GaussianPosterior, Task


class GaussianLinearTask(Task):
    """x ~ N(theta, 0.1 I) in 10-d; observations carry variance 0.2."""

    name = "gaussian_linear"
    theta_dim = 10
    summary_dim = 10

    def __init__(self, dim: int = 10, prior_var: float = 0.1, sim_var: float = 0.1,
                 observed_var: float = 0.2):
        self.theta_dim = self.summary_dim = dim
        self.param_names = tuple(f"theta{j + 1}" for j in range(dim))
        self.summary_names = tuple(f"x{j + 1}" for j in range(dim))
        self.prior_var = prior_var
        self.sim_var = sim_var
        self.observed_var = observed_var

    def sample_prior(self, n, rng):
        return rng.normal(0.0, np.sqrt(self.prior_var), size=(n, self.theta_dim))

    def prior_log_prob(self, theta):
        t = np.atleast_2d(theta)
        return -0.5 * np.sum(t * t / self.prior_var + np.log(2 * np.pi * self.prior_var), axis=1)

    def prior_moments(self):
        return np.zeros(self.theta_dim), np.full(self.theta_dim, np.sqrt(self.prior_var))

    def simulate(self, theta, rng):
        theta = np.ravel(theta)
        return theta + rng.normal(0.0, np.sqrt(self.sim_var), size=theta.size)

    def simulate_observed(self, theta, rng):
        theta = np.ravel(theta)
        return theta + rng.normal(0.0, np.sqrt(self.observed_var), size=theta.size)

    def summarize(self, raw):
        return np.asarray(raw, dtype=np.float64).copy()

    def simulate_summaries(self, thetas, rng):
        thetas = np.atleast_2d(thetas)
        return thetas + rng.normal(0.0, np.sqrt(self.sim_var), size=thetas.shape)

    def true_posterior(self, raw_observed):
        y = np.asarray(raw_observed, dtype=np.float64)
        prec = 1.0 / self.prior_var + 1.0 / self.observed_var
        mean = (y / self.observed_var) / prec
        return GaussianPosterior(mean, np.eye(y.size) / prec)
