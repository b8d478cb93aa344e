from __future__ import annotations

import numpy as np

from rnpe.tasks.base import GaussianPosterior, Task


class GaussianTask(Task):
    """100 draws from N(mu, 1); observations drawn with variance 2 instead."""

    name = "gaussian"
    theta_dim = 1
    summary_dim = 2
    param_names = ("mu",)
    summary_names = ("Mean", "Variance")

    def __init__(self, n_obs: int = 100, prior_var: float = 25.0, sim_var: float = 1.0,
                 observed_var: float = 2.0):
        self.n_obs = n_obs
        self.prior_var = prior_var
        self.sim_var = sim_var
        self.observed_var = observed_var

    def sample_prior(self, n, rng):
        return rng.normal(0.0, np.sqrt(self.prior_var), size=(n, 1))

    def prior_log_prob(self, theta):
        t = np.atleast_2d(theta)[:, 0]
        return -0.5 * (t * t / self.prior_var + np.log(2 * np.pi * self.prior_var))

    def prior_moments(self):
        return np.zeros(1), np.array([np.sqrt(self.prior_var)])

    def simulate(self, theta, rng):
        mu = float(np.ravel(theta)[0])
        return rng.normal(mu, np.sqrt(self.sim_var), size=self.n_obs)

    def simulate_observed(self, theta, rng):
        mu = float(np.ravel(theta)[0])
        return rng.normal(mu, np.sqrt(self.observed_var), size=self.n_obs)

    def summarize(self, raw):
        raw = np.asarray(raw, dtype=np.float64)
        return np.array([raw.mean(), raw.var(ddof=1)])

    def simulate_summaries(self, thetas, rng):
        mu = np.atleast_2d(thetas)[:, :1]
        raw = rng.normal(mu, np.sqrt(self.sim_var), size=(mu.shape[0], self.n_obs))
        return np.stack([raw.mean(axis=1), raw.var(axis=1, ddof=1)], axis=1)

    def true_posterior(self, raw_observed):
        raw = np.asarray(raw_observed, dtype=np.float64)
        v = 1.0 / (1.0 / self.prior_var + raw.size / self.observed_var)
        m = v * raw.size / self.observed_var * raw.mean()
        return GaussianPosterior(np.array([m]), np.array([[v]]))
