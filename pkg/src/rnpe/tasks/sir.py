"""SIR epidemic with a mean-reverting stochastic reproduction number."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from rnpe.tasks.base import Task

SUMMARY_NAMES = ("Mean", "Median", "Max", "Max Day", "Half Day", "Autocor")


@dataclass(frozen=True)
class SirConfig:
    eta: float = 0.05
    volatility: float = 0.05
    population: float = 100_000.0
    horizon: int = 365
    dt: float = 0.01
    initial_infected: float = 1e-4
    max_resimulations: int = 10

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        steps = 1.0 / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("1/dt must be an integer number of steps per day")

    @property
    def steps_per_day(self) -> int:
        return int(round(1.0 / self.dt))

    def to_dict(self) -> dict:
        return asdict(self)


def simulate_daily_infections(beta, gamma, cfg: SirConfig, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Euler-Maruyama over a batch; returns (n, horizon) daily new infections and a resim count.

    State is held as population fractions. R0 is reflected at zero and its
    diffusion uses sqrt(max(R0, 0)).
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=np.float64))
    gamma = np.atleast_1d(np.asarray(gamma, dtype=np.float64))
    out = np.empty((beta.size, cfg.horizon))
    todo = np.arange(beta.size)
    resims = 0
    for attempt in range(cfg.max_resimulations + 1):
        counts = _integrate(beta[todo], gamma[todo], cfg, rng)
        bad = ~np.all(np.isfinite(counts), axis=1)
        out[todo[~bad]] = counts[~bad]
        if not bad.any():
            return out, resims
        resims += int(bad.sum())
        todo = todo[bad]
    raise FloatingPointError(f"{todo.size} trajectories stayed non-finite after resimulation")


def _integrate(beta, gamma, cfg: SirConfig, rng) -> np.ndarray:
    n = beta.size
    dt = cfg.dt
    sq = np.sqrt(dt)
    with np.errstate(divide="ignore", invalid="ignore"):
        target = np.where(gamma > 0, beta / gamma, np.inf)
    s = np.full(n, 1.0 - cfg.initial_infected)
    i = np.full(n, cfg.initial_infected)
    r0 = target.copy()
    daily = np.zeros((n, cfg.horizon))
    k = cfg.steps_per_day
    for day in range(cfg.horizon):
        acc = np.zeros(n)
        for _ in range(k):
            new = np.minimum(r0 * gamma * s * i * dt, s)
            rec = np.minimum(gamma * i * dt, i + new)
            if cfg.volatility > 0:
                dw = rng.standard_normal(n) * sq
                r0 = np.abs(r0 + cfg.eta * (target - r0) * dt + cfg.volatility * np.sqrt(np.maximum(r0, 0.0)) * dw)
            else:
                r0 = r0 + cfg.eta * (target - r0) * dt
            s = s - new
            i = i + new - rec
            acc += new
        daily[:, day] = acc
    return np.rint(daily * cfg.population)


def sir_summaries(counts) -> tuple[np.ndarray, bool]:
    """Six summaries of one daily series and whether Autocor was degenerate."""
    x = np.asarray(counts, dtype=np.float64)
    total = x.sum()
    cum = np.cumsum(x)
    half_day = int(np.argmax(cum >= 0.5 * total)) + 1
    dev = x - x.mean()
    denom = float(dev @ dev)
    degenerate = not denom > 0
    autocor = 0.0 if degenerate else float(dev[:-1] @ dev[1:]) / denom
    vec = np.array([x.mean(), np.median(x), x.max(), float(np.argmax(x) + 1), float(half_day), autocor])
    return vec, degenerate


def weekend_delay(counts, reduction: float = 0.05) -> np.ndarray:
    """Withhold a fraction of Saturday/Sunday counts and report it the next Monday (day 1 is Monday)."""
    x = np.asarray(counts, dtype=np.float64).copy()
    n = x.shape[-1]
    out = x.copy()
    for d in range(n):
        wd = d % 7
        if wd in (5, 6):
            held = reduction * x[..., d]
            out[..., d] -= held
            monday = d + (7 - wd)
            if monday < n:
                out[..., monday] += held
    return out


class SirTask(Task):
    name = "sir"
    theta_dim = 2
    summary_dim = 6
    param_names = ("beta", "gamma")
    summary_names = SUMMARY_NAMES

    def __init__(self, cfg: SirConfig | None = None, upper: float = 0.5, reduction: float = 0.05):
        self.cfg = cfg or SirConfig()
        self.upper = upper
        self.reduction = reduction
        self.degenerate_count = 0
        self.resim_count = 0

    def sample_prior(self, n, rng):
        out = np.empty((0, 2))
        while out.shape[0] < n:
            cand = rng.uniform(0.0, self.upper, size=(2 * (n - out.shape[0]) + 8, 2))
            out = np.concatenate([out, cand[cand[:, 1] <= cand[:, 0]]])
        return out[:n]

    def prior_log_prob(self, theta):
        t = np.atleast_2d(theta)
        ok = (t[:, 0] >= 0) & (t[:, 0] <= self.upper) & (t[:, 1] >= 0) & (t[:, 1] <= t[:, 0])
        return np.where(ok, np.log(2.0 / self.upper ** 2), -np.inf)

    def prior_moments(self):
        a = self.upper
        sd = a / np.sqrt(18.0)
        return np.array([2 * a / 3, a / 3]), np.array([sd, sd])

    def simulate(self, theta, rng):
        theta = np.ravel(theta)
        counts, resims = simulate_daily_infections(theta[:1], theta[1:2], self.cfg, rng)
        self.resim_count += resims
        return counts[0]

    def corrupt(self, raw, rng):
        return weekend_delay(raw, self.reduction)

    def summarize(self, raw):
        vec, degenerate = sir_summaries(raw)
        self.degenerate_count += int(degenerate)
        return vec

    def simulate_summaries(self, thetas, rng, chunk: int = 2000):
        thetas = np.atleast_2d(thetas)
        rows = []
        for s in range(0, thetas.shape[0], chunk):
            t = thetas[s:s + chunk]
            counts, resims = simulate_daily_infections(t[:, 0], t[:, 1], self.cfg, rng)
            self.resim_count += resims
            rows.extend(self.summarize(c) for c in counts)
        return np.stack(rows)
