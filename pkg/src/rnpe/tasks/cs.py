"""Cancer/stromal marked point process on the unit square."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from rnpe.tasks.base import Task

SUMMARY_NAMES = ("N Cancer", "N Stromal", "Mean Min Dist", "Max Min Dist")
NO_CANCER_DISTANCE = float(np.sqrt(2.0))


@dataclass(frozen=True)
class CsConfig:
    stromal_subsample: int = 50
    necrosis_prob: float = 0.75
    necrosis_radius_factor: float = 0.8

    def __post_init__(self):
        if self.stromal_subsample < 1:
            raise ValueError("stromal_subsample must be >= 1")
        if not 0.0 <= self.necrosis_prob <= 1.0:
            raise ValueError("necrosis_prob must lie in [0, 1]")
        if not 0.0 < self.necrosis_radius_factor < 1.0:
            raise ValueError("necrosis_radius_factor must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CellPattern:
    cells: np.ndarray  # (n, 2)
    cancer: np.ndarray  # (n,) bool
    parents: np.ndarray  # (k, 2)
    radii: np.ndarray  # (k,), 0 for parents without daughters
    probes: np.ndarray  # stromal cells used for the distance summaries

    @property
    def n_cancer(self) -> int:
        return int(self.cancer.sum())

    @property
    def n_stromal(self) -> int:
        return int(self.cancer.size - self.cancer.sum())


def _distances(a, b) -> np.ndarray:
    return np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1))


def label_cells(cells, parents, n_daughters) -> tuple[np.ndarray, np.ndarray]:
    """Radius to each parent's n-th nearest cell and the resulting cancer mask."""
    k = parents.shape[0]
    radii = np.zeros(k)
    cancer = np.zeros(cells.shape[0], dtype=bool)
    if k == 0 or cells.shape[0] == 0:
        return radii, cancer
    d = _distances(parents, cells)
    ds = np.sort(d, axis=1)
    for i in range(k):
        nd = int(n_daughters[i])
        if nd <= 0:
            continue
        radii[i] = ds[i, min(nd, cells.shape[0]) - 1]
        cancer |= d[i] <= radii[i]
    return radii, cancer


def cs_summaries(pattern: CellPattern) -> np.ndarray:
    cancer_pos = pattern.cells[pattern.cancer]
    if cancer_pos.shape[0] == 0:
        mean_d = max_d = NO_CANCER_DISTANCE
    elif pattern.probes.shape[0] == 0:
        mean_d = max_d = 0.0
    else:
        mins = _distances(pattern.probes, cancer_pos).min(axis=1)
        mean_d, max_d = float(mins.mean()), float(mins.max())
    return np.array([float(pattern.n_cancer), float(pattern.n_stromal), mean_d, max_d])


class CsTask(Task):
    name = "cs"
    theta_dim = 3
    summary_dim = 4
    param_names = ("lambda_c", "lambda_p", "lambda_d")
    summary_names = SUMMARY_NAMES

    low = np.array([200.0, 3.0, 10.0])
    high = np.array([1500.0, 20.0, 20.0])

    def __init__(self, cfg: CsConfig | None = None):
        self.cfg = cfg or CsConfig()

    def sample_prior(self, n, rng):
        return rng.uniform(self.low, self.high, size=(n, 3))

    def prior_log_prob(self, theta):
        t = np.atleast_2d(theta)
        ok = np.all((t >= self.low) & (t <= self.high), axis=1)
        return np.where(ok, -np.sum(np.log(self.high - self.low)), -np.inf)

    def prior_moments(self):
        return (self.low + self.high) / 2, (self.high - self.low) / np.sqrt(12.0)

    def simulate(self, theta, rng):
        lam_c, lam_p, lam_d = np.ravel(theta)
        n_c = rng.poisson(lam_c)
        n_p = rng.poisson(lam_p)
        n_d = rng.poisson(lam_d, size=n_p)
        cells = rng.uniform(size=(n_c, 2))
        parents = rng.uniform(size=(n_p, 2))
        radii, cancer = label_cells(cells, parents, n_d)
        stromal = np.flatnonzero(~cancer)
        m = min(self.cfg.stromal_subsample, stromal.size)
        probes = cells[np.sort(rng.choice(stromal, size=m, replace=False))] if m else np.zeros((0, 2))
        return CellPattern(cells, cancer, parents, radii, probes)

    def corrupt(self, raw: CellPattern, rng):
        """Necrosis: drop cancer cells within a shrunken radius of some parents."""
        k = raw.parents.shape[0]
        w = rng.random(k) < self.cfg.necrosis_prob
        if not w.any() or raw.cells.shape[0] == 0:
            return CellPattern(raw.cells.copy(), raw.cancer.copy(), raw.parents.copy(),
                               raw.radii.copy(), raw.probes.copy())
        d = _distances(raw.parents[w], raw.cells)
        inside = d <= self.cfg.necrosis_radius_factor * raw.radii[w][:, None]
        drop = raw.cancer & inside.any(axis=0)
        keep = ~drop
        return CellPattern(raw.cells[keep], raw.cancer[keep], raw.parents.copy(),
                           raw.radii.copy(), raw.probes.copy())

    def summarize(self, raw: CellPattern):
        return cs_summaries(raw)
