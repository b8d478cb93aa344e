from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateStatisticError(ValueError):
    """A summary statistic is constant across the data and cannot be standardised."""

    def __init__(self, dim: int):
        super().__init__(f"dimension {dim} is constant; degenerate summary statistic")
        self.dim = dim


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.scale) <= 0):
            raise ValueError("standardizer scales must be strictly positive")

    @property
    def dim(self) -> int:
        return int(np.asarray(self.mean).size)

    @classmethod
    def identity(cls, dim: int) -> Standardizer:
        return cls(np.zeros(dim), np.ones(dim))

    def apply(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.scale

    def invert(self, z):
        return np.asarray(z, dtype=np.float64) * self.scale + self.mean

    def log_abs_det(self) -> float:
        """log |d standardized / d raw|."""
        return float(-np.sum(np.log(self.scale)))

    def to_dict(self) -> dict:
        return {"mean": [float(v) for v in self.mean], "scale": [float(v) for v in self.scale]}

    @classmethod
    def from_dict(cls, d: dict) -> Standardizer:
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["scale"], dtype=np.float64))


def fit_standardizer(data) -> Standardizer:
    """Per-dimension mean and (population) standard deviation."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    if data.shape[0] < 2:
        raise ValueError("need at least two rows to fit a standardizer")
    mean = data.mean(axis=0)
    scale = data.std(axis=0)
    for j in range(data.shape[1]):
        if not scale[j] > 0 or np.all(data[:, j] == data[0, j]):
            raise DegenerateStatisticError(j)
    return Standardizer(mean, scale)
