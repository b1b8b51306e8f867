"""Mergeable moment accumulators and log-log fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["RunningMoments", "loglog_fit"]


@dataclass
class RunningMoments:
    """Count, mean and centred second moment, elementwise over a fixed shape.

    ``merge`` uses the pairwise update of Chan et al., so combining blocks in
    a fixed order gives the same result regardless of how many workers
    produced them.
    """

    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def empty(cls, shape=()) -> "RunningMoments":
        return cls(0, np.zeros(shape), np.zeros(shape))

    @classmethod
    def from_samples(cls, x, axis: int = 0) -> "RunningMoments":
        x = np.asarray(x, dtype=float)
        n = x.shape[axis]
        if n == 0:
            return cls.empty(np.delete(x.shape, axis))
        mean = x.mean(axis=axis)
        m2 = ((x - np.expand_dims(mean, axis)) ** 2).sum(axis=axis)
        return cls(n, mean, m2)

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        if other.count == 0:
            return RunningMoments(self.count, np.copy(self.mean), np.copy(self.m2))
        if self.count == 0:
            return RunningMoments(other.count, np.copy(other.mean), np.copy(other.m2))
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + delta**2 * (self.count * other.count / n)
        return RunningMoments(n, mean, m2)

    @property
    def variance(self):
        if self.count < 2:
            return np.zeros_like(self.mean)
        return self.m2 / (self.count - 1)

    @property
    def std_error(self):
        if self.count < 2:
            return np.zeros_like(self.mean)
        return np.sqrt(self.variance / self.count)


def loglog_fit(x, y) -> tuple[float, float]:
    """Least-squares slope and intercept of log|y| against log x."""
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    if x.size < 2:
        return float("nan"), float("nan")
    with np.errstate(divide="ignore"):
        ly = np.log(y)
    if not np.all(np.isfinite(ly)):
        return float("nan"), float("nan")
    slope, intercept = np.polyfit(np.log(x), ly, 1)
    return float(slope), float(intercept)
