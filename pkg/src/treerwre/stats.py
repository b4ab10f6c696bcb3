"""Small Monte Carlo summaries shared across modules."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import EmptySample


class Estimate(NamedTuple):
    value: float
    stderr: float

    def within(self, target: float, sigmas: float = 3.0) -> bool:
        return abs(self.value - target) <= sigmas * self.stderr

    def __str__(self):
        return f"{self.value:.6g} +/- {self.stderr:.2g}"


def mean_stderr(samples) -> Estimate:
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise EmptySample("no samples")
    if x.size == 1:
        return Estimate(float(x[0]), math.inf)
    return Estimate(float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)))


def binomial_estimate(successes: int, trials: int) -> Estimate:
    if trials <= 0:
        raise EmptySample("no trials")
    p = successes / trials
    return Estimate(p, math.sqrt(p * (1.0 - p) / trials))


def agree(a: Estimate, b: Estimate, sigmas: float = 3.0) -> bool:
    """Two estimates agree within ``sigmas`` combined standard errors."""
    return abs(a.value - b.value) <= sigmas * math.hypot(a.stderr, b.stderr)
