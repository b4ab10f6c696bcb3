"""Least-squares exponent fits on transformed scaling series."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InsufficientPoints


class Transform(str, enum.Enum):
    LOG_NEGLOG_VS_LOG = "log_neglog_vs_log"   # log(-log v) against log n
    LOG_VS_LOG = "log_vs_log"                 # log v against log n
    RATIO_BAND = "ratio_band"                 # log v against log log n


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    points_used: int
    transform: Transform

    def to_dict(self) -> dict:
        d = asdict(self)
        d["transform"] = self.transform.value
        return d


def _coords(n: np.ndarray, v: np.ndarray, transform: Transform):
    if np.any(n <= 0):
        raise ValueError("abscissae must be positive")
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise ValueError("values must be positive and finite")
    if transform is Transform.LOG_NEGLOG_VS_LOG:
        if np.any(v >= 1):
            raise ValueError("log_neglog_vs_log needs values in (0, 1)")
        return np.log(n), np.log(-np.log(v))
    if transform is Transform.LOG_VS_LOG:
        return np.log(n), np.log(v)
    if np.any(n <= 1):
        raise ValueError("ratio_band needs abscissae above 1")
    return np.log(np.log(n)), np.log(v)


def fit_exponent(series, transform) -> FitResult:
    """Fit a line to the transformed ``(n, value)`` pairs; the slope is the exponent."""
    transform = Transform(transform)
    pts = [(float(n), float(v)) for n, v in series]
    if len(pts) < 3:
        raise InsufficientPoints(f"need at least 3 points, got {len(pts)}")
    n = np.array([p[0] for p in pts])
    v = np.array([p[1] for p in pts])
    x, y = _coords(n, v, transform)
    if np.ptp(x) == 0:
        raise InsufficientPoints("all abscissae coincide")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, min(1.0, 1.0 - float(np.sum(resid ** 2)) / ss_tot))
    return FitResult(float(slope), float(intercept), r2, len(pts), transform)


def doubling_schedule(start: int, stop: int) -> list[int]:
    out, n = [], start
    while n <= stop:
        out.append(n)
        n *= 2
    return out


def cube_schedule(j_max: int, j_min: int = 1) -> list[int]:
    """Depths ``j**3 + 1``."""
    return [j ** 3 + 1 for j in range(j_min, j_max + 1)]
