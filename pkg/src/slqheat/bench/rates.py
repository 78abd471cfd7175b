"""Log-log least-squares rate fits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class RateResult:
    pairs: tuple[tuple[float, float], ...]
    slope: float
    halfwidth: float  # 95% confidence half-width of the slope
    degenerate: bool = False

    @classmethod
    def degenerate_of(cls, pairs: Sequence[tuple[float, float]]) -> "RateResult":
        return cls(tuple((float(r), float(e)) for r, e in pairs), float("nan"), float("nan"), True)


def fit_rate(pairs: Sequence[tuple[float, float]], confidence: float = 0.95) -> RateResult:
    """Slope of log(error) against log(resolution) by ordinary least squares."""
    pairs = [(float(r), float(e)) for r, e in pairs]
    if len(pairs) < 3:
        raise ValueError(f"need at least 3 (resolution, error) pairs, got {len(pairs)}")
    res = np.array([p[0] for p in pairs])
    err = np.array([p[1] for p in pairs])
    if np.any(res <= 0) or np.any(err <= 0) or not np.all(np.isfinite(err)):
        raise ValueError("resolutions and errors must be positive and finite")
    fit = stats.linregress(np.log(res), np.log(err))
    t = stats.t.ppf(0.5 + 0.5 * confidence, len(pairs) - 2)
    return RateResult(tuple(pairs), float(fit.slope), float(t * fit.stderr))
