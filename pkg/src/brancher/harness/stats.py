"""Estimates with standard errors and goodness-of-fit statistics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats as sps


class TooFewSamples(ValueError):
    pass


@dataclass(frozen=True)
class EstimateCI:
    """Monte Carlo estimate: mean, standard error, replicate count and an
    optional systematic sidecar (truncation or plug-in capacity error)."""

    mean: float
    se: float
    n: int
    systematic: float | None = None

    def __post_init__(self) -> None:
        if self.se < 0 or not np.isfinite(self.se):
            raise ValueError(f"invalid standard error {self.se}")
        if self.n < 1:
            raise ValueError("an estimate needs at least one replicate")

    @classmethod
    def from_samples(cls, x, systematic: float | None = None) -> "EstimateCI":
        x = np.asarray(x, dtype=float)
        n = len(x)
        se = float(x.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return cls(float(x.mean()), se, n, systematic)

    @classmethod
    def from_binomial(cls, k: int, n: int, systematic: float | None = None) -> "EstimateCI":
        p = k / n
        return cls(p, float(np.sqrt(p * (1 - p) / n)), n, systematic)

    @property
    def total_se(self) -> float:
        return float(np.hypot(self.se, self.systematic or 0.0))

    def interval(self, z: float = 1.96) -> tuple[float, float]:
        return self.mean - z * self.se, self.mean + z * self.se

    def scaled(self, c: float) -> "EstimateCI":
        sys = None if self.systematic is None else abs(c) * self.systematic
        return EstimateCI(c * self.mean, abs(c) * self.se, self.n, sys)

    def as_dict(self) -> dict:
        return {"mean": self.mean, "se": self.se, "n": self.n,
                "systematic": self.systematic}


def within(a: float, b: float, se: float, k: float = 3.0) -> bool:
    return abs(a - b) <= k * se


def combined_se(*ses: float) -> float:
    return float(np.sqrt(sum(s * s for s in ses)))


def ks_statistic(samples, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """sup_x |F_n(x) - F(x)|, checking both sides of every sample jump so
    that ties and discrete targets are handled exactly."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise TooFewSamples("need at least two samples")
    vals, counts = np.unique(x, return_counts=True)
    n = x.size
    right = np.cumsum(counts) / n
    left = right - counts / n
    f_right = np.asarray(cdf(vals), dtype=float)
    f_left = np.asarray(cdf(np.nextafter(vals, -np.inf)), dtype=float)
    return float(max(np.max(np.abs(right - f_right)),
                     np.max(np.abs(left - f_left))))


def gumbel_cdf(z):
    return np.exp(-np.exp(-np.asarray(z, dtype=float)))


def exp1_cdf(z):
    z = np.asarray(z, dtype=float)
    return np.where(z > 0, -np.expm1(-np.maximum(z, 0.0)), 0.0)


def chi_square_pvalue(counts, probs, min_expected: float = 5.0) -> float:
    """Pearson goodness of fit, pooling sparse bins into their neighbour."""
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    n = counts.sum()
    exp_ = probs / probs.sum() * n
    obs_b, exp_b = [], []
    o = e = 0.0
    for ci, ei in zip(counts, exp_):
        o += ci
        e += ei
        if e >= min_expected:
            obs_b.append(o)
            exp_b.append(e)
            o = e = 0.0
    if e > 0 or o > 0:
        if exp_b:
            obs_b[-1] += o
            exp_b[-1] += e
        else:
            obs_b.append(o)
            exp_b.append(e)
    if len(obs_b) < 2:
        return 1.0
    return float(sps.chisquare(obs_b, exp_b).pvalue)


def loglog_slope(x, y, se=None) -> tuple[float, float]:
    """Weighted least-squares slope of log y on log x with its standard error
    (relative errors se/y propagate as the log-scale errors)."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    if se is None:
        w = np.ones_like(lx)
    else:
        rel = np.asarray(se, dtype=float) / np.asarray(y, dtype=float)
        w = 1.0 / np.maximum(rel, 1e-12) ** 2
    W = w.sum()
    mx = (w * lx).sum() / W
    my = (w * ly).sum() / W
    sxx = (w * (lx - mx) ** 2).sum()
    slope = (w * (lx - mx) * (ly - my)).sum() / sxx
    slope_se = float(np.sqrt(1.0 / sxx)) if se is not None else float("nan")
    return float(slope), slope_se
