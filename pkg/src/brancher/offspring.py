"""Critical offspring laws and the laws derived from them."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import exp, factorial
from typing import Mapping

import numpy as np

MASS_TOL = 1e-12
MEAN_TOL = 1e-9
PRESETS = ("binary", "geometric_half", "poisson1")


class LawError(ValueError):
    """Base class for invalid offspring laws."""


class MeanNotOne(LawError):
    pass


class ZeroVariance(LawError):
    pass


class NegativeMass(LawError):
    pass


@dataclass(frozen=True)
class Pmf:
    """A probability mass function on {0, 1, ..., len(probs) - 1}."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.probs, dtype=float).copy()
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def mass(self) -> float:
        return float(self.probs.sum())

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(len(self.probs)), self.probs))

    def __getitem__(self, k: int) -> float:
        return float(self.probs[k]) if 0 <= k < len(self.probs) else 0.0

    def cdf(self) -> np.ndarray:
        """Cumulative table used for inverse-CDF draws; last entry forced to 1
        so that any mass beyond the stored support lands on the last index."""
        c = np.cumsum(self.probs)
        c[-1] = 1.0
        return c

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        u = rng.random(size)
        return np.searchsorted(self.cdf(), u, side="right")

    def as_dict(self) -> dict[int, float]:
        return {k: float(v) for k, v in enumerate(self.probs) if v > 0}


@dataclass(frozen=True)
class OffspringLaw(Pmf):
    """Validated critical law: mean one, positive finite variance."""

    name: str = "custom"
    tail_bound: float = 0.0
    exp_moment: bool = True
    variance: float = field(init=False)

    def __post_init__(self) -> None:
        super().__post_init__()
        p = self.probs
        if p.ndim != 1 or len(p) == 0:
            raise LawError("pmf must be a nonempty vector")
        if np.any(p < 0) or self.tail_bound < 0:
            raise NegativeMass(f"negative probability in {self.name}")
        if abs(p.sum() + self.tail_bound - 1.0) > MASS_TOL:
            raise LawError(
                f"mass {p.sum():.15f} + tail {self.tail_bound:g} is not 1")
        if abs(self.mean - 1.0) > MEAN_TOL:
            raise MeanNotOne(f"mean of {self.name} is {self.mean!r}")
        k = np.arange(len(p))
        var = float(np.dot(k * (k - 1), p))
        if not var > 0:
            raise ZeroVariance(f"{self.name} is degenerate")
        object.__setattr__(self, "variance", var)

    @property
    def sigma2(self) -> float:
        return self.variance


def _trim(p: list[float]) -> np.ndarray:
    a = np.asarray(p, dtype=float)
    nz = np.nonzero(a)[0]
    return a[: nz[-1] + 1] if len(nz) else a[:1]


def make_law(spec) -> OffspringLaw:
    """Build a law from a preset name, an OffspringLaw, a mapping k -> p or a
    sequence of probabilities indexed from 0."""
    if isinstance(spec, OffspringLaw):
        return spec
    if isinstance(spec, str):
        if spec == "binary":
            return OffspringLaw(np.array([0.5, 0.0, 0.5]), name="binary")
        if spec == "geometric_half":
            # stop once the second-moment tail, which bounds the mass tail,
            # is below the tolerance so sigma^2 is also accurate to it
            kmax = 0
            while (kmax + 4) ** 2 * 2.0 ** -(kmax + 1) > MASS_TOL:
                kmax += 1
            p = np.array([2.0 ** -(k + 1) for k in range(kmax + 1)])
            return OffspringLaw(p, name="geometric_half",
                                tail_bound=2.0 ** -(kmax + 1))
        if spec == "poisson1":
            p, tail, k = [], 1.0, 0
            while True:
                q = exp(-1.0) / factorial(k)
                p.append(q)
                tail -= q
                k += 1
                if tail <= MASS_TOL:
                    break
            p = np.array(p)
            return OffspringLaw(p, name="poisson1",
                                tail_bound=max(1.0 - p.sum(), 0.0))
        raise LawError(f"unknown preset {spec!r}; expected one of {PRESETS}")
    if isinstance(spec, Mapping):
        items = {int(k): float(v) for k, v in spec.items()}
        if any(k < 0 for k in items):
            raise LawError("offspring numbers must be nonnegative")
        p = [0.0] * (max(items) + 1)
        for k, v in items.items():
            p[k] = v
        return OffspringLaw(_trim(p))
    return OffspringLaw(_trim(list(spec)))


def size_biased(law: OffspringLaw) -> Pmf:
    """i -> i mu(i)."""
    return Pmf(np.arange(len(law.probs)) * law.probs)


def adjoint(law: OffspringLaw) -> Pmf:
    """i -> sum_{k >= i+1} mu(k), the law of the number of past children of
    a spine vertex and of the root of an adjoint tree."""
    p = law.probs
    tails = np.cumsum(p[::-1])[::-1]  # tails[i] = sum_{k>=i} mu(k)
    out = tails[1:] if len(p) > 1 else np.zeros(1)
    return Pmf(out)


def root_shifted(law: OffspringLaw) -> Pmf:
    """i -> mu(i-1): the root of the invariant tree has one extra (special)
    child on top of a mu-distributed number of others."""
    return Pmf(np.concatenate([[0.0], law.probs]))


@dataclass(frozen=True)
class SpineSplit:
    past_count: int
    future_count: int

    @property
    def total(self) -> int:
        return self.past_count + self.future_count + 1


def sample_spine_splits(law: OffspringLaw, rng: np.random.Generator,
                        size: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized spine splits: k ~ size-biased law, special index j uniform
    in 1..k; past = j - 1 children to its left, future = k - j."""
    k = size_biased(law).sample(rng, size)
    j = (rng.random(size) * k).astype(np.int64) + 1
    j = np.minimum(j, k)
    return j - 1, k - j


def sample_spine_split(law: OffspringLaw, rng: np.random.Generator) -> SpineSplit:
    past, fut = sample_spine_splits(law, rng, 1)
    return SpineSplit(int(past[0]), int(fut[0]))


def pgf(p: Pmf, s: np.ndarray | float) -> np.ndarray:
    """Generating function sum_k p(k) s^k."""
    s = np.asarray(s, dtype=float)
    return np.polynomial.polynomial.polyval(s, p.probs)
