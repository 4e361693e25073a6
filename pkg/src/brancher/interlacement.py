"""Branching interlacements on finite windows.

On a finite set W the occupied set I^u restricted to W is the union of
N ~ Poisson(u BCap(W)) independent trajectories, each an invariant-tree walk
started at a point of W drawn from e_W / BCap(W) and conditioned on its
past avoiding W.  Arrivals carry levels from a Poisson process of rate
BCap(W), so one run gives every level below its top level.

Starts are proposed uniformly on W and accepted when the observed past
avoids W and, independently, with the probability that the pruned part of
the past misses W; accepted starts then follow e_W exactly up to the
truncation correction.  Hits of a subset of W by the pruned future are
accounted for by per-arrival kernels (see ``Field.vacancy_weight``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .capacity import (CapacityEstimate, anchor_layout, bcap, kernel_sums,
                       truncation_constants, walker)
from .harness.stats import EstimateCI, ks_statistic
from .harness.streams import stream
from .lattice import LatticeSet, as_point, dist
from .offspring import make_law
from .walk import Target, TruncationCert, TruncationConstants

MAX_PROPOSALS = 100_000
MAX_ARRIVALS = 1_000_000


class RejectionBudgetExceeded(RuntimeError):
    pass


class CoverBudgetExceeded(RuntimeError):
    def __init__(self, msg: str, partial=None):
        super().__init__(msg)
        self.partial = partial


class SeparationViolated(ValueError):
    pass


@dataclass
class TrajectoryArrival:
    """One trajectory of the soup seen through the window.

    rows index the window points in the trace; miss holds, per anchor of the
    sampler, the first-order kernel of the pruned future (see
    ``kernel_sums``); proposals counts the starts tried before acceptance.
    """

    level: float
    start: tuple
    trace: LatticeSet
    full_cert: TruncationCert
    rows: np.ndarray = field(repr=False, default=None)
    miss: np.ndarray = field(repr=False, default=None)
    proposals: int = 1


class TrajectorySampler:
    """Conditioned trajectories for a conditioning set K.

    proposal="uniform" draws starts uniformly on K and restarts on
    rejection; proposal="estimate" draws the start from the estimated
    escape probabilities once and resamples only the tree.
    """

    def __init__(self, K: LatticeSet, cap: CapacityEstimate, law,
                 stop_radius: float | None = None, center=None,
                 constants: TruncationConstants | None = None,
                 proposal: str = "uniform", max_proposals: int = MAX_PROPOSALS):
        if proposal not in ("uniform", "estimate"):
            raise ValueError(f"unknown proposal {proposal!r}")
        self.K = K
        self.cap = cap
        self.law = make_law(law)
        self.d = K.d
        self.consts = constants or truncation_constants(self.d, self.law)
        self.R = cap.radius if stop_radius is None else float(stop_radius)
        if isinstance(center, str) and center == "per_point":
            self.center = None
        elif center is None:
            self.center = cap.center
        else:
            self.center = np.asarray(center, dtype=float)
        self.anchors, self.P = anchor_layout(K, K.center if self.center is None
                                             else self.center)
        self.e = cap.escape_vector()
        self.weights = self.P @ self.e
        self.proposal = proposal
        self.max_proposals = max_proposals
        self.target = Target(K)
        self.walker = walker(self.law, self.d)
        self.tries = np.zeros(len(K), dtype=np.int64)
        self.accepts = np.zeros(len(K), dtype=np.int64)

    def _center(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) if self.center is None else self.center

    def sample(self, rng: np.random.Generator, level: float = float("nan")) -> TrajectoryArrival:
        n = len(self.K)
        calibrated = self.consts.mode == "calibrated"
        if self.proposal == "estimate":
            p = np.clip(self.e, 0, None)
            fixed = int(rng.choice(n, p=p / p.sum()))
        for j in range(1, self.max_proposals + 1):
            i = fixed if self.proposal == "estimate" else int(rng.integers(n))
            key = int(rng.integers(0, np.iinfo(np.uint64).max, dtype=np.uint64,
                                   endpoint=True))
            u = rng.random()
            x = tuple(int(c) for c in self.K.points[i])
            out = self.walker.invariant(key, x, self.target, self._center(x),
                                        self.R, stop_on_past_hit=True,
                                        anchors=self.anchors)
            self.tries[i] += 1
            if out["past_hit"] or out["truncated"]:
                continue
            if calibrated:
                r_past = kernel_sums(out["res"][:1], self.consts)[0]
                if u >= np.exp(-float(r_past @ self.weights)):
                    continue
            self.accepts[i] += 1
            rows = np.sort(out["future_rows"])
            miss = kernel_sums(out["res"][1:], self.consts)[0]
            box = float(self.consts.crit * out["res"][1, 0]
                        + self.consts.spine * out["res"][1, 1])
            cert = TruncationCert(self.R, self.cap.value.mean * box,
                                  self.consts.mode,
                                  float(miss @ self.weights) if calibrated else 0.0)
            return TrajectoryArrival(level, x, LatticeSet(self.K.points[rows], d=self.d),
                                     cert, rows, miss, j)
        raise RejectionBudgetExceeded(
            f"no accepted trajectory after {self.max_proposals} proposals")

    def acceptance(self) -> dict:
        """Per-start acceptance frequencies with binomial SE."""
        out = {}
        for i, p in enumerate(self.K):
            if self.tries[i]:
                out[p] = EstimateCI.from_binomial(int(self.accepts[i]), int(self.tries[i]))
        return out


@dataclass
class Field:
    """I^u on a finite window from level-labelled arrivals."""

    window: LatticeSet
    u: float
    occupied: np.ndarray
    arrivals: list
    cover_levels: dict | None = None
    anchors: np.ndarray | None = field(default=None, repr=False)

    def at(self, u: float) -> "Field":
        """The same realization at a lower level (level coupling)."""
        if u > self.u:
            raise ValueError("can only lower the level of a sampled field")
        arr = [a for a in self.arrivals if a.level <= u]
        return Field(self.window, u, _occupancy(len(self.window), arr), arr,
                     None, self.anchors)

    def vacant(self, K: LatticeSet) -> bool:
        m = K.mask_in(self.window)
        return not bool(np.any(self.occupied[m]))

    def vacancy_weight(self, K: LatticeSet, e_K: np.ndarray) -> float:
        """1{K vacant in the observed traces} times the probability that the
        pruned futures of all arrivals miss K, to first order
        prod_i exp(-sum_k e_K(k) r_i(k)) with r_i the arrival's kernels."""
        if not self.vacant(K):
            return 0.0
        if self.anchors is None or not self.arrivals:
            return 1.0
        if len(self.anchors) == len(self.window):
            cols = np.array([self.window.index(p) for p in K])
            w = np.asarray(e_K, dtype=float)
        else:
            cols = np.zeros(1, dtype=int)
            w = np.array([float(np.sum(e_K))])
        s = sum(float(a.miss[cols] @ w) for a in self.arrivals)
        return float(np.exp(-s))


def _occupancy(n: int, arrivals: list) -> np.ndarray:
    occ = np.zeros(n, dtype=bool)
    for a in arrivals:
        occ[a.rows] = True
    return occ


def arrival_levels(rate: float, u_max: float, rng: np.random.Generator) -> list[float]:
    """Points of a rate-`rate` Poisson process on [0, u_max]."""
    out = []
    t = 0.0
    if rate <= 0:
        return out
    while True:
        t += rng.exponential(1.0 / rate)
        if t > u_max:
            return out
        out.append(t)


def sample_conditioned_trajectory(K: LatticeSet, cap: CapacityEstimate, stop_radius,
                                  rng: np.random.Generator, law="binary",
                                  sampler: TrajectorySampler | None = None) -> TrajectoryArrival:
    s = sampler or TrajectorySampler(K, cap, law, stop_radius)
    return s.sample(rng)


def sample_field(window: LatticeSet, u: float, law, rng: np.random.Generator,
                 cap: CapacityEstimate | None = None,
                 sampler: TrajectorySampler | None = None,
                 replicas_cap: int = 5000, seed: int = 0,
                 track_cover: bool = False) -> Field:
    """I^u on the window; arrivals with levels up to u."""
    if u < 0:
        raise ValueError("u must be nonnegative")
    law = make_law(law)
    if sampler is None:
        cap = cap or bcap(window, law, replicas_cap, seed=seed)
        sampler = TrajectorySampler(window, cap, law)
    rate = sampler.cap.value.mean
    arrivals = []
    for lv in arrival_levels(rate, u, rng):
        a = sampler.sample(rng, lv)
        arrivals.append(a)
    occ = _occupancy(len(window), arrivals)
    cover = None
    if track_cover:
        cover = {}
        for a in arrivals:
            for r in a.rows:
                p = tuple(int(c) for c in window.points[r])
                cover.setdefault(p, a.level)
    return Field(window, u, occ, arrivals, cover, sampler.anchors)


# ------------------------------------------------------------ experiments

@dataclass
class ProbeResult:
    measured: EstimateCI
    predicted: EstimateCI
    raw: EstimateCI | None = None
    extra: dict = field(default_factory=dict)

    def agrees(self, k: float = 3.0) -> bool:
        se = float(np.hypot(self.measured.total_se, self.predicted.total_se))
        return abs(self.measured.mean - self.predicted.mean) <= k * se


def vacancy_experiment(K: LatticeSet, window: LatticeSet, us, law, replicas: int,
                       seed: int = 0, cap_replicas: int = 5000,
                       stop_radius: float | None = None) -> dict:
    """P(I^u cap K = empty) from fields on a window containing K, against
    exp(-u BCap(K)); one field per replica serves every level."""
    law = make_law(law)
    if not K.subset_of(window):
        raise ValueError("K must lie in the window")
    capW = bcap(window, law, cap_replicas, stop_radius=stop_radius, seed=seed)
    capK = bcap(K, law, cap_replicas, stop_radius=stop_radius, seed=seed + 1)
    sampler = TrajectorySampler(window, capW, law)
    us = sorted(float(u) for u in us)
    eK = capK.escape_vector()
    w = {u: np.zeros(replicas) for u in us}
    raw = {u: np.zeros(replicas) for u in us}
    for i in range(replicas):
        f = sample_field(window, us[-1], law, stream(seed, "vacancy", i), sampler=sampler)
        for u in us:
            g = f.at(u)
            w[u][i] = g.vacancy_weight(K, eK)
            raw[u][i] = float(g.vacant(K))
    out = {}
    B = capK.value
    BW = capW.value
    for u in us:
        pred = np.exp(-u * B.mean)
        m = EstimateCI.from_samples(w[u])
        # the window capacity sets the arrival rate; its error moves the
        # measured vacancy by about u * (BCap(K)/BCap(W)) * dB relative
        sysm = m.mean * u * (B.mean / BW.mean) * BW.total_se
        out[u] = ProbeResult(EstimateCI(m.mean, m.se, m.n, sysm),
                             EstimateCI(pred, pred * u * B.se, B.n, pred * u * (B.systematic or 0)),
                             EstimateCI.from_samples(raw[u]),
                             {"bcap_K": B.mean, "bcap_window": capW.value.mean})
    return out


def covariance_probe(x, y, u: float, law, replicas: int, seed: int = 0,
                     cap_replicas: int = 20_000) -> ProbeResult:
    """Cov(1{x vacant}, 1{y vacant}) from fields on {x, y}, against
    exp(-u BCap({x,y})) - exp(-2u BCap({0}))."""
    law = make_law(law)
    x, y = as_point(x), as_point(y)
    if x == y:
        raise ValueError("x and y must differ")
    d = len(x)
    W = LatticeSet([x, y], d=d)
    capW = bcap(W, law, cap_replicas, seed=seed)
    cap0 = bcap(LatticeSet([x], d=d), law, cap_replicas, seed=seed)
    sampler = TrajectorySampler(W, capW, law)
    Kx, Ky = LatticeSet([x], d=d), LatticeSet([y], d=d)
    b0 = np.array([cap0.value.mean])
    vx = np.zeros(replicas)
    vy = np.zeros(replicas)
    vxy = np.zeros(replicas)
    for i in range(replicas):
        f = sample_field(W, u, law, stream(seed, "covariance", i), sampler=sampler)
        vx[i] = f.vacancy_weight(Kx, b0)
        vy[i] = f.vacancy_weight(Ky, b0)
        vxy[i] = f.vacancy_weight(W, capW.escape_vector())
    mx, my, mxy = vx.mean(), vy.mean(), vxy.mean()
    infl = vxy - my * vx - mx * vy
    meas = EstimateCI(float(mxy - mx * my), float(infl.std(ddof=1) / np.sqrt(replicas)),
                      replicas)
    B2, B1 = capW.value, cap0.value
    p2, p1 = np.exp(-u * B2.mean), np.exp(-2 * u * B1.mean)
    se = float(np.hypot(u * p2 * B2.se, 2 * u * p1 * B1.se))
    sys = float(u * p2 * (B2.systematic or 0) + 2 * u * p1 * (B1.systematic or 0))
    return ProbeResult(meas, EstimateCI(float(p2 - p1), se, B2.n, sys), None,
                       {"bcap_pair": B2.mean, "bcap_single": B1.mean,
                        "p_x": mx, "p_y": my, "p_xy": mxy})


EVENTS: dict[str, Callable[[np.ndarray], bool]] = {
    "nonempty": lambda occ: bool(np.any(occ)),
    "empty": lambda occ: not bool(np.any(occ)),
    "full": lambda occ: bool(np.all(occ)),
}


def decorrelation_probe(K1: LatticeSet, K2: LatticeSet, u: float, event_pair,
                        law, replicas: int, seed: int = 0,
                        cap_replicas: int = 5000, independent: bool = False) -> ProbeResult:
    """|Cov(1_E, 1_F)| for E depending on I^u cap K1 and F on I^u cap K2,
    with the dominant bound term u BCap(K1) BCap(K2) / dist^{d-4}.

    Events are names from EVENTS or callables on the occupancy vector of
    the set.  independent=True draws the two sets from independent fields
    (a null check).
    """
    law = make_law(law)
    E, F = (EVENTS[e] if isinstance(e, str) else e for e in event_pair)
    W = K1.union(K2)
    d = W.d
    m1, m2 = K1.mask_in(W), K2.mask_in(W)
    capW = bcap(W, law, cap_replicas, seed=seed)
    sampler = TrajectorySampler(W, capW, law)
    a = np.zeros(replicas)
    b = np.zeros(replicas)
    for i in range(replicas):
        f = sample_field(W, u, law, stream(seed, "decorrelation", i), sampler=sampler)
        a[i] = E(f.occupied[m1])
        if independent:
            f = sample_field(W, u, law, stream(seed, "decorrelation-ind", i),
                             sampler=sampler)
        b[i] = F(f.occupied[m2])
    ma, mb = a.mean(), b.mean()
    infl = (a - ma) * (b - mb)
    cov = float(infl.mean())
    se = float(infl.std(ddof=1) / np.sqrt(replicas))
    c1 = bcap(K1, law, cap_replicas, seed=seed).value.mean
    c2 = bcap(K2, law, cap_replicas, seed=seed).value.mean
    dd = dist(K1, K2, "euclidean")
    bound = u * c1 * c2 / dd ** (d - 4)
    return ProbeResult(EstimateCI(abs(cov), se, replicas), EstimateCI(bound, 0.0, 1),
                       EstimateCI(cov, se, replicas),
                       {"distance": dd, "ratio": abs(cov) / bound if bound > 0 else np.nan,
                        "bcap_K1": c1, "bcap_K2": c2})


@dataclass
class CoverResult:
    levels: list
    cover_levels: dict
    M: float
    arrivals: int
    truncated: bool = False


def cover_process(K: LatticeSet, law, rng: np.random.Generator,
                  sampler: TrajectorySampler, b0: float | None = None,
                  max_arrivals: int = MAX_ARRIVALS) -> CoverResult:
    """Run the arrival process on K until every point is covered.

    U_x is the level of the first arrival whose trace contains x, M(K) the
    largest U_x.  In calibrated mode a point missed by the observed trace
    is also covered with the probability b0 * r(x) (to first order) that
    the pruned future reaches it, b0 being the singleton capacity.
    """
    rate = sampler.cap.value.mean
    per_anchor = len(sampler.anchors) == len(K)
    use_virtual = b0 is not None and per_anchor and sampler.consts.mode == "calibrated"
    cover = np.full(len(K), np.inf)
    left = len(K)
    t = 0.0
    levels = []
    for n in range(1, max_arrivals + 1):
        t += rng.exponential(1.0 / rate)
        a = sampler.sample(rng, t)
        levels.append(t)
        hit = np.zeros(len(K), dtype=bool)
        hit[a.rows] = True
        if use_virtual:
            p = 1.0 - np.exp(-b0 * a.miss.astype(float))
            hit |= rng.random(len(K)) < p
        new = hit & ~np.isfinite(cover)
        cover[new] = t
        left -= int(new.sum())
        if left == 0:
            cl = {p: float(cover[i]) for i, p in enumerate(K)}
            return CoverResult(levels, cl, float(cover.max()), n)
    partial = CoverResult(levels, {p: float(cover[i]) for i, p in enumerate(K)},
                          float("inf"), max_arrivals, True)
    raise CoverBudgetExceeded(f"K not covered after {max_arrivals} arrivals", partial)


def separation_threshold(n: int, d: int, lam: float) -> float:
    return n ** ((2 + lam) / (d - 4))


def check_separation(K: LatticeSet, lam: float) -> None:
    thr = separation_threshold(len(K), K.d, lam)
    P = K.points.astype(float)
    for i in range(len(P)):
        dd = np.sqrt(((P[i + 1:] - P[i]) ** 2).sum(1))
        if len(dd) and dd.min() < thr:
            raise SeparationViolated(
                f"points closer than |K|^((2+lambda)/(d-4)) = {thr:.1f}")


def separated_grid(n_side: int, d: int, lam: float, dims: int = 3) -> LatticeSet:
    """n_side^dims points on a cubic grid whose spacing meets the
    separation condition."""
    n = n_side ** dims
    s = int(np.ceil(separation_threshold(n, d, lam)))
    axes = [np.arange(n_side) * s] * dims + [np.zeros(1, dtype=int)] * (d - dims)
    g = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d)
    return LatticeSet(g, d=d)


@dataclass
class GumbelResult:
    statistic: np.ndarray
    ks: float
    median: float
    bcap_single: EstimateCI
    bcap_K: EstimateCI


def gumbel_cdf(z):
    return np.exp(-np.exp(-np.asarray(z, dtype=float)))


def gumbel_experiment(K: LatticeSet, law, replicas: int, seed: int = 0,
                      lam: float = 0.1, cap_replicas: int = 20_000,
                      check: bool = True) -> GumbelResult:
    """Replicas of BCap({0}) M(K) - log|K| and their KS distance to the
    standard Gumbel law."""
    law = make_law(law)
    if check and len(K) > 1:
        check_separation(K, lam)
    d = K.d
    cap0 = bcap(LatticeSet([(0,) * d], d=d), law, cap_replicas, seed=seed)
    capK = bcap(K, law, cap_replicas, seed=seed, center="per_point")
    sampler = TrajectorySampler(K, capK, law, center="per_point")
    b0 = cap0.value.mean
    stat = np.zeros(replicas)
    for i in range(replicas):
        res = cover_process(K, law, stream(seed, "cover", i), sampler, b0)
        stat[i] = b0 * res.M - np.log(len(K))
    return GumbelResult(stat, ks_statistic(stat, gumbel_cdf), float(np.median(stat)),
                        cap0.value, capK.value)
