"""Green's functions, escape probabilities and branching capacity.

g is the Green's function of simple random walk and G the expected number
of visits of the past of the invariant-tree walk.  Both are computed from
the continuous-time heat kernel p_t(z) = prod_i e^{-t/d} I_{z_i}(t/d):
g = int p_t dt and g*g = int t p_t dt.  On [1, inf) the Gaussian part of
p_t is integrated in closed form and only the remainder goes to quadrature.

Capacities are Monte Carlo estimates over past trees truncated to a ball.
Hits of the pruned part are accounted for to first order: a pruned critical
subtree rooted at y hits K with probability about sum_k e_K(k) a'_d |y-k|^{2-d}
and a pruned spine tail at s about sum_k e_K(k) a_d |s-k|^{4-d}.  The
estimator subtracts these terms on avoiding trees and solves the resulting
linear system for the escape probabilities.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import integrate, special

from .harness.stats import EstimateCI, loglog_slope
from .harness.streams import tree_keys
from .lattice import LatticeSet, as_point, diam
from .offspring import OffspringLaw, make_law
from .walk import Target, TruncationCert, TruncationConstants, Walker

CALIBRATION_VERSION = 1
CORRECTION_REL_ERR = 0.05  # systematic error credited to the truncation correction
MAX_ANCHORS = 96
MIN_RADIUS = 12.0


class BoxTooSmall(ValueError):
    pass


# ------------------------------------------------------------------ Green

def _canon(z) -> tuple[int, ...]:
    return tuple(sorted(abs(int(c)) for c in np.ravel(z)))


def _gauss_tails(z: tuple, d: int) -> tuple[float, float]:
    """int_1^inf of the Gaussian kernel (d/2 pi t)^{d/2} e^{-d|z|^2/2t},
    plain and weighted by t."""
    a = 0.5 * d * float(np.dot(z, z))
    pref = (d / (2 * np.pi)) ** (d / 2)
    out = []
    for s in (d / 2 - 1, d / 2 - 2):
        if s <= 0:
            out.append(np.inf)
        elif a == 0:
            out.append(pref / s)
        else:
            out.append(pref * a ** (-s) * special.gamma(s) * special.gammainc(s, a))
    return out[0], out[1]


def _heat(z: np.ndarray, t: float, d: int) -> float:
    return float(np.prod(special.ive(z, t / d)))


@lru_cache(maxsize=None)
def _green_pair(zc: tuple, d: int) -> tuple[float, float, float, float]:
    """(g, g*g, err_g, err_gg) at a canonical point."""
    z = np.asarray(zc, dtype=float)
    r2 = float(np.dot(z, z))
    pref = (d / (2 * np.pi)) ** (d / 2)

    def head(t):
        p = _heat(z, t, d)
        return np.array([p, t * p])

    def rem(t):
        if not t < 1e9:  # remainder below 1e-13 beyond; ive overflows later
            return np.zeros(2)
        p = _heat(z, t, d) - pref * t ** (-d / 2) * np.exp(-0.5 * d * r2 / t)
        return np.array([p, t * p])

    h, eh = integrate.quad_vec(head, 0.0, 1.0, epsabs=1e-14, epsrel=1e-11)
    # split the tail near the peak of the kernel so quadrature sees it
    peak = max(2.0, r2 / 2)
    r1, e1 = integrate.quad_vec(rem, 1.0, peak, epsabs=1e-14, epsrel=1e-11)
    r2_, e2 = integrate.quad_vec(rem, peak, np.inf, epsabs=1e-14, epsrel=1e-11)
    tg, tgg = _gauss_tails(tuple(zc), d)
    g = h[0] + r1[0] + r2_[0] + tg
    gg = h[1] + r1[1] + r2_[1] + tgg
    err = float(eh + e1 + e2)
    return float(g), float(gg), err, err


def green_value(z, d: int) -> float:
    """g(z) for simple random walk on Z^d, d >= 3."""
    if d < 3:
        raise ValueError("simple random walk is recurrent for d < 3")
    return _green_pair(_canon(z), d)[0]


def green_conv(z, d: int) -> float:
    """(g*g)(z) = sum_y g(z - y) g(y), d >= 5."""
    if d < 5:
        raise ValueError("g*g is infinite for d < 5")
    return _green_pair(_canon(z), d)[1]


class GreenTable:
    """g on the box |z|_inf <= box_radius, computed on demand and cached by
    the symmetry class of z (sorted absolute coordinates)."""

    def __init__(self, d: int, box_radius: int):
        if d < 3:
            raise ValueError("simple random walk is recurrent for d < 3")
        if box_radius < 1:
            raise ValueError("box_radius must be >= 1")
        self.d = d
        self.box_radius = int(box_radius)

    def _check(self, z) -> tuple:
        z = as_point(z, self.d)
        if max(abs(c) for c in z) > self.box_radius:
            raise BoxTooSmall(f"{z} lies outside the table box")
        return z

    def __getitem__(self, z) -> float:
        return green_value(self._check(z), self.d)

    def error(self, z) -> float:
        return _green_pair(_canon(self._check(z)), self.d)[2]

    @property
    def error_bound(self) -> float:
        return max(self.error(np.zeros(self.d, int)),
                   self.error((self.box_radius,) + (0,) * (self.d - 1)))

    @property
    def values(self) -> dict:
        """Every entry of the box (only sensible for small boxes)."""
        r = self.box_radius
        box = LatticeSet.box([-r] * self.d, [r] * self.d)
        return {p: self[p] for p in box}

    def conv(self, z) -> float:
        return green_conv(self._check(z), self.d)


def green_srw(d: int, box_radius: int) -> GreenTable:
    return GreenTable(d, box_radius)


@dataclass(frozen=True)
class GreenValue:
    value: float
    error: float


def green_branching(d: int, law, z) -> GreenValue:
    """G(z), the expected number of visits to z by the past walk from 0.

    With sigma^2 the offspring variance,
      G = (sigma^2/2) g*g + (1 - sigma^2) g + (sigma^2/2 - 1) delta_0,
    since spine vertex i >= 1 sits at step i of a simple random walk and has
    sigma^2/2 past children on average, each rooting a critical tree.
    """
    if d < 5:
        raise ValueError("G is infinite for d < 5")
    law = make_law(law)
    s2 = law.sigma2
    g, gg, eg, egg = _green_pair(_canon(z), d)
    delta = 1.0 if not any(as_point(z)) else 0.0
    val = 0.5 * s2 * gg + (1 - s2) * g + (0.5 * s2 - 1) * delta
    return GreenValue(val, 0.5 * s2 * egg + abs(1 - s2) * eg)


def a_prime_closed(d: int) -> float:
    """Limit of g(z)|z|^{d-2} from the local limit theorem."""
    return d * special.gamma(d / 2 - 1) / (2 * np.pi ** (d / 2))


def a_closed(d: int, sigma2: float) -> float:
    """Limit of G(z)|z|^{d-4}."""
    return 0.5 * sigma2 * (d / 2) ** 2 * np.pi ** (-d / 2) * special.gamma(d / 2 - 2)


def extract_constants(d: int, law, r: int = 40) -> tuple[float, float]:
    """(a'_d, a_d) read off g and G along the first axis at r and 2r with
    one Richardson step against the |z|^-2 correction."""
    law = make_law(law)

    def ap(k):
        z = (k,) + (0,) * (d - 1)
        return green_value(z, d) * k ** (d - 2)

    def a(k):
        z = (k,) + (0,) * (d - 1)
        return green_branching(d, law, z).value * k ** (d - 4)

    return ((4 * ap(2 * r) - ap(r)) / 3, (4 * a(2 * r) - a(r)) / 3)


# ----------------------------------------------------------- calibration

@dataclass
class Calibration:
    """Per (d, law) constants: a'_d, a_d, the singleton capacity and the
    empirical constants of the two-sided capacity bound."""

    d: int
    law: str
    version: int
    a_prime: float
    a: float
    bcap_singleton: float = float("nan")
    c_lower: float = float("nan")
    c_upper: float = float("nan")
    extra: dict = field(default_factory=dict)

    @property
    def key(self) -> str:
        return f"d={self.d}|law={self.law}|v={self.version}"

    def constants(self) -> TruncationConstants:
        return TruncationConstants(self.a_prime, self.a, "calibrated")


def calibration_path() -> Path:
    root = os.environ.get("BRANCHER_CACHE") or Path.home() / ".cache" / "brancher"
    return Path(root) / "calibration.json"


def _read_records(path: Path) -> dict:
    if path.exists():
        return json.loads(path.read_text())
    return {}


def save_calibration(cal: Calibration, path: Path | None = None) -> None:
    path = path or calibration_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    recs = _read_records(path)
    recs[cal.key] = asdict(cal)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(recs, indent=2, sort_keys=True))
    tmp.replace(path)


_CAL_MEMO: dict = {}


def calibration(d: int, law, recalibrate: bool = False,
                path: Path | None = None, full: bool = False) -> Calibration:
    """Load (or compute and store) the calibration record for (d, law).

    The Green constants are cheap and always present; with full=True the
    singleton capacity and the capacity-bound constants are filled in too.
    """
    law = make_law(law)
    path = path or calibration_path()
    key = f"d={d}|law={law.name}|v={CALIBRATION_VERSION}"
    cal = None if recalibrate else _CAL_MEMO.get((key, str(path)))
    if cal is None and not recalibrate:
        rec = _read_records(path).get(key)
        if rec is not None:
            cal = Calibration(**rec)
    if cal is None:
        ap, a = extract_constants(d, law)
        cal = Calibration(d, law.name, CALIBRATION_VERSION, ap, a)
        save_calibration(cal, path)
    if full and not np.isfinite(cal.c_upper):
        _calibrate_capacity(cal, law)
        save_calibration(cal, path)
    _CAL_MEMO[(key, str(path))] = cal
    return cal


def truncation_constants(d: int, law, mode: str = "calibrated") -> TruncationConstants:
    if mode == "heuristic":
        return TruncationConstants.heuristic()
    if mode != "calibrated":
        raise ValueError(f"unknown constants mode {mode!r}")
    return calibration(d, law).constants()


def reference_family(d: int) -> list[LatticeSet]:
    """Sets used to record the capacity-bound constants."""
    o = np.zeros(d, dtype=np.int64)
    e = np.eye(d, dtype=np.int64)
    return [LatticeSet([o], d=d),
            LatticeSet([o, e[0]], d=d),
            LatticeSet([o, 3 * e[0]], d=d),
            LatticeSet([k * e[0] for k in range(4)], d=d),
            LatticeSet.box(o, o + np.r_[1, 1, [0] * (d - 2)]),
            LatticeSet([o, e[0], e[1], e[2], 2 * e[0] + 2 * e[1]], d=d)]


def green_sums(K: LatticeSet, law) -> np.ndarray:
    """sum_{y in K} G(y - x) for each x in K."""
    law = make_law(law)
    P = K.points
    out = np.zeros(len(P))
    for i, x in enumerate(P):
        out[i] = sum(green_branching(K.d, law, y - x).value for y in P)
    return out


def capacity_ratios(K: LatticeSet, b: float, law) -> tuple[float, float]:
    """(BCap max_x sum_y G / |K|, BCap min_x sum_y G / |K|)."""
    s = green_sums(K, law)
    return b * s.max() / len(K), b * s.min() / len(K)


def _calibrate_capacity(cal: Calibration, law: OffspringLaw,
                        replicas: int = 20_000, seed: int = 20240611) -> None:
    consts = cal.constants()
    lows, highs = [], []
    for i, K in enumerate(reference_family(cal.d)):
        est = bcap(K, law, replicas, seed=seed, constants=consts)
        if i == 0:
            cal.bcap_singleton = est.value.mean
        lo, hi = capacity_ratios(K, est.value.mean, law)
        lows.append(lo)
        highs.append(hi)
    # factor-2 slack on both sides of the reference range
    cal.c_lower = 0.5 * min(lows)
    cal.c_upper = 2.0 * max(highs)
    cal.extra = {"reference_lower": lows, "reference_upper": highs,
                 "replicas": replicas, "seed": seed}


# ------------------------------------------------------------ estimation

def default_radius(K: LatticeSet) -> float:
    return max(MIN_RADIUS, diam(K, "euclidean"))


@dataclass
class CapacityEstimate:
    K: LatticeSet
    value: EstimateCI
    per_point_escape: dict
    truncation: TruncationCert
    raw: EstimateCI | None = None
    radius: float = 0.0
    center: np.ndarray | None = None  # None: ball centered at each start

    def escape_vector(self) -> np.ndarray:
        return np.array([self.per_point_escape[p].mean for p in self.K])


_WALKERS: dict = {}


def walker(law: OffspringLaw, d: int) -> Walker:
    """Shared per-process Walker for (law, d)."""
    key = (law.name, tuple(law.probs), d)
    w = _WALKERS.get(key)
    if w is None:
        w = _WALKERS[key] = Walker(law, d)
    return w


def escape_keys(seed: int, law: OffspringLaw, x, n: int) -> np.ndarray:
    """Tree keys for past trees started at x; they depend on x only, so
    estimates for nested sets share their trees."""
    return tree_keys(seed, "escape", law.name, *as_point(x), n=n)


def anchor_layout(K: LatticeSet, center) -> tuple[np.ndarray, np.ndarray]:
    """Anchors for the residual sums and the (anchors x points) matrix that
    maps escape probabilities to anchor weights: one anchor per point for
    small sets, else the center carrying the whole capacity."""
    if len(K) <= MAX_ANCHORS:
        return K.points.astype(float), np.eye(len(K))
    return np.asarray(center, dtype=float)[None, :], np.ones((1, len(K)))


def kernel_sums(res: np.ndarray, consts: TruncationConstants) -> np.ndarray:
    """(n, J) first-order hitting kernels a' sum|y-k|^{2-d} + a |s-k|^{4-d}
    per anchor k from kernel residual rows."""
    return (consts.crit * res[:, 2::2] + consts.spine * res[:, 3::2]).astype(np.float32)


def solve_escape(A: list[np.ndarray], r: list[np.ndarray], P: np.ndarray,
                 tol: float = 1e-12, max_iter: int = 500):
    """Fixed point e_x = mean(A_x exp(-r_x P e)) with delta-method errors.

    A[x] are avoidance indicators of the observed past trees from x, r[x]
    their (n, J) kernels; exp(-r P e) is the probability that the pruned
    parts miss the set, treating their hits as a Poisson count.
    Returns (e, covariance).
    """
    m = len(A)
    e = np.array([a.mean() for a in A])
    for _ in range(max_iter):
        w = P @ e
        new = np.array([(A[x] * np.exp(-(r[x] @ w))).mean() for x in range(m)])
        if np.max(np.abs(new - e)) < tol:
            e = new
            break
        e = new
    w = P @ e
    J = np.eye(m)
    v = np.zeros(m)
    for x in range(m):
        f = A[x] * np.exp(-(r[x] @ w))
        J[x] += (f[:, None] * r[x]).mean(0) @ P
        v[x] = f.var(ddof=1) / len(f) if len(f) > 1 else 0.0
    Jinv = np.linalg.inv(J)
    return e, Jinv @ np.diag(v) @ Jinv.T


def bcap(K: LatticeSet, law, replicas: int, stop_radius: float | None = None,
         seed: int = 0, constants: TruncationConstants | None = None,
         center=None) -> CapacityEstimate:
    """BCap(K) = sum over x in K of the probability that the past walk from x
    avoids K, each estimated from ``replicas`` truncated past trees.

    The truncation ball is centered at ``center`` (default: the center of
    K's bounding box); center="per_point" centers it at each start instead,
    for sparse sets whose points are far apart.
    """
    if len(K) == 0:
        raise ValueError("K must be nonempty")
    law = make_law(law)
    d = K.d
    if d < 5:
        raise ValueError("branching capacity needs d >= 5")
    consts = constants or truncation_constants(d, law)
    per_point = isinstance(center, str) and center == "per_point"
    if per_point:
        R = MIN_RADIUS if stop_radius is None else float(stop_radius)
        c = None
    else:
        R = default_radius(K) if stop_radius is None else float(stop_radius)
        c = K.center if center is None else np.asarray(center, dtype=float)
        reach = float(np.max(np.linalg.norm(K.points - c, axis=1)))
        if R < reach + 1.0:
            raise BoxTooSmall(f"stop radius {R} does not enclose K (reach {reach:.2f})")
    anchors, P = anchor_layout(K, K.center if c is None else c)
    W = walker(law, d)
    T = Target(K)
    A, r, box, trunc = [], [], [], []
    for x in K:
        cx = np.asarray(x, dtype=float) if per_point else c
        av, res, _ = W.escape(escape_keys(seed, law, x, replicas), x, T, cx, R,
                              anchors)
        A.append((av == 1).astype(float))
        r.append(kernel_sums(res, consts))
        box.append((consts.crit * res[:, 0] + consts.spine * res[:, 1]).mean())
        trunc.append((av < 0).mean())
    Abar = np.array([a.mean() for a in A])
    trunc = np.array(trunc)
    if consts.mode == "calibrated":
        e, cov = solve_escape(A, r, P)
        sys_row = CORRECTION_REL_ERR * np.abs(Abar - e) + trunc
    else:
        e = Abar
        cov = np.diag(Abar * (1 - Abar) / replicas)
        sys_row = e.sum() * np.array(box) + trunc
    B = float(e.sum())
    se_rows = np.sqrt(np.clip(np.diag(cov), 0, None))
    cert = TruncationCert(R, B * float(np.sum(box)), consts.mode,
                          float(Abar.sum() - B), bool(trunc.any()))
    per = {p: EstimateCI(float(e[i]), float(se_rows[i]), replicas, float(sys_row[i]))
           for i, p in enumerate(K)}
    value = EstimateCI(B, float(np.sqrt(max(cov.sum(), 0.0))), replicas,
                       float(sys_row.sum()))
    raw = EstimateCI(float(Abar.sum()),
                     float(np.sqrt(np.sum(Abar * (1 - Abar) / replicas))), replicas)
    return CapacityEstimate(K, value, per, cert, raw, R, c)


def escape_probability(x, K: LatticeSet, law, replicas: int,
                       stop_radius: float | None = None, seed: int = 0,
                       constants: TruncationConstants | None = None,
                       center=None, bcap_hint: float | None = None) -> EstimateCI:
    """P(the past walk from x avoids K).

    In calibrated mode the pruned part is weighted by the total capacity
    sitting at the center of K, taken from bcap_hint or, failing that, from
    the fixed point that treats every point of K like x.
    """
    law = make_law(law)
    x = as_point(x, K.d)
    consts = constants or truncation_constants(K.d, law)
    Kx = K if x in K else K.union(LatticeSet([x], d=K.d))
    R = default_radius(Kx) if stop_radius is None else float(stop_radius)
    c = Kx.center if center is None else np.asarray(center, dtype=float)
    av, res, _ = walker(law, K.d).escape(escape_keys(seed, law, x, replicas), x,
                                         Target(K), c, R, K.center[None, :])
    A = (av == 1).astype(float)
    trunc_frac = float((av < 0).mean())
    if consts.mode != "calibrated":
        p = float(A.mean())
        b = len(K) if bcap_hint is None else bcap_hint
        sys = b * float((consts.crit * res[:, 0] + consts.spine * res[:, 1]).mean())
        return EstimateCI(p, float(np.sqrt(p * (1 - p) / replicas)), replicas,
                          sys + trunc_frac)
    r = kernel_sums(res, consts)
    if bcap_hint is None:
        e, cov = solve_escape([A], [r], np.full((1, 1), float(len(K))))
        mean, se = float(e[0]), float(np.sqrt(cov[0, 0]))
    else:
        est = EstimateCI.from_samples(A * np.exp(-float(bcap_hint) * r[:, 0]))
        mean, se = est.mean, est.se
    return EstimateCI(mean, se, replicas,
                      CORRECTION_REL_ERR * abs(float(A.mean()) - mean) + trunc_frac)


def pair_deficit(x, law, replicas: int, seed: int = 0,
                 stop_radius: float | None = None,
                 constants: TruncationConstants | None = None) -> EstimateCI:
    """2 BCap({0}) - BCap({0, x}) from one family of past trees at 0.

    By symmetry e_{0,x}(0) = e_{0,x}(x), so the deficit is
    2 (e_{0}(0) - e_{0,x}(0)) and both escape probabilities are read off the
    same trees: the second one additionally requires the past to miss x.
    """
    law = make_law(law)
    x = as_point(x)
    d = len(x)
    if not any(x):
        raise ValueError("x must differ from 0")
    consts = constants or truncation_constants(d, law)
    o = (0,) * d
    xr = np.asarray(x, dtype=float)
    nx = float(np.linalg.norm(xr))
    R = max(MIN_RADIUS + 0.5 * nx, 1.25 * nx) if stop_radius is None else float(stop_radius)
    T = Target(LatticeSet([o], d=d), LatticeSet([x], d=d))
    anchors = np.array([np.zeros(d), xr])
    av, res, _, seen = walker(law, d).escape(escape_keys(seed, law, o, replicas),
                                             o, T, 0.5 * xr, R, anchors, seen=True)
    A1 = (av == 1).astype(float)
    A2 = A1 * (~seen[:, T.rows.index(x)])
    trunc_frac = float((av < 0).mean())
    if consts.mode == "calibrated":
        r = kernel_sums(res, consts)
        e1, c1 = solve_escape([A1], [r[:, :1]], np.ones((1, 1)))
        # both anchors carry e_{0,x}(0) = e_{0,x}(x)
        e2, c2 = solve_escape([A2], [r], np.ones((2, 1)))
        w1 = np.exp(-e1[0] * r[:, 0])
        w2 = np.exp(-e2[0] * (r[:, 0] + r[:, 1]))
        j1 = 1 + (A1 * w1 * r[:, 0]).mean()
        j2 = 1 + (A2 * w2 * (r[:, 0] + r[:, 1])).mean()
        infl = 2 * ((A1 * w1 - e1[0]) / j1 - (A2 * w2 - e2[0]) / j2)
        val = 2 * float(e1[0] - e2[0])
    else:
        infl = 2 * (A1 - A2)
        val = float(infl.mean())
    raw = 2 * float(A1.mean() - A2.mean())
    se = float(infl.std(ddof=1) / np.sqrt(replicas))
    return EstimateCI(val, se, replicas,
                      float(CORRECTION_REL_ERR * abs(raw - val) + trunc_frac))


def hit_probability(z, law, replicas: int, seed: int = 0, tree: str = "past",
                    stop_radius: float | None = None,
                    constants: TruncationConstants | None = None) -> EstimateCI:
    """P(the walk indexed by a past or critical tree from z hits 0).

    The truncation ball is centered at z/2 as in ``pair_deficit``; pruned
    parts are credited with exp(-BCap({0}) r) misses, BCap({0}) taken from
    the calibration record.
    """
    if tree not in ("past", "critical"):
        raise ValueError(f"unknown tree {tree!r}")
    law = make_law(law)
    z = as_point(z)
    d = len(z)
    if not any(z):
        raise ValueError("z must differ from 0")
    consts = constants or truncation_constants(d, law)
    o = (0,) * d
    zr = np.asarray(z, dtype=float)
    nz = float(np.linalg.norm(zr))
    R = max(MIN_RADIUS + 0.5 * nz, 1.25 * nz) if stop_radius is None else float(stop_radius)
    T = Target(LatticeSet([o], d=d))
    anchors = np.zeros((1, d))
    keys = tree_keys(seed, "hit", tree, law.name, *z, n=replicas)
    W = walker(law, d)
    if tree == "past":
        av, res, _ = W.escape(keys, z, T, 0.5 * zr, R, anchors)
        miss = (av == 1).astype(float)
        trunc = float((av < 0).mean())
    else:
        out = W.hits(keys, z, T, 0.5 * zr, R, root="critical", anchors=anchors)
        miss = (~out["hit"]).astype(float)
        res = out["res"]
        trunc = float(out["truncated"].mean())
    raw = 1.0 - miss
    if consts.mode == "calibrated":
        b0 = calibration(d, law, full=True).bcap_singleton
        f = 1.0 - miss * np.exp(-b0 * kernel_sums(res, consts)[:, 0])
    else:
        f = raw
    m = EstimateCI.from_samples(f)
    return EstimateCI(m.mean, m.se, replicas,
                      float(CORRECTION_REL_ERR * abs(m.mean - raw.mean()) + trunc))


def hit_decay(distances, law, replicas: int, seed: int = 0, tree: str = "past",
              d: int = 5) -> dict:
    """Hit probabilities from z = r e_1 over the given r and their log-log
    slope (expected -(d-4) for past trees, -(d-2) for critical trees)."""
    est = {}
    for r in distances:
        z = (int(r),) + (0,) * (d - 1)
        est[int(r)] = hit_probability(z, law, replicas, seed, tree)
    rs = sorted(est)
    slope, se = loglog_slope(rs, [est[r].mean for r in rs], [est[r].total_se for r in rs])
    return {"estimates": est, "slope": slope, "slope_se": se,
            "expected": -(d - 4) if tree == "past" else -(d - 2)}
