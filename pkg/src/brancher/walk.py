"""Tree-indexed random walks on Z^d.

Each tree edge carries an independent uniform nearest-neighbour step, drawn
from the key of the child vertex, so a walk is a deterministic function of
its tree key.  Ranges are truncated in space: a vertex farther than the
stop radius from the truncation center is visited but its descendants are
not, and every such pruning contributes a term to the truncation
certificate.

Two implementations share the key scheme: plain Python (``sample_*``,
returning full ranges) and the compiled ``Walker`` (returning hit
indicators, residual sums and ranges restricted to a point table).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels as _k
from . import keys as K
from .gwtree import InvariantTreeWindow, TreeEventStream
from .harness.stats import EstimateCI
from .lattice import LatticeSet, as_point
from .offspring import OffspringLaw, adjoint, size_biased

HEURISTIC_C = 1.0
HEURISTIC_SAFETY = 10.0


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class TruncationConstants:
    """Prefactors turning residual sums into hitting probabilities:
    crit * BCap(K) * dist^(2-d) per pruned critical subtree root and
    spine * BCap(K) * dist^(4-d) for the pruned spine tail."""

    crit: float
    spine: float
    mode: str

    @classmethod
    def heuristic(cls) -> "TruncationConstants":
        c = HEURISTIC_C * HEURISTIC_SAFETY
        return cls(c, c, "heuristic")


@dataclass(frozen=True)
class TruncationCert:
    """radius: stop radius; residual_bound: upper estimate of the probability
    that the pruned part hits the study set (distances to its bounding box);
    correction: first-order estimate of that probability using distances to
    the truncation center (calibrated mode only, else 0)."""

    radius: float
    residual_bound: float
    constants_mode: str
    correction: float = 0.0
    truncated: bool = False

    def __post_init__(self) -> None:
        if self.residual_bound < 0:
            raise ValueError("residual bound must be nonnegative")


def anchor_terms(res, consts: TruncationConstants, weights) -> np.ndarray:
    """First-order probability that the pruned part hits the anchors:
    sum_j w_j (crit * res[2 + 2j] + spine * res[3 + 2j]), where w_j is the
    escape probability (equilibrium weight) carried by anchor j."""
    res = np.asarray(res, dtype=float)
    w = np.atleast_1d(np.asarray(weights, dtype=float))
    out = np.zeros(res.shape[:-1])
    for j, wj in enumerate(w):
        out = out + wj * (consts.crit * res[..., _k.RES_CRIT_CTR + 2 * j]
                          + consts.spine * res[..., _k.RES_SPINE_CTR + 2 * j])
    return out


def make_cert(radius: float, res, bcap: float, consts: TruncationConstants,
              truncated: bool = False, weights=None) -> TruncationCert:
    """res: residual sums in the kernel's column layout (box crit, box spine,
    then crit and spine sums for each anchor).  Without weights the whole
    capacity sits on anchor 0."""
    res = np.asarray(res, dtype=float)
    bound = bcap * (consts.crit * res[..., _k.RES_CRIT_BOX]
                    + consts.spine * res[..., _k.RES_SPINE_BOX])
    corr = 0.0
    if consts.mode == "calibrated":
        corr = anchor_terms(res, consts, [bcap] if weights is None else weights)
    return TruncationCert(float(radius), float(np.sum(bound)), consts.mode,
                          float(np.sum(corr)), truncated)


@dataclass(frozen=True)
class VisitPath:
    """A nearest-neighbour path gamma(0..n) with gamma(n) the only point in K."""

    points: tuple
    K: LatticeSet

    def __post_init__(self) -> None:
        pts = tuple(as_point(p) for p in self.points)
        object.__setattr__(self, "points", pts)
        if not pts:
            raise ValueError("empty path")
        if pts[-1] not in self.K:
            raise ValueError("path must end in K")
        if any(p in self.K for p in pts[:-1]):
            raise ValueError("path enters K before its last point")
        for a, b in zip(pts, pts[1:]):
            if sum(abs(x - y) for x, y in zip(a, b)) != 1:
                raise ValueError(f"{a} -> {b} is not a nearest-neighbour step")

    def __len__(self) -> int:
        return len(self.points) - 1


@dataclass
class TreeWalkSample:
    start: tuple
    past_range: LatticeSet
    future_range: LatticeSet
    truncation: TruncationCert
    spine_path: list | None = None
    first_visit: VisitPath | None = None
    past_hit: bool = False
    hit: bool = False
    nodes: int = 0


# ---------------------------------------------------------------- reference

def _box_dist2(pos, lo, hi) -> float:
    t = np.maximum(lo - pos, 0) + np.maximum(pos - hi, 0)
    return max(float(np.dot(t, t)), 1.0)


class _Explorer:
    """Python depth-first walker mirroring the compiled ``_subtree``."""

    def __init__(self, law: OffspringLaw, d: int, center, radius: float,
                 K_set: LatticeSet | None, max_nodes: int, anchors=None):
        self.cdf = law.cdf()
        self.d = d
        self.center = np.asarray(center, dtype=float)
        self.anchors = (self.center[None, :] if anchors is None
                        else np.asarray(anchors, dtype=float).reshape(-1, d))
        self.r2 = float(radius) ** 2
        self.K = K_set
        if K_set is not None and len(K_set):
            self.klo, self.khi = (b.astype(float) for b in K_set.bounding_box)
        else:
            self.klo = self.khi = self.center
        self.max_nodes = max_nodes
        self.nodes = 0
        self.truncated = False
        self.res = np.zeros(2 + 2 * len(self.anchors))

    def _add(self, p, col: int, expo: float) -> None:
        p = np.asarray(p, dtype=float)
        self.res[col - 2] += _box_dist2(p, self.klo, self.khi) ** -expo
        for j, a in enumerate(self.anchors):
            self.res[col + 2 * j] += max(float(np.sum((p - a) ** 2)), 1.0) ** -expo

    def outside(self, pos) -> tuple[bool, float]:
        s2 = float(np.sum((np.asarray(pos) - self.center) ** 2))
        return s2 > self.r2, s2

    def subtree(self, key: int, pos, root_cdf, visited: set, stop_on_hit: bool,
                geodesic: list | None = None) -> bool:
        """Explore; returns True if K was hit (and records the geodesic to
        the first hitter in depth-first order when requested)."""
        hit = False
        stack = [(key, 0, tuple(pos))]
        path: list = []
        while stack:
            k, h, p = stack.pop()
            del path[h:]
            path.append(p)
            self.nodes += 1
            if self.nodes > self.max_nodes:
                self.truncated = True
                return hit
            visited.add(p)
            if self.K is not None and p in self.K:
                if not hit:
                    hit = True
                    if geodesic is not None:
                        geodesic.extend(path)
                if stop_on_hit:
                    return True
            if self.outside(p)[0]:
                self._add(p, _k.RES_CRIT_CTR, 0.5 * (self.d - 2))
                continue
            cdf = root_cdf if h == 0 else self.cdf
            nc = K.draw(cdf, K.uniform(k, K.SALT_COUNT))
            for c in range(nc - 1, -1, -1):
                ck = K.child_key(k, c)
                step = K.step_vector(ck, self.d)
                stack.append((ck, h + 1, tuple(a + b for a, b in zip(p, step))))
        return hit


def sample_branching_walk(tree: TreeEventStream, start, stop_radius: float,
                          K_set: LatticeSet | None = None, center=None,
                          bcap: float | None = None,
                          constants: TruncationConstants | None = None,
                          stop_on_hit: bool = False, anchors=None) -> TreeWalkSample:
    """Range of the walk indexed by a finite tree (critical or adjoint).

    With K_set given, also reports whether K was hit and the first-visit
    path: the walk along the geodesic from the root to the first vertex in
    depth-first order whose position lies in K.
    """
    start = as_point(start)
    d = len(start)
    center = start if center is None else center
    ex = _Explorer(tree.law, d, center, stop_radius, K_set, tree.max_size, anchors)
    visited: set = set()
    geo: list = []
    hit = ex.subtree(tree.key, start, tree.root_pmf.cdf(), visited, stop_on_hit, geo)
    consts = constants or TruncationConstants.heuristic()
    b = bcap if bcap is not None else (len(K_set) if K_set is not None else 0.0)
    cert = make_cert(stop_radius, ex.res, b, consts, ex.truncated)
    fv = VisitPath(tuple(geo), K_set) if hit else None
    return TreeWalkSample(start, LatticeSet([], d=d),
                          LatticeSet(sorted(visited), d=d), cert,
                          first_visit=fv, hit=hit, nodes=ex.nodes)


def sample_invariant_walk(window: InvariantTreeWindow, start, stop_radius: float,
                          K_set: LatticeSet | None = None, center=None,
                          bcap: float | None = None,
                          constants: TruncationConstants | None = None,
                          max_nodes: int = 10**7, anchors=None) -> TreeWalkSample:
    """Past and future ranges of the walk indexed by the invariant tree.

    The spine is followed until its first vertex outside the stop ball or
    until the window's spine budget is used up; the past range contains the
    spine vertices 1, 2, ... (not the root) and the subtrees left of the
    spine, the future range the root and everything right of it.
    """
    law = window.law
    start = as_point(start)
    d = len(start)
    center = start if center is None else center
    ex = _Explorer(law, d, center, stop_radius, K_set, max_nodes, anchors)
    cdf_sb = size_biased(law).cdf()
    past: set = set()
    fut: set = {start}
    spine = [start]
    expand = []
    pos = np.array(start)
    past_hit = False
    for i in range(1, window.spine_length):
        sk = K.spine_key(window.key, i)
        pos = pos + np.array(K.step_vector(sk, d))
        p = tuple(int(c) for c in pos)
        spine.append(p)
        ex.nodes += 1
        past.add(p)
        if K_set is not None and p in K_set:
            past_hit = True
        npast, nfut = K.spine_split(sk, cdf_sb)
        if ex.outside(p)[0]:
            # once for the past attachments of the pruned tail, once for the future
            ex._add(p, _k.RES_SPINE_CTR, 0.5 * (d - 4))
            ex._add(p, _k.RES_SPINE_CTR, 0.5 * (d - 4))
            break
        expand.append((i, sk, p, npast, nfut))
        for c in range(npast):
            ck = K.child_key(sk, c)
            q = tuple(a + b for a, b in zip(p, K.step_vector(ck, d)))
            past_hit |= ex.subtree(ck, q, ex.cdf, past, False)
    else:
        # spine budget used up before leaving the ball
        ex.truncated = True
    fut_hit = K_set is not None and start in K_set
    rk = K.root_key(window.key)
    out0, _ = ex.outside(start)
    if not out0:
        nf = K.draw(ex.cdf, K.uniform(rk, K.SALT_COUNT))
        for c in range(nf):
            ck = K.child_key(rk, 1 + c)
            q = tuple(a + b for a, b in zip(start, K.step_vector(ck, d)))
            fut_hit |= ex.subtree(ck, q, ex.cdf, fut, False)
    for i, sk, p, npast, nfut in expand:
        for c in range(nfut):
            ck = K.child_key(sk, npast + 1 + c)
            q = tuple(a + b for a, b in zip(p, K.step_vector(ck, d)))
            fut_hit |= ex.subtree(ck, q, ex.cdf, fut, False)
    consts = constants or TruncationConstants.heuristic()
    b = bcap if bcap is not None else (len(K_set) if K_set is not None else 0.0)
    cert = make_cert(stop_radius, ex.res, b, consts, ex.truncated)
    return TreeWalkSample(start, LatticeSet(sorted(past), d=d),
                          LatticeSet(sorted(fut), d=d), cert, spine_path=spine,
                          past_hit=past_hit, hit=past_hit or fut_hit,
                          nodes=ex.nodes)


def first_visit_path(sample: TreeWalkSample) -> VisitPath | None:
    """First-visit path of a critical-tree walk sampled with K_set."""
    return sample.first_visit


def b_K_weight(gamma: VisitPath, k_est) -> EstimateCI:
    """(2d)^-n times the product of estimates of k_K over gamma(0..n-1).

    k_est maps a point to an EstimateCI of the probability that the walk
    indexed by an adjoint tree rooted there avoids K.  Each distinct point
    is estimated once; a point repeated m times enters as k^m.
    """
    n = len(gamma)
    d = len(gamma.points[0])
    s = (2 * d) ** -n
    if n == 0:
        return EstimateCI(1.0, 0.0, 1)
    mult: dict = {}
    for p in gamma.points[:-1]:
        mult[p] = mult.get(p, 0) + 1
    val = s
    rel2 = 0.0
    nmin = None
    for p, m in mult.items():
        e = k_est(p)
        val *= e.mean ** m
        if e.mean > 0:
            rel2 += (m * e.se / e.mean) ** 2
        nmin = e.n if nmin is None else min(nmin, e.n)
    return EstimateCI(val, abs(val) * float(np.sqrt(rel2)), nmin or 1)


def enumerate_visit_paths(x, K_set: LatticeSet, max_len: int) -> list[VisitPath]:
    """All nearest-neighbour paths from x that first enter K at their end,
    of length at most max_len."""
    x = as_point(x)
    d = len(x)
    out: list[VisitPath] = []
    if x in K_set:
        return [VisitPath((x,), K_set)]

    def rec(path):
        if len(path) - 1 >= max_len:
            return
        last = path[-1]
        for a in range(d):
            for s in (1, -1):
                y = list(last)
                y[a] += s
                y = tuple(y)
                if y in K_set:
                    out.append(VisitPath(tuple(path) + (y,), K_set))
                else:
                    rec(path + [y])

    rec([x])
    return out


# ------------------------------------------------------------ compiled path

@dataclass
class Target:
    """Point table for the compiled walkers: rows are K united with an
    optional recording window; bit 0 of ``flags`` marks K, bit 1 the window."""

    K: LatticeSet | None
    window: LatticeSet | None = None
    rows: LatticeSet = field(init=False)
    stamp: int = field(default=0, init=False)

    def __post_init__(self) -> None:
        parts = [s for s in (self.K, self.window) if s is not None and len(s)]
        if not parts:
            raise ValueError("a target needs K or a window")
        self.rows = parts[0].union(*parts[1:]) if len(parts) > 1 else parts[0]
        n = len(self.rows)
        self.flags = np.zeros(n, dtype=np.int64)
        if self.K is not None:
            self.flags[self.K.mask_in(self.rows)] |= 1
        if self.window is not None:
            self.flags[self.window.mask_in(self.rows)] |= 2
        self.coords = np.ascontiguousarray(self.rows.points)
        self.slots = self.rows.table
        self.lo, self.hi = self.rows.bounding_box
        ks = self.K if self.K is not None and len(self.K) else self.rows
        lo, hi = ks.bounding_box
        self.klo = lo.astype(float)
        self.khi = hi.astype(float)
        self.marks = np.zeros(n, dtype=np.int64)
        self.out = np.zeros((2, n), dtype=np.int64)

    def next_stamp(self) -> int:
        self.stamp += 1
        return self.stamp


class Walker:
    """Compiled tree-indexed walks for one law and dimension, with reusable
    work buffers (a Walker is not thread-safe).

    Every method takes the truncation ball (center, radius) and optional
    anchors, the points whose distances enter the residual columns 2, 3, ...
    (default: the center alone).
    """

    def __init__(self, law: OffspringLaw, d: int, max_nodes: float = 2e8,
                 stack: int = 1 << 18, depth: int = 1 << 16, spine: int = 1 << 20):
        self.law = law
        self.d = d
        self.max_nodes = float(max_nodes)
        self.cdf_mu = law.cdf()
        self.cdf_sb = size_biased(law).cdf()
        self.cdf_adj = adjoint(law).cdf()
        self.stack_keys = np.zeros(stack, dtype=np.uint64)
        self.stack_pos = np.zeros((stack, d), dtype=np.int64)
        self.stack_depth = np.zeros(stack, dtype=np.int64)
        self.path = np.zeros((depth, d), dtype=np.int64)
        self.path_out = np.zeros((depth, d), dtype=np.int64)
        self.spine_out = np.zeros((spine, d), dtype=np.int64)
        self.spine_keys = np.zeros(spine, dtype=np.uint64)
        self.spine_fut = np.zeros(spine, dtype=np.int64)

    def _pt(self, x) -> np.ndarray:
        return np.asarray(as_point(x, self.d), dtype=np.int64)

    def _ball(self, center, radius, anchors):
        c = np.asarray(center, dtype=float).reshape(self.d)
        a = c[None, :] if anchors is None else np.asarray(anchors, dtype=float)
        return c, float(radius) ** 2, np.ascontiguousarray(a.reshape(-1, self.d))

    def escape(self, keys: np.ndarray, start, target: Target, center,
               radius: float, anchors=None, seen: bool = False):
        """Past avoidance of K: avoid in {1, 0, -1 truncated}, residual rows,
        node counts and (if seen) the table rows visited by the past."""
        c, r2, anc = self._ball(center, radius, anchors)
        n = len(keys)
        avoid = np.zeros(n, dtype=np.int64)
        res = np.zeros((n, 2 + 2 * len(anc)))
        nodes = np.zeros(n)
        out_seen = np.zeros((n, len(target.rows) if seen else 0), dtype=np.bool_)
        _k.escape_batch(np.asarray(keys, dtype=np.uint64), self._pt(start),
                        self.cdf_mu, self.cdf_sb, c, r2, target.lo, target.hi,
                        target.coords, target.slots, target.flags, target.klo,
                        target.khi, anc, self.max_nodes, self.stack_keys,
                        self.stack_pos, self.stack_depth, self.path,
                        self.spine_out, self.spine_keys, self.spine_fut, avoid,
                        res, nodes, out_seen)
        return (avoid, res, nodes, out_seen) if seen else (avoid, res, nodes)

    def hits(self, keys: np.ndarray, start, target: Target, center, radius: float,
             root: str = "critical", stop_on_hit: bool = True, path_len: int = 8,
             anchors=None) -> dict:
        """Finite-tree hits of K: arrays hit, depth, res, nodes, truncated and
        paths (walk along the geodesic to the first hitter, first path_len
        points; depth -1 when no hit)."""
        c, r2, anc = self._ball(center, radius, anchors)
        n = len(keys)
        out = {"hit": np.zeros(n, dtype=np.bool_),
               "depth": np.zeros(n, dtype=np.int64),
               "res": np.zeros((n, 2 + 2 * len(anc))), "nodes": np.zeros(n),
               "truncated": np.zeros(n, dtype=np.bool_),
               "paths": np.zeros((n, path_len, self.d), dtype=np.int64)}
        root_cdf = {"critical": self.cdf_mu, "adjoint": self.cdf_adj}[root]
        _k.hit_batch(np.asarray(keys, dtype=np.uint64), self._pt(start), root_cdf,
                     self.cdf_mu, c, r2, target.lo, target.hi, target.coords,
                     target.slots, target.flags, target.klo, target.khi, anc,
                     self.max_nodes, stop_on_hit, self.stack_keys,
                     self.stack_pos, self.stack_depth, self.path, out["hit"],
                     out["depth"], out["res"], out["nodes"], out["truncated"],
                     out["paths"])
        return out

    def counts(self, keys: np.ndarray, start, target: Target, center,
               radius: float, skip_future: bool = True, anchors=None):
        """Per-tree visit counts of the invariant-tree walk to each table row."""
        c, r2, anc = self._ball(center, radius, anchors)
        n = len(keys)
        counts = np.zeros((n, len(target.rows)), dtype=np.int64)
        res = np.zeros((n, 2 + 2 * len(anc)))
        trunc = np.zeros(n, dtype=np.bool_)
        _k.count_batch(np.asarray(keys, dtype=np.uint64), self._pt(start),
                       self.cdf_mu, self.cdf_sb, c, r2, target.lo, target.hi,
                       target.coords, target.slots, target.flags, target.klo,
                       target.khi, anc, self.max_nodes, skip_future,
                       self.stack_keys, self.stack_pos, self.stack_depth,
                       self.path, self.spine_out, self.spine_keys,
                       self.spine_fut, counts, res, trunc)
        return counts, res, trunc

    def invariant(self, key: int, start, target: Target, center, radius: float,
                  stop_on_past_hit: bool = True, skip_future: bool = False,
                  record: bool = True, anchors=None) -> dict:
        """One invariant-tree walk; recorded rows index ``target.rows``."""
        c, r2, anc = self._ball(center, radius, anchors)
        flags = 0
        if stop_on_past_hit:
            flags |= _k.FLAG_STOP_ON_PAST_HIT
        if skip_future:
            flags |= _k.FLAG_SKIP_FUTURE
        if record:
            flags |= _k.FLAG_RECORD
        res = np.zeros((2, 2 + 2 * len(anc)))
        stamp = target.next_stamp()
        ph, fh, nodes, trunc, nsp, n0, n1 = _k.run_invariant(
            np.uint64(key), self._pt(start), self.cdf_mu, self.cdf_sb, c, r2,
            target.lo, target.hi, target.coords, target.slots, target.flags,
            target.marks, stamp, target.out, target.klo, target.khi, anc, flags,
            self.max_nodes, self.stack_keys, self.stack_pos, self.stack_depth,
            self.path, self.spine_out, self.spine_keys, self.spine_fut, res)
        return {"past_hit": bool(ph), "future_hit": bool(fh), "nodes": nodes,
                "truncated": bool(trunc), "spine_len": int(nsp),
                "spine": self.spine_out[:nsp + 1].copy(),
                "past_rows": target.out[0, :n0].copy(),
                "future_rows": target.out[1, :n1].copy(), "res": res}

    def tree(self, key: int, start, target: Target, center, radius: float,
             root: str = "critical", record: bool = True, anchors=None) -> dict:
        """One finite-tree walk (full traversal); rows index ``target.rows``."""
        c, r2, anc = self._ball(center, radius, anchors)
        flags = _k.FLAG_RECORD if record else 0
        res = np.zeros((2, 2 + 2 * len(anc)))
        stamp = target.next_stamp()
        root_cdf = {"critical": self.cdf_mu, "adjoint": self.cdf_adj}[root]
        hit, nodes, trunc, nrec, hd = _k.run_tree(
            np.uint64(key), self._pt(start), root_cdf, self.cdf_mu, c, r2,
            target.lo, target.hi, target.coords, target.slots, target.flags,
            target.marks, stamp, target.out, target.klo, target.khi, anc, flags,
            self.max_nodes, self.stack_keys, self.stack_pos, self.stack_depth,
            self.path, self.path_out, res)
        return {"hit": bool(hit), "nodes": nodes, "truncated": bool(trunc),
                "rows": target.out[1, :nrec].copy(), "depth": int(hd),
                "path": self.path_out[:hd + 1].copy() if hit else None,
                "res": res[1]}


def rows_to_set(target: Target, rows: Sequence[int]) -> LatticeSet:
    return LatticeSet(target.coords[np.asarray(rows, dtype=np.int64)], d=target.coords.shape[1])
