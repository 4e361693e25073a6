"""Vacant-set geometry on finite windows and proper embeddings of binary trees.

A proper embedding of the depth-n binary tree T_n with root x maps a node m
at depth k to a point of L_{n-k} Z^d, and its two children to points at
l_inf distance L_{n-k} and 2 L_{n-k} from it.  Nodes are tuples over {1, 2};
the root is ().
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from itertools import product
from typing import Iterator

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .harness.stats import EstimateCI
from .harness.streams import stream
from .lattice import (LatticeSet, ScaleLadder, _linf_shell, as_point,
                      linf_sphere_size, neighbors, origin, plane_box,
                      star_neighbors)
from .offspring import make_law

MAX_ENUMERATION = 10**6
MODES = ("nearest_neighbor", "star")


class AnnulusOutsideWindow(ValueError):
    pass


class TooLargeToEnumerate(ValueError):
    def __init__(self, msg: str, count: int):
        super().__init__(msg)
        self.count = count


class PathDoesNotCross(ValueError):
    pass


def linf(a, b) -> int:
    return int(np.max(np.abs(np.asarray(a) - np.asarray(b))))


# ------------------------------------------------------------ components

def _occupancy(field) -> tuple[LatticeSet, np.ndarray]:
    return field.window, np.asarray(field.occupied, dtype=bool)


@dataclass
class Components:
    """Vacant components: label of every vacant point (its smallest point)
    and the size histogram {size: count}."""

    labels: dict
    sizes: dict
    histogram: dict

    def __len__(self) -> int:
        return len(self.sizes)


def vacant_components(field, box: LatticeSet | None = None) -> Components:
    """Nearest-neighbour components of the vacant set inside box (default
    the whole window)."""
    window, occ = _occupancy(field)
    box = window if box is None else box
    pts = [p for p in box if p in window and not occ[window.index(p)]]
    idx = {p: i for i, p in enumerate(pts)}
    rows, cols = [], []
    for p, i in idx.items():
        for q in neighbors(p):
            j = idx.get(q)
            if j is not None and j > i:
                rows.append(i)
                cols.append(j)
    n = len(pts)
    if n == 0:
        return Components({}, {}, {})
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, lab = connected_components(graph, directed=False)
    rep: dict[int, tuple] = {}
    for p, i in idx.items():
        c = lab[i]
        if c not in rep or p < rep[c]:
            rep[c] = p
    labels = {p: rep[lab[i]] for p, i in idx.items()}
    sizes: dict = {}
    for r in labels.values():
        sizes[r] = sizes.get(r, 0) + 1
    hist: dict = {}
    for s in sizes.values():
        hist[s] = hist.get(s, 0) + 1
    return Components(labels, sizes, dict(sorted(hist.items())))


# ------------------------------------------------------------ crossings

@dataclass
class CrossingResult:
    crossed: bool
    witness_path: list | None
    connectivity_mode: str


def crossing(field, x, level_n: int, ladder: ScaleLadder,
             mode: str = "nearest_neighbor") -> CrossingResult:
    """Whether S(x, L_n - 1) is joined to S(x, 2 L_n) inside the annulus.

    nearest_neighbor searches the vacant set, star the occupied set, both
    restricted to the field window (frames in F for planar windows).  A
    witness path from the inner to the outer sphere is returned on success.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    window, occ = _occupancy(field)
    x = as_point(x, window.d)
    L = ladder.L(level_n)
    r_in, r_out = L - 1, 2 * L
    lo, hi = np.asarray(x) - r_out, np.asarray(x) + r_out
    planar = bool(np.all(window.points[:, 2:] == 0)) if window.d > 2 else False
    if planar:
        lo[2:] = hi[2:] = np.asarray(x)[2:]
    need = LatticeSet.box(lo, hi)
    if not need.subset_of(window):
        raise AnnulusOutsideWindow(
            f"annulus around {x} at scale {L} is not inside the window")
    want_occ = mode == "star"
    step = star_neighbors if mode == "star" else neighbors
    if planar:
        tail = tuple(x[2:])

        def step(p, _s=step):
            return [q[:2] + tail for q in _s(p[:2])]

    def open_(p) -> bool:
        if p not in window:
            return False
        r = linf(p, x)
        return r_in <= r <= r_out and bool(occ[window.index(p)]) == want_occ

    starts = [p for p in window if linf(p, x) == r_in and open_(p)]
    parent = {p: None for p in starts}
    queue = deque(starts)
    while queue:
        p = queue.popleft()
        if linf(p, x) == r_out:
            path = [p]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return CrossingResult(True, path[::-1], mode)
        for q in step(p):
            if q not in parent and open_(q):
                parent[q] = p
                queue.append(q)
    return CrossingResult(False, None, mode)


def crossing_curve(u_grid, n: int, law, replicas: int, seed: int = 0,
                   L0: int = 1, d: int = 5, cap_replicas: int = 300,
                   stop_radius: float | None = None) -> list[dict]:
    """Crossing probabilities of the planar annulus at scale n across u.

    One field per replica at the top level serves every u by level
    coupling, so the vacant crossing frequency is nonincreasing in u
    replica by replica.  Traces are the observed ones (no truncation
    correction).
    """
    from .capacity import bcap
    from .interlacement import TrajectorySampler, sample_field

    law = make_law(law)
    ladder = ScaleLadder(L0)
    window = plane_box(origin(d), 2 * ladder.L(n))
    cap = bcap(window, law, cap_replicas, stop_radius=stop_radius, seed=seed)
    sampler = TrajectorySampler(window, cap, law)
    us = sorted(float(u) for u in u_grid)
    vac = np.zeros((len(us), replicas))
    occ = np.zeros((len(us), replicas))
    x0 = origin(d)
    for i in range(replicas):
        f = sample_field(window, us[-1], law, stream(seed, "crossing", n, i),
                         sampler=sampler)
        for j, u in enumerate(us):
            g = f.at(u)
            vac[j, i] = crossing(g, x0, n, ladder, "nearest_neighbor").crossed
            occ[j, i] = crossing(g, x0, n, ladder, "star").crossed
    out = []
    for j, u in enumerate(us):
        for mode, arr in (("nearest_neighbor", vac[j]), ("star", occ[j])):
            e = EstimateCI.from_binomial(int(arr.sum()), replicas)
            out.append({"u": u, "n": n, "L0": L0, "d": d, "mode": mode,
                        "replicas": replicas, "p_hat": e.mean, "se": e.se})
    return out


# ------------------------------------------------------------ embeddings

def tree_nodes(n: int) -> list[tuple]:
    """Nodes of T_n, by depth then lexicographically."""
    return [m for k in range(n + 1) for m in product((1, 2), repeat=k)]


def leaves(n: int) -> list[tuple]:
    return [tuple(m) for m in product((1, 2), repeat=n)]


@dataclass
class EmbeddingMap:
    n: int
    root: tuple
    values: dict
    ladder: ScaleLadder = field(default_factory=lambda: ScaleLadder(1))

    def L(self, k: int) -> int:
        return self.ladder.L(k)

    def violations(self) -> list[str]:
        """Broken conditions of a proper embedding (empty when proper)."""
        out = []
        if self.values.get(()) != self.root:
            out.append("root")
        for m in tree_nodes(self.n):
            if m not in self.values:
                out.append(f"missing {m}")
                continue
            k = len(m)
            v = np.asarray(self.values[m])
            if np.any(v % self.L(self.n - k)):
                out.append(f"lattice {m}")
            if k < self.n:
                for c, mult in ((1, 1), (2, 2)):
                    child = self.values.get(m + (c,))
                    if child is not None and linf(child, v) != mult * self.L(self.n - k):
                        out.append(f"distance {m + (c,)}")
        return out

    def is_proper(self) -> bool:
        return not self.violations()

    def leaf_values(self) -> dict:
        return {m: self.values[m] for m in leaves(self.n)}


def embedding_count(n: int, d: int) -> int:
    """C_d^(2^n - 1) with C_d = |S_inf(6)| |S_inf(12)| counted in Z^d."""
    return (linf_sphere_size(d, 6) * linf_sphere_size(d, 12)) ** (2 ** n - 1)


def _child_offsets(d: int) -> tuple[np.ndarray, np.ndarray]:
    return _linf_shell(d, 6), _linf_shell(d, 12)


def iter_embeddings(n: int, x, ladder: ScaleLadder, d: int,
                    max_count: int = MAX_ENUMERATION) -> Iterator[EmbeddingMap]:
    """Every proper embedding of T_n rooted at x, by choosing the two
    children of each internal node on the sphere lattices of radius 6 and
    12 in units of the child scale."""
    count = embedding_count(n, d)
    if count > max_count:
        raise TooLargeToEnumerate(f"{count} embeddings", count)
    x = as_point(x, d)
    if np.any(np.asarray(x) % ladder.L(n)):
        raise ValueError("root must lie in L_n Z^d")
    s6, s12 = _child_offsets(d)
    internal = [m for m in tree_nodes(n) if len(m) < n]

    def rec(i: int, values: dict):
        if i == len(internal):
            yield EmbeddingMap(n, x, dict(values), ladder)
            return
        m = internal[i]
        unit = ladder.L(n - len(m) - 1)
        base = np.asarray(values[m])
        for a in s6:
            values[m + (1,)] = tuple(int(c) for c in base + unit * a)
            for b in s12:
                values[m + (2,)] = tuple(int(c) for c in base + unit * b)
                yield from rec(i + 1, values)
        values.pop(m + (1,), None)
        values.pop(m + (2,), None)

    yield from rec(0, {(): x})


@dataclass
class EmbeddingEnumeration:
    count: int
    exhaustive: bool
    maps: list | None = None


def enumerate_embeddings(n: int, x, ladder: ScaleLadder, d: int,
                         max_count: int = MAX_ENUMERATION,
                         keep: bool = False) -> EmbeddingEnumeration:
    """|Lambda_{n,x}|, counted exhaustively when at most max_count,
    otherwise from the closed form."""
    try:
        maps = []
        c = 0
        for M in iter_embeddings(n, x, ladder, d, max_count):
            c += 1
            if keep:
                maps.append(M)
        return EmbeddingEnumeration(c, True, maps if keep else None)
    except TooLargeToEnumerate as e:
        return EmbeddingEnumeration(e.count, False, None)


def random_embedding(n: int, x, ladder: ScaleLadder, d: int,
                     rng: np.random.Generator) -> EmbeddingMap:
    """Uniform element of Lambda_{n,x} (children chosen independently)."""
    s6, s12 = _child_offsets(d)
    x = as_point(x, d)
    values = {(): x}
    for m in tree_nodes(n):
        if len(m) == n:
            continue
        unit = ladder.L(n - len(m) - 1)
        base = np.asarray(values[m])
        values[m + (1,)] = tuple(int(c) for c in base + unit * s6[rng.integers(len(s6))])
        values[m + (2,)] = tuple(int(c) for c in base + unit * s12[rng.integers(len(s12))])
    return EmbeddingMap(n, x, values, ladder)


def _round_to(y: np.ndarray, c: np.ndarray, unit: int) -> tuple:
    # nearest point of unit Z^d, ties towards c; keeps |. - c|_inf unchanged
    # when c and the sphere radius are multiples of unit
    off = y - c
    q = np.floor(np.abs(off) / unit + 0.5 - 1e-9).astype(np.int64)
    return tuple(int(v) for v in c + np.sign(off) * q * unit)


def _hits_sphere(path: np.ndarray, c, r: int) -> np.ndarray:
    return np.max(np.abs(path - np.asarray(c)), axis=1) == r


def embedding_from_path(path, x, n: int, ladder: ScaleLadder) -> EmbeddingMap:
    """A proper embedding whose leaf frames S(M(m), L0 - 1) all meet the
    path, for a *-path joining S(x, L_n - 1) to S(x, 2 L_n).

    Going down the tree, a node c at scale L with the path crossing from
    S(c, L-1) to S(c, 2L) gets as children the points of the child lattice
    nearest to where the path meets S(c, L) and S(c, 2L); the path then
    crosses the child annuli as well.  Among qualifying candidates the
    lexicographically smallest is taken.
    """
    path = np.asarray([as_point(p) for p in path], dtype=np.int64)
    if len(path) > 1 and np.any(np.max(np.abs(np.diff(path, axis=0)), axis=1) != 1):
        raise ValueError("path is not *-connected")
    x = as_point(x, path.shape[1])
    L = ladder.L(n)
    if np.any(np.asarray(x) % L):
        raise ValueError("root must lie in L_n Z^d")
    if not (_hits_sphere(path, x, L - 1).any() and _hits_sphere(path, x, 2 * L).any()):
        raise PathDoesNotCross("path does not join S(x, L_n - 1) to S(x, 2 L_n)")

    def crosses(c, scale) -> bool:
        return bool(_hits_sphere(path, c, scale - 1).any()
                    and _hits_sphere(path, c, 2 * scale).any())

    values = {(): x}
    for m in tree_nodes(n):
        k = len(m)
        if k == n:
            continue
        scale, unit = ladder.L(n - k), ladder.L(n - k - 1)
        c = np.asarray(values[m])
        for tag, r in ((1, scale), (2, 2 * scale)):
            hits = path[_hits_sphere(path, c, r)]
            cands = sorted({_round_to(y, c, unit) for y in hits})
            good = [q for q in cands if linf(q, c) == r and crosses(q, unit)]
            if not good:
                raise PathDoesNotCross(f"no child annulus crossed below {m}")
            values[m + (tag,)] = good[0]
    return EmbeddingMap(n, x, values, ladder)


def frame_distance(a, b, r: int) -> int:
    """min |y - z|_inf over y in S(a, r), z in S(b, r) (d >= 2)."""
    return max(linf(a, b) - 2 * r, 0)


def embedding_separation_check(M: EmbeddingMap) -> bool:
    """M is proper and frames of leaves whose common ancestor sits k levels
    above them are at l_inf distance at least L_{k-1}."""
    if not M.is_proper():
        return False
    r = M.ladder.L0 - 1
    lv = leaves(M.n)
    for i, a in enumerate(lv):
        for b in lv[i + 1:]:
            common = 0
            while common < M.n and a[common] == b[common]:
                common += 1
            k = M.n - common
            if frame_distance(M.values[a], M.values[b], r) < M.L(k - 1):
                return False
    return True


def random_crossing_path(x, n: int, ladder: ScaleLadder, d: int,
                         rng: np.random.Generator, max_steps: int = 10**7) -> list:
    """A *-path from a uniform point of S(x, L_n - 1) run as a lazy-free
    random walk over the 3^d - 1 star moves until it reaches S(x, 2 L_n)."""
    x = np.asarray(as_point(x, d), dtype=np.int64)
    L = ladder.L(n)
    inner = _linf_shell(d, L - 1)
    p = x + inner[rng.integers(len(inner))]
    moves = np.array([m for m in product((-1, 0, 1), repeat=d) if any(m)],
                     dtype=np.int64)
    path = [tuple(int(c) for c in p)]
    for _ in range(max_steps):
        p = p + moves[rng.integers(len(moves))]
        path.append(tuple(int(c) for c in p))
        if np.max(np.abs(p - x)) == 2 * L:
            return path
    raise RuntimeError("random path did not reach the outer sphere")
