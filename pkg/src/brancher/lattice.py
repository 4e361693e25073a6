"""Lattice geometry: points of Z^d, finite sets, norms, spheres and scales."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.spatial import cKDTree

NORMS = ("euclidean", "linf")
Point = tuple


class EmptySet(ValueError):
    pass


class PointNotInF(ValueError):
    pass


def as_point(x, d: int | None = None) -> tuple[int, ...]:
    p = tuple(int(c) for c in np.ravel(x))
    if d is not None and len(p) != d:
        raise ValueError(f"expected a point of dimension {d}, got {p}")
    return p


def origin(d: int) -> tuple[int, ...]:
    return (0,) * d


def unit(d: int, axis: int, sign: int = 1) -> tuple[int, ...]:
    e = [0] * d
    e[axis] = sign
    return tuple(e)


def norm(v, kind: str) -> float:
    v = np.asarray(v, dtype=float)
    if kind == "euclidean":
        return float(np.sqrt(np.sum(v * v, axis=-1)))
    if kind == "linf":
        return float(np.max(np.abs(v), axis=-1))
    raise ValueError(f"unknown norm {kind!r}")


class LatticeSet:
    """Finite subset of Z^d stored as a lexicographically sorted array of
    distinct points, with a hash index for membership."""

    def __init__(self, points, d: int | None = None):
        arr = np.asarray(points, dtype=np.int64)
        if arr.size == 0:
            if d is None:
                raise ValueError("dimension required for an empty set")
            arr = np.zeros((0, d), dtype=np.int64)
        if arr.ndim == 1:
            arr = arr[None, :]
        arr = np.unique(arr, axis=0)
        arr.setflags(write=False)
        self.points = arr

    @classmethod
    def box(cls, lo, hi) -> "LatticeSet":
        """All points y with lo <= y <= hi coordinatewise (sides may be 0)."""
        lo = np.asarray(lo, dtype=np.int64)
        hi = np.asarray(hi, dtype=np.int64)
        axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return cls(grid.reshape(-1, len(lo)), d=len(lo))

    @classmethod
    def from_text(cls, text: str, d: int | None = None) -> "LatticeSet":
        rows = [line.split() for line in text.splitlines()
                if line.strip() and not line.lstrip().startswith("#")]
        pts = [[int(c) for c in r] for r in rows]
        return cls(pts, d=d)

    def to_text(self) -> str:
        return "".join(" ".join(str(int(c)) for c in p) + "\n"
                       for p in self.points)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        return (tuple(int(c) for c in p) for p in self.points)

    @cached_property
    def _index(self) -> dict[tuple[int, ...], int]:
        return {p: i for i, p in enumerate(self)}

    def __contains__(self, x) -> bool:
        return as_point(x) in self._index

    def index(self, x) -> int:
        return self._index[as_point(x)]

    def __eq__(self, other) -> bool:
        return (isinstance(other, LatticeSet)
                and self.points.shape == other.points.shape
                and bool(np.all(self.points == other.points)))

    def __hash__(self) -> int:
        return hash(self.points.tobytes())

    def __repr__(self) -> str:
        return f"LatticeSet(d={self.d}, n={len(self)})"

    @property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if len(self) == 0:
            raise EmptySet("empty set has no bounding box")
        return self.points.min(axis=0), self.points.max(axis=0)

    @property
    def center(self) -> np.ndarray:
        lo, hi = self.bounding_box
        return (lo + hi) / 2.0

    def union(self, *others: "LatticeSet") -> "LatticeSet":
        return LatticeSet(np.vstack([self.points] + [o.points for o in others]),
                          d=self.d)

    def translate(self, v) -> "LatticeSet":
        return LatticeSet(self.points + np.asarray(v, dtype=np.int64), d=self.d)

    def subset_of(self, other: "LatticeSet") -> bool:
        return all(p in other for p in self)

    def mask_in(self, other: "LatticeSet") -> np.ndarray:
        """Boolean vector over other's points: True where the point lies in self."""
        return np.array([p in self for p in other], dtype=bool)

    @cached_property
    def table(self) -> np.ndarray:
        """Open-addressing hash slots consumed by the compiled walkers."""
        from ._kernels import build_table
        return build_table(np.ascontiguousarray(self.points))


def _require(*sets: LatticeSet) -> None:
    for s in sets:
        if len(s) == 0:
            raise EmptySet("operation needs a nonempty set")


def dist(A: LatticeSet, B: LatticeSet, norm: str) -> float:
    """Exact min over x in A, y in B of ||x - y||."""
    _require(A, B)
    p = {"euclidean": 2, "linf": np.inf}[norm]
    if len(A) * len(B) <= 250_000:
        diff = A.points[:, None, :] - B.points[None, :, :]
        if norm == "euclidean":
            return float(np.sqrt((diff.astype(float) ** 2).sum(-1).min()))
        return float(np.abs(diff).max(-1).min())
    small, big = (A, B) if len(A) <= len(B) else (B, A)
    dd, _ = cKDTree(big.points).query(small.points, p=p)
    return float(np.min(dd))


def diam(K: LatticeSet, norm: str) -> float:
    """1 + max pairwise distance (a singleton has diameter 1)."""
    _require(K)
    pts = K.points.astype(float)
    best = 0.0
    step = max(1, 200_000 // max(len(K), 1))
    for i in range(0, len(K), step):
        diff = pts[i:i + step, None, :] - pts[None, :, :]
        if norm == "euclidean":
            m = np.sqrt((diff ** 2).sum(-1).max())
        elif norm == "linf":
            m = np.abs(diff).max()
        else:
            raise ValueError(f"unknown norm {norm!r}")
        best = max(best, float(m))
    return 1.0 + best


def _linf_shell(d: int, r: int) -> np.ndarray:
    """Offsets w in Z^d with |w|_inf == r, built face by face."""
    if r == 0:
        return np.zeros((1, d), dtype=np.int64)
    if d == 1:
        return np.array([[-r], [r]], dtype=np.int64)
    full = np.arange(-r, r + 1)
    blocks = []
    for c in range(-r, r + 1):
        if abs(c) == r:
            rest = np.stack(np.meshgrid(*([full] * (d - 1)), indexing="ij"),
                            axis=-1).reshape(-1, d - 1)
        else:
            rest = _linf_shell(d - 1, r)
        blocks.append(np.hstack([np.full((len(rest), 1), c), rest]))
    return np.vstack(blocks).astype(np.int64)


def _euclid_shell(d: int, r2: int) -> list[tuple[int, ...]]:
    """Integer vectors with squared length exactly r2."""
    if d == 1:
        s = int(round(np.sqrt(r2)))
        if s * s != r2:
            return []
        return [(0,)] if s == 0 else [(-s,), (s,)]
    out = []
    m = int(np.floor(np.sqrt(r2)))
    for c in range(-m, m + 1):
        for rest in _euclid_shell(d - 1, r2 - c * c):
            out.append((c,) + rest)
    return out


def linf_sphere_size(d: int, r: int) -> int:
    return 1 if r == 0 else (2 * r + 1) ** d - (2 * r - 1) ** d


def sphere(x, r: int, norm: str) -> LatticeSet:
    """{y : |y - x| = r} for the chosen norm, enumerated exactly."""
    x = np.asarray(as_point(x), dtype=np.int64)
    d = len(x)
    if r < 0:
        raise ValueError("radius must be nonnegative")
    if norm == "linf":
        offs = _linf_shell(d, int(r))
    elif norm == "euclidean":
        shell = _euclid_shell(d, int(r) * int(r))
        offs = np.array(shell, dtype=np.int64).reshape(-1, d)
    else:
        raise ValueError(f"unknown norm {norm!r}")
    return LatticeSet(offs + x, d=d)


def in_plane(x) -> bool:
    return all(c == 0 for c in as_point(x)[2:])


def frame(x, r: int, d: int | None = None) -> LatticeSet:
    """Planar l_inf sphere of radius r around x inside F = Z^2 x {0}^(d-2)."""
    p = as_point(x, d)
    if not in_plane(p):
        raise PointNotInF(f"{p} is not in the plane F")
    ring = _linf_shell(2, int(r))
    pts = np.zeros((len(ring), len(p)), dtype=np.int64)
    pts[:, :2] = ring
    return LatticeSet(pts + np.asarray(p, dtype=np.int64), d=len(p))


def plane_box(x, r: int) -> LatticeSet:
    """Planar l_inf ball of radius r around x inside F."""
    p = np.asarray(as_point(x), dtype=np.int64)
    if not in_plane(p):
        raise PointNotInF(f"{tuple(p)} is not in the plane F")
    lo = p.copy()
    hi = p.copy()
    lo[:2] -= r
    hi[:2] += r
    return LatticeSet.box(lo, hi)


def linf_ball(x, r: int) -> LatticeSet:
    p = np.asarray(as_point(x), dtype=np.int64)
    return LatticeSet.box(p - r, p + r)


@dataclass(frozen=True)
class ScaleLadder:
    """Geometric scales L_n = L0 * 6**n."""

    L0: int
    n_max: int = 8
    ratio: int = field(default=6, init=False)

    def __post_init__(self) -> None:
        if self.L0 < 1:
            raise ValueError("L0 must be a positive integer")

    def L(self, n: int) -> int:
        if n < 0:
            raise ValueError("scale index must be nonnegative")
        return self.L0 * self.ratio ** n

    @property
    def levels(self) -> list[int]:
        return [self.L(n) for n in range(self.n_max + 1)]


def sample_points(rng: np.random.Generator, n: int, d: int, radius: int) -> LatticeSet:
    """n distinct uniform points in the l_inf ball of given radius."""
    side = 2 * radius + 1
    if n > side ** d:
        raise ValueError("not enough room")
    pts: set[tuple[int, ...]] = set()
    while len(pts) < n:
        pts.add(tuple(int(c) for c in rng.integers(-radius, radius + 1, d)))
    return LatticeSet(sorted(pts), d=d)


def neighbors(x: Sequence[int]) -> list[tuple[int, ...]]:
    out = []
    for a in range(len(x)):
        for s in (1, -1):
            y = list(x)
            y[a] += s
            out.append(tuple(y))
    return out


def star_neighbors(x: Sequence[int]) -> Iterable[tuple[int, ...]]:
    for off in product((-1, 0, 1), repeat=len(x)):
        if any(off):
            yield tuple(c + o for c, o in zip(x, off))
