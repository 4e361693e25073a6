from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brancher.lattice import (EmptySet, LatticeSet, PointNotInF, ScaleLadder,
                              diam, dist, frame, linf_sphere_size, plane_box,
                              sample_points, sphere)


def P(*pts, d=5):
    return LatticeSet(list(pts), d=d)


def test_dist_trivial():
    o = (0,) * 5
    assert dist(P(o), P(o), "euclidean") == 0
    assert dist(P(o), P((3, 4, 0, 0, 0)), "euclidean") == 5
    assert dist(P(o), P((3, 4, 0, 0, 0)), "linf") == 4


def test_dist_empty():
    with pytest.raises(EmptySet):
        dist(LatticeSet([], d=5), P((0,) * 5), "linf")


def brute_dist(A, B, norm):
    best = np.inf
    for a in A.points:
        for b in B.points:
            v = a - b
            best = min(best, np.sqrt((v ** 2).sum()) if norm == "euclidean" else np.abs(v).max())
    return best


def brute_diam(K, norm):
    return 1 + max(np.sqrt(((a - b) ** 2).sum()) if norm == "euclidean" else np.abs(a - b).max()
                   for a in K.points for b in K.points)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("norm", ["euclidean", "linf"])
def test_dist_diam_brute_force(seed, norm):
    g = np.random.default_rng(seed)
    A = sample_points(g, 20, 5, 6)
    B = sample_points(g, 20, 5, 6).translate((5, 0, 0, 0, 0))
    assert dist(A, B, norm) == pytest.approx(brute_dist(A, B, norm))
    assert diam(A, norm) == pytest.approx(brute_diam(A, norm))


def test_dist_large_sets_use_tree_path():
    g = np.random.default_rng(3)
    A = sample_points(g, 600, 3, 30)
    B = sample_points(g, 600, 3, 30).translate((70, 0, 0))
    assert dist(A, B, "euclidean") == pytest.approx(brute_dist(A, B, "euclidean"))


def test_diam_conventions():
    assert diam(P((0,) * 5), "euclidean") == 1
    assert diam(P((0,) * 5, (1, 0, 0, 0, 0)), "euclidean") == 2


def test_sphere_sizes():
    assert len(sphere((0, 0), 1, "linf")) == 8
    assert len(sphere((0,) * 5, 6, "linf")) == 13 ** 5 - 11 ** 5 == 210242
    assert sphere((3, 4), 0, "linf") == P((3, 4), d=2)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 4), st.integers(0, 4))
def test_linf_sphere_closed_form(d, r):
    S = sphere((0,) * d, r, "linf")
    assert len(S) == linf_sphere_size(d, r)
    assert np.all(np.abs(S.points).max(1) == r)


def test_euclidean_sphere_exact():
    S = sphere((0, 0, 0), 5, "euclidean")
    brute = [p for p in itertools.product(range(-5, 6), repeat=3) if sum(c * c for c in p) == 25]
    assert S == LatticeSet(brute, d=3)


def test_frame():
    F = frame((0,) * 5, 1)
    assert len(F) == 8
    assert np.all(F.points[:, 2:] == 0)
    assert len(frame((0,) * 5, 9)) == 72
    with pytest.raises(PointNotInF):
        frame((0, 0, 1, 0, 0), 2)


def test_plane_box():
    B = plane_box((0,) * 5, 4)
    assert len(B) == 81
    assert frame((0,) * 5, 3).subset_of(B)


def test_scale_ladder():
    lad = ScaleLadder(3, n_max=6)
    assert lad.levels == [3 * 6 ** n for n in range(7)]
    assert all(b == 6 * a for a, b in zip(lad.levels, lad.levels[1:]))
    with pytest.raises(ValueError):
        ScaleLadder(0)


def test_text_roundtrip():
    K = P((1, 2, 3, 4, 5), (0, 0, 0, 0, -1))
    assert LatticeSet.from_text(K.to_text(), d=5) == K


def test_set_semantics():
    K = LatticeSet([(1, 0), (0, 0), (1, 0)], d=2)
    assert len(K) == 2
    assert (1, 0) in K and (2, 0) not in K
    lo, hi = K.bounding_box
    assert list(lo) == [0, 0] and list(hi) == [1, 0]
