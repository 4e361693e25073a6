from __future__ import annotations

from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brancher.interlacement import Field
from brancher.lattice import (LatticeSet, ScaleLadder, linf_ball, linf_sphere_size,
                              neighbors, plane_box)
from brancher.offspring import make_law
from brancher.percolation import (AnnulusOutsideWindow, EmbeddingMap,
                                  PathDoesNotCross, TooLargeToEnumerate, crossing,
                                  crossing_curve, embedding_count,
                                  embedding_from_path, embedding_separation_check,
                                  enumerate_embeddings, iter_embeddings, leaves,
                                  random_crossing_path, random_embedding,
                                  tree_nodes, vacant_components)

LAD1 = ScaleLadder(1)


def field(window, occ):
    return Field(window, 0.0, np.asarray(occ, dtype=bool), [])


def bfs_components(window, occ):
    vac = {p for p, o in zip(window, occ) if not o}
    seen, comps = set(), []
    for p in sorted(vac):
        if p in seen:
            continue
        comp, q = [], deque([p])
        seen.add(p)
        while q:
            a = q.popleft()
            comp.append(a)
            for b in neighbors(a):
                if b in vac and b not in seen:
                    seen.add(b)
                    q.append(b)
        comps.append(sorted(comp))
    return comps


def test_components_trivial():
    W = linf_ball((0, 0), 3)
    c = vacant_components(field(W, np.zeros(len(W))))
    assert len(c) == 1 and c.histogram == {len(W): 1}
    assert len(vacant_components(field(W, np.ones(len(W))))) == 0


@pytest.mark.parametrize("seed", range(100))
def test_components_match_bfs(seed):
    g = np.random.default_rng(seed)
    W = linf_ball((0, 0), 5) if seed % 2 else plane_box((0,) * 5, 4)
    occ = g.random(len(W)) < g.uniform(0.2, 0.6)
    c = vacant_components(field(W, occ))
    comps = bfs_components(W, occ)
    assert len(c) == len(comps)
    for comp in comps:
        assert all(c.labels[p] == comp[0] for p in comp)
        assert c.sizes[comp[0]] == len(comp)


def _valid_path(path, mode, ok):
    for a, b in zip(path, path[1:]):
        d = np.abs(np.subtract(a, b))
        assert (d.max() == 1) if mode == "star" else (d.sum() == 1)
    assert all(ok(p) for p in path)


def test_crossing_empty_field():
    W = linf_ball((0, 0), 12)
    f = field(W, np.zeros(len(W)))
    r = crossing(f, (0, 0), 1, LAD1, "nearest_neighbor")
    assert r.crossed and r.connectivity_mode == "nearest_neighbor"
    _valid_path(r.witness_path, "nearest_neighbor", lambda p: 5 <= max(map(abs, p)) <= 12)
    assert max(map(abs, r.witness_path[0])) == 5 and max(map(abs, r.witness_path[-1])) == 12
    assert not crossing(f, (0, 0), 1, LAD1, "star").crossed


def test_crossing_planted_star_path():
    W = linf_ball((0, 0), 12)
    planted = [(k, k) for k in range(5, 13)]
    occ = [p in planted for p in W]
    r = crossing(field(W, occ), (0, 0), 1, LAD1, "star")
    assert r.crossed and r.witness_path == planted
    # the diagonal is not nearest-neighbour connected
    occ2 = [p in planted[:3] for p in W]
    assert not crossing(field(W, occ2), (0, 0), 1, LAD1, "star").crossed


def test_crossing_blocked_vacant():
    W = linf_ball((0, 0), 12)
    # occupy the whole sphere of radius 8
    occ = [max(map(abs, p)) == 8 for p in W]
    assert not crossing(field(W, occ), (0, 0), 1, LAD1).crossed
    assert crossing(field(W, occ), (0, 0), 1, LAD1, "star").crossed is False


def test_crossing_window_checks():
    W = linf_ball((0, 0), 10)
    with pytest.raises(AnnulusOutsideWindow):
        crossing(field(W, np.zeros(len(W))), (0, 0), 1, LAD1)
    with pytest.raises(ValueError):
        crossing(field(W, np.zeros(len(W))), (0, 0), 0, LAD1, "bogus")


def test_crossing_planar_window_d5():
    W = plane_box((0,) * 5, 12)
    r = crossing(field(W, np.zeros(len(W))), (0,) * 5, 1, LAD1)
    assert r.crossed and all(p[2:] == (0, 0, 0) for p in r.witness_path)


def test_crossing_curve_small():
    rows = crossing_curve([0.0, 0.5, 2.0], 0, make_law("binary"), 10, seed=1)
    vac = [r for r in rows if r["mode"] == "nearest_neighbor"]
    assert vac[0]["u"] == 0.0 and vac[0]["p_hat"] == 1.0
    assert all(a["p_hat"] >= b["p_hat"] for a, b in zip(vac, vac[1:]))
    assert set(rows[0]) == {"u", "n", "L0", "d", "mode", "replicas", "p_hat", "se"}


def test_tree_nodes():
    assert tree_nodes(0) == [()]
    assert len(tree_nodes(3)) == 15 and len(leaves(3)) == 8


def test_embedding_count_d2_exhaustive():
    assert linf_sphere_size(2, 6) * linf_sphere_size(2, 12) == 48 * 96 == 4608
    e = enumerate_embeddings(1, (0, 0), LAD1, 2, keep=True)
    assert e.exhaustive and e.count == 4608 == embedding_count(1, 2)
    assert len({tuple(sorted(M.values.items())) for M in e.maps}) == 4608
    assert all(M.is_proper() and embedding_separation_check(M) for M in e.maps)


def test_embedding_count_formula():
    assert embedding_count(2, 2) == 4608 ** 3
    e = enumerate_embeddings(2, (0, 0), LAD1, 2)
    assert not e.exhaustive and e.count == 4608 ** 3
    with pytest.raises(TooLargeToEnumerate):
        next(iter_embeddings(2, (0, 0), LAD1, 2))
    assert embedding_count(1, 5) == 210242 * 3329282


def test_root_must_be_on_lattice():
    with pytest.raises(ValueError):
        next(iter_embeddings(1, (1, 0), ScaleLadder(1), 2))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(0, 3))
def test_random_embeddings_proper(seed, L0, n):
    lad = ScaleLadder(L0)
    M = random_embedding(n, (0, 0), lad, 2, np.random.default_rng(seed))
    assert M.is_proper()
    assert embedding_separation_check(M)


def test_random_embeddings_n3():
    g = np.random.default_rng(0)
    assert all(embedding_separation_check(random_embedding(3, (0, 0), LAD1, 2, g))
               for _ in range(1000))


def test_planted_violation():
    M = random_embedding(1, (0, 0), LAD1, 2, np.random.default_rng(1))
    bad = dict(M.values)
    bad[(1,)] = (0, 0)  # on the lattice but at distance 0 from the root
    B = EmbeddingMap(1, (0, 0), bad, LAD1)
    assert any(v.startswith("distance") for v in B.violations())
    assert not embedding_separation_check(B)


def test_witness_straight_path():
    for L0 in (1, 2, 3):
        lad = ScaleLadder(L0)
        L = lad.L(1)
        path = [(k, 0) for k in range(L - 1, 2 * L + 1)]
        M = embedding_from_path(path, (0, 0), 1, lad)
        assert M.is_proper()
        S = set(path)
        for leaf, v in M.leaf_values().items():
            assert any(max(abs(p[0] - v[0]), abs(p[1] - v[1])) == L0 - 1 for p in S)


def test_witness_rejects_short_path():
    with pytest.raises(PathDoesNotCross):
        embedding_from_path([(k, 0) for k in range(5, 9)], (0, 0), 1, LAD1)
    with pytest.raises(ValueError):
        embedding_from_path([(5, 0), (7, 0)], (0, 0), 1, LAD1)


@pytest.mark.parametrize("L0", [1, 2])
def test_witness_random_paths(L0):
    lad = ScaleLadder(L0)
    g = np.random.default_rng(L0)
    for _ in range(200 if L0 == 1 else 30):
        path = random_crossing_path((0, 0), 2, lad, 2, g)
        M = embedding_from_path(path, (0, 0), 2, lad)
        assert M.is_proper()
        P = np.asarray(path)
        for v in M.leaf_values().values():
            assert np.any(np.max(np.abs(P - np.asarray(v)), axis=1) == L0 - 1)
