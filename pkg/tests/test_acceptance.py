"""Acceptance criteria 1-10; each test prints one PASS/FAIL line in the
terminal summary.  Run with ``pytest tests/test_acceptance.py -v``."""
from __future__ import annotations

import time

import numpy as np
import pytest

from brancher.capacity import bcap, calibration, capacity_ratios, hit_decay
from brancher.harness.config import EXPERIMENTS, from_dict
from brancher.harness.run import run
from brancher.harness.stats import EstimateCI
from brancher.harness.streams import stream, tree_keys
from brancher.lattice import LatticeSet, ScaleLadder, sample_points
from brancher.offspring import make_law
from brancher.percolation import (embedding_count, embedding_from_path,
                                  embedding_separation_check, enumerate_embeddings,
                                  iter_embeddings, random_crossing_path,
                                  random_embedding)
from brancher.walk import Target, VisitPath, Walker, b_K_weight, enumerate_visit_paths
from matrix import config

D = 5
O = (0,) * D
BIN = make_law("binary")


def _run(exp, tmp_path, **over):
    d = {"experiment": exp, "seed": 20240611, **over}
    t0 = time.monotonic()
    res = run(from_dict(d), tmp_path / exp, workers=1)
    return res, time.monotonic() - t0


def _detail(res):
    return "; ".join(f"{c.name} {c.detail}" for c in res.checks)


def test_c1_kolmogorov(tmp_path, report):
    res, t = _run("survival", tmp_path, replicas=100_000)
    ok = res.passed and t < 60
    report(1, ok, f"{_detail(res)} ({t:.0f} s)")
    assert ok


def test_c2_vacancy_law(tmp_path, report):
    res, t = _run("vacancy", tmp_path, replicas=10_000)
    ok = res.passed and t < 600
    report(2, ok, f"{_detail(res)} ({t:.0f} s)")
    assert ok


def test_c3_covariance_identity(tmp_path, report):
    res, t = _run("covariance", tmp_path, replicas=20_000)
    ok = res.passed and t < 600
    report(3, ok, f"{_detail(res)} ({t:.0f} s)")
    assert ok


def test_c4_pair_deficit(tmp_path, report):
    res, t = _run("pair_deficit", tmp_path, replicas=20_000)
    ok = res.passed and t < 1800
    report(4, ok, f"{_detail(res)} ({t:.0f} s)")
    assert ok


def test_c5_hit_decay(report):
    past = hit_decay([8, 16, 32], BIN, 4000, seed=5, tree="past")
    crit = hit_decay([4, 8, 16], BIN, 2_000_000, seed=5, tree="critical")
    ok_p = abs(past["slope"] - past["expected"]) <= 0.5
    ok_c = abs(crit["slope"] - crit["expected"]) <= 0.5
    report(5, ok_p and ok_c,
           f"past slope {past['slope']:.3f} (expected {past['expected']} +- 0.5), "
           f"critical slope {crit['slope']:.3f} (expected {crit['expected']} +- 0.5)")
    assert ok_p and ok_c


# first-visit fixtures: K = {0}; each path first enters K at its end
E1, E2 = np.eye(D, dtype=int)[:2]
_P = lambda *vs: tuple(tuple(int(c) for c in v) for v in vs)
FIXTURES = [
    _P(E1, 0 * E1),
    _P(2 * E1, E1, 0 * E1),
    _P(E1 + E2, E1, 0 * E1),
    _P(E1, E1 + E2, E2, 0 * E1),
    _P(E1, 2 * E1, E1, 0 * E1),
]


def test_c6_first_visit_formula(report):
    K = LatticeSet([O], d=D)
    T = Target(K)
    W = Walker(BIN, D)
    R = 12.0
    n_crit, n_adj = 1_000_000, 400_000
    kcache = {}

    def k_est(p):
        if p not in kcache:
            h = W.hits(tree_keys(6, "adjoint", *p, n=n_adj), p, T, O, R, root="adjoint")
            kcache[p] = EstimateCI.from_binomial(int((~h["hit"]).sum()), n_adj)
        return kcache[p]

    hits = {}

    def crit(x):
        if x not in hits:
            hits[x] = W.hits(tree_keys(6, "critical", *x, n=n_crit), x, T, O, R,
                             path_len=8)
        return hits[x]

    lines, ok = [], True
    for gamma in FIXTURES:
        g = VisitPath(gamma, K)
        b = b_K_weight(g, k_est)
        h = crit(gamma[0])
        n = len(g)
        ev = h["hit"] & (h["depth"] == n)
        ev &= np.all(h["paths"][:, :n + 1] == np.asarray(gamma)[None], axis=(1, 2))
        p = EstimateCI.from_binomial(int(ev.sum()), n_crit)
        se = float(np.hypot(p.se, b.se))
        good = abs(p.mean - b.mean) <= 3 * se
        ok &= good
        lines.append(f"|gamma|={n}: {p.mean:.4g} vs {b.mean:.4g} (3SE {3 * se:.2g})")
    for x in sorted({gm[0] for gm in FIXTURES}):
        total = sum(b_K_weight(g, k_est).mean for g in enumerate_visit_paths(x, K, 3))
        h = crit(x)
        p = EstimateCI.from_binomial(int(h["hit"].sum()), n_crit)
        good = total <= p.mean + 3 * p.se
        ok &= good
        lines.append(f"sum b_K from {x} = {total:.4g} <= {p.mean:.4g} + 3SE")
    report(6, ok, "; ".join(lines))
    assert ok


def test_c7_capacity_structure(report):
    law = BIN
    cal = calibration(D, law, full=True)
    reps = 5000
    fails = []
    for i in range(20):
        g = stream(7, "sets", i)
        K = sample_points(g, int(g.integers(2, 5)), D, 2)
        extra = sample_points(g, 1, D, 2)
        while extra.subset_of(K):
            extra = sample_points(g, 1, D, 2)
        K2 = K.union(extra)
        L = sample_points(g, int(g.integers(1, 4)), D, 2).translate((int(g.integers(-3, 4)),) + (0,) * 4)
        bK = bcap(K, law, reps, seed=i).value
        bK2 = bcap(K2, law, reps, seed=i).value
        bL = bcap(L, law, reps, seed=i).value
        bU = bcap(K.union(L), law, reps, seed=i).value
        gap = bK2.mean - bK.mean
        if not gap > 3 * np.hypot(bK.total_se, bK2.total_se):
            fails.append(f"set {i}: monotonicity gap {gap:.3g}")
        if bU.mean > bK.mean + bL.mean + 3 * np.sqrt(bK.total_se ** 2 + bL.total_se ** 2
                                                     + bU.total_se ** 2):
            fails.append(f"set {i}: subadditivity")
        for S, b in ((K, bK), (K2, bK2), (L, bL)):
            lo, hi = capacity_ratios(S, b.mean, law)
            s = b.total_se * max(lo, hi) / max(b.mean, 1e-12)
            if lo < cal.c_lower - 3 * s or hi > cal.c_upper + 3 * s:
                fails.append(f"set {i}: capacity bounds [{lo:.3g}, {hi:.3g}]")
            if b.mean > len(S):
                fails.append(f"set {i}: BCap > |K|")
    ok = not fails
    report(7, ok, f"20 random sets, constants [{cal.c_lower:.3g}, {cal.c_upper:.3g}]"
           + ("" if ok else ": " + ", ".join(fails)))
    assert ok


def test_c8_embeddings(report):
    t0 = time.monotonic()
    lad = ScaleLadder(1)
    o = (0, 0)
    en = enumerate_embeddings(1, o, lad, 2)
    sep_enum = all(embedding_separation_check(M) for M in iter_embeddings(1, o, lad, 2))
    g = stream(8, "random")
    sep_rand = all(embedding_separation_check(random_embedding(3, o, lad, 2, g))
                   for _ in range(1000))
    fails = 0
    for i in range(200):
        path = random_crossing_path(o, 2, lad, 2, stream(8, "path", i))
        M = embedding_from_path(path, o, 2, lad)
        P = np.asarray(path)
        leaf_ok = all(np.any(np.max(np.abs(P - np.asarray(v)), axis=1) == 0)
                      for v in M.leaf_values().values())
        fails += not (leaf_ok and M.is_proper() and embedding_separation_check(M))
    t = time.monotonic() - t0
    ok = (en.exhaustive and en.count == 4608 == embedding_count(1, 2) and sep_enum
          and sep_rand and fails == 0 and t < 60)
    report(8, ok, f"|Lambda_1,0| = {en.count} exhaustive; separation enumerated={sep_enum}, "
           f"random={sep_rand}; witness failures {fails}/200 ({t:.0f} s)")
    assert ok


def test_c9_cover_levels(tmp_path, report):
    cov, t1 = _run("cover", tmp_path, replicas=5000)
    gum, t2 = _run("gumbel", tmp_path, replicas=2000)
    ok = cov.passed and gum.passed and t1 + t2 < 3600
    report(9, ok, f"{_detail(cov)}; {_detail(gum)} ({t1 + t2:.0f} s)")
    assert ok


def test_c10_determinism(tmp_path, report):
    diffs = []
    for exp in EXPERIMENTS:
        cfg = from_dict(config(exp))
        outs = []
        for tag, w in (("a", 1), ("b", 1), ("c", 2), ("d", 4)):
            r = run(cfg, tmp_path / exp / tag, workers=w)
            outs.append((r.csv_path.read_bytes(), r.summary_path.read_bytes()))
        if any(o != outs[0] for o in outs[1:]):
            diffs.append(exp)
    ok = not diffs
    report(10, ok, f"{len(EXPERIMENTS)} experiments x (2 reruns, 1/2/4 workers): "
           + ("byte-identical" if ok else "differ: " + ", ".join(diffs)))
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
