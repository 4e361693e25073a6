from __future__ import annotations

import numpy as np
import pytest

from brancher.gwtree import (Enter, Leave, TreeEventStream, generation_sizes,
                             sample_adjoint_tree, sample_critical_tree,
                             sample_invariant_window, survival_probability)
from brancher.harness.stats import chi_square_pvalue
from brancher.offspring import make_law, size_biased


def _well_nested(events):
    stack = []
    for ev in events:
        if isinstance(ev, Enter):
            stack.append(ev.node)
        else:
            assert stack.pop() == ev.node
    return not stack


@pytest.mark.parametrize("name", ["binary", "geometric_half"])
def test_events_well_nested(name, rng):
    law = make_law(name)
    for _ in range(200):
        t = sample_critical_tree(law, rng, max_size=10_000)
        ev = list(t)
        assert _well_nested(ev)
        enters = [e for e in ev if isinstance(e, Enter)]
        # child counts agree with the number of children entered
        if not t.truncated:
            kids = {}
            for e in enters[1:]:
                kids[e.parent] = kids.get(e.parent, 0) + 1
            assert all(kids.get(e.node, 0) == e.child_count for e in enters)


def test_single_node_frequency(rng):
    law = make_law("binary")
    n = 100_000
    keys = rng.integers(0, 2**63, n)
    ones = sum(TreeEventStream(law, int(k)).child_count(int(k), 0) == 0 for k in keys)
    p = ones / n
    assert abs(p - 0.5) <= 3 * np.sqrt(0.25 / n)


def test_budget_flag():
    law = make_law("binary")
    # find a tree with at least 3 nodes, then cap its size
    for k in range(1000):
        t = TreeEventStream(law, k)
        if t.size() >= 3:
            capped = TreeEventStream(law, k, max_size=2)
            list(capped)
            assert capped.truncated
            full = TreeEventStream(law, k)
            list(full)
            assert not full.truncated
            return
    pytest.fail("no tree with three nodes found")


def test_adjoint_root_law(rng):
    law = make_law("binary")
    roots = [next(iter(sample_adjoint_tree(law, rng))).child_count for _ in range(20_000)]
    counts = np.bincount(roots, minlength=2)
    assert chi_square_pvalue(counts[:2], [0.5, 0.5]) > 0.001
    assert max(roots) <= 1


def test_survival_n1():
    est = survival_probability(make_law("binary"), 1, 100_000, 7)
    assert abs(est.mean - 0.5) <= 3 * est.se


def test_criticality_mean_generation(rng):
    Z = generation_sizes(make_law("geometric_half"), 10, rng, 200_000)
    tot = Z.sum(1)
    se = tot.std(ddof=1) / np.sqrt(len(tot))
    assert abs(tot.mean() - 11) <= 3 * se


@pytest.mark.parametrize("name", ["binary", "geometric_half"])
def test_kolmogorov(name):
    law = make_law(name)
    est = survival_probability(law, 100, 100_000, 11)
    target = 2 / law.sigma2
    assert abs(100 * est.mean - target) <= 0.1 * target + 3 * 100 * est.se


def test_invariant_window_binary(rng):
    win = sample_invariant_window(make_law("binary"), 500, rng)
    assert all(s.past_count + s.future_count == 1 for s in win.splits)
    assert all(a.spine_index >= 1 for a in win.past)


def test_invariant_window_root_only(rng):
    win = sample_invariant_window(make_law("binary"), 1, rng)
    assert win.past == [] and win.splits == []


def test_root_future_count_law(rng):
    law = make_law("geometric_half")
    n = 20_000
    counts = np.array([sample_invariant_window(law, 1, rng).root_future for _ in range(n)])
    m = 12
    obs = np.bincount(np.minimum(counts, m), minlength=m + 1)
    p = np.r_[law.probs[:m], law.probs[m:].sum()]
    assert chi_square_pvalue(obs, p / p.sum()) > 0.001


def test_spine_total_is_size_biased(rng):
    law = make_law("geometric_half")
    win = sample_invariant_window(law, 100_001, rng)
    tot = np.array([s.total for s in win.splits])
    sb = size_biased(law).probs
    m = 10
    obs = np.bincount(np.minimum(tot, m), minlength=m + 1)
    p = np.r_[sb[:m], sb[m:].sum()]
    assert chi_square_pvalue(obs, p / p.sum()) > 0.001


def test_labels_signs(rng):
    win = sample_invariant_window(make_law("binary"), 6, rng)
    lab = win.labels(max_size=2000)
    assert lab[("spine", 0)] == 0
    assert all(lab[("spine", i)] < 0 for i in range(1, 6))
    fut = sorted(v for k, v in lab.items() if v >= 0)
    assert fut == list(range(len(fut)))
    past = sorted(-v for v in lab.values() if v < 0)
    assert past == list(range(1, len(past) + 1))
