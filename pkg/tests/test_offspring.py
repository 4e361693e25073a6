from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brancher.harness.stats import chi_square_pvalue
from brancher.offspring import (MeanNotOne, NegativeMass, ZeroVariance, adjoint,
                                make_law, root_shifted, sample_spine_split,
                                sample_spine_splits, size_biased)

PRESETS = ["binary", "geometric_half", "poisson1"]


def test_binary_moments():
    law = make_law("binary")
    assert law.mean == pytest.approx(1.0, abs=1e-12)
    assert law.sigma2 == pytest.approx(1.0, abs=1e-12)


def test_geometric_half_moments():
    law = make_law("geometric_half")
    # tail-summation oracle: sum k(k-1) 2^-(k+1) over a long range
    k = np.arange(0, 400, dtype=float)
    oracle = float(np.sum(k * (k - 1) * 2.0 ** -(k + 1)))
    assert oracle == pytest.approx(2.0, abs=1e-12)
    assert law.mean == pytest.approx(1.0, abs=1e-9)
    assert law.sigma2 == pytest.approx(oracle, abs=1e-9)
    assert law.mass + law.tail_bound == pytest.approx(1.0, abs=1e-12)


def test_poisson1_tail_bound():
    law = make_law("poisson1")
    assert law.tail_bound <= 1e-12
    assert law.sigma2 == pytest.approx(1.0, abs=1e-9)


def test_degenerate_law_rejected():
    with pytest.raises(ZeroVariance):
        make_law({1: 1.0})


def test_noncritical_rejected():
    with pytest.raises(MeanNotOne):
        make_law({0: 0.25, 2: 0.75})


def test_negative_mass_rejected():
    with pytest.raises(NegativeMass):
        make_law([0.6, -0.2, 0.6])


def test_size_biased_binary():
    sb = size_biased(make_law("binary"))
    assert sb.as_dict() == {2: 1.0}
    assert sb[0] == 0.0


def test_size_biased_geometric():
    sb = size_biased(make_law("geometric_half"))
    i = np.arange(len(sb.probs))
    assert np.allclose(sb.probs, i * 2.0 ** -(i + 1), atol=1e-15)
    assert sb.mass == pytest.approx(1.0, abs=1e-9)


def test_adjoint_binary():
    assert adjoint(make_law("binary")).as_dict() == {0: 0.5, 1: 0.5}


def test_adjoint_geometric_fixed_point():
    law = make_law("geometric_half")
    adj = adjoint(law)
    n = min(len(adj.probs), len(law.probs))
    assert np.max(np.abs(adj.probs[:n] - law.probs[:n])) <= 1e-12


@given(st.floats(min_value=0.01, max_value=0.99))
def test_adjoint_lazy_binary(q):
    law = make_law({0: q / 2, 1: 1 - q, 2: q / 2})
    adj = adjoint(law)
    assert adj[0] == pytest.approx(1 - q / 2, abs=1e-12)
    assert adj[1] == pytest.approx(q / 2, abs=1e-12)


@pytest.mark.parametrize("name", PRESETS)
def test_derived_masses(name):
    law = make_law(name)
    assert size_biased(law).mass == pytest.approx(1.0, abs=1e-9)
    assert adjoint(law).mass == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("name", PRESETS)
def test_root_shifted(name):
    law = make_law(name)
    rs = root_shifted(law)
    assert rs[0] == 0.0
    assert np.allclose(rs.probs[1:], law.probs)


def test_spine_split_binary(rng):
    past, fut = sample_spine_splits(make_law("binary"), rng, 100_000)
    assert np.all(past + fut == 1)
    p = past.mean()
    assert abs(p - 0.5) <= 3 * np.sqrt(0.25 / len(past))
    s = sample_spine_split(make_law("binary"), rng)
    assert (s.past_count, s.future_count) in ((0, 1), (1, 0))


@pytest.mark.parametrize("name", PRESETS)
def test_spine_split_marginals(name, rng):
    law = make_law(name)
    past, fut = sample_spine_splits(law, rng, 1_000_000)
    adj = adjoint(law).probs
    for x in (past, fut):
        counts = np.bincount(x, minlength=len(adj))[: len(adj)]
        assert chi_square_pvalue(counts, adj / adj.sum()) > 0.001
    sb = size_biased(law).probs
    tot = np.bincount(past + fut + 1, minlength=len(sb))[: len(sb)]
    assert chi_square_pvalue(tot, sb / sb.sum()) > 0.001


@settings(max_examples=30)
@given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=3, max_size=6))
def test_random_critical_laws(w):
    # build a critical law by mixing mass at 0 with an arbitrary law above 1
    w = np.asarray(w)
    if w[2:].sum() <= 1e-3:
        return
    p = np.zeros(len(w))
    p[2:] = w[2:] / w[2:].sum()
    m = float(np.dot(np.arange(len(p)), p))  # >= 2
    # mix with delta_0 so the mean is one
    lam = 1.0 / m
    q = lam * p
    q[0] += 1 - lam
    law = make_law(list(q))
    assert size_biased(law).mass == pytest.approx(1.0, abs=1e-9)
    assert adjoint(law).mass == pytest.approx(1.0, abs=1e-9)
