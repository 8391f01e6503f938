import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bivariate_subgroup.checking import km_estimate, ppp_value, rmst
from bivariate_subgroup.measures import phi_ordering, theta_four
from bivariate_subgroup.model import CellParams
from bivariate_subgroup.trial_data import (FactorScheme, PatientRecord, assign_subgroup,
                                           compute_summaries, subgroup_levels)

sizes = st.lists(st.integers(2, 4), min_size=1, max_size=3)


def _scheme(ks):
    return FactorScheme.from_levels([(f"f{i}", tuple(f"l{j}" for j in range(k))) for i, k in enumerate(ks)])


@given(sizes)
def test_subgroup_bijection(ks):
    scheme = _scheme(ks)
    seen = [subgroup_levels(g, scheme) for g in range(1, scheme.n_subgroups + 1)]
    assert len(set(seen)) == scheme.n_subgroups
    assert [assign_subgroup(lv, scheme) for lv in seen] == list(range(1, scheme.n_subgroups + 1))


record = st.builds(
    lambda arm, t, e, ae, a, b: PatientRecord("x", arm, t, e, ae, (a, b)),
    st.integers(0, 1), st.floats(0, 50, allow_nan=False), st.integers(0, 1), st.integers(0, 1),
    st.integers(1, 2), st.integers(1, 3))


@given(st.lists(record, min_size=1, max_size=60))
def test_summary_invariants(recs):
    tab = compute_summaries(recs, _scheme([2, 3]))
    assert tab.n.sum() == len(recs)
    assert tab.D.sum() == sum(r.event for r in recs)
    assert tab.V.sum() == sum(r.ae for r in recs)
    assert np.isclose(tab.U.sum(), sum(r.time for r in recs))
    assert np.all(tab.V <= tab.n) and np.all(tab.D.sum(1) <= tab.n)


times = arrays(float, st.integers(1, 40), elements=st.floats(0, 20, allow_nan=False))


@given(times, st.data())
def test_km_monotone_and_bounded(t, data):
    e = data.draw(arrays(int, t.shape, elements=st.integers(0, 1)))
    c = km_estimate(t, e)
    assert np.all(np.diff(c.survival) <= 0)
    assert np.all((c.survival >= 0) & (c.survival <= 1))
    tau = data.draw(st.floats(0, 25))
    assert -1e-12 <= rmst(c, tau) <= tau + 1e-12


@given(st.floats(-5, 5), arrays(float, st.integers(50, 120), elements=st.floats(-5, 5)))
def test_ppp_range(obs, rep):
    p = ppp_value(obs, rep)
    assert 2 / (rep.size + 1) - 1e-15 <= p <= 1


cell_arrays = st.tuples(
    arrays(float, (2, 2, 3), elements=st.floats(0.01, 3.0)),
    arrays(float, (2, 3), elements=st.floats(0.0, 1.0)))


@settings(max_examples=50)
@given(cell_arrays, st.floats(0.1, 10.0), st.floats(0.0, 3.0))
def test_theta_sum_and_phi_range(arrs, kappa, delta):
    cell = CellParams.from_natural(*arrs)
    theta = theta_four(cell, kappa)
    assert np.max(np.abs(theta.sum(-1))) < 1e-14
    assert np.all(np.abs(theta) <= 1 + 1e-12)
    phi = phi_ordering(cell, delta)
    assert np.all((phi >= -1 - 1e-12) & (phi <= 1 + 1e-12))
