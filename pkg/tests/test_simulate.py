import io

import numpy as np
import pytest

from bivariate_subgroup.simulate import (TrialDesign, cell_params_from_dict, cell_params_to_dict,
                                         load_cell_params, simulate_trial)
from bivariate_subgroup.trial_data import (assign_subgroup, compute_summaries, ingest_patients,
                                           write_patients)


def test_round_trip_dict(small_cells, small_cells_file):
    again = cell_params_from_dict(cell_params_to_dict(small_cells))
    np.testing.assert_allclose(again.lam, small_cells.lam)
    np.testing.assert_allclose(load_cell_params(small_cells_file).p, small_cells.p)


@pytest.mark.parametrize("d", [
    {"lam": [[[0.1]], [[0.1]]], "p": [[0.1], [0.1]]},
    {"lam": [[[-0.1], [0.1]], [[0.1], [0.1]]], "p": [[0.1], [0.1]]},
    {"lam": [[[0.1], [0.1]], [[0.1], [0.1]]], "p": [[1.1], [0.1]]},
])
def test_bad_dict(d):
    with pytest.raises(ValueError):
        cell_params_from_dict(d)


def test_shape_and_determinism(small_cells, small_scheme):
    a = simulate_trial(small_cells, small_scheme, TrialDesign(n_per_arm=50), seed=3)
    b = simulate_trial(small_cells, small_scheme, TrialDesign(n_per_arm=50), seed=3)
    assert a == b and len(a) == 100
    assert sum(r.arm for r in a) == 50
    assert a[0].id == "s001"
    assert all(2.0 - 1e-12 <= r.time <= 5.0 or r.event == 1 for r in a)


def test_csv_round_trip(small_cells, small_scheme):
    recs = simulate_trial(small_cells, small_scheme, TrialDesign(n_per_arm=30), seed=4)
    buf = io.StringIO()
    write_patients(recs, small_scheme, buf)
    buf.seek(0)
    assert ingest_patients(buf, small_scheme) == recs


def test_rates_recovered(small_cells, small_scheme):
    recs = simulate_trial(small_cells, small_scheme, TrialDesign(n_per_arm=20_000, followup=(3, 6)), seed=5)
    tab = compute_summaries(recs, small_scheme)
    est = tab.D / tab.U
    se = np.sqrt(tab.D) / tab.U
    assert np.all(np.abs(est - small_cells.lam) < 4 * se)
    p_se = np.sqrt(small_cells.p * (1 - small_cells.p) / tab.n)
    assert np.all(np.abs(tab.V / tab.n - small_cells.p) < 4 * p_se)


def test_subgroup_probs(small_cells, small_scheme):
    probs = (0.7, 0.1, 0.1, 0.1)
    recs = simulate_trial(small_cells, small_scheme, TrialDesign(n_per_arm=5000, subgroup_probs=probs), seed=6)
    g = np.array([assign_subgroup(r.levels, small_scheme) for r in recs])
    assert np.mean(g == 1) == pytest.approx(0.7, abs=0.02)


def test_piecewise_hazard():
    from bivariate_subgroup.model import CellParams
    from bivariate_subgroup.trial_data import FactorScheme
    scheme = FactorScheme.from_levels([("f", ("a", "b"))])
    cell = CellParams.from_natural(np.full((2, 2, 2), 0.5), np.full((2, 2), 0.5))
    design = TrialDesign(n_per_arm=20_000, followup=(50, 50), change_time=1.0, hazard_factor=4.0)
    t = np.array([r.time for r in simulate_trial(cell, scheme, design, seed=7)])
    # survival at 2 under the piecewise hazard is exp(-0.5 - 2)
    assert np.mean(t > 2.0) == pytest.approx(np.exp(-2.5), abs=0.01)
    assert np.mean(t > 1.0) == pytest.approx(np.exp(-0.5), abs=0.01)


@pytest.mark.parametrize("kw", [dict(n_per_arm=0), dict(followup=(3, 2)), dict(hazard_factor=0)])
def test_bad_design(kw):
    with pytest.raises(ValueError):
        TrialDesign(**kw)


def test_scheme_mismatch(small_cells):
    from bivariate_subgroup.trial_data import FactorScheme
    with pytest.raises(ValueError):
        simulate_trial(small_cells, FactorScheme.from_levels([("f", ("a", "b"))]))
    with pytest.raises(ValueError):
        from bivariate_subgroup.trial_data import FactorScheme as F
        simulate_trial(small_cells, F.from_levels([("s", ("M", "F")), ("a", ("y", "o"))]),
                       TrialDesign(subgroup_probs=(0.5, 0.5, 0.5, 0.5)))
