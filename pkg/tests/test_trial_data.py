import io

import numpy as np
import pytest

from bivariate_subgroup import sprint
from bivariate_subgroup.simulate import TrialDesign, simulate_trial
from bivariate_subgroup.trial_data import (FactorScheme, MalformedRow, NegativeTime,
                                           NonBinaryValue, PatientRecord, SummaryTable,
                                           UnknownLevel, assign_subgroup, check_summary_table,
                                           compute_summaries, ingest_patients, read_patients_text,
                                           subgroup_levels, validate_summaries, write_patients)

SCHEME3 = FactorScheme.from_levels([("ckd", ("No", "Yes")), ("age", ("lt75", "ge75")),
                                    ("sex", ("Male", "Female"))])
HEADER = "id,arm,time,event,ae,ckd,age,sex\n"


class TestIngest:
    def test_direct_field_mapping(self):
        recs = read_patients_text(HEADER + "p1,1,2.50,1,0,No,lt75,Male\n", SCHEME3)
        assert recs == [PatientRecord("p1", 1, 2.5, 1, 0, (1, 1, 1))]

    def test_columns_matched_by_name(self):
        text = "sex,ae,event,time,arm,id,age,ckd,extra\nFemale,1,0,3.0,0,q,ge75,Yes,zzz\n"
        (rec,) = read_patients_text(text, SCHEME3)
        assert rec.levels == (2, 2, 2) and rec.arm == 0 and rec.ae == 1

    def test_negative_time_reports_line(self):
        with pytest.raises(NegativeTime) as err:
            read_patients_text(HEADER + "p1,1,1.0,1,0,No,lt75,Male\np2,0,-1,0,0,No,lt75,Male\n", SCHEME3)
        assert err.value.line == 3
        assert "line 3" in str(err.value)

    @pytest.mark.parametrize("row,exc", [
        ("p1,2,1.0,1,0,No,lt75,Male", NonBinaryValue),
        ("p1,1,1.0,1,x,No,lt75,Male", NonBinaryValue),
        ("p1,1,1.0,1,0,Maybe,lt75,Male", UnknownLevel),
        ("p1,1,abc,1,0,No,lt75,Male", MalformedRow),
        ("p1,1,1.0,1,0,No,lt75", MalformedRow),
    ])
    def test_bad_rows(self, row, exc):
        with pytest.raises(exc) as err:
            read_patients_text(HEADER + row + "\n", SCHEME3)
        assert err.value.line == 2

    def test_missing_header_column(self):
        with pytest.raises(MalformedRow):
            read_patients_text("id,arm,time,event\n", SCHEME3)

    def test_empty_input(self):
        with pytest.raises(MalformedRow):
            ingest_patients(io.StringIO(""), SCHEME3)

    def test_round_trip_simulated(self, small_cells, small_scheme):
        recs = simulate_trial(small_cells, small_scheme, TrialDesign(50), seed=3)
        assert len(recs) == 100
        buf = io.StringIO()
        write_patients(recs, small_scheme, buf)
        assert ingest_patients(io.StringIO(buf.getvalue()), small_scheme) == recs


class TestSubgroups:
    def test_bijection(self):
        scheme = FactorScheme.from_levels([("a", "xyz"), ("b", "pq"), ("c", "uvwx")])
        seen = set()
        for g in range(1, scheme.n_subgroups + 1):
            levels = subgroup_levels(g, scheme)
            assert assign_subgroup(levels, scheme) == g
            seen.add(levels)
        assert len(seen) == 24

    def test_first_factor_most_significant(self):
        assert assign_subgroup((1, 1, 2), SCHEME3) == 2
        assert assign_subgroup((2, 1, 1), SCHEME3) == 5

    @pytest.mark.parametrize("levels", [(1, 1), (0, 1, 1), (1, 3, 1)])
    def test_out_of_range(self, levels):
        with pytest.raises(ValueError):
            assign_subgroup(levels, SCHEME3)

    def test_labels(self):
        assert SCHEME3.subgroup_label(8) == "ckd=Yes/age=ge75/sex=Female"


class TestSummaries:
    def test_hand_computed(self):
        scheme = FactorScheme.from_levels([("f", ("a", "b"))])
        recs = [
            PatientRecord("1", 0, 1.0, 1, 0, (1,)),
            PatientRecord("2", 0, 2.0, 0, 1, (1,)),
            PatientRecord("3", 1, 0.5, 1, 1, (2,)),
            PatientRecord("4", 1, 1.5, 0, 1, (2,)),
        ]
        t = compute_summaries(recs, scheme)
        assert t.D[0, 0, 0] == 1 and t.D[1, 1, 1] == 1 and t.D.sum() == 2
        assert t.U[0, 0, 0] == 1.0 and t.U[0, 1, 0] == 2.0 and t.U[1, 1, 1] == 2.0
        np.testing.assert_array_equal(t.V, [[1, 0], [0, 2]])
        np.testing.assert_array_equal(t.n, [[2, 0], [0, 2]])
        assert validate_summaries(t).ok

    def test_permutation_invariant(self, small_cells, small_scheme):
        recs = simulate_trial(small_cells, small_scheme, TrialDesign(200), seed=5)
        perm = [recs[i] for i in np.random.default_rng(0).permutation(len(recs))]
        assert compute_summaries(recs, small_scheme) == compute_summaries(perm, small_scheme)

    def test_json_round_trip(self, sprint_table, tmp_path):
        path = tmp_path / "t.json"
        sprint_table.save(path)
        assert SummaryTable.load(path) == sprint_table
        assert path.read_text() == sprint_table.to_json()

    def test_fixture_matches_literal_table(self, sprint_table):
        assert sprint_table == sprint.build_table()
        assert sprint.fixture_path().read_text() == sprint.build_table().to_json()

    def test_sprint_sizes_add_up(self, sprint_table):
        np.testing.assert_array_equal(sprint_table.n.sum(axis=0), sprint.subgroup_totals())

    def test_arrays_read_only(self, sprint_table):
        with pytest.raises(ValueError):
            sprint_table.D[0, 0, 0] = 5


class TestValidation:
    def _table(self, **override):
        G = 2
        base = dict(D=np.ones((2, 2, G), int), U=np.full((2, 2, G), 3.0),
                    V=np.full((2, G), 2), n=np.full((2, G), 5))
        base.update(override)
        return SummaryTable(scheme=FactorScheme.from_levels([("f", "ab")]), **base)

    def test_clean(self):
        assert validate_summaries(self._table()).ok

    def test_events_without_exposure(self):
        U = np.full((2, 2, 2), 3.0)
        U[1, 0, 1] = 0.0
        report = validate_summaries(self._table(U=U))
        (fail,) = report.failures()
        assert fail.name == "events without exposure" and fail.cells == [(1, 0, 2)]

    def test_ae_exceeds_size(self):
        V = np.full((2, 2), 2)
        V[0, 0] = 6
        names = {c.name for c in validate_summaries(self._table(V=V)).failures()}
        assert "AE count exceeds cell size" in names

    def test_events_exceed_patients(self):
        D = np.ones((2, 2, 2), int)
        D[0, 1, 0] = 3  # only 2 AE patients there
        names = {c.name for c in validate_summaries(self._table(D=D)).failures()}
        assert names == {"events exceed patients in cell"}

    def test_check_summary_table_raises(self):
        U = np.full((2, 2, 2), 3.0)
        U[0, 0, 0] = -1
        with pytest.raises(ValueError, match="negative or non-finite exposure"):
            check_summary_table(self._table(U=U))
        with pytest.raises(TypeError):
            check_summary_table(42)
