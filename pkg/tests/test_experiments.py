import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from drenv import experiments as ex
from drenv.lattice import LatticeBox, transverse_window
from drenv.model import (
    ConditionError, e1_full_model, half_orthant_model, minimal_two_valued, orthant_model, starred, to_fixed,
)


class TestCrossing:
    def test_linear_interpolation(self):
        assert ex.crossing_point([0.1, 0.2, 0.3], [0.0, 0.25, 0.75], [10, 10, 10]) == pytest.approx(0.25)

    def test_isotonic_pools_violators(self):
        # the dip at 0.3 is pooled with 0.2: fit is 0, .4, .4, 1
        c = ex.crossing_point([0.1, 0.2, 0.3, 0.4], [0.0, 0.5, 0.3, 1.0], [1, 1, 1, 1])
        assert c == pytest.approx(0.3 + (0.5 - 0.4) / 0.6 * 0.1)

    def test_never_crosses(self):
        assert math.isnan(ex.crossing_point([0.1, 0.2], [0.1, 0.2], [5, 5]))

    def test_starts_above(self):
        assert ex.crossing_point([0.1, 0.2], [0.9, 1.0], [5, 5]) == 0.1

    @given(st.lists(st.integers(0, 20), min_size=3, max_size=8))
    def test_crossing_within_grid(self, succ):
        grid = np.linspace(0.1, 0.9, len(succ))
        c = ex.crossing_point(grid, [s / 20 for s in succ], [20] * len(succ))
        assert math.isnan(c) or grid[0] <= c <= grid[-1]

    def test_bootstrap_deterministic_and_covers(self):
        grid = [0.4, 0.5, 0.6, 0.7]
        a = ex.bootstrap_crossing(grid, [0, 40, 160, 200], [200] * 4, seed=3, resamples=300)
        b = ex.bootstrap_crossing(grid, [0, 40, 160, 200], [200] * 4, seed=3, resamples=300)
        assert a == b and a.lo <= a.estimate <= a.hi

    def test_agreement_is_interval_overlap(self):
        assert ex.Crossing(0.5, 0.4, 0.6).agrees(ex.Crossing(0.7, 0.6, 0.8))
        assert not ex.Crossing(0.5, 0.4, 0.55).agrees(ex.Crossing(0.7, 0.6, 0.8))


class TestStarCoupling:
    def test_orthant_equality(self):
        vs = ex.theorem1_test(orthant_model(2, "0.7"), transverse_window(2, 10), (100, 200), 10, 1)
        assert all(v.l_equal and v.ray_equal for v in vs)
        assert sum(v.compared for v in vs) > 0

    def test_p1_trivial(self):
        vs = ex.theorem1_test(orthant_model(2, 1), transverse_window(2, 5), (20, 40), 3, 1)
        assert all(v.l_equal and v.ray_equal_full_box for v in vs)

    def test_p0_inequality(self):
        vs = ex.theorem1_test(orthant_model(2, 0), transverse_window(2, 5), (20, 40), 3, 1)
        assert all(not v.ray_equal_full_box for v in vs)

    def test_requires_condition1(self):
        from drenv.model import two_valued
        with pytest.raises(ConditionError):
            ex.theorem1_test(two_valued(2, ["+2"], ["-1"], "0.5"), transverse_window(2, 2), (4, 8), 1, 1)

    def test_workers_do_not_change_results(self):
        args = (orthant_model(2, "0.7"), transverse_window(2, 5), (50, 100), 6, 9)
        assert ex.theorem1_test(*args, workers=1) == ex.theorem1_test(*args, workers=2)

    def test_csv(self):
        vs = ex.theorem1_test(orthant_model(2, "0.7"), transverse_window(2, 3), (20, 40), 2, 1)
        text = ex.coupling_csv(vs)
        assert text.startswith("seed,l_equal,compared") and len(text.splitlines()) == 3


class TestInclusions:
    box = LatticeBox.cube(2, 15)

    def test_orthant_zero_violations(self):
        rep = ex.inclusion_suite(orthant_model(2, "0.5"), self.box, 50, 2)
        assert rep.passed and all(v == 0 for v in rep.checks.values())

    def test_minimal_equality(self):
        s = minimal_two_valued(half_orthant_model(2, "0.5"))
        rep = ex.inclusion_suite(s, self.box, 10, 2)
        assert rep.equalities["minimal <= spec"] == 10

    def test_starred_equality(self):
        s = starred(orthant_model(2, "0.5"))
        rep = ex.inclusion_suite(s, self.box, 10, 2)
        assert rep.equalities["spec <= starred"] == 10

    def test_csv_lists_counts(self):
        rep = ex.inclusion_suite(orthant_model(2, "0.5"), self.box, 3, 2)
        assert "minimal <= spec,0,3,3" in ex.inclusion_csv(rep)


class TestScan:
    grid = ["0.1", "0.5", "0.7", "0.9"]

    def test_shape_and_determinism(self):
        args = (half_orthant_model(2, "0.5"), self.grid, transverse_window(2, 3), (50, 100), 10, 4)
        a, b = ex.pc_scan(*args), ex.pc_scan(*args)
        assert a.to_csv() == b.to_csv() and a.summary_csv() == b.summary_csv()
        assert [r.samples for r in a.rows] == [10] * 4
        assert all(0 <= r.barrier_frac <= 1 and 0 <= r.l_stable_frac <= 1 for r in a.rows)
        assert a.rows[0].barrier_frac == 0 and a.rows[-1].barrier_frac == 1
        assert [r.p_fixed for r in a.rows] == [to_fixed(p) for p in self.grid]

    def test_csv_header(self):
        res = ex.pc_scan(half_orthant_model(2, "0.5"), ["0.9"], transverse_window(2, 2), (20, 40), 2, 4)
        head = res.to_csv().splitlines()[0].split(",")
        for col in ("p", "samples", "barrier_frac", "barrier_hw", "l_stable_frac", "mean_coverage", "mean_escape"):
            assert col in head

    def test_grid_must_be_interior(self):
        with pytest.raises(ValueError):
            ex.pc_scan(half_orthant_model(2, "0.5"), ["0", "0.5"], transverse_window(2, 2), (20, 40), 2, 4)

    def test_needs_condition2(self):
        with pytest.raises(ConditionError):
            ex.pc_scan(orthant_model(2, "0.5"), ["0.5"], transverse_window(2, 2), (20, 40), 2, 4)

    def test_monotonicity_warning(self):
        rows = [ex.ScanRow(0.1, 0, 100, 0.9, 0.01, 0, 0, 0, 0), ex.ScanRow(0.2, 0, 100, 0.1, 0.01, 0, 0, 0, 0)]
        assert ex._monotonicity_warnings(rows)

    def test_backward_compare_fields(self):
        cmp_ = ex.backward_transition_compare(half_orthant_model(2, "0.5"), ["0.2", "0.95"],
                                              transverse_window(2, 3), (50, 100), 8, 4)
        lo, hi = cmp_.scan.rows
        assert lo.r_stable_frac == 0 and hi.r_stable_frac == 1
        assert math.isfinite(cmp_.gap)

    def test_example4_supercritical_at_09(self):
        res = ex.pc_scan(e1_full_model(3, "0.9"), ["0.9"], transverse_window(3, 1), (40, 80), 5, 8)
        assert res.rows[0].l_stable_frac == 1


class TestZeta:
    def test_origin_line_nonpositive(self):
        rows = ex.zeta_estimate(orthant_model(2, "0.9"), (0, 0), "0.9", [1, 2, 4], 10, 1, depths=(40, 80))
        assert all(r.mean <= 0 for r in rows if r.stable)

    def test_flagged_rows(self):
        rows = ex.zeta_estimate(orthant_model(2, "0.3"), (0, 1), "0.3", [5], 3, 1, depths=(10, 20))
        assert rows[0].flagged

    def test_f_independence(self):
        a = ex.zeta_estimate(orthant_model(2, "0.9"), (0, 1), "0.9", [3, 6], 10, 2)
        b = ex.zeta_estimate(half_orthant_model(2, "0.9"), (0, 1), "0.9", [3, 6], 10, 2)
        for ra, rb in zip(a, b):
            if ra.stable == rb.stable == ra.samples:
                assert ra.mean == rb.mean

    def test_csv_and_validation(self):
        rows = ex.zeta_estimate(orthant_model(2, "0.9"), (0, 1), "0.9", [2], 3, 1)
        assert ex.zeta_csv(rows).startswith("n,mean_L_over_n")
        with pytest.raises(ValueError):
            ex.zeta_estimate(orthant_model(2, "0.9"), (1, 1), "0.9", [2], 3, 1)
        with pytest.raises(ValueError):
            ex.zeta_estimate(orthant_model(2, "0.9"), (0, 1), "0.9", [0], 3, 1)
