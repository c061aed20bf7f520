"""Gain mapping, Jacobian, cubic solver and inverse map."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import central_jacobian, count_real_roots_scan
from pidmap import errors
from pidmap.gainmap import (
    CASE_ONE_REAL,
    CASE_REPEATED,
    CASE_THREE_REAL,
    AuxParams,
    PidGains,
    forward_map,
    inverse_map,
    jacobian,
    solve_cubic,
)

positive = st.floats(min_value=1e-2, max_value=1e2, allow_nan=False)


def _gains_vec(x):
    g = forward_map(AuxParams(*x))
    return np.array([g.KP, g.KD, g.KI])


class TestForwardMap:
    @pytest.mark.parametrize(
        "aux, gains",
        [
            ((1, 2, 0.1), (21, 10, 12)),
            ((6, 4, 0.4), (16, 15, 6.5)),
            ((1, 2, 0.4), (6, 2.5, 4.5)),
            ((2, 1.5, 0.5), (5, 4, 3.5)),
            ((2, 1.5, 0.1), (17, 20, 11.5)),
            ((1, 1, 1), (2, 1, 2)),
        ],
    )
    def test_reference_rows(self, aux, gains):
        got = forward_map(AuxParams(*aux)).as_tuple()
        np.testing.assert_allclose(got, gains, rtol=1e-12, atol=0)

    @pytest.mark.parametrize("bad", [(0, 1, 1), (1, -1, 1), (1, 1, 0), (1, 1, math.nan), (1, math.inf, 1)])
    def test_domain_rejected(self, bad):
        with pytest.raises(errors.PreconditionError):
            AuxParams(*bad)

    def test_nonfinite_gains_rejected(self):
        with pytest.raises(errors.PreconditionError):
            PidGains(1.0, math.nan, 1.0)

    def test_strictly_decreasing_in_T(self):
        Ts = np.geomspace(1e-3, 1e2, 200)
        for kp, kd in [(1, 2), (6, 4), (0.3, 7)]:
            g = np.array([forward_map(AuxParams(kp, kd, T)).as_tuple() for T in Ts])
            assert np.all(np.diff(g, axis=0) < 0)


class TestJacobian:
    def test_closed_form_at_p1(self):
        J = jacobian(AuxParams(1, 2, 0.1))
        assert J.partial("KP", "T") == pytest.approx(-200)
        assert J.partial("KD", "T") == pytest.approx(-100)
        assert J.partial("KI", "T") == pytest.approx(-100)
        assert J.partial("KP", "kd") == pytest.approx(10)

    def test_structural_zeros(self):
        rng = np.random.default_rng(1)
        for x in rng.uniform(0.01, 10, size=(50, 3)):
            J = jacobian(AuxParams(*x))
            assert J.partial("KD", "kp") == 0.0
            assert J.partial("KI", "kd") == 0.0
            assert J.partial("KP", "T") < 0 and J.partial("KD", "T") < 0 and J.partial("KI", "T") < 0

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        pts = np.column_stack([rng.uniform(0.1, 10, 1000), rng.uniform(0.1, 10, 1000),
                               rng.uniform(0.05, 5, 1000)])
        worst = 0.0
        for x in pts:
            J = jacobian(AuxParams(*x)).matrix
            fd = central_jacobian(_gains_vec, x, h=1e-6)
            scale = np.maximum(np.abs(J), 1e-12)
            mask = J != 0
            worst = max(worst, float(np.max(np.abs(fd - J)[mask] / scale[mask])))
            assert np.all(np.abs(fd[~mask]) < 1e-6)
        assert worst <= 1e-4


class TestSolveCubic:
    def test_double_root_example(self):
        sol = solve_cubic(10, -21, 12, -1)
        assert sol.case == CASE_REPEATED
        np.testing.assert_allclose(sol.real_roots, [0.1, 1, 1], rtol=1e-12)
        assert sol.distinct_real_roots == pytest.approx((0.1, 1.0))

    def test_textbook_double_root(self):
        sol = solve_cubic(1, 0, -3, 2)
        assert sol.case == CASE_REPEATED
        assert (sol.p, sol.q) == (-3.0, 2.0)
        np.testing.assert_allclose(sol.real_roots, [-2, 1, 1], rtol=1e-14)

    def test_single_real_root(self):
        sol = solve_cubic(4, -5, 3.5, -1)
        assert sol.case == CASE_ONE_REAL
        assert sol.real_roots == pytest.approx((0.5,), rel=1e-14)
        z = sol.complex_roots[0]
        # remaining factor 4T^2 - 3T + 2
        assert z.real == pytest.approx(3 / 8)
        assert abs(z.imag) == pytest.approx(math.sqrt(23) / 8)

    def test_three_real_roots(self):
        sol = solve_cubic(1, -6, 11, -6)
        assert sol.case == CASE_THREE_REAL
        np.testing.assert_allclose(sol.real_roots, [1, 2, 3], rtol=1e-14)

    def test_triple_root(self):
        sol = solve_cubic(2, -6, 6, -2)
        assert sol.case == CASE_REPEATED
        np.testing.assert_allclose(sol.real_roots, [1, 1, 1], rtol=1e-14)

    def test_zero_leading_coefficient(self):
        with pytest.raises(errors.DegenerateCubicError):
            solve_cubic(0, 1, 2, 3)

    def test_matches_numpy_roots(self):
        rng = np.random.default_rng(3)
        for c in rng.normal(size=(500, 4)):
            ours = sorted(solve_cubic(*c).roots, key=lambda z: (z.real, z.imag))
            ref = sorted(np.roots(c), key=lambda z: (z.real, z.imag))
            np.testing.assert_allclose(ours, ref, rtol=1e-6, atol=1e-8)

    def test_residuals_on_random_cubics(self):
        rng = np.random.default_rng(4)
        coeffs = rng.normal(size=(2000, 4)) * rng.choice([1e-3, 1, 1e3], size=(2000, 4))
        for c in coeffs:
            sol = solve_cubic(*c)
            assert max(sol.scaled_residual(r) for r in sol.roots) <= 1e-10

    def test_root_count_matches_scan_oracle(self):
        rng = np.random.default_rng(5)
        coeffs = rng.uniform(-10, 10, size=(10_000, 4))
        counts, _ = count_real_roots_scan(coeffs)
        ours = np.array([len(solve_cubic(*c).distinct_real_roots) for c in coeffs])
        assert np.array_equal(ours, counts)

    @given(st.lists(st.floats(-5, 5), min_size=3, max_size=3),
           st.floats(0.1, 10))
    @settings(max_examples=300, deadline=None)
    def test_roots_from_factored_form(self, roots, lead):
        # a (x - r1)(x - r2)(x - r3) expanded
        c = np.poly(roots) * lead
        sol = solve_cubic(*c)
        for r in sol.roots:
            assert sol.scaled_residual(r) <= 1e-10


class TestInverseMap:
    def test_two_candidates_from_double_root(self):
        res = inverse_map(PidGains(21, 10, 12))
        assert [c.T for c in res.candidates] == pytest.approx([0.1, 1.0])
        assert (res.candidates[1].kp, res.candidates[1].kd) == pytest.approx((10, 11))
        for cand in res.candidates:
            assert cand.admissible
            np.testing.assert_allclose(forward_map(cand.to_aux()).as_tuple(), (21, 10, 12), rtol=1e-12)

    def test_unique_candidate_table2(self):
        res = inverse_map(PidGains(5, 4, 3.5))
        assert len(res.candidates) == 1
        c = res.candidates[0]
        assert (c.kp, c.kd, c.T) == pytest.approx((2, 1.5, 0.5), rel=1e-12)

    def test_unit_gains(self):
        res = inverse_map(PidGains(2, 1, 2))
        assert len(res.candidates) == 1
        assert res.candidates[0].to_aux().as_tuple() == pytest.approx((1, 1, 1))

    @pytest.mark.parametrize("KI", [0.0, -1.0])
    def test_requires_positive_KI(self, KI):
        with pytest.raises(errors.PreconditionError, match="KI > 0"):
            inverse_map(PidGains(1.0, KI, 1.0))

    def test_negative_kd_candidate_flagged(self):
        # KD < 1/T for the only positive root: kd comes out negative
        res = inverse_map(PidGains(1.0, 1.0, 0.5))
        assert res.candidates
        assert not any(c.admissible for c in res.candidates)
        assert all(c.kp_positive for c in res.candidates)

    def test_round_trip_random(self):
        rng = np.random.default_rng(6)
        for x in np.column_stack([rng.uniform(0.1, 10, 1000), rng.uniform(0.1, 10, 1000),
                                  rng.uniform(0.01, 5, 1000)]):
            res = inverse_map(forward_map(AuxParams(*x)))
            assert any(np.allclose(c.to_aux().as_tuple() if c.admissible else (np.inf,) * 3,
                                   x, rtol=1e-9, atol=0) for c in res.candidates)
            for T in res.cubic.distinct_real_roots:
                assert res.cubic.scaled_residual(T) <= 1e-10

    @given(positive, positive, st.floats(1e-3, 1e2))
    @settings(max_examples=300, deadline=None)
    def test_candidates_ascending_and_nonempty(self, kp, kd, T):
        res = inverse_map(forward_map(AuxParams(kp, kd, T)))
        Ts = [c.T for c in res.candidates]
        assert Ts and Ts == sorted(Ts) and all(t > 0 for t in Ts)
