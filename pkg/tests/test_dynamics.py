import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from skewdiff.dynamics import ObservableSpec, PMParams, eval_observable, pm_orbit, pm_step

gammas = st.floats(min_value=0.0, max_value=0.999, allow_nan=False)
unit = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


class TestPMParams:
    @pytest.mark.parametrize("g", [-0.1, 1.0, 1.2, float("nan")])
    def test_rejects_gamma_outside_unit_interval(self, g):
        with pytest.raises(ValueError, match=r"gamma out of range \[0,1\)"):
            PMParams(g)

    def test_branch_validation(self):
        with pytest.raises(ValueError):
            PMParams(0.5, "middle")

    def test_regime(self):
        assert not PMParams(0.2).weakly_chaotic
        assert PMParams(0.5).weakly_chaotic
        assert PMParams(0.7).stable_index == pytest.approx(1 / 0.7)


class TestPMStep:
    def test_zero_is_fixed(self):
        for g in (0.0, 0.3, 0.7):
            assert pm_step(0.0, PMParams(g)) == 0.0

    def test_half_left_branch(self):
        assert pm_step(0.5, PMParams(0.7, "left")) == pytest.approx(1.0, abs=1e-15)

    def test_half_right_branch_default(self):
        assert pm_step(0.5, PMParams(0.7)) == 0.0

    def test_doubling(self):
        assert pm_step(0.3, PMParams(0.0)) == pytest.approx(0.6, abs=1e-15)

    def test_right_branch(self):
        for g in (0.0, 0.4, 0.9):
            assert pm_step(0.75, PMParams(g)) == 0.5

    @pytest.mark.parametrize("x", [-1e-9, 1.0000001, float("nan")])
    def test_domain(self, x):
        with pytest.raises(ValueError):
            pm_step(x, PMParams(0.5))

    def test_forward_invariance_bulk(self):
        xs = np.random.default_rng(1).random(10**6)
        p = PMParams(0.7)
        ys = np.array([pm_step(float(x), p) for x in xs])
        assert np.all((ys >= 0.0) & (ys <= 1.0))

    @given(unit, gammas)
    def test_stays_in_unit_interval(self, x, g):
        y = pm_step(x, PMParams(g))
        assert 0.0 <= y <= 1.0

    @given(st.floats(0.0, 0.4999), st.floats(0.0, 0.4999), gammas)
    def test_monotone_left_branch(self, a, b, g):
        a, b = sorted((a, b))
        p = PMParams(g)
        if a < b:
            assert pm_step(a, p) <= pm_step(b, p)

    @given(st.floats(0.5001, 1.0), st.floats(0.5001, 1.0), gammas)
    def test_monotone_right_branch(self, a, b, g):
        a, b = sorted((a, b))
        p = PMParams(g)
        if a < b:
            assert pm_step(a, p) < pm_step(b, p)

    @given(unit)
    def test_gamma_zero_is_doubling(self, x):
        if x in (0.5, 1.0):  # branch points where 2x mod 1 picks the other end
            return
        assert pm_step(x, PMParams(0.0)) == (2 * x) % 1.0


class TestPMOrbit:
    def test_fixed_point_orbit(self):
        assert np.array_equal(pm_orbit(0.0, 5, PMParams(0.5)), np.zeros(6))

    def test_doubling_orbit(self):
        np.testing.assert_allclose(pm_orbit(0.3, 2, PMParams(0.0)), [0.3, 0.6, 0.2], atol=1e-15)

    def test_matches_step(self):
        p = PMParams(0.7)
        orb = pm_orbit(0.123, 500, p)
        for k in range(500):
            assert orb[k + 1] == pm_step(orb[k], p)

    def test_deterministic(self):
        p = PMParams(0.35)
        assert np.array_equal(pm_orbit(0.41, 10**4, p), pm_orbit(0.41, 10**4, p))

    def test_slow_escape_from_indifferent_point(self):
        orb = pm_orbit(1e-6, 10**5, PMParams(0.7))
        escape = int(np.argmax(orb > 0.01))
        assert orb[escape] > 0.01 and escape > 1000

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            pm_orbit(1.5, 3, PMParams(0.2))
        with pytest.raises(ValueError):
            pm_orbit(0.5, -1, PMParams(0.2))


class TestObservables:
    def test_phi(self):
        spec = ObservableSpec.anisotropic(1)
        assert eval_observable(spec, "phi", 0.0)[0] == 1.0
        assert eval_observable(spec, "phi", 0.5)[0] == 1.5

    def test_constant_rate(self):
        spec = ObservableSpec.euclidean2(c0=1.0)
        for x in (0.0, 0.3, 1.0):
            assert eval_observable(spec, "h", x) == 1.0

    def test_e3_generator_near_zero_is_diagonal_axis(self):
        w = eval_observable(ObservableSpec.euclidean3(), "h", 0.0)
        np.testing.assert_allclose(w, np.full(3, 1 / math.sqrt(3)))

    def test_dimension_checks(self):
        with pytest.raises(ValueError):
            ObservableSpec(phi_a=(1.0, 0.0), phi_b=(1.0,))
        with pytest.raises(ValueError):
            eval_observable(ObservableSpec.anisotropic(1), "v", 0.2)
        with pytest.raises(ValueError):
            eval_observable(ObservableSpec.anisotropic(1), "phi", 1.2)

    def test_sup_speed(self):
        assert ObservableSpec.euclidean2().sup_speed("e2") == 2.0
