import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skewdiff import _kernels
from skewdiff.dynamics import ObservableSpec, PMParams
from skewdiff.groups import (
    SO2,
    SO3,
    SkewProductState,
    iterate,
    orthogonality_defect,
    regular_even_bound,
    regular_path_e3,
    regular_translation_even,
    regular_translation_odd,
    renormalize_rotation,
    so3_exp,
    step_anisotropic,
    step_e2,
    step_e3,
)

# Starting at x = 0 keeps the shape frozen at the indifferent fixed point.
FROZEN = PMParams(0.5)


def _frozen_spec_e2(v0, h):
    return ObservableSpec(phi_a=(), phi_b=(), v_a=v0, v_b=(0.0, 0.0), rot_a=(h,), rot_b=(0.0,))


def _frozen_spec_e3(v0, w):
    return ObservableSpec(phi_a=(), phi_b=(), v_a=v0, v_b=(0.0,) * 3, rot_a=w, rot_b=(0.0,) * 3)


class TestAnisotropic:
    def test_fixed_point_contributes_phi0(self):
        s = step_anisotropic(SkewProductState.initial(0.0, 1), FROZEN, ObservableSpec.anisotropic(1))
        assert s.p[0] == 1.0 and s.x == 0.0

    def test_zero_observable(self):
        spec = ObservableSpec(phi_a=(0.0,), phi_b=(0.0,))
        s = SkewProductState(x=0.37, p=[2.5])
        assert step_anisotropic(s, PMParams(0.3), spec).p[0] == 2.5

    def test_doubling_three_steps(self):
        states = iterate(step_anisotropic, SkewProductState.initial(0.3, 1), PMParams(0.0), ObservableSpec.anisotropic(1), 3)
        assert states[-1].p[0] == pytest.approx(4.1, abs=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            step_anisotropic(SkewProductState.initial(0.2, 2), FROZEN, ObservableSpec.anisotropic(1))

    @settings(max_examples=30, deadline=None)
    @given(st.floats(1e-6, 1.0), st.integers(0, 60), st.integers(0, 60))
    def test_cocycle(self, x0, n, m):
        p = PMParams(0.6)
        spec = ObservableSpec.anisotropic(1)
        s0 = SkewProductState.initial(x0, 1)
        traj = iterate(step_anisotropic, s0, p, spec, n + m)
        tail = iterate(step_anisotropic, SkewProductState.initial(traj[n].x, 1), p, spec, m)
        # p(n+m; x0) = p(n; x0) + p(m; f^n x0), summed in the same order
        assert traj[n + m].p[0] == pytest.approx(traj[n].p[0] + tail[-1].p[0], rel=1e-14)


class TestE2:
    def test_quarter_turn_one_step(self):
        s = step_e2(SkewProductState.initial(0.0, 2, SO2(0.0)), FROZEN, _frozen_spec_e2((1.0, 0.0), math.pi / 2))
        np.testing.assert_array_equal(s.p, [1.0, 0.0])
        assert s.rot.theta == pytest.approx(math.pi / 2)

    def test_quarter_turn_two_steps(self):
        spec = _frozen_spec_e2((1.0, 0.0), math.pi / 2)
        states = iterate(step_e2, SkewProductState.initial(0.0, 2, SO2()), FROZEN, spec, 2)
        np.testing.assert_allclose(states[-1].p, [1.0, 1.0], atol=1e-15)

    def test_angle_reduced(self):
        assert SO2(7.0).theta == pytest.approx(7.0 - 2 * math.pi)
        assert SO2(-1.0).theta == pytest.approx(2 * math.pi - 1.0)

    def test_zero_rotation_matches_anisotropic_bitwise(self):
        v = ObservableSpec(phi_a=(1.0, 0.0), phi_b=(1.0, 0.0), v_a=(1.0, 0.0), v_b=(1.0, 0.0), rot_a=(0.0,), rot_b=(0.0,))
        p = PMParams(0.7)
        a = iterate(step_anisotropic, SkewProductState.initial(0.2345, 2), p, v, 400)
        e = iterate(step_e2, SkewProductState.initial(0.2345, 2, SO2()), p, v, 400)
        for sa, se in zip(a, e):
            assert np.array_equal(sa.p, se.p)

    def test_requires_so2(self):
        with pytest.raises(ValueError):
            step_e2(SkewProductState.initial(0.1, 2), FROZEN, ObservableSpec.euclidean2())


class TestE3:
    def test_no_rotation(self):
        spec = _frozen_spec_e3((1.0, 0.0, 0.0), (0.0, 0.0, 0.0))
        states = iterate(step_e3, SkewProductState.initial(0.0, 3, SO3()), FROZEN, spec, 7)
        np.testing.assert_array_equal(states[-1].p, [7.0, 0.0, 0.0])

    def test_full_turn_cancels(self):
        spec = _frozen_spec_e3((1.0, 0.0, 0.0), (0.0, 0.0, math.pi / 2))
        states = iterate(step_e3, SkewProductState.initial(0.0, 3, SO3()), FROZEN, spec, 4)
        np.testing.assert_allclose(states[-1].p, 0.0, atol=1e-15)

    def test_axis_component_unaffected(self):
        spec = _frozen_spec_e3((0.0, 0.0, 1.0), (0.0, 0.0, math.pi / 2))
        states = iterate(step_e3, SkewProductState.initial(0.0, 3, SO3()), FROZEN, spec, 13)
        np.testing.assert_allclose(states[-1].p, [0.0, 0.0, 13.0], atol=1e-14)

    def test_kernel_matches_reference_stepper(self):
        from skewdiff.ensemble import SimulationConfig, trace_trajectory, _shape_stream, derive_seed

        cfg = SimulationConfig("e3", 3, PMParams(0.7), ObservableSpec.euclidean3(), n_steps=300, burn_in=0, n_traj=1)
        tr = trace_trajectory(cfg, 0)
        x0, _ = _shape_stream(derive_seed(0, 0))
        ref = iterate(step_e3, SkewProductState.initial(x0, 3, SO3()), cfg.params, cfg.spec, 300)
        np.testing.assert_allclose(np.array([s.p for s in ref]), tr.p, rtol=0, atol=1e-11)


class TestSO3:
    def test_identity_for_zero(self):
        assert np.array_equal(so3_exp([0.0, 0.0, 0.0]), np.eye(3))

    def test_quarter_turn(self):
        np.testing.assert_allclose(so3_exp([0, 0, math.pi / 2]) @ [1, 0, 0], [0, 1, 0], atol=1e-15)

    def test_orthogonal_for_random_generators(self):
        rng = np.random.default_rng(3)
        for _ in range(10**4):
            w = rng.normal(size=3)
            w *= rng.uniform(0, math.pi) / np.linalg.norm(w)
            assert orthogonality_defect(so3_exp(w)) < 1e-14

    def test_kernel_rodrigues_agrees(self):
        rng = np.random.default_rng(4)
        E = np.empty((3, 3))
        for _ in range(100):
            w = rng.normal(size=3)
            _kernels.rodrigues(w[0], w[1], w[2], E)
            np.testing.assert_allclose(E, so3_exp(w), atol=1e-15)

    def test_renormalize_idempotent(self):
        R = so3_exp([0.3, -1.2, 0.7])
        np.testing.assert_allclose(renormalize_rotation(R), R, atol=1e-15)

    def test_renormalize_perturbation(self):
        rng = np.random.default_rng(5)
        R = np.eye(3) + 1e-6 * rng.normal(size=(3, 3))
        R2 = renormalize_rotation(R)
        assert orthogonality_defect(R2) <= 1e-14
        assert np.linalg.det(R2) > 0

    def test_renormalize_degenerate(self):
        R = np.eye(3)
        R[:, 1] = 0.0
        with pytest.raises(ValueError, match="degenerate"):
            renormalize_rotation(R)

    def test_long_product_with_schedule(self):
        rng = np.random.default_rng(6)
        ws = rng.normal(size=(1000, 3))
        A = np.eye(3)
        tmp = np.empty((3, 3))
        E = np.empty((3, 3))
        worst = 0.0
        for n in range(1, 20001):
            w = ws[n % 1000]
            _kernels.rodrigues(w[0], w[1], w[2], E)
            A = A @ E
            if n % 1000 == 0:
                worst = max(worst, orthogonality_defect(A))
                _kernels.polar_step(A, tmp)
        assert worst <= 1e-9


class TestRegular:
    def test_zero_velocity(self):
        t = np.linspace(0, 50, 101)
        assert np.all(regular_translation_even([1.3], [0j], t) == 0)

    def test_closed_circle(self):
        assert abs(regular_translation_even([1.0], [1.0], 2 * math.pi)[0]) < 1e-15

    def test_sup_is_two(self):
        t = np.linspace(0, 2 * math.pi, 100001)
        sup = np.max(np.abs(regular_translation_even([1.0], [1.0], t)))
        assert sup == pytest.approx(2.0, abs=1e-9)
        assert sup <= regular_even_bound([1.0], [1.0]) + 1e-12

    def test_zero_rate_rejected(self):
        with pytest.raises(ValueError):
            regular_translation_even([0.0], [1.0], 1.0)

    def test_odd_trivial(self):
        ax, rot = regular_translation_odd(0.0, [1.0], [0j], np.linspace(0, 9, 10))
        assert np.all(ax == 0) and np.all(rot == 0)

    def test_odd_linear(self):
        ax, rot = regular_translation_odd(2.0, [0.7], [1 + 1j], 10.0)
        assert ax == 20.0
        assert np.all(np.abs(rot) <= regular_even_bound([0.7], [1 + 1j]))

    def test_cylinder(self):
        t = np.linspace(0, 100, 5001)
        ax, rot = regular_translation_odd(1.0, [1.0], [1.0], t)
        assert np.max(np.abs(rot[:, 0])) <= 2.0 + 1e-12
        np.testing.assert_array_equal(ax, t)

    def test_e3_path_in_axis_frame(self):
        t = np.linspace(0, 40, 401)
        w = np.array([1.0, 1.0, 1.0]) / math.sqrt(3)
        local = regular_path_e3(w, [1.0, 0.0, 0.0], t, axis_frame=True)
        np.testing.assert_allclose(local[:, 0], t / math.sqrt(3), rtol=1e-15, atol=0)
        world = regular_path_e3(w, [1.0, 0.0, 0.0], t)
        np.testing.assert_allclose(world @ w, t / math.sqrt(3), atol=1e-12)
