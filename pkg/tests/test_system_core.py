import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import optimize

from conjlab.errors import ContractionError, SingularStepError, WindowError
from conjlab.system_core import (
    NormFamily,
    SemilinearSystem,
    TimeWindow,
    evolution_operator,
    general_solution,
    invert_step,
    operator_norm,
    trajectory,
    variation_of_constants,
)


def scalar(a, F=None, t_max=10, **kw):
    return SemilinearSystem(A=lambda t, w: np.array([[a]]), dim=1, window=TimeWindow(0, t_max), F=F, **kw)


def test_window_validation():
    with pytest.raises(WindowError):
        TimeWindow(5, 2)
    with pytest.raises(WindowError):
        TimeWindow(0, 4, tau0=9)
    w = TimeWindow(-3, 4)
    assert w.tau0 == -3 and len(w) == 8
    with pytest.raises(WindowError):
        w.check(5)


class TestEvolutionOperator:
    def test_identity_at_equal_times(self):
        sys = scalar(0.5)
        assert_allclose(evolution_operator(sys, 4, 4), np.eye(1))

    def test_scalar_power(self):
        assert_allclose(evolution_operator(scalar(0.5), 3, 0), [[0.125]], rtol=0, atol=1e-15)

    def test_rotation_product(self):
        R = 0.5 * np.array([[0.0, 1.0], [-1.0, 0.0]])
        sys = SemilinearSystem(A=lambda t, w: R, dim=2, window=TimeWindow(0, 5))
        assert_allclose(evolution_operator(sys, 2, 0), R @ R, atol=1e-15)

    def test_backward_is_inverse(self, rng):
        mats = [np.eye(3) * 0.6 + 0.1 * rng.standard_normal((3, 3)) for _ in range(8)]
        sys = SemilinearSystem(A=lambda t, w: mats[t], dim=3, window=TimeWindow(0, 8))
        P = evolution_operator(sys, 6, 2)
        Q = evolution_operator(sys, 2, 6)
        assert_allclose(P @ Q, np.eye(3), atol=1e-12)
        assert_allclose(evolution_operator(sys, 6, 0), P @ evolution_operator(sys, 2, 0), atol=1e-14)

    def test_singular_step_named(self):
        sys = SemilinearSystem(
            A=lambda t, w: np.zeros((1, 1)) if t == 3 else np.eye(1), dim=1, window=TimeWindow(0, 6)
        )
        with pytest.raises(SingularStepError) as exc:
            evolution_operator(sys, 5, 0)
        assert exc.value.t == 3


class TestGeneralSolution:
    def test_linear_case(self, rng):
        A = np.array([[0.5, 0.2], [0.0, 0.3]])
        sys = SemilinearSystem(A=lambda t, w: A, dim=2, window=TimeWindow(0, 10))
        xi = rng.standard_normal((5, 2))
        assert_allclose(general_solution(sys, 7, 2, None, xi), xi @ np.linalg.matrix_power(A, 5).T, atol=1e-14)

    def test_effective_linear_recursion(self):
        sys = scalar(0.5, F=lambda t, w, x: 0.1 * x)
        assert_allclose(general_solution(sys, 4, 0, None, np.array([1.0])), [0.6**4], rtol=1e-14)

    def test_sine_three_steps(self):
        # 50-digit recursion of x -> 0.5 x + 0.1 sin x from x = 1
        sys = scalar(0.5, F=lambda t, w, x: 0.1 * np.sin(x))
        assert_allclose(general_solution(sys, 3, 0, None, np.array([1.0])), [0.2076399048616066593256315], rtol=1e-15)

    def test_backward_then_forward(self, rng):
        sys = scalar(0.5, F=lambda t, w, x: 0.1 * np.sin(x))
        eta = rng.uniform(-5, 5, (20, 1))
        back = general_solution(sys, 2, 8, None, eta, lipschitz=0.1)
        assert_allclose(general_solution(sys, 8, 2, None, back), eta, atol=1e-9)

    def test_trajectory_shape(self):
        sys = scalar(0.5)
        assert trajectory(sys, 0, 5, None, np.ones((3, 1))).shape == (6, 3, 1)
        assert trajectory(sys, 5, 2, None, np.ones((3, 1))).shape == (4, 3, 1)


class TestInvertStep:
    def test_linear(self):
        A = np.array([[2.0, 1.0], [0.0, 4.0]])
        sys = SemilinearSystem(A=lambda t, w: A, dim=2, window=TimeWindow(0, 2))
        y = np.array([1.0, 2.0])
        assert_allclose(invert_step(sys, 0, None, y), np.linalg.solve(A, y), atol=1e-15)

    def test_root_of_sine_equation(self):
        sys = scalar(2.0, F=lambda t, w, x: 0.1 * np.sin(x), tol=1e-14)
        x = invert_step(sys, 0, None, np.array([1.0]), lipschitz=0.1)
        root = optimize.bisect(lambda z: 2 * z + 0.1 * np.sin(z) - 1, 0.0, 1.0, xtol=1e-15)
        assert_allclose(x, [root], atol=1e-12)
        assert_allclose(x, [0.4770423146174630589882875], atol=1e-12)

    def test_zero_fixed_point(self):
        sys = scalar(2.0, F=lambda t, w, x: 0.1 * np.sin(x))
        assert_allclose(invert_step(sys, 0, None, np.zeros(1)), [0.0], atol=0)

    def test_refuses_non_contraction(self):
        sys = scalar(0.5, F=lambda t, w, x: 0.6 * np.sin(x))
        with pytest.raises(ContractionError):
            invert_step(sys, 0, None, np.ones(1), lipschitz=0.6)


class TestOperatorNorm:
    def test_diagonal(self):
        assert operator_norm(np.diag([2.0, 3.0]), 0, 0, None, NormFamily.euclidean()) == pytest.approx(3.0)

    def test_identity_equal_weights(self):
        W = NormFamily.constant([[2.0, 0.5], [0.5, 1.0]])
        assert operator_norm(np.eye(2), 0, 1, None, W) == pytest.approx(1.0)

    def test_mixed_weights_against_sphere_sampling(self):
        Ws, Wt = np.diag([1.0, 4.0]), np.eye(2)
        norms = NormFamily(lambda t, w: Ws if t == 0 else Wt)
        exact = operator_norm(np.eye(2), 0, 1, None, norms)
        th = np.linspace(0, 2 * np.pi, 20_000, endpoint=False)
        u = np.stack([np.cos(th), np.sin(th)], axis=1)
        u /= np.sqrt(np.einsum("ni,ij,nj->n", u, Ws, u))[:, None]
        sampled = np.sqrt(np.einsum("ni,ij,nj->n", u, Wt, u)).max()
        assert_allclose(exact, 1.0, rtol=1e-12)
        assert_allclose(exact, sampled, rtol=1e-6)


class TestVariationOfConstants:
    def test_zero_forcing(self, rng):
        A = np.array([[0.4, 0.1], [0.2, 0.3]])
        sys = SemilinearSystem(A=lambda t, w: A, dim=2, window=TimeWindow(0, 6))
        xi = rng.standard_normal(2)
        assert_allclose(variation_of_constants(sys, 5, 1, None, xi, lambda i, w: np.zeros(2)),
                        evolution_operator(sys, 5, 1) @ xi)

    def test_three_term_sum(self):
        sys = scalar(0.5)
        assert_allclose(variation_of_constants(sys, 3, 0, None, np.zeros(1), lambda i, w: np.ones(1)), [1.75])

    def test_random_instance_matches_recursion(self, rng):
        mats = [0.5 * rng.standard_normal((2, 2)) for _ in range(6)]
        forcing = rng.standard_normal((6, 2))
        sys = SemilinearSystem(A=lambda t, w: mats[t], dim=2, window=TimeWindow(0, 6))
        x = xi = rng.standard_normal(2)
        for k in range(6):
            x = mats[k] @ x + forcing[k]
        assert_allclose(variation_of_constants(sys, 6, 0, None, xi, lambda i, w: forcing[i]), x, atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(0.1, 0.9), n=st.integers(0, 12), x=st.floats(-5, 5))
def test_cocycle_property_of_solutions(a, n, x):
    sys = scalar(a, F=lambda t, w, z: 0.05 * np.tanh(z), t_max=24)
    mid = general_solution(sys, n, 0, None, np.array([x]))
    assert_allclose(general_solution(sys, 2 * n, n, None, mid),
                    general_solution(sys, 2 * n, 0, None, np.array([x])), rtol=1e-14, atol=1e-15)
