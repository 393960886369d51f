import mpmath as mp
import numpy as np
import pytest
from numpy.testing import assert_allclose

from conjlab.conjugacy import VerifySpec
from conjlab.errors import ConditionError, ConvergenceError, SingularStepError
from conjlab.families import BERNOULLI_2D, componentwise
from conjlab.rds.adapted_norm import adapted_random_norm, equivalence_profile, sandwich_check
from conjlab.rds.cocycle import Cocycle, cocycle_products, rds_from_system, system_from_cocycle
from conjlab.rds.linearize import orbit_conjugation_residual, rds_linearize
from conjlab.rds.mds import make_shift_mds
from conjlab.rds.spectrum import lyapunov_spectrum, qr_exponents
from conjlab.system_core import SemilinearSystem, TimeWindow


class TestShift:
    def test_reproducible(self):
        a = make_shift_mds("bernoulli", 42).values(0, -50, 3000)
        b = make_shift_mds("bernoulli", 42).values(0, -50, 3000)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, make_shift_mds("bernoulli", 43).values(0, -50, 3000))

    def test_group_law(self):
        om = make_shift_mds("bernoulli", 42).omega(3)
        back = om.shift(2).shift(-2)
        assert back == om
        assert np.array_equal(back.values(-10, 10), om.values(-10, 10))
        assert np.array_equal(om.shift(2).values(0, 5), om.values(2, 7))

    def test_symbol_frequency(self):
        v = make_shift_mds("bernoulli", 42).values(0, 0, 100_000)
        assert abs(np.mean(v == 0) - 0.5) <= 0.005

    def test_rotation_phase(self):
        mds = make_shift_mds("rotation", 1)
        v = mds.values(0, 0, 4)
        assert_allclose(np.diff(v) % 1.0, mds.angle / (2 * np.pi) % 1.0, atol=1e-12)

    @pytest.mark.parametrize("probs", [(0.7, 0.7), (-0.1, 1.1)])
    def test_bad_probabilities(self, probs):
        with pytest.raises(ValueError):
            make_shift_mds("bernoulli", 0, probs=probs)


class TestCocycle:
    def test_zero_steps(self, bernoulli_mds):
        c = Cocycle.from_symbols(BERNOULLI_2D)
        assert_allclose(cocycle_products(c, 0, bernoulli_mds.omega(0)), np.eye(2))

    def test_constant_power(self, bernoulli_mds):
        A = np.array([[0.5, 0.1], [0.0, 0.3]])
        c = Cocycle.constant(A)
        assert_allclose(cocycle_products(c, 6, bernoulli_mds.omega(1)), np.linalg.matrix_power(A, 6), atol=1e-15)

    def test_cocycle_property(self, bernoulli_mds):
        c = Cocycle.from_symbols(BERNOULLI_2D)
        om = bernoulli_mds.omega(2)
        lhs = cocycle_products(c, 5, om)
        rhs = cocycle_products(c, 3, om.shift(2)) @ cocycle_products(c, 2, om)
        assert_allclose(lhs, rhs, atol=1e-12)
        assert_allclose(cocycle_products(c, -3, om.shift(3)) @ cocycle_products(c, 3, om), np.eye(2), atol=1e-12)

    def test_singular_symbol_refused(self):
        with pytest.raises(SingularStepError):
            Cocycle.from_symbols([[[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 0.0]]])

    def test_singular_generator(self, bernoulli_mds):
        c = Cocycle(2, generator=lambda om: np.diag([1.0, float(om.offset != 2)]))
        with pytest.raises(SingularStepError) as exc:
            cocycle_products(c, 5, bernoulli_mds.omega(0))
        assert exc.value.t == 2

    def test_integrability(self, bernoulli_mds):
        c = Cocycle.from_symbols([2.0, 0.125])
        out = c.integrability(bernoulli_mds.omegas(4), n=2000)
        assert out["finite"]
        assert_allclose(out["log_plus_A"], 0.5 * np.log(2), atol=0.03)


class TestRDSWrapping:
    def test_autonomous(self, bernoulli_mds):
        sys = SemilinearSystem(A=lambda t, w: np.array([[0.5]]), dim=1, window=TimeWindow(0, 10),
                               F=lambda t, w, x: 0.1 * np.sin(x))
        h = rds_from_system(sys, bernoulli_mds)
        assert h.residuals["generator"] == 0.0 and h.residuals["two_parameter"] == 0.0

    def test_shift_generator(self, bernoulli_mds):
        c = Cocycle.from_symbols(BERNOULLI_2D)
        sys = system_from_cocycle(c, TimeWindow(0, 12), componentwise(lambda x: 0.1 * np.tanh(x)))
        h = rds_from_system(sys, bernoulli_mds)
        assert h.residuals["generator"] < 1e-12 and h.residuals["two_parameter"] < 1e-12

    def test_explicit_time_dependence_rejected(self, bernoulli_mds):
        sys = SemilinearSystem(A=lambda t, w: np.array([[0.5 + 0.01 * t]]), dim=1, window=TimeWindow(0, 10))
        with pytest.raises(ConditionError) as exc:
            rds_from_system(sys, bernoulli_mds)
        assert {"t", "omega", "x"} <= set(exc.value.report)


def _mp_svd_exponents(mats):
    """Exponents from the singular values of the full product at 3000 digits."""
    mp.mp.dps = 3000
    P = mp.eye(2)
    for M in mats:
        P = mp.matrix(M.tolist()) * P
    S = P.T * P
    tr, det = S[0, 0] + S[1, 1], S[0, 0] * S[1, 1] - S[0, 1] * S[1, 0]
    disc = mp.sqrt(tr**2 - 4 * det)
    ev = [(tr + disc) / 2, (tr - disc) / 2]
    mp.mp.dps = 15
    return np.array([float(mp.log(e) / (2 * len(mats))) for e in ev])


class TestSpectrum:
    def test_diagonal_exact(self, bernoulli_mds):
        rep = lyapunov_spectrum(Cocycle.constant(np.diag([0.5, 0.25])), bernoulli_mds, 2000, 4)
        assert_allclose(rep.lambdas, np.log([0.5, 0.25]), rtol=0, atol=1e-10)
        assert rep.multiplicities == [1, 1]
        # V_2 is the second coordinate axis
        assert_allclose(np.abs(rep.filtration[1][:, 0]), [0.0, 1.0], atol=1e-12)

    def test_iid_scalar(self, iid_scalar):
        _, _, rep = iid_scalar
        assert_allclose(rep.lambdas[0], -np.log(2), atol=0.01)

    def test_repeated_exponent_clusters(self, bernoulli_mds):
        rep = lyapunov_spectrum(Cocycle.constant(0.5 * np.eye(2)), bernoulli_mds, 1000, 4)
        assert rep.multiplicities == [2]
        assert_allclose(rep.a, np.log(2) / 2)

    def test_triangular_against_long_product_svd(self):
        rng = np.random.default_rng(11)
        mats = np.triu(rng.uniform(0.2, 0.9, (2, 2, 2)))
        mats[:, 0, 1] = rng.uniform(-0.5, 0.5, 2)
        c = Cocycle.from_symbols(mats)
        mds = make_shift_mds("bernoulli", 5)
        n = 10_000
        rep = lyapunov_spectrum(c, mds, n, 8, splitting=False)
        oracle = np.mean([_mp_svd_exponents(c.matrices_along(om, 0, n)) for om in mds.omegas(8)], axis=0)
        assert np.all(np.abs(rep.exponents - oracle) <= np.maximum(rep.half_widths, 1e-3))
        # the diagonal entries give the exponents in expectation
        analytic = np.sort(np.log(np.diagonal(mats, axis1=1, axis2=2)).mean(axis=0))[::-1]
        assert np.all(np.abs(rep.exponents - analytic) <= 3 * rep.half_widths + 1e-3)

    def test_qr_per_sample_shapes(self):
        mats = np.broadcast_to(np.diag([0.5, 2.0]), (3, 10, 2, 2))
        per, first, second, trace, steps = qr_exponents(mats)
        assert per.shape == (3, 2) and trace.shape[1] == 2 and steps[-1] == 10
        assert_allclose(np.sort(per, axis=1), np.tile(np.log([0.5, 2.0]), (3, 1)), atol=1e-14)

    def test_drift_raises(self, bernoulli_mds):
        # not stationary: the rate halves after 500 steps, so the two halves disagree
        c = Cocycle(1, generator=lambda om: [[0.5 if om.offset < 500 else 0.25]])
        with pytest.raises(ConvergenceError):
            lyapunov_spectrum(c, bernoulli_mds, 1000, 2, splitting=False)


class TestAdaptedNorm:
    def test_constant_scalar_closed_form(self, bernoulli_mds):
        c = Cocycle.constant([[0.5]])
        rep = lyapunov_spectrum(c, bernoulli_mds, 1000, 2)
        q = np.exp(-2 * rep.a)
        two = adapted_random_norm(c, rep, 0, 4)
        one = adapted_random_norm(c, rep, 0, 4, two_sided=False)
        assert_allclose(two.weight(bernoulli_mds.omega(0))[0, 0], (1 + q) / (1 - q), rtol=1e-10)
        assert_allclose(one.weight(bernoulli_mds.omega(0))[0, 0], 1 / (1 - q), rtol=1e-10)

    def test_deterministic_equivalence_constant(self, bernoulli_mds):
        c = Cocycle.constant([[0.5, 0.2], [0.0, 0.25]])
        rep = lyapunov_spectrum(c, bernoulli_mds, 2000, 4)
        norm = adapted_random_norm(c, rep, 0, 8)
        B = [norm.equivalence(om) for om in bernoulli_mds.omegas(4)]
        assert_allclose(B, B[0], rtol=1e-9)
        _, eps = equivalence_profile(norm, bernoulli_mds.omega(0))
        assert eps < 1e-9

    def test_sandwich_2d(self, bernoulli_2d, bernoulli_mds):
        _, _, norm = bernoulli_2d
        res = sandwich_check(norm, bernoulli_mds.omegas(4), t_max=50)
        assert res.holds(1e-10)


class TestRDSLinearization:
    def test_zero_nonlinearity(self, bernoulli_2d, bernoulli_mds):
        c, _, norm = bernoulli_2d
        lin = rds_linearize(c, None, norm, TimeWindow(0, 10), bernoulli_mds.omega(0))
        x = np.random.default_rng(0).standard_normal((5, 2))
        assert np.array_equal(lin.h(6, x), x)

    def test_bounds_on_orbits(self, bernoulli_2d, bernoulli_mds):
        c, rep, norm = bernoulli_2d
        om = bernoulli_mds.omega(0)
        lin = rds_linearize(c, componentwise(lambda x: 0.02 * np.sin(x)), norm, TimeWindow(0, 15), om,
                            verify=VerifySpec(n_samples=100, n_lipschitz_pairs=100))
        out = orbit_conjugation_residual(lin, radius=5.0)
        assert out["residual"] <= lin.solution.composition_tol
        M = lin.solution.bounds.M
        assert_allclose(out["bound"], M / (1 - np.exp(rep.lambdas[0] + rep.a)), rtol=1e-12)
        assert out["near_identity"] <= out["bound"]
        assert lin.report["verification"]["passed"]

    def test_large_nonlinearity_refused(self, bernoulli_2d, bernoulli_mds):
        c, _, norm = bernoulli_2d
        with pytest.raises(ConditionError):
            rds_linearize(c, componentwise(lambda x: 2.0 * np.sin(x)), norm, TimeWindow(0, 10), bernoulli_mds.omega(0))
