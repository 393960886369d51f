import numpy as np
import pytest
from numpy.testing import assert_allclose

from conjlab.errors import LimitCheckError
from conjlab.localization import (
    LocalReport,
    bump,
    bump_derivative,
    cutoff_nonlinearity,
    escape_time,
    local_linearize,
    vanishing_quotients,
)
from conjlab.rds.cocycle import Cocycle
from conjlab.rds.linearize import rds_linearize
from conjlab.system_core import TimeWindow


class _Linear:
    def __init__(self, a):
        self.a = a

    def step(self, omega, x):
        return self.a * x


def square(omega, x):
    return x**2


class TestBump:
    def test_plateau_and_support(self):
        r = np.array([0.0, 0.5, 1.0, 2.0, 3.0])
        assert_allclose(bump(r), [1, 1, 1, 0, 0])

    def test_monotone_between(self):
        v = bump(np.linspace(1.0, 2.0, 501))
        assert np.all(np.diff(v) <= 0)
        mid = bump(np.linspace(1.1, 1.9, 81))
        assert np.all((mid > 0) & (mid < 1)) and np.all(np.diff(mid) < 0)

    @pytest.mark.parametrize("r", [1.1, 1.37, 1.5, 1.8, 1.95])
    def test_derivative(self, r):
        h = 1e-6
        fd = (bump(np.array([r + h])) - bump(np.array([r - h]))) / (2 * h)
        assert_allclose(bump_derivative(np.array([r])), fd, rtol=1e-6)


class TestCutoff:
    def test_zero_nonlinearity(self, bernoulli_mds):
        oms = bernoulli_mds.omegas(2)
        cut = cutoff_nonlinearity(lambda w, x: np.zeros_like(x), oms, 0.1)
        assert cut.sigma(oms[0]) == cut.sigma_max
        assert np.all(cut.f_tilde(oms[0], np.linspace(-50, 50, 11)[:, None]) == 0)

    def test_square_dense_lipschitz(self, bernoulli_mds):
        om = bernoulli_mds.omega(0)
        cut = cutoff_nonlinearity(square, [om], 0.1)
        sigma = cut.sigma(om)
        x = np.linspace(-3 * sigma, 3 * sigma, 200_001)[:, None]
        f = cut.f_tilde(om, x)[:, 0]
        dense = np.max(np.abs(np.diff(f)) / np.diff(x[:, 0]))
        assert dense <= 0.1 * (1 + 1e-6)
        inside = np.abs(x[:, 0]) < sigma
        assert np.array_equal(f[inside], x[inside, 0] ** 2)

    def test_linear_at_origin_refused(self, bernoulli_mds):
        with pytest.raises(LimitCheckError):
            cutoff_nonlinearity(lambda w, x: 0.5 * x, bernoulli_mds.omegas(2), 0.1)

    def test_nonzero_at_origin_refused(self, bernoulli_mds):
        with pytest.raises(LimitCheckError):
            cutoff_nonlinearity(lambda w, x: x**2 + 1e-3, bernoulli_mds.omegas(1), 0.1)

    def test_quotients_vanish_for_square(self, bernoulli_mds):
        radii, q = vanishing_quotients(square, bernoulli_mds.omega(0), 1)
        assert np.all(q <= 2 * radii * (1 + 1e-12))

    def test_table_json(self, bernoulli_mds):
        import json

        cut = cutoff_nonlinearity(square, bernoulli_mds.omegas(2), 0.1)
        data = json.loads(cut.to_json())
        assert set(data["sigma"]) == {"0:0", "1:0"} and data["target_L"] == 0.1


class TestEscapeTime:
    @pytest.fixture
    def cut(self, bernoulli_mds):
        return cutoff_nonlinearity(square, bernoulli_mds.omegas(1), 0.1)

    def test_origin_never_leaves(self, cut, bernoulli_mds):
        assert escape_time(_Linear(0.5), cut, bernoulli_mds.omega(0), np.zeros((1, 1)), 30)[0] == 30

    def test_contracting_stays(self, cut, bernoulli_mds):
        om = bernoulli_mds.omega(0)
        x = np.array([[0.9 * cut.sigma(om)], [-0.5 * cut.sigma(om)]])
        assert np.all(escape_time(_Linear(0.5), cut, om, x, 30) == 30)

    def test_expanding_against_simulation(self, cut, bernoulli_mds):
        om = bernoulli_mds.omega(0)
        sigma = cut.sigma(om)
        x = sigma / 4
        tau = 0
        while abs(x) < sigma and tau <= 30:
            x, tau = 2 * x, tau + 1
        assert escape_time(_Linear(2.0), cut, om, np.array([[sigma / 4]]), 30)[0] == tau - 1

    def test_outside_gets_minus_one(self, cut, bernoulli_mds):
        om = bernoulli_mds.omega(0)
        assert escape_time(_Linear(0.5), cut, om, np.array([[2 * cut.sigma(om)]]), 10)[0] == -1


class TestLocalLinearization:
    def test_orbits_identical_inside(self, contracting_scalar):
        c, mds, norm = contracting_scalar
        oms = mds.omegas(2)
        cut = cutoff_nonlinearity(square, oms, 0.1, norm=norm.norm)
        rep = local_linearize(c, square, cut, norm, TimeWindow(0, 30), oms[0], n_points=32)
        assert rep.orbit_mismatch == 0 and rep.residual <= 1e-7 and rep.passed

    def test_globally_small_matches_global_run(self, contracting_scalar):
        c, mds, norm = contracting_scalar
        om = mds.omega(0)

        def F(w, x):
            return 0.02 * (1 - np.cos(x))

        cut = cutoff_nonlinearity(F, [om], 0.1, norm=norm.norm)
        w = TimeWindow(0, 8)
        local = rds_linearize(c, cut.f_tilde, norm, w, om)
        glob = rds_linearize(c, F, norm, w, om)
        # small points whose backward orbits stay inside U
        eta = np.linspace(-1e-3, 1e-3, 21)[:, None]
        for t in (1, 4, 8):
            assert np.all(cut.in_U(om, local.solution.backward_orbit(t, eta)[0]))
            assert_allclose(local.h(t, eta), glob.h(t, eta), rtol=0, atol=1e-14)

    def test_residuals_after_escape_excluded(self):
        rep = LocalReport(0.1, [3], 0, 1e-12, 5.0, 0.01, 0.2, 1e-7, {})
        assert rep.passed
        rep.residual = 1e-3
        assert not rep.passed
