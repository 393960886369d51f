"""Acceptance criteria 1-9, one test each, at the stated tolerances.

Each test records a PASS/FAIL line that is repeated in the terminal summary.
"""

import os
import time

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conjlab.conjugacy import VerifySpec, build_conjugacy, verify_conjugacy
from conjlab.errors import LimitCheckError
from conjlab.families import BERNOULLI_2D, bernoulli_cocycle, componentwise, make_system, scalar_benchmark
from conjlab.harness import load_config, run
from conjlab.hypotheses import SamplingSpec, estimate_nonlinearity_bounds, fd_jacobian
from conjlab.localization import cutoff_nonlinearity, local_linearize
from conjlab.rds.adapted_norm import adapted_random_norm, sandwich_check
from conjlab.rds.cocycle import Cocycle, system_from_cocycle
from conjlab.rds.linearize import orbit_conjugation_residual, rds_linearize
from conjlab.rds.mds import make_shift_mds
from conjlab.rds.spectrum import lyapunov_spectrum
from conjlab.smooth import conjugacy_jacobian, fd_relative_error
from conjlab.system_core import TimeWindow, evolution_operator, trajectory

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")


def square(w, x):
    return x**2


@pytest.mark.parametrize(
    "A",
    [
        np.diag([0.5, 0.25, -0.4]),
        np.array([[0.5, 0.3], [-0.2, 0.6]]),
        np.triu(np.full((5, 5), 0.15)) + 0.3 * np.eye(5),
    ],
    ids=["diag3", "full2", "triu5"],
)
def test_criterion_1_linear_degeneracy(A, criterion):
    start = time.perf_counter()
    d = len(A)
    sys = make_system("matrix", d, TimeWindow(0, 30), {"A": A.tolist()})
    sol = build_conjugacy(sys, domain=SamplingSpec(radius=10.0, n_points=200, n_pairs=200, seed=0))
    rep = verify_conjugacy(sol, VerifySpec(n_samples=500, n_lipschitz_pairs=200))
    x = np.random.default_rng(1).uniform(-10, 10, (500, d))
    worst = 0.0
    for t in sys.window.times:
        worst = max(worst, np.abs(sol.H(t, x) - x).max(), np.abs(sol.G(t, x) - x).max())
    worst = max(worst, *(rep.checks[k]["value"] for k in ("conjugation_H", "conjugation_G", "roundtrip_G_of_H",
                                                           "roundtrip_H_of_G", "near_identity_H", "near_identity_G")))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-12 and elapsed < 5
    criterion(f"1 [{d}x{d}]", ok, f"max residual {worst:.2e}, {elapsed:.2f}s")
    assert worst < 1e-12
    assert elapsed < 5


def test_criterion_2_scalar_benchmark(criterion):
    start = time.perf_counter()
    sys = scalar_benchmark(100)
    sol = build_conjugacy(sys, domain=SamplingSpec(radius=10.0, seed=0))
    K, a, L, M = sol.growth.K, sol.growth.alpha, sol.bounds.L, sol.bounds.M
    grid = np.linspace(-10, 10, 1000)[:, None]
    conj = rt = near = 0.0
    times = sys.window.times
    for t in times:
        Ht, Gt = sol.H(t, grid), sol.G(t, grid)
        rt = max(rt, np.abs(sol.G(t, Ht) - grid).max(), np.abs(sol.H(t, Gt) - grid).max())
        near = max(near, np.abs(Ht - grid).max(), np.abs(Gt - grid).max())
    for s, t in [(0, 1), (0, 100), (10, 40), (37, 38), (50, 99), (99, 100)]:
        lhs = sol.H(t, grid @ evolution_operator(sys, t, s).T)
        rhs = trajectory(sys, s, t, None, sol.H(s, grid))[-1]
        conj = max(conj, np.abs(lhs - rhs).max())
        lhs = sol.G(t, trajectory(sys, s, t, None, grid)[-1])
        conj = max(conj, np.abs(lhs - sol.G(s, grid) @ evolution_operator(sys, t, s).T).max())
    elapsed = time.perf_counter() - start
    bound = K * M / (1 - a)
    ok = K * L < 1 - a and conj <= 1e-8 and rt <= 1e-8 and near <= 0.2 + 1e-8 and elapsed < 30
    criterion("2", ok, f"KL={K * L:.4f} conj={conj:.2e} roundtrip={rt:.2e} near={near:.6f} "
                       f"(bound {bound:.6f}) {elapsed:.1f}s")
    assert K * L < 1 - a
    assert_allclose([K, a, M], [1.0, 0.5, 0.1], rtol=1e-9)
    assert conj <= 1e-8 and rt <= 1e-8
    assert near <= 0.2 + 1e-8
    assert elapsed < 30


@pytest.fixture(scope="module")
def smooth_points(short_scalar_solution):
    rng = np.random.default_rng(2024)
    ts = rng.integers(1, 11, 100)
    etas = rng.uniform(-10, 10, 100)
    return short_scalar_solution, ts, etas


def test_criterion_3a_derivative_matches_fd(smooth_points, criterion):
    start = time.perf_counter()
    sol, ts, etas = smooth_points
    worst = 0.0
    for t, e in zip(ts, etas):
        eta = np.array([[e]])
        J = conjugacy_jacobian(sol, int(t), eta).matrix
        fd = fd_jacobian(lambda z: sol.G(int(t), z), eta, 1e-7)
        worst = max(worst, float(fd_relative_error(J, fd).max()))
    elapsed = time.perf_counter() - start
    criterion("3a", worst <= 1e-5 and elapsed < 60, f"max relative FD error {worst:.2e}, {elapsed:.1f}s")
    assert worst <= 1e-5
    assert elapsed < 60


def test_criterion_3b_deviation_bound(smooth_points, criterion):
    sol, ts, etas = smooth_points
    K, a, M1 = sol.growth.K, sol.growth.alpha, sol.bounds.M1
    bound = K * M1 / (1 - a)
    dev = np.array([conjugacy_jacobian(sol, int(t), np.array([[e]])).deviation.max() for t, e in zip(ts, etas)])
    violations = int(np.sum(dev > bound))
    criterion("3b", violations == 0,
              f"||D2G - I|| <= {bound:.4f} violated at {violations}/100 points, worst {dev.max():.4f}")
    assert violations == 0


def test_criterion_4_gronwall_growth(criterion):
    sys = scalar_benchmark(100)
    sol = build_conjugacy(sys, domain=SamplingSpec(radius=10.0, seed=0))
    K, a, L = sol.growth.K, sol.growth.alpha, sol.bounds.L
    rng = np.random.default_rng(4)
    violations, worst, n = 0, 0.0, 0
    for _ in range(10):
        s = int(rng.integers(0, 100))
        t = int(rng.integers(s, 101))
        eta = rng.uniform(-10, 10, (100, 1))
        bar = eta + rng.uniform(-1, 1, (100, 1)) * 10.0 ** rng.uniform(-6, 1, (100, 1))
        d = np.abs(trajectory(sys, s, t, None, eta)[-1] - trajectory(sys, s, t, None, bar)[-1])[:, 0]
        bound = K * (a + K * L) ** (t - s) * np.abs(eta - bar)[:, 0]
        violations += int(np.sum(d > bound))
        worst = max(worst, float((d / bound).max()))
        n += len(eta)
    criterion("4", violations == 0 and n == 1000, f"{violations} violations in {n} pairs, worst ratio {worst:.4f}")
    assert n == 1000 and violations == 0


def test_criterion_5_lyapunov_recovery(criterion):
    start = time.perf_counter()
    mds = make_shift_mds("bernoulli", 42)
    diag = lyapunov_spectrum(Cocycle.constant(np.diag([0.5, 0.25])), mds, 10_000, 64)
    err_diag = float(np.abs(diag.lambdas - np.log([0.5, 0.25])).max())
    iid = lyapunov_spectrum(bernoulli_cocycle([2.0, 0.125]), mds, 10_000, 64)
    err_iid = abs(float(iid.lambdas[0]) + np.log(2))
    elapsed = time.perf_counter() - start
    ok = err_diag <= 1e-10 and err_iid <= 0.01 and elapsed < 60
    criterion("5", ok, f"diag error {err_diag:.1e}, iid lambda_1={iid.lambdas[0]:.5f} "
                       f"(error {err_iid:.4f}), {elapsed:.1f}s")
    assert err_diag <= 1e-10
    assert err_iid <= 0.01
    assert elapsed < 60


@pytest.mark.parametrize(
    "matrices,seed",
    [(BERNOULLI_2D, 7), ([2.0, 0.125], 42)],
    ids=["bernoulli2d", "iid_scalar"],
)
def test_criterion_6_adapted_norm_sandwich(matrices, seed, criterion):
    mds = make_shift_mds("bernoulli", seed)
    c = bernoulli_cocycle(matrices)
    rep = lyapunov_spectrum(c, mds, 10_000, 64)
    norm = adapted_random_norm(c, rep, 0, 64)
    res = sandwich_check(norm, mds.omegas(64), t_max=50)
    criterion(f"6 [{'x'.join(map(str, [c.dim] * 2))}]", res.holds(1e-10),
              f"slack upper {res.upper_slack:.1e} lower {res.lower_slack:.1e} over {res.n_checks} checks")
    assert res.worst <= 1e-10


def test_criterion_7_rds_linearization(bernoulli_2d, bernoulli_mds, criterion):
    start = time.perf_counter()
    c, rep, norm = bernoulli_2d
    window = TimeWindow(0, 20)
    domain = SamplingSpec(radius=10.0, seed=0)
    worst_res = worst_near = 0.0
    alpha = float(np.exp(rep.lambdas[0] + rep.a))
    bound = 0.1 / (1 - alpha)
    ok_L = True
    for k in range(4):
        om = bernoulli_mds.omega(k)
        probe = system_from_cocycle(c, window, componentwise(np.sin), norms=norm.norm_family())
        scale = 0.1 / estimate_nonlinearity_bounds(probe, om, domain).M
        lin = rds_linearize(c, componentwise(lambda x, s=scale: s * np.sin(x)), norm, window, om, domain=domain)
        assert_allclose(lin.solution.bounds.M, 0.1, rtol=1e-9)
        ok_L &= lin.solution.bounds.L <= lin.solution.growth.alpha
        out = orbit_conjugation_residual(lin, n_orbits=32, radius=10.0, seed=k)
        worst_res = max(worst_res, out["residual"])
        worst_near = max(worst_near, out["near_identity"])
        assert_allclose(out["bound"], bound, rtol=1e-12)
    elapsed = time.perf_counter() - start
    ok = ok_L and worst_res <= 1e-7 and worst_near <= bound and elapsed < 120
    criterion("7", ok, f"orbit residual {worst_res:.2e}, near-identity {worst_near:.4f} "
                       f"(bound {bound:.4f}), L<=alpha {ok_L}, {elapsed:.1f}s")
    assert ok_L
    assert worst_res <= 1e-7
    assert worst_near <= bound
    assert elapsed < 120


def _shell(rng, cut, om, r_max, n=10_000):
    """Points whose random-norm size is uniform on ``[0, r_max]``."""
    u = rng.standard_normal((n, cut.dim))
    u /= cut.norm(om, u)[:, None]
    return u * rng.uniform(0, r_max, (n, 1))


@pytest.mark.parametrize("dim", [1, 2])
def test_criterion_8_localization(dim, contracting_scalar, bernoulli_2d, criterion):
    if dim == 1:
        c, mds, norm = contracting_scalar
    else:
        c, _, norm = bernoulli_2d
        mds = make_shift_mds("bernoulli", 7)
    oms = mds.omegas(4)
    cut = cutoff_nonlinearity(square, oms, 0.1, dim=dim, norm=norm.norm)
    rng = np.random.default_rng(8)
    exact = True
    lip = 0.0
    for om in oms:
        sigma = cut.sigma(om)
        x = _shell(rng, cut, om, 2 * sigma)
        inside = cut.in_U(om, x)
        assert 0 < inside.sum() < len(x)
        exact &= bool(np.array_equal(cut.f_tilde(om, x[inside]), x[inside] ** 2))
        y = _shell(rng, cut, om, 3 * sigma)
        z = y + rng.standard_normal((10_000, dim)) * sigma * 10.0 ** rng.uniform(-6, 0, (10_000, 1))
        q = cut.lipschitz_quotients(om, y, z)
        lip = max(lip, float(q.max()))
    res = 0.0
    mismatch = 0
    for om in oms[:2]:
        local = local_linearize(c, square, cut, norm, TimeWindow(0, 30), om, n_points=64)
        res = max(res, local.residual)
        mismatch += local.orbit_mismatch
    refused = False
    try:
        cutoff_nonlinearity(lambda w, x: 0.5 * x, oms, 0.1, dim=dim, norm=norm.norm)
    except LimitCheckError:
        refused = True
    ok = exact and lip <= 0.1 * (1 + 1e-6) and res <= 1e-7 and mismatch == 0 and refused
    criterion(f"8 [d={dim}]", ok, f"exact inside U {exact}, Lipschitz {lip:.6f}, local residual {res:.2e}, "
                                  f"0.5x refused {refused}")
    assert exact
    assert lip <= 0.1 * (1 + 1e-6)
    assert mismatch == 0 and res <= 1e-7
    assert refused


def test_criterion_9_determinism(criterion):
    start = time.perf_counter()
    names = sorted(os.listdir(CONFIGS))
    first, second = [], []
    for name in names:
        cfg = load_config(os.path.join(CONFIGS, name))
        first.append(run(cfg, "report").to_json())
    for name in names:
        cfg = load_config(os.path.join(CONFIGS, name))
        second.append(run(cfg, "report").to_json())
    elapsed = time.perf_counter() - start
    same = [a == b for a, b in zip(first, second)]
    criterion("9", all(same) and elapsed < 300, f"{sum(same)}/{len(names)} reports byte-identical, "
                                                f"two full runs {elapsed:.1f}s")
    assert all(same)
    assert elapsed < 300
