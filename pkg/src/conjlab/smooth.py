"""Derivatives of solutions and of the conjugacy ``G``, with finite-difference checks."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .conjugacy import ConjugacySolution, VerifySpec
from .errors import ConjlabError, SmoothnessError
from .hypotheses import FD_STEPS, check_conditions, derivative_tensor, fd_jacobian, sample_ball
from .system_core import SemilinearSystem, operator_norm, trajectory


def _step_jacobian(sys: SemilinearSystem, t, omega, x):
    """``A(t) + D_2 F(t, x)`` for a batch ``x``; falls back to finite differences."""
    A = sys.matrix(t, omega)
    if sys.F is None:
        return np.broadcast_to(A, x.shape + (sys.dim,)).copy()
    if sys.jacobian is not None:
        try:
            DF = np.asarray(sys.jacobian(t, omega, x), dtype=float)
            DF = np.broadcast_to(DF, x.shape + (sys.dim,))
            if np.all(np.isfinite(DF)):
                return A + DF
        except Exception as exc:  # noqa: BLE001 - any oracle failure falls back to FD
            warnings.warn(f"derivative oracle failed at t={t} ({exc}); using finite differences")
        else:
            warnings.warn(f"derivative oracle returned non-finite values at t={t}; using finite differences")
    DF = derivative_tensor(sys.with_nonlinearity(sys.F), t, omega, x, 1)
    return A + DF


@dataclass
class JacobianStack:
    """Derivatives of orders ``1..m`` at one point with FD agreement per order."""

    derivatives: list
    fd_agreement: list = field(default_factory=list)


def variational_jacobian(sys: SemilinearSystem, s, t, omega, eta, lipschitz=None):
    """Jacobian of ``eta -> phi(t, s, eta)`` for ``t >= s`` (forward solution).

    Solves ``X_{k+1} = (A(k) + D_2 F(k, phi(k, s, eta))) X_k`` with ``X_s = I``.
    For ``t < s`` the Jacobian of the backward solution is returned instead,
    the inverse of the forward one evaluated along the backward orbit.
    """
    eta = np.asarray(eta, dtype=float)
    d = sys.dim
    X = np.broadcast_to(np.eye(d), eta.shape + (d,)).copy()
    if t >= s:
        orbit = trajectory(sys, s, t, omega, eta)
        for i, k in enumerate(range(s, t)):
            X = _step_jacobian(sys, k, omega, orbit[i]) @ X
        return X
    orbit = trajectory(sys, s, t, omega, eta, lipschitz=lipschitz)  # times s, s-1, ..., t
    for i, k in enumerate(range(s - 1, t - 1, -1)):
        X = np.linalg.solve(_step_jacobian(sys, k, omega, orbit[i + 1]), X)
    return X


def variational_bound(K, alpha, M1, n):
    """``K (alpha + K M_1)^n`` bounding the forward solution Jacobian over ``n`` steps."""
    return K * (alpha + K * M1) ** n


@dataclass
class ConjugacyJacobian:
    matrix: np.ndarray
    deviation: np.ndarray
    bound: float
    within_bound: bool
    neumann_margin: float
    min_singular: float

    def to_dict(self):
        out = asdict(self)
        out["matrix"] = self.matrix.tolist()
        out["deviation"] = np.asarray(self.deviation).tolist()
        return out


def _dG(sol: ConjugacySolution, t, eta):
    sys, omega, tau0 = sol.sys, sol.omega, sol.tau0
    d = sys.dim
    I = np.broadcast_to(np.eye(d), eta.shape + (d,)).copy()
    if t == tau0 or sys.F is None:
        return I
    orbit = sol.backward_orbit(t, eta)  # times tau0..t
    n = t - tau0
    # Y[s] = D_eta phi(s, t, eta), from Y[t] = I backwards
    Y = [None] * (n + 1)
    Y[n] = I
    steps = [_step_jacobian(sys, tau0 + i, omega, orbit[i]) for i in range(n)]
    for i in range(n - 1, -1, -1):
        Y[i] = np.linalg.solve(steps[i], Y[i + 1])
    S = np.zeros_like(I)
    for i in range(n):
        A = sys.matrix(tau0 + i, omega)
        S = A @ S + (steps[i] - A) @ Y[i]
    return I - S


def conjugacy_jacobian(sol: ConjugacySolution, t, eta, strict=False):
    """``D_2 G(t, eta) = I - sum_s Phi(t,s+1) D_2F(s, phi(s,t,eta)) D_eta phi(s,t,eta)``.

    The deviation ``||D_2 G - I||_t`` is compared with ``K M_1 / (1-alpha)``;
    with ``strict=True`` a violation raises :class:`SmoothnessError`, otherwise
    it is recorded in ``within_bound``.  ``neumann_margin = 1 - deviation``
    certifies invertibility when positive; ``min_singular`` does so directly.
    """
    sol._check_time(t)
    eta = np.asarray(eta, dtype=float)
    J = _dG(sol, t, eta)
    dev = operator_norm(J - np.eye(sol.sys.dim), t, t, sol.omega, sol.sys.norms)
    M1 = sol.bounds.M1
    if M1 is None:
        M1 = float(np.max(_sampled_M1(sol)))
    bound = sol.growth.K * M1 / (1.0 - sol.growth.alpha)
    worst = float(np.max(dev))
    smin = float(np.min(np.linalg.svd(J, compute_uv=False)))
    res = ConjugacyJacobian(J, dev, bound, worst <= bound, 1.0 - worst, smin)
    if strict and not res.within_bound:
        raise SmoothnessError(f"||D2G - I|| = {worst:.6g} exceeds K*M1/(1-alpha) = {bound:.6g}", worst, bound)
    return res


def _sampled_M1(sol):
    from .hypotheses import estimate_nonlinearity_bounds

    b = estimate_nonlinearity_bounds(sol.sys, sol.omega, m=1)
    sol.bounds.Mj = b.Mj
    return b.Mj[1]


def fd_relative_error(analytic, numeric):
    """Per-point ``||analytic - numeric||_F / max(||analytic||_F, 1e-300)``."""
    a = analytic.reshape(len(analytic), -1)
    n = numeric.reshape(len(numeric), -1)
    return np.linalg.norm(a - n, axis=1) / np.maximum(np.linalg.norm(a, axis=1), 1e-300)


def _derivative_of(fun, order, x, step):
    """``D^order fun`` at ``x`` by nested central differences; ``order`` counts from 0."""
    if order == 0:
        return fun(x)
    return fd_jacobian(lambda z: _derivative_of(fun, order - 1, z, step), x, step)


@dataclass
class SmoothnessReport:
    orders: dict
    conditions: dict
    chain_rule: float
    invertibility_margin: float
    failures: list

    @property
    def verdict(self):
        return "C^m-consistent" if not self.failures else "failed: " + ", ".join(self.failures)

    def to_dict(self):
        out = asdict(self)
        out["verdict"] = self.verdict
        return out


RICHARDSON_TARGET = 4.0  # central differences are second order


def smoothness_report(sol: ConjugacySolution, m=1, spec: Optional[VerifySpec] = None, n_points=20):
    """Per-order finite-difference consistency of ``G`` and ``H`` up to order ``m``.

    For each order ``j`` the ``j``-th derivative of ``G`` is formed by central
    differences of the (analytic, for ``j = 1``) ``(j-1)``-th derivative at
    steps ``h, h/2, h/4``; the ratio of successive differences should be near
    4.  Also reports a continuity modulus, the order-1 invertibility margin,
    and the chain rule ``D_2G(t, H(t, xi)) D_2H(t, xi) = I``.
    """
    if m > 3:
        raise ConjlabError("finite-difference smoothness checks support m <= 3")
    spec = spec or VerifySpec()
    sys, w = sol.sys, sol.sys.window
    rng = np.random.default_rng([spec.seed, 11])
    conds = check_conditions(sol.growth, sol.bounds).to_dict()
    failures = [name for name, c in conds.items() if not c["passed"]]
    t_lo = min(w.tau0 + 1, w.t_max)
    times = rng.integers(t_lo, w.t_max + 1, size=min(4, n_points))
    per = max(1, n_points // len(times))
    orders, chain, margin = {}, 0.0, np.inf
    for t in times.tolist():
        eta = sample_ball(rng, per, sys.dim, spec.radius)
        J = conjugacy_jacobian(sol, t, eta)
        margin = min(margin, J.neumann_margin)
        xi = eta
        DH = fd_jacobian(lambda z: sol.H(t, z), xi, FD_STEPS[1])
        DG_at_H = conjugacy_jacobian(sol, t, sol.H(t, xi)).matrix
        chain = max(chain, float(np.abs(DG_at_H @ DH - np.eye(sys.dim)).max()))
        for j in range(1, m + 1):
            base = (lambda z: sol.G(t, z)) if j == 1 else (lambda z, j=j: _nested(sol, t, z, j - 1))
            h = FD_STEPS.get(j, FD_STEPS[3])
            D = [_derivative_of(base, 1, eta, h / 2**k) for k in range(3)]
            d1 = float(np.abs(D[0] - D[1]).max())
            d2 = float(np.abs(D[1] - D[2]).max())
            scale = max(1.0, float(np.abs(D[2]).max()))
            noise = 1e-9 * scale
            ratio = d1 / d2 if d2 > noise else RICHARDSON_TARGET
            entry = orders.setdefault(
                j, {"richardson_ratio": [], "step_difference": 0.0, "continuity_modulus": 0.0, "fd_error": 0.0}
            )
            entry["richardson_ratio"].append(ratio)
            entry["step_difference"] = max(entry["step_difference"], d2 / scale)
            if j == 1:
                entry["fd_error"] = max(entry["fd_error"], float(fd_relative_error(J.matrix, D[2]).max()))
            # continuity modulus from nearby points
            u = rng.standard_normal(eta.shape)
            u *= 1e-3 / np.linalg.norm(u, axis=-1, keepdims=True)
            Dn = _derivative_of(base, 1, eta + u, h)
            mod = float((np.abs(Dn - D[0]).reshape(len(eta), -1).max(axis=1) / 1e-3).max())
            entry["continuity_modulus"] = max(entry["continuity_modulus"], mod)
    for j, entry in orders.items():
        r = np.asarray(entry["richardson_ratio"])
        entry["richardson_ratio"] = float(np.median(r))
        small = entry["step_difference"] < 1e-6
        if not small and not 2.0 <= entry["richardson_ratio"] <= 8.0:
            failures.append(f"order {j} finite differences inconsistent")
    if margin <= 0:
        failures.append("D2G not certified invertible")
    return SmoothnessReport(orders, conds, chain, float(margin), failures)


def _nested(sol, t, z, order):
    """``D^order G(t, z)``: analytic for order 1, central differences above."""
    if order == 1:
        return _dG(sol, t, z)
    step = FD_STEPS.get(order, FD_STEPS[3])
    return fd_jacobian(lambda y: _nested(sol, t, y, order - 1), z, step)
