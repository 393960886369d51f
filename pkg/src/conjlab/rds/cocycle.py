"""Linear cocycles over a shift and the systems they generate."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..errors import ConditionError, SingularStepError
from ..hypotheses import sample_ball
from ..system_core import SemilinearSystem, TimeWindow, general_solution
from .mds import Omega, ShiftMDS

_SINGULAR_RCOND = 1e-14


class Cocycle:
    """Cocycle generated by ``A(omega)``: ``Phi(n, omega) = A(theta^(n-1) omega) ... A(omega)``.

    Either ``generator(omega)`` is given, or ``table`` holds one matrix per
    alphabet index of a Bernoulli shift, which lets whole paths be looked up
    at once.
    """

    def __init__(self, dim, generator: Optional[Callable] = None, table=None, name=""):
        if generator is None and table is None:
            raise ValueError("need a generator or a symbol table")
        self.dim = dim
        self.table = None if table is None else np.asarray(table, dtype=float)
        if self.table is not None:
            if self.table.shape[1:] != (dim, dim):
                raise ValueError(f"symbol table has shape {self.table.shape}, expected (k, {dim}, {dim})")
            _check_invertible(self.table, 0)
            self.table_inv = np.linalg.inv(self.table)
        self.generator = generator
        self.name = name
        self.fixed = None

    @classmethod
    def constant(cls, A, name="constant"):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        c = cls(A.shape[0], generator=lambda omega: A, name=name)
        c.fixed = A
        return c

    @classmethod
    def from_symbols(cls, matrices, name="bernoulli"):
        """Bernoulli cocycle: ``A(omega) = matrices[index of omega's current symbol]``."""
        mats = np.asarray(matrices, dtype=float)
        if mats.ndim == 1:
            mats = mats[:, None, None]
        return cls(mats.shape[1], table=mats, name=name)

    def matrix(self, omega: Omega):
        if self.table is not None:
            return self.table[omega.index]
        return np.atleast_2d(np.asarray(self.generator(omega), dtype=float))

    def matrices_along(self, omega: Omega, start, stop):
        """``A(theta^k omega)`` for ``start <= k < stop`` as an array ``(stop-start, d, d)``."""
        if self.table is not None:
            return self.table[omega.indices(start, stop)]
        if stop <= start:
            return np.empty((0, self.dim, self.dim))
        if self.fixed is not None:
            return np.broadcast_to(self.fixed, (stop - start, self.dim, self.dim)).copy()
        return np.stack([self.matrix(omega.shift(k)) for k in range(start, stop)])

    def inverse_along(self, omega: Omega, start, stop):
        if self.table is not None:
            return self.table_inv[omega.indices(start, stop)]
        mats = self.matrices_along(omega, start, stop)
        _check_invertible(mats, start)
        return np.linalg.inv(mats)

    def integrability(self, omegas, n=1000):
        """Sample means of ``log+ ||A||`` and ``log+ ||A^-1||`` along the given base points."""
        a, b = [], []
        for om in omegas:
            mats = self.matrices_along(om, 0, n)
            _check_invertible(mats, 0)
            a.append(np.maximum(0.0, np.log(np.linalg.norm(mats, 2, axis=(-2, -1)))).mean())
            b.append(np.maximum(0.0, np.log(np.linalg.norm(np.linalg.inv(mats), 2, axis=(-2, -1)))).mean())
        a, b = float(np.mean(a)), float(np.mean(b))
        return {"log_plus_A": a, "log_plus_A_inv": b, "finite": bool(np.isfinite(a) and np.isfinite(b))}


def _check_invertible(mats, start):
    cond = np.linalg.cond(mats)
    bad = ~np.isfinite(cond) | (1.0 / cond < _SINGULAR_RCOND)
    if bad.any():
        k = int(np.argmax(bad))
        raise SingularStepError(start + k, float(cond[k]))


def cocycle_products(c: Cocycle, n, omega: Omega):
    """``Phi(n, omega)``; for ``n < 0`` the product of inverses ``A(theta^n omega)^-1 ... A(theta^-1 omega)^-1``."""
    P = np.eye(c.dim)
    if n >= 0:
        mats = c.matrices_along(omega, 0, n)
        _check_invertible(mats, 0)
        for M in mats:
            P = M @ P
    else:
        for M in c.inverse_along(omega, n, 0)[::-1]:
            P = M @ P
    return P


def system_from_cocycle(c: Cocycle, window: TimeWindow, nonlinear=None, norms=None, jacobian=None, **kw):
    """Semilinear system ``x_{t+1} = A(theta^t omega) x_t + f(theta^t omega, x_t)``.

    ``nonlinear(omega, x)`` and ``jacobian(omega, x)`` take the shifted base point.
    """
    F = None if nonlinear is None else (lambda t, omega, x: nonlinear(omega.shift(t), x))
    J = None if jacobian is None else (lambda t, omega, x: jacobian(omega.shift(t), x))
    extra = {} if norms is None else {"norms": norms}
    return SemilinearSystem(
        A=lambda t, omega: c.matrix(omega.shift(t)), dim=c.dim, window=window, F=F, jacobian=J, **extra, **kw
    )


@dataclass
class RDSHandle:
    """Cocycle ``psi(t, omega, x) = phi_omega(t, 0, x)`` of a system driven by a shift."""

    system: SemilinearSystem
    mds: ShiftMDS
    cocycle: Cocycle
    residuals: dict

    def psi(self, t, omega, x):
        return general_solution(self.system, t, 0, omega, x)

    def step(self, omega, x):
        return self.system.step(0, omega, x)


def rds_from_system(sys: SemilinearSystem, mds: ShiftMDS, n_samples=4, n_times=8, n_points=16, seed=0, tol=1e-12):
    """Wrap a shift-driven system as an RDS after checking it only sees ``theta^t omega``.

    Checks ``A(t, omega) = A(0, theta^t omega)`` and ``F(t, omega, x) = F(0, theta^t omega, x)``
    at sampled points (raising :class:`ConditionError` with a witness
    ``(t, omega, x)`` on violation), then reports the residual of
    ``phi_omega(t, tau, x) = phi_{theta^tau omega}(t - tau, 0, x)``.
    The window must start at 0.
    """
    w = sys.window
    if w.t_min != 0:
        raise ValueError("RDS wrapping needs a window starting at 0")
    rng = np.random.default_rng([seed, 3])
    res_gen = 0.0
    for s in range(n_samples):
        om = mds.omega(s)
        for t in rng.integers(w.t_min, w.t_max + 1, size=n_times).tolist():
            A1 = sys.matrix(t, om)
            A2 = sys.matrix(0, om.shift(t))
            x = sample_ball(rng, n_points, sys.dim, 1.0)
            f1 = sys.nonlinear(t, om, x)
            f2 = sys.nonlinear(0, om.shift(t), x)
            ra = float(np.abs(A1 - A2).max())
            rf = np.abs(f1 - f2).max(axis=-1)
            if ra > tol * max(1.0, np.abs(A1).max()) or rf.max() > tol:
                witness = {"t": t, "omega": (s, 0), "x": x[int(np.argmax(rf))].tolist(), "A_residual": ra,
                           "F_residual": float(rf.max())}
                raise ConditionError("dependence on (t, omega) only through theta^t omega", witness)
            res_gen = max(res_gen, ra, float(rf.max()))
    res_sol = 0.0
    for s in range(n_samples):
        om = mds.omega(s)
        for _ in range(n_times):
            tau = int(rng.integers(0, w.t_max + 1))
            t = int(rng.integers(tau, w.t_max + 1))
            x = sample_ball(rng, n_points, sys.dim, 1.0)
            a = general_solution(sys, t, tau, om, x)
            b = general_solution(sys, t - tau, 0, om.shift(tau), x)
            res_sol = max(res_sol, float(np.abs(a - b).max()))
    coc = Cocycle(sys.dim, generator=lambda omega: sys.matrix(0, omega))
    return RDSHandle(sys, mds, coc, {"generator": res_gen, "two_parameter": res_sol})
