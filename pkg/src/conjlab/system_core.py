"""State space, norm families, semilinear systems and their solutions.

A system is ``x_{t+1} = A(t, omega) x_t + F(t, omega, x_t)`` on R^d, computed
on a finite :class:`TimeWindow`.  States are numpy arrays whose last axis has
length ``d``; every leading axis is a batch axis, so ``F`` must act on the
last axis and broadcast over the others (``lambda t, w, x: 0.1 * np.sin(x)``
does).  ``omega`` is any hashable parameter, ``None`` for deterministic
systems or an :class:`conjlab.rds.Omega` for systems driven by a shift.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .errors import (
    ContractionError,
    ConvergenceError,
    EvaluationError,
    NormError,
    SingularStepError,
    WindowError,
)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000
# 1/cond below this is treated as singular
_SINGULAR_RCOND = 1e-14


@dataclass(frozen=True)
class TimeWindow:
    """Finite discrete interval ``{t_min, ..., t_max}`` with base point ``tau0``."""

    t_min: int
    t_max: int
    tau0: Optional[int] = None

    def __post_init__(self):
        if self.t_max < self.t_min:
            raise WindowError(f"empty window [{self.t_min}, {self.t_max}]")
        if self.tau0 is None:
            object.__setattr__(self, "tau0", self.t_min)
        if not self.t_min <= self.tau0 <= self.t_max:
            raise WindowError(f"tau0={self.tau0} outside [{self.t_min}, {self.t_max}]")

    def __contains__(self, t):
        return self.t_min <= t <= self.t_max

    def __len__(self):
        return self.t_max - self.t_min + 1

    @property
    def times(self):
        return range(self.t_min, self.t_max + 1)

    def check(self, *ts):
        for t in ts:
            if t not in self:
                raise WindowError(f"time {t} outside window [{self.t_min}, {self.t_max}]")


def _hashable(omega):
    try:
        hash(omega)
    except TypeError:
        return False
    return True


class NormFamily:
    """Weighted inner-product norms ``||x||_{t,omega} = sqrt(x^T W(t,omega) x)``.

    ``weight(t, omega)`` returns a symmetric positive definite matrix; with
    ``weight=None`` every norm is the Euclidean one.
    """

    def __init__(self, weight: Optional[Callable[[int, Any], np.ndarray]] = None, name: str = ""):
        self.weight = weight
        self.name = name or ("euclidean" if weight is None else "weighted")
        self._factors: dict = {}

    @classmethod
    def euclidean(cls):
        return cls()

    @classmethod
    def constant(cls, W, name="constant"):
        W = np.array(W, dtype=float)
        return cls(lambda t, omega: W, name=name)

    @property
    def is_euclidean(self):
        return self.weight is None

    def matrix(self, t, omega, dim):
        if self.weight is None:
            return np.eye(dim)
        return np.asarray(self.weight(t, omega), dtype=float)

    def factor(self, t, omega):
        """Lower Cholesky factor ``C`` with ``W = C C^T`` (``None`` if Euclidean)."""
        if self.weight is None:
            return None
        key = (t, omega) if _hashable(omega) else None
        if key is not None and key in self._factors:
            return self._factors[key]
        W = np.asarray(self.weight(t, omega), dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise NormError(f"weight at t={t} is not a square matrix")
        if not np.allclose(W, W.T, rtol=1e-10, atol=1e-12 * np.abs(W).max()):
            raise NormError(f"weight at t={t} is not symmetric")
        try:
            C = np.linalg.cholesky(0.5 * (W + W.T))
        except np.linalg.LinAlgError as exc:
            raise NormError(f"weight at t={t} is not positive definite") from exc
        if key is not None:
            self._factors[key] = C
        return C

    def norm(self, x, t, omega):
        x = np.asarray(x, dtype=float)
        C = self.factor(t, omega)
        if C is None:
            return np.linalg.norm(x, axis=-1)
        return np.linalg.norm(x @ C, axis=-1)

    def ell(self, t, omega, dim):
        """Smallest ``l >= 1`` with ``||x||/l <= ||x||_{t,omega} <= l ||x||``."""
        if self.weight is None:
            return 1.0
        ev = np.linalg.eigvalsh(self.matrix(t, omega, dim))
        return float(max(np.sqrt(ev[-1]), 1.0 / np.sqrt(ev[0]), 1.0))


def operator_norm(M, s, t, omega, norms: NormFamily):
    """``sup_{||x||_{s,omega}=1} ||M x||_{t,omega}``.

    Computed exactly as the spectral norm of ``C_t^T M C_s^{-T}``, the
    largest generalized singular value between the two inner products.
    Accepts a stack of matrices ``(..., d, d)``.
    """
    M = np.asarray(M, dtype=float)
    Cs = norms.factor(s, omega)
    Ct = norms.factor(t, omega)
    if Cs is not None or Ct is not None:
        d = M.shape[-1]
        Cs = np.eye(d) if Cs is None else Cs
        Ct = np.eye(d) if Ct is None else Ct
        # M C_s^{-T} = (C_s^{-1} M^T)^T
        MCs = np.swapaxes(np.linalg.solve(Cs, np.swapaxes(M, -1, -2)), -1, -2)
        M = np.swapaxes(Ct, -1, -2) @ MCs
    if M.ndim == 2:
        return float(np.linalg.norm(M, 2))
    return np.linalg.norm(M, ord=2, axis=(-2, -1))


@dataclass(eq=False)
class SemilinearSystem:
    """``x_{t+1} = A(t, omega) x_t + F(t, omega, x_t)`` on a finite window.

    ``jacobian(t, omega, x)`` optionally returns ``D_2 F`` with shape
    ``x.shape + (d,)``.  ``lipschitz`` is a known global Lipschitz constant
    of ``F`` (in the norms of ``norms``); when set, backward steps check the
    invertibility condition before iterating.
    """

    A: Callable[[int, Any], np.ndarray]
    dim: int
    window: TimeWindow
    F: Optional[Callable[[int, Any, np.ndarray], np.ndarray]] = None
    norms: NormFamily = field(default_factory=NormFamily.euclidean)
    jacobian: Optional[Callable[[int, Any, np.ndarray], np.ndarray]] = None
    lipschitz: Optional[float] = None
    smoothness_order: int = 1
    zero_fixed_point: bool = True
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    name: str = ""

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")
        self._A_cache: dict = {}
        self._Ainv_cache: dict = {}

    @property
    def is_linear(self):
        return self.F is None

    def matrix(self, t, omega=None):
        key = (t, omega) if _hashable(omega) else None
        if key is not None and key in self._A_cache:
            return self._A_cache[key]
        A = np.asarray(self.A(t, omega), dtype=float)
        if A.shape != (self.dim, self.dim):
            raise ValueError(f"A({t}) has shape {A.shape}, expected {(self.dim, self.dim)}")
        if key is not None:
            self._A_cache[key] = A
        return A

    def inverse(self, t, omega=None):
        key = (t, omega) if _hashable(omega) else None
        if key is not None and key in self._Ainv_cache:
            return self._Ainv_cache[key]
        A = self.matrix(t, omega)
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or 1.0 / cond < _SINGULAR_RCOND:
            raise SingularStepError(t, cond)
        Ainv = np.linalg.inv(A)
        if key is not None:
            self._Ainv_cache[key] = Ainv
        return Ainv

    def nonlinear(self, t, omega, x):
        x = np.asarray(x, dtype=float)
        if self.F is None:
            return np.zeros_like(x)
        y = np.asarray(self.F(t, omega, x), dtype=float)
        if y.shape != x.shape:
            y = np.broadcast_to(y, x.shape).copy()
        if not np.all(np.isfinite(y)):
            raise EvaluationError(f"F({t}, x) returned non-finite values", sample=(t, x))
        return y

    def step(self, t, omega, x):
        """One forward step ``A(t) x + F(t, x)``."""
        x = np.asarray(x, dtype=float)
        return x @ self.matrix(t, omega).T + self.nonlinear(t, omega, x)

    def with_nonlinearity(self, F, jacobian=None, lipschitz=None, name=None):
        """Copy of the system with ``F`` replaced (``None`` for the linear part)."""
        return SemilinearSystem(
            A=self.A,
            dim=self.dim,
            window=self.window,
            F=F,
            norms=self.norms,
            jacobian=jacobian,
            lipschitz=lipschitz,
            smoothness_order=self.smoothness_order,
            zero_fixed_point=self.zero_fixed_point,
            tol=self.tol,
            max_iter=self.max_iter,
            name=name if name is not None else self.name,
        )


def evolution_operator(sys: SemilinearSystem, t, s, omega=None):
    """Transition matrix ``Phi_omega(t, s)`` of the linear part."""
    sys.window.check(t, s)
    P = np.eye(sys.dim)
    if t >= s:
        for k in range(s, t):
            sys.inverse(k, omega)  # singularity check names the step
            P = sys.matrix(k, omega) @ P
    else:
        for k in range(s - 1, t - 1, -1):
            P = sys.inverse(k, omega) @ P
    return P


def invert_step(sys: SemilinearSystem, t, omega, y, lipschitz=None, tol=None, max_iter=None):
    """Solve ``A(t) x + F(t, x) = y`` for ``x``.

    Banach iteration of ``x -> A^{-1} y - A^{-1} F(t, x)``, a contraction
    when ``L ||A(t)^{-1}|| < 1``.  Stops when the a-posteriori error bound
    falls below ``tol`` or the iterate stops changing in floating point.
    """
    y = np.asarray(y, dtype=float)
    tol = sys.tol if tol is None else tol
    max_iter = sys.max_iter if max_iter is None else max_iter
    Ainv = sys.inverse(t, omega)
    x = y @ Ainv.T
    if sys.F is None:
        return x
    L = sys.lipschitz if lipschitz is None else lipschitz
    q = None
    if L is not None:
        q = L * operator_norm(Ainv, t + 1, t, omega, sys.norms)
        if q >= 1.0:
            raise ContractionError(f"backward step at t={t} is not a contraction: L*||A^-1|| >= 1", q)
    eps = np.finfo(float).eps
    for _ in range(max_iter):
        x_new = (y - sys.nonlinear(t, omega, x)) @ Ainv.T
        delta = np.abs(x_new - x).max(initial=0.0)
        x = x_new
        scale = np.abs(x).max(initial=0.0)
        bound = delta if q is None or q == 0 else delta * q / (1.0 - q)
        if bound <= tol or delta <= 4 * eps * scale:
            return x
    residual = float(np.abs(sys.step(t, omega, x) - y).max())
    raise ConvergenceError(
        f"backward step at t={t} did not converge in {max_iter} iterations", factor=q, residual=residual
    )


def trajectory(sys: SemilinearSystem, t_from, t_to, omega, xi, lipschitz=None):
    """States at times ``t_from, ..., t_to`` (either direction) starting from ``xi``.

    Returns an array of shape ``(|t_to - t_from| + 1,) + xi.shape``.
    """
    sys.window.check(t_from, t_to)
    x = np.asarray(xi, dtype=float)
    out = [x]
    if t_to >= t_from:
        for k in range(t_from, t_to):
            x = sys.step(k, omega, x)
            out.append(x)
    else:
        for k in range(t_from - 1, t_to - 1, -1):
            x = invert_step(sys, k, omega, x, lipschitz=lipschitz)
            out.append(x)
    return np.stack(out)


def general_solution(sys: SemilinearSystem, t, tau, omega, xi, lipschitz=None):
    """``phi(t, tau, omega, xi)``: the state at time ``t`` of the solution with ``x_tau = xi``.

    Backward times (``t < tau``) go through :func:`invert_step`.
    """
    return trajectory(sys, tau, t, omega, xi, lipschitz=lipschitz)[-1]


def variation_of_constants(sys: SemilinearSystem, t, tau, omega, xi, forcing):
    """Solution of ``x_{k+1} = A(k) x_k + f(k, omega)`` at time ``t >= tau``.

    Evaluates ``Phi(t,tau) xi + sum_{i=tau}^{t-1} Phi(t,i+1) f(i,omega)``.
    """
    if t < tau:
        raise WindowError(f"variation of constants needs t >= tau, got t={t}, tau={tau}")
    x = evolution_operator(sys, t, tau, omega) @ np.asarray(xi, dtype=float)
    for i in range(tau, t):
        x = x + evolution_operator(sys, t, i + 1, omega) @ np.asarray(forcing(i, omega), dtype=float)
    return x
