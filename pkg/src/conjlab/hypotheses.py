"""Certified constants for bounded growth and the nonlinearity, and the
smallness conditions built from them.

Constants are certified on the sampled window and domain only; every
result carries the sampling it was computed from.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from .errors import CertificateError, EvaluationError
from .system_core import SemilinearSystem, operator_norm

LIPSCHITZ_SAFETY = 1.05
FD_STEPS = {1: 1e-5, 2: 1e-4, 3: 1e-3}


@dataclass
class SamplingSpec:
    """Where and how densely a system is sampled."""

    radius: float = 10.0
    n_points: int = 1000
    n_pairs: int = 10_000
    seed: int = 0

    def rng(self, salt=0):
        return np.random.default_rng([self.seed, salt])


@dataclass
class GrowthCertificate:
    """``||Phi(t,s)||_{s,t} <= K alpha^(t-s)`` for all sampled ``s <= t``."""

    K: float
    alpha: float
    residual: float = 0.0
    inverse_norm: Optional[float] = None
    ell_max: float = 1.0
    window: Optional[tuple] = None

    def bound(self, n):
        return self.K * self.alpha ** np.asarray(n, dtype=float)

    def to_dict(self):
        return asdict(self)


@dataclass
class NonlinearityBounds:
    """Sup bound ``M``, Lipschitz constant ``L`` and derivative bounds ``Mj``."""

    M: float
    L: float
    Mj: list = field(default_factory=list)
    sampling: Optional[dict] = None
    lipschitz_raw: Optional[float] = None

    @property
    def M1(self):
        return self.Mj[1] if len(self.Mj) > 1 else None

    def to_dict(self):
        return asdict(self)


def _growth_table(sys: SemilinearSystem, omega):
    """``table[s_idx, n] = ||Phi(s+n, s)||_{s, s+n}`` (NaN where ``s+n`` leaves the window)."""
    times = list(sys.window.times)
    N = len(times)
    table = np.full((N, N), np.nan)
    for i, s in enumerate(times):
        P = np.eye(sys.dim)
        mats = []
        for n in range(N - i):
            mats.append(P)
            if n < N - i - 1:
                sys.inverse(s + n, omega)
                P = sys.matrix(s + n, omega) @ P
        mats = np.stack(mats)
        if sys.norms.is_euclidean:
            table[i, : N - i] = np.linalg.norm(mats, ord=2, axis=(-2, -1))
        else:
            table[i, : N - i] = [operator_norm(M, s, s + n, omega, sys.norms) for n, M in enumerate(mats)]
    return table


def certify_bounded_growth(sys: SemilinearSystem, omega=None, alpha=None):
    """Fit ``(K, alpha)`` with ``||Phi(t,s)|| <= K alpha^(t-s)`` on the window.

    ``alpha`` comes from a log-linear least-squares fit of
    ``g(n) = max_s ||Phi(s+n, s)||`` against ``n`` unless given; ``K`` is
    then the largest observed ratio, so the certificate holds on every pair
    by construction.
    """
    table = _growth_table(sys, omega)
    g = np.nanmax(table, axis=0)
    n = np.arange(len(g), dtype=float)
    if alpha is None:
        ok = g > 0
        if ok.sum() < 2:
            alpha = 0.0 if len(g) > 1 else 0.5
        else:
            slope = np.polyfit(n[ok], np.log(g[ok]), 1)[0]
            alpha = float(np.exp(slope))
    if not 0.0 < alpha < 1.0:
        raise CertificateError(f"no contractive growth certificate on window (alpha estimate {alpha:.6g})")
    with np.errstate(over="ignore"):
        ratios = table / alpha ** n[None, :]
    K = float(max(1.0, np.nanmax(ratios)))
    bound = K * alpha ** n[None, :]
    residual = float(np.nanmax(table - bound))
    inv = [
        operator_norm(sys.inverse(t, omega), t + 1, t, omega, sys.norms)
        for t in range(sys.window.t_min, sys.window.t_max)
    ]
    ell = max(sys.norms.ell(t, omega, sys.dim) for t in sys.window.times)
    return GrowthCertificate(
        K=K,
        alpha=alpha,
        residual=residual,
        inverse_norm=float(max(inv)) if inv else None,
        ell_max=float(ell),
        window=(sys.window.t_min, sys.window.t_max),
    )


def recheck_growth(sys: SemilinearSystem, cert: GrowthCertificate, omega=None):
    """Largest ``||Phi(t,s)|| - K alpha^(t-s)`` over all window pairs (<= 0 means it holds)."""
    table = _growth_table(sys, omega)
    n = np.arange(table.shape[1], dtype=float)
    return float(np.nanmax(table - cert.K * cert.alpha ** n[None, :]))


def sample_ball(rng, n, dim, radius):
    """``n`` points uniformly distributed in the Euclidean ball of given radius."""
    direction = rng.standard_normal((n, dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / dim)
    return direction * r[:, None]


def _check_finite(values, t, x):
    bad = ~np.all(np.isfinite(values.reshape(len(values), -1)), axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        raise EvaluationError(f"non-finite value of F at t={t}", sample=(t, x[i]))


def fd_jacobian(fun, x, step=FD_STEPS[1]):
    """Central-difference Jacobian of ``fun`` at a batch ``x`` of shape ``(n, d)``.

    Returns ``(n, d_out..., d)``; the step is scaled by ``max(1, |x|)``.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    h = step * np.maximum(1.0, np.abs(x).max(axis=-1, keepdims=True))
    cols = []
    for k in range(d):
        e = np.zeros(d)
        e[k] = 1.0
        fp = np.asarray(fun(x + h * e))
        fm = np.asarray(fun(x - h * e))
        hk = h.reshape(h.shape[:1] + (1,) * (fp.ndim - 1))
        cols.append((fp - fm) / (2 * hk))
    return np.stack(cols, axis=-1)


def derivative_tensor(sys: SemilinearSystem, t, omega, x, order):
    """``D_2^j F(t, x)`` for a batch ``x``: shape ``(n, d, d, ..., d)`` with ``j`` trailing axes.

    Order 1 uses the analytic Jacobian when available; higher orders are
    central differences of the next lower order.
    """
    x = np.asarray(x, dtype=float)
    if order == 0:
        return sys.nonlinear(t, omega, x)
    if order == 1:
        if sys.jacobian is not None:
            J = np.asarray(sys.jacobian(t, omega, x), dtype=float)
            return np.broadcast_to(J, x.shape + (sys.dim,)).copy()
        return fd_jacobian(lambda z: sys.nonlinear(t, omega, z), x, FD_STEPS[1])
    step = FD_STEPS.get(order, FD_STEPS[3])
    return fd_jacobian(lambda z: derivative_tensor(sys, t, omega, z, order - 1), x, step)


def _weighted_tensor_norm(T, sys, t, omega):
    """Bound on ``sup ||T[u1..uj]||_{t+1}`` over ``||ui||_t <= 1`` for a batch of tensors."""
    order = T.ndim - 2
    Cout = sys.norms.factor(t + 1, omega)
    Cin = sys.norms.factor(t, omega)
    if order == 1:
        return operator_norm(T, t, t + 1, omega, sys.norms)
    if Cout is not None:
        T = np.moveaxis(np.tensordot(T, Cout, axes=([1], [0])), -1, 1)
    if Cin is not None:
        Cinv_T = np.linalg.inv(Cin).T  # u = C^{-T} v with ||v|| = 1
        for ax in range(2, T.ndim):
            T = np.moveaxis(np.tensordot(T, Cinv_T, axes=([ax], [0])), -1, ax)
    # Frobenius norm dominates the multilinear operator norm
    return np.sqrt((T.reshape(T.shape[0], -1) ** 2).sum(axis=1))


def _refine_sup(sys, omega, ts, pts, radius, n_start=5):
    """Polish the largest sampled values of ``||F(t,x)||_{t+1}`` by local maximization in the ball."""

    def project(z):
        r = np.linalg.norm(z)
        return z if r <= radius else z * (radius / r)

    vals = np.array([sys.norms.norm(sys.nonlinear(int(t), omega, x), int(t) + 1, omega) for t, x in zip(ts, pts)])
    best = 0.0
    for i in np.argsort(vals)[::-1][:n_start]:
        t = int(ts[i])

        def neg(z, t=t):
            return -float(sys.norms.norm(sys.nonlinear(t, omega, project(z)), t + 1, omega))

        res = optimize.minimize(neg, pts[i], method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-15})
        best = max(best, -neg(res.x), float(vals[i]))
    return best


def estimate_nonlinearity_bounds(sys: SemilinearSystem, omega=None, domain: Optional[SamplingSpec] = None, m=1):
    """Sampled bounds ``M``, ``L`` and ``M_0..M_m`` of ``F`` on a ball.

    ``M = max ||F(t,x)||_{t+1}`` (the largest samples are polished by a local
    maximization); ``L`` is the largest difference quotient
    ``||F(t,x)-F(t,y)||_{t+1} / ||x-y||_t`` over the sampled pairs times a
    1.05 safety factor; half of the pairs are local (log-uniform separations
    down to ``1e-6 radius``) so the estimate also sees the derivative.
    """
    domain = domain or SamplingSpec()
    rng = domain.rng(salt=1)
    d = sys.dim
    t_lo, t_hi = sys.window.t_min, max(sys.window.t_min, sys.window.t_max - 1)
    if sys.F is None:
        return NonlinearityBounds(M=0.0, L=0.0, Mj=[0.0] * (m + 1), sampling=asdict(domain), lipschitz_raw=0.0)

    ts = rng.integers(t_lo, t_hi + 1, size=domain.n_points)
    pts = sample_ball(rng, domain.n_points, d, domain.radius)
    pts[0] = 0.0
    pair_t = rng.integers(t_lo, t_hi + 1, size=domain.n_pairs)
    xa = sample_ball(rng, domain.n_pairs, d, domain.radius)
    xb = sample_ball(rng, domain.n_pairs, d, domain.radius)
    n_local = domain.n_pairs // 2
    sep = domain.radius * 10.0 ** (-6.0 * rng.random(n_local))
    u = rng.standard_normal((n_local, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    xb[:n_local] = xa[:n_local] + sep[:, None] * u
    # keep local partners inside the ball
    r = np.linalg.norm(xb, axis=1, keepdims=True)
    xb = np.where(r > domain.radius, xb * (domain.radius / np.maximum(r, 1e-300)), xb)

    Mj = [0.0] * (m + 1)
    for t in np.unique(ts):
        x = pts[ts == t]
        y = sys.nonlinear(int(t), omega, x)
        _check_finite(y, t, x)
        Mj[0] = max(Mj[0], float(sys.norms.norm(y, int(t) + 1, omega).max()))
        for j in range(1, m + 1):
            T = derivative_tensor(sys, int(t), omega, x, j)
            _check_finite(T, t, x)
            Mj[j] = max(Mj[j], float(np.max(_weighted_tensor_norm(T, sys, int(t), omega))))

    Mj[0] = max(Mj[0], _refine_sup(sys, omega, ts, pts, domain.radius))

    L_raw = 0.0
    for t in np.unique(pair_t):
        sel = pair_t == t
        a, b = xa[sel], xb[sel]
        fa = sys.nonlinear(int(t), omega, a)
        fb = sys.nonlinear(int(t), omega, b)
        _check_finite(fa, t, a)
        _check_finite(fb, t, b)
        num = sys.norms.norm(fa - fb, int(t) + 1, omega)
        den = sys.norms.norm(a - b, int(t), omega)
        ok = den > 0
        if ok.any():
            L_raw = max(L_raw, float((num[ok] / den[ok]).max()))
    return NonlinearityBounds(
        M=Mj[0],
        L=LIPSCHITZ_SAFETY * L_raw,
        Mj=Mj,
        sampling=asdict(domain),
        lipschitz_raw=L_raw,
    )


@dataclass
class Condition:
    name: str
    passed: bool
    value: float
    threshold: float
    margin: float
    statement: str

    def to_dict(self):
        return asdict(self)


@dataclass
class ConditionReport:
    conditions: dict

    def __getitem__(self, name):
        return self.conditions[name]

    def __contains__(self, name):
        return name in self.conditions

    @property
    def passed(self):
        return all(c.passed for c in self.conditions.values())

    def to_dict(self):
        return {name: c.to_dict() for name, c in self.conditions.items()}


def check_conditions(growth: GrowthCertificate, bounds: NonlinearityBounds):
    """Smallness conditions of the global linearization results.

    * ``topological``: ``K L < 1 - alpha``
    * ``smooth``: ``M_1 K < 1 - alpha`` (when ``M_1`` is known)
    * ``invertibility``: ``L max_t ||A(t)^{-1}|| < 1`` (when the certificate carries it)

    Failures are reported, never raised.
    """
    K, a = growth.K, growth.alpha
    out = {}
    v = K * bounds.L
    out["topological"] = Condition("topological", v < 1 - a, v, 1 - a, (1 - a) - v, "K*L < 1-alpha")
    if bounds.M1 is not None:
        v = bounds.M1 * K
        out["smooth"] = Condition("smooth", v < 1 - a, v, 1 - a, (1 - a) - v, "M1*K < 1-alpha")
    if growth.inverse_norm is not None:
        v = bounds.L * growth.inverse_norm
        out["invertibility"] = Condition("invertibility", v < 1, v, 1.0, 1.0 - v, "L*max||A^-1|| < 1")
    return ConditionReport(out)


def gronwall_bound(c, b, kappa=0):
    """Discrete Gronwall bound.

    If ``a(k) <= c(k) + b * sum_{i=kappa}^{k-1} a(i)`` for all ``k >= kappa``
    then ``a(k) <= (1+b)^(k-kappa) c(kappa) + sum_{i=kappa+1}^{k} (1+b)^(k-i) (c(i) - c(i-1))``.
    ``c`` is indexed from ``kappa``: ``c[0]`` is ``c(kappa)``.  Returns the
    bound for ``k = kappa, ..., kappa + len(c) - 1``.
    """
    if b < 0:
        raise ValueError("Gronwall constant b must be nonnegative")
    c = np.asarray(c, dtype=float)
    out = np.empty_like(c)
    acc = c[0]
    out[0] = acc
    for j in range(1, len(c)):
        acc = (1 + b) * acc + (c[j] - c[j - 1])
        out[j] = acc
    return out


def gronwall_premise(a, c, b):
    """Slack ``c(k) + b sum_{i<k} a(i) - a(k)`` of the premise (all >= 0 means it holds)."""
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float)
    partial = np.concatenate([[0.0], np.cumsum(a)[:-1]])
    return c + b * partial - a


def gronwall_check(a, c, b, rtol=1e-12):
    """``True`` when the premise fails or when ``a <= gronwall_bound(c, b)`` holds everywhere."""
    if np.any(gronwall_premise(a, c, b) < -rtol * (1 + np.abs(np.asarray(a)))):
        return True
    bound = gronwall_bound(c, b)
    return bool(np.all(np.asarray(a) <= bound + rtol * (1 + np.abs(bound))))
