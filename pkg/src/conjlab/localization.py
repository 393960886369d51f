"""Cut-off of nonlinearities that are only locally small, escape times, and
local linearization up to the escape time.

The truncated nonlinearity is ``f~(omega, x) = chi(|x|_omega / sigma(omega)) F(omega, x)``
with a smooth bump ``chi`` equal to 1 on ``[0, 1]`` and 0 on ``[2, inf)``.
Inside ``U(omega) = {|x|_omega < sigma(omega)}`` it returns ``F(omega, x)``
itself, so orbits of the original and truncated systems coincide exactly
until they leave the moving neighbourhood.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .conjugacy import VerifySpec
from .errors import ConditionError, LimitCheckError
from .hypotheses import LIPSCHITZ_SAFETY, sample_ball
from .rds.cocycle import Cocycle, system_from_cocycle
from .rds.linearize import rds_linearize
from .smooth import smoothness_report
from .system_core import TimeWindow, trajectory


def _psi(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def bump(r):
    """Smooth ``chi(r)``: 1 for ``r <= 1``, 0 for ``r >= 2``, strictly between in between."""
    r = np.asarray(r, dtype=float)
    a, b = _psi(2.0 - r), _psi(r - 1.0)
    with np.errstate(invalid="ignore"):
        out = a / (a + b)
    return np.where(r <= 1.0, 1.0, np.where(r >= 2.0, 0.0, out))


def bump_derivative(r):
    """``chi'(r)``; zero outside ``(1, 2)``."""
    r = np.asarray(r, dtype=float)
    u, v = 2.0 - r, r - 1.0
    inside = (r > 1.0) & (r < 2.0)
    out = np.zeros_like(r)
    if inside.any():
        ui, vi = u[inside], v[inside]
        a, b = np.exp(-1.0 / ui), np.exp(-1.0 / vi)
        da = -a / ui**2  # d/dr psi(2 - r)
        db = b / vi**2
        out[inside] = (da * (a + b) - a * (da + db)) / (a + b) ** 2
    return out


def _euclidean(omega, x):
    return np.linalg.norm(np.asarray(x, dtype=float), axis=-1)


@dataclass
class CutoffSystem:
    """Truncated nonlinearity with its per-``omega`` radius table.

    ``norm(omega, x)`` measures states at ``omega`` (the adapted norm, or
    Euclidean by default); Lipschitz quotients use ``norm`` at ``omega`` for
    the argument and at ``theta omega`` for the value.
    """

    F: Callable
    target_L: float
    norm: Callable = _euclidean
    sigma_max: float = 16.0
    n_pairs: int = 4000
    seed: int = 0
    table: dict = field(default_factory=dict)
    zero: bool = False
    dim: int = 1

    def sigma(self, omega):
        key = (omega.sample, omega.offset)
        if key not in self.table:
            self.table[key] = self._search(omega)
        return self.table[key]

    @property
    def sigma_uniform(self):
        """Uniform fallback radius: the smallest radius found so far."""
        return min(self.table.values()) if self.table else None

    def f_tilde(self, omega, x):
        x = np.asarray(x, dtype=float)
        y = np.asarray(self.F(omega, x), dtype=float)
        if self.zero:
            return y
        r = self.norm(omega, x) / self.sigma(omega)
        chi = bump(r)[..., None]
        return np.where(r[..., None] < 1.0, y, chi * y)

    def in_U(self, omega, x):
        return self.norm(omega, x) < self.sigma(omega)

    def lipschitz_quotients(self, omega, x, y):
        num = self.norm(omega.shift(1), self.f_tilde(omega, x) - self.f_tilde(omega, y))
        den = self.norm(omega, x - y)
        ok = den > 0
        return num[ok] / den[ok]

    def _pairs(self, rng, omega, radius, n):
        d = self.dim
        x = _ball_in_norm(rng, n, d, radius, self.norm, omega)
        y = _ball_in_norm(rng, n, d, radius, self.norm, omega)
        k = n // 2
        sep = radius * 10.0 ** (-6.0 * rng.random(k))
        u = rng.standard_normal((k, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        y[:k] = x[:k] + sep[:, None] * u / np.maximum(self.norm(omega, u), 1e-300)[:, None]
        return x, y

    def _search(self, omega):
        if self.zero:
            return self.sigma_max
        rng = np.random.default_rng([self.seed, omega.sample, abs(omega.offset), int(omega.offset < 0)])
        sigma = self.sigma_max
        for _ in range(200):
            self.table[(omega.sample, omega.offset)] = sigma
            x, y = self._pairs(rng, omega, 2.2 * sigma, self.n_pairs)
            lip = float(self.lipschitz_quotients(omega, x, y).max(initial=0.0))
            sup = float(self.norm(omega.shift(1), self.f_tilde(omega, x)).max())
            if LIPSCHITZ_SAFETY * lip <= self.target_L and sup <= 1.0:
                return sigma
            sigma /= 2.0
        raise ConditionError("cut-off radius search exhausted", {"omega": (omega.sample, omega.offset)})

    def to_json(self, path=None):
        data = {
            "target_L": self.target_L,
            "sigma": {f"{s}:{o}": v for (s, o), v in sorted(self.table.items())},
            "sigma_uniform": self.sigma_uniform,
        }
        text = json.dumps(data, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _ball_in_norm(rng, n, d, radius, norm, omega):
    """Points uniformly spread (in radius) over ``{|x|_omega < radius}``."""
    u = rng.standard_normal((n, d))
    u /= np.maximum(norm(omega, u), 1e-300)[:, None]
    r = radius * rng.random(n) ** (1.0 / d)
    return u * r[:, None]


def vanishing_quotients(F, omega, dim, radii=(1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6), n=2000, seed=0):
    """Largest sampled ``|F(x) - F(y)| / |x - y|`` on balls of shrinking radius."""
    rng = np.random.default_rng([seed, 17])
    out = []
    for rho in radii:
        x = sample_ball(rng, n, dim, rho)
        y = sample_ball(rng, n, dim, rho)
        num = np.linalg.norm(np.asarray(F(omega, x)) - np.asarray(F(omega, y)), axis=-1)
        den = np.linalg.norm(x - y, axis=-1)
        out.append(float((num / den).max()))
    return np.asarray(radii), np.asarray(out)


def cutoff_nonlinearity(F, omegas, target_L, dim=1, norm=None, sigma_max=16.0, n_pairs=4000, seed=0):
    """Build the truncated nonlinearity and its radius table on the given base points.

    Refuses (:class:`LimitCheckError`) unless ``F(omega, 0) = 0`` and the
    difference quotients of ``F`` shrink to 0 on balls around the origin:
    the smallest-ball quotient must be below ``target_L`` and below half
    the largest-ball quotient.
    """
    omegas = list(omegas)
    zero = True
    for om in omegas:
        f0 = np.asarray(F(om, np.zeros((1, dim))))
        if np.any(f0 != 0):
            raise LimitCheckError("F(omega, 0) != 0", {"omega": (om.sample, om.offset), "F0": f0.tolist()})
        radii, q = vanishing_quotients(F, om, dim, seed=seed)
        if q[-1] >= target_L or q[-1] > 0.5 * q[0]:
            raise LimitCheckError(
                "difference quotients of F do not vanish at the origin",
                {"radii": radii.tolist(), "quotients": q.tolist()},
            )
        probe = sample_ball(np.random.default_rng([seed, 19]), 256, dim, sigma_max)
        zero &= bool(np.all(np.asarray(F(om, probe)) == 0)) and bool(np.all(q == 0))
    cut = CutoffSystem(F, target_L, norm or _euclidean, sigma_max, n_pairs, seed, zero=zero, dim=dim)
    for om in omegas:
        cut.sigma(om)
    return cut


class _Stepper:
    def __init__(self, cocycle, F):
        self.cocycle, self.F = cocycle, F

    def step(self, omega, x):
        return x @ self.cocycle.matrix(omega).T + np.asarray(self.F(omega, x), dtype=float)


def escape_time(psi, cut: CutoffSystem, omega, x, t_cap):
    """Largest ``t <= t_cap`` with ``psi(tau, omega, x)`` in ``U(theta^tau omega)`` for all ``tau <= t``.

    ``psi`` is anything with ``step(omega, x)`` (one step of the RDS).
    Works on a batch; points outside ``U(omega)`` get ``-1``.  Orbits that
    never leave return ``t_cap`` (the window-capped infinity).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.full(len(x), t_cap, dtype=int)
    alive = np.ones(len(x), dtype=bool)
    for tau in range(t_cap + 1):
        om = omega.shift(tau)
        inside = cut.in_U(om, x)
        left = alive & ~inside
        out[left] = tau - 1
        alive &= inside
        if not alive.any() or tau == t_cap:
            break
        x = psi.step(om, x)
    return out


@dataclass
class LocalReport:
    sigma: float
    escape_times: list
    orbit_mismatch: int
    residual: float
    residual_after_escape: float
    near_identity: float
    near_identity_bound: float
    tolerance: float
    global_report: dict
    smoothness: Optional[dict] = None

    @property
    def passed(self):
        ok = self.orbit_mismatch == 0 and self.residual <= self.tolerance
        if self.smoothness is not None:
            ok &= not self.smoothness["failures"]
        return bool(ok)

    def to_dict(self):
        out = dict(self.__dict__)
        out["passed"] = self.passed
        return out


def local_linearize(
    cocycle: Cocycle,
    F,
    cut: CutoffSystem,
    norm,
    window: TimeWindow,
    omega,
    mode="topological",
    n_points=64,
    seed=0,
    tol=1e-7,
    jacobian=None,
):
    """Global conjugacy of the truncated system, checked on ``U(omega)`` up to escape times.

    Verifies that the original and truncated orbits agree exactly up to the
    escape time, and reports the conjugation residual
    ``||h(theta^t omega, psi(t, omega, x)) - Phi(t, omega) h(omega, x)||`` over
    ``t <= t_max(omega, x)`` (residuals after escape are reported but do not
    enter the verdict).
    """
    lin = rds_linearize(cocycle, cut.f_tilde, norm, window, omega, mode=mode, jacobian=jacobian)
    orig = system_from_cocycle(cocycle, window, F, norms=lin.system.norms)
    rng = np.random.default_rng([seed, 23])
    sigma = cut.sigma(omega)
    x = _ball_in_norm(rng, n_points, cocycle.dim, sigma, cut.norm, omega)
    x[0] = 0.0
    stepper = _Stepper(cocycle, F)
    t_esc = escape_time(stepper, cut, omega, x, window.t_max)
    path = trajectory(orig, window.t_min, window.t_max, omega, x)
    path_cut = trajectory(lin.system, window.t_min, window.t_max, omega, x)
    mismatch = 0
    for i, te in enumerate(t_esc):
        if te >= 0:
            mismatch += int(not np.array_equal(path[: te + 1, i], path_cut[: te + 1, i]))
    h0 = lin.h(window.t_min, x)
    res = res_after = near = 0.0
    P = np.eye(cocycle.dim)
    for t in window.times:
        if t > window.t_min:
            P = lin.system.matrix(t - 1, omega) @ P
        r = np.linalg.norm(lin.h(t, path[t - window.t_min]) - h0 @ P.T, axis=-1)
        inside = t <= t_esc
        if inside.any():
            res = max(res, float(r[inside].max()))
            dev = lin.system.norms.norm(lin.h(t, path[t - window.t_min][inside]) - path[t - window.t_min][inside],
                                        t, omega)
            near = max(near, float(dev.max()))
        if (~inside).any():
            res_after = max(res_after, float(r[~inside].max()))
    smooth = None
    if mode == "smooth":
        smooth = smoothness_report(lin.solution, 1, VerifySpec(radius=sigma)).to_dict()
    return LocalReport(
        sigma=float(sigma),
        escape_times=t_esc.tolist(),
        orbit_mismatch=mismatch,
        residual=res,
        residual_after_escape=res_after,
        near_identity=near,
        near_identity_bound=lin.near_identity_bound,
        tolerance=tol,
        global_report=lin.report,
        smoothness=smooth,
    )
