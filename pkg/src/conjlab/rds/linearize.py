"""Linearization of a random dynamical system in its adapted norm."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..conjugacy import ConjugacySolution, VerifySpec, verify_conjugacy
from ..errors import CertificateError, ConditionError
from ..hypotheses import (
    Condition,
    ConditionReport,
    GrowthCertificate,
    SamplingSpec,
    check_conditions,
    estimate_nonlinearity_bounds,
    recheck_growth,
)
from ..smooth import smoothness_report
from ..system_core import TimeWindow, operator_norm
from .adapted_norm import RandomNorm
from .cocycle import Cocycle, system_from_cocycle
from .mds import Omega

GROWTH_RTOL = 1e-9


@dataclass
class RDSLinearization:
    """``h(theta^t omega, .)`` and its inverse for one sampled ``omega`` on a window.

    ``h`` maps orbits of the nonlinear RDS onto orbits of the linear cocycle:
    ``h(theta^t omega, psi(t, omega, x)) = Phi(t, omega) h(omega, x)``.
    """

    solution: ConjugacySolution
    omega: Omega
    conditions: ConditionReport
    report: dict = field(default_factory=dict)

    def h(self, t, x):
        return self.solution.G(t, x)

    def h_inv(self, t, x):
        return self.solution.H(t, x)

    @property
    def system(self):
        return self.solution.sys

    @property
    def near_identity_bound(self):
        return self.solution.near_identity_bound


def adapted_certificate(sys, norm: RandomNorm, omega: Omega):
    """``K = 1``, ``alpha = exp(lambda_1 + a)``, re-checked on every window pair."""
    rep = norm.report
    cert = GrowthCertificate(K=1.0, alpha=rep.alpha)
    cert.residual = recheck_growth(sys, cert, omega)
    if cert.residual > GROWTH_RTOL:
        raise CertificateError(
            f"adapted norm violates ||Phi(t,s)|| <= exp((lambda_1+a)(t-s)) by {cert.residual:.3g}"
        )
    w = sys.window
    inv = [operator_norm(sys.inverse(t, omega), t + 1, t, omega, sys.norms) for t in range(w.t_min, w.t_max)]
    cert.inverse_norm = float(max(inv)) if inv else None
    cert.ell_max = float(max(sys.norms.ell(t, omega, sys.dim) for t in w.times))
    cert.window = (w.t_min, w.t_max)
    return cert


def rds_conditions(growth, bounds, smooth=False):
    """Conditions of the global RDS result: both ``L <= alpha`` and ``K L < 1 - alpha``
    plus invertibility (and ``M_1 K < 1 - alpha`` in smooth mode)."""
    rep = check_conditions(growth, bounds)
    a = growth.alpha
    conds = dict(rep.conditions)
    conds["lipschitz_vs_alpha"] = Condition("lipschitz_vs_alpha", bounds.L <= a, bounds.L, a, a - bounds.L, "L <= alpha")
    if not smooth:
        conds.pop("smooth", None)
    return ConditionReport(conds)


def rds_linearize(
    cocycle: Cocycle,
    nonlinear,
    norm: RandomNorm,
    window: TimeWindow,
    omega: Optional[Omega] = None,
    mode="topological",
    jacobian=None,
    domain: Optional[SamplingSpec] = None,
    verify: Optional[VerifySpec] = None,
    tol=None,
):
    """Build ``h`` and ``h^-1`` for ``x -> A(omega) x + nonlinear(omega, x)``.

    The norms are ``||x||_{t, omega} = |x|_{theta^t omega}`` and the growth
    certificate is ``(1, exp(lambda_1 + a))``.  Raises :class:`ConditionError`
    naming the failed conditions (negative spectrum, ``L <= alpha``,
    ``K L < 1 - alpha``, invertibility, and ``M_1 K < 1 - alpha`` in smooth
    mode).  With ``verify`` set, the report holds the conjugation, round-trip
    and near-identity checks (and the smoothness report in smooth mode).
    """
    if mode not in ("topological", "smooth"):
        raise ValueError(f"unknown mode {mode!r}")
    rep = norm.report
    if not rep.negative:
        raise ConditionError("negative Lyapunov spectrum (lambda_i + a < 0)", rep.to_dict())
    omega = omega or rep.omega
    kw = {} if tol is None else {"tol": tol}
    sys = system_from_cocycle(cocycle, window, nonlinear, norms=norm.norm_family(), jacobian=jacobian, **kw)
    growth = adapted_certificate(sys, norm, omega)
    if nonlinear is None:
        bounds = estimate_nonlinearity_bounds(sys, omega, domain)
    else:
        bounds = estimate_nonlinearity_bounds(sys, omega, domain, m=1)
    conds = rds_conditions(growth, bounds, smooth=mode == "smooth")
    failed = [name for name, c in conds.conditions.items() if not c.passed]
    if failed:
        raise ConditionError(", ".join(failed), conds.to_dict())
    sol = ConjugacySolution(sys, omega, growth, bounds)
    out = RDSLinearization(sol, omega, conds)
    out.report = {
        "spectrum": rep.to_dict(),
        "constants": {"K": growth.K, "alpha": growth.alpha, "L": bounds.L, "M": bounds.M, "M1": bounds.M1,
                      "growth_residual": growth.residual},
        "conditions": conds.to_dict(),
        "near_identity_bound": sol.near_identity_bound,
    }
    if verify is not None:
        out.report["verification"] = verify_conjugacy(sol, verify).to_dict()
        if mode == "smooth":
            out.report["smoothness"] = smoothness_report(sol, 1, verify).to_dict()
    return out


def orbit_conjugation_residual(lin: RDSLinearization, n_orbits=16, radius=1.0, seed=0):
    """Largest ``||h(theta^t omega, psi(t, omega, x)) - Phi(t, omega) h(omega, x)||`` over sampled
    orbits and all window times, with the near-identity sup of ``h`` along them."""
    from ..hypotheses import sample_ball
    from ..system_core import evolution_operator, trajectory

    sys, om = lin.system, lin.omega
    rng = np.random.default_rng([seed, 13])
    w = sys.window
    x = sample_ball(rng, n_orbits, sys.dim, radius)
    orbit = trajectory(sys, w.t_min, w.t_max, om, x)
    h0 = lin.h(w.t_min, x)
    res = near = 0.0
    for i, t in enumerate(w.times):
        ht = lin.h(t, orbit[i])
        lin_orbit = h0 @ evolution_operator(sys, t, w.t_min, om).T
        res = max(res, float(np.linalg.norm(ht - lin_orbit, axis=-1).max()))
        near = max(near, float(sys.norms.norm(ht - orbit[i], t, om).max()))
    return {"residual": res, "near_identity": near, "bound": lin.near_identity_bound}
