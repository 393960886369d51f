"""Construction and verification of the conjugacies ``H`` and ``G = H^{-1}``.

On a window with base point ``tau0`` the conjugacy is built as

    H(t, xi) = xi + phi*_t(xi)(t)
    G(t, eta) = eta - sum_{s=tau0}^{t-1} Phi(t, s+1) F(s, phi(s, t, eta))

where ``phi*_tau(xi)`` is the fixed point of ``phi -> F(phi + L_tau xi)``,
``L_tau xi = Phi(., tau) xi`` and ``F(phi)(t) = sum_{s=tau0}^{t-1} Phi(t,s+1) F(s, phi(s))``.
``phi(s, t, eta)`` is the orbit through ``eta`` at time ``t`` evaluated at
time ``s <= t`` (a backward solution).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import ConditionError, ContractionError, ConvergenceError, WindowError
from .hypotheses import (
    GrowthCertificate,
    NonlinearityBounds,
    SamplingSpec,
    certify_bounded_growth,
    check_conditions,
    estimate_nonlinearity_bounds,
    sample_ball,
)
from .system_core import SemilinearSystem, evolution_operator, operator_norm, trajectory

COMPOSITION_FACTOR = 100


@dataclass
class BoundedSequence:
    """Values ``t -> x(t)`` for ``t = start, ..., start + len(values) - 1``.

    ``values`` has shape ``(n_times,) + batch + (d,)``.
    """

    start: int
    values: np.ndarray
    norms: object = None
    omega: object = None

    @property
    def stop(self):
        return self.start + len(self.values) - 1

    @property
    def times(self):
        return range(self.start, self.stop + 1)

    def at(self, t):
        if not self.start <= t <= self.stop:
            raise WindowError(f"time {t} outside sequence range [{self.start}, {self.stop}]")
        return self.values[t - self.start]

    def pointwise_norms(self):
        return np.stack([self.norms.norm(v, t, self.omega) for t, v in zip(self.times, self.values)])

    @property
    def norm_omega(self):
        """``sup_t ||x(t)||_{t,omega}`` (per batch element)."""
        return self.pointwise_norms().max(axis=0)

    def __add__(self, other):
        assert self.start == other.start and len(self.values) == len(other.values)
        return BoundedSequence(self.start, self.values + other.values, self.norms, self.omega)

    def __sub__(self, other):
        assert self.start == other.start and len(self.values) == len(other.values)
        return BoundedSequence(self.start, self.values - other.values, self.norms, self.omega)


@dataclass
class FixedPointDiagnostics:
    iterations: int
    contraction: float
    first_displacement: float
    apriori_error: float
    last_displacement: float

    def to_dict(self):
        return asdict(self)


def lift_sequence(sys: SemilinearSystem, xi, tau, omega=None, t_end=None):
    """``t -> Phi(t, tau) xi`` on ``[tau0, t_end]``."""
    w = sys.window
    t_end = w.t_max if t_end is None else t_end
    w.check(tau, t_end)
    xi = np.asarray(xi, dtype=float)
    lo, hi = w.tau0, t_end
    vals = {tau: xi}
    x = xi
    for k in range(tau, hi):
        x = x @ sys.matrix(k, omega).T
        vals[k + 1] = x
    x = xi
    for k in range(tau - 1, lo - 1, -1):
        x = x @ sys.inverse(k, omega).T
        vals[k] = x
    return BoundedSequence(lo, np.stack([vals[t] for t in range(lo, hi + 1)]), sys.norms, omega)


def substitution_operator(sys: SemilinearSystem, phi: BoundedSequence, omega=None):
    """``F(phi)(t) = sum_{s=tau0}^{t-1} Phi(t, s+1) F(s, phi(s))`` on the range of ``phi``.

    Evaluated by the recursion ``y(tau0) = 0``, ``y(t+1) = A(t) y(t) + F(t, phi(t))``.
    """
    out = np.zeros_like(phi.values)
    y = out[0]
    for i, t in enumerate(range(phi.start, phi.stop)):
        y = y @ sys.matrix(t, omega).T + sys.nonlinear(t, omega, phi.values[i])
        out[i + 1] = y
    return BoundedSequence(phi.start, out, sys.norms, omega)


def contraction_factor(growth: GrowthCertificate, bounds: NonlinearityBounds):
    return growth.K * bounds.L / (1.0 - growth.alpha)


def solve_phi_star(
    sys: SemilinearSystem,
    xi,
    tau,
    omega=None,
    growth: Optional[GrowthCertificate] = None,
    bounds: Optional[NonlinearityBounds] = None,
    t_end=None,
    tol=None,
    max_iter=500,
):
    """Fixed point of ``phi -> F(phi + L_tau xi)`` by Picard iteration from ``phi = 0``.

    Stops once the a-priori error ``q^n/(1-q) * ||phi_1 - phi_0||`` (times the
    norm-equivalence constant, so the bound is in the ambient norm) is below
    ``tol``, or earlier when the iterate is exact: the operator is causal, so
    ``n`` iterations fix the first ``n`` time steps.
    """
    w = sys.window
    t_end = w.t_max if t_end is None else t_end
    if sys.F is None:
        lifted = lift_sequence(sys, xi, tau, omega, t_end)
        zero = BoundedSequence(lifted.start, np.zeros_like(lifted.values), sys.norms, omega)
        return zero, FixedPointDiagnostics(1, 0.0, 0.0, 0.0, 0.0)
    growth = growth or certify_bounded_growth(sys, omega)
    bounds = bounds or estimate_nonlinearity_bounds(sys, omega)
    tol = sys.tol if tol is None else tol
    q = contraction_factor(growth, bounds)
    if q >= 1.0:
        raise ContractionError("fixed-point operator is not a contraction: K*L/(1-alpha) >= 1", q)
    lifted = lift_sequence(sys, xi, tau, omega, t_end)
    phi = BoundedSequence(lifted.start, np.zeros_like(lifted.values), sys.norms, omega)
    n_causal = len(lifted.values)
    d0 = None
    delta = 0.0
    for n in range(1, max_iter + 1):
        new = substitution_operator(sys, phi + lifted, omega)
        delta = float(np.max((new - phi).norm_omega, initial=0.0))
        phi = new
        if d0 is None:
            d0 = delta
        apriori = (q**n / (1.0 - q)) * d0 if q > 0 else 0.0
        if apriori * growth.ell_max <= tol or delta == 0.0 or n >= n_causal:
            return phi, FixedPointDiagnostics(n, q, d0, apriori, delta)
    raise ConvergenceError(
        f"phi* iteration did not converge in {max_iter} iterations", factor=q, residual=delta
    )


class ConjugacySolution:
    """Evaluators ``H(t, xi)`` and ``G(t, eta)`` for one system and parameter.

    Read-only after construction apart from the ``phi*`` cache.
    """

    def __init__(self, sys, omega, growth, bounds, tol=None, max_iter=500):
        self.sys = sys
        self.omega = omega
        self.growth = growth
        self.bounds = bounds
        self.tol = sys.tol if tol is None else tol
        self.max_iter = max_iter
        self.q = contraction_factor(growth, bounds)
        self.phi_star_cache: dict = {}
        self.diagnostics: list = []

    @property
    def tau0(self):
        return self.sys.window.tau0

    @property
    def composition_tol(self):
        return COMPOSITION_FACTOR * self.tol

    @property
    def near_identity_bound(self):
        return self.growth.K * self.bounds.M / (1.0 - self.growth.alpha)

    def _check_time(self, t):
        self.sys.window.check(t)
        if t < self.tau0:
            raise WindowError(f"conjugacy is defined for t >= tau0={self.tau0}, got {t}")

    def phi_star(self, xi, tau, t_end=None):
        xi = np.asarray(xi, dtype=float)
        t_end = self.sys.window.t_max if t_end is None else t_end
        key = (tau, t_end, xi.shape, xi.tobytes())
        if key not in self.phi_star_cache:
            seq, diag = solve_phi_star(
                self.sys, xi, tau, self.omega, self.growth, self.bounds, t_end, self.tol, self.max_iter
            )
            self.phi_star_cache[key] = seq
            self.diagnostics.append(diag)
        return self.phi_star_cache[key]

    def H(self, t, xi):
        """Linear-to-nonlinear conjugacy ``H(t, xi) = xi + phi*_t(xi)(t)``."""
        self._check_time(t)
        xi = np.asarray(xi, dtype=float)
        if t == self.tau0 or self.sys.F is None:
            return xi.copy()
        return xi + self.phi_star(xi, t, t_end=t).at(t)

    def backward_orbit(self, t, eta):
        """``phi(s, t, eta)`` for ``s = tau0, ..., t``."""
        orbit = trajectory(self.sys, t, self.tau0, self.omega, eta, lipschitz=self.bounds.L)
        return orbit[::-1]

    def G(self, t, eta):
        """Nonlinear-to-linear conjugacy, the inverse of ``H(t, .)``."""
        self._check_time(t)
        eta = np.asarray(eta, dtype=float)
        if t == self.tau0 or self.sys.F is None:
            return eta.copy()
        orbit = self.backward_orbit(t, eta)
        y = np.zeros_like(eta)
        for i, s in enumerate(range(self.tau0, t)):
            y = y @ self.sys.matrix(s, self.omega).T + self.sys.nonlinear(s, self.omega, orbit[i])
        return eta - y


def build_conjugacy(
    sys: SemilinearSystem,
    omega=None,
    growth: Optional[GrowthCertificate] = None,
    bounds: Optional[NonlinearityBounds] = None,
    domain: Optional[SamplingSpec] = None,
    tol=None,
):
    """Certify constants (unless given), check ``K L < 1 - alpha`` and return the solution.

    Raises :class:`ConditionError` carrying the condition report when the
    topological condition fails.
    """
    growth = growth or certify_bounded_growth(sys, omega)
    bounds = bounds or estimate_nonlinearity_bounds(sys, omega, domain)
    report = check_conditions(growth, bounds)
    if not report["topological"].passed:
        raise ConditionError("K*L < 1-alpha", report)
    return ConjugacySolution(sys, omega, growth, bounds, tol=tol)


def forward_conjugacy(sol: ConjugacySolution, t, xi):
    return sol.H(t, xi)


def inverse_conjugacy(sol: ConjugacySolution, t, eta):
    return sol.G(t, eta)


def lipschitz_formulas(growth, bounds, ell_tau=1.0, tau_offset=0):
    """Lipschitz constants for ``G`` and ``H`` as stated for the global result.

    ``tau_offset`` is ``tau - tau0``; the ``H`` constant appears both with and
    without the factor ``alpha^(tau0 - tau) * ell(tau)``.
    """
    K, L, a = growth.K, bounds.L, growth.alpha
    qL = K * L
    out = {
        "L_G_boxed": 1 + K**2 * L / (1 - a**2) * np.exp(qL / (1 - a)),
        "L_G_derived": 1 + K**2 * L / (1 - a),
    }
    if qL < 1:
        base = 1 + K**2 * L / (1 - a)
        tail = K**3 * L**2 / ((1 - a) * (1 - qL))
        out["L_H_without_factor"] = base + tail * ell_tau
        out["L_H_with_factor"] = base + tail * ell_tau * a ** (-float(tau_offset))
    return {k: float(v) for k, v in out.items()}


@dataclass
class VerifySpec:
    n_samples: int = 1000
    radius: float = 10.0
    seed: int = 0
    n_time_pairs: int = 10
    n_lipschitz_pairs: int = 1000
    rows: bool = False


@dataclass
class ConjugacyReport:
    """Residuals and bound comparisons; every verdict carries value and threshold."""

    checks: dict = field(default_factory=dict)
    lipschitz: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)

    def add(self, name, value, threshold, passed=None, **extra):
        value = float(value)
        ok = bool(value <= threshold) if passed is None else bool(passed)
        self.checks[name] = {"value": value, "threshold": float(threshold), "passed": ok, **extra}

    @property
    def passed(self):
        return all(c["passed"] for c in self.checks.values())

    def to_dict(self):
        return {
            "passed": self.passed,
            "checks": self.checks,
            "lipschitz": self.lipschitz,
            "constants": self.constants,
            "samples": self.rows,
        }


def _time_pairs(rng, lo, hi, k):
    s = rng.integers(lo, hi + 1, size=k)
    t = np.array([rng.integers(si, hi + 1) for si in s])
    return list(zip(s.tolist(), t.tolist()))


def verify_conjugacy(sol: ConjugacySolution, spec: Optional[VerifySpec] = None):
    """Sample-based check of every conclusion of the global linearization result.

    (a) ``H(t, Phi(t,s) xi) = phi(t, s, H(s, xi))``
    (b) ``G(t, phi(t, s, eta)) = Phi(t, s) G(s, eta)``
    (c) ``G(t, H(t, xi)) = xi`` and ``H(t, G(t, eta)) = eta``
    (d) empirical Lipschitz ratios of ``H`` and ``G`` against the stated
        constants and against bounds valid on the finite window
    (e) forward growth ``||phi(t,s,eta) - phi(t,s,eta')||_t <= K (alpha+K L)^(t-s) ||eta-eta'||_s``
    plus near-identity and the translation identity of ``phi*``.
    """
    spec = spec or VerifySpec()
    sys, omega, w = sol.sys, sol.omega, sol.sys.window
    rng = np.random.default_rng([spec.seed, 7])
    d = sys.dim
    K, a, L = sol.growth.K, sol.growth.alpha, sol.bounds.L
    ctol = sol.composition_tol
    report = ConjugacyReport()
    report.constants = {
        "K": K,
        "alpha": a,
        "L": L,
        "M": sol.bounds.M,
        "q": sol.q,
        "near_identity_bound": sol.near_identity_bound,
        "composition_tol": ctol,
    }
    pairs = _time_pairs(rng, w.tau0, w.t_max, spec.n_time_pairs)
    sizes = [len(c) for c in np.array_split(np.arange(spec.n_samples), len(pairs))]

    conj_h = conj_g = rt_gh = rt_hg = 0.0
    near_h = near_g = 0.0
    sums = np.zeros(4)
    for (s, t), n in zip(pairs, sizes):
        if n == 0:
            continue
        xi = sample_ball(rng, n, d, spec.radius)
        eta = sample_ball(rng, n, d, spec.radius)
        Phi_ts = evolution_operator(sys, t, s, omega)
        Hs = sol.H(s, xi)
        lhs = sol.H(t, xi @ Phi_ts.T)
        rhs = trajectory(sys, s, t, omega, Hs)[-1]
        ra = np.linalg.norm(lhs - rhs, axis=-1)
        fwd = trajectory(sys, s, t, omega, eta)[-1]
        rb = np.linalg.norm(sol.G(t, fwd) - sol.G(s, eta) @ Phi_ts.T, axis=-1)
        Ht = sol.H(t, xi)
        Gt = sol.G(t, eta)
        rc1 = np.linalg.norm(sol.G(t, Ht) - xi, axis=-1)
        rc2 = np.linalg.norm(sol.H(t, Gt) - eta, axis=-1)
        nh = sys.norms.norm(Ht - xi, t, omega)
        ng = sys.norms.norm(Gt - eta, t, omega)
        conj_h, conj_g = max(conj_h, ra.max()), max(conj_g, rb.max())
        rt_gh, rt_hg = max(rt_gh, rc1.max()), max(rt_hg, rc2.max())
        near_h, near_g = max(near_h, nh.max()), max(near_g, ng.max())
        sums += [ra.sum(), rb.sum(), rc1.sum(), rc2.sum()]
        if spec.rows:
            report.rows.extend(
                {"s": s, "t": t, "conj_H": float(a), "conj_G": float(b), "G_of_H": float(c), "H_of_G": float(e)}
                for a, b, c, e in zip(ra, rb, rc1, rc2)
            )
    means = sums / max(spec.n_samples, 1)

    report.add("conjugation_H", conj_h, ctol, mean=float(means[0]))
    report.add("conjugation_G", conj_g, ctol, mean=float(means[1]))
    report.add("roundtrip_G_of_H", rt_gh, ctol, mean=float(means[2]))
    report.add("roundtrip_H_of_G", rt_hg, ctol, mean=float(means[3]))
    report.add("near_identity_H", near_h, sol.near_identity_bound + sol.tol)
    report.add("near_identity_G", near_g, sol.near_identity_bound + sol.tol)

    # translation identity phi*_tau(xi) = phi*_r(Phi(r, tau) xi); measured relative to the
    # size of the lifted sequence, which carries the rounding of the backward products
    trans = trans_abs = 0.0
    for tau, r in _time_pairs(rng, w.tau0, w.t_max, 3):
        xi = sample_ball(rng, 8, d, spec.radius)
        p1 = sol.phi_star(xi, tau).values
        p2 = sol.phi_star(xi @ evolution_operator(sys, r, tau, omega).T, r).values
        scale = max(1.0, float(np.abs(lift_sequence(sys, xi, tau, omega).values).max()))
        err = float(np.abs(p1 - p2).max())
        trans, trans_abs = max(trans, err / scale), max(trans_abs, err)
    report.add("translation_identity", trans, 10 * ctol, absolute=trans_abs)

    _lipschitz_checks(sol, spec, rng, report)
    _gronwall_check(sol, spec, rng, report)
    return report


def _pair_batch(rng, n, d, radius):
    x = sample_ball(rng, n, d, radius)
    y = sample_ball(rng, n, d, radius)
    k = n // 2
    sep = radius * 10.0 ** (-4.0 * rng.random(k))
    u = rng.standard_normal((k, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    y[:k] = x[:k] + sep[:, None] * u
    return x, y


def _lipschitz_checks(sol, spec, rng, report):
    sys, omega, w = sol.sys, sol.omega, sol.sys.window
    K, a, L = sol.growth.K, sol.growth.alpha, sol.bounds.L
    times = sorted(set(rng.integers(w.tau0, w.t_max + 1, size=4).tolist()))
    per_t = spec.n_lipschitz_pairs // len(times)
    if per_t == 0:
        times = []
    worst = {"H": 0.0, "G": 0.0}
    excess = {}
    window_ok = True
    for t in times:
        x, y = _pair_batch(rng, per_t, sys.dim, spec.radius)
        den = sys.norms.norm(x - y, t, omega)
        rH = float((sys.norms.norm(sol.H(t, x) - sol.H(t, y), t, omega) / den).max())
        rG = float((sys.norms.norm(sol.G(t, x) - sol.G(t, y), t, omega) / den).max())
        worst["H"], worst["G"] = max(worst["H"], rH), max(worst["G"], rG)
        formulas = lipschitz_formulas(sol.growth, sol.bounds, sys.norms.ell(t, omega, sys.dim), t - w.tau0)
        # bounds valid on the finite window: G = Phi(t,tau0) o phi(tau0,t,.), H = phi(t,tau0,.) o Phi(tau0,t)
        n = t - w.tau0
        inv = [operator_norm(sys.inverse(k, omega), k + 1, k, omega, sys.norms) for k in range(w.tau0, t)]
        back = float(np.prod([c / (1 - L * c) for c in inv])) if inv else 1.0
        win_G = operator_norm(evolution_operator(sys, t, w.tau0, omega), w.tau0, t, omega, sys.norms) * back
        win_H = K * (a + K * L) ** n * operator_norm(
            evolution_operator(sys, w.tau0, t, omega), t, w.tau0, omega, sys.norms
        )
        slack = 1 + 1e-6
        window_ok &= rG <= win_G * slack + sol.composition_tol and rH <= win_H * slack + sol.composition_tol
        for name, value in formulas.items():
            ratio = rG if name.startswith("L_G") else rH
            excess.setdefault(name, []).append(ratio - value)
    report.lipschitz = {
        "empirical_H": worst["H"],
        "empirical_G": worst["G"],
        "formula_bounds": lipschitz_formulas(sol.growth, sol.bounds),
        "formula_excess": {k: float(max(v)) for k, v in excess.items()},
        "formula_holds": {k: bool(max(v) <= 0) for k, v in excess.items()},
        "times": times,
    }
    report.add("lipschitz_window_bounds", 0.0 if window_ok else 1.0, 0.0, passed=window_ok)


def _gronwall_check(sol, spec, rng, report):
    sys, omega, w = sol.sys, sol.omega, sol.sys.window
    K, a, L = sol.growth.K, sol.growth.alpha, sol.bounds.L
    pairs = _time_pairs(rng, w.t_min, w.t_max, 10)
    per = spec.n_samples // len(pairs)
    violations, worst = 0, 0.0
    for s, t in pairs if per else []:
        x, y = _pair_batch(rng, per, sys.dim, spec.radius)
        fx = trajectory(sys, s, t, omega, x)[-1]
        fy = trajectory(sys, s, t, omega, y)[-1]
        ratio = sys.norms.norm(fx - fy, t, omega) / sys.norms.norm(x - y, s, omega)
        bound = K * (a + K * L) ** (t - s)
        violations += int(np.sum(ratio > bound * (1 + 1e-12)))
        worst = max(worst, float((ratio / bound).max()))
    report.add("gronwall_growth", violations, 0, worst_ratio_to_bound=worst, n_pairs=per * len(pairs))
