"""Experiment orchestration: certify, construct and verify per configuration flags."""

from __future__ import annotations

import hashlib
import math
import time
from contextlib import contextmanager

import numpy as np

from .. import __version__
from ..conjugacy import ConjugacySolution, VerifySpec, verify_conjugacy
from ..errors import (
    CertificateError,
    ConditionError,
    ContractionError,
    LimitCheckError,
    SmoothnessError,
)
from ..families import componentwise, linear_matrix, make_system, nonlinearity
from ..hypotheses import (
    ConditionReport,
    SamplingSpec,
    certify_bounded_growth,
    check_conditions,
    estimate_nonlinearity_bounds,
)
from ..localization import cutoff_nonlinearity, local_linearize
from ..rds.adapted_norm import adapted_random_norm, sandwich_check
from ..rds.cocycle import Cocycle, system_from_cocycle
from ..rds.linearize import (
    RDSLinearization,
    adapted_certificate,
    orbit_conjugation_residual,
    rds_conditions,
)
from ..rds.mds import BLOCK, make_shift_mds
from ..rds.spectrum import lyapunov_spectrum
from ..smooth import smoothness_report
from ..system_core import TimeWindow
from .cache import Cache
from .config import ExperimentConfig
from .report import RunReport

COMMANDS = ("check", "conjugate", "verify", "spectrum", "localize", "report")
CONDITION_ERRORS = (ConditionError, ContractionError, CertificateError, LimitCheckError, SmoothnessError)
SANDWICH_TOL = 1e-10


class _Context:
    """Objects shared between the stages of one run."""

    def __init__(self, cfg: ExperimentConfig, report: RunReport):
        self.cfg = cfg
        self.report = report
        self.cache = Cache(cfg.output.cache_dir) if cfg.output.cache_dir else None
        w = cfg.window
        self.window = TimeWindow(w.t_min, w.t_max, w.tau0)
        self.is_random = cfg.system.family == "bernoulli" or cfg.mode.rds
        self._spectrum = None
        self._norm = None
        self._mds = None

    @contextmanager
    def timed(self, stage):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.report.timings[stage] = time.perf_counter() - t0

    def run_stage(self, name, fun):
        """Run one stage; refusals and errors become failure entries."""
        with self.timed(name):
            try:
                fun(self)
            except CONDITION_ERRORS as exc:
                self.report.fail("condition", exc)
            except Exception as exc:  # anything else is a hard error of the run
                self.report.fail("error", exc)

    def domain(self, salt=0):
        s = self.cfg.sampling
        return SamplingSpec(radius=s.radius, n_points=s.n_points, n_pairs=s.n_pairs, seed=self.cfg.seed + salt)

    def verify_spec(self, rows=True, radius=None):
        s = self.cfg.sampling
        return VerifySpec(
            n_samples=s.n_samples,
            radius=s.radius if radius is None else radius,
            seed=self.cfg.seed,
            n_time_pairs=s.n_time_pairs,
            n_lipschitz_pairs=s.n_lipschitz_pairs,
            rows=rows,
        )

    # deterministic systems

    def system(self):
        sc, nl = self.cfg.system, self.cfg.system.nonlinearity
        return make_system(
            sc.family, sc.dim, self.window, sc.coefficients, nl.kind, nl.scale, nl.coefficients,
            weights=self.cfg.norm.weights, tol=self.cfg.tolerances.solver,
            max_iter=self.cfg.tolerances.max_iter, name=self.cfg.name,
        )

    # random systems

    def cocycle(self):
        sc = self.cfg.system
        if sc.family == "bernoulli":
            return Cocycle.from_symbols(sc.coefficients["matrices"], name=self.cfg.name)
        return Cocycle.constant(linear_matrix(sc.family, sc.dim, sc.coefficients), name=self.cfg.name)

    def mds(self, cocycle):
        if self._mds is not None:
            return self._mds
        k = 1 if cocycle.table is None else len(cocycle.table)
        probs = self.cfg.rds.probs or [1.0 / k] * k
        mds = make_shift_mds("bernoulli", self.cfg.seed, alphabet=list(range(k)), probs=probs)
        if self.cache is not None:
            self._prefill(mds)
        self._mds = mds
        return mds

    def _stream_kind(self, mds):
        return "omega:" + ",".join(repr(p) for p in mds.probs)

    def _prefill(self, mds):
        r = self.cfg.rds
        n_blocks = math.ceil(r.n_steps / BLOCK)

        def build():
            return {"blocks": np.stack([np.stack([mds._block(s, b) for b in range(n_blocks)])
                                        for s in range(r.n_samples)])}

        arrays, hit = self.cache.get_or_create(self._stream_kind(mds), self.cfg.seed, r.n_steps * r.n_samples, build)
        for s in range(r.n_samples):
            for b in range(n_blocks):
                mds._blocks[(s, b)] = arrays["blocks"][s, b]
        self.report.timings.setdefault("cache", {})["omega_hit"] = hit

    def spectrum(self, cocycle, mds):
        if self._spectrum is None:
            r = self.cfg.rds
            store = None
            if self.cache is not None:
                digest = hashlib.sha256(np.asarray(cocycle.table if cocycle.table is not None
                                                   else cocycle.fixed).tobytes()).hexdigest()[:16]
                kind = f"spectrum:{digest}:{self._stream_kind(mds)}:{r.n_samples}"

                def store(build):
                    arrays, hit = self.cache.get_or_create(kind, self.cfg.seed, r.n_steps, build)
                    self.report.timings.setdefault("cache", {})["spectrum_hit"] = hit
                    return arrays

            self._spectrum = lyapunov_spectrum(cocycle, mds, r.n_steps, r.n_samples,
                                               omega=mds.omega(r.omega_sample), store=store)
        return self._spectrum

    def adapted_norm(self, cocycle, mds):
        if self._norm is None:
            rep = self.spectrum(cocycle, mds)
            t_hi = max(self.window.t_max + 1, self.cfg.rds.sandwich_t_max)
            self._norm = adapted_random_norm(cocycle, rep, self.window.t_min, t_hi)
        return self._norm

    def random_nonlinearity(self, cocycle, norm, omega, spec=None):
        """``(nonlinear, jacobian)`` in the ``(omega, x)`` signature, rescaled to ``rds.target_M`` if set."""
        nl = spec or self.cfg.system.nonlinearity
        f, df = nonlinearity(nl.kind, nl.scale, nl.coefficients)
        if f is None:
            return None, None
        target = self.cfg.rds.target_M
        if target is not None:
            probe = system_from_cocycle(cocycle, self.window, componentwise(f), norms=norm.norm_family())
            raw = estimate_nonlinearity_bounds(probe, omega, self.domain()).M
            c = target / raw
            self.report.constants["nonlinearity_rescale"] = c
            return (lambda om, x: c * f(x)), (lambda om, x: c * df(x))
        return componentwise(f), (lambda om, x: df(x))


def _conditions_into(report, conds):
    for name, c in conds.conditions.items():
        report.conditions[name] = c.to_dict()
        report.verdict(f"condition_{name}", c.value, c.threshold, passed=c.passed, statement=c.statement)


def _checks_into(report, checks, prefix=""):
    for name, c in checks.items():
        extra = {k: v for k, v in c.items() if k not in ("value", "threshold", "passed")}
        report.verdict(prefix + name, c["value"], c["threshold"], passed=c["passed"], **extra)


def _smooth_into(report, sol, order, spec):
    rep = smoothness_report(sol, order, spec).to_dict()
    report.details["smoothness"] = rep
    report.verdict("smoothness_failures", len(rep["failures"]), 0, failures=rep["failures"])


# stages

def stage_check(ctx: _Context):
    rep, cfg = ctx.report, ctx.cfg
    if ctx.is_random:
        c = ctx.cocycle()
        mds = ctx.mds(c)
        norm = ctx.adapted_norm(c, mds)
        om = mds.omega(cfg.rds.omega_sample)
        F, J = ctx.random_nonlinearity(c, norm, om)
        sys = system_from_cocycle(c, ctx.window, F, norms=norm.norm_family(), jacobian=J,
                                  tol=cfg.tolerances.solver)
        growth = adapted_certificate(sys, norm, om)
        m = cfg.mode.smooth_order if cfg.mode.smooth else 1
        bounds = estimate_nonlinearity_bounds(sys, om, ctx.domain(), m=m)
        conds = rds_conditions(growth, bounds, smooth=cfg.mode.smooth)
        rep.verdict("negative_spectrum", float(np.max(norm.report.lambdas + norm.a)), 0.0,
                    passed=norm.report.negative)
    else:
        sys = ctx.system()
        om = None
        growth = certify_bounded_growth(sys)
        m = cfg.mode.smooth_order if cfg.mode.smooth else 1
        bounds = estimate_nonlinearity_bounds(sys, None, ctx.domain(), m=m)
        conds = check_conditions(growth, bounds)
        if not cfg.mode.smooth:
            conds.conditions.pop("smooth", None)
    rep.constants.update({"K": growth.K, "alpha": growth.alpha, "growth_residual": growth.residual,
                          "inverse_norm": growth.inverse_norm, "M": bounds.M, "L": bounds.L,
                          "Mj": list(bounds.Mj)})
    _conditions_into(rep, conds)
    return sys, om, growth, bounds, conds


def stage_conjugate(ctx: _Context):
    sys, om, growth, bounds, conds = stage_check(ctx)
    failed = [n for n, c in conds.conditions.items() if not c.passed and n != "smooth"]
    if failed:
        raise ConditionError(", ".join(failed), conds)
    sol = ConjugacySolution(sys, om, growth, bounds)
    rep = ctx.report
    rep.constants.update({"q": sol.q, "near_identity_bound": sol.near_identity_bound,
                          "composition_tol": sol.composition_tol})
    rng = np.random.default_rng([ctx.cfg.seed, 31])
    xi = rng.uniform(-1, 1, (8, sys.dim)) * ctx.cfg.sampling.radius
    t = sys.window.t_max
    Ht = sol.H(t, xi)
    rep.verdict("roundtrip_probe", float(np.abs(sol.G(t, Ht) - xi).max()), sol.composition_tol)
    diag = [d.to_dict() for d in sol.diagnostics]
    rep.details["fixed_point"] = {
        "solves": len(diag),
        "max_iterations": max((d["iterations"] for d in diag), default=0),
        "max_apriori_error": max((d["apriori_error"] for d in diag), default=0.0),
    }
    return sol


def stage_verify(ctx: _Context):
    sol = stage_conjugate(ctx)
    rep = ctx.report
    vr = verify_conjugacy(sol, ctx.verify_spec())
    _checks_into(rep, vr.checks)
    rep.details["lipschitz"] = vr.lipschitz
    rep.samples = vr.rows
    rep.residuals = {name: {"max": c["value"], **({"mean": c["mean"]} if "mean" in c else {})}
                     for name, c in vr.checks.items() if name.startswith(("conjugation", "roundtrip"))}
    if ctx.is_random:
        lin = RDSLinearization(sol, sol.omega, ConditionReport({}))
        orb = orbit_conjugation_residual(lin, radius=ctx.cfg.sampling.radius, seed=ctx.cfg.seed)
        rep.verdict("orbit_conjugation", orb["residual"], sol.composition_tol)
        rep.verdict("orbit_near_identity", orb["near_identity"], orb["bound"] + sol.tol)
    if ctx.cfg.mode.smooth:
        _smooth_into(rep, sol, ctx.cfg.mode.smooth_order, ctx.verify_spec(rows=False))
    return sol


def stage_spectrum(ctx: _Context):
    rep, cfg = ctx.report, ctx.cfg
    c = ctx.cocycle()
    mds = ctx.mds(c)
    norm = ctx.adapted_norm(c, mds)
    s = norm.report
    rep.spectrum = s.to_dict()
    rep.exponent_trace = [[int(k), *row] for k, row in zip(s.trace_steps, s.trace)]
    rep.verdict("negative_spectrum", float(np.max(s.lambdas + s.a)), 0.0, passed=s.negative)
    if cfg.rds.sandwich_t_max > 0:
        sw = sandwich_check(norm, mds.omegas(cfg.rds.n_samples), cfg.rds.sandwich_t_max)
        rep.verdict("sandwich", sw.worst, SANDWICH_TOL, n_checks=sw.n_checks,
                    upper_slack=sw.upper_slack, lower_slack=sw.lower_slack)
    return s


def stage_localize(ctx: _Context):
    rep, cfg = ctx.report, ctx.cfg
    lc = cfg.localization
    c = ctx.cocycle()
    mds = ctx.mds(c)
    norm = ctx.adapted_norm(c, mds)
    f, df = nonlinearity(lc.nonlinearity.kind, lc.nonlinearity.scale, lc.nonlinearity.coefficients)
    if f is None:
        raise LimitCheckError("localization needs a nonlinearity", [])
    F = componentwise(f)
    omegas = mds.omegas(lc.n_omegas)
    cut = cutoff_nonlinearity(F, omegas, lc.target_L, dim=c.dim, norm=norm.norm, seed=cfg.seed)
    rep.sigma_table = {"target_L": lc.target_L,
                       "sigma": {f"{s}:{o}": v for (s, o), v in sorted(cut.table.items())},
                       "sigma_uniform": cut.sigma_uniform}
    mode = "smooth" if cfg.mode.smooth else "topological"
    om = mds.omega(cfg.rds.omega_sample)
    jac = None if df is None else (lambda w, x: df(x))
    local = local_linearize(c, F, cut, norm, ctx.window, om, mode=mode, n_points=lc.n_points,
                            seed=cfg.seed, jacobian=jac)
    d = local.to_dict()
    rep.details["localization"] = {k: v for k, v in d.items() if k != "global_report"}
    rep.verdict("local_orbit_mismatch", local.orbit_mismatch, 0)
    rep.verdict("local_conjugation", local.residual, local.tolerance)
    rep.verdict("local_near_identity", local.near_identity, local.near_identity_bound + cfg.tolerances.solver)
    return local


def _run_report(ctx: _Context):
    m = ctx.cfg.mode
    if ctx.is_random:
        ctx.run_stage("spectrum", stage_spectrum)
    if m.topological or m.smooth or m.rds:
        ctx.run_stage("verify", stage_verify)
    if m.local:
        ctx.run_stage("localize", stage_localize)


STAGES = {
    "check": stage_check,
    "conjugate": stage_conjugate,
    "verify": stage_verify,
    "spectrum": stage_spectrum,
    "localize": stage_localize,
}


def run(config: ExperimentConfig, command="report"):
    """Execute ``command`` for ``config`` and return the :class:`RunReport`."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}; expected one of {COMMANDS}")
    report = RunReport(command=command, name=config.name, seed=config.seed,
                       config_hash=config.digest, version=__version__)
    ctx = _Context(config, report)
    if command == "report":
        _run_report(ctx)
    else:
        ctx.run_stage(command, STAGES[command])
    return report
