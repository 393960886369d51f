"""Lyapunov spectrum, Oseledets filtration and splitting of a cocycle."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ConvergenceError
from .cocycle import Cocycle
from .mds import Omega, ShiftMDS

Z95 = 1.96


def _paths(c: Cocycle, omegas, start, stop):
    """``(n_samples, stop-start, d, d)`` generator matrices along each base point."""
    return np.stack([c.matrices_along(om, start, stop) for om in omegas])


def _qr_positive(Z):
    """Batched QR with ``diag(R) >= 0``."""
    Q, R = np.linalg.qr(Z)
    s = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    s = np.where(s == 0, 1.0, s)
    return Q * s[..., None, :], R * s[..., :, None]


@dataclass
class SpectrumReport:
    """Exponents, their clustering and the filtration/splitting at one base point."""

    lambdas: np.ndarray  # cluster exponents, strictly decreasing
    multiplicities: list
    exponents: np.ndarray  # all d exponents (with repetition), decreasing
    half_widths: np.ndarray
    a: float
    n_steps: int
    n_samples: int
    filtration: list = field(default_factory=list)  # V_1 ⊃ V_2 ⊃ ... as orthonormal bases
    splitting: list = field(default_factory=list)  # U_1, U_2, ... as bases
    drift: Optional[np.ndarray] = None
    trace: Optional[np.ndarray] = None  # running exponent estimates (checkpoint, d)
    trace_steps: Optional[np.ndarray] = None
    omega: Optional[Omega] = None

    @property
    def clusters(self):
        """Index ranges of the exponents belonging to each cluster."""
        out, i = [], 0
        for m in self.multiplicities:
            out.append(list(range(i, i + m)))
            i += m
        return out

    @property
    def negative(self):
        return bool(np.all(self.lambdas + self.a < 0))

    @property
    def alpha(self):
        return float(np.exp(self.lambdas[0] + self.a))

    def to_dict(self):
        return {
            "lambdas": np.asarray(self.lambdas).tolist(),
            "multiplicities": list(self.multiplicities),
            "exponents": np.asarray(self.exponents).tolist(),
            "half_widths": np.asarray(self.half_widths).tolist(),
            "a": self.a,
            "n_steps": self.n_steps,
            "n_samples": self.n_samples,
            "negative": self.negative,
            "drift": None if self.drift is None else np.asarray(self.drift).tolist(),
            "filtration_dims": [int(V.shape[1]) for V in self.filtration],
        }


def cluster_exponents(exponents, half_widths, floor):
    """Group sorted exponents whose neighbours differ by at most ``3 x`` the resolution."""
    groups = [[0]]
    for i in range(1, len(exponents)):
        res = 3.0 * max(half_widths[i], half_widths[i - 1], floor)
        if exponents[i - 1] - exponents[i] <= res:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def gap_parameter(lambdas):
    """``a = min(smallest gap between cluster exponents, |lambda_1|) / 2``."""
    cands = [abs(float(lambdas[0]))] + [float(lambdas[i] - lambdas[i + 1]) for i in range(len(lambdas) - 1)]
    cands = [c for c in cands if c > 0]
    return min(cands) / 2 if cands else 0.0


def qr_exponents(mats, n_checkpoints=64):
    """Exponents of the product of ``mats`` (shape ``(S, n, d, d)``) per sample by the QR method.

    Returns per-sample exponents ``(S, d)``, the exponents of the first and
    second half of the steps, and a running trace of sample means.
    """
    S, n, d, _ = mats.shape
    Q = np.broadcast_to(np.eye(d), (S, d, d)).copy()
    logs = np.zeros((S, d))
    half = np.zeros((S, d))
    marks = set(np.unique(np.linspace(1, n, min(n, n_checkpoints)).astype(int)).tolist())
    trace, steps = [], []
    for k in range(n):
        Q, R = _qr_positive(mats[:, k] @ Q)
        with np.errstate(divide="ignore"):
            logs += np.log(np.diagonal(R, axis1=-2, axis2=-1))
        if k + 1 == n // 2:
            half = logs.copy()
        if k + 1 in marks:
            trace.append(np.sort(logs / (k + 1), axis=1)[:, ::-1].mean(axis=0))
            steps.append(k + 1)
    n1 = max(n // 2, 1)
    first = half / n1
    second = (logs - half) / max(n - n1, 1)
    return logs / n, first, second, np.array(trace), np.array(steps)


def top_right_singular_subspace(mats, k):
    """Orthonormal basis of the top-``k`` right singular subspace of ``mats[-1] @ ... @ mats[0]``.

    QR-stabilized iteration with the transposed factors applied last-to-first,
    which never forms the (under/overflowing) product.
    """
    n, d, _ = mats.shape
    Q = np.eye(d)[:, :k]
    for M in mats[::-1]:
        Q, _ = np.linalg.qr(M.T @ Q)
    return Q


def filtration_bases(mats, multiplicities):
    """``V_1 = R^d ⊃ V_2 ⊃ ...``: ``V_i`` is the orthogonal complement of the top
    ``d_1 + ... + d_{i-1}`` right singular directions of the long product."""
    d = mats.shape[-1]
    top = top_right_singular_subspace(mats, d)
    out, used = [], 0
    for m in multiplicities:
        out.append(top[:, used:].copy())
        used += m
    return out


def lyapunov_spectrum(
    c: Cocycle,
    mds: Optional[ShiftMDS] = None,
    n_steps=10_000,
    n_samples=64,
    omega: Optional[Omega] = None,
    resolution=None,
    check_drift=True,
    splitting=True,
    store=None,
):
    """Lyapunov spectrum by the QR method averaged over ``n_samples`` base points.

    Exponents are clustered at three times their 95% half-width (or
    ``resolution``, by default ``max(1e-8, log(n)/n)``, whichever is larger)
    and the filtration ``V_i`` is computed at ``omega`` (default: sample 0).
    A drift between the first and second half of the steps above five
    half-widths raises :class:`ConvergenceError`.

    ``store(build)``, if given, returns the per-sample QR arrays and may serve
    them from a cache instead of calling ``build()``.
    """
    if mds is None and omega is None:
        raise ValueError("need a shift system or a base point")
    if mds is None:
        mds = omega.mds
    omegas = mds.omegas(n_samples)
    omega = omega or omegas[0]

    def build():
        keys = ("per_sample", "first", "second", "trace", "steps")
        return dict(zip(keys, qr_exponents(_paths(c, omegas, 0, n_steps))))

    qr = build() if store is None else store(build)
    per_sample, first, second = qr["per_sample"], qr["first"], qr["second"]
    trace, steps = qr["trace"], qr["steps"]
    order = np.argsort(-per_sample, axis=1)
    per_sample = np.take_along_axis(per_sample, order, axis=1)
    first = np.sort(first, axis=1)[:, ::-1]
    second = np.sort(second, axis=1)[:, ::-1]
    exps = per_sample.mean(axis=0)
    hw = Z95 * per_sample.std(axis=0, ddof=1) / np.sqrt(n_samples) if n_samples > 1 else np.zeros_like(exps)
    floor = max(1e-8, np.log(max(n_steps, 2)) / n_steps) if resolution is None else resolution
    drift = np.abs(first.mean(axis=0) - second.mean(axis=0))
    if check_drift and np.any(drift > np.maximum(5 * hw, floor)):
        i = int(np.argmax(drift - np.maximum(5 * hw, floor)))
        raise ConvergenceError(
            f"exponent {i} drifts by {drift[i]:.3g} between halves (half-width {hw[i]:.3g}); increase n_steps",
            residual=float(drift[i]),
        )
    groups = cluster_exponents(exps, hw, floor)
    lambdas = np.array([exps[g].mean() for g in groups])
    mult = [len(g) for g in groups]
    report = SpectrumReport(
        lambdas=lambdas,
        multiplicities=mult,
        exponents=exps,
        half_widths=hw,
        a=gap_parameter(lambdas),
        n_steps=n_steps,
        n_samples=n_samples,
        drift=drift,
        trace=trace,
        trace_steps=steps,
        omega=omega,
    )
    path = c.matrices_along(omega, 0, n_steps)
    report.filtration = filtration_bases(path, mult)
    if splitting:
        cov = CovariantSplitting(c, [omega], report, 0, 0)
        report.splitting = [cov.V[0, cov.t_index(0)][:, g] for g in report.clusters]
    return report


def classify_growth(c: Cocycle, omega: Omega, vectors, n_steps):
    """Finite-time growth rates ``log ||Phi(n, omega) v|| / n`` of the given columns."""
    V = np.asarray(vectors, dtype=float)
    V = V / np.linalg.norm(V, axis=0)
    logs = np.zeros(V.shape[1])
    for M in c.matrices_along(omega, 0, n_steps):
        V = M @ V
        nrm = np.linalg.norm(V, axis=0)
        logs += np.log(nrm)
        V = V / nrm
    return logs / n_steps


def transient_length(report: SpectrumReport, cap=4000):
    """Steps until the slowest convergence factor ``exp(-gap n)`` is below ``1e-16``."""
    gaps = -np.diff(report.lambdas)
    if len(gaps) == 0:
        return 16
    return int(min(cap, max(16, np.ceil(37.0 / gaps.min()))))


class CovariantSplitting:
    """Covariant Lyapunov vectors along base points, by forward QR and backward triangular iteration.

    For each base point ``omega`` and time ``k`` in ``[t_lo, t_hi]`` the
    columns of ``V[s, k]`` are unit vectors with
    ``A(theta^k omega) V[:, c] = exp(LG[k+1, c] - LG[k, c]) V_{k+1}[:, c]``
    exactly (up to rounding).  Columns are ordered like the exponents, so the
    span of a cluster's columns is that cluster's Oseledets space.
    """

    def __init__(self, c: Cocycle, omegas, report: SpectrumReport, t_lo, t_hi, n_transient=None):
        self.c, self.omegas, self.report = c, list(omegas), report
        n_tr = transient_length(report) if n_transient is None else n_transient
        self.n_transient = n_tr
        self.t_lo, self.t_hi = t_lo, t_hi
        k0, k1 = t_lo - n_tr, t_hi + n_tr
        mats = _paths(c, self.omegas, k0, k1)
        S, n, d, _ = mats.shape
        Q = np.empty((S, n + 1, d, d))
        R = np.empty((S, n, d, d))
        Q[:, 0] = np.eye(d)
        for k in range(n):
            Q[:, k + 1], R[:, k] = _qr_positive(mats[:, k] @ Q[:, k])
        C = np.broadcast_to(np.eye(d), (S, d, d)).copy()
        keep = t_hi - t_lo + 1
        V = np.empty((S, keep, d, d))
        LG = np.zeros((S, keep, d))
        logg = np.zeros((S, n, d))
        Cs = np.empty((S, n + 1, d, d))
        Cs[:, n] = C
        for k in range(n - 1, -1, -1):
            C = np.linalg.solve(R[:, k], C)
            nrm = np.linalg.norm(C, axis=-2)
            C = C / nrm[..., None, :]
            logg[:, k] = -np.log(nrm)
            Cs[:, k] = C
        i0 = t_lo - k0
        for j in range(keep):
            V[:, j] = Q[:, i0 + j] @ Cs[:, i0 + j]
        LG[:, 1:] = np.cumsum(logg[:, i0 : i0 + keep - 1], axis=1)
        self.V, self.LG = V, LG

    def t_index(self, t):
        if not self.t_lo <= t <= self.t_hi:
            raise IndexError(f"time {t} outside computed range [{self.t_lo}, {self.t_hi}]")
        return t - self.t_lo
