"""Lyapunov (adapted) random norms.

For ``u`` in the Oseledets space ``U_i(omega)`` the two-sided norm is

    |u|_omega^2 = sum_{k in Z} ||Phi(k, omega) u||^2 exp(-2 lambda_i k - 2 a |k|)

and a general vector is measured by the root sum of squares of its
components.  With this norm ``exp((lambda_i - a) t) |u| <= |Phi(t, omega) u|
<= exp((lambda_i + a) t) |u|`` holds for every ``t >= 0``.  The forward-only
series (``k >= 0``) gives the upper bound but not the lower one for a
genuinely random cocycle and is available with ``two_sided=False``.

Sums are evaluated in covariant-vector coordinates, where the cocycle acts
diagonally, so no long product is ever formed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ConvergenceError, WindowError
from ..system_core import NormFamily
from .cocycle import Cocycle
from .mds import Omega
from .spectrum import CovariantSplitting, SpectrumReport

TAIL_TOL = 1e-10
T_START = 64
T_CAP = 16_384


@dataclass
class NormBlock:
    """Weights of one base stream for offsets ``t_lo..t_hi``."""

    t_lo: int
    t_hi: int
    W: np.ndarray  # (n_times, d, d)
    grams: list  # per cluster (n_times, d_i, d_i)
    V: np.ndarray  # covariant vectors (n_times, d, d)
    LG: np.ndarray  # cumulative log growth (n_times, d)
    T: int
    tail: float


class RandomNorm:
    """Adapted norm ``|x|_{theta^t omega}`` for sampled streams and offsets ``t_lo..t_hi``.

    Weights are built lazily per stream; the truncation horizon ``T`` is the
    smallest power of two (from 64) for which the terms with ``T/2 < |k| <= T``
    contribute less than ``tail_tol`` of the partial sum at every offset.
    """

    def __init__(
        self,
        cocycle: Cocycle,
        report: SpectrumReport,
        t_lo=0,
        t_hi=64,
        two_sided=True,
        tail_tol=TAIL_TOL,
        T_cap=T_CAP,
        T_min=T_START,
    ):
        self.cocycle = cocycle
        self.report = report
        self.t_lo, self.t_hi = t_lo, t_hi
        self.two_sided = two_sided
        self.tail_tol = tail_tol
        self.T_cap = T_cap
        self.T_min = T_min
        self.blocks: dict = {}
        self.lam = np.concatenate([[lam] * m for lam, m in zip(report.lambdas, report.multiplicities)])

    @property
    def a(self):
        return self.report.a

    # --- construction -------------------------------------------------
    def _terms_log(self, LG, j, ks):
        """``log`` of the per-column series weights for base index ``j`` and offsets ``ks``."""
        return LG[j + ks] - LG[j][None, :] - self.lam[None, :] * ks[:, None] - self.a * np.abs(ks)[:, None]

    def _horizon(self, LG, n_tr_lo, keep):
        """Smallest doubling horizon meeting the tail tolerance, or ``None``."""
        T = self.T_min
        while T <= self.T_cap:
            if n_tr_lo + keep - 1 + T >= LG.shape[0] or n_tr_lo - (T if self.two_sided else 0) < 0:
                return None
            ks = np.arange(-T if self.two_sided else 0, T + 1)
            worst = 0.0
            for j in range(keep):
                lt = 2.0 * self._terms_log(LG, n_tr_lo + j, ks)
                top = lt.max()
                w = np.exp(lt - top)
                total = w.sum()
                tail = w[np.abs(ks) > T // 2].sum()
                worst = max(worst, tail / total)
            if worst < self.tail_tol:
                return T, worst
            T *= 2
        raise ConvergenceError(f"adapted-norm tail above {self.tail_tol} at horizon cap {self.T_cap}")

    def _build(self, sample):
        omega = self.report.omega.mds.omega(sample)
        keep = self.t_hi - self.t_lo + 1
        T = self.T_min
        while True:
            span = T + 8
            lo = self.t_lo - (span if self.two_sided else 0)
            hi = self.t_hi + span
            cov = CovariantSplitting(self.cocycle, [omega], self.report, lo, hi)
            V, LG = cov.V[0], cov.LG[0]
            found = self._horizon(LG, self.t_lo - lo, keep)
            if found is not None:
                T, tail = found
                break
            T *= 2
            if T > self.T_cap:
                raise ConvergenceError(f"adapted-norm tail above {self.tail_tol} at horizon cap {self.T_cap}")
        off = self.t_lo - lo
        ks = np.arange(-T if self.two_sided else 0, T + 1)
        d = V.shape[-1]
        P = np.einsum("kic,kie->kce", V, V)  # Gram matrices of covariant vectors
        Ws, grams = [], [[] for _ in self.report.clusters]
        for j in range(keep):
            e = np.exp(self._terms_log(LG, off + j, ks))
            Pj = P[off + j + ks]
            Vinv = np.linalg.inv(V[off + j])
            B = np.zeros((d, d))
            for ci, idx in enumerate(self.report.clusters):
                E = e[:, idx]
                G = np.einsum("kc,ke,kce->ce", E, E, Pj[:, idx][:, :, idx])
                grams[ci].append(G)
                B[np.ix_(idx, idx)] = G
            W = Vinv.T @ B @ Vinv
            Ws.append(0.5 * (W + W.T))
        block = NormBlock(
            self.t_lo,
            self.t_hi,
            np.array(Ws),
            [np.array(g) for g in grams],
            V[off : off + keep].copy(),
            LG[off : off + keep] - LG[off],
            T,
            float(tail),
        )
        self.blocks[sample] = block
        return block

    def block(self, sample):
        return self.blocks.get(sample) or self._build(sample)

    # --- evaluation ---------------------------------------------------
    def _locate(self, omega: Omega):
        if not self.t_lo <= omega.offset <= self.t_hi:
            raise WindowError(f"offset {omega.offset} outside adapted-norm range [{self.t_lo}, {self.t_hi}]")
        return self.block(omega.sample), omega.offset - self.t_lo

    def weight(self, omega: Omega):
        blk, j = self._locate(omega)
        return blk.W[j]

    def norm(self, omega: Omega, x):
        W = self.weight(omega)
        x = np.asarray(x, dtype=float)
        return np.sqrt(np.einsum("...i,ij,...j->...", x, W, x))

    def component_norm(self, omega: Omega, i, z):
        """``|u|`` for ``u = V[:, cluster i] z`` at ``omega`` (``z`` in covariant coordinates)."""
        blk, j = self._locate(omega)
        G = blk.grams[i][j]
        z = np.asarray(z, dtype=float)
        return np.sqrt(np.einsum("...i,ij,...j->...", z, G, z))

    def splitting(self, omega: Omega):
        """Bases of ``U_i(omega)`` (columns of the covariant vectors per cluster)."""
        blk, j = self._locate(omega)
        return [blk.V[j][:, idx] for idx in self.report.clusters]

    def transport(self, omega: Omega, t, i, z):
        """Covariant coordinates of ``Phi(t, omega) u`` for ``u = V[:, cluster i] z``."""
        blk, j = self._locate(omega)
        idx = self.report.clusters[i]
        if not 0 <= j + t < blk.W.shape[0]:
            raise WindowError("transport leaves the computed offset range")
        return np.asarray(z) * np.exp(blk.LG[j + t, idx] - blk.LG[j, idx])

    def equivalence(self, omega: Omega):
        """``B(omega) = max(sqrt(lmax W), 1/sqrt(lmin W))``, so ``||x|| / B <= |x|_omega <= B ||x||``."""
        ev = np.linalg.eigvalsh(self.weight(omega))
        return float(max(np.sqrt(ev[-1]), 1.0 / np.sqrt(ev[0])))

    def norm_family(self):
        """Norms ``||x||_{t, omega} = |x|_{theta^t omega}`` for systems on a window."""
        return NormFamily(lambda t, omega: self.weight(omega.shift(t)), name="adapted")


def adapted_random_norm(c: Cocycle, report: SpectrumReport, t_lo=0, t_hi=64, two_sided=True, tail_tol=TAIL_TOL,
                        T_cap=T_CAP):
    """Adapted random norm; pass ``two_sided=False`` for the forward-only series."""
    if not two_sided and not np.all(report.lambdas + report.a < 0):
        raise ValueError("forward-only series needs lambda_i + a < 0 for every cluster")
    return RandomNorm(c, report, t_lo, t_hi, two_sided, tail_tol, T_cap)


@dataclass
class SandwichResult:
    upper_slack: float
    lower_slack: float
    n_checks: int
    direct_product_deviation: float

    @property
    def worst(self):
        return max(self.upper_slack, self.lower_slack)

    def holds(self, tol=TAIL_TOL):
        return self.worst <= tol


def sandwich_check(norm: RandomNorm, omegas, t_max=50, n_vectors=8, seed=0):
    """Relative slack of ``exp((l_i-a)t) |u| <= |Phi(t,omega) u| <= exp((l_i+a)t) |u|``.

    ``u`` ranges over random vectors of each ``U_i(omega)``; ``Phi(t, omega) u``
    is transported in covariant coordinates and measured with the assembled
    weight at ``theta^t omega``.  Also reports the largest relative deviation
    of the transported vector from a direct matrix product (informational:
    the direct product amplifies rounding along faster directions).
    """
    rng = np.random.default_rng([seed, 5])
    lam, a = norm.report.lambdas, norm.a
    up = lo = 0.0
    n = 0
    dev = 0.0
    for om in omegas:
        base = norm.splitting(om)
        for i, U in enumerate(base):
            z = rng.standard_normal((n_vectors, U.shape[1]))
            n0 = norm.norm(om, z @ U.T)
            P = np.eye(U.shape[0])
            mats = norm.cocycle.matrices_along(om, 0, t_max)
            for t in range(0, t_max + 1):
                if t > 0:
                    P = mats[t - 1] @ P
                zt = norm.transport(om, t, i, z)
                x = zt @ norm.splitting(om.shift(t))[i].T
                nt = norm.norm(om.shift(t), x)
                hi = np.exp((lam[i] + a) * t) * n0
                low = np.exp((lam[i] - a) * t) * n0
                up = max(up, float(np.max(nt / hi - 1.0)))
                lo = max(lo, float(np.max(1.0 - nt / low)))
                direct = (z @ U.T) @ P.T
                dev = max(dev, float(np.max(np.linalg.norm(direct - x, axis=-1) / np.linalg.norm(x, axis=-1))))
                n += len(z)
    return SandwichResult(max(up, 0.0), max(lo, 0.0), n, dev)


def equivalence_profile(norm: RandomNorm, omega: Omega):
    """``B(theta^t omega)`` over the offset range and the smallest ``eps`` with
    ``B(theta^t omega) <= B(omega) exp(eps |t|)`` on it."""
    ts = np.arange(norm.t_lo, norm.t_hi + 1)
    B = np.array([norm.equivalence(omega.shift(int(t) - omega.offset)) for t in ts])
    base = norm.equivalence(omega)
    rel = ts - omega.offset
    nz = rel != 0
    eps = float(np.max(np.abs(np.log(B[nz] / base)) / np.abs(rel[nz]))) if nz.any() else 0.0
    return B, eps
