"""Sampled ergodic shift systems.

An :class:`Omega` is a point of the base space: a two-sided stream (chosen by
``sample``) read from position ``offset``.  The shift ``theta^t`` moves the
offset, so ``theta^0`` is the identity and ``theta^(s+t) = theta^s theta^t``
hold by integer arithmetic.  Streams are generated lazily in fixed-size
blocks, each from its own seeded generator, so any window of any stream is
reproducible without generating the rest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))
BLOCK = 1024


def _zigzag(b):
    """Map block numbers ``0, -1, 1, -2, ...`` to ``0, 1, 2, 3, ...`` (seed material must be >= 0)."""
    return 2 * b if b >= 0 else -2 * b - 1


@dataclass(frozen=True)
class ShiftMDS:
    """Bernoulli shift on a finite alphabet, or an irrational rotation of the circle.

    ``kind="bernoulli"`` streams are i.i.d. indices into ``alphabet`` drawn with
    ``probs``; ``kind="rotation"`` streams are phases ``(phi0 + n angle / 2pi) mod 1``.
    """

    kind: str
    seed: int
    alphabet: tuple = (0, 1)
    probs: tuple = (0.5, 0.5)
    angle: float = GOLDEN_ANGLE
    _blocks: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("bernoulli", "rotation"):
            raise ValueError(f"unknown shift kind {self.kind!r}")
        if self.kind == "bernoulli":
            p = np.asarray(self.probs, dtype=float)
            if len(p) != len(self.alphabet) or len(p) == 0:
                raise ValueError("alphabet and probabilities must have the same nonzero length")
            if np.any(p < 0) or not np.isclose(p.sum(), 1.0, rtol=0, atol=1e-12):
                raise ValueError(f"invalid probabilities {self.probs}")

    def _block(self, sample, b):
        key = (sample, b)
        blk = self._blocks.get(key)
        if blk is None:
            rng = np.random.default_rng([self.seed, sample, _zigzag(b)])
            blk = rng.choice(len(self.alphabet), size=BLOCK, p=np.asarray(self.probs, dtype=float))
            if len(self._blocks) > 4096:
                self._blocks.clear()
            self._blocks[key] = blk
        return blk

    def indices(self, sample, start, stop):
        """Alphabet indices of stream ``sample`` at positions ``start <= n < stop``."""
        if self.kind != "bernoulli":
            raise TypeError("indices are defined for Bernoulli shifts only")
        if stop <= start:
            return np.empty(0, dtype=int)
        b0, b1 = start // BLOCK, (stop - 1) // BLOCK
        out = np.concatenate([self._block(sample, b) for b in range(b0, b1 + 1)])
        lo = start - b0 * BLOCK
        return out[lo : lo + (stop - start)]

    def values(self, sample, start, stop):
        """Stream entries at positions ``start <= n < stop`` (symbols or phases)."""
        if self.kind == "bernoulli":
            return np.asarray(self.alphabet)[self.indices(sample, start, stop)]
        phi0 = _phase0(self.seed, sample)
        n = np.arange(start, stop, dtype=float)
        return np.mod(phi0 + n * self.angle / (2 * np.pi), 1.0)

    def omega(self, sample=0, offset=0):
        return Omega(self, int(sample), int(offset))

    def omegas(self, n_samples, offset=0):
        return [Omega(self, s, offset) for s in range(n_samples)]


@lru_cache(maxsize=None)
def _phase0(seed, sample):
    return float(np.random.default_rng([seed, sample]).random())


@dataclass(frozen=True)
class Omega:
    """A sampled base point ``theta^offset`` of stream ``sample``."""

    mds: ShiftMDS
    sample: int
    offset: int = 0

    def shift(self, t):
        return Omega(self.mds, self.sample, self.offset + int(t))

    def __getitem__(self, k):
        """Stream entry ``k`` steps ahead of this point (``self[0]`` is the current symbol)."""
        return self.mds.values(self.sample, self.offset + k, self.offset + k + 1)[0]

    @property
    def symbol(self):
        return self[0]

    @property
    def index(self):
        return int(self.mds.indices(self.sample, self.offset, self.offset + 1)[0])

    def indices(self, start, stop):
        return self.mds.indices(self.sample, self.offset + start, self.offset + stop)

    def values(self, start, stop):
        return self.mds.values(self.sample, self.offset + start, self.offset + stop)


def make_shift_mds(kind="bernoulli", seed=0, **params):
    """Validated :class:`ShiftMDS`; ``params`` are ``alphabet``/``probs`` or ``angle``."""
    if "alphabet" in params:
        params["alphabet"] = tuple(params["alphabet"])
    if "probs" in params:
        params["probs"] = tuple(float(p) for p in params["probs"])
    if kind == "bernoulli" and "alphabet" in params and "probs" not in params:
        k = len(params["alphabet"])
        params["probs"] = tuple([1.0 / k] * k)
    return ShiftMDS(kind=kind, seed=int(seed), **params)
