"""Built-in system and nonlinearity families used by configs, demos and tests."""

from __future__ import annotations

import numpy as np

from .rds.cocycle import Cocycle
from .system_core import NormFamily, SemilinearSystem, TimeWindow


def linear_matrix(family, dim=1, coefficients=None):
    """Constant matrix of a named family.

    ``scalar``: ``[[a]]``; ``diagonal``: ``diag(entries)``; ``rotation_scale``:
    ``rho * R(angle)`` in 2-D; ``matrix``: the given ``dim x dim`` array.
    """
    c = coefficients or {}
    if family == "scalar":
        return np.array([[float(c.get("a", 0.5))]])
    if family == "diagonal":
        return np.diag(np.asarray(c["entries"], dtype=float))
    if family == "rotation_scale":
        rho, th = float(c.get("rho", 0.5)), float(c.get("angle", np.pi / 2))
        return rho * np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    if family == "matrix":
        A = np.asarray(c["A"], dtype=float)
        if A.shape != (dim, dim):
            raise ValueError(f"matrix has shape {A.shape}, expected {(dim, dim)}")
        return A
    raise ValueError(f"unknown linear family {family!r}")


def nonlinearity(kind="none", scale=0.1, coefficients=None):
    """Componentwise nonlinearity ``f(x)`` and its Jacobian, or ``(None, None)``.

    ``sin``: ``scale sin x``; ``tanh``: ``scale tanh x``;
    ``poly``: ``sum_k c_k x^(k+2)`` (coefficients from the quadratic term on).
    """
    if kind == "none":
        return None, None
    if kind == "sin":
        return (lambda x: scale * np.sin(x)), (lambda x: _diag(scale * np.cos(x)))
    if kind == "tanh":
        return (lambda x: scale * np.tanh(x)), (lambda x: _diag(scale / np.cosh(x) ** 2))
    if kind == "poly":
        cs = np.asarray(coefficients if coefficients is not None else [scale], dtype=float)

        def f(x):
            return sum(ck * x ** (k + 2) for k, ck in enumerate(cs))

        def df(x):
            return _diag(sum((k + 2) * ck * x ** (k + 1) for k, ck in enumerate(cs)))

        return f, df
    raise ValueError(f"unknown nonlinearity {kind!r}")


def _diag(v):
    v = np.asarray(v, dtype=float)
    return v[..., :, None] * np.eye(v.shape[-1])


def make_system(family, dim, window: TimeWindow, coefficients=None, nonlinear="none", scale=0.1,
                nl_coefficients=None, weights=None, tol=1e-10, max_iter=100_000, name=""):
    """Deterministic semilinear system ``x_{t+1} = A x_t + f(x_t)`` from family names."""
    A = linear_matrix(family, dim, coefficients)
    f, df = nonlinearity(nonlinear, scale, nl_coefficients)
    norms = NormFamily.euclidean() if weights is None else NormFamily.constant(weights)
    return SemilinearSystem(
        A=lambda t, omega: A,
        dim=A.shape[0],
        window=window,
        F=None if f is None else (lambda t, omega, x: f(x)),
        jacobian=None if df is None else (lambda t, omega, x: df(x)),
        norms=norms,
        tol=tol,
        max_iter=max_iter,
        name=name or family,
    )


def scalar_benchmark(t_max=100, a=0.5, scale=0.1):
    """``x_{t+1} = a x_t + scale sin x_t`` on ``[0, t_max]``."""
    return make_system("scalar", 1, TimeWindow(0, t_max), {"a": a}, "sin", scale, name="scalar-sin")


BERNOULLI_2D = (
    [[0.5, 0.1], [0.0, 0.3]],
    [[0.4, -0.05], [0.02, 0.25]],
)


def bernoulli_cocycle(matrices=BERNOULLI_2D):
    return Cocycle.from_symbols(matrices)


def componentwise(f):
    """Lift ``f(x)`` to the ``(omega, x)`` signature used for random systems."""
    if f is None:
        return None
    return lambda omega, x: f(x)
