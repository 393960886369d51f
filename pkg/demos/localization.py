"""Cut off x -> a(omega) x + x^2 to a globally small Lipschitz constant and linearize locally.

Run with ``python3 demos/localization.py``.
"""

import numpy as np

from conjlab.errors import LimitCheckError
from conjlab.families import bernoulli_cocycle
from conjlab.localization import cutoff_nonlinearity, escape_time, local_linearize
from conjlab.rds import adapted_random_norm, lyapunov_spectrum, make_shift_mds
from conjlab.system_core import TimeWindow


def square(w, x):
    return x**2


class Original:
    """One step of the untruncated map, for escape times."""

    def __init__(self, cocycle):
        self.cocycle = cocycle

    def step(self, omega, x):
        return x @ self.cocycle.matrix(omega).T + x**2


mds = make_shift_mds("bernoulli", 3)
c = bernoulli_cocycle([0.5, 0.4])
rep = lyapunov_spectrum(c, mds, 10_000, 64)
norm = adapted_random_norm(c, rep, 0, 64)

oms = mds.omegas(4)
cut = cutoff_nonlinearity(square, oms, 0.1, norm=norm.norm)
print("cut-off radius per base point")
for om in oms:
    print(f"  sample {om.sample}: sigma = {cut.sigma(om):.5f}")

om = oms[0]
s = cut.sigma(om)
x = np.linspace(-2 * s, 2 * s, 9)[:, None]
print("f~ against x^2:", np.round(cut.f_tilde(om, x)[:, 0], 6), np.round(x[:, 0] ** 2, 6))

# starting points at 0, 0.5, 0.99 and 1.5 times sigma, measured in the random norm
unit = 1.0 / norm.norm(om, np.ones((1, 1)))[0]
starts = np.array([[0.0], [0.5], [0.99], [1.5]]) * s * unit
print("escape times:", escape_time(Original(c), cut, om, starts, 40))

local = local_linearize(c, square, cut, norm, TimeWindow(0, 40), om, n_points=64)
print(f"orbit mismatch inside U: {local.orbit_mismatch}")
print(f"local conjugation residual {local.residual:.2e} (after escape: {local.residual_after_escape:.2e})")

try:
    cutoff_nonlinearity(lambda w, x: 0.5 * x, oms, 0.1, norm=norm.norm)
except LimitCheckError as exc:
    print(f"0.5 x refused: {exc}")
