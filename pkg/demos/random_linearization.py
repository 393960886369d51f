"""Lyapunov spectrum, adapted norm and linearization of a 2-D random system.

Two matrices are switched by a fair coin; the nonlinearity ``s sin x`` is
rescaled so that its sup in the adapted norm is 0.1.
Run with ``python3 demos/random_linearization.py``.
"""

import numpy as np

from conjlab.families import BERNOULLI_2D, bernoulli_cocycle, componentwise
from conjlab.hypotheses import SamplingSpec, estimate_nonlinearity_bounds
from conjlab.rds import (
    adapted_random_norm,
    lyapunov_spectrum,
    make_shift_mds,
    orbit_conjugation_residual,
    rds_linearize,
    sandwich_check,
    system_from_cocycle,
)
from conjlab.system_core import TimeWindow

mds = make_shift_mds("bernoulli", 7)
c = bernoulli_cocycle(BERNOULLI_2D)
rep = lyapunov_spectrum(c, mds, 10_000, 64)
print(f"exponents {rep.lambdas} (half-widths {rep.half_widths})")
print(f"gap parameter a = {rep.a:.4f}, alpha = exp(lambda_1 + a) = {rep.alpha:.4f}")

norm = adapted_random_norm(c, rep, 0, 64)
res = sandwich_check(norm, mds.omegas(16), t_max=50)
print(f"sandwich slack over {res.n_checks} checks: upper {res.upper_slack:.1e}, lower {res.lower_slack:.1e}")

om = mds.omega(0)
window = TimeWindow(0, 20)
domain = SamplingSpec(radius=10.0, seed=0)
probe = system_from_cocycle(c, window, componentwise(np.sin), norms=norm.norm_family())
scale = 0.1 / estimate_nonlinearity_bounds(probe, om, domain).M
print(f"nonlinearity {scale:.4f} sin x has sup 0.1 in the adapted norm")

lin = rds_linearize(c, componentwise(lambda x: scale * np.sin(x)), norm, window, om, domain=domain)
for name, cond in lin.conditions.conditions.items():
    print(f"  condition {name}: {cond.value:.4f} vs {cond.threshold:.4f} -> {cond.passed}")
out = orbit_conjugation_residual(lin, n_orbits=32, radius=10.0)
print(f"orbit conjugation residual {out['residual']:.2e}")
print(f"near-identity {out['near_identity']:.4f} <= M/(1-alpha) = {out['bound']:.4f}")
