"""Walk through the conjugacy of x -> 0.5 x + 0.1 sin x with its linear part.

Run with ``python3 demos/scalar_benchmark.py``.
"""

import numpy as np

from conjlab import SamplingSpec, VerifySpec, build_conjugacy, verify_conjugacy
from conjlab.families import scalar_benchmark
from conjlab.smooth import conjugacy_jacobian

sys = scalar_benchmark(100)
sol = build_conjugacy(sys, domain=SamplingSpec(radius=10.0, seed=0))
print("certified constants")
print(f"  K = {sol.growth.K:.3f}, alpha = {sol.growth.alpha:.3f}")
print(f"  M = {sol.bounds.M:.6f} (sup of |F| on the ball), L = {sol.bounds.L:.6f} (sampled Lipschitz estimate)")
print(f"  contraction factor q = {sol.q:.4f}, near-identity bound KM/(1-alpha) = {sol.near_identity_bound:.4f}")

# H carries linear orbits onto nonlinear ones; G undoes it.
xi = np.array([[-10.0], [-1.0], [0.0], [2.5], [10.0]])
for t in (0, 1, 5, 50):
    h = sol.H(t, xi)[:, 0]
    g = sol.G(t, sol.H(t, xi))[:, 0]
    print(f"t={t:3d}  H(t, xi) - xi = {np.round(h - xi[:, 0], 5)}  |G(t, H(t, xi)) - xi| max {np.abs(g - xi[:, 0]).max():.1e}")

rep = verify_conjugacy(sol, VerifySpec(n_samples=400, n_lipschitz_pairs=400))
print("\nsampled verification")
for name, c in rep.checks.items():
    print(f"  {name:26s} {c['value']:.3e}  <= {c['threshold']:.3e}  {'ok' if c['passed'] else 'FAILED'}")

# One step back, G(1, eta) = eta - 0.1 sin x with 0.5 x + 0.1 sin x = eta, so
# dG/deta = 1 - 0.1 cos x / (0.5 + 0.1 cos x), which reaches 1.25 where cos x = -1.
x = np.array([[np.pi]])
J = conjugacy_jacobian(sol, 1, 0.5 * x + 0.1 * np.sin(x))
print(f"\ndG/deta at t=1, x=pi: {J.matrix[0, 0, 0]:.6f}")
print(f"  Lipschitz formulas: {rep.lipschitz['formula_bounds']}")
print(f"  ||D2G - I|| = {J.deviation[0]:.4f} against the stated bound {J.bound:.4f}")
