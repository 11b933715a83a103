"""Atom geometry: coherence, pseudo-hyperbolic distance and the Gershgorin bound.

Run: python3 demos/geometry.py
"""

import numpy as np

from rafid.geometry import coherence_finite, coherence_infinite, gershgorin_check, \
    pseudo_hyperbolic

p = 0.9 * np.exp(0.5j)
print("coherence with p = 0.9 e^{0.5i} as the second pole moves away")
for q in (0.9 * np.exp(0.52j), 0.9 * np.exp(0.6j), 0.8 * np.exp(0.8j), 0.5j, -0.5):
    d = pseudo_hyperbolic(p, q)
    print(f"  q = {q:.3f}  distance {d:.3f}  mu_50 {coherence_finite(p, q, 50):.3f}"
          f"  mu_inf {coherence_infinite(p, q):.3f}  sqrt(1 - d^2) {np.sqrt(1 - d * d):.3f}")

print("\nGershgorin lower bound on the normalized Gram spectrum (T = 60)")
for label, poles in [("spread", 0.9 * np.exp(2j * np.pi * np.arange(4) / 4)),
                     ("clustered", 0.9 * np.exp(1j * np.array([0.50, 0.55, 0.60, 0.65])))]:
    res = gershgorin_check(poles, 60)
    print(f"  {label:9s}: bound {res.bound:+.3f}, actual min eig {res.min_eig:.3f}")
