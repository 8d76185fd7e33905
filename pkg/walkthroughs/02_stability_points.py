"""Mean-square stability of the drift-Lawson schemes on two linear test systems.

For a scheme whose step is Y -> K(dW) Y the second moments evolve by the
matrix E[K (x) K].  Its spectral radius rho decides mean-square stability.
The orthogonal-noise system shows the drift-Lawson schemes staying stable
where the drift-implicit Platen scheme is not.  The damped oscillator shows
that rho does not depend on the rotation frequency.
"""

import math

from stochlawson.stability import oscillator_matrices, orthogonal_matrices, scheme_rho

KINDS = ("em_dsl", "platen_dsl", "implicit_platen_derived", "exact")

print("orthogonal noise, b h = 1, sigma^2 h = 2.5")
for lam_h in (-2.0, -1.0):
    Abar, Bbar = orthogonal_matrices(lam_h, 1.0, 2.5)
    row = ", ".join(f"{k} {scheme_rho(k, Abar, Bbar):.4f}" for k in KINDS)
    print(f"  lambda h = {lam_h:5.1f}: {row}")

print("damped oscillator, sigma^2 h = 0.4")
for omega2_h in (math.pi, 10 * math.pi):
    for lam_h in (-0.3, -0.1):
        Abar, Bbar = oscillator_matrices(lam_h, omega2_h, 0.4)
        row = ", ".join(f"{k} {scheme_rho(k, Abar, Bbar):.4f}" for k in KINDS)
        print(f"  omega^2 h = {omega2_h:6.3f}, lambda h = {lam_h:4.1f}: {row}")
