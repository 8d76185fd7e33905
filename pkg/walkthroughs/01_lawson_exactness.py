"""Lawson schemes integrate linear SDEs with commuting matrices exactly.

A two-dimensional Ito system dX = A0 X dt + A1 X dW is built from matrices that
share eigenvectors.  Every full Lawson (FSL) scheme then reproduces the closed
form solution to rounding error, while the underlying explicit schemes carry an
ordinary discretisation error.
"""

import numpy as np

from stochlawson import IntegrationGrid, SemiLinearSde, exact_linear_solution, integrate, sample_grid

rng = np.random.default_rng(0)
Q = rng.standard_normal((2, 2))
Qinv = np.linalg.inv(Q)
A0 = Q @ np.diag([-1.0, -0.5]) @ Qinv
A1 = Q @ np.diag([0.4, -0.3]) @ Qinv
sde = SemiLinearSde(A=(A0, A1), interpretation="ito")

N, h = 500, 2e-3
X0 = np.array([1.0, -0.5])
grid = IntegrationGrid(0.0, N * h, N, X0)
noise = sample_grid(3, 0, 1, N, h, need_dz=True)
exact = exact_linear_solution(sde, N * h, X0, noise.W[-1])

print(f"{'scheme':16s} relative error at T = {N * h}")
for name in ("em", "em-fsl", "platen", "platen-fsl", "platen15", "platen15-fsl"):
    y = integrate(sde, name, grid, noise).states[-1]
    print(f"{name:16s} {np.linalg.norm(y - exact) / np.linalg.norm(exact):.2e}")
