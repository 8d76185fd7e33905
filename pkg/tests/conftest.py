import numpy as np
import pytest

from stochlawson.model import SemiLinearSde


def commuting_family(rng, d, M, scale=0.3, drift_shift=-0.5):
    """``A_0..A_M`` as quadratic polynomials in one random matrix (so they commute)."""
    R = rng.standard_normal((d, d)) / np.sqrt(d)
    mats = []
    for m in range(M + 1):
        c = rng.standard_normal(3) * scale
        a = c[0] * np.eye(d) + c[1] * R + c[2] * (R @ R)
        if m == 0:
            a = a + drift_shift * np.eye(d)
        mats.append(a)
    return mats


class SmoothRemainder:
    """``g(t, x) = c * sin(W x + t) + k`` with analytic Jacobian."""

    def __init__(self, rng, d, scale=0.3, autonomous=False):
        self.tau = 0.0 if autonomous else 1.0
        self.W = rng.standard_normal((d, d)) / np.sqrt(d)
        self.c = rng.standard_normal(d) * scale
        self.k = rng.standard_normal(d) * scale * 0.5

    def __call__(self, t, x):
        return self.c * np.sin(x @ self.W.T + self.tau * t) + self.k

    def jacobian(self, t, x):
        cosv = np.cos(x @ self.W.T + self.tau * t)
        return (self.c * cosv)[..., :, None] * self.W


def random_semilinear(rng, d, M, interpretation="ito", linear_noise=True, noise_remainder=True, autonomous=False):
    A = commuting_family(rng, d, M)
    if not linear_noise:
        A = [A[0]] + [np.zeros((d, d)) for _ in range(M)]
    g, jac = [], []
    for m in range(M + 1):
        if m > 0 and not noise_remainder:
            g.append(None)
            jac.append(None)
            continue
        fn = SmoothRemainder(rng, d, 0.3 if m == 0 else 0.2, autonomous)
        g.append(fn)
        jac.append(fn.jacobian)
    return SemiLinearSde(A=tuple(A), g=tuple(g), jac=tuple(jac), interpretation=interpretation)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance criteria report ----------------------------------------------------

ACCEPTANCE = {}


def record(number, ok, detail):
    """Store and print one acceptance line; the caller asserts ``ok``."""
    line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
