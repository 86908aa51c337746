import numpy as np
import pytest

from regcf.hilbert import InstrumentSample, center, covariance_eigensystem


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def strong_design(rng, n=500, d_z=3, rho=0.5, beta=(1.0, -0.5), pi_scale=1.0, psi_zero=False):
    """Endogenous probit with a strong Euclidean first stage.

    ``Y2 = [y2, z1]`` where ``z1`` is the first instrument (exogenous).
    Returns ``(y, Y2, Z_raw, mask)``.
    """
    Z = rng.standard_normal((n, d_z))
    v = rng.standard_normal(n)
    e = rng.standard_normal(n)
    r = 0.0 if psi_zero else rho
    u = r * v + np.sqrt(1 - r * r) * e
    y2 = 0.3 + pi_scale * Z @ np.linspace(1.0, 0.5, d_z) + v
    z1 = Z[:, 0]
    y = (beta[0] * y2 + beta[1] * z1 >= u).astype(float)
    return y, np.column_stack([y2, z1]), Z, np.array([True, False])


def eig_of(Z_raw):
    Zc = center(InstrumentSample.euclidean(Z_raw))
    return Zc, covariance_eigensystem(Zc)


def with_const(X):
    return np.column_stack([X, np.ones(X.shape[0])])


#: One line per acceptance criterion, filled by test_acceptance and echoed at the end of the run.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
