import numpy as np
import pytest

from symmod.lti import make_model


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)


RL_PARAMS = dict(R=1.0, L=1.0, R_L=0.5, R_g=0.2, L_g=0.1, omega=2 * np.pi * 50)


def rl_two_by_two(R, L, R_L, R_g, L_g, omega):
    """Independent closed-form oracle for the RL group-grid block."""
    return np.array([
        [-(R + 3 * R_L) / L - 1j * omega, -3 * R_L / L],
        [-R_L / L_g, -(R_g + R_L) / L_g - 1j * omega],
    ])


def random_stable_model(rng, n, p, q, d_scale=0.1, shift=0.5):
    """Random complex quadruple with Re(eig(A)) < -shift."""
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    A = A - (np.max(np.linalg.eigvals(A).real) + shift) * np.eye(n)
    B = rng.standard_normal((n, p)) + 1j * rng.standard_normal((n, p))
    C = rng.standard_normal((q, n)) + 1j * rng.standard_normal((q, n))
    D = d_scale * (rng.standard_normal((q, p)) + 1j * rng.standard_normal((q, p)))
    return make_model(A, B, C, D)
