import numpy as np
import pytest

from mindlin_ph.controllability import decompose
from mindlin_ph.discretize import build_plate
from mindlin_ph.plate import PlateParameters
from mindlin_ph.simulation import build_coupling
from mindlin_ph.synthesis import SynthesisConfig, synthesize

# design grid and its 2:1 edge refinement used as the desk-scale plant
DESIGN_CELLS = (6, 6)
REFINED_CELLS = (13, 12)


@pytest.fixture(scope="session")
def params():
    return PlateParameters()


@pytest.fixture(scope="session")
def plate(params):
    return build_plate(params, *DESIGN_CELLS)


@pytest.fixture(scope="session")
def realization(plate):
    return decompose(plate)


@pytest.fixture(scope="session")
def synthesis(realization):
    return synthesize(realization, SynthesisConfig())


@pytest.fixture(scope="session")
def refined_plate(params):
    return build_plate(params, *REFINED_CELLS)


@pytest.fixture(scope="session")
def coupling(plate, refined_plate):
    return build_coupling(plate.grid, refined_plate.grid)


@pytest.fixture(scope="session")
def small_plate(params):
    return build_plate(params, 3, 1)


@pytest.fixture(scope="session")
def small_realization(small_plate):
    return decompose(small_plate)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def kalman_rank(A, B, tol=1e-10):
    """Controllable dimension by block Arnoldi with full reorthogonalization."""
    A = np.asarray(A)
    B = np.asarray(B)
    u, s, _ = np.linalg.svd(B, full_matrices=False)
    V = u[:, s > tol * s[0]]
    basis = V
    scale = max(1.0, np.linalg.norm(A, 2))
    while True:
        W = A @ V
        for _ in range(2):
            W -= basis @ (basis.T @ W)
        u, s, _ = np.linalg.svd(W, full_matrices=False)
        keep = s > tol * scale
        if not keep.any():
            return basis.shape[1]
        V = u[:, keep]
        basis = np.hstack([basis, V])


def care_oracle(A, S, Q):
    """Stabilizing CARE solution from Hamiltonian eigenvectors."""
    n = A.shape[0]
    H = np.block([[A, S], [-Q, -A.T]])
    lam, V = np.linalg.eig(H)
    stable = V[:, lam.real < 0]
    assert stable.shape[1] == n
    X = stable[n:] @ np.linalg.inv(stable[:n])
    return X.real
