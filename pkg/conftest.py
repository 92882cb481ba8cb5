"""Shared fixtures: the worked example systems and a random stable system factory."""

import logging
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg

from lti_model import LdtSystem

logging.basicConfig(level=logging.INFO)

MODELS_DIR = Path(__file__).parent / "models"

# closed form of G_∞ for A = diag(0.3, 0.9), C = [1, 1]
DIAG_GRAMIAN = np.array([[1 / 0.91, 1 / 0.73], [1 / 0.73, 1 / 0.19]])


def rotation_system(theta: float, modulus: float = 0.9) -> LdtSystem:
    c, s = np.cos(theta), np.sin(theta)
    return LdtSystem(name=f"rotation_{theta:.4f}", A=modulus * np.array([[c, -s], [s, c]]), C=[[1.0, 0.0]])


def random_stable_system(
    rng: np.random.Generator,
    n: int,
    m: int = 1,
    min_modulus: float = 0.0,
    max_modulus: float = 0.95,
    min_gap: float = 0.2,
    allow_complex: bool = True,
    min_modal_output: float = 0.2,
) -> LdtSystem:
    """A = TΛT⁻¹ with separated eigenvalues and a well-scaled similarity T."""
    while True:
        pairs = rng.integers(0, n // 2 + 1) if allow_complex else 0
        blocks, eigenvalues = [], []
        for _ in range(pairs):
            r = rng.uniform(max(min_modulus, 0.3), max_modulus)
            theta = rng.uniform(0.3, 2.5)
            blocks.append(r * np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]))
            eigenvalues += [r * np.exp(1j * theta), r * np.exp(-1j * theta)]
        for _ in range(n - 2 * pairs):
            value = rng.uniform(min_modulus, max_modulus) * rng.choice([-1.0, 1.0])
            blocks.append(np.array([[value]]))
            eigenvalues.append(complex(value))

        eigenvalues = np.array(eigenvalues)
        gaps = np.abs(eigenvalues[:, None] - eigenvalues[None, :]) + np.eye(n) * 10
        if np.min(gaps) < min_gap:
            continue

        orthogonal, _ = np.linalg.qr(rng.standard_normal((n, n)))
        T = orthogonal @ np.diag(rng.uniform(0.5, 2.0, n))
        A = T @ scipy.linalg.block_diag(*blocks) @ np.linalg.inv(T)
        C = rng.standard_normal((m, n))

        _, P = scipy.linalg.eig(A)
        P = P / np.linalg.norm(P, axis=0)
        if np.min(np.linalg.norm(C @ P, axis=0)) < min_modal_output:
            continue
        return LdtSystem(name=f"random_n{n}", A=A, C=C)


@pytest.fixture
def triangular_system():
    return LdtSystem(name="triangular", A=[[0.9, -0.165], [0.0, 0.35]], C=[[1.0, -1.3]])


@pytest.fixture
def diag_system():
    return LdtSystem(name="diag", A=[[0.3, 0.0], [0.0, 0.9]], C=[[1.0, 1.0]])


@pytest.fixture
def unobservable_system():
    return LdtSystem(name="unobs", A=[[0.4, 0.0], [0.0, 0.7]], C=[[1.0, 0.0]])


@pytest.fixture(scope="session")
def system_factory():
    return random_stable_system


@pytest.fixture(scope="session")
def models_dir():
    return MODELS_DIR
