#!/usr/bin/env python3
"""
Tests for observability/reachability matrices, Gramians and the Stein solver
"""

import sys

import numpy as np
import pytest
from box import Box
from hypothesis import given, settings as hyp_settings, strategies as st

from app.core.exceptions import DivergentGramianError, HorizonError
from conftest import DIAG_GRAMIAN, random_stable_system
from gramian_core import (
    bundle_from_gramian,
    gramian_sequence,
    horizon_profile,
    infinite_observability_gramian,
    observability_gramian,
    observability_matrix,
    observability_rank,
    reachability_gramian,
    reachability_matrix,
    solve_stein,
    spectral_radius,
)
from lti_model import LdtSystem, dualize


def test_observability_matrix_triangular(triangular_system):
    Q = observability_matrix(triangular_system, 2)
    assert np.allclose(Q, [[1.0, -1.3], [0.9, -0.62]], atol=1e-15)


def test_observability_matrix_single_step_is_output_matrix(triangular_system):
    assert np.array_equal(observability_matrix(triangular_system, 1), triangular_system.C)


def test_observability_matrix_identity_dynamics():
    system = LdtSystem(A=np.eye(2), C=[[1.0, 2.0]])
    assert np.array_equal(observability_matrix(system, 3), np.tile([[1.0, 2.0]], (3, 1)))


def test_zero_horizon_is_rejected(triangular_system):
    with pytest.raises(HorizonError):
        observability_matrix(triangular_system, 0)


def test_observability_gramian_triangular(triangular_system):
    bundle = observability_gramian(triangular_system, 2)
    assert np.allclose(bundle.G, [[1.81, -1.858], [-1.858, 2.0744]], atol=1e-12)
    assert bundle.rank == 2
    assert bundle.determinant == pytest.approx(0.55 ** 2, rel=1e-10)
    assert np.linalg.norm(bundle.Q.T @ bundle.Q - bundle.G) <= 1e-10 * (1 + np.linalg.norm(bundle.G))


def test_single_step_gramian_rank_one():
    bundle = observability_gramian(LdtSystem(A=np.diag([0.3, 0.9]), C=[[1.0, 0.0]]), 1)
    assert np.array_equal(bundle.G, [[1.0, 0.0], [0.0, 0.0]])
    assert bundle.rank == 1
    assert bundle.determinant == 0.0
    assert bundle.condition_number == float("inf")
    [direction] = bundle.null_directions()
    assert np.allclose(direction, [0.0, 1.0])


def test_partial_sums_approach_closed_form(diag_system):
    bundle = observability_gramian(diag_system, 400)
    assert np.allclose(bundle.G, DIAG_GRAMIAN, rtol=1e-12)


def test_infinite_gramian_closed_form(diag_system):
    bundle = infinite_observability_gramian(diag_system)
    assert bundle.horizon is None
    assert bundle.Q is None
    assert np.allclose(bundle.G, DIAG_GRAMIAN, rtol=1e-12)
    assert bundle.determinant == pytest.approx(np.linalg.det(DIAG_GRAMIAN), rel=1e-10)
    assert bundle.determinant == pytest.approx(3.907164, rel=1e-6)


def test_infinite_gramian_zero_output():
    bundle = infinite_observability_gramian(LdtSystem(A=np.diag([0.3, 0.9]), C=[[0.0, 0.0]]))
    assert np.array_equal(bundle.G, np.zeros((2, 2)))
    assert bundle.rank == 0


def test_infinite_gramian_rejects_unit_eigenvalue():
    with pytest.raises(DivergentGramianError) as excinfo:
        infinite_observability_gramian(LdtSystem(A=np.diag([1.0, 0.5]), C=[[1.0, 1.0]]))
    assert excinfo.value.exit_code == 4


def test_divergence_uses_modulus_not_real_part():
    # eigenvalues ±1.05i have zero real part but modulus above one
    system = LdtSystem(A=[[0.0, -1.05], [1.05, 0.0]], C=[[1.0, 0.0]])
    assert spectral_radius(system.A) == pytest.approx(1.05)
    with pytest.raises(DivergentGramianError):
        infinite_observability_gramian(system)


def test_stein_doubling_path_matches_direct(monkeypatch):
    rng = np.random.default_rng(7)
    system = random_stable_system(rng, 4, max_modulus=0.9, allow_complex=True)
    direct = solve_stein(system.A, system.C.T @ system.C)
    monkeypatch.setattr("gramian_core.settings", Box(kronecker_max_n=0, doubling_max_iter=64, stability_margin=1e-9))
    doubled = solve_stein(system.A, system.C.T @ system.C)
    assert np.linalg.norm(doubled - direct) <= 1e-10 * np.linalg.norm(direct)


def test_stein_matches_long_partial_sum():
    rng = np.random.default_rng(2024)
    for n in (2, 3, 4, 5):
        for _ in range(5):
            system = random_stable_system(rng, n)
            infinite = infinite_observability_gramian(system).G
            partial = observability_gramian(system, 5000).G
            assert np.linalg.norm(infinite - partial) / np.linalg.norm(infinite) <= 1e-8


def test_reachability_gramian_of_dual_equals_observability(triangular_system):
    dual = dualize(triangular_system)
    reach = reachability_gramian(dual.A_c, dual.B_c, 2)
    assert np.allclose(reach.G, observability_gramian(triangular_system, 2).G, rtol=1e-14, atol=0)


def test_reachability_single_step_and_zero_input():
    B = np.array([[1.0], [2.0]])
    bundle = reachability_gramian(np.diag([0.5, 0.2]), B, 1)
    assert np.allclose(bundle.G, B @ B.T)
    zero = reachability_gramian(np.diag([0.5, 0.2]), np.zeros((2, 1)), 5)
    assert np.array_equal(zero.G, np.zeros((2, 2)))


def test_reachability_matrix_columns():
    A_c = np.array([[0.5, 1.0], [0.0, 0.2]])
    B_c = np.array([[1.0], [1.0]])
    R = reachability_matrix(A_c, B_c, 3)
    expected = np.hstack([B_c, A_c @ B_c, A_c @ A_c @ B_c])
    assert np.allclose(R, expected)


def test_observability_rank(triangular_system, unobservable_system):
    assert observability_rank(triangular_system, 2) == (2, True)
    assert observability_rank(unobservable_system, 2) == (1, False)
    assert observability_rank(unobservable_system, 10) == (1, False)
    zero = LdtSystem(A=np.diag([0.3, 0.9]), C=[[0.0, 0.0]])
    assert observability_rank(zero, 2) == (0, False)
    with pytest.raises(HorizonError):
        observability_rank(triangular_system, 1)


def test_gramian_sequence_matches_direct(triangular_system):
    for bundle in gramian_sequence(triangular_system, 8):
        direct = observability_gramian(triangular_system, bundle.horizon)
        assert np.allclose(bundle.G, direct.G, rtol=1e-13, atol=1e-15)


def test_horizon_profile_is_monotone(diag_system):
    rows = horizon_profile(diag_system, [1, 2, 4, 8, 16])
    assert rows[0].log_det == float("-inf")
    min_eigs = [row.min_eig for row in rows]
    assert all(b >= a - 1e-12 for a, b in zip(min_eigs, min_eigs[1:]))
    assert rows[-1].log_det > rows[1].log_det


def test_bundle_is_symmetrized():
    bundle = bundle_from_gramian(np.array([[2.0, 1.0], [1.0 + 1e-14, 3.0]]), 4)
    assert np.array_equal(bundle.G, bundle.G.T)


@given(seed=st.integers(min_value=0, max_value=2 ** 32 - 1), n=st.integers(min_value=1, max_value=4))
@hyp_settings(max_examples=40, deadline=None)
def test_loewner_monotonicity(seed, n):
    system = random_stable_system(np.random.default_rng(seed), n, max_modulus=0.99)
    previous = None
    for bundle in gramian_sequence(system, 12):
        eigenvalues = np.linalg.eigvalsh(bundle.G)
        if previous is not None:
            scale = max(1.0, float(np.max(eigenvalues)))
            assert np.all(eigenvalues >= previous - 1e-12 * scale)
            increment = np.linalg.eigvalsh(bundle.G - previous_G)
            assert increment[0] >= -1e-12 * scale
        previous, previous_G = eigenvalues, bundle.G


@given(seed=st.integers(min_value=0, max_value=2 ** 32 - 1), n=st.integers(min_value=1, max_value=4),
       N=st.integers(min_value=1, max_value=10))
@hyp_settings(max_examples=40, deadline=None)
def test_duality_of_gramians(seed, n, N):
    system = random_stable_system(np.random.default_rng(seed), n, m=2)
    dual = dualize(system)
    observed = observability_gramian(system, N).G
    reached = reachability_gramian(dual.A_c, dual.B_c, N).G
    assert np.linalg.norm(reached - observed) <= 1e-12 * np.linalg.norm(observed)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
