"""
Closed-form infinite-horizon observability for single-output systems with
distinct, strictly stable eigenvalues.

With A = PΛP⁻¹ and c = CP the infinite Gramian is P⁻ᴴMP⁻¹ where
M_ij = c̄_i c_j / (1 − λ̄_iλ_j) is a Cauchy-type matrix, so

    det G_∞ = |det P|⁻² · Π_{i<j} |λ_j − λ_i|² / |1 − λ̄_iλ_j|² · Π_i |c_i|² / (1 − |λ_i|²)

The evenness factor F1 is reported in the pairwise form |λ_j − λ_i| / |1 − λ_iλ_j|;
it coincides with the Hermitian form used by the determinant for real spectra.
"""

import logging
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict

from app.core.exceptions import (
    EigenSolverError,
    MultiOutputError,
    RepeatedEigenvalueError,
    UnstableEigenvalueError,
)
from app.core.settings import settings
from ellipsoid_geometry import hypersphere_coefficient
from lti_model import LdtSystem, ensure_valid

logger = logging.getLogger(__name__)


class EigenStructure(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    eigenvalues: np.ndarray          # complex, n
    right_eigenvectors: np.ndarray   # columns p_i, unit norm
    left_eigenvectors: np.ndarray    # rows q_i of P⁻¹, q_i·p_i = 1
    det_P_abs: float
    distinct: bool
    min_gap: float
    max_modulus: float

    @property
    def n(self) -> int:
        return int(self.eigenvalues.shape[0])

    def to_document(self) -> Dict[str, Any]:
        return {
            "eigenvalues": [complex(v) for v in self.eigenvalues],
            "moduli": np.abs(self.eigenvalues).tolist(),
            "det_P_abs": self.det_P_abs,
            "distinct": self.distinct,
            "min_gap": self.min_gap,
            "max_modulus": self.max_modulus,
        }


class EvennessFactors(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    F1: float
    pairwise: np.ndarray
    F1_hermitian: float
    pairwise_hermitian: np.ndarray


class ShapeFactorReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: str
    eigenvalues: np.ndarray
    F1: float
    F1_pairwise: np.ndarray
    F1_hermitian: float
    F2: Optional[np.ndarray] = None
    F3: np.ndarray
    det_P_abs: float
    analytic_det: Optional[float] = None
    vol_error_inf: Optional[float] = None
    vol_image_inf: Optional[float] = None
    hypercube_volume: Optional[float] = None
    unavailable_reason: Optional[str] = None

    def to_document(self) -> Dict[str, Any]:
        def listed(value):
            return None if value is None else value.tolist()

        return {
            "name": self.name,
            "eigenvalues": [complex(v) for v in self.eigenvalues],
            "F1": self.F1,
            "F1_pairwise": self.F1_pairwise.tolist(),
            "F1_hermitian": self.F1_hermitian,
            "F2": listed(self.F2),
            "F3": self.F3.tolist(),
            "det_P_abs": self.det_P_abs,
            "analytic_det": self.analytic_det,
            "vol_error_inf": self.vol_error_inf,
            "vol_image_inf": self.vol_image_inf,
            "hypercube_volume": self.hypercube_volume,
            "unavailable_reason": self.unavailable_reason,
        }


def _unit_columns(P: np.ndarray) -> np.ndarray:
    P = P / np.linalg.norm(P, axis=0, keepdims=True)
    # rotate each column so its largest-magnitude entry is real positive
    pivots = P[np.argmax(np.abs(P), axis=0), np.arange(P.shape[1])]
    return P * (np.conj(pivots) / np.abs(pivots))[np.newaxis, :]


def decompose(A: np.ndarray) -> EigenStructure:
    """Eigenpairs of a square matrix with unit, phase-fixed right eigenvectors."""
    A = np.asarray(A, dtype=float)
    try:
        eigenvalues, P = scipy.linalg.eig(A)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as e:
        raise EigenSolverError(f"Eigendecomposition failed: {e}")
    if not (np.all(np.isfinite(eigenvalues)) and np.all(np.isfinite(P))):
        raise EigenSolverError("Eigendecomposition returned non-finite values")

    P = _unit_columns(P)
    n = eigenvalues.shape[0]
    max_modulus = float(np.max(np.abs(eigenvalues)))

    if n > 1:
        gaps = np.abs(eigenvalues[:, np.newaxis] - eigenvalues[np.newaxis, :])
        min_gap = float(np.min(gaps[np.triu_indices(n, k=1)]))
    else:
        min_gap = float("inf")
    distinct = min_gap > settings.eigen_gap * max(1.0, max_modulus)

    det_P_abs = float(abs(np.linalg.det(P)))
    if distinct:
        try:
            left = scipy.linalg.solve(P, np.eye(n, dtype=complex))
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
            raise EigenSolverError(f"Eigenvector matrix is singular: {e}")
    else:
        left = np.full((n, n), np.nan, dtype=complex)

    return EigenStructure(
        eigenvalues=eigenvalues,
        right_eigenvectors=P,
        left_eigenvectors=left,
        det_P_abs=det_P_abs,
        distinct=distinct,
        min_gap=min_gap,
        max_modulus=max_modulus,
    )


def eigen_structure(system: LdtSystem) -> EigenStructure:
    ensure_valid(system)
    return decompose(system.A)


def evenness_factors(eigenvalues) -> EvennessFactors:
    """Pairwise |λ_i − λ_j| / |1 − λ_iλ_j| and the Hermitian |λ_i − λ_j| / |1 − λ̄_iλ_j|."""
    lam = np.asarray(eigenvalues, dtype=complex).reshape(-1)
    n = lam.shape[0]
    difference = np.abs(lam[:, np.newaxis] - lam[np.newaxis, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        pairwise = difference / np.abs(1.0 - lam[:, np.newaxis] * lam[np.newaxis, :])
        hermitian = difference / np.abs(1.0 - np.conj(lam)[:, np.newaxis] * lam[np.newaxis, :])
    np.fill_diagonal(pairwise, 0.0)
    np.fill_diagonal(hermitian, 0.0)

    upper = np.triu_indices(n, k=1)
    return EvennessFactors(
        F1=float(np.prod(pairwise[upper])),
        pairwise=pairwise,
        F1_hermitian=float(np.prod(hermitian[upper])),
        pairwise_hermitian=hermitian,
    )


def _require_single_output(m: int, name: str):
    if m != 1:
        raise MultiOutputError(f"'{name}': closed-form factors need a single output, got m={m}")


def _require_distinct(structure: EigenStructure, name: str):
    if not structure.distinct:
        raise RepeatedEigenvalueError(
            f"'{name}': eigenvalues are not distinct (min gap {structure.min_gap:.3g}); "
            f"use the numeric Gramian instead",
            {"min_gap": structure.min_gap},
        )


def _require_stable(structure: EigenStructure, name: str):
    if structure.max_modulus >= 1.0:
        raise UnstableEigenvalueError(
            f"'{name}': eigenvalue modulus {structure.max_modulus:.6g} is outside [0, 1)",
            {"max_modulus": structure.max_modulus},
        )


def _checked_structure(system: LdtSystem, stable: bool = True) -> EigenStructure:
    ensure_valid(system)
    _require_single_output(system.m, system.name)
    structure = decompose(system.A)
    _require_distinct(structure, system.name)
    if stable:
        _require_stable(structure, system.name)
    return structure


def _modal_output(system: LdtSystem, structure: EigenStructure) -> np.ndarray:
    return np.abs(system.C @ structure.right_eigenvectors).reshape(-1)


def analytic_infinite_determinant(system: LdtSystem) -> float:
    structure = _checked_structure(system)
    F3 = _modal_output(system, structure)
    F2 = F3 / np.sqrt(1.0 - np.abs(structure.eigenvalues) ** 2)
    factors = evenness_factors(structure.eigenvalues)
    return float((factors.F1_hermitian / structure.det_P_abs) ** 2 * np.prod(F2 ** 2))


def analytic_volumes(system: LdtSystem) -> Tuple[float, float]:
    """(vol of the error set, vol of the image set) at the infinite horizon."""
    det = analytic_infinite_determinant(system)
    H_n = hypersphere_coefficient(system.n)
    if det <= 0.0:
        logger.warning(f"'{system.name}': analytic determinant is zero, error set is unbounded")
        return float("inf"), 0.0
    return float(H_n / np.sqrt(det)), float(H_n * np.sqrt(det))


def shape_factors(system: LdtSystem) -> ShapeFactorReport:
    structure = _checked_structure(system, stable=False)
    factors = evenness_factors(structure.eigenvalues)
    F3 = _modal_output(system, structure)

    report = dict(
        name=system.name,
        eigenvalues=structure.eigenvalues,
        F1=factors.F1,
        F1_pairwise=factors.pairwise,
        F1_hermitian=factors.F1_hermitian,
        F3=F3,
        det_P_abs=structure.det_P_abs,
    )
    if structure.max_modulus >= 1.0:
        reason = f"eigenvalue modulus {structure.max_modulus:.6g} is outside [0, 1)"
        logger.warning(f"'{system.name}': infinite-horizon factors unavailable, {reason}")
        return ShapeFactorReport(**report, unavailable_reason=reason)

    F2 = F3 / np.sqrt(1.0 - np.abs(structure.eigenvalues) ** 2)
    det = float((factors.F1_hermitian / structure.det_P_abs) ** 2 * np.prod(F2 ** 2))
    H_n = hypersphere_coefficient(system.n)
    return ShapeFactorReport(
        **report,
        F2=F2,
        analytic_det=det,
        vol_error_inf=float(H_n / np.sqrt(det)) if det > 0 else float("inf"),
        vol_image_inf=float(H_n * np.sqrt(det)),
        hypercube_volume=float(np.prod(2.0 * F2)),
    )


def analytic_reachability_determinant(A_c: np.ndarray, B_c: np.ndarray) -> float:
    """Infinite reachability Gramian determinant from left eigenvectors: |det P|² · Π|q_i b|²/(1 − |λ_i|²) · Cauchy term."""
    A_c = np.atleast_2d(np.asarray(A_c, dtype=float))
    B_c = np.asarray(B_c, dtype=float)
    if B_c.ndim == 1:
        B_c = B_c.reshape(-1, 1)
    _require_single_output(B_c.shape[1], "reachability pair")

    structure = decompose(A_c)
    _require_distinct(structure, "reachability pair")
    _require_stable(structure, "reachability pair")

    modal_input = np.abs(structure.left_eigenvectors @ B_c).reshape(-1)
    factors = evenness_factors(structure.eigenvalues)
    return float(
        (structure.det_P_abs * factors.F1_hermitian) ** 2
        * np.prod(modal_input ** 2 / (1.0 - np.abs(structure.eigenvalues) ** 2))
    )
