"""
Observability and reachability matrices and Gramians.

Finite horizons are built from stacked powers; the infinite horizon solves the
Stein identity G = AᵀGA + Q (dense Kronecker solve for small orders, doubling
accumulation above).
"""

import logging
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict

from app.core.exceptions import DivergentGramianError, HorizonError, NonFiniteResultError
from app.core.settings import settings
from lti_model import LdtSystem, ensure_valid

logger = logging.getLogger(__name__)

Horizon = Optional[int]  # None is the infinite horizon


def horizon_label(horizon: Horizon) -> Any:
    return "infinite" if horizon is None else horizon


class GramianBundle(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    horizon: Horizon
    Q: Optional[np.ndarray] = None
    G: np.ndarray
    rank: int
    min_eig: float
    max_eig: float
    determinant: float

    @property
    def n(self) -> int:
        return int(self.G.shape[0])

    @property
    def is_full_rank(self) -> bool:
        return self.rank == self.n

    @property
    def condition_number(self) -> float:
        if not self.is_full_rank or self.min_eig <= 0:
            return float("inf")
        return self.max_eig / self.min_eig

    def null_directions(self, tol: Optional[float] = None) -> List[np.ndarray]:
        """Orthonormal directions along which the quadratic form vanishes."""
        eigenvalues, vectors = np.linalg.eigh(self.G)
        threshold = _eig_threshold(eigenvalues, self.n) if tol is None else tol
        directions = []
        for value, vector in zip(eigenvalues, vectors.T):
            if value <= threshold:
                directions.append(_fix_sign(vector))
        return directions

    def to_document(self) -> Dict[str, Any]:
        return {
            "horizon": horizon_label(self.horizon),
            "rank": self.rank,
            "observable": self.is_full_rank,
            "min_eig": self.min_eig,
            "max_eig": self.max_eig,
            "determinant": self.determinant,
            "condition_number": self.condition_number,
            "G": self.G.tolist(),
        }


def _fix_sign(vector: np.ndarray) -> np.ndarray:
    # largest-magnitude entry positive
    if vector[np.argmax(np.abs(vector))] < 0:
        return -vector
    return vector


def _eig_threshold(eigenvalues: np.ndarray, n: int) -> float:
    return n * np.finfo(float).eps * max(float(np.max(eigenvalues)), 0.0)


def numerical_rank(matrix: np.ndarray) -> int:
    """Rank from singular values; below max(rows, cols)·eps·σ_max counts as zero."""
    if matrix.size == 0:
        return 0
    singular_values = scipy.linalg.svdvals(matrix)
    sigma_max = singular_values[0] if singular_values.size else 0.0
    threshold = max(matrix.shape) * np.finfo(float).eps * sigma_max
    return int(np.sum(singular_values > threshold))


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def bundle_from_gramian(G: np.ndarray, horizon: Horizon, Q: Optional[np.ndarray] = None) -> GramianBundle:
    G = (G + G.T) / 2.0
    if not np.all(np.isfinite(G)):
        raise NonFiniteResultError(
            f"Gramian at horizon {horizon_label(horizon)} overflowed to non-finite values"
        )
    n = G.shape[0]
    eigenvalues = np.linalg.eigvalsh(G)
    if Q is not None:
        rank = numerical_rank(Q)
    else:
        rank = int(np.sum(eigenvalues > _eig_threshold(eigenvalues, n)))
    determinant = float(np.prod(eigenvalues)) if rank == n else 0.0

    return GramianBundle(
        horizon=horizon,
        Q=None if Q is None else _readonly(Q),
        G=_readonly(G),
        rank=rank,
        min_eig=float(eigenvalues[0]),
        max_eig=float(eigenvalues[-1]),
        determinant=max(determinant, 0.0),
    )


def _check_horizon(N: int):
    if N is None or int(N) != N or N < 1:
        raise HorizonError(f"Horizon must be a positive integer, got {N}")


def _stacked_powers(C: np.ndarray, A: np.ndarray, N: int) -> np.ndarray:
    blocks = []
    block = C
    for _ in range(N):
        blocks.append(block)
        block = block @ A
    return np.vstack(blocks)


def spectral_radius(A: np.ndarray) -> float:
    return float(np.max(np.abs(scipy.linalg.eigvals(A))))


def _check_convergent(A: np.ndarray, what: str):
    rho = spectral_radius(A)
    if rho >= 1.0 - settings.stability_margin:
        raise DivergentGramianError(
            f"Infinite-horizon {what} Gramian diverges: spectral radius {rho:.6g} is not below 1",
            {"spectral_radius": rho},
        )


def _solve_by_doubling(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    G = Q.copy()
    power = A.copy()
    for iteration in range(settings.doubling_max_iter):
        increment = power.T @ G @ power
        G = G + increment
        power = power @ power
        if np.linalg.norm(increment) <= np.finfo(float).eps * np.linalg.norm(G):
            logger.debug(f"Doubling converged after {iteration + 1} iterations")
            return G
    logger.warning(f"Doubling did not converge in {settings.doubling_max_iter} iterations")
    return G


def solve_stein(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Solve G = AᵀGA + Q for a Schur-stable A."""
    _check_convergent(A, "Stein")
    n = A.shape[0]
    if n <= settings.kronecker_max_n:
        logger.info(f"Solving Stein equation of order {n} by Kronecker linearization")
        G = scipy.linalg.solve_discrete_lyapunov(A.T, Q, method="direct")
    else:
        logger.info(f"Solving Stein equation of order {n} by doubling")
        G = _solve_by_doubling(A, Q)
    return (G + G.T) / 2.0


# --- Observability side ---

def observability_matrix(system: LdtSystem, N: int) -> np.ndarray:
    """Stacked blocks C, CA, …, CA^{N−1} (Nm × n)."""
    ensure_valid(system)
    _check_horizon(N)
    return _stacked_powers(system.C, system.A, N)


def observability_gramian(system: LdtSystem, N: int) -> GramianBundle:
    Q = observability_matrix(system, N)
    if not np.all(np.isfinite(Q)):
        raise NonFiniteResultError(f"Observability matrix of '{system.name}' overflowed at N={N}")
    return bundle_from_gramian(Q.T @ Q, N, Q)


def infinite_observability_gramian(system: LdtSystem) -> GramianBundle:
    ensure_valid(system)
    try:
        G = solve_stein(system.A, system.C.T @ system.C)
    except DivergentGramianError as e:
        raise DivergentGramianError(f"'{system.name}': {e.message}", e.details)
    return bundle_from_gramian(G, None)


def gramian_at(system: LdtSystem, horizon: Horizon) -> GramianBundle:
    if horizon is None:
        return infinite_observability_gramian(system)
    return observability_gramian(system, horizon)


def gramian_sequence(system: LdtSystem, N_max: int) -> Iterator[GramianBundle]:
    """Yields G_1, …, G_{N_max}, adding one output block per step."""
    ensure_valid(system)
    _check_horizon(N_max)
    blocks: List[np.ndarray] = []
    block = system.C
    G = np.zeros((system.n, system.n))
    for N in range(1, N_max + 1):
        blocks.append(block)
        G = G + block.T @ block
        yield bundle_from_gramian(G.copy(), N, np.vstack(blocks))
        block = block @ system.A


def observability_rank(system: LdtSystem, N: int) -> Tuple[int, bool]:
    ensure_valid(system)
    if N is None or N < system.n:
        raise HorizonError(f"Rank test needs N >= n = {system.n}, got {N}")
    rank = numerical_rank(observability_matrix(system, N))
    return rank, rank == system.n


class HorizonProfileRow(BaseModel):
    horizon: int
    min_eig: float
    max_eig: float
    log_det: float


def horizon_profile(system: LdtSystem, horizons: Sequence[int]) -> List[HorizonProfileRow]:
    """λ_min, λ_max and log det of G_N over the given horizons."""
    rows = []
    for N in sorted(set(horizons)):
        bundle = observability_gramian(system, N)
        sign, log_det = np.linalg.slogdet(bundle.G)
        rows.append(
            HorizonProfileRow(
                horizon=N,
                min_eig=bundle.min_eig,
                max_eig=bundle.max_eig,
                log_det=float(log_det) if sign > 0 and bundle.is_full_rank else float("-inf"),
            )
        )
        logger.debug(f"N={N}: min_eig={bundle.min_eig:.6g}, log_det={rows[-1].log_det:.6g}")
    return rows


# --- Reachability side ---

def reachability_matrix(A_c: np.ndarray, B_c: np.ndarray, N: int) -> np.ndarray:
    """[B_c, A_cB_c, …, A_c^{N−1}B_c] (n × Nm)."""
    _check_horizon(N)
    A_c = np.atleast_2d(np.asarray(A_c, dtype=float))
    B_c = np.asarray(B_c, dtype=float)
    if B_c.ndim == 1:
        B_c = B_c.reshape(-1, 1)
    if A_c.shape[0] != A_c.shape[1] or B_c.shape[0] != A_c.shape[0]:
        raise HorizonError(f"Inconsistent reachability shapes A_c {A_c.shape}, B_c {B_c.shape}")
    # transpose of the dual stacked powers
    return _stacked_powers(B_c.T, A_c.T, N).T


def reachability_gramian(A_c: np.ndarray, B_c: np.ndarray, N: Horizon) -> GramianBundle:
    """G_c = Σ A_cᵏB_cB_cᵀ(A_cᵏ)ᵀ, finite or infinite horizon."""
    A_c = np.atleast_2d(np.asarray(A_c, dtype=float))
    B_c = np.asarray(B_c, dtype=float)
    if B_c.ndim == 1:
        B_c = B_c.reshape(-1, 1)
    if N is None:
        if A_c.shape[0] != A_c.shape[1] or B_c.shape[0] != A_c.shape[0]:
            raise HorizonError(f"Inconsistent reachability shapes A_c {A_c.shape}, B_c {B_c.shape}")
        return bundle_from_gramian(solve_stein(A_c.T, B_c @ B_c.T), None)

    Q_c = reachability_matrix(A_c, B_c, N)
    if not np.all(np.isfinite(Q_c)):
        raise NonFiniteResultError(f"Reachability matrix overflowed at N={N}")
    # rank from Q_cᵀ, the same stacked matrix the observability side measures
    return bundle_from_gramian(Q_c @ Q_c.T, N, Q_c.T)
