"""
Observability ellipsoids built from a Gramian.

The state-observed-error set is {x̃ : x̃ᵀGx̃ ≤ 1}; the image set is
{z : zᵀG⁻¹z ≤ 1}. Radii, volumes, membership, boundary points, Loewner
containment and minimum sample lengths live here.
"""

import logging
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict

from app.core.exceptions import (
    ObservabilityError,
    UnboundedDirectionError,
    UnobservableError,
    UnsupportedNoiseModelError,
)
from app.core.settings import settings
from gramian_core import GramianBundle, Horizon, gramian_sequence, horizon_label
from lti_model import LdtSystem, NoiseModel

logger = logging.getLogger(__name__)


class EllipsoidKind(str, Enum):
    ERROR_SET = "error_set"
    IMAGE_SET = "image_set"


class Ellipsoid(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: EllipsoidKind
    G: np.ndarray
    horizon: Horizon = None

    @classmethod
    def from_bundle(cls, bundle: GramianBundle, kind: EllipsoidKind = EllipsoidKind.ERROR_SET) -> "Ellipsoid":
        return cls(kind=kind, G=bundle.G, horizon=bundle.horizon)

    @property
    def n(self) -> int:
        return int(self.G.shape[0])


class EllipsoidMetrics(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: EllipsoidKind
    horizon: Horizon
    radii: np.ndarray  # descending
    volume: float
    H_n: float
    axes: np.ndarray  # column i is the axis of radii[i]
    unbounded_directions: List[np.ndarray] = []
    scale: float = 1.0

    @property
    def bounded(self) -> bool:
        return bool(np.isfinite(self.volume))

    @property
    def r_max(self) -> float:
        return float(self.radii[0])

    @property
    def r_min(self) -> float:
        return float(self.radii[-1])

    def to_document(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "horizon": horizon_label(self.horizon),
            "radii": self.radii.tolist(),
            "volume": self.volume,
            "H_n": self.H_n,
            "scale": self.scale,
            "axes": self.axes.T.tolist(),
            "unbounded_directions": [d.tolist() for d in self.unbounded_directions],
        }


class Membership(BaseModel):
    inside: bool
    value: float


# --- Volume coefficient ---

def gamma_half_integer(x: float) -> float:
    """Γ(x) for x a positive multiple of 1/2, by Γ(x+1) = xΓ(x) from Γ(1/2) = √π, Γ(1) = 1."""
    twice = 2 * x
    if twice != int(twice) or twice < 1:
        raise ObservabilityError(f"gamma_half_integer needs a positive half-integer, got {x}")
    odd = int(twice) % 2 == 1
    value = np.sqrt(np.pi) if odd else 1.0
    current = 0.5 if odd else 1.0
    while current < x:
        value *= current
        current += 1.0
    return float(value)


def hypersphere_coefficient(n: int) -> float:
    """H_n = π^{n/2} / Γ(n/2 + 1), the unit n-ball volume."""
    if n < 1:
        raise ObservabilityError(f"Hypersphere coefficient needs n >= 1, got {n}")
    return float(np.pi ** (n / 2.0) / gamma_half_integer(n / 2.0 + 1.0))


def feasible_error_scale(noise: NoiseModel) -> float:
    """Radius multiplier 2s of the feasible error set under ‖W‖₂ ≤ s."""
    if not noise.supports_ellipsoid:
        raise UnsupportedNoiseModelError(
            f"Noise model {noise.label} has no ellipsoid description; only sequence two-norm bounds do"
        )
    return 2.0 * noise.bound


# --- Metrics ---

def _check_symmetric(G: np.ndarray):
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ObservabilityError(f"Gramian must be square, got shape {G.shape}")
    if not np.allclose(G, G.T, rtol=1e-12, atol=1e-12 * max(1.0, float(np.max(np.abs(G))))):
        raise ObservabilityError("Gramian is not symmetric")


def _eigh_ascending(bundle: GramianBundle):
    _check_symmetric(bundle.G)
    eigenvalues, vectors = np.linalg.eigh(bundle.G)
    return np.clip(eigenvalues, 0.0, None), vectors


def error_ellipsoid_metrics(bundle: GramianBundle, scale: float = 1.0) -> EllipsoidMetrics:
    """r_i = μ_{n−i+1}^{−1/2}(G), vol = H_n·Π r_i; rank deficiency gives an unbounded set."""
    eigenvalues, vectors = _eigh_ascending(bundle)
    n = bundle.n
    H_n = hypersphere_coefficient(n)
    null_count = n - bundle.rank

    radii = np.empty(n)
    radii[:null_count] = np.inf
    radii[null_count:] = scale / np.sqrt(eigenvalues[null_count:])
    unbounded = [vectors[:, i] for i in range(null_count)]
    unbounded = [-d if d[np.argmax(np.abs(d))] < 0 else d for d in unbounded]

    if null_count:
        volume = float("inf")
        logger.warning(f"Error ellipsoid at horizon {horizon_label(bundle.horizon)} is unbounded "
                       f"along {null_count} direction(s)")
    else:
        volume = float(H_n * np.prod(radii))

    return EllipsoidMetrics(
        kind=EllipsoidKind.ERROR_SET,
        horizon=bundle.horizon,
        radii=radii,
        volume=volume,
        H_n=H_n,
        axes=vectors,
        unbounded_directions=unbounded,
        scale=scale,
    )


def image_ellipsoid_metrics(bundle: GramianBundle, scale: float = 1.0) -> EllipsoidMetrics:
    """r_i = μ_i^{1/2}(G) descending, vol = H_n·det(G)^{1/2}."""
    eigenvalues, vectors = _eigh_ascending(bundle)
    n = bundle.n
    H_n = hypersphere_coefficient(n)
    order = np.arange(n)[::-1]
    radii = scale * np.sqrt(eigenvalues[order])
    null_count = n - bundle.rank
    if null_count:
        radii[n - null_count:] = 0.0

    return EllipsoidMetrics(
        kind=EllipsoidKind.IMAGE_SET,
        horizon=bundle.horizon,
        radii=radii,
        volume=float(H_n * np.prod(radii)),
        H_n=H_n,
        axes=vectors[:, order],
        scale=scale,
    )


# --- Membership and boundary ---

def _quadratic_form(e: Ellipsoid, x: np.ndarray) -> float:
    if e.kind == EllipsoidKind.ERROR_SET:
        return float(x @ e.G @ x)
    try:
        solved = scipy.linalg.solve(e.G, x, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        raise UnobservableError("Image-set quadratic form needs a nonsingular Gramian")
    return float(x @ solved)


def contains(e: Ellipsoid, x: Sequence[float], tol: Optional[float] = None) -> Membership:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != e.n:
        raise ObservabilityError(f"Point has {x.shape[0]} entries, ellipsoid has dimension {e.n}")
    tol = settings.membership_tol if tol is None else tol
    value = _quadratic_form(e, x)
    return Membership(inside=value <= 1.0 + tol, value=value)


def boundary_points(e: Ellipsoid, directions: Sequence[Sequence[float]], unit_tol: Optional[float] = None) -> np.ndarray:
    """d·f on the boundary for each unit direction f, d = (fᵀGf)^{−1/2} (fᵀG⁻¹f for the image set)."""
    unit_tol = settings.unit_tol if unit_tol is None else unit_tol
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    if directions.shape[1] != e.n:
        raise ObservabilityError(f"Directions must have {e.n} entries, got {directions.shape[1]}")

    null_tol = e.n * np.finfo(float).eps * max(float(np.linalg.norm(e.G, 2)), np.finfo(float).tiny)
    points = np.empty_like(directions)
    for i, f in enumerate(directions):
        if abs(np.linalg.norm(f) - 1.0) > unit_tol:
            raise ObservabilityError(f"Direction {i} is not a unit vector (norm {np.linalg.norm(f):.12g})")
        q = _quadratic_form(e, f)
        if q <= null_tol:
            raise UnboundedDirectionError(
                f"Direction {f.tolist()} lies in the unobservable subspace; the boundary is at infinity"
            )
        points[i] = f / np.sqrt(q)
    return points


def sweep_directions(samples: int) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(samples) / samples
    return np.column_stack([np.cos(angles), np.sin(angles)])


def boundary_sweep(e: Ellipsoid, samples: Optional[int] = None) -> np.ndarray:
    """Boundary of a 2-D ellipsoid over equally spaced angles."""
    if e.n != 2:
        raise ObservabilityError(f"Boundary sweep is defined for 2-D systems only, got n={e.n}")
    samples = settings.boundary_samples if samples is None else samples
    if samples < 1:
        raise ObservabilityError(f"Sample count must be positive, got {samples}")
    return boundary_points(e, sweep_directions(samples))


def bounding_box_half_widths(e: Ellipsoid) -> np.ndarray:
    """Half side lengths of the circumscribed axis-aligned box."""
    if e.kind == EllipsoidKind.IMAGE_SET:
        return np.sqrt(np.clip(np.diag(e.G), 0.0, None))
    try:
        inverse_diag = np.diag(scipy.linalg.solve(e.G, np.eye(e.n), assume_a="pos"))
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        raise UnobservableError("Error set is unbounded; no circumscribed box exists")
    return np.sqrt(inverse_diag)


# --- Sample length and containment ---

def min_samples_for_error(system: LdtSystem, e_b: Sequence[float], N_max: int) -> Optional[int]:
    """First N with e_bᵀG_Ne_b > 1, i.e. e_b ∈ S(N−1) but e_b ∉ S(N); None if N_max is too short."""
    e_b = np.asarray(e_b, dtype=float).reshape(-1)
    if e_b.shape[0] != system.n:
        raise ObservabilityError(f"Target error has {e_b.shape[0]} entries, expected {system.n}")
    if not np.any(e_b):
        raise ObservabilityError("Target error bound must be nonzero")

    for bundle in gramian_sequence(system, N_max):
        value = float(e_b @ bundle.G @ e_b)
        logger.debug(f"N={bundle.horizon}: e_b^T G e_b = {value:.9g}")
        if value > 1.0:
            return bundle.horizon
    logger.info(f"No horizon up to {N_max} excludes the target error for '{system.name}'")
    return None


def feasible_set_containment(bundle_a: GramianBundle, bundle_b: GramianBundle, tol: Optional[float] = None) -> bool:
    """S_A ⊆ S_B ⇔ G_A ⪰ G_B."""
    if bundle_a.G.shape != bundle_b.G.shape:
        raise ObservabilityError(f"Dimension mismatch: {bundle_a.G.shape} vs {bundle_b.G.shape}")
    tol = settings.containment_tol if tol is None else tol
    difference = bundle_a.G - bundle_b.G
    min_eig = float(np.linalg.eigvalsh((difference + difference.T) / 2.0)[0])
    return min_eig >= -tol * (1.0 + float(np.linalg.norm(bundle_a.G, 2)))


def nested_over_horizons(system_a: LdtSystem, system_b: LdtSystem, N: int) -> bool:
    """True when S_A(i) ⊆ S_B(i) for every i ≤ N."""
    for bundle_a, bundle_b in zip(gramian_sequence(system_a, N), gramian_sequence(system_b, N)):
        if not feasible_set_containment(bundle_a, bundle_b):
            logger.debug(f"Nesting fails at i={bundle_a.horizon}")
            return False
    return True
