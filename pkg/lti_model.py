"""
Linear discrete-time system models Σ(A, C).

Holds the plant representation, the bounded noise models, model validation,
rated/shared-range normalization and the observability/reachability dual.
"""

import json
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.core.exceptions import ModelValidationError, NormalizationError

logger = logging.getLogger(__name__)

DOCUMENT_KEYS = ("name", "A", "C", "rated_states", "rated_outputs", "shared_ranges")


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _as_matrix(value: Any) -> np.ndarray:
    return _readonly(np.atleast_2d(np.array(value, dtype=float)))


def _as_vector(value: Any) -> Optional[np.ndarray]:
    if value is None:
        return None
    return _readonly(np.array(value, dtype=float).reshape(-1))


# --- Noise models ---

class NoiseScope(str, Enum):
    PER_SAMPLE = "per_sample"  # bound on every sample w_k
    SEQUENCE = "sequence"      # bound on the stacked sequence W


class NoiseNorm(str, Enum):
    ONE = "one"
    TWO = "two"
    INFINITY = "infinity"


class NoiseModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    scope: NoiseScope = NoiseScope.SEQUENCE
    norm: NoiseNorm = NoiseNorm.TWO
    bound: float = Field(default=1.0, gt=0, allow_inf_nan=False)

    @property
    def supports_ellipsoid(self) -> bool:
        """Only the energy-bounded sequence model has ellipsoid theory."""
        return self.scope == NoiseScope.SEQUENCE and self.norm == NoiseNorm.TWO

    @property
    def label(self) -> str:
        scope = "a" if self.scope == NoiseScope.PER_SAMPLE else "N"
        p = {"one": "1", "two": "2", "infinity": "inf"}[self.norm.value]
        return f"Omega_{{{scope},{p}}}({self.bound:g})"

    def normalized(self) -> "NoiseModel":
        return self.model_copy(update={"bound": 1.0})


# --- System model ---

class LdtSystem(BaseModel):
    """Σ(A, C): x_{k+1} = A x_k, y_k = C x_k (+ w_k)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: str = "system"
    A: np.ndarray
    C: np.ndarray
    rated_states: Optional[np.ndarray] = None
    rated_outputs: Optional[np.ndarray] = None
    shared_ranges: Optional[np.ndarray] = None

    @field_validator("A", "C", mode="before")
    @classmethod
    def _matrix(cls, value):
        return _as_matrix(value)

    @field_validator("rated_states", "rated_outputs", "shared_ranges", mode="before")
    @classmethod
    def _vector(cls, value):
        return _as_vector(value)

    @property
    def n(self) -> int:
        return int(self.A.shape[0])

    @property
    def m(self) -> int:
        return int(self.C.shape[0])

    @classmethod
    def from_document(cls, document: Dict[str, Any], default_name: str = "system") -> "LdtSystem":
        if not isinstance(document, dict):
            raise ModelValidationError("Model document must be a JSON object")

        unknown = sorted(set(document) - set(DOCUMENT_KEYS))
        if unknown:
            logger.warning(f"Ignoring unknown model keys: {', '.join(unknown)}")

        missing = [key for key in ("A", "C") if key not in document]
        if missing:
            raise ModelValidationError(f"Model document is missing required keys: {', '.join(missing)}")

        fields = {key: document[key] for key in DOCUMENT_KEYS if key in document}
        fields.setdefault("name", default_name)
        try:
            return cls(**fields)
        except (ValueError, TypeError) as e:
            raise ModelValidationError(f"Malformed model document: {e}")

    def to_document(self) -> Dict[str, Any]:
        document: Dict[str, Any] = {"name": self.name, "A": self.A.tolist(), "C": self.C.tolist()}
        for key in ("rated_states", "rated_outputs", "shared_ranges"):
            value = getattr(self, key)
            if value is not None:
                document[key] = value.tolist()
        return document


def load_system(path: Union[str, Path]) -> LdtSystem:
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ModelValidationError(f"Model file not found: {path}")
    except json.JSONDecodeError as e:
        raise ModelValidationError(f"Model file {path} is not valid JSON: {e}")
    return LdtSystem.from_document(document, default_name=path.stem)


# --- Validation ---

class IssueCode(str, Enum):
    DIMENSION_MISMATCH = "dimension_mismatch"
    NON_FINITE = "non_finite"
    NON_POSITIVE_RATED = "non_positive_rated"


class ValidationIssue(BaseModel):
    code: IssueCode
    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.code.value} [{self.field}]: {self.message}"


class ValidationReport(BaseModel):
    name: str
    valid: bool
    n: Optional[int] = None
    m: Optional[int] = None
    issues: List[ValidationIssue] = []

    def to_document(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "valid": self.valid,
            "n": self.n,
            "m": self.m,
            "issues": [issue.model_dump(mode="json") for issue in self.issues],
        }


def validate_system(system: LdtSystem) -> ValidationReport:
    """Structural checks on a model; reports problems instead of raising."""
    issues: List[ValidationIssue] = []

    def issue(code: IssueCode, field: str, message: str):
        issues.append(ValidationIssue(code=code, field=field, message=message))

    A, C = system.A, system.C
    n = m = None
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        issue(IssueCode.DIMENSION_MISMATCH, "A", f"state matrix must be square and non-empty, got shape {A.shape}")
    else:
        n = A.shape[0]

    if C.ndim != 2 or C.shape[0] < 1:
        issue(IssueCode.DIMENSION_MISMATCH, "C", f"output matrix must have at least one row, got shape {C.shape}")
    else:
        m = C.shape[0]
        if n is not None and C.shape[1] != n:
            issue(IssueCode.DIMENSION_MISMATCH, "C", f"output matrix has {C.shape[1]} columns, expected {n}")

    for field, matrix in (("A", A), ("C", C)):
        if matrix.size and not np.all(np.isfinite(matrix)):
            issue(IssueCode.NON_FINITE, field, "matrix contains non-finite entries")

    expected = {"rated_states": n, "rated_outputs": m, "shared_ranges": n}
    for field, length in expected.items():
        vector = getattr(system, field)
        if vector is None:
            continue
        if length is not None and vector.shape[0] != length:
            issue(IssueCode.DIMENSION_MISMATCH, field, f"expected {length} entries, got {vector.shape[0]}")
        if not np.all(np.isfinite(vector)):
            issue(IssueCode.NON_FINITE, field, "vector contains non-finite entries")
        elif np.any(vector <= 0):
            issue(IssueCode.NON_POSITIVE_RATED, field, "rated and shared values must be strictly positive")

    report = ValidationReport(name=system.name, valid=not issues, n=n, m=m, issues=issues)
    if issues:
        logger.debug(f"Model '{system.name}' failed validation with {len(issues)} issue(s)")
    return report


def ensure_valid(system: LdtSystem) -> LdtSystem:
    report = validate_system(system)
    if not report.valid:
        raise ModelValidationError(
            f"Model '{system.name}' is invalid: " + "; ".join(str(i) for i in report.issues),
            issues=report.issues,
        )
    return system


# --- Normalization ---

class NormalizationMode(str, Enum):
    RATED = "rated"
    SHARED_RANGE = "shared_range"


class ScalingDirection(str, Enum):
    DIVIDE_OUTPUT = "divide_output"  # C' = diag(y*)^-1 C P, outputs land in [-1, 1]
    PAPER_LITERAL = "paper_literal"  # C' = diag(y*) C P


class NormalizationSpec(BaseModel):
    """Diagonal scalings; positivity and lengths are checked when applied."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mode: NormalizationMode
    state_scale: np.ndarray
    output_scale: np.ndarray
    direction: ScalingDirection = ScalingDirection.DIVIDE_OUTPUT

    @field_validator("state_scale", "output_scale", mode="before")
    @classmethod
    def _vector(cls, value):
        return _as_vector(value)

    @classmethod
    def from_system(
        cls,
        system: LdtSystem,
        mode: NormalizationMode,
        direction: ScalingDirection = ScalingDirection.DIVIDE_OUTPUT,
    ) -> "NormalizationSpec":
        states = system.rated_states if mode == NormalizationMode.RATED else system.shared_ranges
        return cls(
            mode=mode,
            state_scale=states if states is not None else np.ones(system.n),
            output_scale=system.rated_outputs if system.rated_outputs is not None else np.ones(system.m),
            direction=direction,
        )


def _check_scales(system: LdtSystem, spec: NormalizationSpec):
    if spec.state_scale.shape[0] != system.n:
        raise NormalizationError(f"state_scale has {spec.state_scale.shape[0]} entries, expected {system.n}")
    if spec.output_scale.shape[0] != system.m:
        raise NormalizationError(f"output_scale has {spec.output_scale.shape[0]} entries, expected {system.m}")
    for field in ("state_scale", "output_scale"):
        scale = getattr(spec, field)
        if not np.all(np.isfinite(scale)) or np.any(scale <= 0):
            raise NormalizationError(f"{field} entries must be finite and strictly positive")


def _apply_scaling(system: LdtSystem, spec: NormalizationSpec) -> LdtSystem:
    ensure_valid(system)
    _check_scales(system, spec)

    P = spec.state_scale
    # P^-1 A P for diagonal P is an entrywise rescaling
    A_scaled = system.A * P[np.newaxis, :] / P[:, np.newaxis]
    CP = system.C * P[np.newaxis, :]
    y_star = spec.output_scale[:, np.newaxis]
    if spec.direction == ScalingDirection.DIVIDE_OUTPUT:
        C_scaled = CP / y_star
    else:
        C_scaled = CP * y_star

    logger.debug(f"Normalized '{system.name}' ({spec.mode.value}, {spec.direction.value})")
    return LdtSystem(name=system.name, A=A_scaled, C=C_scaled)


def normalize_rated(system: LdtSystem, spec: NormalizationSpec) -> LdtSystem:
    """Σ(P⁻¹AP, C′P) with P = diag(rated state values)."""
    if spec.mode != NormalizationMode.RATED:
        raise NormalizationError(f"normalize_rated needs a rated spec, got {spec.mode.value}")
    return _apply_scaling(system, spec)


def normalize_shared(system: LdtSystem, spec: NormalizationSpec) -> LdtSystem:
    """Σ(P⁻¹AP, C′P) with P = diag(shared target ranges)."""
    if spec.mode != NormalizationMode.SHARED_RANGE:
        raise NormalizationError(f"normalize_shared needs a shared_range spec, got {spec.mode.value}")
    return _apply_scaling(system, spec)


def normalize(system: LdtSystem, spec: NormalizationSpec) -> LdtSystem:
    if spec.mode == NormalizationMode.RATED:
        return normalize_rated(system, spec)
    return normalize_shared(system, spec)


# --- Duality ---

class DualSystem(BaseModel):
    """Reachability-side pair Σ(A_c, B_c) = Σ(Aᵀ, Cᵀ)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: str = "system"
    A_c: np.ndarray
    B_c: np.ndarray

    @field_validator("A_c", mode="before")
    @classmethod
    def _state(cls, value):
        return _as_matrix(value)

    @field_validator("B_c", mode="before")
    @classmethod
    def _input(cls, value):
        array = np.array(value, dtype=float)
        if array.ndim == 1:
            array = array.reshape(-1, 1)
        return _readonly(array)

    @property
    def n(self) -> int:
        return int(self.A_c.shape[0])


def dualize(system: Union[LdtSystem, DualSystem]) -> Union[DualSystem, LdtSystem]:
    if isinstance(system, DualSystem):
        return LdtSystem(name=system.name, A=system.A_c.T, C=system.B_c.T)
    ensure_valid(system)
    return DualSystem(name=system.name, A_c=system.A.T, B_c=system.C.T)
