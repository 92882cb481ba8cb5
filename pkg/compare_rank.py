"""
Comparison of candidate output configurations by observe ability.

Candidates are normalized, reduced to metric rows (error-ellipsoid volume,
radii, Gramian determinant and, when the closed form applies, shape factors)
and ranked: a smaller error ellipsoid means a stronger ability to observe.
"""

import logging
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from analytic_observability import shape_factors
from app.core.exceptions import AssumptionViolationError, ObservabilityError
from ellipsoid_geometry import error_ellipsoid_metrics, image_ellipsoid_metrics
from gramian_core import Horizon, gramian_at, horizon_label
from lti_model import (
    LdtSystem,
    NormalizationMode,
    NormalizationSpec,
    ScalingDirection,
    ensure_valid,
    normalize,
)

logger = logging.getLogger(__name__)

FLOOR_KEYS = ("r_min", "r_max", "F1", "F2", "F3")
WEIGHT_KEYS = ("vol_error", "r_max", "inv_F1")


class RankingMode(str, Enum):
    CONSTRAINED_VOLUME = "constrained_volume"
    WEIGHTED_SUM = "weighted_sum"


class RankingPolicy(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: RankingMode = RankingMode.CONSTRAINED_VOLUME
    floors: Dict[str, float] = {}
    weights: Dict[str, float] = {}

    @field_validator("floors")
    @classmethod
    def _check_floors(cls, floors):
        for key, value in floors.items():
            if key not in FLOOR_KEYS:
                raise ValueError(f"unknown floor '{key}', expected one of {', '.join(FLOOR_KEYS)}")
            if value < 0:
                raise ValueError(f"floor '{key}' must be nonnegative")
        return floors

    @field_validator("weights")
    @classmethod
    def _check_weights(cls, weights):
        for key, value in weights.items():
            if key not in WEIGHT_KEYS:
                raise ValueError(f"unknown weight '{key}', expected one of {', '.join(WEIGHT_KEYS)}")
            if value < 0:
                raise ValueError(f"weight '{key}' must be nonnegative")
        return weights

    @model_validator(mode="after")
    def _weighted_needs_weight(self):
        if self.mode == RankingMode.WEIGHTED_SUM and not any(v > 0 for v in self.weights.values()):
            raise ValueError("weighted_sum ranking needs at least one positive weight")
        return self


class MetricRow(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    candidate: str
    horizon: Horizon
    rank: int
    observable: bool
    vol_error: float
    vol_image: float
    r_min: float
    r_max: float
    det_G: float
    F1: Optional[float] = None
    F2: Optional[np.ndarray] = None
    F3: Optional[np.ndarray] = None
    analytic_note: Optional[str] = None
    constraint_violations: List[str] = []

    def to_document(self) -> Dict[str, Any]:
        def listed(value):
            return None if value is None else value.tolist()

        return {
            "candidate": self.candidate,
            "horizon": horizon_label(self.horizon),
            "rank": self.rank,
            "observable": self.observable,
            "vol_error": self.vol_error,
            "vol_image": self.vol_image,
            "r_min": self.r_min,
            "r_max": self.r_max,
            "det_G": self.det_G,
            "F1": self.F1,
            "F2": listed(self.F2),
            "F3": listed(self.F3),
            "analytic_note": self.analytic_note,
            "constraint_violations": self.constraint_violations,
        }


class RankedCandidate(BaseModel):
    position: int
    candidate: str
    score: float
    row: MetricRow


class ExcludedCandidate(BaseModel):
    candidate: str
    reasons: List[str]


class TieBreak(BaseModel):
    first: str
    second: str
    decided_by: str


class ComparisonReport(BaseModel):
    mode: RankingMode
    horizon: Horizon = None
    normalization: Optional[str] = None
    ranking: List[RankedCandidate] = []
    excluded: List[ExcludedCandidate] = []
    tie_breaks: List[TieBreak] = []
    empty_reason: Optional[str] = None

    def to_document(self) -> Dict[str, Any]:
        return {
            "mode": self.mode.value,
            "horizon": horizon_label(self.horizon),
            "normalization": self.normalization,
            "ranking": [
                {"position": r.position, "candidate": r.candidate, "score": r.score, **r.row.to_document()}
                for r in self.ranking
            ],
            "excluded": [e.model_dump() for e in self.excluded],
            "tie_breaks": [t.model_dump() for t in self.tie_breaks],
            "empty_reason": self.empty_reason,
        }


def metric_report(system: LdtSystem, horizon: Horizon, analytic: bool = True) -> MetricRow:
    ensure_valid(system)
    bundle = gramian_at(system, horizon)
    error_set = error_ellipsoid_metrics(bundle)
    image_set = image_ellipsoid_metrics(bundle)

    factors = dict(F1=None, F2=None, F3=None, analytic_note="closed-form factors not requested")
    if analytic:
        try:
            report = shape_factors(system)
            factors = dict(F1=report.F1, F2=report.F2, F3=report.F3, analytic_note=report.unavailable_reason)
        except AssumptionViolationError as e:
            logger.warning(f"Closed-form factors unavailable for '{system.name}': {e.message}")
            factors["analytic_note"] = e.message

    return MetricRow(
        candidate=system.name,
        horizon=horizon,
        rank=bundle.rank,
        observable=bundle.is_full_rank,
        vol_error=error_set.volume,
        vol_image=image_set.volume,
        r_min=error_set.r_min,
        r_max=error_set.r_max,
        det_G=bundle.determinant,
        **factors,
    )


def _floor_value(row: MetricRow, key: str) -> Optional[float]:
    if key in ("r_min", "r_max", "F1"):
        return getattr(row, key)
    vector = getattr(row, key)
    return None if vector is None else float(np.min(vector))


def _floor_violations(row: MetricRow, floors: Dict[str, float]) -> List[str]:
    violations = []
    for key, floor in sorted(floors.items()):
        value = _floor_value(row, key)
        if value is None:
            violations.append(f"{key} unavailable ({row.analytic_note})")
        elif value < floor:
            violations.append(f"{key} = {value:.6g} below floor {floor:.6g}")
    return violations


def _metric_value(row: MetricRow, key: str) -> Optional[float]:
    if key == "inv_F1":
        if row.F1 is None:
            return None
        return float("inf") if row.F1 == 0 else 1.0 / row.F1
    return getattr(row, key)


def _weighted_scores(rows: List[MetricRow], weights: Dict[str, float]) -> List[float]:
    scores = [0.0] * len(rows)
    for key, weight in sorted(weights.items()):
        if weight <= 0:
            continue
        values = [_metric_value(row, key) for row in rows]
        finite = [v for v in values if np.isfinite(v)]
        median = float(np.median(finite)) if finite else 1.0
        if median <= 0:
            median = 1.0
        for i, value in enumerate(values):
            scores[i] += weight * value / median
    return scores


def rank_candidates(rows: Sequence[MetricRow], policy: RankingPolicy, horizon: Horizon = None) -> ComparisonReport:
    if not rows:
        raise ObservabilityError("At least one candidate is required for ranking")

    kept: List[MetricRow] = []
    excluded: List[ExcludedCandidate] = []
    for row in rows:
        reasons = _floor_violations(row, policy.floors)
        if policy.mode == RankingMode.WEIGHTED_SUM:
            reasons += [
                f"{key} unavailable ({row.analytic_note})"
                for key, weight in sorted(policy.weights.items())
                if weight > 0 and _metric_value(row, key) is None
            ]
        if reasons:
            logger.warning(f"Excluding candidate '{row.candidate}': {'; '.join(reasons)}")
            excluded.append(ExcludedCandidate(candidate=row.candidate, reasons=reasons))
        else:
            kept.append(row)

    if not kept:
        return ComparisonReport(
            mode=policy.mode,
            horizon=horizon,
            excluded=excluded,
            empty_reason=f"all {len(rows)} candidate(s) were excluded by the ranking policy",
        )

    if policy.mode == RankingMode.CONSTRAINED_VOLUME:
        scores = [row.vol_error for row in kept]
    else:
        scores = _weighted_scores(kept, policy.weights)
    scores = [float("inf") if np.isnan(s) else float(s) for s in scores]

    order = sorted(range(len(kept)), key=lambda i: (scores[i], kept[i].r_max, kept[i].candidate))
    ranking = [
        RankedCandidate(position=position + 1, candidate=kept[i].candidate, score=scores[i], row=kept[i])
        for position, i in enumerate(order)
    ]

    tie_breaks = []
    for previous, current in zip(ranking, ranking[1:]):
        if previous.score == current.score:
            decided_by = "r_max" if previous.row.r_max != current.row.r_max else "candidate"
            tie_breaks.append(TieBreak(first=previous.candidate, second=current.candidate, decided_by=decided_by))

    logger.info(f"Ranked {len(ranking)} candidate(s), excluded {len(excluded)}; best is '{ranking[0].candidate}'")
    return ComparisonReport(
        mode=policy.mode,
        horizon=horizon,
        ranking=ranking,
        excluded=excluded,
        tie_breaks=tie_breaks,
    )


def normalize_candidates(
    systems: Sequence[LdtSystem],
    mode: Optional[NormalizationMode],
    direction: ScalingDirection = ScalingDirection.DIVIDE_OUTPUT,
) -> List[LdtSystem]:
    """Put every candidate in its own normalized coordinates; None leaves them as given."""
    if mode is None:
        return [ensure_valid(system) for system in systems]
    return [normalize(system, NormalizationSpec.from_system(system, mode, direction)) for system in systems]


def _unique_labels(systems: Sequence[LdtSystem]) -> List[LdtSystem]:
    seen: Dict[str, int] = {}
    labelled = []
    for system in systems:
        count = seen.get(system.name, 0) + 1
        seen[system.name] = count
        labelled.append(system if count == 1 else system.model_copy(update={"name": f"{system.name}#{count}"}))
    return labelled


def compare_systems(
    systems: Sequence[LdtSystem],
    horizon: Horizon,
    policy: Optional[RankingPolicy] = None,
    analytic: bool = True,
    mode: Optional[NormalizationMode] = NormalizationMode.RATED,
    direction: ScalingDirection = ScalingDirection.DIVIDE_OUTPUT,
) -> ComparisonReport:
    policy = policy or RankingPolicy()
    candidates = _unique_labels(normalize_candidates(systems, mode, direction))
    rows = [metric_report(system, horizon, analytic) for system in candidates]
    report = rank_candidates(rows, policy, horizon)
    return report.model_copy(update={"normalization": None if mode is None else f"{mode.value}/{direction.value}"})
