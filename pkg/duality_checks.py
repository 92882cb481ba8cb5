"""
Observability/reachability duality residuals.

For the dual pair Σ(Aᵀ, Cᵀ) the reachability Gramian equals the observability
Gramian, so the error set and the reachability set have reciprocal radii and
vol(S) · vol(R) = H_n².
"""

import logging
from typing import Any, Dict, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from analytic_observability import analytic_infinite_determinant, analytic_reachability_determinant
from app.core.exceptions import AssumptionViolationError
from app.core.settings import settings
from ellipsoid_geometry import error_ellipsoid_metrics, image_ellipsoid_metrics
from gramian_core import Horizon, gramian_at, horizon_label, reachability_gramian
from lti_model import LdtSystem, dualize, ensure_valid

logger = logging.getLogger(__name__)


class DualityReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: str
    horizon: Horizon
    vol_error: float
    vol_reachability: float
    vol_product_residual: float
    radii_residuals: np.ndarray
    image_reachability_residual: float
    analytic_residual: Optional[float] = None
    rank_deficient: bool = False
    annotation: Optional[str] = None
    tol: float
    passed: bool

    def to_document(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "horizon": horizon_label(self.horizon),
            "vol_error": self.vol_error,
            "vol_reachability": self.vol_reachability,
            "vol_product_residual": self.vol_product_residual,
            "radii_residuals": self.radii_residuals.tolist(),
            "image_reachability_residual": self.image_reachability_residual,
            "analytic_residual": self.analytic_residual,
            "rank_deficient": self.rank_deficient,
            "annotation": self.annotation,
            "tol": self.tol,
            "pass": self.passed,
        }


def _analytic_cross_check(system: LdtSystem) -> Optional[float]:
    dual = dualize(system)
    try:
        observed = analytic_infinite_determinant(system)
        reached = analytic_reachability_determinant(dual.A_c, dual.B_c)
    except AssumptionViolationError as e:
        logger.debug(f"Skipping analytic duality cross-check: {e.message}")
        return None
    if observed <= 0.0:
        return None
    return abs(reached - observed) / observed


def verify_duality(system: LdtSystem, N: Horizon, tol: Optional[float] = None) -> DualityReport:
    ensure_valid(system)
    tol = settings.duality_tol if tol is None else tol
    dual = dualize(system)

    observability = gramian_at(system, N)
    reachability = reachability_gramian(dual.A_c, dual.B_c, N)

    error_set = error_ellipsoid_metrics(observability)
    image_set = image_ellipsoid_metrics(observability)
    reach_set = image_ellipsoid_metrics(reachability)
    H_n = error_set.H_n

    analytic_residual = _analytic_cross_check(system) if N is None and system.m == 1 else None

    if not (observability.is_full_rank and reachability.is_full_rank):
        logger.warning(f"'{system.name}' is rank deficient at horizon {horizon_label(N)}; duality volumes are degenerate")
        return DualityReport(
            name=system.name,
            horizon=N,
            vol_error=error_set.volume,
            vol_reachability=reach_set.volume,
            vol_product_residual=float("inf"),
            radii_residuals=np.full(system.n, np.inf),
            image_reachability_residual=float("inf"),
            analytic_residual=analytic_residual,
            rank_deficient=True,
            annotation=f"rank {observability.rank} < n = {system.n}: error set unbounded, reachability set flat",
            tol=tol,
            passed=False,
        )

    vol_product_residual = abs(error_set.volume * reach_set.volume - H_n ** 2) / H_n ** 2
    radii_residuals = np.abs(error_set.radii * reach_set.radii[::-1] - 1.0)
    image_reachability_residual = float(
        np.max(np.abs(image_set.radii - reach_set.radii)) / max(float(np.max(reach_set.radii)), np.finfo(float).tiny)
    )

    passed = (
        vol_product_residual <= tol
        and float(np.max(radii_residuals)) <= tol
        and image_reachability_residual <= tol
    )
    logger.info(
        f"Duality '{system.name}' at horizon {horizon_label(N)}: volume residual {vol_product_residual:.3g}, "
        f"max radius residual {float(np.max(radii_residuals)):.3g}, pass={passed}"
    )
    return DualityReport(
        name=system.name,
        horizon=N,
        vol_error=error_set.volume,
        vol_reachability=reach_set.volume,
        vol_product_residual=float(vol_product_residual),
        radii_residuals=radii_residuals,
        image_reachability_residual=image_reachability_residual,
        analytic_residual=analytic_residual,
        tol=tol,
        passed=passed,
    )
