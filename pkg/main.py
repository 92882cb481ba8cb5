"""
Command-line entry point for observability ellipsoid analysis.

Usage:
    python main.py validate models/triangular.json
    python main.py analyze models/triangular.json --steps 6
    python main.py analyze models/diag.json --infinite --analytic
    python main.py factors models/diag.json
    python main.py dual models/triangular.json --steps 6
    python main.py boundary models/triangular.json --steps 2 --samples 64 --set both
    python main.py bench models/triangular.json --steps 6 --trials 10000 --seed 42
    python main.py compare models/motor_current.json models/motor_speed.json --infinite
    python main.py minsamples models/diag.json --target 0,0.5 --max-steps 50

Exit codes: 0 success, 2 input/usage error, 3 observability requirement failed,
4 analytic or convergence assumption violated.
"""

import argparse
import csv
import io
import json
import logging
import sys
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import ValidationError

from analytic_observability import eigen_structure, shape_factors
from app.core.exceptions import AssumptionViolationError, ObservabilityError, UnobservableError
from app.core.settings import settings
from compare_rank import RankingPolicy, compare_systems
from duality_checks import verify_duality
from ellipsoid_geometry import (
    Ellipsoid,
    EllipsoidKind,
    boundary_sweep,
    bounding_box_half_widths,
    error_ellipsoid_metrics,
    feasible_error_scale,
    image_ellipsoid_metrics,
    min_samples_for_error,
)
from estimation_bench import BenchConfig, SamplingMode, run_containment_experiment, write_trials_csv
from gramian_core import gramian_at, horizon_label
from lti_model import (
    LdtSystem,
    NoiseModel,
    NormalizationMode,
    NormalizationSpec,
    ScalingDirection,
    ensure_valid,
    load_system,
    normalize,
    validate_system,
)

logger = logging.getLogger(__name__)

NORMALIZE_CHOICES = {"none": None, "rated": NormalizationMode.RATED, "shared": NormalizationMode.SHARED_RANGE}


# --- Output ---

def to_jsonable(value: Any) -> Any:
    """Strict-JSON view: non-finite floats as strings, complex as {re, im}."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, complex):
        return {"re": to_jsonable(value.real), "im": to_jsonable(value.imag)}
    if isinstance(value, float):
        if np.isnan(value):
            return "nan"
        if np.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return str(value)


def _csv_cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".9g")
    if value is None:
        return ""
    return str(value)


def _emit(args: argparse.Namespace, document: Dict[str, Any], csv_header: List[str] = None, csv_rows: List[list] = None):
    if args.format == "csv" and csv_header is not None:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(csv_header)
        for row in csv_rows or []:
            writer.writerow([_csv_cell(cell) for cell in row])
        text = buffer.getvalue()
    else:
        payload = {"schema_version": settings.schema_version, "command": args.command, **document}
        text = json.dumps(to_jsonable(payload), indent=2, allow_nan=False) + "\n"

    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        logger.info(f"Wrote {args.command} report to {args.output}")
    else:
        sys.stdout.write(text)


# --- Argument helpers ---

def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def _horizon(args: argparse.Namespace) -> Optional[int]:
    if getattr(args, "infinite", False):
        return None
    if args.steps < 1:
        raise ObservabilityError(f"--steps must be at least 1, got {args.steps}")
    return args.steps


def _normalization(args: argparse.Namespace, default: str = "none") -> Optional[NormalizationMode]:
    return NORMALIZE_CHOICES[args.normalize or default]


def _load(args: argparse.Namespace, path: str) -> LdtSystem:
    system = ensure_valid(load_system(path))
    mode = _normalization(args)
    if mode is None:
        return system
    direction = ScalingDirection(args.direction)
    return normalize(system, NormalizationSpec.from_system(system, mode, direction))


# --- Commands ---

def cmd_validate(args: argparse.Namespace) -> int:
    reports = [validate_system(load_system(path)).to_document() for path in args.models]
    invalid = [r["name"] for r in reports if not r["valid"]]
    _emit(args, {"reports": reports})
    if invalid:
        logger.warning(f"Invalid model(s): {', '.join(invalid)}")
        return 2
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    system = _load(args, args.model)
    horizon = _horizon(args)
    bundle = gramian_at(system, horizon)
    error_set = error_ellipsoid_metrics(bundle)
    image_set = image_ellipsoid_metrics(bundle)

    document: Dict[str, Any] = {
        "name": system.name,
        "n": system.n,
        "m": system.m,
        "verdict": "observable" if bundle.is_full_rank else "unobservable",
        "gramian": bundle.to_document(),
        "error_ellipsoid": error_set.to_document(),
        "image_ellipsoid": image_set.to_document(),
    }
    if bundle.is_full_rank:
        box = bounding_box_half_widths(Ellipsoid.from_bundle(bundle))
        document["error_bounding_box"] = box.tolist()
    else:
        logger.warning(f"'{system.name}' is unobservable at horizon {horizon_label(horizon)}")

    if args.noise_bound is not None:
        scale = feasible_error_scale(NoiseModel(bound=args.noise_bound))
        document["feasible_error_set"] = error_ellipsoid_metrics(bundle, scale=scale).to_document()

    if args.analytic:
        try:
            report = shape_factors(system)
            analytic = report.to_document()
            if report.analytic_det is not None and horizon is None and bundle.determinant > 0:
                analytic["residual_vs_numeric"] = abs(report.analytic_det - bundle.determinant) / bundle.determinant
            document["analytic"] = analytic
        except AssumptionViolationError as e:
            if horizon is None:
                raise
            logger.warning(f"Closed-form factors unavailable: {e.message}")
            document["analytic"] = {"unavailable_reason": e.message}

    if args.require_observable and not bundle.is_full_rank:
        _emit(args, document)
        raise UnobservableError(f"'{system.name}' is not observable (rank {bundle.rank} < {system.n})")

    rows = [["rank", bundle.rank], ["observable", bundle.is_full_rank], ["determinant", bundle.determinant],
            ["min_eig", bundle.min_eig], ["max_eig", bundle.max_eig],
            ["vol_error", error_set.volume], ["vol_image", image_set.volume]]
    rows += [[f"r_error_{i + 1}", r] for i, r in enumerate(error_set.radii)]
    rows += [[f"r_image_{i + 1}", r] for i, r in enumerate(image_set.radii)]
    _emit(args, document, ["quantity", "value"], rows)
    return 0


def cmd_factors(args: argparse.Namespace) -> int:
    system = _load(args, args.model)
    report = shape_factors(system)
    structure = eigen_structure(system)
    document = {"factors": report.to_document(), "eigen_structure": structure.to_document()}
    F2 = report.F2 if report.F2 is not None else [None] * system.n
    rows = [
        [i + 1, complex(lam).real, complex(lam).imag, abs(lam), f2, f3]
        for i, (lam, f2, f3) in enumerate(zip(report.eigenvalues, F2, report.F3))
    ]
    _emit(args, document, ["mode", "eigen_re", "eigen_im", "modulus", "F2", "F3"], rows)
    return 0


def cmd_dual(args: argparse.Namespace) -> int:
    system = _load(args, args.model)
    report = verify_duality(system, _horizon(args), args.tol)
    rows = [[i + 1, r] for i, r in enumerate(report.radii_residuals)]
    _emit(args, report.to_document(), ["index", "radius_residual"], rows)
    if args.require_observable and report.rank_deficient:
        raise UnobservableError(f"'{system.name}' is rank deficient; duality volumes are degenerate")
    return 0


def cmd_boundary(args: argparse.Namespace) -> int:
    system = _load(args, args.model)
    if system.n != 2:
        raise ObservabilityError(f"Boundary export needs a 2-state model, '{system.name}' has n={system.n}")
    bundle = gramian_at(system, _horizon(args))
    if not bundle.is_full_rank:
        raise UnobservableError(f"'{system.name}' is unobservable; the error set has no finite boundary")

    kinds = {"error": [EllipsoidKind.ERROR_SET], "image": [EllipsoidKind.IMAGE_SET],
             "both": [EllipsoidKind.ERROR_SET, EllipsoidKind.IMAGE_SET]}[args.set]
    rows = []
    for kind in kinds:
        points = boundary_sweep(Ellipsoid.from_bundle(bundle, kind), args.samples)
        label = "error" if kind == EllipsoidKind.ERROR_SET else "image"
        rows += [[label, float(x1), float(x2)] for x1, x2 in points]

    document = {
        "name": system.name,
        "horizon": horizon_label(bundle.horizon),
        "points": [{"set": s, "x1": x1, "x2": x2} for s, x1, x2 in rows],
    }
    _emit(args, document, ["set", "x1", "x2"], rows)
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    if args.infinite:
        raise ObservabilityError("The bench runs at a finite horizon; use --steps")
    system = _load(args, args.model)
    cfg = BenchConfig(
        trials=args.trials,
        seed=args.seed,
        horizon=_horizon(args),
        noise=NoiseModel(bound=args.noise_bound),
        sampling=SamplingMode(args.sampling),
        workers=args.workers or settings.bench_workers,
        keep_trials=bool(args.trials_csv),
    )
    result = run_containment_experiment(system, cfg)
    if args.trials_csv:
        write_trials_csv(result, args.trials_csv)
    document = result.to_document()
    rows = [[key, value] for key, value in document.items() if not isinstance(value, (list, dict))]
    _emit(args, document, ["quantity", "value"], rows)
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    if len(args.models) < 2:
        raise ObservabilityError("compare needs at least two model files")
    systems = [ensure_valid(load_system(path)) for path in args.models]
    policy = RankingPolicy()
    if args.policy:
        try:
            policy = RankingPolicy(**json.loads(Path(args.policy).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as e:
            raise ObservabilityError(f"Cannot read ranking policy {args.policy}: {e}")

    report = compare_systems(
        systems,
        _horizon(args),
        policy,
        analytic=args.analytic,
        mode=_normalization(args, default="rated"),
        direction=ScalingDirection(args.direction),
    )
    if report.empty_reason:
        logger.warning(f"Empty ranking: {report.empty_reason}")
    rows = [[r.position, r.candidate, r.score, r.row.vol_error, r.row.r_min, r.row.r_max, r.row.det_G, r.row.F1]
            for r in report.ranking]
    _emit(args, report.to_document(),
          ["position", "candidate", "score", "vol_error", "r_min", "r_max", "det_G", "F1"], rows)
    return 0


def cmd_minsamples(args: argparse.Namespace) -> int:
    system = _load(args, args.model)
    N = min_samples_for_error(system, args.target, args.max_steps)
    document = {"name": system.name, "target": args.target, "max_steps": args.max_steps, "min_samples": N}
    _emit(args, document, ["name", "min_samples"], [[system.name, N]])
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "analyze": cmd_analyze,
    "factors": cmd_factors,
    "dual": cmd_dual,
    "boundary": cmd_boundary,
    "bench": cmd_bench,
    "compare": cmd_compare,
    "minsamples": cmd_minsamples,
}


# --- Parser ---

def _add_format(parser: argparse.ArgumentParser, default: str = "json"):
    parser.add_argument("--format", choices=["json", "csv"], default=default,
                        help=f"Output format (default: {default})")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--steps", type=int, default=settings.default_steps,
                        help=f"Horizon N (default: {settings.default_steps})")
    common.add_argument("--infinite", action="store_true", help="Use the infinite horizon")
    common.add_argument("--output", help="Write the report to a file instead of stdout")
    common.add_argument("--tol", type=float, help="Tolerance override")
    common.add_argument("--normalize", choices=list(NORMALIZE_CHOICES),
                        help="Normalization before analysis (default: none; rated for compare)")
    common.add_argument("--direction", choices=[d.value for d in ScalingDirection],
                        default=ScalingDirection.DIVIDE_OUTPUT.value, help="Output scaling direction")
    common.add_argument("--require-observable", action="store_true", help="Exit 3 when the system is unobservable")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    common.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only")

    parser = argparse.ArgumentParser(prog="observe", description="Observability ellipsoid analysis for LTI models")
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    validate_parser = subparsers.add_parser("validate", parents=[common], help="Validate model files")
    _add_format(validate_parser)
    validate_parser.add_argument("models", nargs="+")

    analyze_parser = subparsers.add_parser("analyze", parents=[common], help="Gramian and ellipsoid metrics")
    _add_format(analyze_parser)
    analyze_parser.add_argument("model")
    analyze_parser.add_argument("--analytic", action="store_true", help="Add closed-form shape factors")
    analyze_parser.add_argument("--noise-bound", type=float, help="Report the feasible error set for ||W||_2 <= s")

    factors_parser = subparsers.add_parser("factors", parents=[common], help="Closed-form shape factors")
    _add_format(factors_parser)
    factors_parser.add_argument("model")

    dual_parser = subparsers.add_parser("dual", parents=[common], help="Observability/reachability duality check")
    _add_format(dual_parser)
    dual_parser.add_argument("model")

    boundary_parser = subparsers.add_parser("boundary", parents=[common], help="2-D boundary points for plotting")
    _add_format(boundary_parser, "csv")
    boundary_parser.add_argument("model")
    boundary_parser.add_argument("--samples", type=int, default=settings.boundary_samples)
    boundary_parser.add_argument("--set", choices=["error", "image", "both"], default="error")

    bench_parser = subparsers.add_parser("bench", parents=[common], help="Monte-Carlo containment experiment")
    _add_format(bench_parser)
    bench_parser.add_argument("model")
    bench_parser.add_argument("--trials", type=int, default=1000)
    bench_parser.add_argument("--seed", type=int, default=0)
    bench_parser.add_argument("--sampling", choices=[s.value for s in SamplingMode], default="boundary")
    bench_parser.add_argument("--noise-bound", type=float, default=1.0)
    bench_parser.add_argument("--workers", type=int)
    bench_parser.add_argument("--trials-csv", help="Write per-trial records to this CSV file")

    compare_parser = subparsers.add_parser("compare", parents=[common], help="Rank candidate models")
    _add_format(compare_parser)
    compare_parser.add_argument("models", nargs="+")
    compare_parser.add_argument("--policy", help="Ranking policy JSON file")
    compare_parser.add_argument("--no-analytic", dest="analytic", action="store_false",
                                help="Skip closed-form shape factors")

    minsamples_parser = subparsers.add_parser("minsamples", parents=[common], help="Fewest samples excluding a target error")
    _add_format(minsamples_parser)
    minsamples_parser.add_argument("model")
    minsamples_parser.add_argument("--target", type=_float_list, required=True, help="Target error e_b, e.g. 0,0.5")
    minsamples_parser.add_argument("--max-steps", type=int, default=1000)

    return parser


def _configure_logging(args: argparse.Namespace):
    if getattr(args, "verbose", False):
        level = logging.DEBUG
    elif getattr(args, "quiet", False):
        level = logging.WARNING
    else:
        level = getattr(logging, str(settings.log_level).upper(), logging.INFO)
    if not logging.getLogger().hasHandlers():
        logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(level)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 0

    _configure_logging(args)
    logger.info(f"Running '{args.command}'")
    try:
        return COMMANDS[args.command](args)
    except ObservabilityError as e:
        logger.debug(f"{type(e).__name__}: {e.details}")
        print(f"Error: {e.message}", file=sys.stderr)
        return e.exit_code
    except ValidationError as e:
        print(f"Error: invalid arguments: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
