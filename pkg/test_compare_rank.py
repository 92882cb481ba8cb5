#!/usr/bin/env python3
"""
Tests for candidate metric rows and the ranking policies
"""

import sys

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.exceptions import ObservabilityError
from compare_rank import (
    MetricRow,
    RankingMode,
    RankingPolicy,
    compare_systems,
    metric_report,
    normalize_candidates,
    rank_candidates,
)
from conftest import random_stable_system
from lti_model import LdtSystem, NormalizationMode, ScalingDirection, load_system


def make_row(name, vol_error, r_max=1.0, r_min=0.5, F1=None, observable=True):
    return MetricRow(
        candidate=name,
        horizon=6,
        rank=2 if observable else 1,
        observable=observable,
        vol_error=vol_error,
        vol_image=1.0,
        r_min=r_min,
        r_max=r_max,
        det_G=1.0,
        F1=F1,
        analytic_note=None if F1 is not None else "closed-form factors not requested",
    )


def test_constrained_volume_sorts_by_error_volume():
    report = rank_candidates([make_row("a", 3.0), make_row("b", 1.0), make_row("c", 2.0)], RankingPolicy())
    assert [r.candidate for r in report.ranking] == ["b", "c", "a"]
    assert [r.position for r in report.ranking] == [1, 2, 3]
    assert report.tie_breaks == []


def test_ties_break_on_largest_radius_then_name():
    rows = [make_row("z", 1.0, r_max=2.0), make_row("y", 1.0, r_max=1.5), make_row("x", 1.0, r_max=1.5)]
    report = rank_candidates(rows, RankingPolicy())
    assert [r.candidate for r in report.ranking] == ["x", "y", "z"]
    assert [(t.first, t.second, t.decided_by) for t in report.tie_breaks] == [
        ("x", "y", "candidate"),
        ("y", "z", "r_max"),
    ]


def test_floor_excludes_candidates():
    rows = [make_row("thin", 0.5, r_min=0.4), make_row("round", 2.0, r_min=0.8)]
    report = rank_candidates(rows, RankingPolicy(floors={"r_min": 0.5}))
    assert [r.candidate for r in report.ranking] == ["round"]
    assert report.excluded[0].candidate == "thin"
    assert "r_min" in report.excluded[0].reasons[0]


def test_floor_on_unavailable_factor_excludes():
    report = rank_candidates([make_row("a", 1.0), make_row("b", 2.0, F1=0.8)], RankingPolicy(floors={"F1": 0.5}))
    assert [r.candidate for r in report.ranking] == ["b"]
    assert "unavailable" in report.excluded[0].reasons[0]


def test_weighted_sum_uses_median_normalized_metrics():
    rows = [make_row("a", 1.0, r_max=4.0), make_row("b", 2.0, r_max=1.0), make_row("c", 4.0, r_max=2.0)]
    policy = RankingPolicy(mode=RankingMode.WEIGHTED_SUM, weights={"vol_error": 1.0, "r_max": 1.0})
    report = rank_candidates(rows, policy)
    assert [r.candidate for r in report.ranking] == ["b", "a", "c"]
    assert [r.score for r in report.ranking] == pytest.approx([1.5, 2.5, 3.0])


def test_weighted_sum_excludes_missing_metric():
    rows = [make_row("a", 1.0), make_row("b", 2.0, F1=0.5)]
    policy = RankingPolicy(mode=RankingMode.WEIGHTED_SUM, weights={"inv_F1": 1.0})
    report = rank_candidates(rows, policy)
    assert [r.candidate for r in report.ranking] == ["b"]
    assert report.ranking[0].score == pytest.approx(1.0)
    assert [e.candidate for e in report.excluded] == ["a"]


def test_everything_excluded_gives_empty_ranking():
    report = rank_candidates([make_row("a", 1.0, r_min=0.1)], RankingPolicy(floors={"r_min": 1.0}))
    assert report.ranking == []
    assert "excluded" in report.empty_reason
    assert report.to_document()["ranking"] == []


def test_no_candidates_raises():
    with pytest.raises(ObservabilityError):
        rank_candidates([], RankingPolicy())


def test_policy_validation():
    with pytest.raises(ValidationError):
        RankingPolicy(floors={"volume": 1.0})
    with pytest.raises(ValidationError):
        RankingPolicy(floors={"r_min": -1.0})
    with pytest.raises(ValidationError):
        RankingPolicy(mode=RankingMode.WEIGHTED_SUM)
    with pytest.raises(ValidationError):
        RankingPolicy(mode=RankingMode.WEIGHTED_SUM, weights={"vol_error": 0.0})


def test_metric_report_for_observable_system(triangular_system):
    row = metric_report(triangular_system, 6)
    assert row.observable
    assert row.rank == 2
    assert row.r_min <= row.r_max
    assert row.F1 is not None
    assert row.analytic_note is None
    assert row.to_document()["horizon"] == 6


def test_metric_report_notes_multi_output():
    system = random_stable_system(np.random.default_rng(5), 3, m=2)
    row = metric_report(system, None)
    assert row.F1 is None
    assert "single output" in row.analytic_note


def test_metric_report_skips_analytic_when_asked(triangular_system):
    row = metric_report(triangular_system, 6, analytic=False)
    assert row.F1 is None
    assert row.analytic_note == "closed-form factors not requested"


def test_normalize_candidates_uses_each_systems_own_scales(triangular_system):
    rated = LdtSystem(name="rated", A=triangular_system.A, C=triangular_system.C, rated_states=[2.0, 4.0], rated_outputs=[2.0])
    as_given, _ = normalize_candidates([triangular_system, rated], None)
    (scaled,) = normalize_candidates([rated], NormalizationMode.RATED)
    assert np.array_equal(as_given.C, triangular_system.C)
    assert np.allclose(scaled.C, triangular_system.C * np.array([2.0, 4.0]) / 2.0)
    assert np.allclose(scaled.A, [[0.9, -0.33], [0.0, 0.35]])

    (multiplied,) = normalize_candidates([rated], NormalizationMode.RATED, ScalingDirection.PAPER_LITERAL)
    assert np.allclose(multiplied.C, triangular_system.C * np.array([2.0, 4.0]) * 2.0)


def test_unobservable_candidate_ranks_last(triangular_system, diag_system, unobservable_system):
    report = compare_systems([unobservable_system, triangular_system, diag_system], 6, mode=None)
    assert report.ranking[-1].candidate == "unobs"
    assert report.ranking[-1].score == float("inf")
    volumes = [r.row.vol_error for r in report.ranking]
    assert volumes == sorted(volumes)
    assert report.normalization is None


def test_doubling_the_output_shrinks_the_error_set(triangular_system):
    doubled = LdtSystem(name="doubled", A=triangular_system.A, C=2.0 * triangular_system.C)
    report = compare_systems([triangular_system, doubled], 6, mode=None)
    assert [r.candidate for r in report.ranking] == ["doubled", "triangular"]
    assert report.ranking[0].row.vol_error == pytest.approx(report.ranking[1].row.vol_error / 4.0, rel=1e-12)


def test_normalization_removes_output_units(triangular_system):
    plain = LdtSystem(name="plain", A=triangular_system.A, C=triangular_system.C, rated_states=[1.0, 1.0], rated_outputs=[1.0])
    doubled = LdtSystem(
        name="doubled", A=triangular_system.A, C=2.0 * triangular_system.C, rated_states=[1.0, 1.0], rated_outputs=[2.0]
    )
    report = compare_systems([plain, doubled], 6, mode=NormalizationMode.RATED)
    first, second = report.ranking
    assert first.row.vol_error == second.row.vol_error
    assert [t.decided_by for t in report.tie_breaks] == ["candidate"]
    assert report.normalization == "rated/divide_output"


def test_duplicate_names_are_labelled(triangular_system):
    report = compare_systems([triangular_system, triangular_system], 6, mode=None)
    assert sorted(r.candidate for r in report.ranking) == ["triangular", "triangular#2"]


def test_motor_sensor_choice(models_dir):
    systems = [load_system(models_dir / "motor_current.json"), load_system(models_dir / "motor_speed.json")]
    for mode in (NormalizationMode.RATED, NormalizationMode.SHARED_RANGE):
        report = compare_systems(systems, 16, mode=mode)
        assert sorted(r.candidate for r in report.ranking) == ["motor_current", "motor_speed"]
        assert report.ranking[0].row.vol_error <= report.ranking[1].row.vol_error
        assert all(r.row.observable for r in report.ranking)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
