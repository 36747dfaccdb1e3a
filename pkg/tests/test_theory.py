from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import pytest

from app.services.network import ActivationKind, LayerSpec, NetworkParams, forward, init_network
from app.services.theory import (
    TheoryReport,
    analytic_gradients,
    gradient_check,
    lemma1_decompose,
    numeric_gradients,
    random_case,
    run_all_suites,
    run_gradient_suite,
    run_lemma1_suite,
    run_theorem1_suite,
    run_theorem2_suite,
    theorem1_gap,
    theorem2_descent,
    write_report_csv,
)


def scalar_net(w: float) -> NetworkParams:
    return NetworkParams(specs=(LayerSpec(1, 1, ActivationKind.IDENTITY),), weights=(np.array([[w]]),), bias=False)


def test_gradient_check_linear_nets_are_exact() -> None:
    rng = np.random.default_rng(0)
    for _ in range(10):
        case = random_case(rng, max_depth=2, max_width=4, linear=True)
        assert gradient_check(case.params, case.x, case.action, case.target) < 1e-9


def test_gradient_check_tanh_nets() -> None:
    rng = np.random.default_rng(1)
    for _ in range(20):
        case = random_case(rng)
        assert gradient_check(case.params, case.x, case.action, case.target) < 1e-4


def test_zero_input_without_bias_gives_zero_gradients() -> None:
    specs = [LayerSpec(3, 4, ActivationKind.TANH), LayerSpec(4, 2)]
    params = init_network(specs, seed=4, bias=False)
    x = np.zeros(3)
    analytic = analytic_gradients(params, x, 1, 2.0)
    numeric = numeric_gradients(params, x, 1, 2.0)
    for layer, shape in enumerate([(3, 4), (4, 2)]):
        np.testing.assert_array_equal(analytic[layer], np.zeros(shape))
        np.testing.assert_array_equal(numeric[layer], np.zeros(shape))


def test_lemma1_scalar_hand_case() -> None:
    result = lemma1_decompose(scalar_net(2.0), np.array([1.0]), 0, 3.0)
    assert result.h == pytest.approx(0.5)
    assert result.trace_sum == pytest.approx(1.0)
    assert result.xi == pytest.approx(-0.5)
    regularized = lemma1_decompose(scalar_net(2.0), np.array([1.0]), 0, 3.0, lambdas=0.1)
    assert regularized.h == pytest.approx(0.5 + 0.1 * 0.5 * 4.0)


def test_lemma1_zero_error_has_zero_residual() -> None:
    rng = np.random.default_rng(2)
    case = random_case(rng)
    y_hat = forward(case.params, case.x).output[0]
    result = lemma1_decompose(case.params, case.x, case.action, float(y_hat[case.action]))
    assert result.h == 0.0
    assert result.trace_sum == 0.0
    assert result.xi == 0.0


def test_lemma1_identity_closes_on_random_cases() -> None:
    rng = np.random.default_rng(3)
    for _ in range(10):
        case = random_case(rng)
        lambdas = list(rng.uniform(0.0, 1e-2, size=case.params.depth))
        result = lemma1_decompose(case.params, case.x, case.action, case.target, lambdas)
        assert abs(result.h - (result.trace_sum + result.xi)) <= 1e-12 * max(1.0, abs(result.h))


def test_theorem1_without_perturbation_has_no_gap() -> None:
    case = random_case(np.random.default_rng(5))
    result = theorem1_gap(case.params, case.x, case.action, case.target, 0.0)
    assert result.s_gap == 0.0
    assert result.s_bound == 0.0
    assert result.gap == result.xi_norm
    assert result.preconditions_ok


def test_theorem1_bound_and_linearity() -> None:
    rng = np.random.default_rng(6)
    for _ in range(10):
        case = random_case(rng)
        for s in (0.01, 0.1, 0.5):
            result = theorem1_gap(case.params, case.x, case.action, case.target, s)
            doubled = theorem1_gap(case.params, case.x, case.action, case.target, 2.0 * s)
            assert result.s_gap <= result.s_bound + 1e-9
            assert result.gap <= result.bound + 1e-9
            assert doubled.s_gap == pytest.approx(2.0 * result.s_gap, rel=1e-7, abs=1e-12)


def test_theorem2_scalar_hand_case() -> None:
    result = theorem2_descent(scalar_net(2.0), np.array([1.0]), 0, 3.0, s=0.5, c=1e-3)
    assert result.v1 == pytest.approx(1.0)
    assert result.v2 == pytest.approx(0.5)
    assert result.v3 == pytest.approx(2e-3)
    assert result.alpha_threshold == pytest.approx(2.0 / 1.502, rel=1e-9)
    assert result.first_difference == pytest.approx(-0.5, rel=1e-6)


def test_theorem2_zero_error_is_stationary() -> None:
    case = random_case(np.random.default_rng(7))
    y_hat = forward(case.params, case.x).output[0]
    result = theorem2_descent(case.params, case.x, case.action, float(y_hat[case.action]), s=0.3)
    assert (result.v1, result.v2, result.v3) == (0.0, 0.0, 0.0)
    assert result.first_difference == 0.0


def test_suites_pass_on_small_trial_counts() -> None:
    _, gradient = run_gradient_suite(5, seed=0)
    _, lemma = run_lemma1_suite(5, seed=1)
    rows, theorem1 = run_theorem1_suite(4, seed=2)
    assert gradient.ok and lemma.ok and theorem1.ok
    assert theorem1.trials == 12
    assert rows[-1].suite == "theorem1_expectation"
    assert rows[-1].samples == 4


def test_theorem2_suite_terms_are_non_negative() -> None:
    rows, summary = run_theorem2_suite(8, seed=3)
    assert summary.trials == 8
    assert all(row.v1 >= 0.0 and row.v2 >= -1e-12 and row.v3 >= 0.0 for row in rows)
    assert summary.pass_fraction >= 0.75


def test_full_size_suites_meet_their_pass_rates() -> None:
    report = run_all_suites(200, seed=0)
    summaries = {summary.name: summary for summary in report.summaries}
    assert set(summaries) == {"gradient", "lemma1", "theorem1", "theorem2"}
    assert summaries["theorem1"].required_fraction == 1.0
    assert summaries["theorem1"].pass_fraction == 1.0
    assert summaries["theorem2"].required_fraction == 0.99
    assert summaries["theorem2"].trials == 200
    assert summaries["theorem2"].pass_fraction >= 0.99
    assert report.passed, report.failed_suites


def test_zero_tolerance_fails_the_gradient_suite() -> None:
    _, summary = run_gradient_suite(3, seed=0, tol=0.0)
    assert not summary.ok
    report = TheoryReport(summaries=[summary])
    assert report.failed_suites == ["gradient"]
    assert not report.passed


def test_report_csv_columns(tmp_path: Path) -> None:
    rows, summary = run_lemma1_suite(2, seed=0)
    path = tmp_path / "verify" / "report.csv"
    write_report_csv(path, TheoryReport(rows=rows, summaries=[summary]))
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        written = list(reader)
    assert reader.fieldnames[:4] == ["suite", "trial", "seed", "passed"]
    assert [row["suite"] for row in written] == ["lemma1", "lemma1"]
    assert written[0]["eta"] == ""
