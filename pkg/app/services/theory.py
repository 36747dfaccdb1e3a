from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import numpy.typing as npt

from app.schemas import SuiteSummary, TheoryRow
from app.services.linalg import Matrix
from app.services.network import (
    ActivationKind,
    LayerSpec,
    NetworkParams,
    apply_update,
    compute_transform,
    edl_feedback,
    feedback_context,
    forward,
    gradient_feedback,
    init_network,
    layer_cost,
    layer_lambdas,
    regularized_empirical_cost,
    signed_lambdas,
    td_error,
    total_cost,
)

logger = logging.getLogger(__name__)

GRADIENT_TOL = 1e-4
LEMMA_TOL = 1e-12
THEOREM1_SLACK = 1e-9
THEOREM2_FLOOR = 1e-12
FD_STEP = 1e-5
ALPHA_START = 1e-3
ALPHA_CAP = 1e6
BISECTION_STEPS = 60
THEOREM1_S_VALUES = (0.01, 0.1, 0.5)
EXPECTATION_SIGMAS = 4.0


@dataclass(frozen=True)
class TheoryCase:
    params: NetworkParams
    x: npt.NDArray[np.float64]
    action: int
    target: float


@dataclass(frozen=True)
class Lemma1Result:
    h: float
    trace_sum: float
    xi: float


@dataclass(frozen=True)
class Theorem1Result:
    gap: float
    bound: float
    xi_norm: float
    h: float
    edl_cost: float
    edl_cost_zero: float
    s_gap: float
    s_bound: float
    depth: int
    eta: int
    weight_bound: float
    eps_norm: float
    preconditions_ok: bool
    detail: str = ""


@dataclass(frozen=True)
class Theorem2Result:
    v1: float
    v2: float
    v3: float
    alpha_threshold: float
    alpha: float
    first_difference: float


@dataclass
class TheoryReport:
    rows: list[TheoryRow] = field(default_factory=list)
    summaries: list[SuiteSummary] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(summary.ok for summary in self.summaries)

    @property
    def failed_suites(self) -> list[str]:
        return [summary.name for summary in self.summaries if not summary.ok]


def random_case(
    rng: np.random.Generator,
    max_depth: int = 3,
    max_width: int = 16,
    linear: bool = False,
    bias: bool = True,
) -> TheoryCase:
    depth = int(rng.integers(1, max_depth + 1))
    dims = [int(width) for width in rng.integers(1, max_width + 1, size=depth)]
    dims.append(int(rng.integers(1, 5)))
    hidden_kind = ActivationKind.IDENTITY if linear else ActivationKind.TANH
    specs = [
        LayerSpec(dims[i], dims[i + 1], hidden_kind if i < depth - 1 else ActivationKind.IDENTITY)
        for i in range(depth)
    ]
    params = init_network(specs, seed=int(rng.integers(2**31)), bias=bias)
    x = rng.uniform(-1.0, 1.0, size=dims[0])
    y_hat = forward(params, x).output[0]
    action = int(rng.integers(dims[-1]))
    return TheoryCase(params=params, x=x, action=action, target=float(y_hat[action] + rng.standard_normal()))


def _empirical_cost(params: NetworkParams, x: npt.NDArray[np.float64], action: int, target: float) -> float:
    y_hat = forward(params, x).output[0]
    return 0.5 * (target - float(y_hat[action])) ** 2


def _setup(params: NetworkParams, x: npt.ArrayLike, action: int, target: float):
    trace = forward(params, x)
    eps = td_error(trace.output, [action], [target])
    deltas = [
        gradient_feedback(trace, compute_transform(params, trace, layer), eps, layer)
        for layer in range(1, params.depth + 1)
    ]
    return trace, eps, deltas


def _identity_p(params: NetworkParams, layer: int) -> Matrix:
    return np.eye(params.specs[layer - 1].in_dim + int(params.bias))


def analytic_gradients(params: NetworkParams, x: npt.ArrayLike, action: int, target: float) -> list[Matrix]:
    _, _, deltas = _setup(params, x, action, target)
    return [-delta for delta in deltas]


def numeric_gradients(
    params: NetworkParams,
    x: npt.ArrayLike,
    action: int,
    target: float,
    step: float = FD_STEP,
) -> list[Matrix]:
    x = np.asarray(x, dtype=np.float64)
    grads = []
    for index, weight in enumerate(params.weights):
        grad = np.zeros_like(weight)
        for entry in np.ndindex(weight.shape):
            costs = []
            for sign in (1.0, -1.0):
                bumped = list(params.weights)
                moved = weight.copy()
                moved[entry] += sign * step
                bumped[index] = moved
                costs.append(_empirical_cost(params.with_weights(bumped), x, action, target))
            grad[entry] = (costs[0] - costs[1]) / (2.0 * step)
        grads.append(grad)
    return grads


def relative_error(a: Matrix, b: Matrix) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-8))


def gradient_check(
    params: NetworkParams,
    x: npt.ArrayLike,
    action: int,
    target: float,
    step: float = FD_STEP,
) -> float:
    analytic = analytic_gradients(params, x, action, target)
    numeric = numeric_gradients(params, x, action, target, step)
    return max(relative_error(a, n) for a, n in zip(analytic, numeric))


def lemma1_decompose(
    params: NetworkParams,
    x: npt.ArrayLike,
    action: int,
    target: float,
    lambdas: Sequence[float] | float = 0.0,
    p: Sequence[Matrix] | None = None,
) -> Lemma1Result:
    """H, its layer-trace form and the residual xi = H - trace form."""
    _, eps, deltas = _setup(params, x, action, target)
    coefficients = layer_lambdas(lambdas, params.depth)
    h = regularized_empirical_cost(eps, params, coefficients)
    per_layer = [
        layer_cost(delta, p[i] if p is not None else _identity_p(params, i + 1), weight, lam)
        for i, (delta, weight, lam) in enumerate(zip(deltas, params.weights, coefficients))
    ]
    trace_sum = total_cost(per_layer)
    return Lemma1Result(h=h, trace_sum=trace_sum, xi=h - trace_sum)


def theorem1_gap(
    params: NetworkParams,
    x: npt.ArrayLike,
    action: int,
    target: float,
    s: float,
    p: Sequence[Matrix] | None = None,
    lambdas: Sequence[float] | float = 0.0,
) -> Theorem1Result:
    trace, eps, deltas = _setup(params, x, action, target)
    coefficients = layer_lambdas(lambdas, params.depth)
    lemma = lemma1_decompose(params, x, action, target, coefficients, p)
    edl_costs, zero_costs, problems = [], [], []
    for layer in range(1, params.depth + 1):
        p_layer = p[layer - 1] if p is not None else _identity_p(params, layer)
        context = feedback_context(params, trace, layer, s, p_layer)
        sigma = edl_feedback(trace, context.b, eps, layer)
        weight = params.weights[layer - 1]
        lam = coefficients[layer - 1]
        edl_costs.append(layer_cost(sigma, p_layer, weight, lam))
        zero_costs.append(layer_cost(deltas[layer - 1], p_layer, weight, lam))
        if np.linalg.norm(p_layer, 2) > 1.0 + 1e-12:
            problems.append(f"layer {layer}: |P| > 1")

    eta = max(layer_input.shape[1] for layer_input in trace.inputs)
    input_norm = max(float(np.linalg.norm(layer_input[0])) for layer_input in trace.inputs)
    if input_norm > math.sqrt(eta) + 1e-12:
        problems.append(f"layer input norm {input_norm:.6g} exceeds sqrt(eta)")
    weight_bound = max(float(np.linalg.norm(weight)) for weight in params.weights)
    eps_norm = float(eps.magnitude[0])
    s_bound = params.depth * abs(s) / 2.0 * eps_norm * weight_bound * math.sqrt(eta)

    edl_cost = total_cost(edl_costs)
    edl_cost_zero = total_cost(zero_costs)
    return Theorem1Result(
        gap=abs(lemma.h - edl_cost),
        bound=s_bound + abs(lemma.xi),
        xi_norm=abs(lemma.xi),
        h=lemma.h,
        edl_cost=edl_cost,
        edl_cost_zero=edl_cost_zero,
        s_gap=abs(edl_cost - edl_cost_zero),
        s_bound=s_bound,
        depth=params.depth,
        eta=eta,
        weight_bound=weight_bound,
        eps_norm=eps_norm,
        preconditions_ok=not problems,
        detail="; ".join(problems),
    )


def _edl_step(
    params: NetworkParams,
    x: npt.ArrayLike,
    action: int,
    target: float,
    s: float,
    c: Sequence[float] | float,
):
    trace, eps, deltas = _setup(params, x, action, target)
    sigmas = []
    for layer in range(1, params.depth + 1):
        context = feedback_context(params, trace, layer, s)
        sigmas.append(edl_feedback(trace, context.b, eps, layer))
    lambdas = signed_lambdas(deltas, params, c)
    return deltas, sigmas, lambdas


def theorem2_descent(
    params: NetworkParams,
    x: npt.ArrayLike,
    action: int,
    target: float,
    s: float,
    c: Sequence[float] | float = 1e-3,
    p_scale: float = 1.0,
) -> Theorem2Result:
    """V-terms of the descent argument and the one-step change of J_E at half the bisected step threshold."""
    x = np.asarray(x, dtype=np.float64)
    deltas, sigmas, lambdas = _edl_step(params, x, action, target, s, c)
    v1 = v2 = v3 = 0.0
    for delta, sigma, weight, lam in zip(deltas, sigmas, params.weights, lambdas):
        v1 += p_scale * float(np.sum(delta * delta))
        v2 += p_scale * float(np.sum(delta * (sigma - delta)))
        v3 += -lam * float(np.sum(delta * weight))

    feedbacks = [p_scale * sigma for sigma in sigmas]
    before = _empirical_cost(params, x, action, target)

    def difference(alpha: float) -> float:
        stepped = apply_update(params, feedbacks, alpha, lambdas)
        return _empirical_cost(stepped, x, action, target) - before

    threshold = _descent_threshold(difference)
    alpha = threshold / 2.0
    return Theorem2Result(
        v1=v1,
        v2=v2,
        v3=v3,
        alpha_threshold=threshold,
        alpha=alpha,
        first_difference=difference(alpha) if alpha > 0.0 else 0.0,
    )


def _descent_threshold(difference) -> float:
    hi = ALPHA_START
    lo = 0.0
    while hi < ALPHA_CAP and _descends(difference, hi):
        lo = hi
        hi *= 2.0
    if hi >= ALPHA_CAP and _descends(difference, hi):
        return ALPHA_CAP
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if _descends(difference, mid):
            lo = mid
        else:
            hi = mid
    return lo


def _descends(difference, alpha: float) -> bool:
    try:
        value = difference(alpha)
    except ArithmeticError:
        return False
    return math.isfinite(value) and value <= 0.0


def _summary(name: str, rows: list[TheoryRow], required: float, tolerance: float) -> SuiteSummary:
    counted = [row for row in rows if not row.skipped]
    passed = sum(1 for row in counted if row.passed)
    fraction = passed / len(counted) if counted else 0.0
    return SuiteSummary(
        name=name,
        trials=len(counted),
        passed=passed,
        pass_fraction=fraction,
        required_fraction=required,
        tolerance=tolerance,
    )


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial])


def _warn(row: TheoryRow, case: TheoryCase) -> None:
    dims = [(spec.in_dim, spec.out_dim, spec.activation.value) for spec in case.params.specs]
    logger.warning("%s trial %d failed: layers %s %s", row.suite, row.trial, dims, row.model_dump(exclude_none=True))


def run_gradient_suite(trials: int, seed: int, tol: float = GRADIENT_TOL) -> tuple[list[TheoryRow], SuiteSummary]:
    rows = []
    for trial in range(trials):
        case = random_case(_trial_rng(seed, trial))
        error = gradient_check(case.params, case.x, case.action, case.target)
        row = TheoryRow(
            suite="gradient",
            trial=trial,
            seed=seed,
            passed=error < tol,
            depth=case.params.depth,
            rel_error=error,
        )
        if not row.passed:
            _warn(row, case)
        rows.append(row)
    return rows, _summary("gradient", rows, 1.0, tol)


def run_lemma1_suite(trials: int, seed: int, tol: float = LEMMA_TOL) -> tuple[list[TheoryRow], SuiteSummary]:
    rows = []
    for trial in range(trials):
        rng = _trial_rng(seed, trial)
        case = random_case(rng)
        lambdas = list(rng.uniform(0.0, 1e-2, size=case.params.depth))
        result = lemma1_decompose(case.params, case.x, case.action, case.target, lambdas)
        closure = abs(result.h - (result.trace_sum + result.xi))
        direct = regularized_empirical_cost(
            td_error(forward(case.params, case.x).output, [case.action], [case.target]),
            case.params,
            lambdas,
        )
        residual = max(closure, abs(direct - result.h))
        row = TheoryRow(
            suite="lemma1",
            trial=trial,
            seed=seed,
            passed=residual <= tol,
            depth=case.params.depth,
            h=result.h,
            trace_sum=result.trace_sum,
            xi=result.xi,
            gap=residual,
        )
        if not row.passed:
            _warn(row, case)
        rows.append(row)
    return rows, _summary("lemma1", rows, 1.0, tol)


def run_theorem1_suite(
    trials: int,
    seed: int,
    tol: float = THEOREM1_SLACK,
    s_values: Sequence[float] = THEOREM1_S_VALUES,
) -> tuple[list[TheoryRow], SuiteSummary]:
    rows = []
    signed_gaps = []
    for trial in range(trials):
        rng = _trial_rng(seed, trial)
        case = random_case(rng)
        for s in s_values:
            result = theorem1_gap(case.params, case.x, case.action, case.target, s)
            doubled = theorem1_gap(case.params, case.x, case.action, case.target, 2.0 * s)
            linear_miss = abs(doubled.s_gap - 2.0 * result.s_gap)
            ok = (
                result.s_gap <= result.s_bound + tol
                and result.gap <= result.bound + tol
                and linear_miss <= 1e-9 * max(1.0, result.s_gap)
            )
            row = TheoryRow(
                suite="theorem1",
                trial=trial,
                seed=seed,
                passed=ok,
                skipped=not result.preconditions_ok,
                depth=result.depth,
                eta=result.eta,
                s=s,
                h=result.h,
                edl_cost=result.edl_cost,
                xi=result.xi_norm,
                gap=result.gap,
                bound=result.bound,
                s_gap=result.s_gap,
                s_bound=result.s_bound,
                detail=result.detail,
            )
            if not row.passed and not row.skipped:
                _warn(row, case)
            rows.append(row)
        s_draw = float(rng.standard_normal())
        signed = theorem1_gap(case.params, case.x, case.action, case.target, s_draw)
        signed_gaps.append(signed.edl_cost - signed.edl_cost_zero)

    summary = _summary("theorem1", rows, 1.0, tol)
    if signed_gaps:
        rows.append(expectation_row(signed_gaps, seed))
    return rows, summary


def expectation_row(signed_gaps: Sequence[float], seed: int) -> TheoryRow:
    """Monte Carlo check that the zero-mean perturbation leaves the EDL cost unbiased."""
    values = np.asarray(signed_gaps, dtype=np.float64)
    n = values.shape[0]
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if n > 1 else 0.0
    limit = EXPECTATION_SIGMAS * std / math.sqrt(n)
    return TheoryRow(
        suite="theorem1_expectation",
        trial=0,
        seed=seed,
        passed=abs(mean) <= limit,
        gap=abs(mean),
        bound=limit,
        samples=n,
        detail="signed s ~ N(0,1)",
    )


def run_theorem2_suite(
    trials: int,
    seed: int,
    tol: float = THEOREM2_FLOOR,
    s_scale: float = 0.5,
    c: float = 1e-3,
    draws: int = 4,
) -> tuple[list[TheoryRow], SuiteSummary]:
    rows = []
    for trial in range(trials):
        rng = _trial_rng(seed, trial)
        case = random_case(rng)
        results = [
            theorem2_descent(
                case.params,
                case.x,
                case.action,
                case.target,
                s=s_scale * abs(float(rng.standard_normal())),
                c=c,
            )
            for _ in range(draws)
        ]
        ok = all(
            min(result.v1, result.v2, result.v3) >= -tol and result.first_difference <= tol
            for result in results
        )
        row = TheoryRow(
            suite="theorem2",
            trial=trial,
            seed=seed,
            passed=ok,
            depth=case.params.depth,
            v1=float(np.mean([result.v1 for result in results])),
            v2=float(np.mean([result.v2 for result in results])),
            v3=float(np.mean([result.v3 for result in results])),
            alpha_threshold=float(np.min([result.alpha_threshold for result in results])),
            alpha=float(np.min([result.alpha for result in results])),
            first_difference=float(np.max([result.first_difference for result in results])),
            samples=draws,
        )
        if not row.passed:
            _warn(row, case)
        rows.append(row)
    return rows, _summary("theorem2", rows, 0.99, tol)


def run_all_suites(trials: int, seed: int, tol: float | None = None) -> TheoryReport:
    report = TheoryReport()
    suites = [
        (run_gradient_suite, GRADIENT_TOL),
        (run_lemma1_suite, LEMMA_TOL),
        (run_theorem1_suite, THEOREM1_SLACK),
        (run_theorem2_suite, THEOREM2_FLOOR),
    ]
    for offset, (suite, default_tol) in enumerate(suites):
        rows, summary = suite(trials, seed + offset, default_tol if tol is None else tol)
        report.rows.extend(rows)
        report.summaries.append(summary)
        logger.info(
            "%s: %d/%d passed (required %.0f%%)",
            summary.name,
            summary.passed,
            summary.trials,
            100.0 * summary.required_fraction,
        )
    return report


def write_report_csv(path: Path, report: TheoryReport) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = list(TheoryRow.model_fields)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in report.rows:
            values = row.model_dump()
            writer.writerow({key: "" if value is None else value for key, value in values.items()})
