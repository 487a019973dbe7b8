"""Alternating block optimization for weighted-score interaction models.

The model couples a genetic score g and one or two environmental scores e
(each an L1-normalized weighted sum of columns) through a two- or three-way
interaction regression. Estimation alternates three kinds of block sub-fits,
each holding the other blocks fixed:

  1. main step    — regress the outcome on intercepts, score terms, and
                    covariates at the current score values;
  2. weight steps — for one score, move its weighted sum outside the
                    coefficients: with r0 collecting every term without the
                    score and r1 the total multiplier of the score, the
                    outcome satisfies y = r0 + r1 * (sum_j w_j c_j) + eps, so
                    regressing (y - r0) on the columns (r1 * c_j) without an
                    intercept (or offsetting r0 for logit links) re-estimates
                    the raw weights.

After each weight step the raw weights are L1-normalized and the main
coefficients multiplying that score are rescaled by the same factor, which
leaves the fitted values untouched; the recorded objective sequence is
therefore non-increasing (RSS or deviance) and every sub-fit minimizes the
same objective.

Sign indeterminacy: flipping a score's weights together with the main
coefficients that contain the score an odd number of times yields an
equivalent parameterization. `canonicalize` picks the representative where
each score's largest-magnitude weight is positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import (
    BINOMIAL,
    GAUSSIAN,
    TWO_WAY,
    Dataset,
    ModelStructure,
    ScoreSpec,
    compute_score,
    expand_score_columns,
    intercept_matrix,
    validate_for_model,
)
from .errors import UnidentifiedScoreError
from .glm import (
    DesignFit,
    family_objective,
    fit_linear,
    fit_logistic,
    information_criteria,
    true_parameter_count,
    _logistic,
)

DEFAULT_DELTA = 1e-4
DEFAULT_MAX_ITERATIONS = 100
DEFAULT_SEED = 42
MONOTONE_RTOL = 1e-8


@dataclass(frozen=True)
class FitOptions:
    """Knobs for fit_alternating.

    delta is the convergence threshold on the max-abs change of normalized
    weights; start_weights maps score names to starting vectors (default:
    equal weights 1/n per score); restarts > 0 adds sign-randomized
    equal-magnitude restarts and keeps the best objective.
    """

    delta: float = DEFAULT_DELTA
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    start_weights: dict[str, np.ndarray] | None = None
    restarts: int = 0
    seed: int = DEFAULT_SEED


@dataclass
class FitResult:
    """Converged state of the alternating fit.

    coefficients/se are the main-model block; weight_se holds conditional
    standard errors per score element (NaN for fixed scores), taken from the
    final per-block sub-fits with the other blocks held fixed and scaled by
    1/||raw||_1 to match the normalized weights. canonical_form records which
    scores canonicalize() sign-flipped.
    """

    structure: ModelStructure
    coefficients: dict[str, float]
    se: dict[str, float]
    weight_se: dict[str, np.ndarray]
    objective_trace: list[float]
    iterations: int
    converged: bool
    objective: float
    loglik: float
    aic: float
    bic: float
    scale: float
    r_squared: float
    n_obs: int
    fitted: np.ndarray
    canonical_form: dict[str, bool] = field(default_factory=dict)

    def weights(self, name: str) -> np.ndarray:
        return self.structure.score(name).weights


def score_terms(structure: ModelStructure) -> list[tuple[str, ...]]:
    """Score-product terms in design order (two-way: e, g, eg)."""
    g, e1 = structure.genetic.name, structure.env1.name
    if structure.kind == TWO_WAY:
        return [(e1,), (g,), (e1, g)]
    e2 = structure.env2.name
    return [(e1,), (e2,), (g,), (e1, e2), (e1, g), (e2, g), (e1, e2, g)]


def term_label(term: tuple[str, ...]) -> str:
    return ":".join(term)


def coefficient_names(structure: ModelStructure) -> list[str]:
    return (
        list(structure.intercepts)
        + [term_label(t) for t in score_terms(structure)]
        + list(structure.covariates)
    )


class _Workspace:
    """Per-fit immutable data: expanded score columns, intercepts, covariates."""

    def __init__(self, structure: ModelStructure, data: Dataset):
        validate_for_model(structure, data)
        self.structure = structure
        self.y = data.y
        self.n = data.n_rows
        self.expanded = {s.name: expand_score_columns(s, data) for s in structure.scores()}
        self.icpt = intercept_matrix(structure, data)
        self.covs = (
            np.column_stack([data.column(c) for c in structure.covariates])
            if structure.covariates
            else np.empty((self.n, 0))
        )
        self.terms = score_terms(structure)
        self.names = coefficient_names(structure)

    def score_values(self, weights: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        return {name: self.expanded[name] @ w for name, w in weights.items()}

    def term_column(self, term: tuple[str, ...], values: dict[str, np.ndarray]) -> np.ndarray:
        col = values[term[0]]
        for name in term[1:]:
            col = col * values[name]
        return col

    def design(self, values: dict[str, np.ndarray]) -> np.ndarray:
        cols = [self.icpt] + [self.term_column(t, values)[:, None] for t in self.terms]
        cols.append(self.covs)
        return np.hstack(cols)

    def linear_predictor(self, coefs: dict[str, float], values: dict[str, np.ndarray]) -> np.ndarray:
        beta = np.array([coefs[name] for name in self.names])
        return self.design(values) @ beta


def step_main(ws: _Workspace, values: dict[str, np.ndarray], beta0=None) -> DesignFit:
    """Estimate the main block at fixed score values."""
    X = ws.design(values)
    if ws.structure.family == GAUSSIAN:
        return fit_linear(X, ws.y, column_names=ws.names)
    return fit_logistic(X, ws.y, beta0=beta0, column_names=ws.names)


def _partial_residual(
    ws: _Workspace,
    target: str,
    coefs: dict[str, float],
    values: dict[str, np.ndarray],
) -> tuple[np.ndarray, np.ndarray]:
    """(r0, r1): linear-predictor terms without the target score, and the
    target's total multiplier."""
    r0 = ws.icpt @ np.array([coefs[c] for c in ws.structure.intercepts])
    if ws.covs.shape[1]:
        r0 = r0 + ws.covs @ np.array([coefs[c] for c in ws.structure.covariates])
    r1 = np.zeros(ws.n)
    for term in ws.terms:
        beta = coefs[term_label(term)]
        if target in term:
            rest = [s for s in term if s != target]
            col = np.ones(ws.n)
            for name in rest:
                col = col * values[name]
            r1 = r1 + beta * col
        else:
            r0 = r0 + beta * ws.term_column(term, values)
    return r0, r1


def step_score(
    ws: _Workspace,
    target: str,
    coefs: dict[str, float],
    values: dict[str, np.ndarray],
    beta0=None,
) -> DesignFit:
    """Re-estimate one score's raw (un-normalized) weights.

    Raises UnidentifiedScoreError when every coefficient multiplying the
    target score is zero (r1 identically zero leaves the weights free).
    """
    r0, r1 = _partial_residual(ws, target, coefs, values)
    if np.allclose(r1, 0.0):
        raise UnidentifiedScoreError(
            f"score {target!r} sub-step is unidentified: every coefficient "
            "multiplying the score is zero"
        )
    X = r1[:, None] * ws.expanded[target]
    labels = ws.structure.score(target).element_labels
    if ws.structure.family == GAUSSIAN:
        return fit_linear(X, ws.y - r0, column_names=labels)
    return fit_logistic(X, ws.y, offset=r0, beta0=beta0, column_names=labels)


def normalize_l1(raw: np.ndarray) -> np.ndarray:
    """raw / sum(|raw|), preserving signs; rejects the all-zero vector."""
    raw = np.asarray(raw, dtype=float)
    norm = float(np.sum(np.abs(raw)))
    if norm == 0:
        raise ValueError("cannot L1-normalize an all-zero weight vector")
    return raw / norm


def _rescale_after_normalize(
    ws: _Workspace, target: str, coefs: dict[str, float], factor: float
) -> None:
    # weights shrank by `factor`, so the score-bearing coefficients grow by it
    for term in ws.terms:
        if target in term:
            coefs[term_label(term)] *= factor


def _state_objective(ws: _Workspace, coefs: dict[str, float], values) -> float:
    eta = ws.linear_predictor(coefs, values)
    mu = eta if ws.structure.family == GAUSSIAN else _logistic(eta)
    return family_objective(ws.structure.family, ws.y, mu)


def _check_monotone(trace: list[float]) -> None:
    for a, b in zip(trace, trace[1:]):
        if b > a + MONOTONE_RTOL * max(1.0, abs(a)):
            raise RuntimeError(
                f"objective increased from {a:.12g} to {b:.12g}; "
                "alternating sub-steps must share one objective"
            )


def _fit_once(
    ws: _Workspace,
    start: dict[str, np.ndarray],
    delta: float,
    max_iterations: int,
) -> tuple[dict[str, np.ndarray], dict[str, float], DesignFit, list[float], int, bool]:
    structure = ws.structure
    weights = {name: normalize_l1(w) for name, w in start.items()}
    free = [s.name for s in structure.scores() if not s.weights_fixed]
    trace: list[float] = []
    coefs: dict[str, float] = {}
    main_beta = None
    converged = not free  # all-fixed reduces to a single main fit
    iterations = 0

    for iterations in range(1, max_iterations + 1):
        values = ws.score_values(weights)
        main = step_main(ws, values, beta0=main_beta)
        main_beta = main.coefficients
        coefs = dict(zip(ws.names, main.coefficients))
        trace.append(main.objective)
        if not free:
            break

        previous = {name: weights[name] for name in free}
        for name in free:
            raw_start = weights[name]
            sub = step_score(ws, name, coefs, values, beta0=raw_start)
            raw = sub.coefficients
            norm = float(np.sum(np.abs(raw)))
            weights[name] = normalize_l1(raw)
            values[name] = ws.expanded[name] @ weights[name]
            _rescale_after_normalize(ws, name, coefs, norm)
            trace.append(_state_objective(ws, coefs, values))

        shift = max(float(np.max(np.abs(weights[n] - previous[n]))) for n in free)
        if shift < delta:
            converged = True
            break

    # refit the main block so coefficients and SEs match the final weights
    values = ws.score_values(weights)
    final_main = step_main(ws, values, beta0=main_beta)
    coefs = dict(zip(ws.names, final_main.coefficients))
    if free:
        trace.append(final_main.objective)
    _check_monotone(trace)
    return weights, coefs, final_main, trace, iterations, converged


def _conditional_weight_se(
    ws: _Workspace, coefs: dict[str, float], values: dict[str, np.ndarray]
) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for score in ws.structure.scores():
        if score.weights_fixed:
            out[score.name] = np.full(score.n_elements, np.nan)
            continue
        sub = step_score(ws, score.name, coefs, values, beta0=score.weights)
        norm = float(np.sum(np.abs(sub.coefficients)))
        out[score.name] = sub.se / norm
    return out


def _start_weights(
    structure: ModelStructure, options: FitOptions
) -> dict[str, np.ndarray]:
    start = {}
    for score in structure.scores():
        if options.start_weights and score.name in options.start_weights:
            start[score.name] = np.asarray(options.start_weights[score.name], dtype=float)
        else:
            start[score.name] = score.weights
    return start


def fit_alternating(
    structure: ModelStructure, data: Dataset, options: FitOptions | None = None
) -> FitResult:
    """Fit the interaction model by alternating block optimization.

    Iterates main step -> weight step per non-fixed score until the max-abs
    change of every normalized weight vector falls below options.delta, then
    refits the main block at the converged weights. Returns converged=False
    (rather than raising) when max_iterations is exhausted.
    """
    options = options or FitOptions()
    ws = _Workspace(structure, data)

    starts = [_start_weights(structure, options)]
    if options.restarts > 0:
        rng = np.random.default_rng(options.seed)
        free = [s for s in structure.scores() if not s.weights_fixed]
        for _ in range(options.restarts):
            flipped = dict(starts[0])
            for score in free:
                signs = rng.choice((-1.0, 1.0), size=score.n_elements)
                flipped[score.name] = signs / score.n_elements
            starts.append(flipped)

    best = None
    for start in starts:
        result = _fit_once(ws, start, options.delta, options.max_iterations)
        if best is None or result[3][-1] < best[3][-1]:
            best = result
    weights, coefs, final_main, trace, iterations, converged = best

    values = ws.score_values(weights)
    weight_se = _conditional_weight_se(ws, coefs, values)

    final_structure = structure
    for name, w in weights.items():
        final_structure = final_structure.with_score(
            final_structure.score(name).with_weights(w)
        )

    n = ws.n
    count = true_parameter_count(structure)
    if structure.family == GAUSSIAN:
        count += 1  # the error variance enters the likelihood
    aic, bic = information_criteria(final_main.loglik, count, n)

    y = ws.y
    mu = final_main.fitted
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - mu) ** 2)) / tss if tss > 0 else math.nan

    return FitResult(
        structure=final_structure,
        coefficients=coefs,
        se=dict(zip(ws.names, final_main.se)),
        weight_se=weight_se,
        objective_trace=trace,
        iterations=iterations,
        converged=converged,
        objective=trace[-1],
        loglik=final_main.loglik,
        aic=aic,
        bic=bic,
        scale=final_main.scale,
        r_squared=r2,
        n_obs=n,
        fitted=mu,
        canonical_form={s.name: False for s in structure.scores()},
    )


def predict(fit: FitResult, data: Dataset) -> np.ndarray:
    """Fitted means on new data (probabilities for the binomial family)."""
    return predict_from(fit.structure, fit.coefficients, data)


def predict_from(
    structure: ModelStructure, coefficients: dict[str, float], data: Dataset
) -> np.ndarray:
    values = {s.name: compute_score(s, data) for s in structure.scores()}
    eta = intercept_matrix(structure, data) @ np.array(
        [coefficients[c] for c in structure.intercepts]
    )
    for term in score_terms(structure):
        col = values[term[0]]
        for name in term[1:]:
            col = col * values[name]
        eta = eta + coefficients[term_label(term)] * col
    for cov in structure.covariates:
        eta = eta + coefficients[cov] * data.column(cov)
    return eta if structure.family == GAUSSIAN else _logistic(eta)


def apply_sign_flips(
    structure: ModelStructure,
    coefficients: dict[str, float],
    weights: dict[str, np.ndarray],
    flips: set[str],
) -> tuple[dict[str, float], dict[str, np.ndarray]]:
    """Equivalent parameterization: negate flipped scores' weights and every
    main coefficient containing a flipped score an odd number of times."""
    new_coefs = dict(coefficients)
    for term in score_terms(structure):
        if len(set(term) & flips) % 2 == 1:
            new_coefs[term_label(term)] = -new_coefs[term_label(term)]
    new_weights = {
        name: (-w if name in flips else w) for name, w in weights.items()
    }
    return new_coefs, new_weights


def canonicalize(fit: FitResult) -> FitResult:
    """Sign-canonical representative: each score's largest-|weight| element
    gets a positive weight. Fitted values are unchanged."""
    flips = set()
    for score in fit.structure.scores():
        lead = int(np.argmax(np.abs(score.weights)))
        if score.weights[lead] < 0:
            flips.add(score.name)
    weights = {s.name: s.weights for s in fit.structure.scores()}
    coefs, new_weights = apply_sign_flips(fit.structure, fit.coefficients, weights, flips)

    structure = fit.structure
    for name, w in new_weights.items():
        structure = structure.with_score(structure.score(name).with_weights(w))
    form = {name: (fit.canonical_form.get(name, False) ^ (name in flips)) for name in weights}
    return FitResult(
        structure=structure,
        coefficients=coefs,
        se=fit.se,
        weight_se=fit.weight_se,
        objective_trace=fit.objective_trace,
        iterations=fit.iterations,
        converged=fit.converged,
        objective=fit.objective,
        loglik=fit.loglik,
        aic=fit.aic,
        bic=fit.bic,
        scale=fit.scale,
        r_squared=fit.r_squared,
        n_obs=fit.n_obs,
        fitted=fit.fitted,
        canonical_form=form,
    )
