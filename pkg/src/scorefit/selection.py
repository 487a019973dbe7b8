"""Cross-validation, stepwise score construction, and outlier flagging.

Folds are always assigned by subject before any optimization, so repeated
measures of one subject never straddle a train/test boundary and the score
weights are re-estimated inside every fold.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data import (
    BINOMIAL,
    GAUSSIAN,
    BaselineModel,
    Dataset,
    ModelStructure,
    ScoreSpec,
    _as_element,
    intercept_matrix,
)
from .errors import SpecificationError
from .glm import fit_linear, fit_logistic
from .optimizer import DEFAULT_SEED, FitOptions, FitResult, fit_alternating, normalize_l1, predict


def assign_folds(subjects: np.ndarray, scheme, seed: int = DEFAULT_SEED) -> np.ndarray:
    """Fold id per row; a pure function of (subjects, scheme, seed).

    scheme is "loo" (one fold per subject) or an integer k; k-fold shuffles
    the distinct subjects with the seed and deals them round-robin.
    """
    subjects = np.asarray(subjects)
    unique, inverse = np.unique(subjects, return_inverse=True)
    n_subjects = len(unique)
    if n_subjects < 2:
        raise ValueError("cross-validation needs at least 2 subjects")
    if scheme == "loo":
        return inverse.astype(int)
    k = int(scheme)
    if not 2 <= k <= n_subjects:
        raise ValueError(f"k must be in [2, {n_subjects}], got {k}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n_subjects)
    fold_of_subject = np.empty(n_subjects, dtype=int)
    fold_of_subject[order] = np.arange(n_subjects) % k
    return fold_of_subject[inverse]


@dataclass
class _BaselineFit:
    model: BaselineModel
    coefficients: np.ndarray
    converged: bool = True
    iterations: int = 1

    def predict(self, data: Dataset) -> np.ndarray:
        X = _baseline_design(self.model, data)
        eta = X @ self.coefficients
        if self.model.family == BINOMIAL:
            return 1.0 / (1.0 + np.exp(-eta))
        return eta

    @property
    def objective(self) -> float:
        return math.nan


def _baseline_design(model: BaselineModel, data: Dataset) -> np.ndarray:
    cols = [intercept_matrix(model, data)]
    for name in model.covariates:
        cols.append(data.column(name)[:, None])
    return np.hstack(cols)


def _fit_model(model, data: Dataset, options: FitOptions):
    if isinstance(model, BaselineModel):
        X = _baseline_design(model, data)
        names = list(model.intercepts) + list(model.covariates)
        if model.family == GAUSSIAN:
            sub = fit_linear(X, data.y, column_names=names)
        else:
            sub = fit_logistic(X, data.y, column_names=names)
        return _BaselineFit(model, sub.coefficients)
    return fit_alternating(model, data, options)


def _predict_model(fitted, data: Dataset) -> np.ndarray:
    if isinstance(fitted, _BaselineFit):
        return fitted.predict(data)
    return predict(fitted, data)


@dataclass
class CvResult:
    """Out-of-fold predictions and the pooled cross-validated R^2.

    r2 = 1 - sum (y - yhat_oof)^2 / sum (y - ybar)^2 with ybar the grand mean
    of all outcomes, pooling every repeated measure of every subject. Failed
    folds leave NaN predictions, set partial=True, and are dropped from both
    sums.
    """

    fold_assignment: np.ndarray
    predictions: np.ndarray
    r2: float
    per_fold: list[dict]
    partial: bool
    full_fit: object | None = None


def cross_validate(
    model: ModelStructure | BaselineModel,
    data: Dataset,
    scheme="loo",
    seed: int = DEFAULT_SEED,
    options: FitOptions | None = None,
    threads: int | None = None,
) -> CvResult:
    """Subject-grouped cross-validation with per-fold refitting.

    Score-model folds warm-start from the full-data converged weights; the
    fold assignment itself never depends on any fit.
    """
    options = options or FitOptions()
    folds = assign_folds(data.subjects(), scheme, seed)
    fold_ids = np.unique(folds)

    full_fit = _fit_model(model, data, options)
    fold_options = options
    if isinstance(model, ModelStructure):
        warm = {s.name: s.weights for s in full_fit.structure.scores()}
        fold_options = replace(options, start_weights=warm)

    predictions = np.full(data.n_rows, np.nan)
    per_fold: list[dict] = []

    def run_fold(fold):
        test = folds == fold
        train = data.take(~test)
        try:
            fitted = _fit_model(model, train, fold_options)
            preds = _predict_model(fitted, data.take(test))
            return fold, test, preds, {
                "fold": int(fold),
                "converged": bool(fitted.converged),
                "iterations": int(fitted.iterations),
                "objective": float(fitted.objective),
                "error": None,
            }
        except Exception as exc:  # fold failures are reported, not fatal
            return fold, test, None, {
                "fold": int(fold),
                "converged": False,
                "iterations": 0,
                "objective": math.nan,
                "error": f"{type(exc).__name__}: {exc}",
            }

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_fold, fold_ids))
    else:
        results = [run_fold(f) for f in fold_ids]

    partial = False
    for _, test, preds, summary in sorted(results, key=lambda r: r[0]):
        per_fold.append(summary)
        if preds is None:
            partial = True
        else:
            predictions[test] = preds

    y = data.y
    have = np.isfinite(predictions)
    grand_mean = float(y.mean())
    sse = float(np.sum((y[have] - predictions[have]) ** 2))
    sst = float(np.sum((y[have] - grand_mean) ** 2))
    r2 = 1.0 - sse / sst if sst > 0 else math.nan
    return CvResult(folds, predictions, r2, per_fold, partial, full_fit)


def roc_auc(y: np.ndarray, scores: np.ndarray) -> float:
    """Trapezoidal area under the ROC curve of predicted scores."""
    mask = np.isfinite(scores)
    y = np.asarray(y, dtype=float)[mask]
    s = np.asarray(scores, dtype=float)[mask]
    pos = float(np.sum(y))
    neg = float(len(y) - pos)
    if pos == 0 or neg == 0:
        raise ValueError("AUC needs both outcome classes")
    order = np.argsort(-s, kind="mergesort")
    tp = np.cumsum(y[order])
    fp = np.cumsum(1.0 - y[order])
    keep = np.r_[np.flatnonzero(np.diff(s[order])), len(s) - 1]
    tpr = np.r_[0.0, tp[keep] / pos]
    fpr = np.r_[0.0, fp[keep] / neg]
    return float(np.trapz(tpr, fpr))


@dataclass
class OutlierReport:
    """Rows flagged from standardized leave-one-out CV residuals."""

    rows: np.ndarray
    zscores: np.ndarray
    threshold: float
    residual_sd: float
    degenerate: bool = False
    note: str | None = None
    cv: CvResult | None = None


def detect_outliers(
    model: ModelStructure | BaselineModel,
    data: Dataset,
    threshold: float = 2.8,
    seed: int = DEFAULT_SEED,
    options: FitOptions | None = None,
    threads: int | None = None,
) -> OutlierReport:
    """Flag rows whose |LOOCV residual| exceeds `threshold` residual SDs.

    2.8 is the conservative default (p ~ .005); 2.5 is the optimistic choice.
    Binomial models use Pearson residuals. A zero residual SD cannot be
    standardized: nothing is flagged and the report is marked degenerate.
    """
    cv = cross_validate(model, data, "loo", seed, options, threads)
    y = data.y
    family = model.family
    residuals = np.where(np.isfinite(cv.predictions), y - cv.predictions, np.nan)
    if family == BINOMIAL:
        p = np.clip(cv.predictions, 1e-10, 1 - 1e-10)
        residuals = np.where(np.isfinite(cv.predictions), (y - p) / np.sqrt(p * (1 - p)), np.nan)

    finite = residuals[np.isfinite(residuals)]
    sd = float(np.std(finite, ddof=1)) if len(finite) > 1 else 0.0
    if not math.isfinite(sd) or sd == 0.0:
        return OutlierReport(
            rows=np.array([], dtype=int),
            zscores=np.full_like(residuals, np.nan),
            threshold=threshold,
            residual_sd=sd,
            degenerate=True,
            note="residuals have zero variance; standardization is undefined",
            cv=cv,
        )
    z = residuals / sd
    flagged = np.flatnonzero(np.abs(z) > threshold)
    return OutlierReport(flagged, z, threshold, sd, cv=cv)


@dataclass(frozen=True)
class Candidates:
    """Stepwise candidate pool: elements per score plus covariate names."""

    score_elements: dict[str, tuple] = field(default_factory=dict)
    covariates: tuple[str, ...] = ()


@dataclass(frozen=True)
class Move:
    action: str  # "add" | "drop"
    target: str  # score name or "covariates"
    element: str  # element label or covariate name


@dataclass
class StepRecord:
    move: Move
    criterion_before: float
    criterion_after: float
    advisory: str | None = None


@dataclass
class StepwiseTrace:
    criterion: str
    steps: list[StepRecord]
    final_structure: ModelStructure
    candidate_tables: list[list[tuple[Move, float]]] = field(default_factory=list)


_LOWER_IS_BETTER = {"aic": True, "bic": True, "cv_r2": False, "cv_auc": False}


def _apply_move(structure: ModelStructure, move: Move) -> ModelStructure:
    if move.target == "covariates":
        covs = list(structure.covariates)
        if move.action == "add":
            covs.append(move.element)
        else:
            covs.remove(move.element)
        return replace(structure, covariates=tuple(covs))

    score = structure.score(move.target)
    if move.action == "add":
        elements = score.elements + (_as_element(move.element),)
        raw = np.r_[score.weights, 1.0 / len(elements)]
    else:
        idx = score.element_labels.index(move.element)
        elements = tuple(e for i, e in enumerate(score.elements) if i != idx)
        if not elements:
            raise SpecificationError(f"cannot drop the last element of score {move.target!r}")
        raw = np.delete(score.weights, idx)
    new_score = ScoreSpec(score.name, elements, normalize_l1(raw), score.weights_fixed)
    return structure.with_score(new_score)


def _enumerate_moves(
    structure: ModelStructure, candidates: Candidates, direction: str
) -> list[Move]:
    moves: list[Move] = []
    if direction in ("forward", "bidirectional"):
        for name, elements in candidates.score_elements.items():
            current = set(structure.score(name).element_labels)
            for el in elements:
                label = _as_element(el).label
                if label not in current:
                    moves.append(Move("add", name, label))
        for cov in candidates.covariates:
            if cov not in structure.covariates:
                moves.append(Move("add", "covariates", cov))
    if direction in ("backward", "bidirectional"):
        for score in structure.scores():
            if score.n_elements >= 2 and not score.weights_fixed:
                for label in score.element_labels:
                    moves.append(Move("drop", score.name, label))
        for cov in structure.covariates:
            moves.append(Move("drop", "covariates", cov))
    return moves


def _evaluate(
    structure: ModelStructure,
    data: Dataset,
    criterion: str,
    scheme,
    seed: int,
    options: FitOptions,
) -> tuple[float, FitResult | None]:
    """(criterion value, full-data fit when available)."""
    if criterion in ("aic", "bic"):
        fit = fit_alternating(structure, data, options)
        return (fit.aic if criterion == "aic" else fit.bic), fit
    cv = cross_validate(structure, data, scheme, seed, options)
    if criterion == "cv_r2":
        return cv.r2, cv.full_fit
    if criterion == "cv_auc":
        if structure.family != BINOMIAL:
            raise ValueError("cv_auc requires a binomial family model")
        return roc_auc(data.y, cv.predictions), cv.full_fit
    raise ValueError(f"unknown criterion {criterion!r}")


def _improvement(before: float, after: float, criterion: str) -> float:
    return (before - after) if _LOWER_IS_BETTER[criterion] else (after - before)


def _negative_weight_advisory(fit: FitResult | None, move: Move) -> str | None:
    if fit is None or move.action != "add" or move.target == "covariates":
        return None
    score = fit.structure.score(move.target)
    idx = score.element_labels.index(move.element)
    if score.weights[idx] < 0:
        return (
            f"element {move.element!r} converged to a negative weight; consider "
            "recoding it (1 - x for binary, -x for continuous) or reversing its "
            "starting direction"
        )
    return None


def stepwise_search(
    structure: ModelStructure,
    data: Dataset,
    candidates: Candidates,
    direction: str = "forward",
    criterion: str = "bic",
    scheme="loo",
    seed: int = DEFAULT_SEED,
    options: FitOptions | None = None,
    interactive: bool = False,
    input_fn=input,
    print_fn=print,
    threads: int | None = None,
) -> StepwiseTrace:
    """Greedy one-at-a-time search over score elements and covariates.

    Each round refits every single add (and drop, per `direction`) and
    accepts the best strictly-improving move, carrying the accepted fit's
    converged weights forward; the search stops when nothing improves. Ties
    break by candidate declaration order. Interactive mode prints the ranked
    improving moves each round and reads an index or "stop" from the
    terminal.
    """
    if direction not in ("forward", "backward", "bidirectional"):
        raise ValueError(f"unknown direction {direction!r}")
    if criterion not in _LOWER_IS_BETTER:
        raise ValueError(f"unknown criterion {criterion!r}")
    options = options or FitOptions()

    for name in candidates.score_elements:
        score = structure.score(name)
        if score.weights_fixed:
            raise SpecificationError(f"cannot grow fixed-weight score {name!r}")
        overlap = set(_as_element(e).label for e in candidates.score_elements[name])
        overlap &= set(score.element_labels)
        if overlap:
            raise SpecificationError(f"candidates already in score {name!r}: {sorted(overlap)}")
    overlap = set(candidates.covariates) & set(structure.covariates)
    if overlap:
        raise SpecificationError(f"candidate covariates already in model: {sorted(overlap)}")
    if direction in ("forward", "bidirectional"):
        if not candidates.score_elements and not candidates.covariates:
            raise ValueError("forward search needs a non-empty candidate set")

    current_value, current_fit = _evaluate(structure, data, criterion, scheme, seed, options)
    if current_fit is not None:
        structure = current_fit.structure  # carry converged weights
    steps: list[StepRecord] = []
    tables: list[list[tuple[Move, float]]] = []

    while True:
        moves = _enumerate_moves(structure, candidates, direction)
        if not moves:
            break

        def eval_move(move):
            try:
                trial = _apply_move(structure, move)
                return _evaluate(trial, data, criterion, scheme, seed, options)
            except Exception:
                return math.nan, None

        if threads and threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                evaluated = list(pool.map(eval_move, moves))
        else:
            evaluated = [eval_move(m) for m in moves]

        scored = [
            (move, value, fit)
            for move, (value, fit) in zip(moves, evaluated)
            if math.isfinite(value) and _improvement(current_value, value, criterion) > 0
        ]
        scored.sort(key=lambda t: -_improvement(current_value, t[1], criterion))
        tables.append([(m, v) for m, v, _ in scored])

        if not scored:
            if interactive:
                print_fn("no improving move; stopping")
            break

        if interactive:
            print_fn(f"round {len(steps) + 1}: current {criterion} = {current_value:.6g}")
            for i, (move, value, _) in enumerate(scored, start=1):
                delta = _improvement(current_value, value, criterion)
                print_fn(
                    f"  [{i}] {move.action} {move.element} -> {move.target} "
                    f"({criterion} {value:.6g}, improves {delta:.6g})"
                )
            answer = input_fn("select move number, or 'stop': ").strip().lower()
            if answer in ("stop", "q", "quit", ""):
                break
            try:
                choice = int(answer) - 1
                move, value, fit = scored[choice]
            except (ValueError, IndexError):
                print_fn(f"unrecognized choice {answer!r}; stopping")
                break
        else:
            move, value, fit = scored[0]

        advisory = _negative_weight_advisory(fit, move)
        if advisory and interactive:
            print_fn(f"note: {advisory}")
        steps.append(StepRecord(move, current_value, value, advisory))
        structure = fit.structure if fit is not None else _apply_move(structure, move)
        current_value = value

    return StepwiseTrace(criterion, steps, structure, tables)
