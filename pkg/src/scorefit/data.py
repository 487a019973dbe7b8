"""Data table, score definitions, and model structure.

A score is an L1-normalized weighted sum of elements, where each element is
either a single column or an elementwise product of columns (a within-score
interaction). Scores and the model structure are immutable once built and are
safe to share across threads.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, SpecificationError

L1_TOL = 1e-10


@dataclass(frozen=True)
class Dataset:
    """Columnar numeric table with an outcome and optional subject grouping.

    All columns have equal length and contain no missing values; rows with
    missing values in used columns are dropped by `load_dataset`, which
    records the count in `n_dropped`.
    """

    columns: dict[str, np.ndarray]
    outcome: str
    subject_id: str | None = None
    n_dropped: int = 0

    def __post_init__(self):
        if self.outcome not in self.columns:
            raise DataError(f"missing column: outcome {self.outcome!r} not in data")
        if self.subject_id is not None and self.subject_id not in self.columns:
            raise DataError(f"missing column: subject_id {self.subject_id!r} not in data")
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) != 1:
            raise DataError(f"columns have unequal lengths: {sorted(lengths)}")
        if self.n_rows < 1:
            raise DataError("dataset has no rows")
        if not np.all(np.isfinite(self.columns[self.outcome])):
            raise DataError(f"outcome {self.outcome!r} contains non-finite values")

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values())))

    @property
    def y(self) -> np.ndarray:
        return self.columns[self.outcome]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise DataError(f"missing column: {name!r}") from None

    def subjects(self) -> np.ndarray:
        """Subject label per row; rows are their own subjects when ungrouped."""
        if self.subject_id is None:
            return np.arange(self.n_rows)
        return self.columns[self.subject_id]

    def take(self, rows: np.ndarray) -> "Dataset":
        """New Dataset restricted to the given row indices (or boolean mask)."""
        cols = {k: v[rows] for k, v in self.columns.items()}
        return Dataset(cols, self.outcome, self.subject_id, self.n_dropped)


@dataclass(frozen=True)
class ScoreElement:
    """One score element: a single column or a product of distinct columns."""

    factors: tuple[str, ...]

    def __post_init__(self):
        if len(self.factors) == 0:
            raise SpecificationError("score element needs at least one factor")
        if len(set(self.factors)) != len(self.factors):
            raise SpecificationError(f"repeated factor in element {self.label!r}")

    @property
    def label(self) -> str:
        return "*".join(self.factors)


def _as_element(spec) -> ScoreElement:
    if isinstance(spec, ScoreElement):
        return spec
    if isinstance(spec, str):
        return ScoreElement(tuple(s.strip() for s in spec.split("*")))
    return ScoreElement(tuple(spec))


@dataclass(frozen=True)
class ScoreSpec:
    """Named latent score: ordered elements with L1-normalized weights.

    Weights satisfy sum(|w|) = 1 (renormalized with a warning on load when
    off by more than 1e-10); a single-element score has weight +1 or -1.
    `weights_fixed` freezes the weights during optimization.
    """

    name: str
    elements: tuple[ScoreElement, ...]
    weights: np.ndarray
    weights_fixed: bool = False

    def __post_init__(self):
        elements = tuple(_as_element(e) for e in self.elements)
        object.__setattr__(self, "elements", elements)
        labels = [e.label for e in elements]
        if len(set(labels)) != len(labels):
            dup = next(l for l in labels if labels.count(l) > 1)
            raise SpecificationError(f"duplicate element {dup!r} in score {self.name!r}")
        w = np.asarray(self.weights, dtype=float).ravel()
        if len(w) != len(elements):
            raise SpecificationError(
                f"score {self.name!r}: {len(w)} weights for {len(elements)} elements"
            )
        norm = np.sum(np.abs(w))
        if norm == 0:
            raise SpecificationError(f"score {self.name!r}: weights are all zero")
        if abs(norm - 1.0) > L1_TOL:
            warnings.warn(
                f"score {self.name!r}: |weights| sum to {norm:.6g}, renormalizing to 1",
                stacklevel=2,
            )
            w = w / norm
        if len(w) == 1 and abs(abs(w[0]) - 1.0) > L1_TOL:
            raise SpecificationError(f"single-element score {self.name!r} must have weight +-1")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def element_labels(self) -> list[str]:
        return [e.label for e in self.elements]

    def with_weights(self, weights: np.ndarray) -> "ScoreSpec":
        return replace(self, weights=np.asarray(weights, dtype=float))

    @staticmethod
    def equal_weights(name: str, elements, weights_fixed: bool = False) -> "ScoreSpec":
        """Score with equal weights 1/n over the given elements."""
        elements = tuple(_as_element(e) for e in elements)
        w = np.full(len(elements), 1.0 / len(elements))
        return ScoreSpec(name, elements, w, weights_fixed)


GAUSSIAN = "gaussian"
BINOMIAL = "binomial"
TWO_WAY = "two_way"
THREE_WAY = "three_way"


@dataclass(frozen=True)
class ModelStructure:
    """Two- or three-way interaction skeleton between one genetic and one or
    two environmental scores, plus covariates.

    `intercepts` lists indicator columns that must partition the rows (each
    row has exactly one active intercept); the default single name is
    synthesized as an all-ones column when absent from the data.
    """

    kind: str  # TWO_WAY | THREE_WAY
    genetic: ScoreSpec
    env1: ScoreSpec
    env2: ScoreSpec | None = None
    covariates: tuple[str, ...] = ()
    intercepts: tuple[str, ...] = ("intercept",)
    family: str = GAUSSIAN

    def __post_init__(self):
        if self.kind not in (TWO_WAY, THREE_WAY):
            raise SpecificationError(f"unknown model kind {self.kind!r}")
        if (self.kind == THREE_WAY) != (self.env2 is not None):
            raise SpecificationError("env2 is required for three_way and forbidden for two_way")
        if self.family not in (GAUSSIAN, BINOMIAL):
            raise SpecificationError(f"unknown family {self.family!r}")
        if len(self.intercepts) < 1:
            raise SpecificationError("at least one intercept indicator is required")
        object.__setattr__(self, "covariates", tuple(self.covariates))
        object.__setattr__(self, "intercepts", tuple(self.intercepts))
        names = [s.name for s in self.scores()]
        if len(set(names)) != len(names):
            raise SpecificationError(f"score names must be distinct, got {names}")

    def scores(self) -> list[ScoreSpec]:
        out = [self.genetic, self.env1]
        if self.env2 is not None:
            out.append(self.env2)
        return out

    def score(self, name: str) -> ScoreSpec:
        for s in self.scores():
            if s.name == name:
                return s
        raise SpecificationError(f"no score named {name!r}")

    def with_score(self, score: ScoreSpec) -> "ModelStructure":
        """Copy of the structure with the same-named score replaced."""
        if score.name == self.genetic.name:
            return replace(self, genetic=score)
        if score.name == self.env1.name:
            return replace(self, env1=score)
        if self.env2 is not None and score.name == self.env2.name:
            return replace(self, env2=score)
        raise SpecificationError(f"no score named {score.name!r}")

    def used_columns(self) -> list[str]:
        """Data columns the model reads (scores, covariates, real intercept columns)."""
        cols: list[str] = []
        for s in self.scores():
            for e in s.elements:
                cols.extend(e.factors)
        cols.extend(self.covariates)
        cols.extend(self.intercepts)
        seen = set()
        return [c for c in cols if not (c in seen or seen.add(c))]


@dataclass(frozen=True)
class BaselineModel:
    """Covariates-only regression (no scores): the reference model for
    cross-validation and outlier passes."""

    covariates: tuple[str, ...] = ()
    intercepts: tuple[str, ...] = ("intercept",)
    family: str = GAUSSIAN

    def __post_init__(self):
        if self.family not in (GAUSSIAN, BINOMIAL):
            raise SpecificationError(f"unknown family {self.family!r}")
        if len(self.intercepts) < 1:
            raise SpecificationError("at least one intercept indicator is required")
        object.__setattr__(self, "covariates", tuple(self.covariates))
        object.__setattr__(self, "intercepts", tuple(self.intercepts))


def load_dataset(
    path,
    outcome: str,
    subject_id: str | None = None,
    columns: list[str] | None = None,
    delimiter: str = ",",
) -> Dataset:
    """Load a delimited text table (header row required, UTF-8, '.' decimals).

    Empty cells are missing values; rows missing any used column are dropped
    and counted in the returned Dataset's `n_dropped`. `columns` restricts
    which columns are considered used (default: every column in the file).

    Raises DataError for an unreadable file, a missing outcome/used column,
    or a non-numeric cell in a used column.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh, delimiter=delimiter)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"empty file: {path}") from None
            header = [h.strip() for h in header]
            rows = [r for r in reader if r and any(cell.strip() for cell in r)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    if len(set(header)) != len(header):
        raise DataError(f"duplicate column names in header of {path}")

    used = list(header) if columns is None else list(dict.fromkeys(columns))
    for required in [outcome] + ([subject_id] if subject_id else []):
        if required not in used:
            used.append(required)
    missing = [c for c in used if c not in header]
    if missing:
        raise DataError(f"missing column: {missing[0]!r} not in {path}")

    index = {name: header.index(name) for name in used}
    parsed: dict[str, list[float]] = {name: [] for name in used}
    n_dropped = 0
    for line_no, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}:{line_no}: expected {len(header)} cells, got {len(row)}")
        values = {}
        complete = True
        for name, j in index.items():
            cell = row[j].strip()
            if cell == "" or cell.upper() in ("NA", "NAN"):
                complete = False
                break
            try:
                values[name] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}:{line_no}: non-numeric cell {cell!r} in column {name!r}"
                ) from None
        if not complete:
            n_dropped += 1
            continue
        for name in used:
            parsed[name].append(values[name])

    if not parsed[outcome]:
        raise DataError(f"{path}: no complete rows (dropped {n_dropped})")
    arrays = {name: np.asarray(vals, dtype=float) for name, vals in parsed.items()}
    return Dataset(arrays, outcome, subject_id, n_dropped)


def expand_score_columns(score: ScoreSpec, data: Dataset) -> np.ndarray:
    """n x n_elements matrix; column j is the product of element j's factors."""
    cols = np.empty((data.n_rows, score.n_elements))
    for j, element in enumerate(score.elements):
        col = data.column(element.factors[0])
        for name in element.factors[1:]:
            col = col * data.column(name)
        cols[:, j] = col
    return cols


def compute_score(score: ScoreSpec, data: Dataset) -> np.ndarray:
    """Score values: expanded element columns times the weights."""
    return expand_score_columns(score, data) @ score.weights


def intercept_matrix(model: ModelStructure | BaselineModel, data: Dataset) -> np.ndarray:
    """Intercept indicator columns, validated to partition the rows.

    A single intercept name absent from the data is synthesized as ones.
    """
    names = model.intercepts
    if len(names) == 1 and names[0] not in data.columns:
        return np.ones((data.n_rows, 1))
    cols = np.column_stack([data.column(name) for name in names])
    if not np.all(np.isin(cols, (0.0, 1.0))):
        raise SpecificationError("intercept indicators must be 0/1 columns")
    active = cols.sum(axis=1)
    if not np.all(active == 1.0):
        bad = int(np.argmax(active != 1.0))
        raise SpecificationError(
            f"intercept indicators must partition rows: row {bad} has {active[bad]:.0f} active"
        )
    return cols


def validate_for_model(model: ModelStructure, data: Dataset) -> None:
    """Check the dataset satisfies the model's preconditions."""
    for name in model.used_columns():
        if len(model.intercepts) == 1 and name == model.intercepts[0] and name not in data.columns:
            continue
        data.column(name)
    if model.family == BINOMIAL:
        y = data.y
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise DataError("binomial family requires a 0/1 outcome")
    if not math.isfinite(float(np.sum(data.y))):
        raise DataError("outcome contains non-finite values")
