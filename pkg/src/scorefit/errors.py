"""Exception types shared across the package."""


class DataError(ValueError):
    """Bad input data: missing column, non-numeric cell, length mismatch."""


class ConfigError(ValueError):
    """Malformed model configuration document."""


class SpecificationError(ValueError):
    """Invalid score or model structure (duplicate elements, bad weights, ...)."""


class RankDeficiencyError(RuntimeError):
    """Design matrix is rank deficient; carries the offending column."""

    def __init__(self, column: int, name: str | None = None):
        self.column = column
        self.name = name
        label = name if name is not None else f"column {column}"
        super().__init__(f"design matrix is rank deficient: {label} is linearly dependent")


class SeparationError(RuntimeError):
    """Logistic fit diverged (perfect or quasi-perfect separation)."""


class UnidentifiedScoreError(RuntimeError):
    """Score sub-problem has an identically zero multiplier (all score-bearing coefficients are 0)."""
