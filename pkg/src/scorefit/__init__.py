"""scorefit: interaction models between L1-normalized weighted latent scores,
estimated by alternating block optimization."""

from .data import (
    BINOMIAL,
    GAUSSIAN,
    THREE_WAY,
    TWO_WAY,
    BaselineModel,
    Dataset,
    ModelStructure,
    ScoreElement,
    ScoreSpec,
    compute_score,
    expand_score_columns,
    load_dataset,
)
from .errors import (
    ConfigError,
    DataError,
    RankDeficiencyError,
    SeparationError,
    SpecificationError,
    UnidentifiedScoreError,
)
from .glm import (
    DesignFit,
    fit_linear,
    fit_logistic,
    information_criteria,
    true_parameter_count,
)
from .optimizer import (
    FitOptions,
    FitResult,
    apply_sign_flips,
    canonicalize,
    fit_alternating,
    normalize_l1,
    predict,
)
from .selection import (
    Candidates,
    CvResult,
    OutlierReport,
    StepwiseTrace,
    assign_folds,
    cross_validate,
    detect_outliers,
    roc_auc,
    stepwise_search,
)
from .simulation import (
    Scenario,
    SimulationReport,
    Truth,
    generate_example,
    population_r2_max,
    r2_max,
    run_study,
    true_structure,
)
from .config import ModelConfig, load_model_config, parse_model_config

__version__ = "0.1.0"

__all__ = [
    "BINOMIAL",
    "GAUSSIAN",
    "THREE_WAY",
    "TWO_WAY",
    "BaselineModel",
    "Candidates",
    "ConfigError",
    "CvResult",
    "DataError",
    "Dataset",
    "DesignFit",
    "FitOptions",
    "FitResult",
    "ModelConfig",
    "ModelStructure",
    "OutlierReport",
    "RankDeficiencyError",
    "Scenario",
    "ScoreElement",
    "ScoreSpec",
    "SeparationError",
    "SimulationReport",
    "SpecificationError",
    "StepwiseTrace",
    "Truth",
    "UnidentifiedScoreError",
    "apply_sign_flips",
    "assign_folds",
    "canonicalize",
    "compute_score",
    "cross_validate",
    "detect_outliers",
    "expand_score_columns",
    "fit_alternating",
    "fit_linear",
    "fit_logistic",
    "generate_example",
    "information_criteria",
    "load_dataset",
    "load_model_config",
    "normalize_l1",
    "parse_model_config",
    "population_r2_max",
    "predict",
    "r2_max",
    "roc_auc",
    "run_study",
    "stepwise_search",
    "true_parameter_count",
    "true_structure",
]
