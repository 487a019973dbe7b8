"""Model configuration documents.

A config is a JSON object naming the outcome, the model kind and family, the
scores (elements, optional starting weights, optional fixed flag), optional
covariates/intercept indicators/subject id, and an optional stepwise
candidate pool. Unknown keys are rejected at every level; the grammar is
documented in the README.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import THREE_WAY, TWO_WAY, ModelStructure, ScoreSpec
from .errors import ConfigError, SpecificationError
from .selection import Candidates

_TOP_KEYS = {
    "outcome",
    "subject_id",
    "kind",
    "family",
    "intercepts",
    "covariates",
    "genetic",
    "env1",
    "env2",
    "candidates",
}
_SCORE_KEYS = {"name", "elements", "weights", "fixed"}
_CANDIDATE_KEYS = {"scores", "covariates"}
_DEFAULT_SCORE_NAMES = {"genetic": "G", "env1": "E1", "env2": "E2"}


@dataclass(frozen=True)
class ModelConfig:
    structure: ModelStructure
    outcome: str
    subject_id: str | None
    candidates: Candidates | None


def _reject_unknown(obj: dict, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} in {where}")


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ConfigError(f"missing key {key!r} in {where}")
    return obj[key]


def _string(value, key: str) -> str:
    if not isinstance(value, str) or not value:
        raise ConfigError(f"{key!r} must be a non-empty string")
    return value


def _string_list(value, key: str) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigError(f"{key!r} must be a list of strings")
    return value


def _parse_score(obj, role: str) -> ScoreSpec:
    if not isinstance(obj, dict):
        raise ConfigError(f"{role!r} must be an object")
    _reject_unknown(obj, _SCORE_KEYS, role)
    name = obj.get("name", _DEFAULT_SCORE_NAMES[role])
    elements = _require(obj, "elements", role)
    if not isinstance(elements, list) or not elements:
        raise ConfigError(f"{role}.elements must be a non-empty list")
    for el in elements:
        if not (isinstance(el, str) or (isinstance(el, list) and all(isinstance(f, str) for f in el))):
            raise ConfigError(f"{role}.elements entries must be strings or lists of strings")
    fixed = obj.get("fixed", False)
    if not isinstance(fixed, bool):
        raise ConfigError(f"{role}.fixed must be a boolean")
    try:
        if "weights" in obj:
            weights = np.asarray(obj["weights"], dtype=float)
            return ScoreSpec(_string(name, f"{role}.name"), tuple(elements), weights, fixed)
        return ScoreSpec.equal_weights(_string(name, f"{role}.name"), elements, fixed)
    except (SpecificationError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid score {role!r}: {exc}") from exc


def _parse_candidates(obj, structure: ModelStructure) -> Candidates:
    if not isinstance(obj, dict):
        raise ConfigError("'candidates' must be an object")
    _reject_unknown(obj, _CANDIDATE_KEYS, "candidates")
    scores = obj.get("scores", {})
    if not isinstance(scores, dict):
        raise ConfigError("candidates.scores must be an object")
    known = {s.name for s in structure.scores()}
    pool: dict[str, tuple] = {}
    for name, elements in scores.items():
        if name not in known:
            raise ConfigError(f"candidates.scores refers to unknown score {name!r}")
        if not isinstance(elements, list):
            raise ConfigError(f"candidates.scores[{name!r}] must be a list")
        pool[name] = tuple(elements)
    covariates = tuple(_string_list(obj.get("covariates", []), "candidates.covariates"))
    return Candidates(pool, covariates)


def parse_model_config(doc: dict) -> ModelConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    _reject_unknown(doc, _TOP_KEYS, "config")

    outcome = _string(_require(doc, "outcome", "config"), "outcome")
    kind = _string(_require(doc, "kind", "config"), "kind")
    if kind not in (TWO_WAY, THREE_WAY):
        raise ConfigError(f"kind must be 'two_way' or 'three_way', got {kind!r}")
    family = doc.get("family", "gaussian")
    subject_id = doc.get("subject_id")
    if subject_id is not None:
        subject_id = _string(subject_id, "subject_id")

    genetic = _parse_score(_require(doc, "genetic", "config"), "genetic")
    env1 = _parse_score(_require(doc, "env1", "config"), "env1")
    env2 = None
    if kind == THREE_WAY:
        env2 = _parse_score(_require(doc, "env2", "config"), "env2")
    elif "env2" in doc:
        raise ConfigError("env2 is only valid for kind 'three_way'")

    covariates = tuple(_string_list(doc.get("covariates", []), "covariates"))
    intercepts = tuple(_string_list(doc.get("intercepts", ["intercept"]), "intercepts"))

    try:
        structure = ModelStructure(
            kind=kind,
            genetic=genetic,
            env1=env1,
            env2=env2,
            covariates=covariates,
            intercepts=intercepts,
            family=family,
        )
    except SpecificationError as exc:
        raise ConfigError(str(exc)) from exc

    candidates = None
    if "candidates" in doc:
        candidates = _parse_candidates(doc["candidates"], structure)
    return ModelConfig(structure, outcome, subject_id, candidates)


def load_model_config(path) -> ModelConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return parse_model_config(doc)
