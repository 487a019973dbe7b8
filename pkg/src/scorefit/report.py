"""Report documents: one machine-readable JSON file plus a human-readable
text table per run. Same inputs and seed give byte-identical output once the
timestamp header is suppressed."""

from __future__ import annotations

import json
import math
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .optimizer import FitResult
from .selection import CvResult, OutlierReport, StepwiseTrace
from .simulation import SimulationReport, format_summary

SCHEMA_VERSION = 1


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _base_doc(command: str, run: dict, timestamp: bool) -> dict:
    doc = {"schema_version": SCHEMA_VERSION, "command": command, "run": run}
    if timestamp:
        doc["created"] = _timestamp()
    return doc


def _weight_rows(fit: FitResult) -> list[dict]:
    rows = []
    for score in fit.structure.scores():
        ses = fit.weight_se[score.name]
        for label, w, se in zip(score.element_labels, score.weights, ses):
            rows.append(
                {
                    "score": score.name,
                    "element": label,
                    "weight": float(w),
                    "se": None if math.isnan(se) else float(se),
                    "fixed": score.weights_fixed,
                    "contribution_pct": abs(float(w)) * 100.0,
                    "direction": "positive" if w >= 0 else "negative",
                }
            )
    return rows


def fit_doc(fit: FitResult, run: dict, n_dropped: int, timestamp: bool = True) -> dict:
    doc = _base_doc("fit", run, timestamp)
    doc.update(
        {
            "converged": fit.converged,
            "iterations": fit.iterations,
            "n_obs": fit.n_obs,
            "n_dropped_rows": n_dropped,
            "family": fit.structure.family,
            "kind": fit.structure.kind,
            "coefficients": [
                {"name": k, "estimate": v, "se": fit.se[k]} for k, v in fit.coefficients.items()
            ],
            "weights": _weight_rows(fit),
            "canonical_flips": fit.canonical_form,
            "r_squared": fit.r_squared,
            "loglik": fit.loglik,
            "aic": fit.aic,
            "bic": fit.bic,
            "objective": fit.objective,
            "objective_trace": [float(v) for v in fit.objective_trace],
        }
    )
    return doc


def _header(doc: dict, title: str) -> list[str]:
    lines = []
    if "created" in doc:
        lines.append(f"# generated {doc['created']}")
    lines.append(title)
    lines.append("=" * len(title))
    return lines


def render_fit_text(doc: dict) -> str:
    lines = _header(doc, "Model fit")
    lines.append(
        f"family={doc['family']}  kind={doc['kind']}  n={doc['n_obs']}"
        f"  dropped_rows={doc['n_dropped_rows']}"
    )
    status = "converged" if doc["converged"] else "DID NOT CONVERGE"
    lines.append(f"{status} after {doc['iterations']} iterations")
    lines.append("")
    lines.append("Coefficients (canonical signs)")
    lines.append(f"  {'term':<24} {'estimate':>12} {'se':>12}")
    for row in doc["coefficients"]:
        lines.append(f"  {row['name']:<24} {row['estimate']:>12.4f} {row['se']:>12.4f}")
    lines.append("")
    lines.append("Score weights")
    lines.append(f"  {'score':<8} {'element':<16} {'weight':>9} {'se':>9}  contribution")
    for row in doc["weights"]:
        se = "fixed" if row["fixed"] else (f"{row['se']:.4f}" if row["se"] is not None else "-")
        pct = f"{row['contribution_pct']:.0f}% {row['direction']}"
        lines.append(
            f"  {row['score']:<8} {row['element']:<16} {row['weight']:>9.4f} {se:>9}  {pct}"
        )
    lines.append("")
    lines.append(
        f"In-sample R2 = {doc['r_squared']:.4f}   loglik = {doc['loglik']:.3f}   "
        f"AIC = {doc['aic']:.2f}   BIC = {doc['bic']:.2f}"
    )
    trace = ", ".join(f"{v:.6g}" for v in doc["objective_trace"])
    lines.append(f"Objective trace: {trace}")
    return "\n".join(lines) + "\n"


def cv_doc(cv: CvResult, run: dict, timestamp: bool = True) -> dict:
    doc = _base_doc("cv", run, timestamp)
    doc.update(
        {
            "r2_cv": cv.r2,
            "partial": cv.partial,
            "n_folds": len(cv.per_fold),
            "per_fold": cv.per_fold,
            "fold_assignment": cv.fold_assignment.tolist(),
            "predictions": [None if math.isnan(p) else p for p in cv.predictions],
        }
    )
    return doc


def render_cv_text(doc: dict) -> str:
    lines = _header(doc, "Cross-validation")
    lines.append(f"folds = {doc['n_folds']}   out-of-sample R2 = {doc['r2_cv']:.4f}")
    if doc["partial"]:
        failed = [f for f in doc["per_fold"] if f["error"]]
        lines.append(f"PARTIAL: {len(failed)} fold(s) failed")
        for f in failed:
            lines.append(f"  fold {f['fold']}: {f['error']}")
    return "\n".join(lines) + "\n"


def outliers_doc(rep: OutlierReport, run: dict, timestamp: bool = True) -> dict:
    doc = _base_doc("outliers", run, timestamp)
    doc.update(
        {
            "threshold": rep.threshold,
            "residual_sd": rep.residual_sd,
            "degenerate": rep.degenerate,
            "note": rep.note,
            "flagged_rows": [
                {"row": int(i), "zscore": float(rep.zscores[i])} for i in rep.rows
            ],
            "r2_cv": rep.cv.r2 if rep.cv is not None else None,
        }
    )
    return doc


def render_outliers_text(doc: dict) -> str:
    lines = _header(doc, "Outlier scan (standardized LOOCV residuals)")
    lines.append(f"threshold = {doc['threshold']}   residual SD = {doc['residual_sd']:.4f}")
    if doc["degenerate"]:
        lines.append(f"degenerate: {doc['note']}")
    elif not doc["flagged_rows"]:
        lines.append("no rows flagged")
    else:
        lines.append(f"{'row':>6} {'|z|':>8}")
        for row in doc["flagged_rows"]:
            lines.append(f"{row['row']:>6} {abs(row['zscore']):>8.2f}")
    return "\n".join(lines) + "\n"


def stepwise_doc(trace: StepwiseTrace, run: dict, timestamp: bool = True) -> dict:
    doc = _base_doc("stepwise", run, timestamp)
    doc.update(
        {
            "criterion": trace.criterion,
            "steps": [
                {
                    "action": s.move.action,
                    "target": s.move.target,
                    "element": s.move.element,
                    "criterion_before": s.criterion_before,
                    "criterion_after": s.criterion_after,
                    "advisory": s.advisory,
                }
                for s in trace.steps
            ],
            "final_model": {
                "covariates": list(trace.final_structure.covariates),
                "scores": [
                    {
                        "name": sc.name,
                        "elements": sc.element_labels,
                        "weights": [float(w) for w in sc.weights],
                    }
                    for sc in trace.final_structure.scores()
                ],
            },
        }
    )
    return doc


def render_stepwise_text(doc: dict) -> str:
    lines = _header(doc, f"Stepwise search ({doc['criterion']})")
    if not doc["steps"]:
        lines.append("no move improved the criterion")
    for i, s in enumerate(doc["steps"], start=1):
        lines.append(
            f"{i}. {s['action']} {s['element']} -> {s['target']}: "
            f"{s['criterion_before']:.6g} -> {s['criterion_after']:.6g}"
        )
        if s["advisory"]:
            lines.append(f"   note: {s['advisory']}")
    lines.append("")
    lines.append("Final model")
    for sc in doc["final_model"]["scores"]:
        pieces = ", ".join(f"{e}={w:+.3f}" for e, w in zip(sc["elements"], sc["weights"]))
        lines.append(f"  {sc['name']}: {pieces}")
    if doc["final_model"]["covariates"]:
        lines.append(f"  covariates: {', '.join(doc['final_model']['covariates'])}")
    return "\n".join(lines) + "\n"


def simulation_doc(report: SimulationReport, run: dict, timestamp: bool = True) -> dict:
    doc = _base_doc("simulate", run, timestamp)
    doc.update(report.to_dict())
    return doc


def render_simulation_text(doc: dict, report: SimulationReport) -> str:
    lines = _header(doc, "Simulation study")
    lines.append(format_summary(report))
    return "\n".join(lines) + "\n"


class _Encoder(json.JSONEncoder):
    def default(self, o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        return super().default(o)


def write_report(doc: dict, text: str, out) -> tuple[Path, Path]:
    """Write <out>.json and <out>.txt (an existing .json/.txt suffix is the stem)."""
    out = Path(out)
    if out.suffix in (".json", ".txt"):
        out = out.with_suffix("")
    json_path = out.with_suffix(".json")
    txt_path = out.with_suffix(".txt")
    json_path.parent.mkdir(parents=True, exist_ok=True)
    json_path.write_text(json.dumps(doc, indent=2, cls=_Encoder, allow_nan=True) + "\n")
    txt_path.write_text(text)
    return json_path, txt_path
