"""Command-line entry point.

Exit codes: 0 success, 1 usage/config/data error, 2 numerical failure
(rank deficiency, separation, unidentified sub-step, non-convergence).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

from . import report as rpt
from .config import load_model_config
from .data import load_dataset
from .errors import (
    ConfigError,
    DataError,
    RankDeficiencyError,
    SeparationError,
    SpecificationError,
    UnidentifiedScoreError,
)
from .optimizer import DEFAULT_DELTA, DEFAULT_MAX_ITERATIONS, DEFAULT_SEED, FitOptions, canonicalize, fit_alternating
from .selection import cross_validate, detect_outliers, stepwise_search
from .simulation import Scenario, run_study

USAGE_ERROR, NUMERICAL_ERROR = 1, 2


@dataclass
class RunConfig:
    command: str
    data_path: str | None
    model_path: str | None
    output_path: str
    options: dict

    def as_run_record(self) -> dict:
        return {
            "command": self.command,
            "data": self.data_path,
            "model": self.model_path,
            **{k: v for k, v in self.options.items() if v is not None},
        }


def _add_common(p: argparse.ArgumentParser, data: bool = True) -> None:
    if data:
        p.add_argument("--data", required=True, help="input CSV (header row required)")
        p.add_argument("--model", required=True, help="model config JSON")
        p.add_argument("--tab", action="store_true", help="tab-delimited input instead of comma")
    p.add_argument("--out", default="scorefit_report", help="report path (writes .json and .txt)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"RNG seed (default {DEFAULT_SEED})")
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="weight-change convergence threshold")
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITERATIONS, help="iteration cap")
    p.add_argument("--threads", type=int, default=os.cpu_count(), help="worker threads for folds/reps")
    p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp header")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scorefit",
        description="Fit weighted-score interaction models by alternating optimization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the configured model")
    _add_common(p)

    p = sub.add_parser("cv", help="subject-grouped cross-validation")
    _add_common(p)
    p.add_argument("--folds", default="loo", help="'loo' or an integer fold count")

    p = sub.add_parser("stepwise", help="greedy score/covariate search")
    _add_common(p)
    p.add_argument("--direction", default="forward", choices=["forward", "backward", "bidirectional"])
    p.add_argument("--criterion", default="bic", choices=["aic", "bic", "cv_r2", "cv_auc"])
    p.add_argument("--folds", default="loo", help="CV scheme for cv_* criteria")
    p.add_argument("--interactive", action="store_true", help="choose each move at the terminal")

    p = sub.add_parser("outliers", help="flag rows by standardized LOOCV residuals")
    _add_common(p)
    p.add_argument("--threshold", type=float, default=2.8, help="flag |z| above this (2.8 or 2.5)")

    p = sub.add_parser("simulate", help="run one Monte-Carlo scenario")
    _add_common(p, data=False)
    p.add_argument("--example", type=int, default=1, choices=[1, 2])
    p.add_argument("--n", type=int, default=1000, help="training sample size")
    p.add_argument("--n-val", type=int, default=100, help="validation sample size")
    p.add_argument("--effect", default="medium", choices=["medium", "small"])
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--start", default="equal", choices=["equal", "true"])
    p.add_argument("--gene-distribution", default="binomial", choices=["binomial", "gaussian_matched"])
    return parser


def _parse_folds(text: str):
    if text == "loo":
        return "loo"
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"--folds must be 'loo' or an integer, got {text!r}") from None


def _load_inputs(args):
    cfg = load_model_config(args.model)
    data = load_dataset(
        args.data,
        outcome=cfg.outcome,
        subject_id=cfg.subject_id,
        columns=cfg.structure.used_columns(),
        delimiter="\t" if args.tab else ",",
    )
    return cfg, data


def _options(args) -> FitOptions:
    return FitOptions(delta=args.delta, max_iterations=args.max_iter, seed=args.seed)


def _run(args) -> int:
    run = RunConfig(
        command=args.command,
        data_path=getattr(args, "data", None),
        model_path=getattr(args, "model", None),
        output_path=args.out,
        options={
            "seed": args.seed,
            "delta": args.delta,
            "max_iter": args.max_iter,
            "folds": getattr(args, "folds", None),
            "direction": getattr(args, "direction", None),
            "criterion": getattr(args, "criterion", None),
            "threshold": getattr(args, "threshold", None),
        },
    ).as_run_record()
    timestamp = not args.no_timestamp
    options = _options(args)

    if args.command == "fit":
        cfg, data = _load_inputs(args)
        fit = canonicalize(fit_alternating(cfg.structure, data, options))
        doc = rpt.fit_doc(fit, run, data.n_dropped, timestamp)
        text = rpt.render_fit_text(doc)
        rpt.write_report(doc, text, args.out)
        print(text, end="")
        if not fit.converged:
            print(f"error: no convergence within {args.max_iter} iterations", file=sys.stderr)
            return NUMERICAL_ERROR
        return 0

    if args.command == "cv":
        cfg, data = _load_inputs(args)
        cv = cross_validate(
            cfg.structure, data, _parse_folds(args.folds), args.seed, options, args.threads
        )
        doc = rpt.cv_doc(cv, run, timestamp)
        text = rpt.render_cv_text(doc)
        rpt.write_report(doc, text, args.out)
        print(text, end="")
        return 0

    if args.command == "outliers":
        cfg, data = _load_inputs(args)
        result = detect_outliers(cfg.structure, data, args.threshold, args.seed, options, args.threads)
        doc = rpt.outliers_doc(result, run, timestamp)
        text = rpt.render_outliers_text(doc)
        rpt.write_report(doc, text, args.out)
        print(text, end="")
        return 0

    if args.command == "stepwise":
        cfg, data = _load_inputs(args)
        if cfg.candidates is None:
            raise ConfigError("stepwise needs a 'candidates' section in the model config")
        trace = stepwise_search(
            cfg.structure,
            data,
            cfg.candidates,
            direction=args.direction,
            criterion=args.criterion,
            scheme=_parse_folds(args.folds),
            seed=args.seed,
            options=options,
            interactive=args.interactive,
            threads=args.threads,
        )
        doc = rpt.stepwise_doc(trace, run, timestamp)
        text = rpt.render_stepwise_text(doc)
        rpt.write_report(doc, text, args.out)
        print(text, end="")
        return 0

    if args.command == "simulate":
        scenario = Scenario(
            example=args.example,
            n_train=args.n,
            n_val=args.n_val,
            effect=args.effect,
            start=args.start,
            reps=args.reps,
            seed=args.seed,
            gene_distribution=args.gene_distribution,
        )
        result = run_study(scenario, options, args.threads)
        doc = rpt.simulation_doc(result, run, timestamp)
        text = rpt.render_simulation_text(doc, result)
        rpt.write_report(doc, text, args.out)
        print(text, end="")
        return 0

    raise AssertionError(f"unhandled command {args.command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0
    try:
        return _run(args)
    except (ConfigError, DataError, SpecificationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (RankDeficiencyError, SeparationError, UnidentifiedScoreError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
