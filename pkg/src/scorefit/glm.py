"""Fixed-effects linear and logistic regression with optional offsets.

These are the building blocks the alternating optimizer calls for every
sub-step, so both families expose the same objective convention: residual
sum of squares for Gaussian fits and deviance for binomial fits (both are
minimized). Offsets hold the already-estimated part of the linear predictor
constant during a block sub-fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import BINOMIAL, GAUSSIAN, BaselineModel, ModelStructure
from .errors import RankDeficiencyError, SeparationError

RANK_TOL = 1e-10
SEPARATION_BOUND = 1e4
IRLS_TOL = 1e-8
IRLS_MAX_ITER = 50


@dataclass
class DesignFit:
    """Result of one regression sub-fit.

    objective is RSS (Gaussian) or deviance (binomial); scale is the sigma^2
    estimate RSS/(n-m) for Gaussian and 1 for binomial. rank always equals
    the number of design columns: rank deficiency raises instead of dropping.
    """

    coefficients: np.ndarray
    coef_covariance: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    objective: float
    loglik: float
    scale: float
    rank: int

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.coef_covariance))


def _check_shape(X: np.ndarray, y: np.ndarray) -> tuple[int, int]:
    n, m = X.shape
    if len(y) != n:
        raise ValueError(f"X has {n} rows but y has {len(y)}")
    if n <= m:
        raise ValueError(f"need more observations than columns (n={n}, m={m})")
    return n, m


def _qr_full_rank(X: np.ndarray, column_names=None) -> tuple[np.ndarray, np.ndarray]:
    """Reduced QR; raises RankDeficiencyError naming the dependent column."""
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    tol = RANK_TOL * (diag.max() if diag.size else 0.0)
    bad = np.flatnonzero(diag <= tol)
    if bad.size:
        j = int(bad[0])
        name = column_names[j] if column_names is not None else None
        raise RankDeficiencyError(j, name)
    return Q, R


def fit_linear(
    X: np.ndarray,
    y: np.ndarray,
    offset: np.ndarray | None = None,
    column_names=None,
) -> DesignFit:
    """Least squares for y = offset + X beta + eps, solved via QR.

    coef_covariance is sigma^2 (X'X)^-1 with sigma^2 = RSS/(n-m); loglik is
    the Gaussian maximum log-likelihood at beta-hat. Requires n > m and a
    full-column-rank X.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, m = _check_shape(X, y)
    target = y if offset is None else y - offset

    Q, R = _qr_full_rank(X, column_names)
    beta = np.linalg.solve(R, Q.T @ target)
    linpred = X @ beta
    residuals = target - linpred
    rss = float(residuals @ residuals)

    r_inv = np.linalg.solve(R, np.eye(m))
    xtx_inv = r_inv @ r_inv.T
    sigma2 = rss / (n - m)
    cov = sigma2 * xtx_inv
    # ML variance RSS/n in the likelihood; +inf loglik on an exact fit
    loglik = math.inf if rss <= 0 else -0.5 * n * (math.log(2 * math.pi * rss / n) + 1.0)
    fitted = linpred if offset is None else linpred + offset
    return DesignFit(beta, cov, fitted, residuals, rss, loglik, sigma2, m)


def _logistic(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    ex = np.exp(eta[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _binomial_loglik(y: np.ndarray, mu: np.ndarray) -> float:
    mu = np.clip(mu, 1e-12, 1 - 1e-12)
    return float(np.sum(y * np.log(mu) + (1 - y) * np.log1p(-mu)))


def binomial_deviance(y: np.ndarray, mu: np.ndarray) -> float:
    """Deviance for 0/1 outcomes (saturated log-likelihood is 0)."""
    return -2.0 * _binomial_loglik(y, mu)


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    offset: np.ndarray | None = None,
    beta0: np.ndarray | None = None,
    column_names=None,
) -> DesignFit:
    """Binomial logit fit with a fixed offset via IRLS.

    Step-halving keeps the deviance non-increasing across iterations;
    convergence when the relative deviance change is below 1e-8, capped at
    50 iterations. Diverging coefficients (|beta| > 1e4) raise
    SeparationError.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, m = _check_shape(X, y)
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError("logistic fit requires a 0/1 outcome")
    _qr_full_rank(X, column_names)
    off = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)

    beta = np.zeros(m) if beta0 is None else np.asarray(beta0, dtype=float).copy()
    eta = off + X @ beta
    mu = _logistic(eta)
    dev = binomial_deviance(y, mu)

    for _ in range(IRLS_MAX_ITER):
        w = np.clip(mu * (1.0 - mu), 1e-10, None)
        z = (eta - off) + (y - mu) / w
        sw = np.sqrt(w)
        Q, R = _qr_full_rank(sw[:, None] * X, column_names)
        beta_new = np.linalg.solve(R, Q.T @ (sw * z))

        step = beta_new - beta
        dev_new = math.inf
        for _ in range(30):  # step-halving: never let the deviance rise
            cand = beta + step
            eta_c = off + X @ cand
            dev_new = binomial_deviance(y, _logistic(eta_c))
            if dev_new <= dev + 1e-12:
                beta_new = cand
                break
            step *= 0.5
        else:
            beta_new = beta
            dev_new = dev

        beta = beta_new
        eta = off + X @ beta
        mu = _logistic(eta)
        if np.max(np.abs(beta)) > SEPARATION_BOUND:
            raise SeparationError(
                f"logistic fit diverged (max |coefficient| > {SEPARATION_BOUND:g}); "
                "data are (quasi-)separated"
            )
        if abs(dev - dev_new) < IRLS_TOL * (abs(dev_new) + 0.1):
            dev = dev_new
            break
        dev = dev_new

    # a saturated fit of a binary outcome is separation by definition; the
    # coefficient bound alone cannot trip within the iteration cap
    if dev < 1e-6 and np.max(np.abs(beta)) > 10.0:
        raise SeparationError(
            "logistic fit reached zero deviance with diverging coefficients; "
            "data are (quasi-)separated"
        )
    w = np.clip(mu * (1.0 - mu), 1e-10, None)
    info = X.T @ (w[:, None] * X)
    cov = np.linalg.inv(info)
    loglik = _binomial_loglik(y, mu)
    return DesignFit(beta, cov, mu, y - mu, dev, loglik, 1.0, m)


def information_criteria(loglik: float, true_param_count: int, n: float) -> tuple[float, float]:
    """AIC and BIC from a log-likelihood and the true parameter count.

    The count must include every estimated quantity: main coefficients,
    covariates, (n_s - 1) free weights per estimated score, and the Gaussian
    scale when applicable — software defaults undercount the score weights.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if true_param_count < 0:
        raise ValueError("true_param_count must be >= 0")
    aic = -2.0 * loglik + 2.0 * true_param_count
    bic = -2.0 * loglik + math.log(n) * true_param_count
    return aic, bic


def true_parameter_count(model: ModelStructure | BaselineModel) -> int:
    """Number of estimated mean parameters in the model.

    Intercepts and covariates count once each; a two-way structure adds its 3
    score coefficients and a three-way its 7; every non-fixed score adds
    (n_elements - 1) free weights (the L1 constraint pins one). The Gaussian
    scale parameter is NOT included here; add 1 when forming likelihood-based
    criteria for Gaussian fits.
    """
    count = len(model.intercepts) + len(model.covariates)
    if isinstance(model, BaselineModel):
        return count
    count += 3 if model.kind == "two_way" else 7
    for score in model.scores():
        if not score.weights_fixed:
            count += score.n_elements - 1
    return count


def family_objective(family: str, y: np.ndarray, mu: np.ndarray) -> float:
    """The minimized objective at fitted means: RSS or deviance."""
    if family == GAUSSIAN:
        r = y - mu
        return float(r @ r)
    if family == BINOMIAL:
        return binomial_deviance(y, mu)
    raise ValueError(f"unknown family {family!r}")
