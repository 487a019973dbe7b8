import math

import numpy as np
import pytest

from scorefit import (
    BaselineModel,
    ModelStructure,
    RankDeficiencyError,
    ScoreSpec,
    SeparationError,
    fit_linear,
    fit_logistic,
    information_criteria,
    true_parameter_count,
)
from scorefit.glm import binomial_deviance, _logistic


def test_mean_fit():
    fit = fit_linear(np.ones((3, 1)), np.array([1.0, 2, 3]))
    assert fit.coefficients[0] == pytest.approx(2.0)
    assert fit.objective == pytest.approx(2.0)


def test_noiseless_line():
    x = np.array([1.0, 2, 3, 4])
    fit = fit_linear(x[:, None], 3 * x)
    assert fit.coefficients[0] == pytest.approx(3.0)
    assert fit.objective == pytest.approx(0.0, abs=1e-20)
    assert fit.loglik == math.inf


def test_duplicated_column_reports_rank_deficiency():
    x = np.arange(6.0)
    X = np.column_stack([np.ones(6), x, x])
    with pytest.raises(RankDeficiencyError) as err:
        fit_linear(X, x, column_names=["const", "x", "x_copy"])
    assert err.value.name == "x_copy"


def test_n_must_exceed_m():
    with pytest.raises(ValueError, match="more observations"):
        fit_linear(np.eye(3), np.ones(3))


def test_residuals_orthogonal_to_design(rng):
    for _ in range(10):
        X = rng.normal(size=(30, 4))
        y = rng.normal(size=30)
        fit = fit_linear(X, y)
        assert np.max(np.abs(X.T @ fit.residuals)) < 1e-8 * np.linalg.norm(y)


def test_matches_normal_equations_oracle(rng):
    for _ in range(10):
        X = rng.normal(size=(20, 4))
        y = rng.normal(size=20)
        fit = fit_linear(X, y)
        beta = np.linalg.solve(X.T @ X, X.T @ y)
        np.testing.assert_allclose(fit.coefficients, beta, rtol=1e-8)
        rss = float(np.sum((y - X @ beta) ** 2))
        cov = rss / (20 - 4) * np.linalg.inv(X.T @ X)
        np.testing.assert_allclose(fit.coef_covariance, cov, rtol=1e-7)


def test_offset_equals_shifted_target(rng):
    X = rng.normal(size=(25, 3))
    y = rng.normal(size=25)
    offset = rng.normal(size=25)
    with_offset = fit_linear(X, y, offset=offset)
    shifted = fit_linear(X, y - offset)
    np.testing.assert_allclose(with_offset.coefficients, shifted.coefficients)
    np.testing.assert_allclose(with_offset.fitted, shifted.fitted + offset)


def test_gaussian_loglik_formula(rng):
    X = rng.normal(size=(40, 2))
    y = rng.normal(size=40)
    fit = fit_linear(X, y)
    n = 40
    expected = -0.5 * n * (math.log(2 * math.pi * fit.objective / n) + 1)
    assert fit.loglik == pytest.approx(expected)


def test_logistic_balanced_intercept_is_zero():
    fit = fit_logistic(np.ones((2, 1)), np.array([0.0, 1.0]))
    assert fit.coefficients[0] == pytest.approx(0.0, abs=1e-8)
    np.testing.assert_allclose(fit.fitted, [0.5, 0.5], atol=1e-8)


def test_logistic_constant_outcome_is_separation():
    with pytest.raises(SeparationError):
        fit_logistic(np.ones((10, 1)), np.ones(10))


def test_logistic_offset_against_bisection_oracle(rng):
    # intercept-only with offset: beta solves mean(logistic(beta + o)) = mean(y)
    n = 200
    offset = rng.normal(size=n)
    y = (rng.uniform(size=n) < _logistic(0.4 + offset)).astype(float)
    fit = fit_logistic(np.ones((n, 1)), y, offset=offset)

    def score(b):
        return float(np.mean(_logistic(b + offset)) - y.mean())

    lo, hi = -10.0, 10.0
    for _ in range(80):
        mid = (lo + hi) / 2
        if score(mid) > 0:
            hi = mid
        else:
            lo = mid
    assert fit.coefficients[0] == pytest.approx((lo + hi) / 2, abs=1e-6)


def test_logistic_score_equation_at_optimum(rng):
    # gradient of the log-likelihood vanishes at the IRLS solution
    X = np.column_stack([np.ones(300), rng.normal(size=(300, 2))])
    eta = X @ np.array([-0.3, 0.8, -0.5])
    y = (rng.uniform(size=300) < _logistic(eta)).astype(float)
    fit = fit_logistic(X, y)
    assert np.max(np.abs(X.T @ (y - fit.fitted))) < 1e-6


def test_logistic_deviance_not_above_null_start(rng):
    X = np.column_stack([np.ones(100), rng.normal(size=100)])
    y = (rng.uniform(size=100) < 0.4).astype(float)
    fit = fit_logistic(X, y)
    assert fit.objective <= binomial_deviance(y, np.full(100, 0.5)) + 1e-9
    assert fit.objective == pytest.approx(-2 * fit.loglik)


def test_information_criteria_values():
    aic, bic = information_criteria(-100.0, 5, n=math.e**2)
    assert aic == pytest.approx(210.0)
    assert bic == pytest.approx(210.0)  # ln(n) = 2
    assert information_criteria(0.0, 0, 10) == (0.0, 0.0)


def test_criteria_increase_with_parameter_count():
    values = [information_criteria(-50.0, k, 30) for k in range(1, 5)]
    aics = [v[0] for v in values]
    bics = [v[1] for v in values]
    assert all(a2 > a1 for a1, a2 in zip(aics, aics[1:]))
    assert all(b2 > b1 for b1, b2 in zip(bics, bics[1:]))


def test_true_parameter_count_two_way():
    # 4 main coefficients + (6-1) + (3-1) free weights = 11 (scale excluded)
    structure = ModelStructure(
        "two_way",
        ScoreSpec.equal_weights("G", ("g1", "g2", "g3", "g4", "g1*g3", "g2*g3")),
        ScoreSpec.equal_weights("E", ("e1", "e2", "e3")),
    )
    assert true_parameter_count(structure) == 11


def test_true_parameter_count_three_way_fixed_and_covariates():
    structure = ModelStructure(
        "three_way",
        ScoreSpec.equal_weights("G", ("g1", "g2")),
        ScoreSpec.equal_weights("E", ("e1", "e2", "e3"), weights_fixed=True),
        env2=ScoreSpec.equal_weights("Z", ("z",)),
        covariates=("age", "sex"),
        intercepts=("t1", "t2"),
    )
    # 2 intercepts + 7 score terms + 2 covariates + (2-1) + 0 fixed + (1-1)
    assert true_parameter_count(structure) == 12


def test_true_parameter_count_baseline():
    assert true_parameter_count(BaselineModel(covariates=("a", "b"))) == 3
