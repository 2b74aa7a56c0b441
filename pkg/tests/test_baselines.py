import math

import numpy as np
import pytest

from kdbalance import (
    MissingPotentialOutcomes,
    PropensityModel,
    WeightScheme,
    fit_propensity_logistic,
    ipw_ate_weights,
    ipw_att_weights,
    oracle_ate,
    oracle_att,
    unadjusted_weights,
    validate_dataset,
)


def _logit_dataset(rng, n, beta):
    """T ~ Bernoulli(sigmoid([1, X] @ beta)), X standard normal."""
    d = len(beta) - 1
    X = rng.standard_normal((n, d))
    eta = beta[0] + X @ np.asarray(beta[1:])
    p = 1.0 / (1.0 + np.exp(-eta))
    T = (rng.random(n) < p).astype(int)
    return validate_dataset(X, T, np.zeros(n))


def test_logistic_recovers_coefficients():
    rng = np.random.default_rng(40)
    data = _logit_dataset(rng, 5000, beta=[0.0, 1.0])
    model = fit_propensity_logistic(data)
    assert model.converged
    assert not model.separated
    np.testing.assert_allclose(model.coefficients, [0.0, 1.0], atol=0.15)


def test_logistic_null_model_matches_base_rate():
    # no real signal: intercept ~ logit(n1/N), slopes ~ 0
    rng = np.random.default_rng(41)
    data = _logit_dataset(rng, 2000, beta=[0.4, 0.0, 0.0])
    model = fit_propensity_logistic(data)
    assert model.converged
    logit_rate = math.log(data.n1 / data.n0)
    assert model.coefficients[0] == pytest.approx(logit_rate, abs=0.1)
    np.testing.assert_allclose(model.coefficients[1:], 0.0, atol=0.15)


def test_logistic_loglik_never_decreases():
    rng = np.random.default_rng(42)
    data = _logit_dataset(rng, 300, beta=[0.2, 0.8, -0.5])
    model = fit_propensity_logistic(data)
    path = model.loglik_path
    assert len(path) >= 2
    for earlier, later in zip(path, path[1:]):
        assert later >= earlier - 1e-12


def test_logistic_separation_flagged():
    # a covariate that perfectly splits the groups with a thin margin,
    # so the unpenalized coefficient runs away
    X = np.concatenate([np.linspace(0.05, 1.0, 20), np.linspace(-1.0, -0.05, 20)])
    T = np.array([1] * 20 + [0] * 20)
    data = validate_dataset(X[:, None], T, np.zeros(40))
    model = fit_propensity_logistic(data)
    assert model.separated
    assert not model.converged
    assert np.max(np.abs(model.coefficients)) > 30.0
    # fitted probabilities stay clipped away from 0 and 1
    assert model.fitted.min() >= 1e-6
    assert model.fitted.max() <= 1.0 - 1e-6


def test_logistic_gradient_small_at_convergence():
    rng = np.random.default_rng(43)
    data = _logit_dataset(rng, 500, beta=[0.0, 0.5, 0.5])
    model = fit_propensity_logistic(data)
    Z = np.column_stack([np.ones(data.n), data.X])
    grad = Z.T @ (data.T - 1.0 / (1.0 + np.exp(-(Z @ model.coefficients))))
    assert np.max(np.abs(grad)) <= 1e-6


def test_ipw_ate_hand_example():
    data = validate_dataset(
        np.array([[0.0], [1.0], [2.0]]), [1, 1, 0], [1.0, 2.0, 3.0]
    )
    model = PropensityModel(
        coefficients=np.zeros(2),
        fitted=np.array([0.8, 0.2, 0.5]),
        converged=True,
        iterations=1,
    )
    w = ipw_ate_weights(model, data)
    # p ~ (1/.8, 1/.2) -> (.2, .8) after normalizing
    np.testing.assert_allclose(w.p, [0.2, 0.8], atol=1e-12)
    np.testing.assert_allclose(w.q, [1.0], atol=1e-12)
    assert w.scheme is WeightScheme.IPW_ATE


def test_ipw_att_hand_example():
    data = validate_dataset(
        np.array([[0.0], [1.0], [2.0], [3.0]]), [1, 1, 0, 0], np.zeros(4)
    )
    model = PropensityModel(
        coefficients=np.zeros(2),
        fitted=np.array([0.5, 0.5, 0.5, 0.2]),
        converged=True,
        iterations=1,
    )
    w = ipw_att_weights(model, data)
    np.testing.assert_allclose(w.p, [0.5, 0.5])
    # q_j = e_j / (n1 (1 - e_j)) with n1 = 2, unnormalized
    np.testing.assert_allclose(w.q, [0.5, 0.125], atol=1e-12)
    w2 = ipw_att_weights(model, data, renormalize=True)
    np.testing.assert_allclose(w2.q, [0.8, 0.2], atol=1e-12)


def test_unadjusted_weights_uniform(toy_data):
    w = unadjusted_weights(toy_data)
    np.testing.assert_allclose(w.p, 1.0 / 3.0)
    np.testing.assert_allclose(w.q, 1.0 / 3.0)
    assert w.scheme is WeightScheme.UNADJUSTED


def test_oracles():
    X = np.zeros((4, 1))
    T = np.array([1, 1, 0, 0])
    Y0 = np.array([1.0, 2.0, 3.0, 4.0])
    Y1 = Y0 + np.array([10.0, 20.0, 30.0, 40.0])
    Y = np.where(T == 1, Y1, Y0)
    data = validate_dataset(X, T, Y, Y0, Y1)
    assert oracle_ate(data) == pytest.approx(25.0)
    assert oracle_att(data) == pytest.approx(15.0)


def test_oracles_require_potential_outcomes(toy_data):
    with pytest.raises(MissingPotentialOutcomes):
        oracle_ate(toy_data)
    with pytest.raises(MissingPotentialOutcomes):
        oracle_att(toy_data)
