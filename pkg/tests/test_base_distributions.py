import math

import numpy as np
import pytest

from extremes.base_distributions import check_support, make_model, model_from_spec, model_spec
from extremes.errors import DomainError, ParameterError, SupportError


def test_exponential(exponential):
    assert exponential.cdf(100.0) == pytest.approx(1 - math.exp(-1))
    assert exponential.logpdf(100.0) == pytest.approx(math.log(0.01) - 1)
    assert exponential.quantile(0.5) == pytest.approx(100 * math.log(2))


def test_lognormal_uses_log_scale_parameters():
    model = make_model("lognormal", mu=4.9109, sigma=1.1475)
    assert model.cdf(math.exp(4.9109)) == pytest.approx(0.5)


def test_gev_convention():
    eta, theta, kappa = 129.01, 111.25, -0.1207
    model = make_model("gev", eta=eta, theta=theta, kappa=kappa)
    x = np.array([50.0, 200.0, 600.0])
    expected = np.exp(-((1 - kappa * (x - eta) / theta) ** (1 / kappa)))
    np.testing.assert_allclose(model.cdf(x), expected, rtol=1e-12)


def test_gev_gumbel_limit():
    gev = make_model("gev", eta=1.0, theta=2.0, kappa=0.0)
    gumbel = make_model("gumbel", loc=1.0, scale=2.0)
    x = np.linspace(-5, 15, 21)
    np.testing.assert_allclose(gev.cdf(x), gumbel.cdf(x))


def test_gev_bounded_support():
    # kappa > 0: upper end point eta + theta / kappa
    model = make_model("gev", eta=0.0, theta=1.0, kappa=0.5)
    assert model.support == (-math.inf, 2.0)
    with pytest.raises(SupportError):
        check_support(model, [0.0, 3.0])


def test_gev_cdf_is_total_outside_the_support():
    upper = make_model("gev", eta=0.0, theta=1.0, kappa=0.5)
    assert upper.cdf(3.0) == 1.0
    assert upper.sf(3.0) == 0.0
    assert upper.logsf(3.0) == -math.inf
    lower = make_model("gev", eta=0.0, theta=1.0, kappa=-0.5)
    assert lower.support == (-2.0, math.inf)
    assert lower.cdf(-3.0) == 0.0
    with pytest.raises(SupportError):
        check_support(lower, [-3.0])


def test_survival_functions_keep_the_upper_tail(exponential):
    assert exponential.sf(5000.0) == pytest.approx(math.exp(-50.0))
    assert exponential.logsf(5000.0) == pytest.approx(-50.0)
    assert exponential.logcdf(50.0) == pytest.approx(math.log1p(-math.exp(-0.5)))
    assert exponential.isf(math.exp(-50.0)) == pytest.approx(5000.0)
    with pytest.raises(DomainError):
        exponential.isf(1.5)


def test_uniform():
    model = make_model("uniform", low=-1.0, high=3.0)
    assert model.cdf(0.0) == pytest.approx(0.25)
    with pytest.raises(ParameterError):
        make_model("uniform", low=1.0, high=1.0)


def test_quantile_inverts_cdf():
    model = make_model("logistic", loc=2.0, scale=0.5)
    u = np.linspace(0.01, 0.99, 50)
    np.testing.assert_allclose(model.cdf(model.quantile(u)), u)


def test_quantile_domain(exponential):
    with pytest.raises(DomainError):
        exponential.quantile(1.5)


def test_sample_is_seeded(exponential):
    first = exponential.sample(np.random.default_rng(1), 5)
    np.testing.assert_array_equal(first, exponential.sample(np.random.default_rng(1), 5))


def test_check_support_names_first_offending_row():
    model = make_model("lognormal", mu=0.0, sigma=1.0)
    with pytest.raises(SupportError) as info:
        check_support(model, [1.0, 2.0, -3.0, -4.0])
    assert info.value.index == 2
    assert info.value.value == -3.0


def test_non_finite_observations_are_rejected(exponential):
    with pytest.raises(SupportError):
        check_support(exponential, [1.0, float("nan")])


@pytest.mark.parametrize(
    "dist_id, params",
    [
        ("exponential", {"lambda": 0.0}),
        ("lognormal", {"mu": 0.0, "sigma": -1.0}),
        ("gev", {"eta": 0.0, "theta": 1.0}),
        ("weibull", {"k": 1.0}),
    ],
)
def test_invalid_models(dist_id, params):
    with pytest.raises(ParameterError):
        make_model(dist_id, params)


def test_model_spec(exponential):
    assert model_spec(exponential) == {"dist": "exponential", "params": {"lambda": 0.01}}
    assert model_from_spec({"dist": "gumbel", "params": {"loc": 0.0, "scale": 1.0}}).dist_id == "gumbel"
    with pytest.raises(ParameterError):
        model_from_spec({"params": {}})


def test_pdf_is_exp_of_logpdf(exponential):
    y = np.array([1.0, 100.0, 500.0])
    np.testing.assert_allclose(exponential.pdf(y), 0.01 * np.exp(-0.01 * y))
