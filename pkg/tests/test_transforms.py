import math

import numpy as np
import pytest
from scipy import integrate

from extremes.base_distributions import make_model
from extremes.errors import ClosureError, ParameterError
from extremes.pgf_core import Pgf, make_pgf, pgf_eval
from extremes.property_engine import default_etas
from extremes.stopping_catalog import default_catalog, make_family
from extremes.transforms import (
    BASIC,
    combined_extension,
    extension_steps,
    make_transform,
    max_precursor,
    min_precursor,
    stopped_max,
    stopped_min,
    transform_from_spec,
    transform_spec,
    two_param_combined,
)

Y = np.linspace(1.0, 600.0, 121)


def test_stopped_max_cdf(exponential, log95):
    model = stopped_max(log95, exponential)
    np.testing.assert_allclose(model.cdf(Y), pgf_eval(log95, exponential.cdf(Y)))


def test_stopped_max_at_100(exponential, log95):
    expected = math.log(1 - 0.95 * (1 - math.exp(-1))) / math.log(0.05)
    assert stopped_max(log95, exponential).cdf(100.0) == pytest.approx(expected)


def test_degenerate_stopping_is_the_base(exponential):
    model = stopped_max(Pgf("degenerate"), exponential)
    np.testing.assert_array_equal(model.cdf(Y), exponential.cdf(Y))
    np.testing.assert_allclose(model.logpdf(Y), exponential.logpdf(Y))


def test_stopped_min_with_geometric(exponential):
    p = 0.4
    model = stopped_min(make_pgf("zt_geometric", p=p), exponential)
    s = 1 - exponential.cdf(Y)
    np.testing.assert_allclose(model.cdf(Y), 1 - p * s / (1 - (1 - p) * s))


def test_stopped_min_of_zt_poisson(unit_exponential):
    alpha = 2.0
    y = np.linspace(0.05, 5.0, 50)
    F = unit_exponential.cdf(y)
    expected = 1 - np.expm1(alpha * (1 - F)) / math.expm1(alpha)
    np.testing.assert_allclose(stopped_min(make_pgf("zt_poisson", alpha=alpha), unit_exponential).cdf(y), expected)


@pytest.mark.parametrize(
    "stopping",
    [make_pgf("logarithmic", p=0.9), make_pgf("potential_conjugate", b=0.3), make_pgf("zt_binomial", n=2, p=0.5)],
    ids=lambda p: p.label,
)
def test_logpdf_matches_cdf_slope(stopping, exponential):
    model = stopped_max(stopping, exponential)
    step = 1e-4
    slope = (model.cdf(Y + step) - model.cdf(Y - step)) / (2 * step)
    np.testing.assert_allclose(np.exp(model.logpdf(Y)), slope, rtol=1e-5)


def test_precursor_then_extreme_is_the_base(exponential, log95):
    np.testing.assert_allclose(stopped_max(log95, max_precursor(log95, exponential)).cdf(Y), exponential.cdf(Y), atol=1e-12)
    np.testing.assert_allclose(stopped_min(log95, min_precursor(log95, exponential)).cdf(Y), exponential.cdf(Y), atol=1e-12)


def test_chained_transforms_flatten(exponential, log95):
    model = stopped_max(log95, stopped_min(log95, exponential))
    assert [op for op, _ in model.steps] == ["hbar", "h"]
    assert model.base is exponential
    assert model.kind == "stopped_max"


@pytest.mark.parametrize("kind", ["stopped_max", "stopped_min", "max_precursor", "min_precursor"])
def test_quantile_inverts_cdf(kind, exponential, log95):
    model = make_transform(kind, log95, exponential)
    u = np.linspace(0.01, 0.99, 41)
    np.testing.assert_allclose(model.cdf(model.quantile(u)), u, atol=1e-10)


def test_infinite_mean_density_stays_finite(exponential):
    model = stopped_max(make_pgf("potential_conjugate", b=0.2), exponential)
    assert np.all(np.isfinite(model.logpdf(np.array([1.0, 1000.0, 5000.0]))))


def test_power_stopping_of_an_exponential_is_exponential(exponential):
    # 1 - (1 - F)^b is the exponential cdf with rate b * lambda
    model = stopped_max(make_pgf("potential_conjugate", b=0.2), exponential)
    y = np.array([3000.0, 3800.0, 5000.0])
    np.testing.assert_allclose(model.logpdf(y), math.log(0.002) - 0.002 * y, rtol=1e-10)
    np.testing.assert_allclose(model.sf(y), np.exp(-0.002 * y), rtol=1e-10)
    total, _ = integrate.quad(model.pdf, 0.0, np.inf)
    assert total == pytest.approx(1.0, abs=1e-4)


@pytest.mark.parametrize("family", default_catalog(), ids=lambda f: f.label)
@pytest.mark.parametrize("kind", list(BASIC))
def test_density_integrates_to_one(family, kind, unit_exponential):
    model = BASIC[kind](family.member(default_etas(family, 1)[0]), unit_exponential)
    median = model.quantile(0.5)
    lower, _ = integrate.quad(model.pdf, 0.0, median, limit=200)
    upper, _ = integrate.quad(model.pdf, median, np.inf, limit=200)
    assert lower + upper == pytest.approx(1.0, abs=1e-4)
    assert model.cdf(median) == pytest.approx(0.5, abs=1e-9)


def test_combined_extension_signs(exponential):
    family = make_family("zt_geometric")
    np.testing.assert_array_equal(combined_extension(family, 0.0, exponential).cdf(Y), exponential.cdf(Y))
    np.testing.assert_allclose(
        combined_extension(family, 1.2, exponential).cdf(Y), stopped_max(family.member(1.2), exponential).cdf(Y)
    )
    np.testing.assert_allclose(
        combined_extension(family, -1.2, exponential).cdf(Y), max_precursor(family.member(1.2), exponential).cdf(Y)
    )
    np.testing.assert_allclose(
        combined_extension(family, 1.2, exponential, flavor="min").cdf(Y), stopped_min(family.member(1.2), exponential).cdf(Y)
    )


@pytest.mark.parametrize("flavor", ["max", "min"])
@pytest.mark.parametrize("anchor", [2.0, 5.0])
def test_anchor_does_not_change_the_extension(flavor, anchor, exponential):
    family = make_family("potential_conjugate")
    for eta in (-0.8, 0.6):
        np.testing.assert_allclose(
            combined_extension(family, eta, exponential, flavor=flavor, anchor=anchor).cdf(Y),
            combined_extension(family, eta, exponential, flavor=flavor).cdf(Y),
            atol=1e-10,
        )


def test_gap_of_family_with_positive_eta0(exponential):
    family = make_family("ex63", alpha=1.0)
    assert [op for op, _ in extension_steps(family, 0.5)] == ["hinv", "h"]
    there = combined_extension(family, 0.5, exponential)
    back = combined_extension(family, -0.5, there)
    np.testing.assert_allclose(back.cdf(Y), exponential.cdf(Y), atol=1e-9)


def test_anchor_below_eta0():
    with pytest.raises(ParameterError):
        extension_steps(make_family("ex63", alpha=1.0), 0.5, anchor=0.2)


def test_extension_needs_a_closed_family(exponential):
    with pytest.raises(ClosureError):
        combined_extension(make_family("zt_poisson"), 1.0, exponential)


@pytest.mark.parametrize("flavor", ["max", "min"])
def test_two_param_collapses_in_a_closed_family(flavor, exponential):
    family = make_family("zt_geometric")
    two = two_param_combined(family, 0.7, 2.0, exponential, flavor=flavor)
    one = combined_extension(family, 1.3, exponential, flavor=flavor)
    np.testing.assert_allclose(two.cdf(Y), one.cdf(Y), atol=1e-12)


def test_two_param_from_a_pair(unit_exponential):
    a1, a2 = 0.5, 1.5
    n1, n2 = make_pgf("zt_poisson", alpha=a1), make_pgf("zt_poisson", alpha=a2)
    y = np.linspace(0.05, 5.0, 50)
    F = unit_exponential.cdf(y)
    model = two_param_combined((n1, n2), None, None, unit_exponential)
    expected = np.expm1(a2 * np.log1p(math.expm1(a1) * F) / a1) / math.expm1(a2)
    np.testing.assert_allclose(model.cdf(y), expected)
    reversed_model = two_param_combined((n1, n2), None, None, unit_exponential, precursor_first=False)
    expected = np.log1p(math.expm1(a2) * np.expm1(a1 * F) / math.expm1(a1)) / a2
    np.testing.assert_allclose(reversed_model.cdf(y), expected)


def test_make_transform_dispatch(exponential):
    family = make_family("zt_geometric")
    model = make_transform("combined_min", family, exponential, eta=-0.5)
    assert model.kind == "combined_min"
    assert model.eta == -0.5
    two = make_transform("combined_max", family, exponential, eta=(0.2, 0.9), two_param=True)
    assert dict(two.options)["two_param"]
    with pytest.raises(ParameterError):
        make_transform("stopped_median", family, exponential)


def test_transform_specs(exponential, log95):
    family = make_family("ex63", alpha=1.0)
    model = combined_extension(family, 0.5, stopped_min(log95, exponential), flavor="min")
    rebuilt = transform_from_spec(transform_spec(model))
    np.testing.assert_allclose(rebuilt.cdf(Y), model.cdf(Y))
    assert rebuilt.label == model.label


def test_label(exponential, log95):
    assert stopped_max(log95, exponential).label == "stopped_max[logarithmic(p=0.95)](exponential(lambda=0.01))"


def test_pdf_of_stopped_max(unit_exponential):
    p = 0.4
    y = np.linspace(0.1, 4.0, 9)
    F, f = unit_exponential.cdf(y), unit_exponential.pdf(y)
    model = stopped_max(make_pgf("zt_geometric", p=p), unit_exponential)
    np.testing.assert_allclose(model.pdf(y), p * f / (1 - (1 - p) * F) ** 2)
