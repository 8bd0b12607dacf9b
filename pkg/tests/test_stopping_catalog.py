import math

import numpy as np
import pytest

from extremes.errors import ClosureError, DomainError, ParameterError, PreconditionError
from extremes.pgf_core import conjugate_eval, make_pgf, pgf_eval, pgf_params
from extremes.stopping_catalog import (
    auto_reversible_from_pair,
    closed_form_eval,
    default_catalog,
    dilation_family,
    eta_of,
    family_from_spec,
    family_spec,
    make_family,
    reversal_partner,
    reversible_pairs,
    sandwich_family,
    stopping_from_spec,
)

GRID = np.linspace(0.0, 1.0, 201)


@pytest.mark.parametrize(
    "family, eta",
    [
        (make_family("zt_geometric"), 0.8),
        (make_family("potential_conjugate"), 1.3),
        (make_family("zt_poisson"), 0.4),
        (make_family("logarithmic"), 2.5),
        (make_family("zt_binomial", n=2), 1.1),
        (make_family("etnb", r=0.5), 1.7),
        (make_family("etnb", r=-0.5), 0.4),
        (make_family("ex66", alpha=0.5), 0.9),
        (make_family("ex63", alpha=1.0), 2.2),
        (make_family("ex64", alpha=1.0, beta=2.0), 1.6),
        (make_family("ex65", alpha=1.0, n=2), 3.0),
        (dilation_family(make_family("zt_geometric"), 2), 0.6),
    ],
    ids=lambda x: getattr(x, "label", str(x)),
)
def test_member_has_requested_eta(family, eta):
    assert eta_of(family.member(eta)) == pytest.approx(eta, abs=1e-10)


def test_geometric_member_parameter():
    assert pgf_params(make_family("zt_geometric").member(2.0))["p"] == pytest.approx(math.exp(-2.0))


def test_zero_eta_is_the_identity():
    assert make_family("zt_geometric").member(0.0).family_id == "degenerate"


@pytest.mark.parametrize(
    "family",
    [make_family("ex63", alpha=0.7), make_family("ex64", alpha=1.0, beta=2.5), make_family("ex65", alpha=1.2, n=3)],
    ids=lambda f: f.label,
)
@pytest.mark.parametrize("offset", [0.3, 1.0, 4.0])
def test_sandwich_members_match_closed_forms(family, offset):
    eta = family.eta0 + offset
    np.testing.assert_allclose(pgf_eval(family.member(eta), GRID), closed_form_eval(family, eta, GRID), atol=1e-10)


def test_closed_form_only_for_sandwich_examples():
    assert closed_form_eval(make_family("zt_geometric"), 1.0, GRID) is None


def test_ex63_reduces_to_geometric_at_zero_alpha():
    member = make_family("ex63", alpha=0.0).member(1.0)
    assert member.family_id == "zt_geometric"
    np.testing.assert_allclose(pgf_eval(member, GRID), pgf_eval(make_pgf("zt_geometric", p=math.exp(-1.0)), GRID))


def test_ex64_reduces_to_geometric_at_unit_beta():
    member = make_family("ex64", alpha=1.0, beta=1.0).member(1.5)
    np.testing.assert_allclose(pgf_eval(member, GRID), pgf_eval(make_pgf("zt_geometric", p=math.exp(-1.5)), GRID))


@pytest.mark.parametrize(
    "family",
    [
        make_family("zt_geometric"),
        make_family("potential_conjugate"),
        make_family("ex66", alpha=0.4),
        make_family("ex63", alpha=1.0),
        make_family("ex65", alpha=1.0, n=2),
        dilation_family(make_family("potential_conjugate"), 3),
    ],
    ids=lambda f: f.label,
)
def test_closed_families_compose_additively(family):
    a, b = family.eta0 + 0.5, family.eta0 + 1.25
    composed = pgf_eval(family.member(a), pgf_eval(family.member(b), GRID))
    np.testing.assert_allclose(composed, pgf_eval(family.member(a + b), GRID), atol=1e-10)


def test_zt_poisson_is_not_closed():
    family = make_family("zt_poisson")
    composed = pgf_eval(family.member(0.5), pgf_eval(family.member(0.5), GRID))
    assert np.max(np.abs(composed - pgf_eval(family.member(1.0), GRID))) > 1e-4


@pytest.mark.parametrize("pair", reversible_pairs(), ids=lambda p: f"{p[0].label}-{p[1].label}")
def test_reversible_pairs(pair):
    n, n_star = pair
    np.testing.assert_allclose(pgf_eval(n_star, conjugate_eval(n, GRID)), GRID, atol=1e-9)


def test_reversal_partners():
    assert reversal_partner(make_pgf("zt_poisson", alpha=2.0)) == make_pgf("logarithmic", p=-math.expm1(-2.0))
    assert reversal_partner(make_pgf("deterministic", m=3)) == make_pgf("potential_conjugate", b=1 / 3)
    assert reversal_partner(make_pgf("potential_conjugate", b=0.3)) is None
    assert reversal_partner(make_family("ex65", alpha=1.0, n=2)) == make_family("ex64", alpha=1.0, beta=2)
    geometric = make_family("zt_geometric")
    assert reversal_partner(geometric) is geometric


def test_auto_reversible_from_pair():
    n = make_pgf("zt_poisson", alpha=1.5)
    first, second = auto_reversible_from_pair(n, reversal_partner(n))
    for pgf in (first, second):
        assert pgf.auto_reversible
        np.testing.assert_allclose(pgf_eval(pgf, conjugate_eval(pgf, GRID)), GRID, atol=1e-9)


def test_auto_reversible_from_pair_rejects_non_pairs():
    with pytest.raises(PreconditionError):
        auto_reversible_from_pair(make_pgf("zt_poisson", alpha=1.0), make_pgf("zt_poisson", alpha=1.0))


def test_sandwich_family_reproduces_ex63():
    alpha = 1.0
    family = sandwich_family(
        make_family("zt_geometric"), make_pgf("zt_poisson", alpha=alpha), make_pgf("logarithmic", p=-math.expm1(-alpha)), alpha
    )
    assert family.eta0 == alpha
    np.testing.assert_allclose(
        pgf_eval(family.member(2.5), GRID), pgf_eval(make_family("ex63", alpha=alpha).member(2.5), GRID), atol=1e-12
    )


def test_sandwich_family_checks_its_precondition():
    with pytest.raises(PreconditionError):
        sandwich_family(make_family("zt_geometric"), make_pgf("zt_poisson", alpha=1.0), make_pgf("logarithmic", p=0.5), 1.0)


def test_sandwich_and_dilation_need_a_closed_base():
    with pytest.raises(ClosureError):
        dilation_family(make_family("zt_poisson"), 2)
    with pytest.raises(ClosureError):
        sandwich_family(make_family("logarithmic"), make_pgf("zt_poisson", alpha=1.0), make_pgf("logarithmic", p=0.5), 1.0)


def test_dilation_by_one_is_the_base():
    base = make_family("zt_geometric")
    assert dilation_family(base, 1) is base


def test_member_outside_domain():
    with pytest.raises(DomainError):
        make_family("zt_geometric").member(-0.5)
    with pytest.raises(DomainError):
        make_family("ex63", alpha=1.0).member(0.5)
    with pytest.raises(DomainError):
        make_family("etnb", r=-0.5).member(1.0)


@pytest.mark.parametrize(
    "family_id, shape",
    [("unknown", {}), ("zt_binomial", {}), ("ex64", {"alpha": 1.0, "beta": 0.5}), ("zt_geometric", {"p": 0.5})],
)
def test_make_family_validation(family_id, shape):
    with pytest.raises(ParameterError):
        make_family(family_id, **shape)


def test_default_catalog_flags():
    catalog = {family.label: family for family in default_catalog()}
    assert len(catalog) == 13
    assert catalog["zt_geometric"].auto_reversible
    assert catalog["ex63(alpha=1)"].eta0 == 1.0
    assert not catalog["zt_poisson"].closed_under_composition


def test_family_specs():
    family = dilation_family(make_family("potential_conjugate"), 3)
    assert family_from_spec(family_spec(family)) == family
    pgf = stopping_from_spec({"family": "ex63", "shape": {"alpha": 1.0}, "eta": 2.0})
    assert pgf.eta == 2.0
    assert stopping_from_spec({"family": "logarithmic", "params": {"p": 0.95}}) == make_pgf("logarithmic", p=0.95)
