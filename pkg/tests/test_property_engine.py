import json
import math

import pytest

from extremes.base_distributions import make_model
from extremes.errors import ParameterError
from extremes.pgf_core import make_pgf
from extremes.property_engine import (
    CheckReport,
    check_auto_reversible,
    check_auto_reversible_collapse,
    check_basic_inclusion,
    check_closed_form,
    check_closure_necessary,
    check_commutation,
    check_composition_closure,
    check_identities,
    check_reversible_pair,
    check_stability,
    check_stochastic_order,
    check_two_param_collapse,
    check_union_form,
    printed_form_reports,
    run_suite,
    summary_table,
)
from extremes.stopping_catalog import dilation_family, eta_of, make_family


def failures(reports):
    return [(r.check_id, r.operands, r.sup_discrepancy) for r in reports if not r.passed]


def test_poisson_logarithmic_pair():
    alpha = 1.0
    report = check_reversible_pair(make_pgf("zt_poisson", alpha=alpha), make_pgf("logarithmic", p=-math.expm1(-alpha)))
    assert report.passed


def test_zt_poisson_is_not_its_own_partner():
    report = check_auto_reversible(make_pgf("zt_poisson", alpha=1.0))
    assert not report.passed
    assert report.sup_discrepancy > 1e-3


def test_geometric_is_auto_reversible():
    assert check_auto_reversible(make_pgf("zt_geometric", p=0.3)).passed


def test_closure_ratio_spreads_for_zt_poisson():
    etas = [eta_of(make_pgf("zt_poisson", alpha=a)) for a in (0.5, 1.0, 2.0)]
    report = check_closure_necessary(make_family("zt_poisson"), eta_grid=etas)
    assert report.sup_discrepancy > 0.1
    assert not report.passed


@pytest.mark.parametrize(
    "family",
    [make_family("zt_geometric"), make_family("potential_conjugate"), make_family("ex63", alpha=1.0)],
    ids=lambda f: f.label,
)
def test_closure_ratio_is_flat_for_closed_families(family):
    report = check_closure_necessary(family)
    assert report.sup_discrepancy < 1e-6
    assert "necessary condition only" in report.notes


@pytest.mark.parametrize(
    "family", [make_family("zt_geometric"), make_family("potential_conjugate")], ids=lambda f: f.label
)
def test_composition_and_commutation(family):
    assert check_composition_closure(family).passed
    assert check_commutation(family).passed


def test_power_family_commutes_to_rounding():
    assert check_commutation(make_family("potential_conjugate")).sup_discrepancy < 1e-12


@pytest.mark.parametrize("anchor", [1.0, 5.0])
@pytest.mark.parametrize(
    "family",
    [make_family("potential_conjugate"), dilation_family(make_family("potential_conjugate"), 3)],
    ids=lambda f: f.label,
)
def test_basic_inclusion_for_any_anchor(family, anchor, unit_exponential):
    assert check_basic_inclusion(family, unit_exponential, anchor=anchor).passed


def test_composition_closure_fails_for_logarithmic():
    assert not check_composition_closure(make_family("logarithmic")).passed


@pytest.mark.parametrize("numeric", [False, True])
def test_identities(numeric, log95):
    report = check_identities(log95, numeric=numeric)
    assert report.passed, report.details
    assert report.grid["inverse"] == ("numeric" if numeric else "auto")


def test_closed_form_check():
    assert check_closed_form(make_family("ex63", alpha=1.0)).passed
    with pytest.raises(ParameterError):
        check_closed_form(make_family("zt_geometric"))


@pytest.mark.parametrize("kind", ["stopped_max", "stopped_min", "combined_max", "combined_min"])
def test_geometric_stability(kind, unit_exponential):
    report = check_stability(make_family("zt_geometric"), unit_exponential, kind)
    assert report.passed
    assert report.notes == ""


def test_stability_notes_the_contraction_regime(unit_exponential):
    report = check_stability(make_family("ex63", alpha=1.0), unit_exponential, tolerance=1e-7)
    assert report.notes.startswith("contraction regime")
    assert report.passed


def test_unknown_stability_kind(unit_exponential):
    with pytest.raises(ParameterError):
        check_stability(make_family("zt_geometric"), unit_exponential, "stopped_median")


def test_stochastic_order(exponential, log95):
    report = check_stochastic_order(log95, exponential)
    assert report.passed
    assert report.details["smallest_gap"] >= -1e-12


def test_degenerate_stopping_orders_trivially(exponential):
    report = check_stochastic_order(make_pgf("degenerate"), exponential)
    assert report.sup_discrepancy == 0.0


def test_extension_checks(unit_exponential):
    geometric = make_family("zt_geometric")
    assert check_two_param_collapse(geometric, 0.5, 2.0, unit_exponential).passed
    assert check_two_param_collapse(geometric, 0.5, 2.0, unit_exponential, "min").passed
    assert check_basic_inclusion(make_family("potential_conjugate"), unit_exponential).passed
    assert check_auto_reversible_collapse(geometric, unit_exponential).passed
    assert check_union_form(geometric, unit_exponential).passed


def test_printed_forms():
    reports = printed_form_reports()
    assert len(reports) == 12 + 12 + 20
    assert failures(reports) == []


def test_report_serialization():
    report = CheckReport("stability", ("a", "b"), {"kind": "unit"}, 2e-12, 1e-9)
    data = json.loads(report.to_json())
    assert list(data) == sorted(data)
    assert data["operands"] == ["a", "b"]
    assert data["passed"] and data["confirmed"]


def test_declared_failure_counts_as_confirmed():
    report = CheckReport("closure_necessary", ("zt_poisson",), {}, 0.3, 1e-6, expected=False)
    assert not report.passed
    assert report.confirmed


def test_closure_suite_against_declared_flags():
    reports = run_suite("closure", [make_family("zt_poisson"), make_family("zt_geometric")])
    assert all(r.confirmed for r in reports)
    assert [r.passed for r in reports] == [False, False, True, True]


def test_named_family_is_expected_to_pass():
    reports = run_suite("closure", [make_family("zt_poisson")], expect_pass=True)
    assert not any(r.confirmed for r in reports)


def test_reversibility_suite_on_the_catalog():
    reports = run_suite("reversibility")
    assert reports
    assert all(r.confirmed for r in reports), failures(reports)


def test_unknown_suite():
    with pytest.raises(ParameterError):
        run_suite("everything")


def test_summary_table():
    reports = run_suite("closure", [make_family("zt_poisson"), make_family("zt_geometric")])
    table = summary_table(reports)
    assert list(table.columns) == ["check", "expected", "reports", "passed", "confirmed", "worst"]
    row = table[(table.check == "closure_necessary") & (table.expected == "fail")].iloc[0]
    assert row.reports == 1
    assert row.passed == 0
    assert row.confirmed == 1


@pytest.mark.slow
def test_full_catalog_sweep():
    reports = run_suite("all")
    unconfirmed = [(r.check_id, r.operands, r.sup_discrepancy, r.expected) for r in reports if not r.confirmed]
    assert unconfirmed == []


@pytest.mark.slow
def test_stability_on_a_logistic_base():
    base = make_model("logistic", loc=0.0, scale=1.0)
    for family in (make_family("potential_conjugate"), make_family("ex65", alpha=1.0, n=2)):
        assert check_stability(family, base, "combined_min").passed
