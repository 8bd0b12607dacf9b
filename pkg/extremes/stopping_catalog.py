"""
Stopping-model families in the eta = -ln Pr(N=1) parametrization.

A StoppingFamily is a one-parameter family of stopping pgfs with fixed shape
parameters. Closed families (composition of two members is a member) have
eta in [eta0, inf) and compose additively in eta. Members are built in native
parameters; the sandwich and dilation combinators build new closed families
from a closed base.
"""

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize

from extremes.errors import ClosureError, DomainError, ParameterError, PreconditionError
from extremes.pgf_core import (
    FAMILY_PARAMS,
    Pgf,
    check_domain,
    conjugate_eval,
    make_pgf,
    pgf_compose,
    pgf_eval,
    pgf_params,
    pgf_pmf,
)

logger = logging.getLogger(__name__)

ETA_TOL = 1e-12
PRECONDITION_TOL = 1e-10
PRECONDITION_GRID = 1001
ALPHA_LIMIT = 1e-8


@dataclass(frozen=True)
class StoppingFamily:
    """
    Uniparametric stopping family.

    Parameters:
    family_id (str): Catalog tag (zt_geometric, ex63, sandwich, dilation, ...).
    shape (tuple): Fixed shape parameters as (name, value) pairs.
    eta0 (float): Lower end of the eta domain.
    eta_max (float): Upper end of the eta domain (inf for every closed family
        except the degenerate one).
    closed_under_composition (bool): Declared closure flag.
    auto_reversible (bool): Declared auto-reversibility flag.
    parts (tuple): (n1, n2) of a sandwich construction.
    base (StoppingFamily): Base family of a sandwich or dilation.
    offset (float): Sandwich shift alpha.
    """

    family_id: str
    shape: tuple = ()
    eta0: float = 0.0
    eta_max: float = math.inf
    closed_under_composition: bool = False
    auto_reversible: bool = False
    parts: tuple = ()
    base: object = None
    offset: float = 0.0

    @property
    def shape_params(self):
        return dict(self.shape)

    @property
    def contains_identity(self):
        return self.eta0 == 0.0

    @property
    def eta_domain(self):
        return (self.eta0, self.eta_max)

    @property
    def reversal_partner(self):
        return reversal_partner(self)

    @property
    def label(self):
        if self.family_id == "dilation":
            return f"dilation(k={int(self.shape_params['k'])}, {self.base.label})"
        if self.family_id == "sandwich":
            return f"sandwich(alpha={self.offset:.6g}, {self.base.label})"
        if not self.shape:
            return self.family_id
        args = ", ".join(f"{k}={v:.6g}" for k, v in self.shape)
        return f"{self.family_id}({args})"

    def member(self, eta):
        return member(self, eta)


# --- eta <-> native parameter maps ----------------------------------------


def _solve_native(log_p1, eta, lo, hi, what):
    """Native parameter x in (lo, hi) with log Pr(N=1) = -eta, log_p1 decreasing in x."""
    f_lo, f_hi = log_p1(lo) + eta, log_p1(hi) + eta
    if not (f_lo > 0 > f_hi):
        raise DomainError(f"eta={eta} is outside the attainable range of {what}")
    return optimize.brentq(lambda x: log_p1(x) + eta, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def _zt_poisson_alpha(eta):
    log_p1 = lambda a: math.log(a) - math.log(math.expm1(a))
    return _solve_native(log_p1, eta, eta * 1e-3, 2 * eta + 2, "zt_poisson")


def _logarithmic_p(eta):
    # solved in a = -ln(1-p), then p = 1 - e^{-a}
    log_p1 = lambda a: math.log(-math.expm1(-a)) - math.log(a)
    a = _solve_native(log_p1, eta, eta * 1e-3, 2 * math.exp(eta) + 2, "logarithmic")
    return -math.expm1(-a)


def _zt_binomial_p(eta, n):
    def log_p1(p):
        log_q = math.log1p(-p)
        return math.log(n) + math.log(p) + (n - 1) * log_q - math.log(-math.expm1(n * log_q))

    return _solve_native(log_p1, eta, eta / (1000 * n), 1 - 1e-15, f"zt_binomial(n={n})")


def _etnb_p(eta, r):
    def log_p1(p):
        d = math.expm1(-r * math.log1p(-p))
        return math.log(p) + math.log(r / d)

    return _solve_native(log_p1, eta, eta * 1e-3 / (1 + abs(r)), 1 - 1e-15, f"etnb(r={r})")


def eta_of(pgf):
    """eta = -ln Pr(N=1)."""
    return -math.log(pgf_pmf(pgf, 1))


# --- members ---------------------------------------------------------------


def _flat(pgf):
    return pgf.parts if pgf.family_id == "composite" else (pgf,)


def _sandwich_member(family, eta):
    n1, n2 = family.parts
    inner = family.base.member(eta - family.offset)
    parts = tuple(p for p in (n2,) + _flat(inner) + (n1,) if p.family_id != "degenerate")
    if len(parts) == 1:
        return parts[0]
    return Pgf("composite", parts=parts)


def _native_member(family, eta):
    shape = family.shape_params
    fid = family.family_id
    if fid == "degenerate" or eta == 0.0:
        return Pgf("degenerate")
    if fid == "zt_geometric":
        return Pgf("zt_geometric", (math.exp(-eta),))
    if fid == "potential_conjugate":
        return Pgf("potential_conjugate", (math.exp(-eta),))
    if fid == "ex66":
        return Pgf("ex66", (shape["alpha"], math.exp(-eta)))
    if fid == "zt_poisson":
        return Pgf("zt_poisson", (_zt_poisson_alpha(eta),))
    if fid == "logarithmic":
        return Pgf("logarithmic", (_logarithmic_p(eta),))
    if fid == "zt_binomial":
        return Pgf("zt_binomial", (shape["n"], _zt_binomial_p(eta, shape["n"])))
    if fid in ("etnb", "zt_negbinomial"):
        r = shape["r"]
        p = _logarithmic_p(eta) if abs(r) < 1e-6 else _etnb_p(eta, r)
        return Pgf(fid, (p, r))
    if fid == "dilation":
        k = shape["k"]
        return Pgf("dilation", (k,), parts=(family.base.member(k * eta),))
    return _sandwich_member(family, eta)


def member(family, eta):
    """Member pgf of ``family`` with Pr(N=1) = e^{-eta}."""
    eta = float(eta)
    if eta < family.eta0 - ETA_TOL or eta > family.eta_max + ETA_TOL:
        raise DomainError(f"eta={eta} is outside the domain {family.eta_domain} of {family.label}")
    eta = min(max(eta, family.eta0), family.eta_max)
    if family.family_id in ("ex63", "ex64") and family.offset < ALPHA_LIMIT:
        pgf = Pgf("zt_geometric", (math.exp(-eta),))
    else:
        pgf = _native_member(family, eta)
    return replace(pgf, member_of=family, eta=eta, auto_reversible=family.auto_reversible)


# --- families --------------------------------------------------------------


def _shape(family_id, names, params):
    unknown = set(params) - set(names)
    missing = [name for name in names if name not in params]
    if unknown or missing:
        raise ParameterError(
            f"{family_id} takes shape parameters {tuple(names)}; unknown {sorted(unknown)}, missing {missing}"
        )
    return tuple((name, float(params[name])) for name in names)


def _ex63_parts(alpha):
    return make_pgf("zt_poisson", alpha=alpha), make_pgf("logarithmic", p=-math.expm1(-alpha))


def _ex64_parts(alpha, beta):
    n1 = make_pgf("zt_negbinomial", p=-math.expm1(-alpha / beta), r=beta)
    n2 = make_pgf("etnb", p=-math.expm1(-alpha), r=-1.0 / beta)
    return n1, n2


def _ex65_parts(alpha, n):
    n1 = make_pgf("zt_binomial", n=n, p=-math.expm1(-alpha / n))
    n2 = make_pgf("zt_negbinomial", p=-math.expm1(-alpha), r=1.0 / n)
    return n1, n2


def make_family(family_id, **shape):
    """
    Catalog family by id.

    Shape parameters: zt_binomial(n), etnb(r), zt_negbinomial(r), ex63(alpha),
    ex64(alpha, beta), ex65(alpha, n), ex66(alpha). The remaining families take none.
    """
    geometric = StoppingFamily("zt_geometric", closed_under_composition=True, auto_reversible=True)
    if family_id == "degenerate":
        _shape(family_id, (), shape)
        return StoppingFamily(
            "degenerate", eta_max=0.0, closed_under_composition=True, auto_reversible=True
        )
    if family_id == "zt_geometric":
        _shape(family_id, (), shape)
        return geometric
    if family_id == "potential_conjugate":
        _shape(family_id, (), shape)
        return StoppingFamily("potential_conjugate", closed_under_composition=True)
    if family_id in ("zt_poisson", "logarithmic"):
        _shape(family_id, (), shape)
        return StoppingFamily(family_id)
    if family_id == "zt_binomial":
        values = _shape(family_id, ("n",), shape)
        n = check_domain(family_id, "n", values[0][1], "count")
        return StoppingFamily(family_id, values, eta_max=math.inf if n >= 2 else 0.0)
    if family_id in ("etnb", "zt_negbinomial"):
        values = _shape(family_id, ("r",), shape)
        r = check_domain(family_id, "r", values[0][1], FAMILY_PARAMS[family_id]["r"])
        eta_max = -math.log(-r) if r < 0 else math.inf
        return StoppingFamily(family_id, values, eta_max=eta_max)
    if family_id == "ex66":
        values = _shape(family_id, ("alpha",), shape)
        check_domain(family_id, "alpha", values[0][1], "unit")
        return StoppingFamily("ex66", values, closed_under_composition=True)
    if family_id == "ex63":
        values = _shape(family_id, ("alpha",), shape)
        alpha = values[0][1]
        if alpha < 0:
            raise ParameterError(f"Invalid alpha for ex63: {alpha}")
        parts = _ex63_parts(alpha) if alpha >= ALPHA_LIMIT else ()
        return StoppingFamily(
            "ex63", values, eta0=alpha, closed_under_composition=True, auto_reversible=True,
            parts=parts, base=geometric, offset=alpha,
        )
    if family_id == "ex64":
        values = _shape(family_id, ("alpha", "beta"), shape)
        alpha, beta = values[0][1], values[1][1]
        if alpha < 0 or beta < 1:
            raise ParameterError(f"Invalid shape for ex64: alpha={alpha}, beta={beta}")
        parts = _ex64_parts(alpha, beta) if alpha >= ALPHA_LIMIT and beta > 1 else ()
        return StoppingFamily(
            "ex64", values, eta0=alpha, closed_under_composition=True,
            parts=parts, base=geometric, offset=alpha if parts else 0.0,
        )
    if family_id == "ex65":
        values = _shape(family_id, ("alpha", "n"), shape)
        alpha = check_domain(family_id, "alpha", values[0][1], "positive")
        n = check_domain(family_id, "n", values[1][1], "count")
        return StoppingFamily(
            "ex65", values, eta0=alpha, closed_under_composition=True,
            parts=_ex65_parts(alpha, n), base=geometric, offset=alpha,
        )
    raise ParameterError(f"Unknown stopping family: {family_id}")


def _sup_distance(f, g, grid_size=PRECONDITION_GRID):
    t = np.linspace(0.0, 1.0, grid_size)
    return float(np.max(np.abs(f(t) - g(t))))


def sandwich_family(base, n1, n2, alpha, tolerance=PRECONDITION_TOL):
    """
    Closed family with members h_{n2} o h_{base, eta-alpha} o h_{n1}, eta >= alpha + base.eta0.

    Requires h_{n1} o h_{n2} to equal the base member at ``alpha``.
    """
    if not base.closed_under_composition:
        raise ClosureError(f"Sandwich base {base.label} is not closed under composition")
    anchor = base.member(alpha)
    gap = _sup_distance(lambda t: pgf_eval(n1, pgf_eval(n2, t)), lambda t: pgf_eval(anchor, t))
    if gap > tolerance:
        raise PreconditionError(
            f"{n1.label} o {n2.label} differs from {base.label} at eta={alpha} by {gap:.3g}"
        )
    return StoppingFamily(
        "sandwich", (("alpha", float(alpha)),), eta0=float(alpha) + base.eta0,
        closed_under_composition=True, parts=(n1, n2), base=base, offset=float(alpha),
    )


def dilation_family(base, k):
    """Closed family of dilated members (h(t^k))^{1/k}; eta rescales to eta/k."""
    k = int(check_domain("dilation", "k", k, "count"))
    if k == 1:
        return base
    if not base.closed_under_composition:
        raise ClosureError(f"Dilation base {base.label} is not closed under composition")
    return StoppingFamily(
        "dilation", (("k", float(k)),), eta0=base.eta0 / k, eta_max=base.eta_max / k,
        closed_under_composition=True, base=base,
    )


def auto_reversible_from_pair(n, n_star, tolerance=PRECONDITION_TOL):
    """The composites h_N o h_{N*} and h_{N*} o h_N of a reversible pair, both auto-reversible."""
    gap = _sup_distance(lambda t: pgf_eval(n_star, conjugate_eval(n, t)), lambda t: t)
    if gap > tolerance:
        raise PreconditionError(f"{n.label} and {n_star.label} are not a reversible pair (gap {gap:.3g})")
    first, second = pgf_compose(n, n_star), pgf_compose(n_star, n)
    return replace(first, auto_reversible=True), replace(second, auto_reversible=True)


# --- reversal partners -------------------------------------------------------


def _family_partner(family):
    fid, shape = family.family_id, family.shape_params
    if family.auto_reversible:
        return family
    if fid == "zt_poisson":
        return make_family("logarithmic")
    if fid == "logarithmic":
        return make_family("zt_poisson")
    if fid == "ex65":
        return make_family("ex64", alpha=shape["alpha"], beta=shape["n"])
    if fid == "ex64" and float(shape["beta"]).is_integer():
        return make_family("ex65", alpha=shape["alpha"], n=shape["beta"])
    return None


def _member_partner(pgf):
    family = pgf.member_of
    if family is not None and family.family_id in ("ex64", "ex65"):
        partner = _family_partner(family)
        return None if partner is None else partner.member(pgf.eta)
    if pgf.auto_reversible or pgf.family_id in ("degenerate", "zt_geometric"):
        return pgf
    params = pgf_params(pgf)
    if pgf.family_id == "zt_poisson":
        return make_pgf("logarithmic", p=-math.expm1(-params["alpha"]))
    if pgf.family_id == "logarithmic":
        return make_pgf("zt_poisson", alpha=-math.log1p(-params["p"]))
    if pgf.family_id == "deterministic":
        return make_pgf("potential_conjugate", b=1.0 / params["m"])
    if pgf.family_id == "potential_conjugate":
        m = 1.0 / params["b"]
        if abs(m - round(m)) < 1e-9:
            return make_pgf("deterministic", m=round(m))
    return None


def reversal_partner(family_or_member):
    """N* with h_{N*} = h̄_N^{-1}, or None when the catalog has no partner."""
    if isinstance(family_or_member, StoppingFamily):
        return _family_partner(family_or_member)
    return _member_partner(family_or_member)


# --- printed closed forms of the sandwich families ---------------------------


def ex63_closed_form(t, alpha, eta):
    """(1/a) ln(1 + (e^{at}-1)(e^a-1) / ((e^eta-1)(e^a-e^{at}) + e^a-1))."""
    t = np.asarray(t, dtype=float)
    gap = -math.exp(alpha) * np.expm1(-alpha * (1 - t))
    ratio = np.expm1(alpha * t) * math.expm1(alpha) / (math.expm1(eta) * gap + math.expm1(alpha))
    return np.log1p(ratio) / alpha


def ex64_closed_form(t, alpha, beta, eta):
    t = np.asarray(t, dtype=float)
    B = (1 + t * math.expm1(-alpha / beta)) ** beta
    num = -math.expm1(alpha + eta) * B + math.expm1(eta)
    den = -math.exp(alpha) * math.expm1(eta) * B + math.exp(alpha) * math.expm1(eta - alpha)
    return -np.expm1(np.log(num / den) / beta) / -math.expm1(-alpha / beta)


def ex65_closed_form(t, alpha, n, eta):
    t = np.asarray(t, dtype=float)
    B = (1 + math.expm1(alpha / n) * t) ** n
    num = math.expm1(eta) * B - math.expm1(alpha + eta)
    den = (math.exp(eta) - math.exp(alpha)) * B + math.exp(alpha) * -math.expm1(eta)
    return np.expm1(-np.log(num / den) / n) / math.expm1(alpha / n)


def closed_form_eval(family, eta, t):
    """Printed closed form of an ex63/ex64/ex65 member, None for other families."""
    shape = family.shape_params
    if family.family_id == "ex63" and shape["alpha"] >= ALPHA_LIMIT:
        return ex63_closed_form(t, shape["alpha"], eta)
    if family.family_id == "ex64" and family.parts:
        return ex64_closed_form(t, shape["alpha"], shape["beta"], eta)
    if family.family_id == "ex65":
        return ex65_closed_form(t, shape["alpha"], shape["n"], eta)
    return None


# --- shipped catalog and specs -----------------------------------------------


def default_catalog():
    """Families swept by the check suites."""
    geometric = make_family("zt_geometric")
    potential = make_family("potential_conjugate")
    return [
        geometric,
        potential,
        make_family("ex63", alpha=1.0),
        make_family("ex64", alpha=1.0, beta=2.0),
        make_family("ex65", alpha=1.0, n=2.0),
        make_family("ex66", alpha=0.5),
        dilation_family(geometric, 2),
        dilation_family(potential, 3),
        make_family("zt_poisson"),
        make_family("logarithmic"),
        make_family("zt_binomial", n=2),
        make_family("etnb", r=0.5),
        make_family("etnb", r=-0.5),
    ]


def reversible_pairs():
    """(N, N*) pairs with h_{N*} = h̄_N^{-1}."""
    pairs = []
    for alpha in (0.5, 1.0, 2.0):
        n = make_pgf("zt_poisson", alpha=alpha)
        pairs.append((n, reversal_partner(n)))
    for m in (2, 3, 5):
        n = make_pgf("potential_conjugate", b=1.0 / m)
        pairs.append((n, reversal_partner(n)))
    ex65 = make_family("ex65", alpha=1.0, n=2.0)
    for eta in (1.0, 1.5, 2.5):
        n = ex65.member(eta)
        pairs.append((n, reversal_partner(n)))
    return pairs


def family_spec(family):
    spec = {"family": family.family_id, "shape": family.shape_params}
    if family.base is not None and family.family_id in ("sandwich", "dilation"):
        spec["base"] = family_spec(family.base)
    if family.family_id == "sandwich":
        spec["n1"], spec["n2"] = (pgf_spec(p) for p in family.parts)
    return spec


def family_from_spec(spec):
    if "family" not in spec:
        raise ParameterError(f"Family spec without a family id: {spec}")
    fid = spec["family"]
    shape = dict(spec.get("shape", {}))
    if fid == "dilation":
        return dilation_family(family_from_spec(spec["base"]), shape["k"])
    if fid == "sandwich":
        return sandwich_family(
            family_from_spec(spec["base"]), stopping_from_spec(spec["n1"]),
            stopping_from_spec(spec["n2"]), shape["alpha"],
        )
    return make_family(fid, **shape)


def pgf_spec(pgf):
    """JSON-ready description: {"family", "shape", "eta"} for members, {"family", "params"} otherwise."""
    if pgf.member_of is not None:
        spec = family_spec(pgf.member_of)
        spec["eta"] = pgf.eta
        return spec
    spec = {"family": pgf.family_id, "params": pgf_params(pgf)}
    if pgf.parts:
        spec["parts"] = [pgf_spec(part) for part in pgf.parts]
    return spec


def stopping_from_spec(spec):
    """Pgf from a family-member or native-parameter spec."""
    if "eta" in spec:
        return family_from_spec(spec).member(spec["eta"])
    if "family" not in spec:
        raise ParameterError(f"Stopping spec without a family id: {spec}")
    fid = spec["family"]
    parts = tuple(stopping_from_spec(part) for part in spec.get("parts", ()))
    return make_pgf(fid, parts=parts, **spec.get("params", {}))
