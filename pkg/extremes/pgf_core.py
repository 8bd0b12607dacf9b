"""
Probability generating functions of positive integer random variables.

A ``Pgf`` is an immutable description of a stopping variable N with
Pr(N=0)=0: a family tag, the native parameters of that family and, for
composites and dilations, the constituent pgfs. Evaluation goes through the
per-family forms in ``FORMS``. Every operation accepts scalars or numpy arrays
and returns the same shape.
"""

import logging
import math
import threading
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache, partial
from typing import Callable, Optional

import numpy as np
from scipy import stats

from extremes.errors import ConvergenceError, DomainError, ParameterError, TailError

logger = logging.getLogger(__name__)

UNIT_TOL = 1e-12
INVERSE_TOL = 1e-12
INVERSE_MAXITER = 200
COMPOSITE_PMF_ORDER = 64
SERIES_CAP = 16384
SAMPLER_BLOCK = 256
SAMPLER_CAP = 10_000_000
TAIL_MASS = 1e-12
ETNB_LOG_WINDOW = 1e-6

DOMAIN_CHECKS = {
    "unit": lambda v: 0.0 < v < 1.0,
    "unit_closed": lambda v: 0.0 < v <= 1.0,
    "positive": lambda v: v > 0.0,
    "gt_minus_one": lambda v: v > -1.0,
    "count": lambda v: v >= 1.0 and float(v).is_integer(),
    "real": lambda v: True,
}

# Native parameter names per family, in storage order, with their domains.
FAMILY_PARAMS = {
    "degenerate": {},
    "deterministic": {"m": "count"},
    "zt_geometric": {"p": "unit_closed"},
    "zt_poisson": {"alpha": "positive"},
    "logarithmic": {"p": "unit"},
    "potential_conjugate": {"b": "unit_closed"},
    "zt_binomial": {"n": "count", "p": "unit_closed"},
    "etnb": {"p": "unit", "r": "gt_minus_one"},
    "zt_negbinomial": {"p": "unit", "r": "positive"},
    "ex66": {"alpha": "unit", "p": "unit_closed"},
    "composite": {},
    "dilation": {"k": "count"},
}


def check_domain(owner, name, value, kind):
    """Raise ParameterError unless ``value`` lies in the named domain."""
    value = float(value)
    if not (math.isfinite(value) and DOMAIN_CHECKS[kind](value)):
        raise ParameterError(f"Invalid {name} for {owner}: {value} (domain: {kind})")
    return value


@dataclass(frozen=True)
class Pgf:
    """
    Pgf of a positive integer random variable.

    Parameters:
    family_id (str): Family tag, a key of FAMILY_PARAMS.
    params (tuple): Native parameters in FAMILY_PARAMS order.
    parts (tuple): Constituent pgfs, outermost first (composite) or the base (dilation).
    member_of: StoppingFamily the pgf was built from, if any.
    eta (float): -ln Pr(N=1) when built as a family member.
    auto_reversible (bool): Set by constructions known to be extreme auto-reversible.
    """

    family_id: str
    params: tuple = ()
    parts: tuple = ()
    member_of: object = field(default=None, repr=False)
    eta: Optional[float] = None
    auto_reversible: bool = False

    def __post_init__(self):
        if self.family_id not in FAMILY_PARAMS:
            raise ParameterError(f"Unknown stopping family: {self.family_id}")
        domains = FAMILY_PARAMS[self.family_id]
        if len(self.params) != len(domains):
            raise ParameterError(
                f"{self.family_id} takes parameters {tuple(domains)}, got {self.params}"
            )
        params = tuple(
            check_domain(self.family_id, name, value, kind)
            for (name, kind), value in zip(domains.items(), self.params)
        )
        object.__setattr__(self, "params", params)
        if self.family_id == "composite" and len(self.parts) < 2:
            raise ParameterError("A composite pgf needs at least two parts")
        if self.family_id == "dilation" and len(self.parts) != 1:
            raise ParameterError("A dilation needs exactly one base pgf")
        if self.family_id not in ("composite", "dilation") and self.parts:
            raise ParameterError(f"{self.family_id} does not take constituent pgfs")

    @property
    def forms(self):
        return FORMS[self.family_id]

    @property
    def eval_form(self):
        return partial(self.forms.eval, self)

    @property
    def pmf_form(self):
        return partial(self.forms.pmf, self)

    @property
    def inverse_form(self):
        if self.forms.inverse is None:
            return "numeric"
        return partial(self.forms.inverse, self)

    @property
    def label(self):
        if self.family_id == "composite":
            return " o ".join(part.label for part in self.parts)
        if self.family_id == "dilation":
            return f"dilation(k={int(self.params[0])}, {self.parts[0].label})"
        args = ", ".join(f"{k}={v:.10g}" for k, v in pgf_params(self).items())
        return f"{self.family_id}({args})"


def make_pgf(family_id, parts=(), **params):
    """Build a Pgf from named native parameters."""
    if family_id not in FAMILY_PARAMS:
        raise ParameterError(f"Unknown stopping family: {family_id}")
    names = tuple(FAMILY_PARAMS[family_id])
    unknown = set(params) - set(names)
    missing = [name for name in names if name not in params]
    if unknown or missing:
        raise ParameterError(
            f"{family_id} takes parameters {names}; unknown {sorted(unknown)}, missing {missing}"
        )
    return Pgf(family_id, tuple(params[name] for name in names), parts=tuple(parts))


def pgf_params(pgf):
    return dict(zip(FAMILY_PARAMS[pgf.family_id], pgf.params))


@dataclass(frozen=True)
class PgfForms:
    eval: Callable
    d1: Callable
    d2: Callable
    inverse: Optional[Callable]
    pmf: Callable
    mean: Callable
    pmf_kind: str = "closed"
    # log(1 - h(1 - s)), log(1 - h^{-1}(1 - s)) and log h'(1 - s), all from log s
    log_tail: Optional[Callable] = None
    log_tail_inverse: Optional[Callable] = None
    log_d1_tail: Optional[Callable] = None
    # gamma in Pr(N > n) ~ c n^{-gamma}, continues a series pmf past SERIES_CAP
    tail_exponent: Optional[Callable] = None


# --- family forms --------------------------------------------------------


def log1mexp(log_x):
    """log(1 - exp(log_x)) for log_x <= 0, accurate at both ends."""
    log_x = np.minimum(np.asarray(log_x, dtype=float), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(
            log_x > -math.log(2), np.log(-np.expm1(log_x)), np.log1p(-np.exp(log_x))
        )


def log_one_minus_power(log_x, power):
    """log(1 - (1 - x)^power) from log x, accurate even where 1 - x rounds to 1."""
    log_x = np.minimum(np.asarray(log_x, dtype=float), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        first_order = log_x + math.log(power)
        direct = log1mexp(power * log1mexp(log_x))
    return np.where(first_order < -40.0, first_order, direct)


def _power_log_d1(power, log_base):
    """log of d/dx x**power at x = exp(log_base)."""
    if power == 1.0:
        return np.zeros_like(log_base, dtype=float)
    return math.log(power) + (power - 1) * log_base


def _degenerate_forms():
    return PgfForms(
        eval=lambda pgf, t: t * 1.0,
        d1=lambda pgf, t: np.ones_like(t, dtype=float),
        d2=lambda pgf, t: np.zeros_like(t, dtype=float),
        inverse=lambda pgf, u: u * 1.0,
        pmf=lambda pgf, n: (n == 1).astype(float),
        mean=lambda pgf: 1.0,
        log_tail=lambda pgf, log_s: log_s * 1.0,
        log_tail_inverse=lambda pgf, log_s: log_s * 1.0,
        log_d1_tail=lambda pgf, log_s: np.zeros_like(log_s, dtype=float),
    )


def _deterministic_d2(pgf, t):
    m = pgf.params[0]
    if m < 2:
        return np.zeros_like(t, dtype=float)
    return m * (m - 1) * t ** (m - 2)


def _deterministic_forms():
    return PgfForms(
        eval=lambda pgf, t: t ** pgf.params[0],
        d1=lambda pgf, t: pgf.params[0] * t ** (pgf.params[0] - 1),
        d2=_deterministic_d2,
        inverse=lambda pgf, u: u ** (1.0 / pgf.params[0]),
        pmf=lambda pgf, n: (n == pgf.params[0]).astype(float),
        mean=lambda pgf: pgf.params[0],
        log_tail=lambda pgf, log_s: log_one_minus_power(log_s, pgf.params[0]),
        log_tail_inverse=lambda pgf, log_s: log_one_minus_power(log_s, 1.0 / pgf.params[0]),
        log_d1_tail=lambda pgf, log_s: _power_log_d1(pgf.params[0], log1mexp(log_s)),
    )


def _geometric_forms():
    def d(pgf, t, power, scale):
        p = pgf.params[0]
        return scale * p / (1 - (1 - p) * t) ** power

    return PgfForms(
        eval=lambda pgf, t: pgf.params[0] * t / (1 - (1 - pgf.params[0]) * t),
        d1=lambda pgf, t: d(pgf, t, 2, 1.0),
        d2=lambda pgf, t: d(pgf, t, 3, 2.0 * (1 - pgf.params[0])),
        inverse=lambda pgf, u: u / (pgf.params[0] + (1 - pgf.params[0]) * u),
        pmf=lambda pgf, n: stats.geom.pmf(n, pgf.params[0]),
        mean=lambda pgf: 1.0 / pgf.params[0],
        log_tail=lambda pgf, log_s: log_s
        - np.log(pgf.params[0] + (1 - pgf.params[0]) * np.exp(log_s)),
        log_tail_inverse=lambda pgf, log_s: np.log(pgf.params[0])
        + log_s
        - np.log1p(-(1 - pgf.params[0]) * np.exp(log_s)),
        log_d1_tail=lambda pgf, log_s: np.log(pgf.params[0])
        - 2 * np.log(pgf.params[0] + (1 - pgf.params[0]) * np.exp(log_s)),
    )


def _poisson_forms():
    def scaled_exp(pgf, t, power):
        alpha = pgf.params[0]
        return alpha**power * np.exp(alpha * t) / np.expm1(alpha)

    return PgfForms(
        eval=lambda pgf, t: np.expm1(pgf.params[0] * t) / np.expm1(pgf.params[0]),
        d1=lambda pgf, t: scaled_exp(pgf, t, 1),
        d2=lambda pgf, t: scaled_exp(pgf, t, 2),
        inverse=lambda pgf, u: np.log1p(np.expm1(pgf.params[0]) * u) / pgf.params[0],
        pmf=lambda pgf, n: -stats.poisson.pmf(n, pgf.params[0]) / np.expm1(-pgf.params[0]),
        mean=lambda pgf: pgf.params[0] / -np.expm1(-pgf.params[0]),
    )


def _logarithmic_forms():
    def d(pgf, t, power):
        p = pgf.params[0]
        return -(p**power) / ((1 - p * t) ** power * np.log1p(-p))

    return PgfForms(
        eval=lambda pgf, t: np.log1p(-pgf.params[0] * t) / np.log1p(-pgf.params[0]),
        d1=lambda pgf, t: d(pgf, t, 1),
        d2=lambda pgf, t: d(pgf, t, 2),
        inverse=lambda pgf, u: -np.expm1(u * np.log1p(-pgf.params[0])) / pgf.params[0],
        pmf=lambda pgf, n: stats.logser.pmf(n, pgf.params[0]),
        mean=lambda pgf: -pgf.params[0] / ((1 - pgf.params[0]) * np.log1p(-pgf.params[0])),
    )


def _ratio_recursion(first, ratio, n):
    """p_1 = first, p_{j+1} = p_j * ratio(j); returns p at the integers ``n``."""
    n = np.asarray(n, dtype=int)
    n_max = int(n.max()) if n.size else 1
    j = np.arange(1, n_max, dtype=float)
    values = first * np.cumprod(np.concatenate(([1.0], ratio(j))))
    return np.where(n >= 1, values[np.clip(n, 1, n_max) - 1], 0.0)


def _potential_conjugate_d2(pgf, t):
    b = pgf.params[0]
    if b == 1.0:
        return np.zeros_like(t, dtype=float)
    return b * (1 - b) * (1 - t) ** (b - 2)


def _potential_conjugate_forms():
    return PgfForms(
        eval=lambda pgf, t: -np.expm1(pgf.params[0] * np.log1p(-t)),
        d1=lambda pgf, t: pgf.params[0] * (1 - t) ** (pgf.params[0] - 1),
        d2=_potential_conjugate_d2,
        inverse=lambda pgf, u: -np.expm1(np.log1p(-u) / pgf.params[0]),
        pmf=lambda pgf, n: _ratio_recursion(
            pgf.params[0], lambda j: (j - pgf.params[0]) / (j + 1), n
        ),
        mean=lambda pgf: math.inf if pgf.params[0] < 1 else 1.0,
        pmf_kind="recursion",
        log_tail=lambda pgf, log_s: pgf.params[0] * log_s,
        log_tail_inverse=lambda pgf, log_s: log_s / pgf.params[0],
        log_d1_tail=lambda pgf, log_s: _power_log_d1(pgf.params[0], log_s),
    )


def _zt_binomial_parts(pgf):
    n, p = pgf.params
    q = 1.0 - p
    log_q = np.log1p(-p) if p < 1 else -np.inf
    return n, p, q, np.exp(n * log_q), -np.expm1(n * log_q)


def _zt_binomial_forms():
    def eval_(pgf, t):
        n, p, q, qn, z = _zt_binomial_parts(pgf)
        return ((q + p * t) ** n - qn) / z

    def d1(pgf, t):
        n, p, q, qn, z = _zt_binomial_parts(pgf)
        return n * p * (q + p * t) ** (n - 1) / z

    def d2(pgf, t):
        n, p, q, qn, z = _zt_binomial_parts(pgf)
        if n < 2:
            return np.zeros_like(t, dtype=float)
        return n * (n - 1) * p**2 * (q + p * t) ** (n - 2) / z

    def inverse(pgf, u):
        n, p, q, qn, z = _zt_binomial_parts(pgf)
        return ((u * z + qn) ** (1.0 / n) - q) / p

    def pmf(pgf, k):
        n, p, q, qn, z = _zt_binomial_parts(pgf)
        return np.where(k >= 1, stats.binom.pmf(k, int(n), p), 0.0) / z

    def mean(pgf):
        n, p, q, qn, z = _zt_binomial_parts(pgf)
        return n * p / z

    return PgfForms(eval_, d1, d2, inverse, pmf, mean)


@lru_cache(maxsize=256)
def _logarithmic_limit(p):
    return Pgf("logarithmic", (p,))


def _etnb_forms():
    """ETNB pgf ((1-pt)^{-r} - 1)/((1-p)^{-r} - 1), logarithmic for |r| < ETNB_LOG_WINDOW."""
    log_forms = _logarithmic_forms()

    def limit(method):
        def wrapped(pgf, *args):
            p, r = pgf.params
            if abs(r) < ETNB_LOG_WINDOW:
                return getattr(log_forms, method)(_logarithmic_limit(p), *args)
            return methods[method](p, r, np.expm1(-r * np.log1p(-p)), *args)

        return wrapped

    methods = {
        "eval": lambda p, r, D, t: np.expm1(-r * np.log1p(-p * t)) / D,
        "d1": lambda p, r, D, t: r * p * np.exp((-r - 1) * np.log1p(-p * t)) / D,
        "d2": lambda p, r, D, t: r * (r + 1) * p**2 * np.exp((-r - 2) * np.log1p(-p * t)) / D,
        "inverse": lambda p, r, D, u: -np.expm1(-np.log1p(u * D) / r) / p,
        "pmf": lambda p, r, D, n: _ratio_recursion(r * p / D, lambda j: p * (r + j) / (j + 1), n),
        "mean": lambda p, r, D: r * p * np.exp((-r - 1) * np.log1p(-p)) / D,
    }
    return PgfForms(
        eval=limit("eval"),
        d1=limit("d1"),
        d2=limit("d2"),
        inverse=limit("inverse"),
        pmf=limit("pmf"),
        mean=lambda pgf: float(limit("mean")(pgf)),
        pmf_kind="recursion",
    )


def _ex66_forms():
    """h(t) = 1 - (1-t)/(p + (1-p)(1-t)^alpha)^{1/alpha}, alpha in (0,1)."""

    def S(pgf, t):
        alpha, p = pgf.params
        return p + (1 - p) * (1 - t) ** alpha

    def d2(pgf, t):
        alpha, p = pgf.params
        if p == 1.0:
            return np.zeros_like(t, dtype=float)
        return p * (1 + alpha) * (1 - p) * (1 - t) ** (alpha - 1) * S(pgf, t) ** (-1 / alpha - 2)

    def inverse(pgf, u):
        alpha, p = pgf.params
        v = 1 - u
        return 1 - v * (p / (1 - (1 - p) * v**alpha)) ** (1 / alpha)

    def log_tail(pgf, log_s):
        alpha, p = pgf.params
        return log_s - np.log(p + (1 - p) * np.exp(alpha * log_s)) / alpha

    def log_tail_inverse(pgf, log_s):
        alpha, p = pgf.params
        return log_s + (np.log(p) - np.log1p(-(1 - p) * np.exp(alpha * log_s))) / alpha

    def log_d1_tail(pgf, log_s):
        alpha, p = pgf.params
        return np.log(p) - (1 / alpha + 1) * np.log(p + (1 - p) * np.exp(alpha * log_s))

    return PgfForms(
        eval=lambda pgf, t: 1 - (1 - t) * S(pgf, t) ** (-1 / pgf.params[0]),
        d1=lambda pgf, t: pgf.params[1] * S(pgf, t) ** (-1 / pgf.params[0] - 1),
        d2=d2,
        inverse=inverse,
        pmf=lambda pgf, n: _series_lookup(pgf, n),
        mean=lambda pgf: pgf.params[1] ** (-1 / pgf.params[0]),
        pmf_kind="series",
        log_tail=log_tail,
        log_tail_inverse=log_tail_inverse,
        log_d1_tail=log_d1_tail,
        tail_exponent=lambda pgf: 1 + pgf.params[0],
    )


def _composite_forms():
    def eval_(pgf, t):
        for part in reversed(pgf.parts):
            t = part.forms.eval(part, t)
        return t

    def jet(pgf, t):
        # value, first and second derivative carried through the chain
        value, d1, d2 = t, np.ones_like(t, dtype=float), np.zeros_like(t, dtype=float)
        for part in reversed(pgf.parts):
            g1 = part.forms.d1(part, value)
            g2 = part.forms.d2(part, value)
            value, d1, d2 = part.forms.eval(part, value), g1 * d1, g2 * d1**2 + g1 * d2
        return value, d1, d2

    def inverse(pgf, u):
        for part in pgf.parts:
            u = pgf_inverse_eval(part, np.clip(u, 0.0, 1.0))
        return u

    return PgfForms(
        eval=eval_,
        d1=lambda pgf, t: jet(pgf, t)[1],
        d2=lambda pgf, t: jet(pgf, t)[2],
        inverse=inverse,
        pmf=lambda pgf, n: _series_lookup(pgf, n),
        mean=lambda pgf: float(np.prod([pgf_mean(part) for part in pgf.parts])),
        pmf_kind="series",
    )


def _dilation_forms():
    """h~(t) = h(t^k)^{1/k}."""

    def base_k(pgf):
        return pgf.parts[0], pgf.params[0]

    def eval_(pgf, t):
        base, k = base_k(pgf)
        return base.forms.eval(base, t**k) ** (1 / k)

    def d1(pgf, t):
        base, k = base_k(pgf)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = base.forms.eval(base, t**k)
            value = g ** (1 / k - 1) * base.forms.d1(base, t**k) * t ** (k - 1)
        at_zero = base.forms.d1(base, np.zeros(1))[0] ** (1 / k)
        return np.where(t == 0, at_zero, value)

    def d2(pgf, t):
        base, k = base_k(pgf)
        with np.errstate(divide="ignore", invalid="ignore"):
            tk = t**k
            g = base.forms.eval(base, tk)
            g1 = base.forms.d1(base, tk) * k * t ** (k - 1)
            g2 = base.forms.d2(base, tk) * k**2 * t ** (2 * k - 2) + base.forms.d1(
                base, tk
            ) * k * (k - 1) * t ** (k - 2)
            value = (1 / k) * (1 / k - 1) * g ** (1 / k - 2) * g1**2 + (1 / k) * g ** (
                1 / k - 1
            ) * g2
        return np.where(t == 0, 2.0 * _series_lookup(pgf, np.array([2]))[0], value)

    def inverse(pgf, u):
        base, k = base_k(pgf)
        return pgf_inverse_eval(base, u**k) ** (1 / k)

    def log_tail(pgf, log_s):
        base, k = base_k(pgf)
        log_rest = log_one_minus_power(log_s, k)
        return log_one_minus_power(log_tail_eval(base, log_rest), 1 / k)

    def log_tail_inverse(pgf, log_s):
        base, k = base_k(pgf)
        log_rest = log_one_minus_power(log_s, k)
        return log_one_minus_power(log_tail_inverse_eval(base, log_rest), 1 / k)

    def log_d1_tail(pgf, log_s):
        base, k = base_k(pgf)
        log_t = log1mexp(log_s)
        log_rest = log_one_minus_power(log_s, k)
        log_h = log1mexp(log_tail_eval(base, log_rest))
        value = (
            (1 / k - 1) * log_h
            + pgf_log_derivative(base, np.exp(k * log_t), log_rest)
            + (k - 1) * log_t
        )
        at_zero = np.log(base.forms.d1(base, np.zeros(1))[0]) / k
        return np.where(np.isneginf(log_t), at_zero, value)

    return PgfForms(
        eval=eval_,
        d1=d1,
        d2=d2,
        inverse=inverse,
        pmf=lambda pgf, n: _series_lookup(pgf, n),
        mean=lambda pgf: pgf_mean(pgf.parts[0]),
        pmf_kind="series",
        log_tail=log_tail,
        log_tail_inverse=log_tail_inverse,
        log_d1_tail=log_d1_tail,
    )


FORMS = {
    "degenerate": _degenerate_forms(),
    "deterministic": _deterministic_forms(),
    "zt_geometric": _geometric_forms(),
    "zt_poisson": _poisson_forms(),
    "logarithmic": _logarithmic_forms(),
    "potential_conjugate": _potential_conjugate_forms(),
    "zt_binomial": _zt_binomial_forms(),
    "etnb": _etnb_forms(),
    "zt_negbinomial": _etnb_forms(),
    "ex66": _ex66_forms(),
    "composite": _composite_forms(),
    "dilation": _dilation_forms(),
}


# --- power series --------------------------------------------------------


def series_power(a, exponent, order):
    """
    First ``order`` coefficients of a(x)**exponent for a power series with a[0] != 0,
    by the J.C.P. Miller recurrence.
    """
    a = np.asarray(a, dtype=float)[:order]
    a = np.pad(a, (0, order - len(a)))
    b = np.zeros(order)
    b[0] = a[0] ** exponent
    for n in range(1, order):
        k = np.arange(1, n + 1)
        b[n] = np.dot(((exponent + 1) * k - n) * a[1 : n + 1], b[n - 1 :: -1]) / (n * a[0])
    return b


def series_compose(outer, inner, order):
    """Coefficients of outer(inner(x)) up to x^{order-1}; inner[0] must be 0."""
    outer = np.asarray(outer, dtype=float)
    inner = np.asarray(inner, dtype=float)[:order]
    power = inner
    result = np.zeros(order)
    for j in range(1, min(len(outer), order)):
        if j > 1:
            power = np.convolve(power, inner)[:order]
        result[: len(power)] += outer[j] * power
    return result


@lru_cache(maxsize=128)
def _series_coefficients(pgf, order):
    """Coefficients of t^0..t^{order-1}; coefficient 0 is Pr(N=0)=0."""
    if pgf.family_id == "composite":
        coeffs = _series_coefficients(pgf.parts[-1], order)
        for part in reversed(pgf.parts[:-1]):
            coeffs = series_compose(_series_coefficients(part, order), coeffs, order)
        return coeffs
    if pgf.family_id == "dilation":
        base, k = pgf.parts[0], int(pgf.params[0])
        base_order = (order - 1 + k) // k + 1
        base_coeffs = _series_coefficients(base, base_order)
        spread = np.zeros(k * base_order)
        spread[::k] = base_coeffs
        p1 = base_coeffs[1]
        ratio = spread[k : k + order - 1] / p1
        coeffs = np.zeros(order)
        coeffs[1:] = p1 ** (1 / k) * series_power(ratio, 1 / k, order - 1)
        return coeffs
    if pgf.family_id == "ex66":
        alpha, p = pgf.params
        j = np.arange(order - 1, dtype=float)
        # (1-t)^alpha
        a = np.concatenate(([1.0], np.cumprod((j - alpha) / (j + 1))))[:order]
        s = (1 - p) * a
        s[0] = 1.0
        w = series_power(s, -1 / alpha, order)
        coeffs = np.zeros(order)
        coeffs[1:] = w[:-1] - w[1:]
        return coeffs
    coeffs = np.zeros(order)
    coeffs[1:] = pgf.forms.pmf(pgf, np.arange(1, order))
    return coeffs


def _series_lookup(pgf, n, order_cap=None):
    n = np.asarray(n, dtype=int)
    n_max = int(n.max()) if n.size else 1
    if order_cap is None:
        order_cap = COMPOSITE_PMF_ORDER if pgf.family_id == "composite" else SERIES_CAP
    if n_max > order_cap:
        raise ParameterError(
            f"pmf of {pgf.label} is only available up to order {order_cap}, requested {n_max}"
        )
    coeffs = _series_coefficients(pgf, n_max + 1)
    return np.where(n >= 1, coeffs[np.clip(n, 0, n_max)], 0.0)


# --- evaluation ----------------------------------------------------------


def _unit(x, name):
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < -UNIT_TOL) or np.any(arr > 1 + UNIT_TOL):
        raise DomainError(f"{name} must lie in [0, 1], got {x}")
    return np.clip(arr, 0.0, 1.0), arr.ndim == 0


def _out(values, scalar):
    return float(values) if scalar else values


def pgf_eval(pgf, t):
    """h_N(t) for t in [0, 1]."""
    t, scalar = _unit(t, "t")
    with np.errstate(divide="ignore", invalid="ignore"):
        values = pgf.forms.eval(pgf, t)
    return _out(np.clip(values, 0.0, 1.0), scalar)


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def _clip_log(log_x):
    return np.minimum(np.asarray(log_x, dtype=float), 0.0)


def log_tail_eval(pgf, log_s):
    """log h̄_N(s) from log s."""
    log_s = _clip_log(log_s)
    if pgf.family_id == "composite":
        for part in reversed(pgf.parts):
            log_s = log_tail_eval(part, log_s)
        return log_s
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if pgf.forms.log_tail is not None:
            return _clip_log(pgf.forms.log_tail(pgf, log_s))
        return _log(1.0 - pgf_eval(pgf, -np.expm1(log_s)))


def log_tail_inverse_eval(pgf, log_s, method="auto"):
    """log h̄_N^{-1}(s) from log s."""
    log_s = _clip_log(log_s)
    if method == "auto" and pgf.family_id == "composite":
        for part in pgf.parts:
            log_s = log_tail_inverse_eval(part, log_s)
        return log_s
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if method == "auto" and pgf.forms.log_tail_inverse is not None:
            return _clip_log(pgf.forms.log_tail_inverse(pgf, log_s))
        return _log(1.0 - pgf_inverse_eval(pgf, -np.expm1(log_s), method=method))


def _has_tail_forms(pgf):
    return pgf.family_id == "composite" or pgf.forms.log_tail is not None


def conjugate_eval(pgf, t):
    """h̄_N(t) = 1 - h_N(1 - t), through the tail forms when the family has them."""
    t, scalar = _unit(t, "t")
    if _has_tail_forms(pgf):
        values = np.exp(log_tail_eval(pgf, _log(t)))
    else:
        values = 1.0 - pgf_eval(pgf, 1.0 - t)
    return _out(np.clip(values, 0.0, 1.0), scalar)


def _numeric_inverse(pgf, u):
    """Bracketed inversion of h on [0, 1]: safeguarded Newton falling back to bisection."""
    forms = pgf.forms
    lo, hi = np.zeros_like(u), np.ones_like(u)
    t = u.copy()
    dx_old = hi - lo
    with np.errstate(all="ignore"):
        for iteration in range(INVERSE_MAXITER):
            f = forms.eval(pgf, t) - u
            done = (np.abs(f) <= INVERSE_TOL) | (hi - lo <= 4 * np.finfo(float).eps)
            if done.all():
                logger.debug("Inverted %s in %d iterations", pgf.label, iteration)
                return t
            lo = np.where(f < 0, t, lo)
            hi = np.where(f > 0, t, hi)
            df = forms.d1(pgf, t)
            step = t - f / df
            newton = (
                np.isfinite(step)
                & (step > lo)
                & (step < hi)
                & (np.abs(2 * f) <= np.abs(dx_old * df))
            )
            t_new = np.where(newton, step, 0.5 * (lo + hi))
            dx_old = np.abs(t_new - t)
            t = np.where(done, t, t_new)
    raise ConvergenceError(
        f"Inversion of {pgf.label} did not reach tolerance {INVERSE_TOL} in {INVERSE_MAXITER} iterations"
    )


def pgf_inverse_eval(pgf, u, method="auto"):
    """
    h_N^{-1}(u) for u in [0, 1].

    Parameters:
    pgf (Pgf): Stopping pgf.
    u (float or array): Points in [0, 1].
    method (str): "auto" uses the closed-form inverse when the family has one,
        "numeric" forces bracketed root-finding.
    """
    u, scalar = _unit(u, "u")
    if method not in ("auto", "numeric"):
        raise ParameterError(f"Unknown inversion method: {method}")
    if method == "numeric" or pgf.forms.inverse is None:
        t = _numeric_inverse(pgf, u)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            t = pgf.forms.inverse(pgf, u)
    t = np.where(u == 0.0, 0.0, np.where(u == 1.0, 1.0, np.clip(t, 0.0, 1.0)))
    return _out(t, scalar)


def conjugate_inverse_eval(pgf, u, method="auto"):
    """h̄_N^{-1}(u) = 1 - h_N^{-1}(1 - u)."""
    u, scalar = _unit(u, "u")
    if method == "auto" and _has_tail_forms(pgf):
        values = np.exp(log_tail_inverse_eval(pgf, _log(u)))
        values = np.where(u == 0.0, 0.0, np.where(u == 1.0, 1.0, np.clip(values, 0.0, 1.0)))
    else:
        values = 1.0 - pgf_inverse_eval(pgf, 1.0 - u, method=method)
    return _out(values, scalar)


def _log_head(pgf, log_u):
    return _log(pgf_eval(pgf, np.exp(log_u)))


def _log_head_inverse(pgf, log_u):
    return _log(pgf_inverse_eval(pgf, np.exp(log_u)))


LOG_PAIR_MAPS = {
    "h": (_log_head, log_tail_eval),
    "hbar": (log_tail_eval, _log_head),
    "hinv": (_log_head_inverse, log_tail_inverse_eval),
    "hbarinv": (log_tail_inverse_eval, _log_head_inverse),
}


def settle(log_u, log_s):
    """Make log u and log s, s = 1 - u, consistent, keeping whichever of u and s is smaller."""
    log_u, log_s = _clip_log(log_u), _clip_log(log_s)
    upper = log_s < log_u
    return np.where(upper, log1mexp(log_s), log_u), np.where(upper, log_s, log1mexp(log_u))


def log_pair_eval(op, pgf, log_u, log_s):
    """
    (log g(u), log(1 - g(u))) from (log u, log(1 - u)), for g one of h, h̄, h^{-1}
    and h̄^{-1} (op "h", "hbar", "hinv", "hbarinv"). The value is computed from u
    and the complement from 1 - u, so points within rounding of 0 or 1 keep
    their distance to it.
    """
    if op not in LOG_PAIR_MAPS:
        raise ParameterError(f"Unknown pgf map: {op}")
    log_u, log_s = _clip_log(log_u), _clip_log(log_s)
    if pgf.family_id == "degenerate":
        return log_u, log_s
    lower, upper = LOG_PAIR_MAPS[op]
    return settle(lower(pgf, log_u), upper(pgf, log_s))


def pair_eval(op, pgf, u, s=None):
    """(g(u), 1 - g(u)) as in log_pair_eval; pass s = 1 - u when it is known more precisely."""
    u = np.asarray(u, dtype=float)
    s = 1.0 - u if s is None else np.asarray(s, dtype=float)
    log_u, log_s = log_pair_eval(op, pgf, _log(u), _log(s))
    return np.exp(log_u), np.exp(log_s)


def _finite_difference(pgf, t, order, step=1e-3):
    # (order - 2)-th difference of the analytic second derivative
    j = order - 2
    center = np.clip(t, j * step / 2, 1 - j * step / 2 - step)
    total = np.zeros_like(t)
    for i in range(j + 1):
        total += (-1) ** i * math.comb(j, i) * pgf.forms.d2(pgf, center + (j / 2 - i) * step)
    return total / step**j


def pgf_derivative_eval(pgf, t, order=1):
    """
    Derivative of h_N at t.

    Orders 1 and 2 are analytic; higher orders use finite differences of the
    analytic second derivative. Infinite values at t=1 raise DomainError.
    """
    if int(order) != order or order < 1:
        raise ParameterError(f"Derivative order must be a positive integer, got {order}")
    t, scalar = _unit(t, "t")
    with np.errstate(divide="ignore", invalid="ignore"):
        if order == 1:
            values = pgf.forms.d1(pgf, t)
        elif order == 2:
            values = pgf.forms.d2(pgf, t)
        else:
            values = _finite_difference(pgf, t, int(order))
    values = np.asarray(values, dtype=float)
    if np.any(~np.isfinite(values)):
        raise DomainError(f"Derivative of order {order} of {pgf.label} is infinite at t=1")
    return _out(values, scalar)


def pgf_log_derivative(pgf, t, log_complement=None):
    """
    log h_N'(t); +inf at t=1 for infinite-mean families instead of an error.

    With ``log_complement`` = log(1 - t), families with a tail form and
    composites of them are evaluated from it, which stays finite wherever
    1 - t is positive even when t itself rounds to 1.
    """
    t, scalar = _unit(t, "t")
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if log_complement is None:
            values = np.log(pgf.forms.d1(pgf, t))
        elif pgf.forms.log_d1_tail is not None:
            values = pgf.forms.log_d1_tail(pgf, np.asarray(log_complement, dtype=float))
        elif pgf.family_id == "composite":
            values, log_t, log_s = 0.0, np.log(t), np.asarray(log_complement, dtype=float)
            for part in reversed(pgf.parts):
                values = values + pgf_log_derivative(part, np.exp(log_t), log_s)
                log_t, log_s = log_pair_eval("h", part, log_t, log_s)
        else:
            values = np.log(pgf.forms.d1(pgf, t))
        values = np.broadcast_to(values, t.shape).astype(float)
    return _out(values, scalar)


def pgf_mean(pgf):
    """E[N] = h_N'(1), inf for infinite-mean families."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(pgf.forms.mean(pgf))


def pgf_pmf(pgf, n, order_cap=None):
    """Pr(N = n) for n >= 1."""
    arr = np.asarray(n)
    if np.any(arr < 1) or np.any(np.asarray(arr, dtype=float) != np.floor(arr)):
        raise ParameterError(f"pmf is defined for positive integers, got {n}")
    arr = arr.astype(int)
    if pgf.forms.pmf_kind == "series":
        values = _series_lookup(pgf, np.atleast_1d(arr), order_cap)
    else:
        values = pgf.forms.pmf(pgf, np.atleast_1d(arr))
    values = np.asarray(values, dtype=float).reshape(arr.shape)
    return _out(values, arr.ndim == 0)


def pgf_pmf_block(pgf, n_max, order_cap=None):
    """Array of Pr(N=n) for n = 0..n_max (entry 0 is zero)."""
    block = np.zeros(int(n_max) + 1)
    block[1:] = pgf_pmf(pgf, np.arange(1, int(n_max) + 1), order_cap=order_cap)
    return block


def pgf_compose(outer, inner):
    """
    Pgf of outer∘inner. Members of the same closed family compose to the member
    at the summed eta; anything else becomes a flattened composite.
    """
    if outer.family_id == "degenerate":
        return inner
    if inner.family_id == "degenerate":
        return outer
    family = outer.member_of
    if (
        family is not None
        and family == inner.member_of
        and getattr(family, "closed_under_composition", False)
    ):
        return family.member(outer.eta + inner.eta)

    def flat(pgf):
        return pgf.parts if pgf.family_id == "composite" else (pgf,)

    return Pgf("composite", parts=flat(outer) + flat(inner))


@dataclass(frozen=True)
class ConjugatePgfView:
    """The conjugate h̄_N of a pgf: increasing and concave on [0, 1]."""

    base: Pgf

    def eval(self, t):
        return conjugate_eval(self.base, t)

    def inverse(self, u, method="auto"):
        return conjugate_inverse_eval(self.base, u, method=method)

    def derivative(self, t, order=1):
        t, scalar = _unit(t, "t")
        value = pgf_derivative_eval(self.base, 1.0 - t, order)
        return _out(value if order % 2 else -value, scalar)


def conjugate(pgf):
    if isinstance(pgf, ConjugatePgfView):
        return pgf.base
    return ConjugatePgfView(pgf)


# --- sampling ------------------------------------------------------------

_TAIL_WARNINGS = Counter()
_TAIL_LOCK = threading.Lock()


class _CumulativeTable:
    """
    Cumulative pmf of one pgf, extended lazily as draws require.

    Series pmfs stop at SERIES_CAP terms. When the family declares a tail
    exponent gamma, draws past the table follow Pr(N > n) = s (size / n)^gamma
    with s the mass left at the table end, up to SAMPLER_CAP.
    """

    def __init__(self, pgf):
        self.pgf = pgf
        self.cap = SERIES_CAP if pgf.forms.pmf_kind == "series" else SAMPLER_CAP
        exponent = pgf.forms.tail_exponent
        self.tail_exponent = None if exponent is None else float(exponent(pgf))
        self.cdf = np.zeros(0)
        self.lock = threading.Lock()

    @property
    def resolved(self):
        return self.cdf.size > 0 and self.cdf[-1] >= 1.0 - TAIL_MASS

    @property
    def support_cap(self):
        return self.cap if self.tail_exponent is None else SAMPLER_CAP

    def extend(self, need):
        with self.lock:
            while not self.resolved and self.cdf.size < self.cap and (
                self.cdf.size == 0 or self.cdf[-1] < need
            ):
                size = min(self.cap, max(SAMPLER_BLOCK, 2 * self.cdf.size))
                pmf = pgf_pmf_block(self.pgf, size, order_cap=self.cap)[1:]
                self.cdf = np.cumsum(pmf)
                logger.debug("Extended pmf table of %s to %d terms", self.pgf.label, size)
        return self.cdf

    def continue_tail(self, u):
        """Counts past the table for uniforms u beyond its last cumulative value."""
        cdf = self.cdf
        survival = max(1.0 - cdf[-1], 0.0)
        with np.errstate(divide="ignore", over="ignore"):
            n = np.ceil(cdf.size * (survival / (1.0 - u)) ** (1.0 / self.tail_exponent))
        return np.clip(n, cdf.size + 1, self.support_cap + 1).astype(np.int64)


@lru_cache(maxsize=64)
def _table_for(pgf):
    return _CumulativeTable(pgf)


def tail_warning_count(family_id=None):
    """Number of draws mapped to the support cap, overall or for one family."""
    with _TAIL_LOCK:
        if family_id is None:
            return sum(_TAIL_WARNINGS.values())
        return _TAIL_WARNINGS[family_id]


def _sample_counts(pgf, rng, n, tail_policy):
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if pgf.family_id == "degenerate":
        return np.ones(n, dtype=np.int64)
    if pgf.family_id == "deterministic":
        return np.full(n, int(pgf.params[0]), dtype=np.int64)
    if pgf.family_id == "composite":
        # a composition of pgfs is a random sum of the inner variable
        outer = pgf.parts[0]
        inner = pgf.parts[1] if len(pgf.parts) == 2 else Pgf("composite", parts=pgf.parts[1:])
        outer_counts = _sample_counts(outer, rng, n, tail_policy)
        inner_counts = _sample_counts(inner, rng, int(outer_counts.sum()), tail_policy)
        offsets = np.concatenate(([0], np.cumsum(outer_counts)[:-1]))
        return np.add.reduceat(inner_counts, offsets)

    u = rng.random(n)
    table = _table_for(pgf)
    cdf = table.extend(float(u.max()))
    counts = np.searchsorted(cdf, u, side="right") + 1
    beyond = u >= cdf[-1]
    if beyond.any() and not table.resolved and table.tail_exponent is not None:
        counts[beyond] = table.continue_tail(u[beyond])
        beyond = counts > table.support_cap
    if beyond.any():
        cap = table.support_cap
        if table.resolved:
            counts[beyond] = cdf.size
        elif tail_policy == "raise":
            raise TailError(
                f"{int(beyond.sum())} draws of {pgf.label} fell beyond the {cap}-term support cap"
            )
        else:
            counts[beyond] = cap
            with _TAIL_LOCK:
                _TAIL_WARNINGS[pgf.family_id] += int(beyond.sum())
            logger.warning(
                "%d draws of %s mapped to the support cap %d (unresolved mass %.3g)",
                int(beyond.sum()),
                pgf.label,
                cap,
                1.0 - cdf[-1],
            )
    return counts.astype(np.int64)


def pgf_sample(pgf, rng, size=None, tail_policy="clip"):
    """
    Draw N by inverse-cdf sampling over the cumulative pmf.

    Parameters:
    pgf (Pgf): Stopping pgf.
    rng (numpy.random.Generator): Seeded stream, consumed by this call only.
    size (int or tuple): Number of draws; None returns a single int.
    tail_policy (str): "clip" maps unresolved-tail draws to the support cap and
        counts them; "raise" raises TailError instead.
    """
    if tail_policy not in ("clip", "raise"):
        raise ParameterError(f"Unknown tail policy: {tail_policy}")
    n = 1 if size is None else int(np.prod(size))
    counts = _sample_counts(pgf, rng, n, tail_policy)
    if size is None:
        return int(counts[0])
    return counts.reshape(size)
