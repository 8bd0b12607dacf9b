"""
Randomly stopped extreme transforms of a continuous model.

A transform replaces the cdf F_X of a base model by g(F_X) where g is a chain
of steps, each one of

    h        stopped maximum        h_N(t)
    hbar     stopped minimum        1 - h_N(1 - t)
    hinv     maximum precursor      h_N^{-1}(t)
    hbarinv  minimum precursor      1 - h_N^{-1}(1 - t)

applied innermost first. Applying a transform to a TransformedModel appends
steps, so repeated transforms are exact chains over the original base.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from extremes.base_distributions import ContinuousModel, model_from_spec, model_spec
from extremes.errors import ClosureError, DomainError, ParameterError
from extremes.pgf_core import Pgf, log_pair_eval, pgf_log_derivative
from extremes.stopping_catalog import (
    StoppingFamily,
    family_from_spec,
    family_spec,
    pgf_spec,
    stopping_from_spec,
)

logger = logging.getLogger(__name__)

KINDS = (
    "stopped_max",
    "stopped_min",
    "max_precursor",
    "min_precursor",
    "combined_max",
    "combined_min",
)

STEP_INVERSE = {"h": "hinv", "hinv": "h", "hbar": "hbarinv", "hbarinv": "hbar"}


def step_log_derivative(op, pgf, point, image):
    """
    log of d/du of one step at u.

    ``point`` is (log u, log(1 - u)) and ``image`` the step's value in the same
    form, so every derivative is taken from the side that is not rounded to 1.
    """
    log_u, log_s = point
    log_value, log_complement = image
    if op == "h":
        return pgf_log_derivative(pgf, np.exp(log_u), log_s)
    if op == "hbar":
        return pgf_log_derivative(pgf, np.exp(log_s), log_u)
    if op == "hinv":
        return -pgf_log_derivative(pgf, np.exp(log_value), log_complement)
    return -pgf_log_derivative(pgf, np.exp(log_complement), log_value)


def _out(values, like):
    return float(values) if np.ndim(like) == 0 else np.asarray(values, dtype=float)


@dataclass(frozen=True)
class TransformedModel:
    """
    Continuous model with cdf g(F_X) for a chain g of stopped-extreme steps.

    Parameters:
    kind (str): One of KINDS; the outermost transform for chained models.
    steps (tuple): (op, Pgf) pairs applied innermost first.
    base (ContinuousModel): The untransformed model X.
    stopping: Pgf, StoppingFamily or (Pgf, Pgf) pair the outermost transform was built from.
    eta: eta of a combined extension, (eta1, eta2) for the two-parameter form.
    source: Model the outermost transform was applied to.
    options (tuple): Extra (name, value) settings of the outermost transform.
    """

    kind: str
    steps: tuple
    base: ContinuousModel
    stopping: object = None
    eta: object = None
    source: object = field(default=None, repr=False)
    options: tuple = ()

    @property
    def support(self):
        return self.base.support

    @property
    def active_steps(self):
        """Steps other than the identity of degenerate stopping."""
        return tuple(step for step in self.steps if step[1].family_id != "degenerate")

    @property
    def label(self):
        inner = self.source.label if self.source is not None else self.base.label
        stopping = self.stopping
        if isinstance(stopping, tuple):
            name = " / ".join(p.label for p in stopping)
        else:
            name = getattr(stopping, "label", str(stopping))
        eta = "" if self.eta is None else f", eta={self.eta}"
        return f"{self.kind}[{name}{eta}]({inner})"

    def _forward(self, y):
        # (log F, log(1 - F)) carried through the chain
        point = (self.base.logcdf(y), self.base.logsf(y))
        for op, pgf in self.active_steps:
            point = log_pair_eval(op, pgf, *point)
        return point

    def cdf(self, y):
        if not self.active_steps:
            return self.base.cdf(y)
        log_u, _ = self._forward(y)
        return _out(np.exp(log_u), y)

    def sf(self, y):
        if not self.active_steps:
            return self.base.sf(y)
        _, log_s = self._forward(y)
        return _out(np.exp(log_s), y)

    def logpdf(self, y):
        """
        log f_X(y) plus the log-derivatives of every step. The cdf travels as
        the logs of itself and its complement, so densities of infinite-mean
        stopping models stay finite where F_X(y) rounds to 1.
        """
        point = (self.base.logcdf(y), self.base.logsf(y))
        total = np.asarray(self.base.logpdf(y), dtype=float)
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            for op, pgf in self.active_steps:
                image = log_pair_eval(op, pgf, *point)
                total = total + step_log_derivative(op, pgf, point, image)
                point = image
            total = np.where(np.isnan(total), -np.inf, total)
        return _out(total, y)

    def pdf(self, y):
        return np.exp(self.logpdf(y))

    def quantile(self, u):
        arr = np.asarray(u, dtype=float)
        if np.any(np.isnan(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
            raise DomainError(f"Quantile level must lie in [0, 1], got {u}")
        if not self.active_steps:
            return self.base.quantile(u)
        with np.errstate(divide="ignore"):
            point = (np.log(arr), np.log1p(-arr))
        for op, pgf in reversed(self.active_steps):
            point = log_pair_eval(STEP_INVERSE[op], pgf, *point)
        log_u, log_s = point
        upper = log_s < log_u
        with np.errstate(invalid="ignore"):
            values = np.where(upper, self.base.isf(np.exp(log_s)), self.base.quantile(np.exp(log_u)))
        return _out(values, u)

    def sample(self, rng, size=None):
        return self.quantile(rng.random(size))


def _chain(kind, steps, model, stopping, eta=None, options=()):
    if isinstance(model, TransformedModel):
        base, prefix = model.base, model.steps
    elif isinstance(model, ContinuousModel):
        base, prefix = model, ()
    else:
        raise ParameterError(f"Cannot transform {model!r}: not a continuous model")
    return TransformedModel(
        kind, prefix + tuple(steps), base, stopping=stopping, eta=eta, source=model,
        options=tuple(options),
    )


def _pgf(stopping):
    if not isinstance(stopping, Pgf):
        raise ParameterError(f"Expected a stopping pgf, got {stopping!r}")
    return stopping


def stopped_max(stopping, base):
    """Model of max(X_1, ..., X_N): cdf h_N(F_X)."""
    return _chain("stopped_max", [("h", _pgf(stopping))], base, stopping)


def stopped_min(stopping, base):
    """Model of min(X_1, ..., X_N): cdf 1 - h_N(1 - F_X)."""
    return _chain("stopped_min", [("hbar", _pgf(stopping))], base, stopping)


def max_precursor(stopping, base):
    """Model whose N-stopped maximum is X: cdf h_N^{-1}(F_X)."""
    return _chain("max_precursor", [("hinv", _pgf(stopping))], base, stopping)


def min_precursor(stopping, base):
    """Model whose N-stopped minimum is X: cdf 1 - h_N^{-1}(1 - F_X)."""
    return _chain("min_precursor", [("hbarinv", _pgf(stopping))], base, stopping)


def _flavored(flavor, steps):
    if flavor == "max":
        return steps
    if flavor == "min":
        return [("hbar" if op == "h" else "hbarinv", pgf) for op, pgf in steps]
    raise ParameterError(f"Unknown flavor: {flavor}")


def extension_steps(family, eta, flavor="max", anchor=None):
    """
    Steps of H_{N,eta} (max) or its conjugate (min).

    Without an anchor, eta >= eta0 is the stopped transform of member(eta),
    eta <= -eta0 the precursor of member(-eta), and the gap in between goes
    through member(beta + eta+) o member(beta + eta-)^{-1} with
    beta = eta0 + |eta| + 1. An explicit anchor always takes the composite route.
    """
    if not family.closed_under_composition:
        raise ClosureError(f"{family.label} is not closed under composition")
    eta = float(eta)
    if eta == 0.0:
        return []
    if anchor is None and eta >= family.eta0:
        steps = [("h", family.member(eta))]
    elif anchor is None and -eta >= family.eta0:
        steps = [("hinv", family.member(-eta))]
    else:
        beta = family.eta0 + abs(eta) + 1.0 if anchor is None else float(anchor)
        if beta < family.eta0:
            raise ParameterError(f"Anchor {beta} lies below eta0={family.eta0} of {family.label}")
        steps = [("hinv", family.member(beta + max(-eta, 0.0))), ("h", family.member(beta + max(eta, 0.0)))]
    return _flavored(flavor, steps)


def combined_extension(family, eta, base, flavor="max", anchor=None):
    """
    Model with cdf H_{N,eta}(F_X) (flavor "max") or 1 - H_{N,eta}(1 - F_X) (flavor "min").

    eta may have any sign; eta = 0 returns the base cdf.
    """
    steps = extension_steps(family, eta, flavor, anchor)
    options = () if anchor is None else (("anchor", float(anchor)),)
    return _chain(f"combined_{flavor}", steps, base, family, float(eta), options)


def two_param_combined(stopping, eta1, eta2, base, flavor="max", precursor_first=True):
    """
    Two-parameter extension built from a pair of stopping models.

    ``stopping`` is either a StoppingFamily (members taken at eta1 and eta2) or
    a (Pgf, Pgf) pair, in which case eta1 and eta2 are ignored. With
    ``precursor_first`` the max flavor is h_2 o h_1^{-1}, otherwise h_2^{-1} o h_1;
    the min flavor uses the conjugate maps.
    """
    if isinstance(stopping, StoppingFamily):
        n1, n2 = stopping.member(eta1), stopping.member(eta2)
        eta = (float(eta1), float(eta2))
    else:
        n1, n2 = (_pgf(p) for p in stopping)
        stopping, eta = (n1, n2), None
    if precursor_first:
        steps = [("hinv", n1), ("h", n2)]
    else:
        steps = [("h", n1), ("hinv", n2)]
    steps = _flavored(flavor, steps)
    options = (("two_param", True), ("precursor_first", bool(precursor_first)))
    return _chain(f"combined_{flavor}", steps, base, stopping, eta, options)


BASIC = {
    "stopped_max": stopped_max,
    "stopped_min": stopped_min,
    "max_precursor": max_precursor,
    "min_precursor": min_precursor,
}


def make_transform(kind, stopping, base, eta=None, **options):
    """Dispatch on kind; combined kinds take a family and eta (or a pair of etas)."""
    if kind in BASIC:
        return BASIC[kind](stopping, base)
    if kind not in ("combined_max", "combined_min"):
        raise ParameterError(f"Unknown transform kind: {kind}")
    flavor = kind.split("_")[1]
    if options.get("two_param"):
        eta1, eta2 = eta if eta is not None else (None, None)
        return two_param_combined(
            stopping, eta1, eta2, base, flavor, options.get("precursor_first", True)
        )
    return combined_extension(stopping, eta, base, flavor, options.get("anchor"))


def transform_spec(model):
    """JSON-ready description of a transformed model."""
    if isinstance(model, ContinuousModel):
        return model_spec(model)
    options = dict(model.options)
    spec = {"kind": model.kind}
    if isinstance(model.stopping, StoppingFamily):
        spec["stopping"] = family_spec(model.stopping)
    elif isinstance(model.stopping, tuple):
        spec["stopping"] = [pgf_spec(p) for p in model.stopping]
    else:
        spec["stopping"] = pgf_spec(model.stopping)
    if options.get("two_param"):
        if model.eta is not None:
            spec["eta1"], spec["eta2"] = model.eta
        spec["precursor_first"] = options["precursor_first"]
    elif model.eta is not None:
        spec["eta"] = model.eta
    if "anchor" in options:
        spec["anchor"] = options["anchor"]
    spec["base"] = transform_spec(model.source)
    return spec


def transform_from_spec(spec):
    if "kind" not in spec:
        return model_from_spec(spec)
    kind = spec["kind"]
    base = transform_from_spec(spec["base"])
    stopping = spec["stopping"]
    if kind in BASIC:
        return BASIC[kind](stopping_from_spec(stopping), base)
    flavor = kind.split("_")[-1]
    if "precursor_first" in spec:
        if isinstance(stopping, list):
            pair = tuple(stopping_from_spec(p) for p in stopping)
            return two_param_combined(pair, None, None, base, flavor, spec["precursor_first"])
        return two_param_combined(
            family_from_spec(stopping), spec["eta1"], spec["eta2"], base, flavor,
            spec["precursor_first"],
        )
    return combined_extension(
        family_from_spec(stopping), spec["eta"], base, flavor, spec.get("anchor")
    )
