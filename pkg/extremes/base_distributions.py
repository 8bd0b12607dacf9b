"""
Continuous stopped models X: exponential, lognormal, Gumbel, logistic, uniform and GEV.

Models are thin immutable wrappers over frozen scipy.stats distributions. The
GEV uses the convention F(x) = exp(-(1 - kappa (x - eta) / theta)^{1/kappa}),
which is scipy's ``genextreme`` with c = kappa (so a heavy right tail has
kappa < 0), and falls back to the Gumbel cdf for |kappa| < GUMBEL_LIMIT.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import stats

from extremes.errors import DomainError, ParameterError, SupportError
from extremes.pgf_core import check_domain

GUMBEL_LIMIT = 1e-8

# Parameter names per distribution, in storage order, with their domains.
DIST_PARAMS = {
    "exponential": {"lambda": "positive"},
    "lognormal": {"mu": "real", "sigma": "positive"},
    "gumbel": {"loc": "real", "scale": "positive"},
    "logistic": {"loc": "real", "scale": "positive"},
    "gev": {"eta": "real", "theta": "positive", "kappa": "real"},
    "uniform": {"low": "real", "high": "real"},
}


@lru_cache(maxsize=512)
def _frozen(dist_id, params):
    if dist_id == "exponential":
        return stats.expon(scale=1.0 / params[0])
    if dist_id == "lognormal":
        mu, sigma = params
        return stats.lognorm(s=sigma, scale=np.exp(mu))
    if dist_id == "gumbel":
        return stats.gumbel_r(loc=params[0], scale=params[1])
    if dist_id == "logistic":
        return stats.logistic(loc=params[0], scale=params[1])
    if dist_id == "gev":
        eta, theta, kappa = params
        if abs(kappa) < GUMBEL_LIMIT:
            return stats.gumbel_r(loc=eta, scale=theta)
        return stats.genextreme(c=kappa, loc=eta, scale=theta)
    low, high = params
    return stats.uniform(loc=low, scale=high - low)


@dataclass(frozen=True)
class ContinuousModel:
    """
    Real-valued distribution with cdf, pdf, quantile and sampler.

    Parameters:
    dist_id (str): Key of DIST_PARAMS.
    params (tuple): Parameters in DIST_PARAMS order.
    """

    dist_id: str
    params: tuple

    def __post_init__(self):
        if self.dist_id not in DIST_PARAMS:
            raise ParameterError(f"Unknown base distribution: {self.dist_id}")
        domains = DIST_PARAMS[self.dist_id]
        if len(self.params) != len(domains):
            raise ParameterError(f"{self.dist_id} takes parameters {tuple(domains)}, got {self.params}")
        params = tuple(
            check_domain(self.dist_id, name, value, kind)
            for (name, kind), value in zip(domains.items(), self.params)
        )
        if self.dist_id == "uniform" and not params[0] < params[1]:
            raise ParameterError(f"Invalid uniform bounds: low={params[0]}, high={params[1]}")
        object.__setattr__(self, "params", params)

    @property
    def frozen(self):
        return _frozen(self.dist_id, self.params)

    @property
    def named_params(self):
        return dict(zip(DIST_PARAMS[self.dist_id], self.params))

    @property
    def label(self):
        args = ", ".join(f"{k}={v:.6g}" for k, v in self.named_params.items())
        return f"{self.dist_id}({args})"

    @property
    def support(self):
        low, high = self.frozen.support()
        return float(low), float(high)

    def cdf(self, x):
        """
        F(x), total on the real line: 0 below and 1 above the support, including
        the kappa-dependent end points of the GEV. Observations outside the
        support are rejected by check_support, which loglik and fit_mle call.
        """
        return _out(self.frozen.cdf(x), x)

    def sf(self, x):
        return _out(self.frozen.sf(x), x)

    def logcdf(self, x):
        with np.errstate(divide="ignore"):
            return _out(self.frozen.logcdf(x), x)

    def logsf(self, x):
        with np.errstate(divide="ignore"):
            return _out(self.frozen.logsf(x), x)

    def pdf(self, x):
        return _out(self.frozen.pdf(x), x)

    def logpdf(self, x):
        with np.errstate(divide="ignore"):
            return _out(self.frozen.logpdf(x), x)

    def isf(self, s):
        """Quantile at 1 - s, accurate for small s."""
        arr = np.asarray(s, dtype=float)
        if np.any(np.isnan(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
            raise DomainError(f"Survival level must lie in [0, 1], got {s}")
        return _out(self.frozen.isf(arr), s)

    def quantile(self, u):
        arr = np.asarray(u, dtype=float)
        if np.any(np.isnan(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
            raise DomainError(f"Quantile level must lie in [0, 1], got {u}")
        return _out(self.frozen.ppf(arr), u)

    def sample(self, rng, size=None):
        """Quantile transform of uniform draws from ``rng``."""
        return self.quantile(rng.random(size))


def _out(values, like):
    return float(values) if np.ndim(like) == 0 else np.asarray(values, dtype=float)


def check_support(model, data):
    """Raise SupportError naming the first observation outside the support of ``model``."""
    data = np.asarray(data, dtype=float)
    low, high = model.support
    outside = ~np.isfinite(data) | (data < low) | (data > high)
    if outside.any():
        index = int(np.argmax(outside))
        raise SupportError(index, data[index], (low, high))
    return data


def make_model(dist_id, params=None, **kwargs):
    """
    Base model from named parameters, e.g. ``make_model("exponential", {"lambda": 0.01})``
    or ``make_model("lognormal", mu=4.9, sigma=1.1)``.
    """
    if dist_id not in DIST_PARAMS:
        raise ParameterError(f"Unknown base distribution: {dist_id}")
    named = {**(params or {}), **kwargs}
    names = tuple(DIST_PARAMS[dist_id])
    unknown = set(named) - set(names)
    missing = [name for name in names if name not in named]
    if unknown or missing:
        raise ParameterError(
            f"{dist_id} takes parameters {names}; unknown {sorted(unknown)}, missing {missing}"
        )
    return ContinuousModel(dist_id, tuple(named[name] for name in names))


def model_spec(model):
    return {"dist": model.dist_id, "params": model.named_params}


def model_from_spec(spec):
    try:
        return make_model(spec["dist"], spec.get("params", {}))
    except KeyError as err:
        raise ParameterError(f"Base spec is missing {err}: {spec}") from err
