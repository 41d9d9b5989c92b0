"""Pedestrian volume-delay functions.

All flows are in ped/m/hr, times in seconds.  Every ``eval_*`` function
broadcasts over numpy arrays so the assignment code can cost a whole network
in one call.

Two conventions differ from a literal reading of the source formulas and are
deliberate:

* the standard deviation decays away from its peak,
  ``sigma = tau * phi * exp(-gamma * ((x + x') / c - lambda_t) ** 2)``, with
  ``gamma`` stored as a non-negative magnitude;
* the Fenton-Wilkinson path approximation uses the usual moment match
  ``D^2 = ln(1 + var / mean^2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import EmptyPath, InvalidInput


@dataclass(frozen=True)
class SymmetricParams:
    alpha: float = 0.949
    beta: float = 2.031

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise InvalidInput("symmetric pVDF needs alpha > 0 and beta > 0")


@dataclass(frozen=True)
class AsymmetricParams:
    alpha: float = 1.658
    beta: float = 0.997
    mu: float = -0.836
    eta_r: float = -5.447
    eta_c: float = -5.737
    lambda_r: float = 0.415
    lambda_c: float = 0.394

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise InvalidInput("asymmetric pVDF needs alpha > 0 and beta > 0")
        if self.eta_r > 0 or self.eta_c > 0:
            raise InvalidInput("eta_r and eta_c must be <= 0 so the bidirectional term stays bounded")


@dataclass(frozen=True)
class SigmaParams:
    phi: float = 0.454
    gamma: float = 1.439
    lambda_t: float = 1.307

    def __post_init__(self):
        if self.phi < 0 or self.gamma < 0:
            raise InvalidInput("sigma parameters phi and gamma must be non-negative")


class Family(str, Enum):
    DET_SYMMETRIC = "det_symmetric"
    DET_ASYMMETRIC = "det_asymmetric"
    STOCH_SYMMETRIC = "stoch_symmetric"
    STOCH_ASYMMETRIC = "stoch_asymmetric"

    @property
    def stochastic(self) -> bool:
        return self in (Family.STOCH_SYMMETRIC, Family.STOCH_ASYMMETRIC)

    @property
    def symmetric(self) -> bool:
        return self in (Family.DET_SYMMETRIC, Family.STOCH_SYMMETRIC)


def _from_mapping(cls, data):
    if data is None:
        return cls()
    if isinstance(data, cls):
        return data
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise InvalidInput(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**{k: float(v) for k, v in data.items()})


@dataclass(frozen=True)
class PvdfConfig:
    family: Family = Family.DET_SYMMETRIC
    symmetric: SymmetricParams = field(default_factory=SymmetricParams)
    asymmetric: AsymmetricParams = field(default_factory=AsymmetricParams)
    sigma: SigmaParams = field(default_factory=SigmaParams)

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))

    @classmethod
    def from_dict(cls, data: dict | None) -> "PvdfConfig":
        data = dict(data or {})
        return cls(
            family=Family(data.get("family", Family.DET_SYMMETRIC)),
            symmetric=_from_mapping(SymmetricParams, data.get("symmetric")),
            asymmetric=_from_mapping(AsymmetricParams, data.get("asymmetric")),
            sigma=_from_mapping(SigmaParams, data.get("sigma")),
        )

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "symmetric": dict(self.symmetric.__dict__),
            "asymmetric": dict(self.asymmetric.__dict__),
            "sigma": dict(self.sigma.__dict__),
        }

    def with_family(self, family) -> "PvdfConfig":
        return PvdfConfig(Family(family), self.symmetric, self.asymmetric, self.sigma)


def _check(x, x_counter, tau, capacity):
    x = np.asarray(x, dtype=float)
    x_counter = np.asarray(x_counter, dtype=float)
    tau = np.asarray(tau, dtype=float)
    capacity = np.asarray(capacity, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(~np.isfinite(x_counter)):
        raise InvalidInput("flows must be finite")
    if np.any(x < 0) or np.any(x_counter < 0):
        raise InvalidInput("flows must be non-negative")
    if np.any(tau <= 0) or np.any(capacity <= 0):
        raise InvalidInput("tau and capacity must be positive")
    return x, x_counter, tau, capacity


def _out(a):
    return float(a) if np.ndim(a) == 0 else a


def eval_det_symmetric(x, x_counter, tau, capacity, params: SymmetricParams = SymmetricParams()):
    """``tau * (1 + alpha * ((x + x') / c) ** beta)``."""
    x, x_counter, tau, capacity = _check(x, x_counter, tau, capacity)
    ratio = (x + x_counter) / capacity
    return _out(tau * (1.0 + params.alpha * ratio**params.beta))


def eval_asym_components(x, x_counter, tau, capacity, params: AsymmetricParams = AsymmetricParams()):
    """Split the asymmetric pVDF into its BPR-like and bidirectional terms."""
    x, x_counter, tau, capacity = _check(x, x_counter, tau, capacity)
    ratio = (x + x_counter) / capacity
    symmetric_term = tau * (1.0 + params.alpha * ratio**params.beta)
    exponent = params.eta_r * (x / capacity - params.lambda_r) ** 2 + params.eta_c * (
        x_counter / capacity - params.lambda_c
    ) ** 2
    bidirectional_term = tau * params.mu * np.exp(exponent)
    return _out(symmetric_term), _out(bidirectional_term)


def eval_det_asymmetric(x, x_counter, tau, capacity, params: AsymmetricParams = AsymmetricParams()):
    symmetric_term, bidirectional_term = eval_asym_components(x, x_counter, tau, capacity, params)
    return _out(np.asarray(symmetric_term) + np.asarray(bidirectional_term))


def sigma(x, x_counter, tau, capacity, params: SigmaParams = SigmaParams()):
    """Travel-time standard deviation, peaked at ``(x + x') / c = lambda_t``."""
    x, x_counter, tau, capacity = _check(x, x_counter, tau, capacity)
    ratio = (x + x_counter) / capacity
    return _out(tau * params.phi * np.exp(-params.gamma * (ratio - params.lambda_t) ** 2))


def expected_time(x, x_counter, tau, capacity, config: PvdfConfig):
    """Mean travel time under the deterministic part of ``config.family``."""
    if config.family.symmetric:
        return eval_det_symmetric(x, x_counter, tau, capacity, config.symmetric)
    return eval_det_asymmetric(x, x_counter, tau, capacity, config.asymmetric)


def det_symmetric_derivative(x, x_counter, tau, capacity, params: SymmetricParams = SymmetricParams(), order: int = 1):
    """Analytic ``order``-th partial derivative of the symmetric pVDF in ``x``."""
    x, x_counter, tau, capacity = _check(x, x_counter, tau, capacity)
    if order == 0:
        return eval_det_symmetric(x, x_counter, tau, capacity, params)
    coef = params.alpha
    for j in range(order):
        coef *= params.beta - j
    ratio = (x + x_counter) / capacity
    return _out(tau * coef * ratio ** (params.beta - order) / capacity**order)


# -- log-normal machinery ---------------------------------------------------


@dataclass(frozen=True)
class LogNormalSpec:
    """Log-normal travel time matched to a mean and a standard deviation (seconds)."""

    mean_time: float
    std_time: float

    def __post_init__(self):
        if not self.mean_time > 0:
            raise InvalidInput(f"mean_time must be positive, got {self.mean_time}")
        if not self.std_time >= 0:
            raise InvalidInput(f"std_time must be non-negative, got {self.std_time}")

    @property
    def log_var(self) -> float:
        """Variance of ``ln T`` (the D^2 of a path approximation)."""
        return math.log1p((self.std_time / self.mean_time) ** 2)

    @property
    def log_mean(self) -> float:
        """Mean of ``ln T`` (the M of a path approximation)."""
        return math.log(self.mean_time) - 0.5 * self.log_var

    @property
    def log_std(self) -> float:
        return math.sqrt(self.log_var)

    def sample(self, rng: np.random.Generator, size=None):
        z = rng.standard_normal(size)
        return np.exp(self.log_mean + self.log_std * z)

    def cdf(self, t):
        from scipy.stats import lognorm

        if self.std_time == 0:
            return np.where(np.asarray(t) >= self.mean_time, 1.0, 0.0)
        return lognorm.cdf(t, s=self.log_std, scale=math.exp(self.log_mean))


def lognormal_params(mean, std):
    """Vectorised log-space ``(mu, s)`` so that ``exp(mu + s z)`` has the given mean and std."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    log_var = np.log1p((std / mean) ** 2)
    return np.log(mean) - 0.5 * log_var, np.sqrt(log_var)


def lognormal_spec(x, x_counter, link, config: PvdfConfig) -> LogNormalSpec:
    """Travel-time distribution of ``link`` at reference flow ``x`` and counter flow ``x_counter``."""
    if not config.family.stochastic:
        raise InvalidInput(f"family {config.family.value} is deterministic")
    mean = expected_time(x, x_counter, link.free_flow_time, link.capacity, config)
    std = sigma(x, x_counter, link.free_flow_time, link.capacity, config.sigma)
    return LogNormalSpec(float(mean), float(std))


def stream_correlated_sample(spec_a: LogNormalSpec, spec_mirror: LogNormalSpec, unit_normal_draw):
    """Sample both links of one stream from the same standard-normal draw.

    Sharing the draw gives perfectly correlated log-times, which is what a
    within-stream covariance of ``sigma_a * sigma_a'`` amounts to.
    """
    z = np.asarray(unit_normal_draw, dtype=float)
    a = np.exp(spec_a.log_mean + spec_a.log_std * z)
    b = np.exp(spec_mirror.log_mean + spec_mirror.log_std * z)
    return _out(a), _out(b)


def fenton_wilkinson(path_specs: Sequence[LogNormalSpec]) -> LogNormalSpec:
    """Single log-normal matching the first two moments of a sum of independent log-normals.

    The returned spec exposes ``log_mean`` (M) and ``log_var`` (D^2) as well as
    the time-unit ``mean_time`` and ``std_time``.
    """
    specs = list(path_specs)
    if not specs:
        raise EmptyPath("EmptyPath: no link specs given")
    if len(specs) == 1:
        return specs[0]
    mean = math.fsum(s.mean_time for s in specs)
    var = math.fsum(s.std_time**2 for s in specs)
    return LogNormalSpec(mean, math.sqrt(var))
