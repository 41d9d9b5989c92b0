"""Calibration chain: speed-density law, capacity, quasi-density, pVDF and sigma fits.

The least-squares work is delegated to :func:`scipy.optimize.least_squares`;
everything else (models, transforms, binning, goodness of fit) lives here.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .errors import FitDiverged, InsufficientData, InvalidInput, LengthMismatch
from .pvdf import (
    AsymmetricParams,
    Family,
    PvdfConfig,
    SigmaParams,
    SymmetricParams,
    eval_det_asymmetric,
    eval_det_symmetric,
    sigma,
)

SECONDS_PER_HOUR = 3600.0
MAX_NFEV = 500
XTOL = 1e-8


@dataclass(frozen=True)
class Observation:
    density: float  # ped/m^2
    speed: float  # m/s
    travel_time: float  # s
    ref_flow: float = float("nan")  # ped/m/hr
    counter_flow: float = float("nan")  # ped/m/hr


@dataclass(frozen=True)
class ObservationSet:
    """Column-oriented observations; flow columns may be NaN until quasi-density is applied."""

    density: np.ndarray
    speed: np.ndarray
    travel_time: np.ndarray
    ref_flow: np.ndarray
    counter_flow: np.ndarray

    def __post_init__(self):
        cols = {}
        for name in ("density", "speed", "travel_time", "ref_flow", "counter_flow"):
            cols[name] = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, cols[name])
        n = len(self.density)
        if any(len(c) != n for c in cols.values()):
            raise LengthMismatch("LengthMismatch: observation columns differ in length")
        if np.any(self.density < 0) or np.any(self.speed < 0):
            raise InsufficientData("density and speed must be non-negative")
        if np.any(~(self.travel_time > 0)):
            raise InsufficientData("travel times must be positive")

    @classmethod
    def from_rows(cls, rows: Sequence[Observation]) -> "ObservationSet":
        rows = list(rows)
        return cls(
            np.array([r.density for r in rows]),
            np.array([r.speed for r in rows]),
            np.array([r.travel_time for r in rows]),
            np.array([r.ref_flow for r in rows]),
            np.array([r.counter_flow for r in rows]),
        )

    @classmethod
    def from_arrays(cls, density=None, speed=None, travel_time=None, ref_flow=None, counter_flow=None):
        n = len(next(a for a in (density, speed, travel_time, ref_flow, counter_flow) if a is not None))
        fill = lambda a, v: np.full(n, v) if a is None else a
        return cls(fill(density, 0.0), fill(speed, 0.0), fill(travel_time, 1.0), fill(ref_flow, np.nan), fill(counter_flow, np.nan))

    def __len__(self) -> int:
        return len(self.density)

    @property
    def has_flows(self) -> bool:
        return bool(np.all(np.isfinite(self.ref_flow)) and np.all(np.isfinite(self.counter_flow)))

    @property
    def total_flow(self) -> np.ndarray:
        return self.ref_flow + self.counter_flow

    def with_flows(self, ref_flow, counter_flow) -> "ObservationSet":
        return ObservationSet(self.density, self.speed, self.travel_time, ref_flow, counter_flow)


@dataclass(frozen=True)
class SpeedLaw:
    """``u = u_f * exp(-(k / theta) ** gamma)``; gamma here is the speed-law exponent."""

    u_f: float
    theta: float
    gamma: float

    def __post_init__(self):
        if not (self.u_f > 0 and self.theta > 0 and self.gamma > 0):
            raise FitDiverged(f"FitDiverged: invalid speed law {self}")

    def speed(self, density):
        return self.u_f * np.exp(-((np.asarray(density, dtype=float) / self.theta) ** self.gamma))

    def flow(self, density):
        """Flow in ped/m/s."""
        return np.asarray(density, dtype=float) * self.speed(density)


@dataclass
class FitReport:
    params: dict
    rmse_sum: float
    rmse_mean: float
    r_squared: float
    iterations: int
    converged: bool
    extra: dict = field(default_factory=dict)

    @property
    def rmse(self) -> float:
        return self.rmse_sum


# -- goodness of fit --------------------------------------------------------


def _pair(predictions, observations):
    p = np.asarray(predictions, dtype=float)
    o = np.asarray(observations, dtype=float)
    if p.shape != o.shape:
        raise LengthMismatch(f"LengthMismatch: {p.shape} vs {o.shape}")
    if p.size < 2:
        raise InsufficientData("goodness of fit needs at least two points")
    return p, o


def rmse_sum(predictions, observations) -> float:
    """Root of the unnormalised sum of squared errors."""
    p, o = _pair(predictions, observations)
    return float(np.sqrt(np.sum((p - o) ** 2)))


def rmse_mean(predictions, observations) -> float:
    """Conventional RMSE, sum of squares divided by n before the root."""
    p, o = _pair(predictions, observations)
    return float(np.sqrt(np.mean((p - o) ** 2)))


def r_squared(predictions, observations) -> float:
    p, o = _pair(predictions, observations)
    sst = np.sum((o - o.mean()) ** 2)
    sse = np.sum((p - o) ** 2)
    if sst == 0:
        return 1.0 if sse == 0 else -np.inf
    return float(1.0 - sse / sst)


def goodness(predictions, observations) -> tuple[float, float]:
    """``(rmse_sum, r_squared)``."""
    return rmse_sum(predictions, observations), r_squared(predictions, observations)


# -- fundamental diagram ----------------------------------------------------


def _run(residuals, x0, **kw):
    opts = dict(xtol=XTOL, ftol=1e-15, gtol=1e-15, max_nfev=MAX_NFEV)
    opts.update(kw)
    try:
        res = least_squares(residuals, x0, **opts)
    except (ValueError, FloatingPointError) as exc:
        raise FitDiverged(f"FitDiverged: {exc}") from exc
    if not np.all(np.isfinite(res.x)) or not np.isfinite(res.cost):
        raise FitDiverged("FitDiverged: non-finite parameters")
    return res


def fit_speed_law(observations: ObservationSet) -> SpeedLaw:
    """Least-squares fit of the exponential speed-density law.

    Parameters are fitted in log space so they stay positive; the initial
    guess is ``u_f = max speed``, ``theta = median density``, ``gamma = 1``.
    """
    k = observations.density
    u = observations.speed
    if len(k) < 4 or len(np.unique(k)) < 4:
        raise InsufficientData("InsufficientData: speed law needs >= 4 distinct densities")
    positive = k[k > 0]
    theta0 = float(np.median(positive)) if len(positive) else 1.0
    x0 = np.log([max(float(u.max()), 1e-6), theta0, 1.0])

    def residuals(p):
        uf, theta, gamma = np.exp(p)
        return uf * np.exp(-((k / theta) ** gamma)) - u

    with np.errstate(over="ignore", invalid="ignore"):
        res = _run(residuals, x0, method="lm")
    if np.sum(res.fun**2) > np.sum(residuals(x0) ** 2):
        raise FitDiverged("FitDiverged: fit worse than the initial guess")
    return SpeedLaw(*(float(v) for v in np.exp(res.x)))


def critical_density(law: SpeedLaw) -> float:
    """Density of maximum flow, ``theta / gamma ** (1 / gamma)``."""
    return law.theta / law.gamma ** (1.0 / law.gamma)


def capacity(law: SpeedLaw) -> float:
    """Maximum flow of the law in ped/m/hr."""
    return float(law.u_f * np.exp(-1.0 / law.gamma) * critical_density(law) * SECONDS_PER_HOUR)


def quasi_density(density, capacity: float, critical_density: float):
    """Flow surrogate ``c * k / k_c`` (ped/m/hr); exceeds ``c`` past critical density."""
    if not critical_density > 0:
        raise InsufficientData("critical density must be positive")
    out = capacity * np.asarray(density, dtype=float) / critical_density
    return float(out) if np.ndim(out) == 0 else out


# -- pVDF fits --------------------------------------------------------------

_SYM_START = {"alpha": 1.0, "beta": 2.0}


def _family_model(family: Family):
    if Family(family).symmetric:
        names = ["alpha", "beta"]
        return names, lambda p, x, xc, tau, c: eval_det_symmetric(x, xc, tau, c, SymmetricParams(*p))
    names = ["alpha", "beta", "mu", "eta_r", "eta_c", "lambda_r", "lambda_c"]
    return names, lambda p, x, xc, tau, c: eval_det_asymmetric(x, xc, tau, c, AsymmetricParams(*p))


def fit_pvdf(
    observations: ObservationSet,
    family: Family | str,
    tau: float,
    capacity: float,
    start: dict | None = None,
) -> FitReport:
    """Fit a deterministic pVDF to observed travel times.

    Flows must already be quasi-densities.  Starts from ``alpha=1, beta=2``
    for the symmetric form and from the shipped defaults for the asymmetric
    form unless ``start`` is given.
    """
    family = Family(family)
    if not observations.has_flows:
        raise InsufficientData("InsufficientData: observations need ref_flow and counter_flow")
    names, model = _family_model(family)
    if len(observations) < len(names) + 1:
        raise InsufficientData(f"InsufficientData: {len(names)} parameters need >= {len(names) + 1} observations")
    if start is None:
        start = _SYM_START if family.symmetric else dict(AsymmetricParams().__dict__)
    x0 = np.array([start[n] for n in names], dtype=float)
    x, xc, t = observations.ref_flow, observations.counter_flow, observations.travel_time

    if family.symmetric:
        lower = np.array([1e-12, 1e-12])
        upper = np.full(2, np.inf)
    else:
        lower = np.array([1e-12, 1e-12, -np.inf, -np.inf, -np.inf, -np.inf, -np.inf])
        upper = np.array([np.inf, np.inf, np.inf, 0.0, 0.0, np.inf, np.inf])
    x0 = np.clip(x0, lower, upper)

    def residuals(p):
        return model(p, x, xc, tau, capacity) - t

    with np.errstate(over="ignore", invalid="ignore"):
        res = _run(residuals, x0, bounds=(lower, upper), method="trf", x_scale="jac")
    pred = model(res.x, x, xc, tau, capacity)
    return FitReport(
        dict(zip(names, map(float, res.x))),
        rmse_sum(pred, t),
        rmse_mean(pred, t),
        r_squared(pred, t),
        int(res.nfev),
        bool(res.status > 0),
        {"family": family.value, "initial_rmse": rmse_sum(model(x0, x, xc, tau, capacity), t)},
    )


def bin_sigma(observations: ObservationSet, n_bins: int = 20, min_per_bin: int = 3):
    """Per-bin mean total flow and travel-time standard deviation.

    Bins are equal-width over the observed total-flow range; bins with fewer
    than ``min_per_bin`` points are skipped.  Returns ``(flow, std, edges)``.
    """
    if not observations.has_flows:
        raise InsufficientData("InsufficientData: observations need ref_flow and counter_flow")
    total = observations.total_flow
    t = observations.travel_time
    if len(total) < min_per_bin * 3:
        raise InsufficientData("InsufficientData: too few observations to bin")
    edges = np.linspace(total.min(), total.max(), n_bins + 1)
    which = np.clip(np.searchsorted(edges, total, side="right") - 1, 0, n_bins - 1)
    flow, std = [], []
    for b in range(n_bins):
        sel = which == b
        if sel.sum() >= min_per_bin:
            flow.append(total[sel].mean())
            std.append(t[sel].std(ddof=1))
    if len(flow) < 4:
        raise InsufficientData("InsufficientData: fewer than 4 populated bins")
    return np.array(flow), np.array(std), edges


def fit_sigma(
    observations: ObservationSet,
    tau: float,
    capacity: float,
    n_bins: int = 20,
    min_per_bin: int = 3,
) -> FitReport:
    """Fit ``(phi, gamma, lambda_t)`` of the travel-time standard deviation to binned data."""
    flow, std, edges = bin_sigma(observations, n_bins, min_per_bin)
    peak = int(np.argmax(std))
    x0 = np.array([max(std[peak] / tau, 1e-6), 1.0, flow[peak] / capacity])

    def model(p):
        return sigma(flow, 0.0, tau, capacity, SigmaParams(max(p[0], 0.0), max(p[1], 0.0), p[2]))

    def residuals(p):
        return model(p) - std

    res = _run(residuals, x0, bounds=([0.0, 0.0, -np.inf], [np.inf, np.inf, np.inf]), method="trf")
    pred = model(res.x)
    return FitReport(
        dict(zip(["phi", "gamma", "lambda_t"], map(float, res.x))),
        rmse_sum(pred, std),
        rmse_mean(pred, std),
        r_squared(pred, std),
        int(res.nfev),
        bool(res.status > 0),
        {"bin_flow": flow, "bin_std": std, "bin_width": float(edges[1] - edges[0])},
    )


# -- full chain -------------------------------------------------------------


@dataclass
class CalibrationRun:
    speed_law: SpeedLaw
    critical_density: float
    capacity: float
    symmetric: FitReport
    asymmetric: FitReport
    sigma: FitReport

    def pvdf_config(self, family: Family | str = Family.DET_SYMMETRIC) -> PvdfConfig:
        return PvdfConfig(
            Family(family),
            SymmetricParams(**self.symmetric.params),
            AsymmetricParams(**self.asymmetric.params),
            SigmaParams(**self.sigma.params),
        )


def calibrate(
    observations: ObservationSet,
    tau: float,
    split: float = 0.5,
    n_bins: int = 20,
    min_per_bin: int = 3,
) -> CalibrationRun:
    """Speed law, capacity, quasi-density flows, both pVDF fits and the sigma fit in sequence.

    When the observations carry no flow columns the quasi-density is used as
    total flow and divided ``split : 1 - split`` into reference and counter flow.
    """
    if not 0 <= split <= 1:
        raise InvalidInput("split must lie in [0, 1]")
    law = fit_speed_law(observations)
    kc = critical_density(law)
    cap = capacity(law)
    obs = observations
    if not obs.has_flows:
        q = quasi_density(obs.density, cap, kc)
        obs = obs.with_flows(split * q, (1.0 - split) * q)
    sym = fit_pvdf(obs, Family.DET_SYMMETRIC, tau, cap)
    asym = fit_pvdf(obs, Family.DET_ASYMMETRIC, tau, cap)
    sig = fit_sigma(obs, tau, cap, n_bins, min_per_bin)
    return CalibrationRun(law, kc, cap, sym, asym, sig)
