"""Deterministic environment terms feeding the diffusion coefficient.

Four ingredients compose the environment block sigma1: scoreboard pressure,
crowd attendance, the day / day-night scheduling effect, and an ergodic
dew-and-wind term modelled as a lacunary trigonometric (Weierstrass-type)
series. The composition adds the four terms plus three correlated cross
terms and clamps at zero so the diffusion coefficient stays non-negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError, MathDomainError

__all__ = [
    "PressureParams",
    "AttendanceParams",
    "DayNightExpectations",
    "WeatherParams",
    "EnvironmentParams",
    "pressure",
    "attendance",
    "day_night_effect",
    "weierstrass_weather",
    "weather_tail_bound",
    "sigma1",
    "sigma1_vector",
]

WEATHER_TAIL_TOL = 1e-12
WEATHER_MAX_TERMS = 10_000
# largest alpha with base**alpha representable in float64 without overflow
_WEATHER_EXP_CAP = 700.0


@dataclass(frozen=True)
class PressureParams:
    """Softplus pressure response to a scoring shortfall."""

    scale: float = 0.4
    sharpness: float = 0.08

    def __post_init__(self):
        if self.scale <= 0:
            raise ConfigError(f"pressure.scale must be positive, got {self.scale}")
        if self.sharpness <= 0:
            raise ConfigError(f"pressure.sharpness must be positive, got {self.sharpness}")


@dataclass(frozen=True)
class AttendanceParams:
    """Logistic attendance response to player valuation."""

    capacity: float = 1.0
    valuation_slope: float = 0.05
    decay_when_out: float = 0.01  # sign free

    def __post_init__(self):
        if self.capacity <= 0:
            raise ConfigError(f"attendance.capacity must be positive, got {self.capacity}")
        if self.valuation_slope <= 0:
            raise ConfigError(
                f"attendance.valuation_slope must be positive, got {self.valuation_slope}"
            )


@dataclass(frozen=True)
class DayNightExpectations:
    """Pre-match conditional innings expectations for both scheduling formats."""

    day_first: float = 0.52
    day_second: float = 0.47
    day_night_first: float = 0.55
    day_night_second: float = 0.44

    def __post_init__(self):
        for name in ("day_first", "day_second", "day_night_first", "day_night_second"):
            if getattr(self, name) < 0:
                raise ConfigError(f"day_night.{name} must be non-negative, got {getattr(self, name)}")


@dataclass(frozen=True)
class WeatherParams:
    """Dew and wind inputs for the lacunary weather series.

    The series base is dew_point + wind_speed and must exceed 1; the
    penalization exponent lies strictly inside (1, 2) so the term
    amplitudes decay geometrically.
    """

    dew_point: float = 1.2
    wind_speed: float = 0.9
    penalization: float = 1.5
    truncation_terms: int | None = None  # None -> smallest N with tail < 1e-12

    def __post_init__(self):
        if self.dew_point + self.wind_speed <= 1.0:
            raise ConfigError(
                "weather exponent base must exceed 1, got "
                f"dew_point + wind_speed = {self.dew_point + self.wind_speed}"
            )
        if not 1.0 < self.penalization < 2.0:
            raise ConfigError(
                f"weather.penalization must lie in (1, 2), got {self.penalization}"
            )
        if self.truncation_terms is not None and self.truncation_terms < 1:
            raise ConfigError(
                f"weather.truncation_terms must be a positive integer, got {self.truncation_terms}"
            )

    @property
    def base(self) -> float:
        return self.dew_point + self.wind_speed

    @property
    def ratio(self) -> float:
        """Geometric amplitude ratio, strictly inside (0, 1)."""
        return self.base ** (self.penalization - 2.0)

    def resolve_terms(self) -> int:
        """Number of series terms actually summed."""
        if self.truncation_terms is not None:
            n = self.truncation_terms
        else:
            r = self.ratio
            # smallest N with r^(N+1)/(1-r) < tol
            n = int(math.ceil(math.log(WEATHER_TAIL_TOL * (1.0 - r)) / math.log(r))) - 1
            n = max(n, 1)
        n = min(n, WEATHER_MAX_TERMS)
        # keep base**alpha finite; beyond this the phase is meaningless anyway
        overflow_cap = int(_WEATHER_EXP_CAP / math.log(self.base))
        return max(1, min(n, overflow_cap))


@dataclass(frozen=True)
class EnvironmentParams:
    """Bundle of all sigma1 inputs plus the three cross-term correlations."""

    pressure: PressureParams = PressureParams()
    attendance: AttendanceParams = AttendanceParams()
    day_night: DayNightExpectations = DayNightExpectations()
    weather: WeatherParams = WeatherParams()
    corr_pressure_attendance: float = 0.1
    corr_attendance_daynight: float = 0.1
    corr_daynight_pressure: float = 0.1

    def __post_init__(self):
        for name in (
            "corr_pressure_attendance",
            "corr_attendance_daynight",
            "corr_daynight_pressure",
        ):
            v = getattr(self, name)
            if not -1.0 < v < 1.0:
                raise ConfigError(f"correlations.{name} must lie in (-1, 1), got {v}")

    @property
    def correlations(self) -> tuple[float, float, float]:
        return (
            self.corr_pressure_attendance,
            self.corr_attendance_daynight,
            self.corr_daynight_pressure,
        )


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def pressure(
    u: float,
    runs: np.ndarray,
    expected_runs: np.ndarray,
    params: PressureParams,
) -> np.ndarray:
    """Non-negative pressure per player, increasing in the scoring shortfall.

    Smooth (C-infinity) in the run vector; large positive when the side is
    well behind its expected score, flat near zero when well ahead.
    """
    shortfall = np.asarray(expected_runs, float) - np.asarray(runs, float)
    return params.scale * _softplus(params.sharpness * shortfall) / params.sharpness


def attendance(
    u: float,
    valuations: np.ndarray,
    on_field: np.ndarray,
    params: AttendanceParams,
) -> np.ndarray:
    """Crowd attendance per player, strictly inside (0, capacity).

    Strictly increasing in valuation. The time trend flips sign with the
    on-field flag: the decay_when_out coefficient applies while a player is
    out, and its negation while the player is still batting.
    """
    w = np.asarray(valuations, float)
    trend = np.where(np.asarray(on_field, bool), -params.decay_when_out, params.decay_when_out)
    return params.capacity * expit(params.valuation_slope * w + trend * u)


def day_night_effect(e: DayNightExpectations, won_toss: bool | None) -> float:
    """Scheduling payoff term.

    won_toss=True selects the half the toss winner plays for, False the
    other half, and None returns the full two-branch average.
    """
    win_branch = 0.5 * (0.5 * e.day_second + 0.5 * e.day_night_first)
    lose_branch = 0.5 * (0.5 * e.day_first + 0.5 * e.day_night_second)
    if won_toss is None:
        return win_branch + lose_branch
    return win_branch if won_toss else lose_branch


def weather_tail_bound(params: WeatherParams, n_terms: int) -> float:
    """Geometric bound on the truncation error after n_terms terms."""
    r = params.ratio
    return r ** (n_terms + 1) / (1.0 - r)


def weierstrass_weather(u: float, params: WeatherParams) -> float:
    """Truncated lacunary sine series for the dew/wind effect at over u.

    |result| <= r/(1-r) with r the geometric amplitude ratio; the truncation
    point keeps the analytic tail bound below 1e-12 where float range allows.
    """
    n = params.resolve_terms()
    alpha = np.arange(1, n + 1, dtype=float)
    amp = params.ratio ** alpha
    phase = params.base ** alpha * u
    return float(np.sum(amp * np.sin(phase)))


def sigma1_vector(
    u: float,
    valuations: np.ndarray,
    runs: np.ndarray,
    expected_runs: np.ndarray,
    on_field: np.ndarray,
    won_toss: bool | None,
    env: EnvironmentParams,
) -> np.ndarray:
    """Per-player diagonal of the environment diffusion block.

    Accepts batched run arrays of shape (..., I); the trailing axis indexes
    players. Cross terms are inner products over players with the scalar
    scheduling term broadcast, per the additive composition with three
    correlation coefficients. Clamped at zero componentwise.
    """
    p = pressure(u, runs, expected_runs, env.pressure)
    a = attendance(u, valuations, on_field, env.attendance)
    b = day_night_effect(env.day_night, won_toss)
    ze = weierstrass_weather(u, env.weather)
    rho1, rho2, rho3 = env.correlations

    p, a = np.broadcast_arrays(p, a)
    b_vec = np.full(p.shape[-1], b)
    cross = (
        rho1 * np.sum(p * a, axis=-1)
        + rho2 * np.sum(a * b_vec, axis=-1)
        + rho3 * np.sum(b_vec * p, axis=-1)
    )
    out = p + a + b + ze + cross[..., None]
    if not np.all(np.isfinite(out)):
        raise MathDomainError(
            "non-finite sigma1 composition; cross terms overflowed for "
            f"u={u}, |Z|~{np.max(np.abs(runs)):.3g}"
        )
    return np.maximum(out, 0.0)


def sigma1(
    u: float,
    valuations: np.ndarray,
    runs: np.ndarray,
    expected_runs: np.ndarray,
    on_field: np.ndarray,
    won_toss: bool | None,
    env: EnvironmentParams,
) -> np.ndarray:
    """Environment diffusion block as an I x I diagonal matrix."""
    vec = sigma1_vector(u, valuations, runs, expected_runs, on_field, won_toss, env)
    if vec.ndim != 1:
        raise ValueError("sigma1 expects a single state; use sigma1_vector for batches")
    return np.diag(vec)
