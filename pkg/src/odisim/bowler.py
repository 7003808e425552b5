"""Opposition-bowler diffusion term.

The bowler's strategy space is modelled as a Koch snowflake whose iteration
depth grows with the expected delivery payoff. The snowflake area feeds a
scalar Loewner-type driving equation whose shifted map has a closed-form
complex characteristic function; the modulus of that characteristic function
supplies the scalar diffusion addend sigma2_star.

Known quirk, kept on purpose: the characteristic-function exponent beta(0)
is non-negative for every admissible parameter set, so sigma2_star >= 1 and
the "characteristic function" has modulus >= 1. The closed form is
implemented exactly as specified.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

from .errors import ConfigError, MathDomainError

__all__ = [
    "Delivery",
    "AffinePayoff",
    "PayoffMixture",
    "SnowflakeParams",
    "LoewnerCoefficients",
    "CharFnResult",
    "snowflake_sides",
    "snowflake_area",
    "eta_of_payoff",
    "expected_payoff_mixture",
    "characteristic_fn",
    "sigma2_star",
    "loewner_step",
]

THETA1_RANGE = (math.pi / 2, math.pi)
THETA2_RANGE = (0.0, math.pi / 36)


@dataclass(frozen=True)
class Delivery:
    """Expected delivery attributes a batsman faces over an over.

    speed in mph, dispersion in inches off the stump-to-stump line, the two
    release angles in radians, and the guess score in [0, 1] (1 = read the
    ball perfectly).
    """

    speed: float = 85.0
    dispersion: float = 3.0
    theta1: float = 2.0
    theta2: float = 0.05
    guess: float = 0.5

    def __post_init__(self):
        if self.speed <= 0:
            raise ConfigError(f"delivery.speed must be positive mph, got {self.speed}")
        if self.dispersion < 0:
            raise ConfigError(f"delivery.dispersion must be >= 0 inches, got {self.dispersion}")
        lo, hi = THETA1_RANGE
        if not lo < self.theta1 <= hi:
            raise ConfigError(f"delivery.theta1 must lie in (pi/2, pi], got {self.theta1}")
        lo, hi = THETA2_RANGE
        if not lo < self.theta2 <= hi:
            raise ConfigError(f"delivery.theta2 must lie in (0, pi/36], got {self.theta2}")
        if not 0.0 <= self.guess <= 1.0:
            raise ConfigError(f"delivery.guess must lie in [0, 1], got {self.guess}")


@dataclass(frozen=True)
class AffinePayoff:
    """Affine payoff form in the delivery attributes."""

    const: float = 0.0
    speed: float = 0.0
    dispersion: float = 0.0
    theta1: float = 0.0
    theta2: float = 0.0
    guess: float = 0.0

    def __call__(self, d: Delivery) -> float:
        value = (
            self.const
            + self.speed * d.speed
            + self.dispersion * d.dispersion
            + self.theta1 * d.theta1
            + self.theta2 * d.theta2
            + self.guess * d.guess
        )
        if not math.isfinite(value):
            raise MathDomainError(f"payoff evaluated non-finite at {d}")
        return value


# defaults produce a payoff of order one for a typical delivery
_DEFAULT_PACER = AffinePayoff(const=0.1, speed=0.004, dispersion=0.02, guess=0.5)
_DEFAULT_LEG_SPIN = AffinePayoff(const=0.1, speed=0.002, dispersion=0.03, theta1=0.08, guess=0.5)
_DEFAULT_OFF_SPIN = AffinePayoff(const=0.1, speed=0.002, dispersion=0.02, theta1=0.05, theta2=1.5, guess=0.5)


@dataclass(frozen=True)
class PayoffMixture:
    """Bowler-type mixture: pacer, leg spinner, off spinner."""

    probabilities: tuple[float, float, float] = (0.5, 0.3, 0.2)
    pacer: AffinePayoff = _DEFAULT_PACER
    leg_spin: AffinePayoff = _DEFAULT_LEG_SPIN
    off_spin: AffinePayoff = _DEFAULT_OFF_SPIN

    def __post_init__(self):
        if len(self.probabilities) != 3:
            raise ConfigError("bowling.mixture must have exactly 3 probabilities")
        if any(p < 0 for p in self.probabilities):
            raise ConfigError(f"bowling.mixture probabilities must be >= 0, got {self.probabilities}")
        total = sum(self.probabilities)
        if abs(total - 1.0) > 1e-12:
            raise ConfigError(
                f"bowling.mixture probabilities must sum to 1 within 1e-12, got {total!r}"
            )


@dataclass(frozen=True)
class SnowflakeParams:
    """Base triangle area and the payoff-to-iteration map coefficients.

    The iteration count eta(payoff) = eta_scale * (exp(eta_rate * payoff) - 1)
    is zero at zero payoff, strictly increasing and convex.
    """

    base_area: float = 1.0
    eta_scale: float = 0.6
    eta_rate: float = 0.15

    def __post_init__(self):
        if self.base_area <= 0:
            raise ConfigError(f"snowflake.base_area must be positive, got {self.base_area}")
        if self.eta_scale <= 0 or self.eta_rate <= 0:
            raise ConfigError("snowflake eta coefficients must be positive")


@dataclass(frozen=True)
class LoewnerCoefficients:
    """Scalar inputs of the shifted-map characteristic function."""

    diffusivity: float = 0.8  # kappa
    generator_term: float = 0.4  # scalar proxy for the generator applied to the driving motion
    ghat: float = 1.5  # shifted-map evaluation point, nonzero
    horizon: float = 50.0  # match length in overs

    def __post_init__(self):
        if self.diffusivity < 0:
            raise ConfigError(f"loewner.diffusivity must be >= 0, got {self.diffusivity}")
        if self.ghat == 0:
            raise ConfigError("loewner.ghat must be nonzero")
        if self.horizon <= 0:
            raise ConfigError(f"loewner.horizon must be positive, got {self.horizon}")


def snowflake_sides(eta: float) -> tuple[float, float, float]:
    """(number of sides, side length, perimeter) after eta iterations.

    Extends smoothly to real eta; the perimeter identity
    perimeter == sides * length holds exactly.
    """
    if eta < 0:
        raise MathDomainError(f"iteration count must be >= 0, got {eta}")
    sides = 3.0 * 4.0**eta
    length = (1.0 / 3.0) ** eta
    perimeter = 3.0 * (4.0 / 3.0) ** eta
    return sides, length, perimeter


def snowflake_area(eta: float, base_area: float) -> float:
    """Closed-form snowflake area: (base/5) * (8 - 3*(4/9)**eta).

    Equals base_area at eta = 0, strictly increasing, bounded above by
    8/5 * base_area.
    """
    if eta < 0:
        raise MathDomainError(f"iteration count must be >= 0, got {eta}")
    if base_area <= 0:
        raise MathDomainError(f"base area must be positive, got {base_area}")
    return base_area / 5.0 * (8.0 - 3.0 * (4.0 / 9.0) ** eta)


def eta_of_payoff(payoff: float, params: SnowflakeParams) -> float:
    """Iteration count as a convex increasing function of the expected payoff."""
    if payoff < 0:
        raise MathDomainError(f"expected payoff must be >= 0, got {payoff}")
    return params.eta_scale * math.expm1(params.eta_rate * payoff)


def expected_payoff_mixture(delivery: Delivery, mixture: PayoffMixture) -> float:
    """Mixture-weighted expected payoff for the over.

    The affine payoff forms make the expectation over the delivery
    distribution equal to the payoff at the expected delivery, so the
    closed form is exact.
    """
    p1, p2, p3 = mixture.probabilities
    return p1 * mixture.pacer(delivery) + p2 * mixture.leg_spin(delivery) + p3 * mixture.off_spin(delivery)


@dataclass(frozen=True)
class CharFnResult:
    """Closed-form characteristic function evaluation.

    alpha0/beta0 are the exponent coefficients at over zero for the query
    theta; phi is the complex value exp(i*theta*alpha0 + beta0); sigma2 is
    exp(beta0) = |phi|. alpha(u) and beta(u) resolve the coefficients at any
    over in [0, horizon].
    """

    theta: float
    alpha0: float
    beta0: float
    phi: complex
    sigma2: float
    decay_rate: float  # (root/ghat)^2 with root = sqrt(kappa*area)*L + ghat
    beta_scale: float  # (kappa*area*L / root)^2
    horizon: float

    def alpha(self, u: float) -> float:
        return math.exp(-self.decay_rate * (self.horizon - u))

    def beta(self, u: float) -> float:
        return -0.25 * self.theta**2 * self.beta_scale * math.expm1(
            -2.0 * self.decay_rate * (self.horizon - u)
        )


def characteristic_fn(theta: float, coeffs: LoewnerCoefficients, area: float) -> CharFnResult:
    """Evaluate the shifted-map characteristic function at theta.

    alpha solves alpha' = rate * alpha backward from alpha(U) = 1 and beta
    integrates -theta^2/2 * alpha^2 * (kappa*area*L/ghat)^2 backward from
    beta(U) = 0; both are closed forms here.
    """
    if area <= 0:
        raise MathDomainError(f"snowflake area must be positive, got {area}")
    g = coeffs.ghat
    lead = math.sqrt(coeffs.diffusivity * area) * coeffs.generator_term
    root = lead + g
    if root == 0.0:
        raise MathDomainError(
            "sqrt(kappa*area)*generator_term + ghat vanishes "
            f"({lead!r} + {g!r}); the exponent denominator is singular"
        )
    rate = (root / g) ** 2
    u_total = coeffs.horizon
    alpha0 = math.exp(-rate * u_total)
    beta_scale = (coeffs.diffusivity * area * coeffs.generator_term / root) ** 2
    beta0 = -0.25 * theta**2 * beta_scale * math.expm1(-2.0 * rate * u_total)
    phi = cmath.exp(complex(beta0, theta * alpha0))
    return CharFnResult(
        theta=theta,
        alpha0=alpha0,
        beta0=beta0,
        phi=phi,
        sigma2=math.exp(beta0),
        decay_rate=rate,
        beta_scale=beta_scale,
        horizon=u_total,
    )


def sigma2_star(theta_ref: float, coeffs: LoewnerCoefficients, area: float) -> float:
    """Scalar bowler diffusion addend: sqrt(phi * conj(phi)) at theta_ref."""
    return characteristic_fn(theta_ref, coeffs, area).sigma2


def loewner_step(
    g: float,
    driving: float,
    kappa: float,
    area: float,
    du: float,
    *,
    guard: float = 1e-8,
    max_halvings: int = 40,
) -> tuple[float, float]:
    """One explicit step of the driving-function evolution.

    dg/du = g * (sqrt(kappa*area)*W + g) / (sqrt(kappa*area)*W - g).

    Returns (g_next, du_taken). A step whose endpoint lands within the
    guard band of the denominator zero (or crosses it) is rejected and the
    step halved, up to max_halvings; used for simulation sanity only, the
    diffusion scalar uses the closed form.
    """
    if du <= 0:
        raise ValueError(f"du must be positive, got {du}")
    lead = math.sqrt(kappa * area) * driving
    den = lead - g
    if abs(den) <= guard:
        raise MathDomainError(
            f"driving-function denominator {den!r} inside guard band {guard!r}"
        )
    for _ in range(max_halvings + 1):
        g_try = g + du * g * (lead + g) / den
        den_try = lead - g_try
        if math.isfinite(g_try) and abs(den_try) > guard and (den_try > 0) == (den > 0):
            return g_try, du
        du *= 0.5
    raise MathDomainError(
        f"step rejected {max_halvings} times approaching the singularity at g = {lead!r}"
    )
