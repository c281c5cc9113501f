"""Closed-form constants and one-dimensional integrals of the Lieb–Thirring bound."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

from ltlab.band_geometry import BandSet, dist_to_bands
from ltlab.errors import DivergentIntegral, InvalidExponents, PreconditionFailed, QuadratureError

logger = logging.getLogger(__name__)

EPSABS = 1e-12
EPSREL = 1e-10
QUAD_LIMIT = 500


def _check_dimension(d) -> int:
    if isinstance(d, bool) or not float(d).is_integer() or int(d) < 1:
        raise InvalidExponents(f"dimension d must be an integer >= 1, got {d!r}")
    return int(d)


@dataclass(frozen=True)
class ExponentPack:
    """Exponents p, d, tau with the derived q = 1 - d/(2p) and alpha = p(q+1) - 1 - tau."""

    p: float
    d: int
    tau: float

    def __post_init__(self):
        d = _check_dimension(self.d)
        object.__setattr__(self, "d", d)
        if not self.p > max(d / 2, 1):
            raise InvalidExponents(f"p={self.p!r} must exceed max(d/2, 1)={max(d / 2, 1)!r}")
        upper = (self.q + 1) * self.p - 1
        if not 0 < self.tau < upper:
            raise InvalidExponents(f"tau={self.tau!r} must lie in (0, {upper!r})")

    @property
    def q(self) -> float:
        return 1.0 - self.d / (2.0 * self.p)

    @property
    def alpha(self) -> float:
        return self.p * (self.q + 1.0) - 1.0 - self.tau

    @property
    def decay(self) -> float:
        """d/2 + tau, equal to 2p - alpha - 1."""
        return self.d / 2.0 + self.tau

    @staticmethod
    def tau_range(p: float, d: int) -> tuple[float, float]:
        q = 1.0 - d / (2.0 * p)
        return 0.0, (q + 1.0) * p - 1.0


@dataclass(frozen=True)
class ThresholdOmega:
    omega0: float

    @property
    def magnitude(self) -> float:
        return -self.omega0


def integrate_quad(f: Callable[[float], float], a: float, b: float = math.inf) -> float:
    """Adaptive Gauss–Kronrod quadrature; a semi-infinite range is mapped onto [0, 1).

    Raises QuadratureError carrying the achieved estimate when QUADPACK gives up.
    """
    if math.isinf(b):

        def g(u: float) -> float:
            one_minus = 1.0 - u
            if one_minus <= 0.0:
                return 0.0
            return f(a + u / one_minus) / one_minus**2

        lo, hi, func = 0.0, 1.0, g
    else:
        lo, hi, func = a, b, f
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, error = integrate.quad(func, lo, hi, epsabs=EPSABS, epsrel=EPSREL, limit=QUAD_LIMIT)
        except integrate.IntegrationWarning as exc:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                value, error = integrate.quad(func, lo, hi, epsabs=EPSABS, epsrel=EPSREL, limit=QUAD_LIMIT)
            raise QuadratureError(value, error, str(exc)) from exc
    return value


def eta(p: float, d: int) -> float:
    d = _check_dimension(d)
    if not p > max(d / 2, 1):
        raise InvalidExponents(f"eta needs p > max(d/2, 1), got p={p!r}, d={d}")
    log_value = special.gammaln(p - d / 2) - special.gammaln(p) - d * math.log(2.0) - (d / 2) * math.log(math.pi)
    return math.exp(log_value / (2.0 * p))


def c_integral(p: float, d: int) -> float:
    """Closed form of the integral of (|x|^2 + 1)^(-p) over R^d."""
    d = _check_dimension(d)
    if not p > d / 2:
        raise InvalidExponents(f"the integral diverges for p={p!r} <= d/2={d / 2!r}")
    return math.pi ** (d / 2) * math.exp(special.gammaln(p - d / 2) - special.gammaln(p))


def c_integral_quadrature(p: float, d: int, s: float = 1.0) -> float:
    """Radial quadrature of the integral of (|x|^2 + s)^(-p) over R^d."""
    d = _check_dimension(d)
    if not p > d / 2:
        raise InvalidExponents(f"the integral diverges for p={p!r} <= d/2={d / 2!r}")
    sphere = 2.0 * math.pi ** (d / 2) / special.gamma(d / 2)
    radial = integrate_quad(lambda r: r ** (d - 1) / (r * r + s) ** p, 0.0)
    return sphere * radial


def omega0(p: float, d: int, a1: float, v0_sup: float, v_norm: float) -> ThresholdOmega:
    if not a1 > 0:
        raise PreconditionFailed(f"a_1 must be positive, got {a1!r}")
    if v0_sup < 0 or v_norm < 0:
        raise PreconditionFailed("norms must be nonnegative")
    q = 1.0 - d / (2.0 * p)
    e = eta(p, d)
    magnitude = 1.0 + a1 + 2.0 * v0_sup + (4.0 * e * e * v_norm) ** (1.0 / q)
    return ThresholdOmega(omega0=-magnitude)


def _check_weight_range(alpha: float, p: float) -> None:
    if not alpha > -1 or not 2 * p - alpha - 1 > 0:
        raise DivergentIntegral(f"the weight integral diverges for alpha={alpha!r}, p={p!r}")


def weight_integral(alpha: float, p: float) -> float:
    """Beta(alpha+1, 2p-alpha-1), the integral of t^alpha / (1+t)^(2p) over (0, inf)."""
    _check_weight_range(alpha, p)
    return float(special.beta(alpha + 1.0, 2.0 * p - alpha - 1.0))


def weight_integral_quadrature(alpha: float, p: float) -> float:
    _check_weight_range(alpha, p)
    # split at 1 so the t^alpha cusp and the algebraic tail are handled separately
    head = integrate_quad(lambda t: t**alpha / (1.0 + t) ** (2 * p), 0.0, 1.0)
    return head + integrate_quad(lambda t: t**alpha / (1.0 + t) ** (2 * p), 1.0)


def lt_weight(z: complex, bands: BandSet, pack: ExponentPack, s0: float) -> float:
    """dist(z, I)^p / (s0 + |z|)^(d/2 + tau)."""
    return dist_to_bands(z, bands) ** pack.p / (s0 + abs(z)) ** pack.decay


def s_integral_lower_bound(z_abs: float, s0: float, pack: ExponentPack) -> float:
    return 3.0 ** (-pack.p) * weight_integral(pack.alpha, pack.p) / (z_abs + s0) ** pack.decay


def s_integral_check(z_abs: float, a1: float, s0: float, pack: ExponentPack) -> tuple[float, float]:
    """Both sides of the s-integration step; the contract is lhs >= rhs."""
    if not s0 >= 1.0 + a1:
        raise PreconditionFailed(f"s0={s0!r} must be >= 1 + a_1={1.0 + a1!r}")
    p, alpha = pack.p, pack.alpha
    lhs = integrate_quad(lambda s: s**alpha / ((s + z_abs) ** p * (2.0 * s + z_abs + a1) ** p), s0)
    rhs = s_integral_lower_bound(z_abs, s0, pack)
    if lhs < rhs:
        logger.warning(f"s-integral bound failed at |z|={z_abs}: lhs={lhs} < rhs={rhs}")
    return lhs, rhs


def corollary_scales(pack: ExponentPack, s0: float, v0_sup: float, v_norm: float) -> tuple[float, float]:
    """Right-hand scales of the two corollary bounds, without their constants."""
    vp = v_norm**pack.p
    first = (1.0 + s0) ** (pack.d / 2.0) * vp
    second = ((1.0 + v0_sup) * (1.0 + v_norm)) ** (pack.d / (2.0 * pack.q)) * vp
    return first, second


def identity_residual(p: float, d: int) -> float:
    """Relative gap in eta(p,d)^(2p) (2 pi)^d = c_integral(p,d)."""
    lhs = eta(p, d) ** (2 * p) * (2 * np.pi) ** d
    rhs = c_integral(p, d)
    return abs(lhs - rhs) / rhs
