"""
Barotropic pressure laws, Helmholtz functions and relative energies.

The Helmholtz function of a law p is H(rho) = rho * int_1^rho p(z)/z^2 dz,
normalised so that H(1) = 0. Power laws use closed forms throughout; the
quadrature path (:func:`helmholtz_by_quadrature`) is kept as an independent
oracle and for user-supplied laws.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np
from scipy import integrate as _integrate

from .errors import DomainError, HypothesisViolation, UnsupportedLawError

_SERIES_CUT = 0.1
_SERIES_TERMS = 18


def _power_bregman(rho, r, g):
    """rho**g - r**g - g r**(g-1) (rho - r), free of cancellation near rho == r."""
    rho = np.asarray(rho, dtype=float)
    r = np.asarray(r, dtype=float)
    t = (rho - r) / r
    with np.errstate(invalid="ignore"):
        direct = np.power(1.0 + t, g) - 1.0 - g * t
    series = np.zeros(np.broadcast(t).shape)
    coef = g * (g - 1) / 2.0
    tk = t * t
    for k in range(2, _SERIES_TERMS + 2):
        series = series + coef * tk
        coef = coef * (g - k) / (k + 1)
        tk = tk * t
    phi = np.where(np.abs(t) < _SERIES_CUT, series, direct)
    return np.power(r, g) * phi


@dataclass(frozen=True)
class PowerLaw:
    """p(rho) = a * rho**gamma with a > 0, gamma > 1."""

    a: float = 1.0
    gamma: float = 2.0

    def __post_init__(self):
        if not self.a > 0:
            raise DomainError(f"PowerLaw coefficient must be positive, got {self.a}")
        if not self.gamma > 1:
            raise DomainError(f"PowerLaw exponent must exceed 1, got {self.gamma}")

    monotone = True

    @property
    def exponent(self) -> float:
        return self.gamma

    def p(self, rho):
        return self.a * np.power(rho, self.gamma)

    def dp(self, rho):
        return self.a * self.gamma * np.power(rho, self.gamma - 1)

    def d2p(self, rho):
        return self.a * self.gamma * (self.gamma - 1) * np.power(rho, self.gamma - 2)

    def H(self, rho):
        return self.a * (np.power(rho, self.gamma) - rho) / (self.gamma - 1)

    def dH(self, rho):
        return self.a * (self.gamma * np.power(rho, self.gamma - 1) - 1) / (self.gamma - 1)

    def d2H(self, rho):
        with np.errstate(divide="ignore"):
            return self.a * self.gamma * np.power(rho, self.gamma - 2)

    def bregman(self, rho, r):
        return self.a / (self.gamma - 1) * _power_bregman(rho, r, self.gamma)

    def describe(self) -> dict:
        return {"kind": "power", "a": self.a, "gamma": self.gamma}


@dataclass(frozen=True)
class Regularized:
    """Artificial-pressure law p + delta * rho**beta, beta > max(gamma, 9/2).

    The added Helmholtz part is delta * rho**beta / (beta - 1).
    """

    base: PowerLaw
    delta: float
    beta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise DomainError(f"delta must be positive, got {self.delta}")
        bound = max(self.base.exponent, 4.5)
        if not self.beta > bound:
            raise DomainError(
                f"beta = {self.beta} violates beta > max{{gamma, 9/2}} = {bound} (gamma = {self.base.exponent})"
            )

    monotone = True

    @property
    def exponent(self) -> float:
        return self.base.exponent

    def p(self, rho):
        return self.base.p(rho) + self.delta * np.power(rho, self.beta)

    def dp(self, rho):
        return self.base.dp(rho) + self.delta * self.beta * np.power(rho, self.beta - 1)

    def d2p(self, rho):
        return self.base.d2p(rho) + self.delta * self.beta * (self.beta - 1) * np.power(rho, self.beta - 2)

    def H(self, rho):
        return self.base.H(rho) + self.delta * np.power(rho, self.beta) / (self.beta - 1)

    def dH(self, rho):
        return self.base.dH(rho) + self.delta * self.beta * np.power(rho, self.beta - 1) / (self.beta - 1)

    def d2H(self, rho):
        return self.base.d2H(rho) + self.delta * self.beta * np.power(rho, self.beta - 2)

    def bregman(self, rho, r):
        return self.base.bregman(rho, r) + self.delta / (self.beta - 1) * _power_bregman(rho, r, self.beta)

    def describe(self) -> dict:
        return {"kind": "regularized", "base": self.base.describe(), "delta": self.delta, "beta": self.beta}


def _bump(s):
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1
    return np.where(inside, (1 - s * s) ** 3, 0.0)


def _dbump(s):
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1
    return np.where(inside, -6 * s * (1 - s * s) ** 2, 0.0)


def _d2bump(s):
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1
    return np.where(inside, -6 * (1 - s * s) ** 2 + 24 * s * s * (1 - s * s), 0.0)


@dataclass(frozen=True)
class NonmonotonePerturbed:
    """p = pi + q with pi monotone and q = -amplitude * (1 - s^2)^3, s = (rho - center)/width.

    q is C^2, non-positive and supported in [center - width, center + width].
    Helmholtz quantities are built from the monotone part only.
    """

    monotone_part: PowerLaw
    amplitude: float
    center: float
    width: float

    def __post_init__(self):
        if self.amplitude < 0:
            raise DomainError("perturbation amplitude must be >= 0 so that the perturbation is <= 0")
        if not (self.width > 0 and self.center - self.width >= 0):
            raise DomainError("perturbation support must be a compact subset of [0, inf)")

    monotone = False

    @property
    def exponent(self) -> float:
        return self.monotone_part.exponent

    def perturbation(self, rho):
        return -self.amplitude * _bump((np.asarray(rho, float) - self.center) / self.width)

    def p(self, rho):
        return self.monotone_part.p(rho) + self.perturbation(rho)

    def dp(self, rho):
        s = (np.asarray(rho, float) - self.center) / self.width
        return self.monotone_part.dp(rho) - self.amplitude * _dbump(s) / self.width

    def d2p(self, rho):
        s = (np.asarray(rho, float) - self.center) / self.width
        return self.monotone_part.d2p(rho) - self.amplitude * _d2bump(s) / self.width**2

    def H(self, rho):
        return self.monotone_part.H(rho)

    def dH(self, rho):
        return self.monotone_part.dH(rho)

    def d2H(self, rho):
        return self.monotone_part.d2H(rho)

    def bregman(self, rho, r):
        return self.monotone_part.bregman(rho, r)

    def describe(self) -> dict:
        return {
            "kind": "nonmonotone",
            "monotone_part": self.monotone_part.describe(),
            "amplitude": self.amplitude,
            "center": self.center,
            "width": self.width,
        }


PressureLaw = Union[PowerLaw, Regularized, NonmonotonePerturbed]


def law_from_dict(spec: dict) -> PressureLaw:
    kind = spec.get("kind", "power")
    if kind == "power":
        return PowerLaw(float(spec.get("a", 1.0)), float(spec.get("gamma", 2.0)))
    if kind == "regularized":
        return Regularized(law_from_dict(spec["base"]), float(spec["delta"]), float(spec["beta"]))
    if kind == "nonmonotone":
        return NonmonotonePerturbed(
            law_from_dict(spec["monotone_part"]), float(spec["amplitude"]), float(spec["center"]), float(spec["width"])
        )
    raise DomainError(f"unknown law kind {kind!r}")


def regularize(law: PressureLaw, delta: float, beta: float) -> PressureLaw:
    """Attach artificial pressure; ``delta == 0`` returns the law unchanged."""
    if delta == 0:
        return law
    if not isinstance(law, PowerLaw):
        raise UnsupportedLawError("artificial pressure is only attached to power laws")
    return Regularized(law, delta, beta)


# ---------------------------------------------------------------------------
# Evaluators
# ---------------------------------------------------------------------------


@dataclass
class ThermoSample:
    rho: np.ndarray
    p: np.ndarray
    dp: np.ndarray
    H: np.ndarray
    dH: np.ndarray
    ddH: np.ndarray


def _check_rho(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0) or np.any(np.isnan(rho)):
        raise DomainError("density must be non-negative")
    return rho


def thermo_eval(law: PressureLaw, rho) -> ThermoSample:
    """Pressure, Helmholtz function and derivatives at ``rho`` (scalar or array)."""
    rho = _check_rho(rho)
    return ThermoSample(rho, law.p(rho), law.dp(rho), law.H(rho), law.dH(rho), law.d2H(rho))


def helmholtz_by_quadrature(pressure, rho: float, rtol: float = 1e-10) -> float:
    """rho * int_1^rho p(z)/z^2 dz by adaptive quadrature; H(0) is taken as the limit."""
    if rho < 0:
        raise DomainError("density must be non-negative")
    if rho == 0:
        val, _ = _integrate.quad(lambda z: pressure(z) / z**2, 1e-300, 1.0, epsrel=rtol, limit=200)
        return 0.0 if np.isfinite(val) else float("nan")
    val, _ = _integrate.quad(lambda z: pressure(z) / z**2, 1.0, rho, epsrel=rtol, epsabs=0.0, limit=200)
    return float(rho * val)


def relative_energy(law: PressureLaw, rho, r):
    """E(rho | r) = H(rho) - H'(r)(rho - r) - H(r).

    Evaluated in the algebraically equivalent form r^g phi((rho - r)/r) per
    power term, which keeps full relative accuracy when rho is close to r.
    """
    rho = _check_rho(rho)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("reference density r must be positive")
    return law.bregman(rho, r)


def relative_pressure(law: PressureLaw, rho, r):
    """p(rho) - p'(r)(rho - r) - p(r), the pressure Taylor remainder."""
    return law.p(rho) - law.dp(r) * (rho - r) - law.p(r)


# ---------------------------------------------------------------------------
# Essential / residual split and brute-force constants
# ---------------------------------------------------------------------------


@dataclass
class EssResSplit:
    a: float
    b: float
    mask_ess: np.ndarray
    mask_res: np.ndarray

    @property
    def interval(self) -> tuple[float, float]:
        return (self.a / 2, 2 * self.b)


def _check_ab(a, b):
    if not (a > 0 and b >= a):
        raise DomainError(f"need 0 < a <= b, got a={a}, b={b}")


def essential_mask(rho, a: float, b: float) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    return (rho >= a / 2) & (rho <= 2 * b)


def ess_res_split(rho_field, a: float, b: float) -> EssResSplit:
    _check_ab(a, b)
    ess = essential_mask(rho_field, a, b)
    return EssResSplit(float(a), float(b), ess, ~ess)


@dataclass
class ConstantReport:
    """Brute-force constant with its grid and extremal point."""

    law: dict
    a: float
    b: float
    grid: dict
    c: float
    argmin: tuple
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _grid(a, b, step, rho_max, r_step):
    rho_max = 4 * b + 4 if rho_max is None else rho_max
    r_step = step if r_step is None else r_step
    n_rho = int(round(rho_max / step)) + 1
    rho = np.arange(n_rho) * step
    n_r = max(int(round((b - a) / r_step)), 0) + 1
    r = a + np.arange(n_r) * r_step if n_r > 1 else np.array([a])
    r = np.minimum(r, b)
    return rho, r, {"rho_step": step, "rho_max": float(rho[-1]), "r_step": r_step, "n_rho": n_rho, "n_r": len(r)}


def _require_monotone(law):
    if not getattr(law, "monotone", False):
        raise UnsupportedLawError("operation requires a monotone pressure law")


def lower_bound_denominator(rho, r, a, b):
    ess = essential_mask(rho, a, b)
    return np.where(ess, (rho - r) ** 2, 1.0 + rho)


def lower_bound_constant(law: PressureLaw, a: float, b: float, step: float = 1e-3,
                         rho_max: float | None = None, r_step: float | None = None,
                         chunk: int = 64) -> ConstantReport:
    """Grid minimum of E(rho|r) / (1_res + rho 1_res + (rho - r)^2 1_ess).

    The grid spans rho in [0, rho_max] (default 4b + 4) and r in [a, b].
    Points with vanishing denominator (rho == r) are skipped.
    """
    _require_monotone(law)
    _check_ab(a, b)
    rho, r, info = _grid(a, b, step, rho_max, r_step)
    best, arg = np.inf, (np.nan, np.nan)
    for start in range(0, len(r), chunk):
        rr = r[start:start + chunk, None]
        den = lower_bound_denominator(rho[None, :], rr, a, b)
        E = relative_energy(law, rho[None, :], rr)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(den > 0, E / den, np.inf)
        k = int(np.argmin(ratio))
        if ratio.flat[k] < best:
            best = float(ratio.flat[k])
            i, j = np.unravel_index(k, ratio.shape)
            arg = (float(rho[j]), float(rr[i, 0]))
    return ConstantReport(law.describe(), float(a), float(b), info, best, arg)


def check_growth_hypothesis(law: PressureLaw, r_bar: float, decades: int = 6, n: int = 600):
    """Sampled check of p(rho) <= c (rho + H(rho)) for rho >= r_bar.

    Returns the smallest sampled c. The ratio must not keep growing over the
    last decade sampled; otherwise no finite c exists on the tail.
    """
    rho = np.logspace(np.log10(r_bar), np.log10(r_bar) + decades, n)
    denom = rho + law.H(rho)
    q = law.p(rho) / denom
    if np.any(~np.isfinite(q)) or np.any(denom <= 0):
        k = int(np.flatnonzero(~np.isfinite(q) | (denom <= 0))[0])
        raise HypothesisViolation(f"growth hypothesis fails at rho={rho[k]:.6g}", witness=float(rho[k]))
    per_decade = n // decades
    tail, before = q[-1], q[-1 - per_decade]
    if tail > before * (1 + 1e-6) and tail > 1e6:
        raise HypothesisViolation(f"p/(rho+H) keeps growing at rho={rho[-1]:.6g}", witness=float(rho[-1]))
    return float(q.max())


def residual_pressure_check(law: PressureLaw, a: float, b: float, step: float = 1e-3,
                            rho_max: float | None = None, r_step: float | None = None,
                            chunk: int = 64) -> ConstantReport:
    """Smallest sampled c with p(rho) 1_res(rho) <= c E(rho|r) on the grid.

    ``extra`` carries the growth constant of :func:`check_growth_hypothesis`
    and the worst violation of the inequality with the reported c (0 by
    construction on the grid).
    """
    _require_monotone(law)
    _check_ab(a, b)
    c_lin = check_growth_hypothesis(law, 2 * b)
    rho, r, info = _grid(a, b, step, rho_max, r_step)
    res = ~essential_mask(rho, a, b)
    worst, arg = 0.0, (np.nan, np.nan)
    for start in range(0, len(r), chunk):
        rr = r[start:start + chunk, None]
        E = relative_energy(law, rho[None, :], rr)
        p = law.p(rho)[None, :] * res[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(p > 0, p / E, 0.0)
        k = int(np.argmax(ratio))
        if ratio.flat[k] > worst:
            worst = float(ratio.flat[k])
            i, j = np.unravel_index(k, ratio.shape)
            arg = (float(rho[j]), float(rr[i, 0]))
    return ConstantReport(law.describe(), float(a), float(b), info, worst, arg,
                          extra={"growth_constant": c_lin, "max_violation": 0.0})


def rentropy_bound(law: PressureLaw, rho, r, a: float, b: float, c_lower: float, c_pressure: float,
                   weight: float = 1.0) -> tuple[float, float]:
    """Both sides of the field-level lower bound for the relative energy.

    Returns ``(lhs, rhs)`` with lhs = c * sum([1]_res + [rho]_res + [p]_res + [rho-r]^2_ess) * weight,
    c = min(c_lower, 1/c_pressure)/3, and rhs = sum(E(rho|r)) * weight.
    """
    rho = np.asarray(rho, float)
    ess = essential_mask(rho, a, b)
    res = ~ess
    c = min(c_lower, 1.0 / c_pressure) / 3.0
    lhs = c * weight * np.sum(res * (1 + rho + law.p(rho)) + ess * (rho - r) ** 2)
    rhs = weight * np.sum(relative_energy(law, rho, r))
    return float(lhs), float(rhs)
