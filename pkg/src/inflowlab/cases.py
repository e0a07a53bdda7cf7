"""Versioned catalogs: strong reference pairs, smooth test fields and initial profiles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError
from .strong import StrongSolution

CATALOG_VERSION = "1"


# ---------------------------------------------------------------------------
# Strong pairs
# ---------------------------------------------------------------------------


def uniform_steady_pair(r_star: float = 1.0, c: float = 1.0) -> StrongSolution:
    """r = r_star, U = c, no forcing."""
    zero = lambda t, x: np.zeros_like(np.asarray(x, dtype=float))
    return StrongSolution(
        name="uniform_steady",
        r=lambda t, x: np.full_like(np.asarray(x, dtype=float), r_star),
        U=lambda t, x: np.full_like(np.asarray(x, dtype=float), c),
        f=zero, r_t=zero, r_x=zero, U_t=zero, U_x=zero, U_xx=zero,
        r_bounds=(r_star, r_star), params={"r_star": r_star, "c": c},
    )


def travelling_wave_pair(law, c: float = 1.0, mean: float = 1.0, amplitude: float = 0.3,
                         wavenumber: float = 2.0) -> StrongSolution:
    """U = c, r = r0(x - c t) with r0 = mean + amplitude sin(pi k s); forcing p'(r) r_x / r."""
    k = np.pi * wavenumber
    r0 = lambda s: mean + amplitude * np.sin(k * s)
    r0x = lambda s: amplitude * k * np.cos(k * s)
    zero = lambda t, x: np.zeros_like(np.asarray(x, dtype=float))
    r = lambda t, x: r0(np.asarray(x, dtype=float) - c * t)
    r_x = lambda t, x: r0x(np.asarray(x, dtype=float) - c * t)
    return StrongSolution(
        name="travelling_wave",
        r=r, r_x=r_x, r_t=lambda t, x: -c * r_x(t, x),
        U=lambda t, x: np.full_like(np.asarray(x, dtype=float), c),
        U_t=zero, U_x=zero, U_xx=zero,
        f=lambda t, x: law.dp(r(t, x)) * r_x(t, x) / r(t, x),
        r_bounds=(mean - abs(amplitude), mean + abs(amplitude)),
        params={"c": c, "mean": mean, "amplitude": amplitude, "wavenumber": wavenumber},
    )


def hydrostatic_pair(law, mean: float = 1.0, amplitude: float = 0.2) -> StrongSolution:
    """Still fluid U = 0 with r = mean + amplitude cos(pi x); forcing balances the pressure."""
    zero = lambda t, x: np.zeros_like(np.asarray(x, dtype=float))
    r = lambda t, x: mean + amplitude * np.cos(np.pi * np.asarray(x, dtype=float))
    r_x = lambda t, x: -amplitude * np.pi * np.sin(np.pi * np.asarray(x, dtype=float))
    return StrongSolution(
        name="hydrostatic", r=r, r_x=r_x, r_t=zero, U=zero, U_t=zero, U_x=zero, U_xx=zero,
        f=lambda t, x: law.dp(r(t, x)) * r_x(t, x) / r(t, x),
        r_bounds=(mean - abs(amplitude), mean + abs(amplitude)),
        params={"mean": mean, "amplitude": amplitude},
    )


def strong_pair(name: str, law, **params) -> StrongSolution:
    if name == "uniform_steady":
        return uniform_steady_pair(**params)
    if name == "travelling_wave":
        return travelling_wave_pair(law, **params)
    if name == "hydrostatic":
        return hydrostatic_pair(law, **params)
    raise ConfigurationError(f"unknown strong pair {name!r}", "experiment.pair")


# ---------------------------------------------------------------------------
# Test fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TestField:
    """Smooth space-time test field with analytic derivatives (1D)."""

    __test__ = False

    name: str
    value: Callable
    dt: Callable
    dx: Callable


def _field(name, g, gx, time="const"):
    if time == "const":
        return TestField(name, lambda t, x: g(x), lambda t, x: 0.0 * g(x), lambda t, x: gx(x))
    # (1 + t) factor
    return TestField(name, lambda t, x: (1 + t) * g(x), lambda t, x: g(x), lambda t, x: (1 + t) * gx(x))


TEST_FIELDS = {
    "one": _field("one", lambda x: np.ones_like(x), lambda x: np.zeros_like(x)),
    "poly_x1mx": _field("poly_x1mx", lambda x: x * (1 - x), lambda x: 1 - 2 * x),
    "bump2_growing": _field("bump2_growing", lambda x: (x * (1 - x)) ** 2,
                            lambda x: 2 * x * (1 - x) * (1 - 2 * x), time="grow"),
    "sine_pi": _field("sine_pi", lambda x: np.sin(np.pi * x), lambda x: np.pi * np.cos(np.pi * x)),
    "cos_half_growing": _field("cos_half_growing", lambda x: np.cos(0.5 * np.pi * x),
                               lambda x: -0.5 * np.pi * np.sin(0.5 * np.pi * x), time="grow"),
}


def test_field(name: str) -> TestField:
    try:
        return TEST_FIELDS[name]
    except KeyError:
        raise ConfigurationError(f"unknown test field {name!r}; catalog v{CATALOG_VERSION}: {sorted(TEST_FIELDS)}",
                                 "audit.test_field") from None


# ---------------------------------------------------------------------------
# Initial profiles
# ---------------------------------------------------------------------------


def profile(kind: str, mean: float = 1.0, amplitude: float = 0.0, wavenumber: float = 1.0) -> Callable:
    """Initial profile x -> array on [0, 1]: 'constant', 'cosine', 'sine', 'bump'."""
    k = np.pi * wavenumber
    if kind == "constant":
        return lambda x: np.full_like(np.asarray(x, dtype=float), mean)
    if kind == "cosine":
        return lambda x: mean + amplitude * np.cos(k * np.asarray(x))
    if kind == "sine":
        return lambda x: mean + amplitude * np.sin(k * np.asarray(x))
    if kind == "bump":
        return lambda x: mean + amplitude * (16 * (np.asarray(x) * (1 - np.asarray(x))) ** 2)
    raise ConfigurationError(f"unknown profile kind {kind!r}", "initial.kind")
