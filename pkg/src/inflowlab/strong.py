"""Strong (smooth) reference pairs (r, U) and their sampling on a 1D trajectory grid."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, IneligibleTestPair

RESIDUAL_TOL = 1e-8


def central_first(g: Callable, x, h: float):
    """Sixth-order central difference of ``g`` at ``x``."""
    return (-g(x - 3 * h) + 9 * g(x - 2 * h) - 45 * g(x - h) + 45 * g(x + h) - 9 * g(x + 2 * h) + g(x + 3 * h)) / (60 * h)


def central_second(g: Callable, x, h: float):
    """Sixth-order central second difference of ``g`` at ``x``."""
    return (2 * g(x - 3 * h) - 27 * g(x - 2 * h) + 270 * g(x - h) - 490 * g(x) + 270 * g(x + h)
            - 27 * g(x + 2 * h) + 2 * g(x + 3 * h)) / (180 * h * h)


@dataclass
class StrongSolution:
    """Smooth pair (r, U) with forcing f on a 1D interval; every field is ``field(t, x)``.

    Derivative samplers left as None are replaced by sixth-order central
    differences with step ``fd_step``.
    """

    name: str
    r: Callable
    U: Callable
    f: Callable | None = None
    r_t: Callable | None = None
    r_x: Callable | None = None
    U_t: Callable | None = None
    U_x: Callable | None = None
    U_xx: Callable | None = None
    r_bounds: tuple = (1.0, 1.0)
    interval: tuple = (0.0, 1.0)
    fd_step: float = 1e-3
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        h = self.fd_step
        if self.f is None:
            self.f = lambda t, x: np.zeros_like(np.asarray(x, dtype=float) + 0.0 * t)
        if self.r_t is None:
            self.r_t = lambda t, x: central_first(lambda s: self.r(s, x), t, h)
        if self.r_x is None:
            self.r_x = lambda t, x: central_first(lambda y: self.r(t, y), np.asarray(x, dtype=float), h)
        if self.U_t is None:
            self.U_t = lambda t, x: central_first(lambda s: self.U(s, x), t, h)
        if self.U_x is None:
            self.U_x = lambda t, x: central_first(lambda y: self.U(t, y), np.asarray(x, dtype=float), h)
        if self.U_xx is None:
            self.U_xx = lambda t, x: central_second(lambda y: self.U(t, y), np.asarray(x, dtype=float), h)
        lo, hi = self.r_bounds
        if not 0 < lo <= hi:
            raise DomainError(f"strong density bounds {self.r_bounds} must satisfy 0 < lo <= hi")

    # boundary data
    def u_B(self, side: str) -> float:
        x = self.interval[0] if side == "x-" else self.interval[1]
        return float(np.asarray(self.U(0.0, np.array([x])))[0])

    def r_B(self, t: float, side: str = "x-") -> float:
        x = self.interval[0] if side == "x-" else self.interval[1]
        return float(np.asarray(self.r(t, np.array([x])))[0])

    # residuals of the strong equations
    def continuity_residual(self, t, x):
        x = np.asarray(x, dtype=float)
        r, U = self.r(t, x), self.U(t, x)
        return self.r_t(t, x) + self.r_x(t, x) * U + r * self.U_x(t, x)

    def momentum_residual(self, t, x, law, visc):
        x = np.asarray(x, dtype=float)
        r, U = self.r(t, x), self.U(t, x)
        return (r * self.U_t(t, x) + r * U * self.U_x(t, x) + law.dp(r) * self.r_x(t, x)
                - visc.longitudinal * self.U_xx(t, x) - r * self.f(t, x))

    def check(self, law, visc, times, n_x: int = 201, tol: float = RESIDUAL_TOL):
        """Verify bounds and both strong residuals on a sample grid.

        Raises:
            IneligibleTestPair: a residual or bound fails, with the worst value.
        """
        x = np.linspace(*self.interval, n_x)
        lo, hi = self.r_bounds
        worst_c = worst_m = 0.0
        for t in np.atleast_1d(times):
            r = self.r(t, x)
            if np.min(r) < lo * (1 - 1e-12) or np.max(r) > hi * (1 + 1e-12):
                raise IneligibleTestPair(f"{self.name}: r outside declared bounds at t={t}")
            worst_c = max(worst_c, float(np.max(np.abs(self.continuity_residual(t, x)))))
            worst_m = max(worst_m, float(np.max(np.abs(self.momentum_residual(t, x, law, visc)))))
        if worst_c > tol or worst_m > tol:
            raise IneligibleTestPair(
                f"{self.name}: strong residuals continuity={worst_c:.2e} momentum={worst_m:.2e} exceed {tol:g}"
            )
        return worst_c, worst_m


def manufacture_forcing(strong: StrongSolution, law, visc, floor: float = 1e-12) -> StrongSolution:
    """Return a copy of ``strong`` whose forcing closes the momentum equation.

    f = [r U_t + r U U_x + p'(r) r_x - (2 mu + lambda) U_xx] / r.

    Raises:
        DomainError: r below ``floor`` at an evaluation point.
    """

    def f(t, x):
        x = np.asarray(x, dtype=float)
        r = strong.r(t, x)
        if np.any(r <= floor):
            raise DomainError(f"strong density {np.min(r):.3e} below positivity floor")
        U = strong.U(t, x)
        num = (r * strong.U_t(t, x) + r * U * strong.U_x(t, x) + law.dp(r) * strong.r_x(t, x)
               - visc.longitudinal * strong.U_xx(t, x))
        return num / r

    from dataclasses import replace

    return replace(strong, f=f)


@dataclass
class StrongSamples:
    """A strong pair evaluated on the cells and faces of a 1D grid at one time."""

    r_cell: np.ndarray
    r_face: np.ndarray
    rx_face: np.ndarray
    U_face: np.ndarray
    Ut_face: np.ndarray
    Ux_face: np.ndarray
    Ux_cell: np.ndarray
    f_face: np.ndarray


def sample_strong(strong: StrongSolution, domain, t: float) -> StrongSamples:
    xc, xf = domain.centers(0), domain.nodes(0)
    return StrongSamples(
        r_cell=strong.r(t, xc), r_face=strong.r(t, xf), rx_face=strong.r_x(t, xf),
        U_face=strong.U(t, xf), Ut_face=strong.U_t(t, xf), Ux_face=strong.U_x(t, xf),
        Ux_cell=strong.U_x(t, xc), f_face=strong.f(t, xf),
    )


def relative_energy_functional(domain, rho, u, r_cell, U_face, law) -> float:
    """1/2 int rho |u - U|^2 + int E(rho | r), face densities on interior faces."""
    w = (np.asarray(u) - np.asarray(U_face))[1:-1]
    rho = np.asarray(rho, dtype=float)
    rho_f = 0.5 * (rho[1:] + rho[:-1])
    dx = domain.spacing[0]
    return float(0.5 * np.sum(rho_f * w * w) * dx + np.sum(law.bregman(rho, r_cell)) * dx)
