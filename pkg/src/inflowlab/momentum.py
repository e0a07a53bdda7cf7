"""
Regularised momentum equation on the staggered 1D grid and the coupled driver.

    d_t(rho u) + div(rho u u) + grad p_delta(rho)
        = div S(grad u) - eps grad rho . grad u + eps div(|grad v|^2 grad v) + rho f,
    u = u_B on the boundary,  v = u - u_inf.

Velocities live on faces, densities in cells. One step:

1. continuity with the old velocity (exact exponential, see ``transport``);
2. momentum rho_f u at interior faces, rho_f the mean of the two
   neighbouring cells. Convection (upwind), pressure of the new density,
   compensation and quartic terms and forcing are explicit; the viscous
   term (2 mu + lambda) u_xx is implicit with Dirichlet data u_B;
3. division by the new face density, guarded by the transport envelope.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConfigurationError, CouplingError, StepSizeError
from .grid import BoundaryPartition, Domain, ExtensionField, integrate
from .thermo import regularize
from .trajectory import Trajectory
from .transport import TransportStepConfig, advance_continuity, inflow_partition

ENVELOPE_REL_SLACK = 1e-8


@dataclass(frozen=True)
class ViscosityParams:
    mu: float = 1.0
    lam: float = 0.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ConfigurationError("viscosity mu must be > 0", "viscosity.mu")
        if self.lam < 0:
            raise ConfigurationError("viscosity lambda must be >= 0", "viscosity.lambda")

    @property
    def longitudinal(self) -> float:
        """2 mu + lambda, the 1D stress coefficient."""
        return 2 * self.mu + self.lam


@dataclass(frozen=True)
class MomentumStepConfig:
    epsilon: float
    dt: float
    viscosity: ViscosityParams = field(default_factory=ViscosityParams)
    delta: float = 0.0
    beta: float = 6.0
    forcing: object = None  # callable f(t, x) on faces, or None

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigurationError("epsilon must be >= 0", "regularization.epsilon")
        if not self.dt > 0:
            raise ConfigurationError("dt must be > 0", "time.dt")


def stress(grad_u, visc: ViscosityParams):
    """mu (grad u + grad u^T) + lambda (div u) I.

    ``grad_u`` has shape (..., d, d) with ``grad_u[..., i, j] = d_j u_i``;
    a scalar or (...,) array is read as the 1D gradient.
    """
    g = np.asarray(grad_u, dtype=float)
    if g.ndim < 2 or g.shape[-1] != g.shape[-2]:
        return visc.longitudinal * g
    d = g.shape[-1]
    trace = np.trace(g, axis1=-2, axis2=-1)
    return visc.mu * (g + np.swapaxes(g, -1, -2)) + visc.lam * trace[..., None, None] * np.eye(d)


def quartic_flux(v_x, epsilon: float, cell_volume: float = 1.0):
    """Z = eps |v_x|^2 v_x per cell and its L^{4/3} norm by the midpoint rule."""
    v_x = np.asarray(v_x, dtype=float)
    Z = epsilon * v_x**3
    norm = float((np.sum(np.abs(Z) ** (4.0 / 3.0)) * cell_volume) ** 0.75)
    return Z, norm


def face_density(rho: np.ndarray) -> np.ndarray:
    """Mean of the two neighbouring cells at interior faces."""
    return 0.5 * (rho[1:] + rho[:-1])


def cell_velocity_gradient(u: np.ndarray, dx: float) -> np.ndarray:
    return np.diff(u) / dx


def momentum_explicit_rate(domain: Domain, rho_old, rho_new, u, ext: ExtensionField, law, cfg: MomentumStepConfig,
                           t: float):
    """Explicit part of d_t(rho_f u) at interior faces and the quartic flux of the step."""
    dx = domain.spacing[0]
    eps = cfg.epsilon
    x_faces = domain.nodes(0)
    # convection: cell momentum fluxes from the cell mass flux, upwind velocity
    ubar = 0.5 * (u[1:] + u[:-1])
    mass_flux = rho_old * ubar
    u_up = np.where(ubar >= 0, u[:-1], u[1:])
    conv = np.diff(mass_flux * u_up) / dx
    pressure = np.diff(law.p(rho_new)) / dx
    # compensation: two-point density gradient (the transport stencil), central velocity gradient
    rho_x = np.diff(rho_old) / dx
    u_x = 0.5 * (u[2:] - u[:-2]) / dx
    compensation = eps * rho_x * u_x
    v = u - ext.u_inf[0]
    Z, znorm = quartic_flux(cell_velocity_gradient(v, dx), eps, domain.cell_volume)
    quartic = np.diff(Z) / dx
    force = 0.0
    if cfg.forcing is not None:
        force = face_density(rho_old) * np.asarray(cfg.forcing(t, x_faces[1:-1]), dtype=float)
    return -conv - pressure - compensation + quartic + force, Z, znorm


def quartic_dt_limit(domain: Domain, u, ext: ExtensionField, eps: float) -> float:
    """dt bound spacing^2 / (8 eps max|v_x|^2) of the explicit quartic term."""
    dx = domain.spacing[0]
    vx = cell_velocity_gradient(np.asarray(u) - ext.u_inf[0], dx)
    peak = float(np.max(vx * vx)) if vx.size else 0.0
    if eps == 0 or peak == 0:
        return np.inf
    return dx * dx / (8 * eps * peak)


def step_momentum(domain: Domain, rho_old, u, rho_new, ext: ExtensionField, law, cfg: MomentumStepConfig,
                  t: float = 0.0, floor: float = 0.0):
    """New face velocity after one step; returns (u_new, Z, ||Z||_{L^4/3}).

    Raises:
        StepSizeError: dt above the explicit quartic-term bound.
        CouplingError: new density below ``floor`` (the transport envelope).
    """
    if domain.dimension != 1:
        raise ConfigurationError("the momentum solver is one-dimensional", "domain.dimension")
    u = np.asarray(u, dtype=float)
    ub = ext.u_inf[0]
    if u[0] != ub[0] or u[-1] != ub[-1]:
        raise CouplingError("input velocity violates the Dirichlet data")
    limit = quartic_dt_limit(domain, u, ext, cfg.epsilon)
    if cfg.dt > limit:
        raise StepSizeError(f"dt={cfg.dt:.3e} exceeds quartic bound {limit:.3e}; reduce dt")
    rho_new = np.asarray(rho_new, dtype=float)
    if np.min(rho_new) < floor * (1 - ENVELOPE_REL_SLACK) or np.min(rho_new) <= 0:
        raise CouplingError(f"density {np.min(rho_new):.3e} below envelope floor {floor:.3e}")
    law = regularize(law, cfg.delta, cfg.beta)
    dx = domain.spacing[0]
    rate, Z, znorm = momentum_explicit_rate(domain, rho_old, rho_new, u, ext, law, cfg, t)
    rhs = face_density(rho_old) * u[1:-1] + cfg.dt * rate
    k = cfg.dt * cfg.viscosity.longitudinal / dx**2
    diag = face_density(rho_new) + 2 * k
    m = diag.size
    rhs[0] += k * ub[0]
    rhs[-1] += k * ub[-1]
    bands = np.zeros((3, m))
    bands[0, 1:] = -k
    bands[1] = diag
    bands[2, :-1] = -k
    inner = solve_banded((1, 1), bands, rhs)
    u_new = np.concatenate([[ub[0]], inner, [ub[-1]]])
    if not np.all(np.isfinite(u_new)):
        raise StepSizeError("non-finite velocity; reduce dt")
    return u_new, Z, znorm


def kinetic_energy(domain: Domain, rho, u, u_inf) -> float:
    """1/2 int rho |u - u_inf|^2 with face densities on interior faces."""
    v = (np.asarray(u) - np.asarray(u_inf))[1:-1]
    return float(0.5 * np.sum(face_density(np.asarray(rho)) * v * v) * domain.spacing[0])


@dataclass
class SimulationSetup:
    """Everything the coupled driver needs."""

    domain: Domain
    partition: BoundaryPartition
    ext: ExtensionField
    law: object
    rho0: np.ndarray
    u0: np.ndarray
    cfg: MomentumStepConfig
    steps: int
    cadence: int = 1
    inflow_density: object = None  # callable (t, points) -> rho_B
    label: str = "run"


def simulate(setup: SimulationSetup) -> Trajectory:
    """Alternate continuity and momentum steps; store every ``cadence`` steps."""
    d, cfg = setup.domain, setup.cfg
    ub = setup.ext.u_inf[0]
    u = np.array(setup.u0, dtype=float)
    u[0], u[-1] = ub[0], ub[-1]
    rho = np.array(setup.rho0, dtype=float)
    law_d = regularize(setup.law, cfg.delta, cfg.beta)
    meta = {
        "eps": cfg.epsilon, "delta": cfg.delta, "beta": cfg.beta, "dt": cfg.dt,
        "mu": cfg.viscosity.mu, "lambda": cfg.viscosity.lam, "law": setup.law.describe(),
        "kind": "coupled", "label": setup.label, "steps": setup.steps, "cadence": setup.cadence,
    }
    traj = Trajectory(d, setup.partition, meta=meta)
    tcfg = TransportStepConfig(cfg.epsilon, cfg.dt)
    part0 = inflow_partition(setup.partition, setup.inflow_density, 0.0)
    data = [rho.ravel(), part0.rho_B[part0.inflow]]
    rho_lo = float(min(np.min(x) for x in data if x.size))
    inflow = outflow = div_int = div_max = 0.0
    traj.store(0.0, rho, (u,), 0.0, 0.0, 0.0, 0.0, 0, part0.rho_B)
    traj.log.append(_diagnostics(d, 0.0, rho, u, ub, law_d, 0.0))
    for n in range(setup.steps):
        t = n * cfg.dt
        try:
            part = inflow_partition(setup.partition, setup.inflow_density, t + 0.5 * cfg.dt)
            if part.inflow.any():
                rho_lo = min(rho_lo, float(np.min(part.rho_B[part.inflow])))
            res = advance_continuity(d, rho, (u,), part, tcfg)
            inflow += res.inflow
            outflow += res.outflow
            div_int += res.max_div * cfg.dt
            div_max = max(div_max, res.max_div)
            floor = rho_lo * np.exp(-div_int)
            u, _, znorm = step_momentum(d, rho, u, res.rho, setup.ext, setup.law, cfg, t, floor)
        except (CouplingError, StepSizeError) as exc:
            raise type(exc)(f"step {n}: {exc}") from exc
        rho = res.rho
        traj.z_norm_history.append(znorm)
        t1 = (n + 1) * cfg.dt
        traj.log.append(_diagnostics(d, t1, rho, u, ub, law_d, znorm))
        if (n + 1) % setup.cadence == 0 or n + 1 == setup.steps:
            traj.store(t1, rho, (u,), inflow, outflow, div_int, div_max, n + 1,
                       inflow_partition(setup.partition, setup.inflow_density, t1).rho_B)
    return traj


def _diagnostics(d, t, rho, u, ub, law, znorm):
    return {
        "t": t,
        "mass": integrate(d, rho),
        "kinetic": kinetic_energy(d, rho, u, ub),
        "helmholtz": integrate(d, law.H(rho)),
        "z_norm": znorm,
        "min_rho": float(np.min(rho)),
        "max_rho": float(np.max(rho)),
    }


def z_norm_total(traj: Trajectory) -> float:
    """||Z||_{L^{4/3}(Q_T)} assembled from the per-step spatial norms."""
    dt = float(traj.meta.get("dt", 0.0))
    z = np.asarray(traj.z_norm_history, dtype=float)
    return float((np.sum(z ** (4.0 / 3.0)) * dt) ** 0.75)


def run_simulation(config) -> Trajectory:
    """Build the run described by a :class:`~inflowlab.config.RunConfig` and simulate it."""
    return simulate(config.setup())
