"""Time-indexed solver output shared by the solvers and the audits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import BoundaryPartition, Domain


@dataclass
class Trajectory:
    """Stored states of a run plus cumulative step data at every stored time.

    Attributes:
        domain, partition: geometry and boundary data of the run.
        times: stored times, strictly increasing, ``times[0] == 0``.
        rho: densities, shape (m, *domain.shape).
        u: one array per axis, shape (m, *face_shape(axis)).
        inflow_cum, outflow_cum: exact boundary mass fluxes accumulated up to each stored time.
        div_integral: accumulated ``int_0^t ||div u||_inf``.
        div_running_max: running maximum of ``||div u||_inf``.
        steps: number of solver steps up to each stored time.
        rho_B: inflow density samples at each stored time (may vary in time).
        z_norm_history: per-step ``||Z||_{L^4/3}`` of the quartic flux, one entry per step.
        log: per-step diagnostics rows.
        meta: run parameters (eps, delta, beta, law, viscosity, dt ...).
    """

    domain: Domain
    partition: BoundaryPartition
    times: list = field(default_factory=list)
    rho: list = field(default_factory=list)
    u: list = field(default_factory=list)
    inflow_cum: list = field(default_factory=list)
    outflow_cum: list = field(default_factory=list)
    div_integral: list = field(default_factory=list)
    div_running_max: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    rho_B: list = field(default_factory=list)
    z_norm_history: list = field(default_factory=list)
    log: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def store(self, t, rho, u, inflow, outflow, div_int, div_max, step, rho_B=None):
        if self.times and t <= self.times[-1]:
            raise ValueError("stored times must be strictly increasing")
        self.times.append(float(t))
        self.rho.append(np.array(rho, dtype=float))
        self.u.append(tuple(np.array(c, dtype=float) for c in u))
        self.inflow_cum.append(float(inflow))
        self.outflow_cum.append(float(outflow))
        self.div_integral.append(float(div_int))
        self.div_running_max.append(float(div_max))
        self.steps.append(int(step))
        self.rho_B.append(np.array(self.partition.rho_B if rho_B is None else rho_B, dtype=float))

    def partition_at(self, k: int):
        """Boundary partition carrying the inflow density of stored index ``k``."""
        if not self.partition.inflow.any():
            return self.partition
        return self.partition.with_rho_B(self.rho_B[k])

    def __len__(self):
        return len(self.times)

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.times)

    def rho_array(self) -> np.ndarray:
        return np.asarray(self.rho)

    def u_array(self, axis: int = 0) -> np.ndarray:
        return np.asarray([u[axis] for u in self.u])

    def index_of(self, tau: float) -> int:
        """Index of the stored time equal to ``tau`` (to 1e-12 relative)."""
        t = self.t
        k = int(np.argmin(np.abs(t - tau)))
        if abs(t[k] - tau) > 1e-12 * max(1.0, abs(tau)):
            raise ValueError(f"tau={tau} is not a stored time")
        return k

    @property
    def eps(self) -> float:
        return float(self.meta.get("eps", 0.0))

    @property
    def total_steps(self) -> int:
        return self.steps[-1] if self.steps else 0
