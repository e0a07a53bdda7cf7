"""
Regularised continuity equation  d_t rho - eps Lap rho + div(rho u) = 0
with the inflow/outflow boundary operator

    (-eps grad rho . n + rho v) = rho_B v,   v = u_B . n on IN faces, 0 elsewhere,

plus the convective outflow flux rho u_B . n on OUT faces.

Space: first-order upwind fluxes on the staggered grid, two-point
diffusion, zero diffusive flux through the boundary. Time: the
semi-discrete system with velocity frozen over the step is advanced by
its exact exponential. The semi-discrete operator is a Metzler matrix
whose row sums are minus the discrete divergence, so the exponential is
non-negative and preserves the envelope
rho_min exp(-int ||div u||) <= rho <= rho_max exp(int ||div u||) exactly
in exact arithmetic. Two auxiliary unknowns ride along in the
exponential: a constant 1 that carries the inflow source, and an
accumulator for the outflow mass flux, which makes the mass balance
exact to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .errors import BoundaryDataError, NumericalError, SchemeViolation
from .grid import IN, OUT, BoundaryPartition, Domain, discrete_divergence, integrate, integrate_boundary
from .trajectory import Trajectory

NEG_TOL = -1e-12


@dataclass(frozen=True)
class TransportStepConfig:
    epsilon: float
    dt: float
    flux_scheme: str = "upwind"

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.flux_scheme != "upwind":
            raise ValueError("only the upwind flux is implemented")


@dataclass
class ContinuityStep:
    rho: np.ndarray
    inflow: float
    outflow: float
    max_div: float


def _face_pairs(domain: Domain, axis: int):
    """Flat indices of the (left, right) cells of every interior face normal to ``axis``."""
    idx = np.arange(int(np.prod(domain.shape))).reshape(domain.shape)
    left = np.take(idx, np.arange(domain.cells[axis] - 1), axis=axis).ravel()
    right = np.take(idx, np.arange(1, domain.cells[axis]), axis=axis).ravel()
    return left, right


def interior_faces(u_axis: np.ndarray, axis: int) -> np.ndarray:
    n = u_axis.shape[axis]
    return np.take(u_axis, np.arange(1, n - 1), axis=axis)


def continuity_operator(domain: Domain, u, partition: BoundaryPartition, eps: float):
    """Semi-discrete operator: d rho/dt = M rho + s, plus the outflow row ``w`` with d(out)/dt = w . rho."""
    n = int(np.prod(domain.shape))
    vol = domain.cell_volume
    rows, cols, vals = [], [], []
    for axis in range(domain.dimension):
        h = domain.spacing[axis]
        left, right = _face_pairs(domain, axis)
        w = interior_faces(np.asarray(u[axis]), axis).ravel()
        wp, wm = np.maximum(w, 0.0) / h, np.minimum(w, 0.0) / h
        d = eps / h**2
        # flux F = wp*rho_L + wm*rho_R - d*(rho_R - rho_L), leaves L enters R
        rows += [left, left, right, right]
        cols += [left, right, left, right]
        vals += [-(wp + d), -(wm - d), wp + d, wm - d]
    src = np.zeros(n)
    w_out = np.zeros(n)
    for k in range(len(partition.sides)):
        c = partition.cell[k]
        factor = partition.measures[k] / vol
        if partition.cls[k] == IN:
            src[c] += -partition.un[k] * partition.rho_B[k] * factor
        elif partition.cls[k] == OUT:
            rows.append(np.array([c]))
            cols.append(np.array([c]))
            vals.append(np.array([-partition.un[k] * factor]))
            w_out[c] += partition.un[k] * partition.measures[k]
    M = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return M, src, w_out


def inflow_rate(partition: BoundaryPartition) -> float:
    """Mass entering per unit time: int_{Gamma_in} rho_B |u_B . n|."""
    return integrate_boundary(partition, np.nan_to_num(partition.rho_B) * np.abs(partition.un), partition.inflow)


def advance_continuity(domain: Domain, rho, u, partition: BoundaryPartition, cfg: TransportStepConfig) -> ContinuityStep:
    """One step of the continuity solver; also returns the exact boundary flux integrals."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < NEG_TOL):
        raise SchemeViolation("input density is negative")
    n = rho.size
    M, src, w_out = continuity_operator(domain, u, partition, cfg.epsilon)
    Mc = M.tocoo()
    nz_src = np.flatnonzero(src)
    nz_out = np.flatnonzero(w_out)
    A = sp.csr_matrix(
        (
            np.concatenate([Mc.data, src[nz_src], w_out[nz_out]]),
            (
                np.concatenate([Mc.row, nz_src, np.full(nz_out.size, n)]),
                np.concatenate([Mc.col, np.full(nz_src.size, n + 1), nz_out]),
            ),
        ),
        shape=(n + 2, n + 2),
    )
    y0 = np.concatenate([rho.ravel(), [0.0, 1.0]])
    try:
        y = expm_multiply(A * cfg.dt, y0, traceA=float(A.diagonal().sum() * cfg.dt))
    except Exception as exc:  # pragma: no cover - scipy internals
        raise NumericalError(f"matrix exponential failed: {exc}") from exc
    if not np.all(np.isfinite(y)):
        raise NumericalError("non-finite density after continuity step")
    new = y[:n].reshape(domain.shape)
    if np.any(new < NEG_TOL):
        k = int(np.argmin(new))
        raise SchemeViolation(f"density {new.flat[k]:.3e} below {NEG_TOL} at cell {k}")
    max_div = float(np.max(np.abs(discrete_divergence(domain, u))))
    return ContinuityStep(new, inflow_rate(partition) * cfg.dt, float(y[n]), max_div)


def step_continuity(rho, u, partition: BoundaryPartition, cfg: TransportStepConfig, domain: Domain) -> np.ndarray:
    """New density after one step (see :func:`advance_continuity`)."""
    return advance_continuity(domain, rho, u, partition, cfg).rho


def inflow_partition(partition: BoundaryPartition, inflow_density, t: float) -> BoundaryPartition:
    """Partition with ``rho_B`` replaced by ``inflow_density(t, points)`` when given."""
    if inflow_density is None or not partition.inflow.any():
        return partition
    return partition.with_rho_B(inflow_density(t, partition.points))


def check_boundary_velocity(u, partition: BoundaryPartition, tol: float = 1e-12):
    """Raise BoundaryDataError if a boundary face velocity differs from the partition's u_B . n."""
    for k in range(len(partition.sides)):
        a = int(partition.axis[k])
        normal = float(partition.normals[k][a])
        face = float(np.asarray(u[a])[tuple(partition.face_index[k])]) * normal
        if abs(face - partition.un[k]) > tol * max(1.0, abs(partition.un[k])):
            raise BoundaryDataError(f"boundary face {partition.sides[k]} carries u.n = {face:.6g}, "
                                    f"boundary data give {partition.un[k]:.6g}")


def run_transport(domain: Domain, partition: BoundaryPartition, rho0, velocity, eps: float, dt: float,
                  steps: int, cadence: int = 1, inflow_density=None) -> Trajectory:
    """Drive the continuity solver with a prescribed velocity ``velocity(t) -> faces``.

    ``inflow_density(t, points)`` optionally makes rho_B time dependent; it is
    frozen at the step midpoint.

    Raises:
        BoundaryDataError: the prescribed velocity disagrees with u_B on a boundary face.
    """
    traj = Trajectory(domain, partition, meta={"eps": eps, "dt": dt, "kind": "transport"})
    rho = np.array(rho0, dtype=float)
    cfg = TransportStepConfig(eps, dt)
    inflow = outflow = div_int = div_max = 0.0
    u = velocity(0.0)
    traj.store(0.0, rho, u, 0.0, 0.0, 0.0, 0.0, 0, inflow_partition(partition, inflow_density, 0.0).rho_B)
    for n in range(steps):
        t = n * dt
        u = velocity(t)
        check_boundary_velocity(u, partition)
        part = inflow_partition(partition, inflow_density, t + 0.5 * dt)
        res = advance_continuity(domain, rho, u, part, cfg)
        rho = res.rho
        inflow += res.inflow
        outflow += res.outflow
        div_int += res.max_div * dt
        div_max = max(div_max, res.max_div)
        if (n + 1) % cadence == 0 or n + 1 == steps:
            t1 = (n + 1) * dt
            traj.store(t1, rho, velocity(t1), inflow, outflow, div_int, div_max, n + 1,
                       inflow_partition(partition, inflow_density, t1).rho_B)
    return traj


# ---------------------------------------------------------------------------
# Audits
# ---------------------------------------------------------------------------


@dataclass
class MaxPrincipleReport:
    passed: bool
    worst_excess: float
    worst_index: tuple
    lower: float
    upper: float
    constant_K_passed: bool | None = None


def max_principle_audit(traj: Trajectory, rho_lo: float | None = None, rho_hi: float | None = None,
                        K: float | None = None) -> MaxPrincipleReport:
    """Check rho_lo e^{-I(t)} <= rho <= rho_hi e^{I(t)} at every stored cell and time.

    I(t) is the accumulated discrete ||div u||_inf (running-max times t is a
    weaker envelope and is implied). ``K`` optionally adds the constant-rate
    form. The slack is 10 machine epsilons of the upper envelope per
    solver step taken.
    """
    rho = traj.rho_array()
    p = traj.partition
    data = [rho[0].ravel()] + [np.asarray(b)[p.inflow] for b in traj.rho_B]
    lo = float(min(np.min(x) for x in data if x.size)) if rho_lo is None else rho_lo
    hi = float(max(np.max(x) for x in data if x.size)) if rho_hi is None else rho_hi
    I = np.asarray(traj.div_integral)
    steps = np.maximum(np.asarray(traj.steps), 1)
    slack = 10 * np.finfo(float).eps * hi * np.exp(I) * steps
    axes = tuple(range(1, rho.ndim))
    excess_lo = lo * np.exp(-I) - slack - rho.min(axis=axes)
    excess_hi = rho.max(axis=axes) - hi * np.exp(I) - slack
    excess = np.maximum(excess_lo, excess_hi)
    k = int(np.argmax(excess))
    const_ok = None
    if K is not None:
        t = traj.t
        const_ok = bool(np.all(rho.min(axis=axes) >= lo * np.exp(-K * t) - slack)
                        and np.all(rho.max(axis=axes) <= hi * np.exp(K * t) + slack))
    return MaxPrincipleReport(bool(np.all(excess <= 0)), float(excess[k]), (k,), lo, hi, const_ok)


@dataclass
class MassReport:
    mass_t: np.ndarray
    inflow_integral: np.ndarray
    outflow_integral: np.ndarray
    residual: np.ndarray

    @property
    def max_abs_residual(self) -> float:
        return float(np.max(np.abs(self.residual)))


def mass_ledger(traj: Trajectory) -> MassReport:
    """int rho(t) + int_0^t int_out rho u.n  -  int rho_0 - int_0^t int_in rho_B |u.n| at each stored t."""
    mass = np.array([integrate(traj.domain, r) for r in traj.rho])
    inflow = np.asarray(traj.inflow_cum)
    outflow = np.asarray(traj.outflow_cum)
    residual = mass + outflow - mass[0] - inflow
    return MassReport(mass, inflow, outflow, residual)


def _trapezoid(values, times):
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    if len(times) < 2:
        return np.zeros_like(values)
    inc = 0.5 * (values[1:] + values[:-1]) * np.diff(times)
    return np.concatenate([[0.0], np.cumsum(inc)])


def cell_gradient_sq(domain: Domain, rho: np.ndarray) -> np.ndarray:
    """Sum over axes of |d rho|^2 on interior faces, returned as a volume-weighted face total per cell.

    Used as the discrete Dirichlet form: sum_faces |grad rho|^2 * (face volume).
    """
    total = 0.0
    for axis in range(domain.dimension):
        g = np.diff(rho, axis=axis) / domain.spacing[axis]
        total += np.sum(g * g) * domain.cell_volume
    return total


@dataclass
class L2IdentityReport:
    lhs: np.ndarray
    rhs: np.ndarray
    defect: np.ndarray

    @property
    def max_abs_defect(self) -> float:
        return float(np.max(np.abs(self.defect)))


def l2_identity_audit(traj: Trajectory, eps: float | None = None) -> L2IdentityReport:
    """Signed defect of the L^2 balance obtained by testing the continuity equation with rho.

    lhs = 1/2 int rho^2(t) + 1/2 int_0^t int_dOmega rho^2 |u_B.n| + eps int_0^t int |grad rho|^2
    rhs = 1/2 int rho_0^2 + int_0^t int_in rho rho_B |u_B.n| - 1/2 int_0^t int rho^2 div u
    The boundary trace of rho is its adjacent cell value.
    """
    eps = traj.eps if eps is None else eps
    d, p = traj.domain, traj.partition
    t = traj.t
    sq = np.array([0.5 * integrate(d, r * r) for r in traj.rho])
    bnd, infl, divt, grad = [], [], [], []
    for k, (r, u) in enumerate(zip(traj.rho, traj.u)):
        p = traj.partition_at(k)
        trace = r.ravel()[p.cell]
        bnd.append(0.5 * integrate_boundary(p, trace**2 * np.abs(p.un)))
        infl.append(integrate_boundary(p, trace * np.nan_to_num(p.rho_B) * np.abs(p.un), p.inflow))
        divt.append(0.5 * integrate(d, r * r * discrete_divergence(d, u)))
        grad.append(cell_gradient_sq(d, r))
    lhs = sq + _trapezoid(bnd, t) + eps * _trapezoid(grad, t)
    rhs = sq[0] + _trapezoid(infl, t) - _trapezoid(divt, t)
    return L2IdentityReport(lhs, rhs, rhs - lhs)


# ---------------------------------------------------------------------------
# Renormalised equation
# ---------------------------------------------------------------------------

RENORMALIZERS = {
    "id": (lambda z: z, lambda z: np.ones_like(z), lambda z: np.zeros_like(z)),
    "const": (lambda z: np.full_like(z, 2.0), lambda z: np.zeros_like(z), lambda z: np.zeros_like(z)),
    "square": (lambda z: 0.5 * z * z, lambda z: z, lambda z: np.ones_like(z)),
}


def renormalized_operator(domain: Domain, rho, u, partition: BoundaryPartition, eps: float, b, db, d2b):
    """Discrete spatial part of the renormalised equation, per cell.

    eps b''(rho)|grad rho|^2 - eps div(b'(rho) grad rho) + div(b(rho) u) + (rho b'(rho) - b(rho)) div u,
    with the same upwind/two-point stencils and boundary fluxes as the solver.
    """
    rho = np.asarray(rho, dtype=float)
    out = np.zeros(domain.shape)
    grad_sq = np.zeros(domain.shape)
    brho, dbrho = b(rho), db(rho)
    for axis in range(domain.dimension):
        h = domain.spacing[axis]
        w = interior_faces(np.asarray(u[axis]), axis)
        rl = np.take(rho, np.arange(domain.cells[axis] - 1), axis=axis)
        rr = np.take(rho, np.arange(1, domain.cells[axis]), axis=axis)
        g = (rr - rl) / h
        # b-flux upwinded like rho; diffusive flux with face-averaged b'
        bl, br = b(rl), b(rr)
        dbf = 0.5 * (db(rl) + db(rr))
        F = np.where(w > 0, w * bl, w * br) - eps * dbf * g
        pad = [(0, 0)] * domain.dimension
        pad[axis] = (1, 1)
        Fp = np.pad(F, pad)
        out += np.diff(Fp, axis=axis) / h
        g2 = np.pad(g * g, pad)
        grad_sq += 0.5 * (np.take(g2, np.arange(domain.cells[axis]), axis=axis)
                          + np.take(g2, np.arange(1, domain.cells[axis] + 1), axis=axis))
    flat = out.ravel()
    rb = np.nan_to_num(partition.rho_B)
    for k in range(len(partition.sides)):
        c = partition.cell[k]
        factor = partition.measures[k] / domain.cell_volume
        if partition.cls[k] == IN:
            flat[c] += partition.un[k] * float(b(np.array(rb[k]))) * factor
        elif partition.cls[k] == OUT:
            flat[c] += partition.un[k] * brho.ravel()[c] * factor
    out = flat.reshape(domain.shape)
    out += eps * d2b(rho) * grad_sq
    out += (rho * dbrho - brho) * discrete_divergence(domain, u)
    return out


def renorm_residual(traj: Trajectory, b: str | tuple = "square", test=None) -> float:
    """|sum_n dt_n sum_cells phi^{n+1/2} [ (b^{n+1} - b^n)/dt_n + (A_b(rho^n) + A_b(rho^{n+1}))/2 ] vol|.

    A_b uses the velocity frozen over step n (trapezoid rule in time, as in
    the other ledgers). ``b`` is a key of RENORMALIZERS or a (b, b', b'')
    triple; ``test`` is a callable ``phi(t, *cell_mesh)`` (default 1).
    """
    b, db, d2b = RENORMALIZERS[b] if isinstance(b, str) else b
    d = traj.domain
    mesh = d.cell_mesh()
    t = traj.t
    total = 0.0
    for n in range(len(t) - 1):
        dt = t[n + 1] - t[n]
        phi = np.ones(d.shape) if test is None else np.asarray(test(t[n] + 0.5 * dt, *mesh), dtype=float)
        rate = (b(traj.rho[n + 1]) - b(traj.rho[n])) / dt
        part = traj.partition_at(n)
        A = 0.5 * (renormalized_operator(d, traj.rho[n], traj.u[n], part, traj.eps, b, db, d2b)
                   + renormalized_operator(d, traj.rho[n + 1], traj.u[n], part, traj.eps, b, db, d2b))
        total += dt * np.sum(phi * (rate + A)) * d.cell_volume
    return float(abs(total))
