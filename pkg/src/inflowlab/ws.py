"""
Weak-strong harness: characteristics densities, remainder of the quadratic
relative energy inequality, the Gronwall certificate and the perturbation
experiments that compare a solver run against a strong reference pair.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from . import audit
from .errors import ExtensionDomainError, HypothesisViolation
from .grid import build_domain, build_extension, classify_boundary, constant_sampler, piecewise_sampler
from .momentum import MomentumStepConfig, SimulationSetup, ViscosityParams, simulate
from .strong import StrongSolution, manufacture_forcing, relative_energy_functional, sample_strong
from .thermo import lower_bound_constant, residual_pressure_check

ODE_TOL = 1e-10
DIV_STEP = 1e-4


# ---------------------------------------------------------------------------
# Characteristics
# ---------------------------------------------------------------------------


def characteristics_density(U, r0, t: float, x, div=None, region=None) -> np.ndarray:
    """r(t, x) = r0(X(0)) exp(-int_0^t div U(s, X(s)) ds) along back-traced characteristics.

    Args:
        U: velocity ``U(s, y)`` for scalar ``y`` (1D) or array ``y`` (d-D); globally extended.
        r0: initial density ``r0(y)``.
        t: time.
        x: evaluation points, shape (n,) in 1D or (n, d).
        div: optional ``div U(s, y)``; default central differences.
        region: optional (lower, upper) box outside which U is undefined.

    Raises:
        ExtensionDomainError: the characteristic leaves ``region`` or meets a non-finite velocity.
    """
    pts = np.asarray(x, dtype=float)
    one_d = pts.ndim == 1
    pts2 = pts[:, None] if one_d else pts
    dim = pts2.shape[1]

    def vel(s, y):
        val = np.asarray(U(s, y[0] if one_d else y), dtype=float).reshape(dim)
        if not np.all(np.isfinite(val)):
            raise ExtensionDomainError(f"velocity undefined at {y} (s={s})")
        if region is not None:
            lo, hi = (np.atleast_1d(region[0]), np.atleast_1d(region[1]))
            if np.any(y < lo) or np.any(y > hi):
                raise ExtensionDomainError(f"characteristic left the extension region at {y} (s={s})")
        return val

    def divergence(s, y):
        if div is not None:
            return float(div(s, y[0] if one_d else y))
        total = 0.0
        for k in range(dim):
            e = np.zeros(dim)
            e[k] = 1.0
            g = lambda z: vel(s, y + z * e)[k]
            total += (-g(3 * DIV_STEP) + 9 * g(2 * DIV_STEP) - 45 * g(DIV_STEP) + 45 * g(-DIV_STEP)
                      - 9 * g(-2 * DIV_STEP) + g(-3 * DIV_STEP)) / (-60 * DIV_STEP)
        return total

    out = np.empty(len(pts2))
    for i, y0 in enumerate(pts2):
        if t == 0:
            out[i] = float(r0(y0[0] if one_d else y0))
            continue

        def rhs(s, z):
            y = z[:dim]
            return np.concatenate([vel(s, y), [divergence(s, y)]])

        sol = solve_ivp(rhs, (t, 0.0), np.concatenate([y0, [0.0]]), method="RK45", rtol=ODE_TOL, atol=ODE_TOL)
        if not sol.success:
            raise ExtensionDomainError(f"characteristic integration failed: {sol.message}")
        y_end, acc = sol.y[:dim, -1], sol.y[dim, -1]
        # acc = int_t^0 div ds = -int_0^t div ds
        out[i] = float(r0(y_end[0] if one_d else y_end)) * np.exp(acc)
    return out


# ---------------------------------------------------------------------------
# Remainder
# ---------------------------------------------------------------------------

REMAINDER_GROUPS = ("boundary", "convection", "velocity_gradient", "pressure_taylor", "pressure_gradient")


@dataclass
class RemainderReport:
    tau: float
    groups: dict
    total: float

    def to_dict(self):
        return asdict(self)


def remainder(traj, strong: StrongSolution, ext, law, tau: float, forcing: bool = True) -> RemainderReport:
    """Itemised remainder of the quadratic relative energy inequality up to ``tau``.

    Groups: boundary Taylor term, (rho - r)(V - v).(U_t + U U_x - f), rho (v - V) U_x (V - v),
    pressure Taylor term times div U, (1 - rho/r) p'(r) (v - V) r_x. The
    total is integrated from the summed integrand, independently of the groups.
    """
    visc = ViscosityParams(float(traj.meta.get("mu", 1.0)), float(traj.meta.get("lambda", 0.0)))
    k_end = traj.index_of(tau)
    times = traj.t[: k_end + 1]
    names = {"boundary": "inflow_taylor", "convection": "R_convection", "velocity_gradient": "R_velocity_gradient",
             "pressure_taylor": "R_pressure_taylor", "pressure_gradient": "R_pressure_gradient"}
    rows = [audit._rel_integrands(traj, k, strong, ext, law, visc, "REIS", strong.f if forcing else None)
            for k in range(k_end + 1)]
    groups = {g: float(audit._cumulative([r[n] for r in rows], times)[-1]) for g, n in names.items()}
    total = float(audit._cumulative([sum(r[n] for n in names.values()) for r in rows], times)[-1])
    return RemainderReport(float(times[-1]), groups, total)


# ---------------------------------------------------------------------------
# Gronwall certificate
# ---------------------------------------------------------------------------


def _sup_abs(g, interval, n: int = 401) -> float:
    """max |g| on an interval: grid search polished by a bounded scalar search."""
    x = np.linspace(*interval, n)
    vals = np.abs(np.asarray(g(x), dtype=float))
    k = int(np.argmax(vals))
    best = float(vals[k])
    if best == 0.0:
        return 0.0
    lo, hi = x[max(k - 1, 0)], x[min(k + 1, n - 1)]
    res = minimize_scalar(lambda y: -abs(float(np.asarray(g(np.array([y])))[0])), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-12})
    return max(best, -float(res.fun))


def poincare_constant(n_cells: int, length: float = 1.0) -> float:
    """1 / lambda_min of the face-based discrete Dirichlet Laplacian (N - 1 unknowns)."""
    h = length / n_cells
    lam = 4 / h**2 * np.sin(np.pi * h / (2 * length)) ** 2
    return 1.0 / lam


@dataclass
class GronwallCertificate:
    times: list
    a_samples: list
    a_integral: list
    constant_c: float
    boundary_constant: float
    rate_constant: float
    constants: dict
    norms: dict = field(default_factory=dict)

    def bound(self, tau, E0: float, boundary_l1: float) -> np.ndarray:
        """(E0 + c1 tau ||rho_B - r_B||_L1) exp(int_0^tau a)."""
        tau = np.asarray(tau, dtype=float)
        A = np.interp(tau, self.times, self.a_integral)
        return (E0 + self.boundary_constant * tau * boundary_l1) * np.exp(A)

    def bound_curve(self, E0: float, boundary_l1: float) -> np.ndarray:
        return self.bound(np.asarray(self.times), E0, boundary_l1)

    def to_dict(self):
        return asdict(self)


def gronwall_certificate(strong: StrongSolution, law, visc: ViscosityParams, T: float, bounds=None,
                         times=None, n_cells: int = 100, rho_B_range=None, step: float = 2e-3,
                         safety: float = 0.95, samples: int = 401) -> GronwallCertificate:
    """Rate function a(t) and constants of the Gronwall bound for the quadratic relative energy inequality.

    a(t) = (2 + c3) ||U_x|| + k_q (A^2 + G^2) + k_l (A + G), with
    A = ||U_t + U U_x - f||, G = ||p'(r) r_x / r||,
    k_q = (1 + b^2) / (4 delta_s c_E1), k_l = sqrt(2 / c_E1), delta_s = c_K / (4 C_P),
    c_E1 the relative-energy lower-bound constant on [a, b], c3 the pressure
    Taylor constant and C_P the discrete Poincare constant of the mesh.
    The boundary constant is c1 = osc(H') ||u_B . n|| with the oscillation of
    H' over [a/2, 2b], widened to ``rho_B_range`` if the inflow data leave it.

    Raises:
        HypothesisViolation: the law has no verified lower-bound constants.
    """
    a, b = strong.r_bounds if bounds is None else bounds
    try:
        c_E1 = safety * lower_bound_constant(law, a, b, step=step).c
        c_rp = residual_pressure_check(law, a, b, step=step).c / safety
    except Exception as exc:
        raise HypothesisViolation(f"relative-energy constants unavailable: {exc}", witness=None) from exc
    if not c_E1 > 0:
        raise HypothesisViolation("relative-energy lower bound is not positive", witness=c_E1)
    win = np.linspace(a / 2, 2 * b, 2001)
    p2 = float(np.max(np.abs(law.d2p(win))))
    dp_max = float(np.max(np.abs(law.dp(np.linspace(a, b, 201)))))
    c3 = max(0.5 * p2 / c_E1, c_rp + (float(law.p(b)) + dp_max * (b + 1)) / c_E1)
    c_K = visc.longitudinal
    C_P = poincare_constant(n_cells, strong.interval[1] - strong.interval[0])
    delta_s = c_K / (4 * C_P)
    k_q = (1 + b * b) / (4 * delta_s * c_E1)
    k_l = np.sqrt(2 / c_E1)
    times = np.linspace(0.0, T, 201) if times is None else np.asarray(times, dtype=float)
    I = strong.interval
    gradU, Aval, Gval, a_t = [], [], [], []
    for t in times:
        gu = _sup_abs(lambda x: strong.U_x(t, x), I, samples)
        A = _sup_abs(lambda x: strong.U_t(t, x) + strong.U(t, x) * strong.U_x(t, x) - strong.f(t, x), I, samples)
        G = _sup_abs(lambda x: law.dp(strong.r(t, x)) * strong.r_x(t, x) / strong.r(t, x), I, samples)
        gradU.append(gu)
        Aval.append(A)
        Gval.append(G)
        a_t.append((2 + c3) * gu + k_q * (A * A + G * G) + k_l * (A + G))
    a_int = audit._cumulative(a_t, times)
    # boundary constant
    lo_b, hi_b = a / 2, 2 * b
    if rho_B_range is not None:
        lo_b, hi_b = min(lo_b, rho_B_range[0]), max(hi_b, rho_B_range[1])
    osc = float(law.dH(hi_b) - law.dH(lo_b))
    ub = max(abs(strong.u_B("x-")), abs(strong.u_B("x+")))
    c1 = osc * ub
    constants = {"c_E1": c_E1, "c_rp": c_rp, "c3": c3, "p2_max": p2, "c_K": c_K, "C_P": C_P, "delta_split": delta_s,
                 "k_quadratic": k_q, "k_linear": float(k_l), "osc_dH": osc}
    return GronwallCertificate(
        times=times.tolist(), a_samples=list(map(float, a_t)), a_integral=a_int.tolist(),
        constant_c=float(max(1.0, c1 * T)), boundary_constant=float(c1),
        rate_constant=float(max(k_q, k_l, 2 + c3)), constants=constants,
        norms={"grad_U": gradU, "A": Aval, "G": Gval},
    )


# ---------------------------------------------------------------------------
# Stability experiments
# ---------------------------------------------------------------------------


@dataclass
class StabilitySpec:
    """One perturbation experiment around a strong pair on [0, 1]."""

    strong: StrongSolution
    law: object
    visc: ViscosityParams = field(default_factory=ViscosityParams)
    eta: float = 0.0
    perturb: tuple = ("rho0",)
    meshes: tuple = (50, 100, 200)
    T: float = 0.5
    cfl: float = 0.5
    collar_width: float = 0.2
    slack_constant: float = 1.0
    envelope_constant: float = 1.0
    case: str = "baseline"


@dataclass
class MeshResult:
    n: int
    dt: float
    times: list
    E_curve: list
    bound_curve: list
    max_violation: float
    E0: float
    boundary_l1: float
    slack: float


def run_perturbed(spec: StabilitySpec, n: int):
    """Solver run from perturbed data; returns (trajectory, extension, E0, boundary L1 distance)."""
    s = spec.strong
    d = build_domain([0.0], [1.0], [n])
    ub = {"x-": s.u_B("x-"), "x+": s.u_B("x+")}
    inflow_side = "x-" if ub["x-"] > 0 else "x+"
    eta_B = spec.eta if "rhoB" in spec.perturb else 0.0
    part = classify_boundary(d, piecewise_sampler(ub), constant_sampler(s.r_B(0.0, inflow_side) + eta_B))
    ext = build_extension(d, part, spec.collar_width)
    xc, xf = d.centers(0), d.nodes(0)
    rho0 = s.r(0.0, xc) + (spec.eta * np.cos(np.pi * xc) if "rho0" in spec.perturb else 0.0)
    u0 = s.U(0.0, xf) + (spec.eta * np.sin(np.pi * xf) if "u0" in spec.perturb else 0.0)
    dt = spec.cfl / n
    steps = int(round(spec.T / dt))
    cfg = MomentumStepConfig(0.0, dt, spec.visc, forcing=s.f)
    inflow_density = None
    if part.inflow.any():
        inflow_density = lambda t, pts: np.array([s.r_B(t, inflow_side) + eta_B] * len(pts))
    traj = simulate(SimulationSetup(d, part, ext, spec.law, rho0, u0, cfg, steps, 1, inflow_density, spec.case))
    l1 = abs(eta_B) * float(np.sum(part.measures[part.inflow]))
    return traj, ext, l1


def relative_energy_curve(traj, strong: StrongSolution, law) -> np.ndarray:
    out = []
    for k, t in enumerate(traj.times):
        smp = sample_strong(strong, traj.domain, t)
        out.append(relative_energy_functional(traj.domain, traj.rho[k], traj.u[k][0], smp.r_cell, smp.U_face, law))
    return np.array(out)


def stability_experiment(spec: StabilitySpec) -> dict:
    """Run every mesh, compare E(tau) with the Gronwall bound and return the verdict record.

    PASS iff E(tau) <= bound(tau) + slack on every mesh and stored tau, with
    slack = slack_constant (dx + dt) (1 + E(0)). For eta = 0 the finest-mesh
    sup E must also sit under envelope_constant (dx + dt)^2 and the observed
    order of sup E must be at least 1.5.
    """
    results = []
    for n in spec.meshes:
        traj, ext, l1 = run_perturbed(spec, n)
        E = relative_energy_curve(traj, spec.strong, spec.law)
        rng = (spec.strong.r_bounds[0] - abs(spec.eta), spec.strong.r_bounds[1] + abs(spec.eta))
        cert = gronwall_certificate(spec.strong, spec.law, spec.visc, spec.T, times=traj.t, n_cells=n,
                                    rho_B_range=rng)
        bound = cert.bound_curve(float(E[0]), l1)
        dx, dt = 1.0 / n, float(traj.meta["dt"])
        slack = spec.slack_constant * (dx + dt) * (1 + float(E[0]))
        results.append(MeshResult(n, dt, traj.t.tolist(), E.tolist(), bound.tolist(),
                                  float(np.max(E - bound)), float(E[0]), l1, slack))
    passed = all(r.max_violation <= r.slack for r in results)
    record = {
        "case": spec.case,
        "eta": spec.eta,
        "perturb": list(spec.perturb),
        "meshes": list(spec.meshes),
        "max_violation": max(r.max_violation for r in results),
        "E_curve": results[-1].E_curve,
        "bound_curve": results[-1].bound_curve,
        "times": results[-1].times,
        "per_mesh": [{"n": r.n, "dt": r.dt, "E0": r.E0, "sup_E": max(r.E_curve), "max_violation": r.max_violation,
                      "slack": r.slack, "boundary_l1": r.boundary_l1} for r in results],
    }
    if spec.eta == 0:
        sups = np.array([max(r.E_curve) for r in results])
        h = np.array([1.0 / r.n + r.dt for r in results])
        envelope_ok = bool(np.all(sups <= spec.envelope_constant * h**2))
        orders = convergence_orders(sups, h)
        record["uniqueness_envelope"] = {"sup_E": sups.tolist(), "h": h.tolist(), "orders": orders,
                                         "envelope_constant": spec.envelope_constant, "within": envelope_ok}
        exact = bool(np.all(sups <= 1e-20))
        passed = passed and envelope_ok and (exact or (len(orders) > 0 and min(orders) >= 1.5))
        record["uniqueness_envelope"]["exact"] = exact
    record["pass"] = bool(passed)
    return record


def convergence_orders(errors, h) -> list:
    """Successive observed orders log(e_i / e_{i+1}) / log(h_i / h_{i+1})."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(h, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        o = np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])
    return [float(x) for x in o]


__all__ = [
    "characteristics_density", "manufacture_forcing", "remainder", "gronwall_certificate", "stability_experiment",
    "StabilitySpec", "GronwallCertificate", "RemainderReport", "convergence_orders",
]
