"""
Term-by-term evaluation of the energy and relative energy balances, weak-form
residuals and the near-boundary pressure probe on finished 1D trajectories.

Conventions: densities are cell values, velocities face values. Face
densities are the mean of the two neighbouring cells; velocity gradients are
cell differences of face values; density gradients live on interior faces.
Boundary traces of the density are the adjacent cell values. Time integrals
use the trapezoid rule over the stored times, so a storage cadence of one
gives the sharpest ledgers.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError, TestConfigurationError
from .grid import IN, OUT, ExtensionField, inner_collar, integrate
from .strong import StrongSolution, relative_energy_functional, sample_strong
from .thermo import regularize
from .trajectory import Trajectory
from .transport import _trapezoid

SUPPORT_TOL = 1e-12


def _require_1d(traj: Trajectory):
    if traj.domain.dimension != 1:
        raise ConfigurationError("velocity ledgers are implemented for 1D trajectories", "domain.dimension")


def _face_rho(rho):
    return 0.5 * (rho[1:] + rho[:-1])


def _law_of(traj: Trajectory, law):
    return regularize(law, float(traj.meta.get("delta", 0.0)), float(traj.meta.get("beta", 6.0)))


def _cumulative(values, times):
    return _trapezoid(values, times)


def _central_face_gradient(face_values, dx):
    """Gradient of a face field at interior faces (central)."""
    return 0.5 * (face_values[2:] - face_values[:-2]) / dx


# ---------------------------------------------------------------------------
# Energy ledger
# ---------------------------------------------------------------------------

ENERGY_LHS = ("final_energy", "inflow_relative_term", "outflow_helmholtz_term", "viscous_dissipation",
              "eps_density_dissipation", "eps_quartic_dissipation")
ENERGY_RHS = ("initial_energy", "inflow_helmholtz_flux", "pressure_div_uinf", "convection_uinf", "eps_cross_term",
              "forcing_work")


@dataclass
class EnergyLedger:
    tau: float
    lhs: dict
    rhs: dict

    @property
    def residual(self) -> float:
        return float(sum(self.rhs.values()) - sum(self.lhs.values()))

    def to_dict(self) -> dict:
        return {"tau": self.tau, "lhs": dict(self.lhs), "rhs": dict(self.rhs), "residual": self.residual}


def energy_integrands(traj: Trajectory, k: int, ext: ExtensionField, law, visc, forcing=None) -> dict:
    """Time-integrand of every dissipative/flux term of the energy balance at stored index ``k``."""
    d = traj.domain
    dx = d.spacing[0]
    eps = traj.eps
    p = traj.partition_at(k)
    rho = traj.rho[k]
    u = traj.u[k][0]
    uinf = ext.u_inf[0]
    v = u - uinf
    trace = rho[p.cell]
    un = p.un
    rho_B = np.nan_to_num(p.rho_B, nan=1.0)
    inflow, outflow = p.cls == IN, p.cls == OUT
    u_x = np.diff(u) / dx
    v_x = np.diff(v) / dx
    rho_x = np.diff(rho) / dx
    rho_f = _face_rho(rho)
    t = traj.times[k]
    out = {
        "inflow_relative_term": float(np.sum(np.where(inflow, law.bregman(rho_B, trace) * np.abs(un) * p.measures, 0))),
        "outflow_helmholtz_term": float(np.sum(np.where(outflow, law.H(trace) * np.abs(un) * p.measures, 0))),
        "viscous_dissipation": float(np.sum(visc.longitudinal * u_x * v_x) * dx),
        # two-point form (H'(rho_R) - H'(rho_L)) (rho_R - rho_L) / dx^2 of H''|rho_x|^2
        "eps_density_dissipation": float(eps * np.sum(np.diff(law.dH(rho)) * rho_x)),
        "eps_quartic_dissipation": float(eps * np.sum(v_x**4) * dx),
        "inflow_helmholtz_flux": float(np.sum(np.where(inflow, law.H(rho_B) * np.abs(un) * p.measures, 0))),
        "pressure_div_uinf": float(-integrate(d, law.p(rho) * ext.div_u_inf)),
        "convection_uinf": float(-np.sum(rho_f * u[1:-1] * _central_face_gradient(uinf, dx) * v[1:-1]) * dx),
        "eps_cross_term": float(eps * np.sum(rho_x * _central_face_gradient(v, dx) * uinf[1:-1]) * dx),
        "forcing_work": 0.0,
    }
    if forcing is not None:
        f = np.asarray(forcing(t, d.nodes(0)[1:-1]), dtype=float)
        out["forcing_work"] = float(np.sum(rho_f * f * v[1:-1]) * dx)
    return out


def mechanical_energy(traj: Trajectory, k: int, ext: ExtensionField, law) -> float:
    d = traj.domain
    rho = traj.rho[k]
    v = (traj.u[k][0] - ext.u_inf[0])[1:-1]
    return float(0.5 * np.sum(_face_rho(rho) * v * v) * d.spacing[0] + integrate(d, law.H(rho)))


def energy_ledger(traj: Trajectory, ext: ExtensionField, law, visc, tau: float, forcing=None) -> EnergyLedger:
    """Energy balance up to the stored time ``tau`` with H_delta throughout; residual = rhs - lhs."""
    _require_1d(traj)
    law = _law_of(traj, law)
    k_end = traj.index_of(tau)
    times = traj.t[: k_end + 1]
    rows = [energy_integrands(traj, k, ext, law, visc, forcing) for k in range(k_end + 1)]

    def integral(name):
        return float(_cumulative([r[name] for r in rows], times)[-1])

    lhs = {"final_energy": mechanical_energy(traj, k_end, ext, law)}
    lhs.update({n: integral(n) for n in ENERGY_LHS[1:]})
    rhs = {"initial_energy": mechanical_energy(traj, 0, ext, law)}
    rhs.update({n: integral(n) for n in ENERGY_RHS[1:]})
    return EnergyLedger(float(times[-1]), lhs, rhs)


def energy_residual_curve(traj: Trajectory, ext: ExtensionField, law, visc, forcing=None) -> np.ndarray:
    """Signed energy-balance residual (rhs - lhs) at every stored time, in one pass."""
    _require_1d(traj)
    law = _law_of(traj, law)
    rows = [energy_integrands(traj, k, ext, law, visc, forcing) for k in range(len(traj))]
    sign = {n: -1.0 for n in ENERGY_LHS[1:]}
    sign.update({n: 1.0 for n in ENERGY_RHS[1:]})
    net = [sum(sign[n] * r[n] for n in sign) for r in rows]
    energy = np.array([mechanical_energy(traj, k, ext, law) for k in range(len(traj))])
    return energy[0] - energy + _cumulative(net, traj.t)


# ---------------------------------------------------------------------------
# Relative energy ledger
# ---------------------------------------------------------------------------

VARIANTS = ("REA", "REI", "REIS")


@dataclass
class RelEnergyReport:
    variant: str
    tau: float
    E_tau: float
    E_0: float
    dissipation_diff: float
    boundary_terms: dict
    remainder_terms: dict
    residual: float
    r_equation_residual: float
    steps: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _rel_integrands(traj, k, strong, ext, law, visc, variant, forcing):
    d = traj.domain
    dx = d.spacing[0]
    eps = traj.eps
    t = traj.times[k]
    s = sample_strong(strong, d, t)
    p = traj.partition_at(k)
    rho = traj.rho[k]
    u = traj.u[k][0]
    uinf = ext.u_inf[0]
    v, V = u - uinf, s.U_face - uinf
    w = u - s.U_face                                  # v - V
    rho_f = _face_rho(rho)
    wi, rho_fi = w[1:-1], rho_f
    u_x = np.diff(u) / dx
    w_x = np.diff(w) / dx
    r, r_f, r_x = s.r_cell, s.r_face[1:-1], s.rx_face[1:-1]
    U_t, U_x_f = s.Ut_face[1:-1], s.Ux_face[1:-1]
    divU = s.Ux_cell
    divV = s.Ux_cell - ext.div_u_inf
    f = s.f_face[1:-1] if forcing is not None else np.zeros_like(wi)
    inflow, outflow = p.cls == IN, p.cls == OUT
    un, meas = p.un, p.measures
    rho_B = np.nan_to_num(p.rho_B, nan=1.0)
    r_bnd = strong.r(t, p.points[:, 0])
    trace = rho[p.cell]
    out = {}
    # dissipation
    out["dissipation_diff"] = float(np.sum(visc.longitudinal * u_x * w_x) * dx)
    out["dissipation_quadratic"] = float(np.sum(visc.longitudinal * w_x * w_x) * dx)
    # boundary terms
    out["inflow_boundary"] = float(np.sum(np.where(
        inflow, (law.H(r_bnd) - r_bnd * law.dH(r_bnd) - law.H(rho_B) + rho_B * law.dH(r_bnd)) * un * meas, 0)))
    out["inflow_taylor"] = float(np.sum(np.where(
        inflow, (law.H(r_bnd) - law.H(rho_B) + (rho_B - r_bnd) * law.dH(r_bnd)) * un * meas, 0)))
    out["inflow_relative_lhs"] = float(np.sum(np.where(inflow, law.bregman(rho_B, trace) * np.abs(un) * meas, 0)))
    out["outflow_relative_lhs"] = float(np.sum(np.where(outflow, law.bregman(trace, r_bnd) * un * meas, 0)))
    # (rei)/(rea) volume lines
    out["time_derivative_V"] = float(np.sum(rho_fi * (-wi) * U_t) * dx)
    out["convection_U"] = float(np.sum(rho_fi * u[1:-1] * U_x_f * (-wi)) * dx)
    out["pressure_taylor_divU"] = float(np.sum((law.p(r) - law.dp(r) * (r - rho) - law.p(rho)) * divU) * dx)
    out["pressure_coupling"] = float(
        np.sum(-law.dp(r_f) * v[1:-1] * r_x + (r_f - rho_fi) / r_f * law.dp(r_f) * wi * r_x) * dx
        - np.sum(law.p(r) * divV) * dx)
    out["forcing"] = float(np.sum(rho_fi * f * wi) * dx)
    # approximate-system extras
    v_x = np.diff(v) / dx
    V_x_cell = np.diff(V) / dx
    Z = eps * v_x**3
    rho_x = np.diff(rho) / dx
    out["quartic_V"] = float(np.sum(Z * V_x_cell) * dx)
    out["eps_cross"] = float(eps * np.sum(rho_x * _central_face_gradient(u - V, dx) * V[1:-1]) * dx)
    out["eps_density_dissipation"] = float(eps * np.sum(np.diff(law.dH(rho)) * rho_x))
    out["eps_quartic_dissipation"] = float(eps * np.sum(v_x**4) * dx)
    # (reis) remainder groups
    A = U_t + s.U_face[1:-1] * U_x_f - f
    out["R_convection"] = float(np.sum((rho_fi - r_f) * (-wi) * A) * dx)
    out["R_velocity_gradient"] = float(np.sum(rho_fi * wi * U_x_f * (-wi)) * dx)
    out["R_pressure_taylor"] = out["pressure_taylor_divU"]
    out["R_pressure_gradient"] = float(np.sum((1 - rho_fi / r_f) * law.dp(r_f) * wi * r_x) * dx)
    # r-equation residual at cell centres
    xc = d.centers(0)
    out["r_residual"] = float(np.max(np.abs(strong.continuity_residual(t, xc))))
    return out


def relative_energy_ledger(traj: Trajectory, strong: StrongSolution, ext: ExtensionField, law, visc, tau: float,
                           variant: str = "REI", forcing=None) -> RelEnergyReport:
    """Evaluate one relative energy inequality up to stored time ``tau``.

    ``forcing`` (usually ``strong.f``) adds the work terms of an external
    force on both the trajectory and the strong pair. The REIS variant
    requires the strong pair to pass its residual check.
    """
    _require_1d(traj)
    if variant not in VARIANTS:
        raise ConfigurationError(f"variant must be one of {VARIANTS}", "audit.variant")
    if variant == "REIS":
        strong.check(law, visc, traj.t)
    use_law = _law_of(traj, law) if variant == "REA" else law
    k_end = traj.index_of(tau)
    times = traj.t[: k_end + 1]
    rows = [_rel_integrands(traj, k, strong, ext, use_law, visc, variant, forcing) for k in range(k_end + 1)]

    def I(name):
        return float(_cumulative([r[name] for r in rows], times)[-1])

    def E_at(k):
        s = sample_strong(strong, traj.domain, traj.times[k])
        return relative_energy_functional(traj.domain, traj.rho[k], traj.u[k][0], s.r_cell, s.U_face, use_law)

    E_tau, E_0 = E_at(k_end), E_at(0)
    r_res = max(r["r_residual"] for r in rows)
    if variant == "REIS":
        steps = {
            "step1_boundary": I("inflow_taylor"),
            "step2_convection": I("R_convection"),
            "step2_velocity_gradient": I("R_velocity_gradient"),
            "step3_pressure_taylor": I("R_pressure_taylor"),
            "step4_pressure_gradient": I("R_pressure_gradient"),
        }
        total = float(_cumulative([r["inflow_taylor"] + r["R_convection"] + r["R_velocity_gradient"]
                                   + r["R_pressure_taylor"] + r["R_pressure_gradient"] for r in rows], times)[-1])
        diss = I("dissipation_quadratic")
        residual = E_0 + total - (E_tau + diss)
        return RelEnergyReport(variant, float(times[-1]), E_tau, E_0, diss, {"inflow_taylor": steps["step1_boundary"]},
                               {"total": total}, residual, r_res, steps)
    remainder = {
        "time_derivative_V": I("time_derivative_V"),
        "convection_U": I("convection_U"),
        "pressure_taylor_divU": I("pressure_taylor_divU"),
        "pressure_coupling": I("pressure_coupling"),
        "forcing": I("forcing"),
    }
    boundary = {"inflow_boundary": I("inflow_boundary")}
    diss = I("dissipation_diff")
    lhs = E_tau + diss
    if variant == "REA":
        boundary["inflow_relative_lhs"] = I("inflow_relative_lhs")
        boundary["outflow_relative_lhs"] = I("outflow_relative_lhs")
        remainder["quartic_V"] = I("quartic_V")
        remainder["eps_cross"] = I("eps_cross")
        lhs += boundary["inflow_relative_lhs"] + boundary["outflow_relative_lhs"]
        lhs += I("eps_density_dissipation") + I("eps_quartic_dissipation")
    rhs = E_0 + boundary["inflow_boundary"] + sum(remainder.values())
    return RelEnergyReport(variant, float(times[-1]), E_tau, E_0, diss, boundary, remainder, rhs - lhs, r_res)


# ---------------------------------------------------------------------------
# Weak-form residuals
# ---------------------------------------------------------------------------


def weak_form_residual(traj: Trajectory, which: str, test_field, ext: ExtensionField | None = None, law=None,
                       visc=None, tau: float | None = None, forcing=None) -> float:
    """|lhs - rhs| of the weak continuity (CE) or momentum (ME) identity up to ``tau``.

    CE fields may be nonzero on inflow faces but must vanish on outflow faces;
    ME fields must vanish on the whole boundary. The CE form carries the
    artificial-diffusion term, the ME form the compensation, quartic and
    forcing terms of the regularised system; both reduce to the limit forms
    when eps = delta = 0.

    Raises:
        TestConfigurationError: support constraint violated.
    """
    _require_1d(traj)
    d = traj.domain
    dx = d.spacing[0]
    xc, xf = d.centers(0), d.nodes(0)
    k_end = len(traj) - 1 if tau is None else traj.index_of(tau)
    times = traj.t[: k_end + 1]
    p0 = traj.partition
    bx = p0.points[:, 0]
    for t in times:
        phi_b = np.asarray(test_field.value(t, bx), dtype=float)
        if which == "CE":
            bad = (p0.cls == OUT) & (np.abs(phi_b) > SUPPORT_TOL)
            if np.any(bad):
                raise TestConfigurationError(f"{test_field.name}: CE test field nonzero on outflow face")
        elif which == "ME":
            if np.any(np.abs(phi_b) > SUPPORT_TOL):
                raise TestConfigurationError(f"{test_field.name}: ME test field must vanish on the boundary")
        else:
            raise ConfigurationError("which must be CE or ME", "audit.which")
    eps = traj.eps
    rows, lhs_vals = [], []
    if which == "CE":
        for k in range(k_end + 1):
            t, rho, u = traj.times[k], traj.rho[k], traj.u[k][0]
            p = traj.partition_at(k)
            phi_x_f = test_field.dx(t, xf[1:-1])
            rho_x = np.diff(rho) / dx
            term = (np.sum(rho * test_field.dt(t, xc)) * dx
                    + np.sum(_face_rho(rho) * u[1:-1] * phi_x_f) * dx
                    - eps * np.sum(rho_x * phi_x_f) * dx)
            rho_B = np.nan_to_num(p.rho_B)
            term -= float(np.sum(np.where(p.cls == IN, rho_B * p.un * test_field.value(t, bx) * p.measures, 0)))
            term -= float(np.sum(np.where(p.cls == OUT, rho[p.cell] * p.un * test_field.value(t, bx) * p.measures, 0)))
            rows.append(term)
            lhs_vals.append(np.sum(rho * test_field.value(t, xc)) * dx)
    else:
        if ext is None or law is None or visc is None:
            raise ConfigurationError("ME residual needs ext, law and visc", "audit")
        law_d = _law_of(traj, law)
        uinf = ext.u_inf[0]
        for k in range(k_end + 1):
            t, rho, u = traj.times[k], traj.rho[k], traj.u[k][0]
            v = u - uinf
            vbar = 0.5 * (v[1:] + v[:-1])
            ubar = 0.5 * (u[1:] + u[:-1])
            phi_c, phi_x_c, phi_t_c = test_field.value(t, xc), test_field.dx(t, xc), test_field.dt(t, xc)
            phi_f = test_field.value(t, xf)
            g = uinf * phi_f                                   # u_inf . phi on faces
            g_x_c = np.diff(g) / dx
            u_x = np.diff(u) / dx
            v_x = np.diff(v) / dx
            Z = eps * v_x**3
            rho_x = np.diff(rho) / dx
            term = np.sum(rho * vbar * phi_t_c + rho * ubar * phi_x_c * ubar - rho * ubar * g_x_c
                          + law_d.p(rho) * phi_x_c - visc.longitudinal * u_x * phi_x_c - Z * phi_x_c) * dx
            term += eps * np.sum(rho_x * _central_face_gradient(g, dx)
                                 - rho_x * _central_face_gradient(u, dx) * phi_f[1:-1]) * dx
            if forcing is not None:
                term += np.sum(rho * forcing(t, xc) * phi_c) * dx
            rows.append(term)
            lhs_vals.append(np.sum(rho * vbar * phi_c) * dx)
    rhs = _cumulative(rows, times)[-1]
    lhs = lhs_vals[-1] - lhs_vals[0]
    return float(abs(lhs - rhs))


# ---------------------------------------------------------------------------
# Near-boundary pressure probe
# ---------------------------------------------------------------------------


@dataclass
class PressureProbeReport:
    h_values: list
    integrals: list
    fitted_exponent: float
    predicted_exponent: float
    alpha: float
    kappa: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def integrability_exponents(meta: dict, law) -> tuple[float, float]:
    """(alpha, kappa) for the momentum density and fluxes of a run.

    alpha = 2 beta / (beta + 1) with artificial pressure, else 2 gamma / (gamma + 1);
    kappa = min(4/3, 6 beta / (4 beta + 3)) with artificial pressure, else 4/3.
    """
    delta = float(meta.get("delta", 0.0))
    if delta > 0:
        beta = float(meta.get("beta"))
        return 2 * beta / (beta + 1), min(4 / 3, 6 * beta / (4 * beta + 3))
    gamma = float(getattr(law, "exponent", getattr(law, "gamma", 2.0)))
    return 2 * gamma / (gamma + 1), 4 / 3


def predicted_gamma(alpha: float, kappa: float) -> float:
    """min(1/alpha', 1/kappa') with q' the conjugate exponent, i.e. min(1 - 1/alpha, 1 - 1/kappa)."""
    return min(1 - 1 / alpha, 1 - 1 / kappa)


def boundary_pressure_probe(traj: Trajectory, law, h_list, alpha: float | None = None,
                            kappa: float | None = None, factor: float = 0.9) -> PressureProbeReport:
    """int_0^T int_{collar h} p_delta(rho) per h and the log-log slope against h.

    Raises:
        ConfigurationError: fewer than four h values or a span below one decade.
    """
    h = np.sort(np.asarray(h_list, dtype=float))
    if h.size < 4:
        raise ConfigurationError("pressure probe needs at least 4 h values", "probe.h_values")
    if h[-1] / h[0] < 10 * (1 - 1e-12):
        raise ConfigurationError("pressure probe h values must span a decade", "probe.h_values")
    law_d = _law_of(traj, law)
    a_def, k_def = integrability_exponents(traj.meta, law)
    alpha = a_def if alpha is None else alpha
    kappa = k_def if kappa is None else kappa
    integrals = []
    masks = [inner_collar(traj.domain, hv) for hv in h]
    for mask in masks:
        vals = [integrate(traj.domain, law_d.p(r), mask) for r in traj.rho]
        integrals.append(float(_cumulative(vals, traj.t)[-1]))
    integrals = np.array(integrals)
    positive = integrals > 0
    if positive.sum() >= 2:
        slope = float(np.polyfit(np.log(h[positive]), np.log(integrals[positive]), 1)[0])
    else:
        slope = float("nan")
    gamma_pred = predicted_gamma(alpha, kappa)
    ok = bool(np.isfinite(slope) and slope >= factor * gamma_pred and np.all(np.diff(integrals) >= -1e-14))
    return PressureProbeReport(h.tolist(), integrals.tolist(), slope, gamma_pred, alpha, kappa, ok)
