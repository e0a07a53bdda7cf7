import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from inflowlab import audit, cases, grid, momentum as M, thermo
from inflowlab.errors import ConfigurationError, TestConfigurationError

LAW = thermo.PowerLaw(1.0, 2.0)
VISC = M.ViscosityParams(1.0, 0.0)


def run(n, ub, rho_b, rho0, u0, T, dt_factor=0.5, eps=0.0, forcing=None, inflow_density=None, delta=0.0):
    d = grid.build_domain([0.0], [1.0], [n])
    part = grid.classify_boundary(d, grid.piecewise_sampler(ub), grid.constant_sampler(rho_b) if rho_b else None)
    ext = grid.build_extension(d, part, 0.2)
    dt = dt_factor / n
    cfg = M.MomentumStepConfig(eps, dt, VISC, delta=delta, forcing=forcing)
    setup = M.SimulationSetup(d, part, ext, LAW, rho0(d.centers(0)), u0(d.nodes(0)), cfg, int(round(T / dt)),
                              inflow_density=inflow_density)
    return M.simulate(setup), ext


def still(n):
    return run(n, {"x-": 0.0, "x+": 0.0}, None, lambda x: 1 + 0.1 * np.cos(np.pi * x), np.zeros_like, 0.5)


def inflow_case(n):
    return run(n, {"x-": 1.0, "x+": 1.0}, 1.2, lambda x: 1 + 0.2 * np.cos(np.pi * x) ** 2,
               lambda x: 1 + 0.2 * np.sin(np.pi * x), 0.5)


def test_energy_ledger_uniform_flow_balances():
    tr, ext = run(40, {"x-": 1.0, "x+": 1.0}, 1.0, np.ones_like, np.ones_like, 0.2)
    led = audit.energy_ledger(tr, ext, LAW, VISC, 0.2)
    assert abs(led.residual) <= 1e-12
    assert led.lhs["viscous_dissipation"] == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("case", [still, inflow_case])
def test_energy_inequality_negative_part_first_order(case):
    negs = []
    for n in (50, 100, 200):
        tr, ext = case(n)
        curve = audit.energy_residual_curve(tr, ext, LAW, VISC)
        negs.append(max(-curve.min(), 0.0))
        slack = 0.5 / n + 0.5 / n  # (dx + dt) with constant 1
        assert curve.min() >= -slack
    negs = np.array(negs)
    assert np.all(np.log2(negs[:-1] / negs[1:]) >= 1.0 - 0.05)


def test_energy_ledger_matches_curve():
    tr, ext = still(40)
    curve = audit.energy_residual_curve(tr, ext, LAW, VISC)
    led = audit.energy_ledger(tr, ext, LAW, VISC, tr.t[-1])
    assert led.residual == pytest.approx(curve[-1], abs=1e-12)
    assert led.lhs["viscous_dissipation"] > 0


def test_relative_energy_zero_on_steady_pair():
    pair = cases.uniform_steady_pair(1.0, 1.0)
    tr, ext = run(40, {"x-": 1.0, "x+": 1.0}, 1.0, np.ones_like, np.ones_like, 0.2)
    for variant in ("REI", "REA", "REIS"):
        rep = audit.relative_energy_ledger(tr, pair, ext, LAW, VISC, 0.2, variant=variant)
        assert rep.E_tau == pytest.approx(0.0, abs=1e-14)
        assert abs(rep.residual) <= 1e-12


def test_relative_energy_positive_for_perturbed_density():
    pair = cases.uniform_steady_pair(1.0, 0.0)
    tr, ext = run(40, {"x-": 0.0, "x+": 0.0}, None, lambda x: 1 + 0.1 * np.cos(np.pi * x), np.zeros_like, 0.1)
    rep = audit.relative_energy_ledger(tr, pair, ext, LAW, VISC, 0.1)
    assert rep.E_0 > 0
    # gamma = 2: E(rho|1) = (rho - 1)^2
    assert rep.E_0 == pytest.approx(np.sum((tr.rho[0] - 1) ** 2) / 40, rel=1e-12)


def test_inflow_boundary_term_closed_form():
    # rho_B = 1.5 against r_B = 1 on one inflow face, gamma = 2
    pair = cases.uniform_steady_pair(1.0, 1.0)
    tr, ext = run(40, {"x-": 1.0, "x+": 1.0}, 1.5, np.ones_like, np.ones_like, 0.2)
    rep = audit.relative_energy_ledger(tr, pair, ext, LAW, VISC, 0.2, variant="REIS")
    # (H(r_B) - H(rho_B) + (rho_B - r_B) H'(r_B)) u_B.n |face| tau with u_B.n = -1
    expected = (1.0 - 1.5**2 + 0.5 * 2.0) * (-1.0) * tr.t[-1]
    assert expected == pytest.approx((1.5 - 1.0) ** 2 * tr.t[-1])
    assert rep.steps["step1_boundary"] == pytest.approx(expected, rel=1e-12)


def test_continuity_weak_form_closed_system():
    tr, _ = still(40)
    assert audit.weak_form_residual(tr, "CE", cases.test_field("one")) <= 1e-10


def test_continuity_weak_form_inflow_converges():
    res = []
    for n in (25, 50, 100):
        tr, _ = run(n, {"x-": 1.0, "x+": 1.0}, 1.2, lambda x: 1 + 0.2 * np.cos(np.pi * x) ** 2, np.ones_like, 0.3)
        res.append(audit.weak_form_residual(tr, "CE", cases.test_field("cos_half_growing")))
    assert res[0] > res[1] > res[2]


def test_momentum_weak_form_steady_and_refinement():
    tr, ext = run(40, {"x-": 1.0, "x+": 1.0}, 1.0, np.ones_like, np.ones_like, 0.2)
    assert audit.weak_form_residual(tr, "ME", cases.test_field("poly_x1mx"), ext, LAW, VISC) <= 1e-12
    res = []
    for n in (25, 50, 100):
        tr, ext = still(n)
        res.append(audit.weak_form_residual(tr, "ME", cases.test_field("bump2_growing"), ext, LAW, VISC))
    assert res[0] > res[1] > res[2]


def test_weak_form_support_checks():
    tr, ext = run(20, {"x-": 1.0, "x+": 1.0}, 1.0, np.ones_like, np.ones_like, 0.05)
    with pytest.raises(TestConfigurationError):
        audit.weak_form_residual(tr, "CE", cases.test_field("one"))
    with pytest.raises(TestConfigurationError):
        audit.weak_form_residual(tr, "ME", cases.test_field("one"), ext, LAW, VISC)


def test_pressure_probe_uniform_density_slope_one():
    tr, _ = run(100, {"x-": 1.0, "x+": 1.0}, 1.0, np.ones_like, np.ones_like, 0.1)
    h = [0.01, 0.02, 0.05, 0.1]
    rep = audit.boundary_pressure_probe(tr, LAW, h)
    assert rep.fitted_exponent == pytest.approx(1.0, abs=0.02)
    T = tr.t[-1]
    assert np.allclose(rep.integrals, 2 * np.array(h) * T, rtol=1e-12)


def test_pressure_probe_input_validation():
    tr, _ = run(20, {"x-": 1.0, "x+": 1.0}, 1.0, np.ones_like, np.ones_like, 0.05)
    with pytest.raises(ConfigurationError):
        audit.boundary_pressure_probe(tr, LAW, [0.1, 0.2, 0.3])
    with pytest.raises(ConfigurationError):
        audit.boundary_pressure_probe(tr, LAW, [0.1, 0.2, 0.3, 0.4])


def test_predicted_exponent_values():
    a, k = audit.integrability_exponents({"delta": 0.0}, LAW)
    assert a == pytest.approx(4 / 3) and k == pytest.approx(4 / 3)
    assert audit.predicted_gamma(a, k) == pytest.approx(0.25)


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3).filter(lambda s: abs(s) > 1e-3))
def test_ledger_terms_linear_in_integrand(s):
    d = grid.build_domain([0.0], [1.0], [16])
    vals = np.random.default_rng(0).normal(size=16)
    assert grid.integrate(d, s * vals) == pytest.approx(s * grid.integrate(d, vals), rel=1e-12, abs=1e-14)
    times = np.linspace(0, 1, 9)
    assert audit._cumulative(s * vals[:9], times)[-1] == pytest.approx(
        s * audit._cumulative(vals[:9], times)[-1], rel=1e-12, abs=1e-14)
