"""Acceptance criteria: one PASS/FAIL line per criterion at its stated tolerance."""

import time

import numpy as np
import pytest

from inflowlab import audit, cases, cli, grid, io, momentum as M, thermo, transport as T, ws
from inflowlab.config import parse_config_text, shipped_configs

LAW = thermo.PowerLaw(1.0, 2.0)
VISC = M.ViscosityParams(1.0, 0.0)


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail, elapsed, budget):
        within = elapsed <= budget
        status = "PASS" if ok and within else "FAIL"
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {status}  {title}: {detail}; runtime {elapsed:.1f}s (budget {budget:g}s)")
        assert ok, detail
        assert within, f"runtime {elapsed:.1f}s exceeds {budget}s"
    return emit


def _run_1d(n, ub, rho_b, rho0, u0, T_end, dt, eps=0.0, delta=0.0, forcing=None, inflow_density=None, cadence=1):
    d = grid.build_domain([0.0], [1.0], [n])
    part = grid.classify_boundary(d, grid.piecewise_sampler(ub), grid.constant_sampler(rho_b) if rho_b else None)
    ext = grid.build_extension(d, part, 0.2)
    cfg = M.MomentumStepConfig(eps, dt, VISC, delta=delta, forcing=forcing)
    setup = M.SimulationSetup(d, part, ext, LAW, rho0(d.centers(0)), u0(d.nodes(0)), cfg, int(round(T_end / dt)),
                              cadence, inflow_density)
    return M.simulate(setup), ext


def test_criterion_01_thermodynamic_identities(report):
    t0 = time.perf_counter()
    rho = np.logspace(-3, 3, 10_000)
    laws = [thermo.PowerLaw(1.0, 2.0), thermo.PowerLaw(2.0, 1.4), thermo.PowerLaw(0.5, 3.0),
            thermo.Regularized(thermo.PowerLaw(1.0, 2.0), 0.1, 6.0)]
    worst_h2 = worst_gibbs = 0.0
    for law in laws:
        d2H = law.d2H(rho)
        worst_h2 = max(worst_h2, float(np.max(np.abs(d2H - law.dp(rho) / rho) / np.abs(d2H))))
        p = law.p(rho)
        worst_gibbs = max(worst_gibbs, float(np.max(np.abs(rho * law.dH(rho) - law.H(rho) - p) / (1 + np.abs(p)))))
    ok = worst_h2 <= 1e-8 and worst_gibbs <= 1e-10
    report(1, "thermodynamic identities", ok,
           f"max rel |H''-p'/rho| = {worst_h2:.2e} (<=1e-8), max |rho H'-H-p|/(1+|p|) = {worst_gibbs:.2e} (<=1e-10)",
           time.perf_counter() - t0, 1.0)


def test_criterion_02_closed_form_relative_energy(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    rho = rng.uniform(0.0, 10.0, 1_000_000)
    r = rng.uniform(0.01, 10.0, 1_000_000)
    err = float(np.max(np.abs(thermo.relative_energy(LAW, rho, r) - (rho - r) ** 2)))
    report(2, "closed-form E(rho|r) = (rho - r)^2", err <= 1e-12, f"max abs error {err:.2e} (<=1e-12) on 1e6 pairs",
           time.perf_counter() - t0, 1.0)


def test_criterion_03_lower_bound_constant(report):
    t0 = time.perf_counter()
    rep = thermo.lower_bound_constant(LAW, 1.0, 2.0, step=1e-3)
    fine = 5e-4
    rho = np.arange(int(round(rep.grid["rho_max"] / fine)) + 1) * fine
    r = np.linspace(1.0, 2.0, int(round(1.0 / fine)) + 1)
    worst = np.inf
    for start in range(0, len(r), 128):
        rr = r[start:start + 128, None]
        E = thermo.relative_energy(LAW, rho[None, :], rr)
        den = thermo.lower_bound_denominator(rho[None, :], rr, 1.0, 2.0)
        worst = min(worst, float(np.min(E - 0.5 * rep.c * den)))
    ok = abs(rep.c - 1 / 6) <= 1e-3 and worst >= 0
    report(3, "relative-energy lower-bound constant", ok,
           f"c = {rep.c:.6f} vs 1/6 (|diff| {abs(rep.c - 1 / 6):.1e} <= 1e-3); "
           f"min E - (c/2) denominator on 2x finer grid = {worst:.2e} (>= 0)",
           time.perf_counter() - t0, 30.0)


def test_criterion_04_transport_max_principle(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    n = 40
    d = grid.build_domain([0.0], [1.0], [n])
    x = d.nodes(0)
    violations = 0
    for _ in range(100):
        a0, a1, a2 = rng.uniform(-1, 1, 3)
        k, ph, w = rng.integers(1, 4), rng.uniform(0, 2 * np.pi), rng.uniform(0, 3)
        # the time-dependent part vanishes on the boundary so the faces keep carrying u_B
        vel = lambda t, a0=a0, a1=a1, a2=a2, k=k, ph=ph, w=w: (
            a0 + a1 * np.sin(k * np.pi * x + ph) + a2 * np.sin(np.pi * x) * np.cos(w * t),)
        umax = abs(a0) + abs(a1) + abs(a2)
        dt = 0.5 * (1 / n) / max(umax, 1e-3)
        rho_b = rng.uniform(0.5, 2.0)
        part = grid.classify_boundary(d, grid.piecewise_sampler({"x-": a0 + a1 * np.sin(ph),
                                                                 "x+": a0 + a1 * np.sin(k * np.pi + ph)}),
                                      grid.constant_sampler(rho_b))
        rho0 = rng.uniform(0.5, 2.0, n)
        eps = rng.uniform(0.0, 0.02)
        tr = T.run_transport(d, part, rho0, vel, eps, dt, 40)
        violations += 0 if T.max_principle_audit(tr).passed else 1
    report(4, "transport maximum principle", violations == 0, f"{violations} envelope violations in 100 random fields",
           time.perf_counter() - t0, 120.0)


def test_criterion_05_mass_ledger(report):
    t0 = time.perf_counter()
    worst_ratio, names = 0.0, []
    for name, cfg in shipped_configs().items():
        if cfg.experiment == "ws":
            continue
        points = [cfg] if cfg.experiment != "sweep" else [
            cfg.with_overrides(regularization__epsilon=e) for e in cfg["sweep"]["epsilon"]]
        for pc in points:
            traj = M.simulate(pc.setup())
            m = T.mass_ledger(traj)
            tol = 1e-10 * traj.total_steps * max(1.0, float(np.max(m.mass_t)))
            worst_ratio = max(worst_ratio, m.max_abs_residual / tol)
            names.append(name)
    report(5, "mass ledger on shipped cases", worst_ratio <= 1.0,
           f"{len(names)} runs from {sorted(set(names))}; worst |residual| / (1e-10 steps mass) = {worst_ratio:.2e}",
           time.perf_counter() - t0, 300.0)


def _still(n):
    return _run_1d(n, {"x-": 0.0, "x+": 0.0}, None, lambda x: 1 + 0.1 * np.cos(np.pi * x), np.zeros_like, 0.5, 0.5 / n)


def _inflow(n):
    return _run_1d(n, {"x-": 1.0, "x+": 1.0}, 1.2, lambda x: 1 + 0.2 * np.cos(np.pi * x) ** 2,
                   lambda x: 1 + 0.2 * np.sin(np.pi * x), 0.5, 0.5 / n)


def test_criterion_06_energy_inequality(report):
    t0 = time.perf_counter()
    details, ok = [], True
    for label, case in (("still fluid", _still), ("smooth inflow", _inflow)):
        negs = []
        for n in (50, 100, 200):
            tr, ext = case(n)
            curve = audit.energy_residual_curve(tr, ext, LAW, VISC)
            slack = (1 / n + 0.5 / n) * (1 + audit.mechanical_energy(tr, 0, ext, LAW))
            ok &= bool(curve.min() >= -slack)
            negs.append(max(-curve.min(), 0.0))
        orders = np.log2(np.array(negs[:-1]) / np.array(negs[1:]))
        ok &= bool(np.all(orders >= 1.0))
        details.append(f"{label}: negative parts {', '.join(f'{v:.2e}' for v in negs)}, "
                       f"orders {', '.join(f'{o:.2f}' for o in orders)} (>=1)")
    report(6, "energy inequality", ok, "; ".join(details), time.perf_counter() - t0, 300.0)


def test_criterion_07_weak_strong_uniqueness(report):
    t0 = time.perf_counter()
    base = ws.stability_experiment(ws.StabilitySpec(cases.uniform_steady_pair(1.0, 1.0), LAW, eta=0.0,
                                                    meshes=(25, 50, 100), case="uniform_steady"))
    wave = ws.stability_experiment(ws.StabilitySpec(cases.travelling_wave_pair(LAW, 1.0, 1.0, 0.3, 2), LAW,
                                                    eta=0.0, meshes=(25, 50, 100), case="travelling_wave"))
    env = wave["uniqueness_envelope"]
    ok = base["pass"] and base["uniqueness_envelope"]["exact"] and wave["pass"] and min(env["orders"]) >= 1.5
    report(7, "weak-strong uniqueness envelope", ok,
           f"uniform pair sup E = {max(base['uniqueness_envelope']['sup_E']):.1e} (exact); wave pair sup E = "
           f"{', '.join(f'{v:.2e}' for v in env['sup_E'])} within (dx+dt)^2, orders "
           f"{', '.join(f'{o:.2f}' for o in env['orders'])} (>=1.5)",
           time.perf_counter() - t0, 300.0)


def test_criterion_08_stability(report):
    t0 = time.perf_counter()
    wave = cases.travelling_wave_pair(LAW, 1.0, 1.0, 0.3, 2)
    E0, ok, worst = {}, True, -np.inf
    for eta in (1e-3, 1e-2, 1e-1):
        rec = ws.stability_experiment(ws.StabilitySpec(wave, LAW, eta=eta, meshes=(25, 50, 100), case="rho0"))
        ok &= rec["pass"]
        worst = max(worst, rec["max_violation"])
        E0[eta] = rec["E_curve"][0]
    quad = (E0[1e-2] / E0[1e-3]) / 100
    ok &= abs(quad - 1) <= 0.1
    uniform = cases.uniform_steady_pair(1.0, 1.0)
    finals, sizes, bound_ok = [], [], True
    for eta in (0.01, 0.02, 0.04):
        rec = ws.stability_experiment(ws.StabilitySpec(uniform, LAW, eta=eta, perturb=("rhoB",), meshes=(50,)))
        bound_ok &= rec["pass"]
        finals.append(rec["bound_curve"][-1])
        sizes.append(rec["per_mesh"][0]["boundary_l1"])
    slopes = np.array(finals) / np.array(sizes)
    linear = float(np.max(np.abs(slopes / slopes[0] - 1)))
    ok &= bound_ok and linear <= 0.2
    report(8, "stability bound", ok,
           f"rho0 sweep max(E - bound) = {worst:.2e} (<= slack); E(0) ratio / eta^2 ratio = {quad:.4f} (1 +- 0.1); "
           f"boundary bound / ||rho_B - r_B||_L1 deviation {linear:.1e} (<= 0.2)",
           time.perf_counter() - t0, 600.0)


def test_criterion_09_pressure_probe(report):
    t0 = time.perf_counter()
    h = [0.01, 0.02, 0.05, 0.1]
    tr, _ = _run_1d(100, {"x-": 1.0, "x+": 1.0}, 1.0, np.ones_like, np.ones_like, 0.2, 0.005)
    steady = audit.boundary_pressure_probe(tr, LAW, h)
    tr, _ = _inflow(200)
    generic = audit.boundary_pressure_probe(tr, LAW, h)
    ok = abs(steady.fitted_exponent - 1.0) <= 0.02 and generic.fitted_exponent >= 0.9 * generic.predicted_exponent
    report(9, "near-boundary pressure probe", ok,
           f"steady exponent {steady.fitted_exponent:.4f} (1 +- 0.02); inflow exponent {generic.fitted_exponent:.3f} "
           f">= 0.9 x {generic.predicted_exponent:.3f}",
           time.perf_counter() - t0, 180.0)


def test_criterion_10_regularization_sweeps(report):
    t0 = time.perf_counter()
    totals = []
    for eps in (1e-1, 1e-2, 1e-3):
        tr, _ = _run_1d(40, {"x-": 1.0, "x+": 1.0}, 1.0, lambda x: 1 + 0.2 * np.sin(np.pi * x),
                        lambda x: 1 + 0.3 * np.sin(np.pi * x), 0.1, 5e-4, eps=eps)
        totals.append(M.z_norm_total(tr))
    ratios = [totals[1] / totals[0], totals[2] / totals[1]]
    finals = []
    for delta in (1e-1, 1e-2, 1e-3):
        tr, _ = _run_1d(40, {"x-": 1.0, "x+": 1.0}, 1.5, lambda x: 1 + 0.2 * np.sin(np.pi * x), np.ones_like,
                        0.2, 0.005, delta=delta)
        finals.append(tr.rho[-1])
    cauchy = [float(np.sum(np.abs(finals[i] - finals[i + 1])) / 40) for i in range(2)]
    ok = totals[0] > totals[1] > totals[2] > 0 and max(ratios) <= 0.5 and cauchy[1] < cauchy[0]
    report(10, "regularization sweeps", ok,
           f"||Z||_L4/3 totals {', '.join(f'{v:.2e}' for v in totals)}, ratios per decade "
           f"{', '.join(f'{r:.3f}' for r in ratios)} (<=0.5); delta Cauchy L1 {cauchy[0]:.2e} > {cauchy[1]:.2e}",
           time.perf_counter() - t0, 600.0)


def test_criterion_11_renormalization(report):
    t0 = time.perf_counter()
    phi = lambda t, x: np.sin(np.pi * x) ** 2 * (1 + t)
    d = grid.build_domain([0.0], [1.0], [50])
    part = grid.classify_boundary(d, grid.constant_sampler(1.0), grid.constant_sampler(1.0))
    tr_t = T.run_transport(d, part, np.ones(50), lambda t: (np.ones(51),), 0.0, 0.01, 20)
    tr_c, _ = _run_1d(50, {"x-": 1.0, "x+": 1.0}, 1.0, np.ones_like, np.ones_like, 0.2, 0.01)
    steady = max(T.renorm_residual(tr, b, phi) for tr in (tr_t, tr_c) for b in ("id", "const", "square"))
    res = []
    for n in (50, 100, 200):
        dn = grid.build_domain([0.0], [1.0], [n])
        pn = grid.classify_boundary(dn, grid.piecewise_sampler({"x-": 0.0, "x+": 1.0}), None)
        tr = T.run_transport(dn, pn, 1 + 0.3 * np.sin(np.pi * dn.centers(0)), lambda t, dn=dn: (dn.nodes(0).copy(),),
                             0.02, 0.5 / n, int(round(0.4 * n / 0.5)))
        res.append([T.renorm_residual(tr, b, lambda t, x: np.cos(np.pi * x) + t) for b in ("id", "square")])
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    ok = steady <= 1e-10 and bool(np.all(orders >= 1.0))
    report(11, "renormalization residual", ok,
           f"steady max residual {steady:.1e} (<=1e-10); unsteady orders id "
           f"{', '.join(f'{o:.2f}' for o in orders[:, 0])}, z^2/2 {', '.join(f'{o:.2f}' for o in orders[:, 1])} (>=1)",
           time.perf_counter() - t0, 120.0)


def test_criterion_12_determinism(report, tmp_path):
    t0 = time.perf_counter()
    configs = shipped_configs()
    jobs = [("audit", configs["inflow_smooth"]), ("sweep", configs["epsilon_sweep"]),
            ("ws", parse_config_text("[run]\nexperiment = ws\n[experiment]\nmeshes = 20, 40\n[time]\nT = 0.2\n"))]
    mismatched = []
    for verb, cfg in jobs:
        outs = []
        for rep in ("a", "b"):
            out = tmp_path / f"{verb}_{rep}"
            cli.run(verb, cfg, out, seed=12345)
            outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != cli.MANIFEST})
        if outs[0] != outs[1] or not outs[0]:
            mismatched.append(verb)
        assert cli.verify_manifest(tmp_path / f"{verb}_a") == []
    report(12, "determinism", not mismatched,
           f"{len(jobs)} verbs run twice with seed 12345; mismatched outputs: {mismatched or 'none'}",
           time.perf_counter() - t0, 600.0)
