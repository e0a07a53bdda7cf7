"""
Run configuration: a sectioned key/value file (INI syntax) validated as a
whole before anything runs. Every error carries the offending field path
``section.key``; syntax errors carry line and column.

Schema (defaults in brackets)::

    [run]            experiment = simulate|audit|ws|probe|sweep|constants [simulate], seed [0], label [run]
    [domain]         lower [0.0], upper [1.0], cells [100]
    [boundary]       u_left, u_right [0.0], rho_left, rho_right [unset], collar [0.2]
    [law]            kind = power [power], a [1.0], gamma [2.0]
    [viscosity]      mu [1.0], lambda [0.0]
    [regularization] epsilon [0.0], delta [0.0], beta [6.0]
    [time]           T [0.5], dt [0.5 dx / max|u| (CFL 0.5)], cadence [10]
    [initial]        rho_kind, u_kind = constant|cosine|sine|bump [constant],
                     rho_mean [1.0], rho_amplitude [0.0], rho_wavenumber [1.0],
                     u_mean [mean of u_left, u_right], u_amplitude [0.0], u_wavenumber [1.0]
    [audit]          energy, mass, max_principle, renormalization, relative [yes],
                     test_field [cos_half_growing], renormalizer [square]
    [experiment]     pair = uniform_steady|travelling_wave|hydrostatic [travelling_wave],
                     pair_mean [1.0], pair_amplitude [0.3], pair_c [1.0], pair_wavenumber [2.0],
                     eta [0.0], perturb [rho0], meshes [25, 50, 100], cfl [0.5],
                     slack_constant [1.0], envelope_constant [1.0]
    [probe]          h_values [0.01, 0.02, 0.05, 0.1], factor [0.9]
    [sweep]          epsilon, delta, cells [empty lists]
    [constants]      a [1.0], b [2.0], step [1e-3]
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cases import profile, strong_pair
from .errors import ConfigurationError
from .grid import build_domain, build_extension, classify_boundary, piecewise_sampler
from .momentum import MomentumStepConfig, SimulationSetup, ViscosityParams
from .thermo import PowerLaw

EXPERIMENTS = ("simulate", "audit", "ws", "probe", "sweep", "constants")
PROFILE_KINDS = ("constant", "cosine", "sine", "bump")
UNSET = None


def _floats(text):
    return [float(x) for x in text.replace(",", " ").split()]


def _ints(text):
    return [int(x) for x in text.replace(",", " ").split()]


def _strs(text):
    return [x for x in text.replace(",", " ").split()]


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "yes", "true", "on"):
        return True
    if low in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


SCHEMA = {
    "run": {"experiment": (str, "simulate"), "seed": (int, 0), "label": (str, "run")},
    "domain": {"lower": (float, 0.0), "upper": (float, 1.0), "cells": (int, 100)},
    "boundary": {"u_left": (float, 0.0), "u_right": (float, 0.0), "rho_left": (float, UNSET),
                 "rho_right": (float, UNSET), "collar": (float, 0.2)},
    "law": {"kind": (str, "power"), "a": (float, 1.0), "gamma": (float, 2.0)},
    "viscosity": {"mu": (float, 1.0), "lambda": (float, 0.0)},
    "regularization": {"epsilon": (float, 0.0), "delta": (float, 0.0), "beta": (float, 6.0)},
    "time": {"T": (float, 0.5), "dt": (float, UNSET), "cadence": (int, 10)},
    "initial": {"rho_kind": (str, "constant"), "rho_mean": (float, 1.0), "rho_amplitude": (float, 0.0),
                "rho_wavenumber": (float, 1.0), "u_kind": (str, "constant"), "u_mean": (float, UNSET),
                "u_amplitude": (float, 0.0), "u_wavenumber": (float, 1.0)},
    "audit": {"energy": (_bool, True), "mass": (_bool, True), "max_principle": (_bool, True),
              "renormalization": (_bool, True), "relative": (_bool, True),
              "test_field": (str, "cos_half_growing"), "renormalizer": (str, "square")},
    "experiment": {"pair": (str, "travelling_wave"), "pair_mean": (float, 1.0), "pair_amplitude": (float, 0.3),
                   "pair_c": (float, 1.0), "pair_wavenumber": (float, 2.0), "eta": (float, 0.0),
                   "perturb": (_strs, ["rho0"]), "meshes": (_ints, [25, 50, 100]), "cfl": (float, 0.5),
                   "slack_constant": (float, 1.0), "envelope_constant": (float, 1.0)},
    "probe": {"h_values": (_floats, [0.01, 0.02, 0.05, 0.1]), "factor": (float, 0.9)},
    "sweep": {"epsilon": (_floats, []), "delta": (_floats, []), "cells": (_ints, [])},
    "constants": {"a": (float, 1.0), "b": (float, 2.0), "step": (float, 1e-3)},
}


@dataclass
class RunConfig:
    """Validated run configuration; ``values[section][key]`` with defaults applied."""

    values: dict
    source: str = ""
    explicit: set = field(default_factory=set)

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @property
    def experiment(self) -> str:
        return self.values["run"]["experiment"]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    def to_dict(self) -> dict:
        return json.loads(json.dumps(self.values, sort_keys=True))

    def hash(self) -> str:
        """SHA-256 of the canonical JSON of the validated values."""
        return hashlib.sha256(json.dumps(self.values, sort_keys=True).encode()).hexdigest()

    def with_overrides(self, **changes) -> "RunConfig":
        """Copy with ``section__key=value`` overrides, revalidated."""
        vals = json.loads(json.dumps(self.values))
        explicit = set(self.explicit)
        for name, value in changes.items():
            section, key = name.split("__", 1)
            vals[section][key] = value
            explicit.add(f"{section}.{key}")
        if "domain.cells" in {n.replace("__", ".") for n in changes} and "time.dt" not in self.explicit:
            vals["time"]["dt"] = None
        return validate(vals, self.source, explicit)

    # --- solver objects -------------------------------------------------
    def law(self):
        law = self.values["law"]
        return PowerLaw(law["a"], law["gamma"])

    def viscosity(self) -> ViscosityParams:
        v = self.values["viscosity"]
        return ViscosityParams(v["mu"], v["lambda"])

    def domain(self):
        d = self.values["domain"]
        return build_domain([d["lower"]], [d["upper"]], [d["cells"]])

    def partition(self, domain=None):
        domain = self.domain() if domain is None else domain
        b = self.values["boundary"]
        rho = {s: b[k] for s, k in (("x-", "rho_left"), ("x+", "rho_right")) if b[k] is not None}
        rho_sampler = piecewise_sampler({s: rho.get(s, np.nan) for s in ("x-", "x+")}) if rho else None
        return classify_boundary(domain, piecewise_sampler({"x-": b["u_left"], "x+": b["u_right"]}), rho_sampler)

    def strong_pair(self):
        e = self.values["experiment"]
        law = self.law()
        if e["pair"] == "uniform_steady":
            return strong_pair("uniform_steady", law, r_star=e["pair_mean"], c=e["pair_c"])
        if e["pair"] == "hydrostatic":
            return strong_pair("hydrostatic", law, mean=e["pair_mean"], amplitude=e["pair_amplitude"])
        return strong_pair("travelling_wave", law, c=e["pair_c"], mean=e["pair_mean"],
                           amplitude=e["pair_amplitude"], wavenumber=e["pair_wavenumber"])

    def setup(self) -> SimulationSetup:
        d = self.domain()
        part = self.partition(d)
        ext = build_extension(d, part, self.values["boundary"]["collar"])
        ini = self.values["initial"]
        rho0 = profile(ini["rho_kind"], ini["rho_mean"], ini["rho_amplitude"], ini["rho_wavenumber"])(d.centers(0))
        u0 = profile(ini["u_kind"], ini["u_mean"], ini["u_amplitude"], ini["u_wavenumber"])(d.nodes(0))
        r = self.values["regularization"]
        t = self.values["time"]
        cfg = MomentumStepConfig(r["epsilon"], t["dt"], self.viscosity(), delta=r["delta"], beta=r["beta"])
        steps = int(round(t["T"] / t["dt"]))
        return SimulationSetup(d, part, ext, self.law(), rho0, u0, cfg, steps, t["cadence"],
                               label=self.values["run"]["label"])


def _syntax_error(exc, source) -> ConfigurationError:
    line = getattr(exc, "lineno", None)
    if line is None and getattr(exc, "errors", None):
        line = exc.errors[0][0]
    text = ""
    if line is not None and source:
        lines = source.splitlines()
        if 0 < line <= len(lines):
            text = lines[line - 1]
    col = len(text) - len(text.lstrip()) + 1 if text else 1
    return ConfigurationError(f"syntax error at line {line}, column {col}: {text.strip()!r}",
                              f"line {line}, column {col}")


def parse_config_text(text: str, source: str = "<string>") -> RunConfig:
    """Parse and validate configuration text.

    Raises:
        ConfigurationError: syntax error (path ``line L, column C``) or invalid field (path ``section.key``).
    """
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.lstrip()
        if stripped and stripped[0] not in "#;" and len(stripped) < len(line):
            col = len(line) - len(stripped) + 1
            raise ConfigurationError(f"syntax error at line {lineno}, column {col}: indented line {stripped!r} "
                                     "(values cannot span lines)", f"line {lineno}, column {col}")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except (configparser.MissingSectionHeaderError, configparser.ParsingError,
            configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise _syntax_error(exc, text) from None
    raw = {}
    explicit = set()
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigurationError(f"unknown section [{section}]", section)
        raw[section] = {}
        for key, value in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigurationError(f"unknown key {key!r}", f"{section}.{key}")
            conv = SCHEMA[section][key][0]
            try:
                raw[section][key] = conv(value)
            except ValueError as exc:
                raise ConfigurationError(f"invalid value {value!r}: {exc}", f"{section}.{key}") from None
            explicit.add(f"{section}.{key}")
    values = {s: {k: spec[1] for k, spec in keys.items()} for s, keys in SCHEMA.items()}
    for s, kv in raw.items():
        values[s].update(kv)
    return validate(values, source, explicit)


def parse_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file {path} not found", "config")
    return parse_config_text(path.read_text(), str(path))


def _require(cond, msg, path):
    if not cond:
        raise ConfigurationError(msg, path)


def validate(values: dict, source: str = "", explicit=None) -> RunConfig:
    """Check every field and fill derived defaults (u_mean, dt)."""
    v = values
    _require(v["run"]["experiment"] in EXPERIMENTS, f"experiment must be one of {EXPERIMENTS}", "run.experiment")
    _require(0 <= v["run"]["seed"] < 2**64, "seed must be an unsigned 64-bit integer", "run.seed")
    d = v["domain"]
    _require(d["upper"] > d["lower"], "upper must exceed lower", "domain.upper")
    _require(d["cells"] >= 2, "cells must be >= 2", "domain.cells")
    b = v["boundary"]
    _require(0 < b["collar"] <= 0.5 * (d["upper"] - d["lower"]), "collar must lie in (0, half the length]",
             "boundary.collar")
    for side, u_key, rho_key, sign in (("x-", "u_left", "rho_left", 1.0), ("x+", "u_right", "rho_right", -1.0)):
        if sign * b[u_key] > 1e-12 and b[rho_key] is None:
            raise ConfigurationError(f"face {side} is classified IN (u = {b[u_key]}) but has no inflow density",
                                     f"boundary.{rho_key}")
        if b[rho_key] is not None:
            _require(b[rho_key] > 0, "inflow density must be positive", f"boundary.{rho_key}")
    law = v["law"]
    _require(law["kind"] == "power", "law kind must be 'power'", "law.kind")
    _require(law["a"] > 0, "a must be positive", "law.a")
    _require(law["gamma"] > 1, "gamma must exceed 1", "law.gamma")
    visc = v["viscosity"]
    _require(visc["mu"] > 0, "mu must be positive", "viscosity.mu")
    _require(visc["lambda"] >= 0, "lambda must be non-negative", "viscosity.lambda")
    r = v["regularization"]
    _require(r["epsilon"] >= 0, "epsilon must be non-negative", "regularization.epsilon")
    _require(r["delta"] >= 0, "delta must be non-negative", "regularization.delta")
    if r["delta"] > 0 or "regularization.beta" in (explicit or ()):
        bound = max(law["gamma"], 4.5)
        _require(r["beta"] > bound, f"beta = {r['beta']:g} violates beta > max{{gamma, 9/2}} = {bound:g}",
                 "regularization.beta")
    ini = v["initial"]
    for key in ("rho_kind", "u_kind"):
        _require(ini[key] in PROFILE_KINDS, f"profile kind must be one of {PROFILE_KINDS}", f"initial.{key}")
    if ini["u_mean"] is None:
        ini["u_mean"] = 0.5 * (b["u_left"] + b["u_right"])
    rho_min = ini["rho_mean"] - abs(ini["rho_amplitude"]) * (16 if ini["rho_kind"] == "bump" else 1)
    _require(ini["rho_mean"] > 0 and rho_min > 0, "initial density must stay positive", "initial.rho_amplitude")
    t = v["time"]
    _require(t["T"] > 0, "T must be positive", "time.T")
    _require(t["cadence"] >= 1, "cadence must be >= 1", "time.cadence")
    if t["dt"] is None:
        dx = (d["upper"] - d["lower"]) / d["cells"]
        umax = max(abs(b["u_left"]), abs(b["u_right"]), abs(ini["u_mean"]) + abs(ini["u_amplitude"]), 1.0)
        steps = int(np.ceil(t["T"] / (0.5 * dx / umax) - 1e-9))
        t["dt"] = t["T"] / steps
    _require(t["dt"] > 0, "dt must be positive", "time.dt")
    a = v["audit"]
    from .cases import TEST_FIELDS
    from .transport import RENORMALIZERS
    _require(a["test_field"] in TEST_FIELDS, f"test field must be one of {sorted(TEST_FIELDS)}", "audit.test_field")
    _require(a["renormalizer"] in RENORMALIZERS, f"renormalizer must be one of {sorted(RENORMALIZERS)}",
             "audit.renormalizer")
    e = v["experiment"]
    _require(e["pair"] in ("uniform_steady", "travelling_wave", "hydrostatic"), "unknown strong pair",
             "experiment.pair")
    _require(set(e["perturb"]) <= {"rho0", "u0", "rhoB"}, "perturb entries must be rho0, u0 or rhoB",
             "experiment.perturb")
    _require(len(e["meshes"]) >= 1 and all(n >= 4 for n in e["meshes"]), "meshes must be integers >= 4",
             "experiment.meshes")
    _require(e["pair_mean"] - abs(e["pair_amplitude"]) > 0, "strong density must stay positive",
             "experiment.pair_amplitude")
    p = v["probe"]
    _require(len(p["h_values"]) >= 4, "probe needs at least 4 h values", "probe.h_values")
    _require(all(h > 0 for h in p["h_values"]), "h values must be positive", "probe.h_values")
    s = v["sweep"]
    if v["run"]["experiment"] == "sweep":
        _require(any(s[k] for k in s), "sweep axes must not all be empty", "sweep")
    for n in s["cells"]:
        _require(n >= 2, "sweep cells must be >= 2", "sweep.cells")
    c = v["constants"]
    _require(0 < c["a"] <= c["b"], "constants need 0 < a <= b", "constants.a")
    _require(c["step"] > 0, "step must be positive", "constants.step")
    return RunConfig(v, source, set(explicit or ()))


def shipped_configs() -> dict:
    """Bundled example cases: {name: RunConfig}, sorted by name."""
    from importlib import resources

    root = resources.files("inflowlab") / "configs"
    return {p.name[:-4]: parse_config_text(p.read_text(), p.name)
            for p in sorted(root.iterdir(), key=lambda p: p.name) if p.name.endswith(".ini")}
