"""Sectioned ``key = value`` run configuration, validation and data presets."""
from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .circuit import CircuitParams, Source, threshold_tau_star
from .grid import Grid, GridError, build_grid
from .laws import LawSpec, MaterialLawError, make_material_laws
from .scheme import SchemeConfig, exponent_pair

__all__ = [
    "ConfigError",
    "InitialTemperature",
    "ExteriorTemperature",
    "RunConfig",
    "dump_config",
    "parse_config",
    "parse_config_text",
]


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


def _descriptor(text: str) -> tuple[str, dict]:
    tokens = text.split()
    if not tokens:
        raise ValueError("empty descriptor")
    params = {}
    for tok in tokens[1:]:
        if "=" not in tok:
            raise ValueError(f"bad parameter {tok!r}, expected key=value")
        k, v = tok.split("=", 1)
        params[k] = float(v)
    return tokens[0], params


def _fmt_params(kind, params) -> str:
    return " ".join([kind] + [f"{k}={float(v)!r}" for k, v in params.items()])


@dataclass(frozen=True)
class InitialTemperature:
    """``uniform`` (value), ``cosine`` (base, amplitude) or ``gaussian`` (base, amplitude, width)."""

    kind: str
    params: dict = field(default_factory=dict)

    REQUIRED = {"uniform": ("value",), "cosine": ("base", "amplitude"), "gaussian": ("base", "amplitude", "width")}

    def __post_init__(self):
        _check_kind(self, self.REQUIRED)

    @classmethod
    def parse(cls, text):
        return cls(*_descriptor(text))

    def __str__(self):
        return _fmt_params(self.kind, self.params)

    def on_grid(self, g: Grid) -> np.ndarray:
        X, Y, Z = g.centers
        p = self.params
        if self.kind == "uniform":
            return g.full(p["value"])
        if self.kind == "cosine":
            shape = np.cos(np.pi * X / g.Lx) * np.cos(np.pi * Y / g.Ly) * np.cos(np.pi * Z / g.ell)
            return p["base"] + p["amplitude"] * shape
        r2 = (X - g.Lx / 2) ** 2 + (Y - g.Ly / 2) ** 2 + (Z - g.ell / 2) ** 2
        return p["base"] + p["amplitude"] * np.exp(-r2 / p["width"] ** 2)


@dataclass(frozen=True)
class ExteriorTemperature:
    """``constant`` (value), ``ramp`` (start, end, duration) or ``sinusoid`` (base, amplitude, omega)."""

    kind: str
    params: dict = field(default_factory=dict)

    REQUIRED = {"constant": ("value",), "ramp": ("start", "end", "duration"), "sinusoid": ("base", "amplitude", "omega")}

    def __post_init__(self):
        _check_kind(self, self.REQUIRED)
        if self.kind == "ramp" and not self.params["duration"] > 0:
            raise ValueError("ramp duration must be positive")

    @classmethod
    def parse(cls, text):
        return cls(*_descriptor(text))

    def __str__(self):
        return _fmt_params(self.kind, self.params)

    def value(self, t: float) -> float:
        p = self.params
        if self.kind == "constant":
            return p["value"]
        if self.kind == "ramp":
            s = min(max(t / p["duration"], 0.0), 1.0)
            return p["start"] + s * (p["end"] - p["start"])
        return p["base"] + p["amplitude"] * math.sin(p["omega"] * t)

    def minimum(self) -> float:
        p = self.params
        if self.kind == "constant":
            return p["value"]
        if self.kind == "ramp":
            return min(p["start"], p["end"])
        return p["base"] - abs(p["amplitude"])

    def trace(self, g: Grid):
        n = g.n_lateral
        return lambda t: np.full(n, self.value(t))


def _check_kind(obj, required):
    if obj.kind not in required:
        raise ValueError(f"unknown preset {obj.kind!r}; expected one of {sorted(required)}")
    missing = [k for k in required[obj.kind] if k not in obj.params]
    extra = [k for k in obj.params if k not in required[obj.kind]]
    if missing or extra:
        raise ValueError(f"{obj.kind} preset needs exactly {list(required[obj.kind])}")


@dataclass(frozen=True)
class RunConfig:
    grid: Grid
    circuit: CircuitParams
    sigma: LawSpec
    k: LawSpec
    h: LawSpec
    theta0: InitialTemperature
    theta_gamma: ExteriorTemperature
    theta_star: float
    scheme: SchemeConfig
    directory: str = "output"
    snapshots: tuple = ()
    checks: bool = True

    def laws(self):
        return make_material_laws(self.sigma, self.k, self.h)

    def data(self):
        return self.theta0.on_grid(self.grid), self.theta_gamma.trace(self.grid)


DEFAULTS = {
    "tol_fp": 1e-8,
    "tol_lin": 1e-10,
    "tol_newton": 1e-10,
    "alpha": 5.0 / 6.0,
    "max_fp_iter": 200,
    "max_newton": 30,
    "max_halvings": 6,
}

SCHEMA = {
    "grid": {"nx": int, "ny": int, "nz": int, "Lx": float, "Ly": float, "ell": float},
    "circuit": {"lambda1": float, "lambda2": float, "lambda3": float, "V0": float, "V0p": float, "f": str},
    "laws": {"sigma": str, "k": str, "h": str},
    "thermal": {"theta0": str, "theta_gamma": str, "theta_star": float},
    "scheme": {
        "tau": float, "dt": float, "T": float, "tol_fp": float, "tol_lin": float, "tol_newton": float,
        "alpha": float, "max_fp_iter": int, "max_newton": int, "max_halvings": int, "check_direct": bool,
    },
    "output": {"directory": str, "snapshots": str, "checks": bool},
}

OPTIONAL = {
    ("circuit", "V0p"): 0.0,
    ("circuit", "f"): "zero",
    ("scheme", "check_direct"): True,
    ("output", "directory"): "output",
    ("output", "snapshots"): "",
    ("output", "checks"): True,
    **{("scheme", k): v for k, v in DEFAULTS.items()},
}


def _convert(typ, raw):
    if typ is bool:
        low = raw.strip().lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError("expected a boolean")
    if typ is int:
        v = float(raw)
        if v != int(v):
            raise ValueError("expected an integer")
        return int(v)
    if typ is float:
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError("expected a finite number")
        return v
    return raw.strip()


def parse_config_text(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError([f"malformed file: {e}"]) from e
    problems = []
    vals = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            problems.append(f"[{sec}]: unknown section")
            continue
        for key in cp[sec]:
            if key not in SCHEMA[sec]:
                problems.append(f"{sec}.{key}: unknown key")
    for sec, keys in SCHEMA.items():
        for key, typ in keys.items():
            path = f"{sec}.{key}"
            if cp.has_option(sec, key):
                try:
                    vals[path] = _convert(typ, cp[sec][key])
                except ValueError as e:
                    problems.append(f"{path}: {e}")
            elif (sec, key) in OPTIONAL:
                vals[path] = OPTIONAL[(sec, key)]
            else:
                problems.append(f"{path}: missing required key")
    if problems:
        raise ConfigError(problems)
    return _validate(vals)


def _validate(v: dict) -> RunConfig:
    problems = []

    def attempt(path, fn):
        try:
            return fn()
        except (ValueError, GridError, MaterialLawError) as e:
            problems.append(f"{path}: {e}")
            return None

    grid = attempt("grid", lambda: build_grid(*(v[f"grid.{k}"] for k in ("nx", "ny", "nz", "Lx", "Ly", "ell"))))
    source = attempt("circuit.f", lambda: Source.parse(v["circuit.f"]))
    circuit = None
    if source is not None:
        circuit = attempt(
            "circuit",
            lambda: CircuitParams(
                v["circuit.lambda1"], v["circuit.lambda2"], v["circuit.lambda3"],
                v["circuit.V0"], v["circuit.V0p"], source,
            ),
        )
    specs = {k: attempt(f"laws.{k}", lambda k=k: LawSpec.parse(v[f"laws.{k}"])) for k in ("sigma", "k", "h")}
    laws = None
    if all(specs.values()):
        laws = attempt("laws", lambda: make_material_laws(specs["sigma"], specs["k"], specs["h"]))
    theta0 = attempt("thermal.theta0", lambda: InitialTemperature.parse(v["thermal.theta0"]))
    tgam = attempt("thermal.theta_gamma", lambda: ExteriorTemperature.parse(v["thermal.theta_gamma"]))
    theta_star = v["thermal.theta_star"]
    if not theta_star > 0:
        problems.append("thermal.theta_star: must be positive")

    tau, dt, T = v["scheme.tau"], v["scheme.dt"], v["scheme.T"]
    for name, val in (("tau", tau), ("dt", dt), ("T", T)):
        if not val > 0:
            problems.append(f"scheme.{name}: must be positive")
    if tau > 0 and dt > 0:
        for name, val in (("tau", tau), ("T", T)):
            n = round(val / dt)
            if n < 1 or abs(val / dt - n) > 1e-9 * max(1.0, val / dt):
                problems.append(f"scheme.{name}: must be an integer multiple of dt = {dt!r}")
    if grid is not None and laws is not None and circuit is not None:
        tau_star = threshold_tau_star(circuit, laws, grid)
        if not tau < tau_star:
            problems.append(
                f"scheme.tau: must satisfy the strict inequality 0 < tau < tau* = {tau_star!r}, got {tau!r}"
            )
    for name in ("tol_fp", "tol_lin", "tol_newton"):
        if not v[f"scheme.{name}"] > 0:
            problems.append(f"scheme.{name}: must be positive")
    for name in ("max_fp_iter", "max_newton"):
        if v[f"scheme.{name}"] < 1:
            problems.append(f"scheme.{name}: must be at least 1")
    if v["scheme.max_halvings"] < 0:
        problems.append("scheme.max_halvings: must be non-negative")
    attempt("scheme.alpha", lambda: exponent_pair(v["scheme.alpha"]))

    snaps = ()
    if v["output.snapshots"]:
        try:
            snaps = tuple(float(s) for s in v["output.snapshots"].split(","))
        except ValueError:
            problems.append("output.snapshots: expected comma-separated times")
        for s in snaps:
            if dt > 0 and (s < 0 or s > T or abs(s / dt - round(s / dt)) > 1e-9 * max(1.0, s / dt)):
                problems.append(f"output.snapshots: time {s!r} is not a node in [0, T]")

    checks = v["output.checks"]
    if checks and grid is not None and theta0 is not None and tgam is not None and theta_star > 0:
        m0 = float(theta0.on_grid(grid).min())
        if m0 < theta_star:
            problems.append(f"thermal.theta0: minimum {m0!r} is below theta_star = {theta_star!r}")
        if tgam.minimum() < theta_star:
            problems.append(f"thermal.theta_gamma: minimum {tgam.minimum()!r} is below theta_star = {theta_star!r}")

    if problems:
        raise ConfigError(problems)
    scheme = SchemeConfig(
        tau=tau, dt=dt, T_final=T,
        tol_fp=v["scheme.tol_fp"], tol_lin=v["scheme.tol_lin"], tol_newton=v["scheme.tol_newton"],
        alpha=v["scheme.alpha"], max_fp_iter=v["scheme.max_fp_iter"], max_newton=v["scheme.max_newton"],
        max_halvings=v["scheme.max_halvings"], check_direct=v["scheme.check_direct"],
    )
    return RunConfig(
        grid=grid, circuit=circuit, sigma=specs["sigma"], k=specs["k"], h=specs["h"],
        theta0=theta0, theta_gamma=tgam, theta_star=theta_star, scheme=scheme,
        directory=v["output.directory"], snapshots=snaps, checks=checks,
    )


def parse_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"{path}: no such file"])
    return parse_config_text(path.read_text())


def dump_config(cfg: RunConfig) -> str:
    """Canonical text form; parsing it back yields an equal config."""
    g, c, s = cfg.grid, cfg.circuit, cfg.scheme
    r = repr
    sections = {
        "grid": {"nx": g.nx, "ny": g.ny, "nz": g.nz, "Lx": r(g.Lx), "Ly": r(g.Ly), "ell": r(g.ell)},
        "circuit": {
            "lambda1": r(c.lambda1), "lambda2": r(c.lambda2), "lambda3": r(c.lambda3),
            "V0": r(c.V0), "V0p": r(c.V0p), "f": c.f.describe(),
        },
        "laws": {"sigma": str(cfg.sigma), "k": str(cfg.k), "h": str(cfg.h)},
        "thermal": {"theta0": str(cfg.theta0), "theta_gamma": str(cfg.theta_gamma), "theta_star": r(cfg.theta_star)},
        "scheme": {
            "tau": r(s.tau), "dt": r(s.dt), "T": r(s.T_final), "tol_fp": r(s.tol_fp), "tol_lin": r(s.tol_lin),
            "tol_newton": r(s.tol_newton), "alpha": r(s.alpha), "max_fp_iter": s.max_fp_iter,
            "max_newton": s.max_newton, "max_halvings": s.max_halvings, "check_direct": s.check_direct,
        },
        "output": {
            "directory": cfg.directory,
            "snapshots": ",".join(r(float(t)) for t in cfg.snapshots),
            "checks": cfg.checks,
        },
    }
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for sec, kv in sections.items():
        cp[sec] = {k: str(val) for k, val in kv.items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def override(cfg: RunConfig, **changes) -> RunConfig:
    return replace(cfg, **changes)
