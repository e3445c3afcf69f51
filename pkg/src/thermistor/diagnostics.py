"""Runtime checks of the a priori estimates and the uniform-norm monitors.

Every check reads only the recorded rows (plus run constants), so replaying
it on a saved record reproduces the verdict.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import CircuitParams
from .grid import Grid
from .laws import MaterialLaws

COLUMNS = (
    "t",
    "V",
    "Vprime",
    "I_R",
    "slab_index",
    "fp_iterations",
    "min_theta",
    "min_cell",
    "mass",
    "energy_psi",
    "psi_bound",
    "energy_phi",
    "phi_bound",
    "mass_residual",
    "newton_iterations",
    "fp_ratio_max",
    "kappa",
    "direct_diff",
    "truncation_fraction",
    "z_norm_grad",
    "lp_norm_u",
    "dual_1",
    "dual_x",
    "dual_y",
    "dual_z",
)

INT_COLUMNS = frozenset({"slab_index", "fp_iterations", "min_cell", "newton_iterations"})

MIN_PRINCIPLE_SLACK = 1e-10
ENERGY_SLACK = 1e-10
CONTRACTION_SLACK = 1.05
MONITOR_SPREAD = 0.25


@dataclass
class DiagnosticsRecord:
    """Per-node rows keyed by ``COLUMNS`` plus run constants in ``meta``."""

    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, **row):
        missing = set(COLUMNS) - row.keys()
        if missing:
            raise KeyError(f"diagnostics row lacks {sorted(missing)}")
        if self.rows and row["t"] <= self.rows[-1]["t"]:
            raise ValueError("diagnostics rows must be time-ordered")
        self.rows.append({c: row[c] for c in COLUMNS})

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def __len__(self):
        return len(self.rows)


@dataclass
class Verdict:
    name: str
    passed: bool
    detail: str
    data: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def check_min_principle(record: DiagnosticsRecord, theta_star: float) -> Verdict:
    floor = theta_star - MIN_PRINCIPLE_SLACK
    for r in record.rows:
        if r["min_theta"] < floor:
            return Verdict(
                "min_principle",
                False,
                f"theta = {r['min_theta']!r} < {theta_star!r} at t = {r['t']!r}, cell {int(r['min_cell'])}",
                {"t": r["t"], "cell": int(r["min_cell"]), "value": r["min_theta"]},
            )
    m = min(r["min_theta"] for r in record.rows)
    return Verdict("min_principle", True, f"min theta {m!r} >= {theta_star!r}", {"min": m})


def check_energy(record: DiagnosticsRecord) -> Verdict:
    for r in record.rows:
        for e, b in (("energy_psi", "psi_bound"), ("energy_phi", "phi_bound")):
            if r[e] > r[b] * (1.0 + ENERGY_SLACK):
                return Verdict("energy", False, f"{e} = {r[e]!r} > {r[b]!r} at t = {r['t']!r}")
    return Verdict("energy", True, f"psi and phi energy bounds hold on {len(record)} nodes")


def check_mass_balance(record: DiagnosticsRecord, tol_newton: float) -> Verdict:
    res = record.column("mass_residual")
    worst = float(res.max()) if res.size else 0.0
    ok = worst <= 10.0 * tol_newton
    return Verdict("mass_balance", ok, f"max residual {worst:.3e} vs {10 * tol_newton:.1e}", {"max": worst})


def check_contraction(record: DiagnosticsRecord) -> Verdict:
    ratio = record.column("fp_ratio_max")
    kappa = record.column("kappa")
    bad = np.nonzero(ratio > CONTRACTION_SLACK * kappa)[0]
    if bad.size:
        r = record.rows[bad[0]]
        return Verdict(
            "contraction", False, f"ratio {r['fp_ratio_max']!r} > 1.05 * {r['kappa']!r} on slab {int(r['slab_index'])}"
        )
    return Verdict("contraction", True, f"max ratio {ratio.max():.4g}, max kappa {kappa.max():.4g}")


def check_mode_equivalence(record: DiagnosticsRecord, tol_fp: float) -> Verdict:
    diff = record.column("direct_diff")
    worst = float(np.nanmax(diff)) if np.any(np.isfinite(diff)) else float("nan")
    if math.isnan(worst):
        return Verdict("mode_equivalence", True, "direct cross-check disabled")
    ok = worst <= 10.0 * tol_fp
    return Verdict("mode_equivalence", ok, f"max |direct - fixed point| {worst:.3e} vs {10 * tol_fp:.1e}")


def voltage_bound(params: CircuitParams, laws: MaterialLaws, g: Grid, T: float, phi0_h1: float) -> tuple[float, float]:
    """Gronwall bounds ``(C_V, C_Vp)`` on ``sup|V|`` and ``sup|V'|`` over ``[0, T]``."""
    l1, l2, l3 = params.lambda1, params.lambda2, params.lambda3
    s, ell = laws.sigma_hi, g.ell
    omega = g.volume
    f1 = params.f.l1_norm(T)
    data = abs(l1 * params.V0p + l2 * params.V0) + f1
    a = (
        0.5 * l1 * params.V0**2
        + T * (ell + s * omega) / (l2 * ell) * data**2
        + T * s**2 * omega * (ell + s * omega) / (l2 * ell**3) * phi0_h1**2
    )
    b = 2.0 * s * omega * (ell + s * omega) / (l2 * ell**4)
    c_v = math.sqrt(2.0 * a / l1 * math.exp(2.0 * b * T / l1))
    i_bound = 2.0 * s * g.base_area / ell * c_v
    i0_bound = s * math.sqrt(omega) * phi0_h1 / ell
    c_vp = (data + l2 * c_v + l3 * T * c_v + i_bound + i0_bound) / l1
    return c_v, c_vp


def check_voltage_bound(record: DiagnosticsRecord, params, laws, g, data) -> Verdict:
    """``data`` carries ``T`` and ``phi0_h1`` (the discrete H^1 norm of the initial potential)."""
    c_v, c_vp = voltage_bound(params, laws, g, data["T"], data["phi0_h1"])
    sup_v = float(np.max(np.abs(record.column("V"))))
    sup_vp = float(np.max(np.abs(record.column("Vprime"))))
    ok = sup_v <= c_v * (1 + 1e-12) and sup_vp <= c_vp * (1 + 1e-12)
    return Verdict(
        "voltage_bound",
        ok,
        f"sup|V| {sup_v:.6g} <= {c_v:.6g}, sup|V'| {sup_vp:.6g} <= {c_vp:.6g}",
        {"sup_V": sup_v, "C_V": c_v, "sup_Vp": sup_vp, "C_Vp": c_vp, "C1": c_v + c_vp},
    )


def z_of_u(u, alpha: float):
    """``(1 + u)^(alpha/2)``; ``1 + u`` is clipped at 0."""
    return np.maximum(1.0 + np.asarray(u, dtype=float), 0.0) ** (0.5 * alpha)


def monitor_fourth_estimate(records, alpha: float, enforce: bool = True) -> Verdict:
    """Compare the final ``z`` gradient norm and ``L^{4p/3}`` norm of ``u`` across runs."""
    zg = np.array([r.column("z_norm_grad")[-1] for r in records])
    lp = np.array([r.column("lp_norm_u")[-1] for r in records])

    def spread(v):
        top = np.max(np.abs(v))
        return 0.0 if top == 0 else float((np.max(v) - np.min(v)) / top)

    s_z, s_lp = spread(zg), spread(lp)
    ok = (s_z <= MONITOR_SPREAD and s_lp <= MONITOR_SPREAD) or not enforce
    return Verdict(
        "norm_monitors",
        ok,
        f"grad z spread {s_z:.3%}, L^(4p/3) spread {s_lp:.3%} (alpha={alpha!r})",
        {"z_norm_grad": zg.tolist(), "lp_norm_u": lp.tolist(), "spread_z": s_z, "spread_lp": s_lp},
    )


def dual_proxy_norms(record: DiagnosticsRecord, p: float) -> dict:
    """``L^p``-in-time norms of the discrete time-derivative tested with 1, x, y, z."""
    t = record.column("t")
    dt = np.diff(t)
    out = {}
    for name in ("dual_1", "dual_x", "dual_y", "dual_z"):
        v = record.column(name)[1:]
        out[name] = float(np.sum(dt * np.abs(v) ** p) ** (1.0 / p)) if v.size else 0.0
    return out


def run_checks(record: DiagnosticsRecord, params, laws, g, theta_star: float) -> list[Verdict]:
    meta = record.meta
    return [
        check_min_principle(record, theta_star),
        check_energy(record),
        check_mass_balance(record, meta["tol_newton"]),
        check_contraction(record),
        check_mode_equivalence(record, meta["tol_fp"]),
        check_voltage_bound(record, params, laws, g, meta),
    ]
