"""One test per acceptance criterion; each prints a PASS/FAIL line."""
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np
import pytest

import _mms
from conftest import PRESET_NAMES, preset
from thermistor.circuit import CircuitParams, contraction_constant, fixed_point_slab, rlc_closed_form
from thermistor.diagnostics import (
    check_contraction,
    check_energy,
    check_mass_balance,
    check_min_principle,
    check_mode_equivalence,
    monitor_fourth_estimate,
)
from thermistor.elliptic import solve_unit
from thermistor.grid import build_grid, integrate_volume
from thermistor.laws import make_material_laws
from thermistor.parabolic import HeatStepConfig, heat_state, heat_step
from thermistor.scheme import exponent_pair, run, tau_refinement_study

_runs = {}


def preset_run(name):
    if name not in _runs:
        cfg = preset(name)
        t0 = time.perf_counter()
        state = run(cfg.scheme, cfg.circuit, cfg.laws(), cfg.grid, *cfg.data())
        _runs[name] = (cfg, state, time.perf_counter() - t0)
    return _runs[name]


def series_current(layers, ell, area, V):
    """Series resistance of equal-thickness layers: j = V / sum(d / sigma)."""
    d = ell / len(layers)
    return area * V / math.fsum(d / s for s in layers)


def test_criterion_1_uniform_sigma_oracle(verdict_line):
    cfg, state, elapsed = preset_run("uniform_sigma")
    g, p = cfg.grid, cfg.circuit
    c = cfg.laws().sigma_lo * g.base_area / g.ell
    exact = rlc_closed_form(p, c, state.t)
    rel = np.max(np.abs(state.V - exact)) / np.max(np.abs(exact))
    # order from dt halvings with the same preset
    errs = []
    for dt in (4e-3, 2e-3, 1e-3):
        st = state if dt == cfg.scheme.dt else run(replace(cfg.scheme, dt=dt), p, cfg.laws(), g, *cfg.data())
        errs.append(np.max(np.abs(st.V - rlc_closed_form(p, c, st.t))))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    ok = rel <= 1e-3 and bool(np.all(np.abs(orders - 2.0) <= 0.2)) and elapsed < 30
    verdict_line(1, ok, f"rel L-inf error {rel:.3e} (<= 1e-3), orders {np.round(orders, 3).tolist()}, "
                 f"16^3 run {elapsed:.1f} s (< 30 s)")
    assert ok


def test_criterion_2_layered_elliptic(verdict_line):
    g = build_grid(4, 4, 8, 1.0, 1.0, 1.0)
    tol_lin = 1e-10
    sigma = np.where(g.centers[2] < 0.5, 1.0, 3.0)
    unit = solve_unit(g, sigma, tol_lin)
    ref = series_current([1.0, 3.0], g.ell, g.base_area, 1.0)
    err = abs(unit.I_hat - ref)
    spread = float(np.ptp(unit.profile))
    ok = err <= 10 * tol_lin and spread <= 10 * tol_lin
    verdict_line(2, ok, f"I_R {unit.I_hat!r} vs series {ref!r} (|diff| {err:.1e}), profile spread {spread:.1e}")
    assert ok


def test_criterion_3_minimum_principle(verdict_line):
    mins = {}
    for name in PRESET_NAMES:
        cfg, state, _ = preset_run(name)
        v = check_min_principle(state.record, cfg.theta_star)
        mins[name] = (v.passed, state.record.column("min_theta").min() - cfg.theta_star)
    ok = all(p for p, _ in mins.values())
    verdict_line(3, ok, ", ".join(f"{n} min-theta* = {d:.3g}" for n, (_, d) in mins.items()))
    assert ok


def test_criterion_4_energy(verdict_line):
    res = {name: check_energy(preset_run(name)[1].record) for name in PRESET_NAMES}
    ok = all(v.passed for v in res.values())
    verdict_line(4, ok, "; ".join(f"{n}: {'ok' if v.passed else v.detail}" for n, v in res.items()))
    assert ok


def test_criterion_5_mass_balance(verdict_line):
    per_step = {}
    for name in PRESET_NAMES:
        cfg, state, _ = preset_run(name)
        per_step[name] = check_mass_balance(state.record, cfg.scheme.tol_newton)
    # insulated run with a uniform source and a nonlinear conductivity
    g = build_grid(6, 5, 7, 1.0, 0.8, 1.2)
    laws = make_material_laws("constant value=1", "sigmoid lo=0.5 hi=2 center=2 width=2", "constant value=0")
    s, dt, n = 2.0, 0.01, 100
    theta0 = 1.0 + 0.5 * np.cos(np.pi * g.centers[0]) * np.cos(np.pi * g.centers[2] / 1.2)
    state = heat_state(laws, theta0)
    cfg = HeatStepConfig(dt)
    for _ in range(n):
        state = heat_step(laws, g, state, g.full(s), np.zeros(g.n_lateral), cfg)
    gain = integrate_volume(g, state.theta) - integrate_volume(g, theta0)
    expected = n * dt * s * g.volume
    rel = abs(gain - expected) / expected
    ok = all(v.passed for v in per_step.values()) and rel <= 1e-9
    worst = max(v.data["max"] for v in per_step.values())
    verdict_line(5, ok, f"max per-step residual {worst:.2e} (<= 1e-9), insulated uniform-source balance rel {rel:.1e}")
    assert ok


def test_criterion_6_contraction(verdict_line):
    res = {name: check_contraction(preset_run(name)[1].record) for name in PRESET_NAMES}
    p = CircuitParams(1, 1, 1, V0=1.0)
    laws = make_material_laws("constant value=2", "constant value=1", "affine slope=1")
    g = build_grid(4, 4, 4, 1.0, 1.0, 1.0)
    n, dt, tol = 11, 1 / 640, 1e-8
    kappa = contraction_constant(p, laws, g, dt * (n - 1))
    fp = fixed_point_slab(p, laws, g, [g.full(1.0)] * n, (1.0, 0.0), dt, 3.0, np.zeros(n), tol_fp=tol)
    bound = math.ceil(math.log2(fp.diffs[0] / tol)) + 1
    ok = (
        all(v.passed for v in res.values())
        and kappa == pytest.approx(0.5, abs=1e-15)
        and fp.iterations <= bound
        and all(r <= 1.05 * kappa for r in fp.ratios)
    )
    worst = max(float(preset_run(nm)[1].record.column("fp_ratio_max").max()) for nm in PRESET_NAMES)
    verdict_line(6, ok, f"max preset ratio {worst:.3g}; example kappa {kappa!r}, {fp.iterations} iterations <= {bound}")
    assert ok


def test_criterion_7_mode_equivalence(verdict_line):
    res = {}
    for name in PRESET_NAMES:
        cfg, state, _ = preset_run(name)
        res[name] = (check_mode_equivalence(state.record, cfg.scheme.tol_fp), np.nanmax(state.record.column("direct_diff")))
    ok = all(v.passed for v, _ in res.values())
    verdict_line(7, ok, ", ".join(f"{n} {d:.1e}" for n, (_, d) in res.items()) + " (<= 1e-7)")
    assert ok


def test_criterion_8_mms(verdict_line):
    t0 = time.perf_counter()
    _, space = _mms.spatial_orders()
    _, tm = _mms.temporal_orders()
    elapsed = time.perf_counter() - t0
    ok = bool(np.all((space >= 1.8) & (space <= 2.2)) and np.all((tm >= 0.9) & (tm <= 1.1))) and elapsed < 60
    verdict_line(8, ok, f"spatial orders {np.round(space, 3).tolist()}, temporal orders {np.round(tm, 3).tolist()}, "
                 f"{elapsed:.1f} s (< 60 s)")
    assert ok


def test_criterion_9_tau_refinement(verdict_line):
    cfg = preset("thermistor")
    with ThreadPoolExecutor(3) as ex:
        rep = tau_refinement_study(cfg.scheme, cfg.circuit, cfg.laws(), cfg.grid, cfg.data(), executor=ex)
    mon = monitor_fourth_estimate(rep.records, cfg.scheme.alpha)
    ratio = rep.ratios[0]
    ok = rep.d_theta[1] < rep.d_theta[0] and ratio <= 0.75 and mon.passed
    verdict_line(9, ok, f"d_theta {[f'{d:.4g}' for d in rep.d_theta]}, ratio {ratio:.4f} (<= 0.75); "
                 f"monitor spreads {mon.data['spread_z']:.3%}, {mon.data['spread_lp']:.3%} (<= 25%)")
    assert ok


def test_criterion_10_exponents(verdict_line):
    p, q = exponent_pair(5 / 6)
    conj = abs(1 / p + 1 / q - 1)
    pe, qe = exponent_pair(1 - 1e-13)
    ok = (
        p == pytest.approx(9 / 8, rel=1e-15, abs=0)
        and q == pytest.approx(9.0, rel=1e-13, abs=0)
        and conj <= 1e-14
        and abs(pe - 1.25) < 1e-12
        and abs(qe - 5.0) < 1e-10
    )
    verdict_line(10, ok, f"alpha=5/6 -> (p, q) = ({p!r}, {q!r}), |1/p+1/q-1| = {conj:.1e}; alpha->1 -> ({pe:.12g}, {qe:.10g})")
    assert ok
