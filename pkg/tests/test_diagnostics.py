import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermistor.circuit import CircuitParams, Source
from thermistor.diagnostics import (
    COLUMNS,
    DiagnosticsRecord,
    check_min_principle,
    check_voltage_bound,
    dual_proxy_norms,
    monitor_fourth_estimate,
    run_checks,
    voltage_bound,
    z_of_u,
)
from thermistor.grid import build_grid
from thermistor.laws import make_material_laws
from thermistor.scheme import SchemeConfig, run, tau_refinement_study

G = build_grid(4, 4, 4, 1.0, 1.0, 1.0)
UNIFORM = make_material_laws("constant value=1", "constant value=1", "affine slope=1")
VARYING = make_material_laws("sigmoid lo=1 hi=2 center=1.5 width=1", "constant value=1", "affine slope=1")


def bath(value):
    return lambda t: np.full(G.n_lateral, value)


def simulate(laws, params, theta0, theta_gamma, T=0.2):
    return run(SchemeConfig(tau=0.04, dt=0.01, T_final=T), params, laws, G, theta0, theta_gamma)


def row(t, **kw):
    base = {c: 0.0 for c in COLUMNS}
    base.update(t=t, **kw)
    return base


def test_record_rejects_unordered_rows():
    rec = DiagnosticsRecord()
    rec.append(**row(0.0))
    with pytest.raises(ValueError):
        rec.append(**row(0.0))
    with pytest.raises(KeyError):
        rec.append(t=1.0)


def test_equilibrium_passes_all_checks():
    st_ = simulate(VARYING, CircuitParams(1, 1, 1), G.full(1.3), bath(1.3))
    verdicts = run_checks(st_.record, CircuitParams(1, 1, 1), VARYING, G, 1.3)
    assert all(v.passed for v in verdicts), [v.line() for v in verdicts]


def test_min_principle_boundary_case():
    # theta0 touches theta_star exactly, no heating
    theta0 = 1.0 + G.centers[0] * 0.5
    theta0[0] = 1.0
    st_ = simulate(VARYING, CircuitParams(1, 1, 1), theta0, bath(1.0))
    assert check_min_principle(st_.record, 1.0).passed


def test_min_principle_negative_control():
    # a cold bath below theta_star must be caught
    st_ = simulate(VARYING, CircuitParams(1, 1, 1), G.full(1.0), bath(0.5))
    v = check_min_principle(st_.record, 1.0)
    assert not v.passed
    assert v.data["value"] < 1.0 and v.data["t"] > 0
    assert v.line().startswith("FAIL min_principle")


def test_voltage_bound_zero_data():
    p = CircuitParams(1, 1, 1)
    st_ = simulate(UNIFORM, p, G.full(1.0), bath(1.0))
    v = check_voltage_bound(st_.record, p, UNIFORM, G, st_.record.meta)
    assert v.passed and v.data["C_V"] >= 0 and v.data["sup_V"] == 0


def test_voltage_bound_uniform_oracle():
    p = CircuitParams(1, 1, 1, V0=1.0)
    st_ = simulate(UNIFORM, p, G.full(1.0), bath(1.0), T=0.4)
    v = check_voltage_bound(st_.record, p, UNIFORM, G, st_.record.meta)
    # critically damped decay from V0 = 1
    assert v.passed and v.data["sup_V"] == 1.0


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0, 50), extra=st.floats(0, 50), T=st.floats(0.1, 5), h1=st.floats(0, 10))
def test_bound_monotone_in_source_size(a, extra, T, h1):
    small = CircuitParams(1, 2, 1, V0=0.5, f=Source("constant", value=a))
    large = CircuitParams(1, 2, 1, V0=0.5, f=Source("constant", value=a + extra))
    cs = voltage_bound(small, VARYING, G, T, h1)
    cl = voltage_bound(large, VARYING, G, T, h1)
    assert cl[0] >= cs[0] and cl[1] >= cs[1]


def test_z_of_zero_is_one():
    assert np.all(z_of_u(np.zeros(5), 5 / 6) == 1.0)


def test_uniform_u_has_zero_gradient_norm():
    p = CircuitParams(1, 1, 1)
    st_ = simulate(UNIFORM, p, G.full(1.2), bath(1.2))
    assert np.all(st_.record.column("z_norm_grad") == 0)


def test_accumulators_nondecreasing():
    p = CircuitParams(1, 1, 1, V0=2.0)
    rec = simulate(VARYING, p, 1 + 0.5 * G.centers[2], bath(1.0)).record
    for name in ("z_norm_grad", "lp_norm_u"):
        assert np.all(np.diff(rec.column(name)) >= 0)


def test_monitors_and_voltage_bound_across_refinement():
    p = CircuitParams(1, 1, 1, V0=2.0)
    base = SchemeConfig(tau=0.04, dt=0.01, T_final=0.2)
    rep = tau_refinement_study(base, p, VARYING, G, (1 + 0.5 * G.centers[2], bath(1.0)))
    mon = monitor_fourth_estimate(rep.records, base.alpha)
    assert mon.passed, mon.line()
    assert all(check_voltage_bound(r, p, VARYING, G, r.meta).passed for r in rep.records)


def test_monitor_flags_spread_only_when_enforced():
    recs = []
    for scale in (1.0, 2.0):
        r = DiagnosticsRecord()
        r.append(**row(0.0, z_norm_grad=scale, lp_norm_u=1.0))
        recs.append(r)
    assert not monitor_fourth_estimate(recs, 5 / 6).passed
    assert monitor_fourth_estimate(recs, 5 / 6, enforce=False).passed


def test_insulated_balance_proxy():
    # without exchange the w = 1 proxy is the total heating rate
    laws = make_material_laws("constant value=1", "constant value=1", "constant value=0")
    p = CircuitParams(1, 1, 1, V0=1.0)
    rec = simulate(laws, p, G.full(1.0), bath(1.0)).record
    heat = rec.column("dual_1")[1:]
    assert np.all(heat > 0)
    assert dual_proxy_norms(rec, 9 / 8)["dual_1"] > 0


def test_checks_are_replayable():
    p = CircuitParams(1, 1, 1, V0=2.0)
    rec = simulate(VARYING, p, 1 + 0.5 * G.centers[2], bath(1.0)).record
    copy = DiagnosticsRecord([dict(r) for r in rec.rows], dict(rec.meta))
    a = [v.line() for v in run_checks(rec, p, VARYING, G, 1.0)]
    b = [v.line() for v in run_checks(copy, p, VARYING, G, 1.0)]
    assert a == b and all(line.startswith("PASS") for line in a)
