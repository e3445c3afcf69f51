import numpy as np
import pytest

from conftest import preset
from thermistor import io
from thermistor.circuit import CircuitParams, Source, fixed_point_slab, rlc_closed_form
from thermistor.config import ExteriorTemperature
from thermistor.grid import build_grid
from thermistor.laws import make_material_laws
from thermistor.scheme import SchemeConfig, SchemeError, exponent_pair, run, tau_refinement_study

G = build_grid(4, 4, 4, 1.0, 1.0, 1.0)
UNIFORM = make_material_laws("constant value=1", "constant value=1", "affine slope=1")
VARYING = make_material_laws("sigmoid lo=1 hi=2 center=1.5 width=1", "constant value=1", "affine slope=1")
BATH = ExteriorTemperature.parse("constant value=1.0").trace(G)


def run_cfg(laws, params, tau=0.04, dt=0.01, T=0.2, theta0=None, keep_fields=False):
    cfg = SchemeConfig(tau=tau, dt=dt, T_final=T)
    return run(cfg, params, laws, G, G.full(1.0) if theta0 is None else theta0, BATH, keep_fields=keep_fields)


def test_zero_preset_is_stationary():
    cfg = preset("zero")
    st = run(cfg.scheme, cfg.circuit, cfg.laws(), cfg.grid, *cfg.data(), keep_fields=True)
    assert np.all(st.V == 0)
    for f in st.fields:
        assert np.allclose(f, 1.5, rtol=0, atol=1e-12)


def test_uniform_sigma_matches_rlc():
    p = CircuitParams(1, 1, 1, V0=1.0)
    st = run_cfg(UNIFORM, p, tau=0.2, dt=1e-3, T=1.0)
    exact = rlc_closed_form(p, 1.0, st.t)
    assert np.max(np.abs(st.V - exact)) / np.max(np.abs(exact)) <= 1e-3


def test_minimum_principle_with_heating():
    p = CircuitParams(1, 1, 1, V0=2.0)
    st = run_cfg(VARYING, p, theta0=1.0 + 0.3 * G.centers[0])
    assert st.record.column("min_theta").min() >= 1.0 - 1e-10


def test_pasting_and_delay_alignment():
    p = CircuitParams(1, 1, 1, V0=1.0, f=Source("constant", value=2.0))
    tau, dt = 0.04, 0.01
    st = run_cfg(VARYING, p, tau=tau, dt=dt, T=0.2, theta0=1.0 + 0.5 * G.centers[2], keep_fields=True)
    s = 4
    assert st.off_node_lookups == 0
    assert st.delay_lookups == 5 * (s + 1)
    # re-solving slab 1 from the stored joint reproduces the pasted values exactly
    thetas = st.fields[0 : s + 1]  # slab 1 sees the fields of slab 0 through the delay
    F = p.f.integral(st.t[s : 2 * s + 1])
    fp = fixed_point_slab(p, VARYING, G, thetas, (st.V[s], st.W[s]), dt, st.record.meta["const_rhs"], F, t0=st.t[s])
    assert fp.trace.V[0] == st.V[s]
    assert np.array_equal(fp.trace.V[1:], st.V[s + 1 : 2 * s + 1])
    assert np.array_equal(st.record.column("slab_index"), [0] + [k for k in range(5) for _ in range(s)])


def test_history_entries_share_buffers():
    p = CircuitParams(1, 1, 1, V0=1.0)
    st = run_cfg(VARYING, p)
    assert st.history[-1][1] is st.theta
    assert [m for m, _ in st.history] == list(range(16, 21))


def test_last_slab_shortened():
    p = CircuitParams(1, 1, 1, V0=1.0)
    st = run_cfg(VARYING, p, tau=0.04, dt=0.01, T=0.1)
    assert st.t[-1] == pytest.approx(0.1)
    assert st.record.column("slab_index").tolist() == [0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2]


def test_tau_beyond_threshold_rejected():
    with pytest.raises(SchemeError, match="tau\\*"):
        run_cfg(make_material_laws("constant value=4", "constant value=1", "affine slope=1"), CircuitParams(1, 1, 1), tau=0.02, dt=0.01)


def test_config_rejects_misaligned_steps():
    with pytest.raises(ValueError):
        SchemeConfig(tau=0.035, dt=0.01, T_final=0.1)


def test_deterministic_csv(tmp_path):
    p = CircuitParams(1, 1, 1, V0=1.0)
    for name in ("a", "b"):
        io.write_timeseries(tmp_path / name, run_cfg(VARYING, p, theta0=1 + G.centers[1]).record)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_threaded_run_matches_serial():
    from concurrent.futures import ThreadPoolExecutor

    p = CircuitParams(1, 1, 1, V0=1.0)
    cfg = SchemeConfig(tau=0.04, dt=0.01, T_final=0.12)
    a = run(cfg, p, VARYING, G, 1 + G.centers[0], BATH)
    with ThreadPoolExecutor(3) as ex:
        b = run(cfg, p, VARYING, G, 1 + G.centers[0], BATH, executor=ex)
    assert np.array_equal(a.V, b.V) and np.array_equal(a.theta, b.theta)


@pytest.mark.parametrize(
    "alpha,expected",
    [(5 / 6, (9 / 8, 9.0)), (0.7, (1.025, 41.0))],
)
def test_exponent_pair(alpha, expected):
    p, q = exponent_pair(alpha)
    assert p == pytest.approx(expected[0], rel=1e-14) and q == pytest.approx(expected[1], rel=1e-12)
    assert abs(1 / p + 1 / q - 1) <= 1e-14


def test_exponent_pair_endpoint_and_range():
    p, q = exponent_pair(1 - 1e-12)
    assert p == pytest.approx(1.25) and q == pytest.approx(5.0, rel=1e-9)
    for bad in (2 / 3, 1.0, 0.5):
        with pytest.raises(ValueError):
            exponent_pair(bad)


def test_refinement_with_constant_sigma_is_inert():
    p = CircuitParams(1, 1, 1, V0=1.0)
    base = SchemeConfig(tau=0.04, dt=0.01, T_final=0.2)
    rep = tau_refinement_study(base, p, UNIFORM, G, (G.full(1.0), BATH))
    assert rep.taus == [0.04, 0.02, 0.01]
    assert max(rep.d_theta) <= 10 * base.tol_fp
    assert max(rep.d_V) <= 10 * base.tol_fp
    assert any("d_theta" in line for line in rep.lines())
