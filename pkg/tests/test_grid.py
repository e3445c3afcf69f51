import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermistor.grid import (
    FaceField,
    GridError,
    boundary_outflux,
    build_grid,
    divergence,
    face_conductivity,
    integrate_lateral,
    integrate_volume,
)


def test_unit_cube_grid():
    g = build_grid(2, 2, 2, 1, 1, 1)
    assert g.n_cells == 8
    assert g.volume == 1.0


def test_spacings():
    g = build_grid(4, 4, 8, 1, 1, 2)
    assert g.hz == 0.25
    assert g.base_area == 1.0


@pytest.mark.parametrize("args", [(1, 2, 2, 1, 1, 1), (2, 2, 2, 0, 1, 1), (2, 2, 2, 1, 1, -1)])
def test_invalid_grid_rejected(args):
    with pytest.raises(GridError):
        build_grid(*args)


def test_integrate_volume_examples():
    g = build_grid(4, 4, 4, 1, 1, 1)
    assert integrate_volume(g, g.full(1.0)) == pytest.approx(1.0, abs=1e-15)
    assert integrate_volume(g, g.full(2.5)) == pytest.approx(2.5, abs=1e-15)
    ind = g.zeros()
    ind[17] = 1.0
    assert integrate_volume(g, ind) == pytest.approx(1 / 64, abs=1e-18)


def test_integrate_lateral_examples():
    g = build_grid(3, 5, 4, 1, 1, 1)
    assert integrate_lateral(g, np.ones(g.n_lateral)) == pytest.approx(4.0, abs=1e-14)
    assert integrate_lateral(g, np.zeros(g.n_lateral)) == 0.0
    g2 = build_grid(2, 2, 2, 1, 1, 1)
    ind = np.zeros(g2.n_lateral)
    ind[0] = 1.0
    assert integrate_lateral(g2, ind) == pytest.approx(0.25)


def test_lateral_trace_length_and_position():
    g = build_grid(3, 4, 5, 2.0, 1.0, 3.0)
    lat = g.lateral
    assert lat["cells"].size == g.n_lateral == 2 * (3 + 4) * 5
    on_side = np.isclose(lat["x"], 0) | np.isclose(lat["x"], 2) | np.isclose(lat["y"], 0) | np.isclose(lat["y"], 1)
    assert on_side.all()
    assert integrate_lateral(g, np.ones(g.n_lateral)) == pytest.approx(g.lateral_area)


def test_field_checks():
    g = build_grid(2, 2, 2, 1, 1, 1)
    with pytest.raises(GridError):
        g.check_field(np.ones(7))
    bad = g.full(1.0)
    bad[3] = np.nan
    with pytest.raises(GridError):
        g.check_field(bad)


def test_harmonic_face_mean():
    g = build_grid(2, 2, 2, 1, 1, 1)
    s = g.as_3d(g.full(1.0)).copy()
    s[:, :, 1] = 3.0
    f = face_conductivity(g, s.ravel())
    assert np.allclose(f.z[:, :, 1], 1.5)
    assert np.allclose(f.z[:, :, 0], 1.0) and np.allclose(f.z[:, :, 2], 3.0)
    assert np.allclose(face_conductivity(g, g.full(2.0)).x, 2.0)


def test_face_conductivity_rejects_nonpositive():
    g = build_grid(2, 2, 2, 1, 1, 1)
    with pytest.raises(GridError):
        face_conductivity(g, g.full(0.0))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.tuples(*[st.integers(2, 5)] * 3))
def test_face_values_within_cell_range(seed, n):
    g = build_grid(*n, 1, 1, 1)
    s = np.random.default_rng(seed).uniform(0.5, 4.0, g.n_cells)
    f = face_conductivity(g, s)
    assert f.min() >= s.min() - 1e-14 and f.max() <= s.max() + 1e-14


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.tuples(*[st.integers(2, 5)] * 3))
def test_discrete_divergence_theorem(seed, n):
    g = build_grid(*n, 1, 1, 1)
    rng = np.random.default_rng(seed)
    flux = FaceField(
        rng.normal(size=(g.nx + 1, g.ny, g.nz)),
        rng.normal(size=(g.nx, g.ny + 1, g.nz)),
        rng.normal(size=(g.nx, g.ny, g.nz + 1)),
    )
    assert np.sum(divergence(g, flux)) == pytest.approx(boundary_outflux(flux), abs=1e-11)


def test_volume_quadrature_second_order():
    errs = []
    for n in (4, 8, 16):
        g = build_grid(n, n, n, 1, 1, 1)
        X, Y, Z = g.centers
        errs.append(abs(integrate_volume(g, np.exp(X + Y + Z)) - (np.e - 1) ** 3))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(np.abs(orders - 2.0) < 0.05)
