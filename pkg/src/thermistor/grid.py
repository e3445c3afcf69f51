"""Tensor-product finite-volume mesh of the cylinder ``B x (0, ell)``.

``B = (0, Lx) x (0, Ly)``. Cell-centered fields are flat arrays in C order of
shape ``(nx, ny, nz)``. Boundary faces split into the two bases ``z = 0`` and
``z = ell`` (Dirichlet for the potential, insulated for heat) and the lateral
faces on ``x, y`` extremes (no current, Robin heat exchange).

Lateral traces are ordered ``x = 0``, ``x = Lx``, ``y = 0``, ``y = Ly``; within
each side the remaining two indices run in C order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "FaceField",
    "Grid",
    "GridError",
    "build_grid",
    "divergence",
    "face_conductivity",
    "integrate_lateral",
    "integrate_volume",
]


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    nz: int
    Lx: float
    Ly: float
    ell: float

    def __post_init__(self):
        bad = [n for n in ("nx", "ny", "nz") if int(getattr(self, n)) < 2]
        bad += [n for n in ("Lx", "Ly", "ell") if not getattr(self, n) > 0]
        if bad:
            raise GridError(f"grid needs counts >= 2 and positive lengths; bad: {bad}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def hx(self) -> float:
        return self.Lx / self.nx

    @property
    def hy(self) -> float:
        return self.Ly / self.ny

    @property
    def hz(self) -> float:
        return self.ell / self.nz

    @property
    def cell_volume(self) -> float:
        return self.hx * self.hy * self.hz

    @property
    def face_areas(self) -> tuple[float, float, float]:
        """Areas of faces normal to x, y, z."""
        return (self.hy * self.hz, self.hx * self.hz, self.hx * self.hy)

    @property
    def base_area(self) -> float:
        return self.Lx * self.Ly

    @property
    def volume(self) -> float:
        return self.base_area * self.ell

    @property
    def lateral_area(self) -> float:
        return 2.0 * (self.Lx + self.Ly) * self.ell

    @property
    def n_lateral(self) -> int:
        return 2 * (self.nx + self.ny) * self.nz

    @cached_property
    def centers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        z = (np.arange(self.nz) + 0.5) * self.hz
        X, Y, Z = np.meshgrid(x, y, z, indexing="ij")
        return X.ravel(), Y.ravel(), Z.ravel()

    @cached_property
    def cell_index(self) -> np.ndarray:
        return np.arange(self.n_cells).reshape(self.shape)

    @cached_property
    def lateral(self) -> dict[str, np.ndarray]:
        """Lateral face data: adjacent cell, area, face-center coordinates."""
        idx = self.cell_index
        nx, ny, nz = self.shape
        X, Y, Z = (c.reshape(self.shape) for c in self.centers)
        ax, ay, _ = self.face_areas
        cells, areas, fx, fy, fz = [], [], [], [], []
        for side, sl in (
            ("x0", np.s_[0, :, :]),
            ("x1", np.s_[nx - 1, :, :]),
            ("y0", np.s_[:, 0, :]),
            ("y1", np.s_[:, ny - 1, :]),
        ):
            c = idx[sl].ravel()
            cells.append(c)
            areas.append(np.full(c.size, ax if side[0] == "x" else ay))
            px, py, pz = X[sl].ravel(), Y[sl].ravel(), Z[sl].ravel()
            if side == "x0":
                px = np.zeros_like(px)
            elif side == "x1":
                px = np.full_like(px, self.Lx)
            elif side == "y0":
                py = np.zeros_like(py)
            else:
                py = np.full_like(py, self.Ly)
            fx.append(px)
            fy.append(py)
            fz.append(pz)
        return {
            "cells": np.concatenate(cells),
            "areas": np.concatenate(areas),
            "x": np.concatenate(fx),
            "y": np.concatenate(fy),
            "z": np.concatenate(fz),
        }

    def zeros(self) -> np.ndarray:
        return np.zeros(self.n_cells)

    def full(self, value: float) -> np.ndarray:
        return np.full(self.n_cells, float(value))

    def as_3d(self, f) -> np.ndarray:
        return np.asarray(f).reshape(self.shape)

    def check_field(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.n_cells,):
            raise GridError(f"field has shape {f.shape}, grid needs ({self.n_cells},)")
        if not np.all(np.isfinite(f)):
            raise GridError("field has non-finite entries")
        return f


def build_grid(nx: int, ny: int, nz: int, Lx: float, Ly: float, ell: float) -> Grid:
    for n in (nx, ny, nz):
        if int(n) != n:
            raise GridError("cell counts must be integers")
    return Grid(int(nx), int(ny), int(nz), float(Lx), float(Ly), float(ell))


def integrate_volume(g: Grid, f) -> float:
    f = g.check_field(f)
    return g.cell_volume * math.fsum(f)


def integrate_lateral(g: Grid, t) -> float:
    t = np.asarray(t, dtype=float)
    if t.shape != (g.n_lateral,):
        raise GridError(f"lateral trace has shape {t.shape}, grid needs ({g.n_lateral},)")
    return math.fsum(g.lateral["areas"] * t)


@dataclass(frozen=True)
class FaceField:
    """One value per face, split by normal direction.

    Shapes: ``x`` (nx+1, ny, nz), ``y`` (nx, ny+1, nz), ``z`` (nx, ny, nz+1).
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def min(self) -> float:
        return float(min(self.x.min(), self.y.min(), self.z.min()))

    def max(self) -> float:
        return float(max(self.x.max(), self.y.max(), self.z.max()))


def _harmonic(a, b):
    return 2.0 * a * b / (a + b)


def face_conductivity(g: Grid, sigma_field) -> FaceField:
    """Harmonic mean on interior faces, adjacent cell value on boundary faces."""
    s = g.check_field(sigma_field)
    if np.any(s <= 0):
        raise GridError("conductivity field must be positive")
    s = g.as_3d(s)
    out = []
    for axis in range(3):
        shape = list(s.shape)
        shape[axis] += 1
        f = np.empty(shape)
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        mid = [slice(None)] * 3
        lo[axis], hi[axis], mid[axis] = slice(0, -1), slice(1, None), slice(1, -1)
        f[tuple(mid)] = _harmonic(s[tuple(lo)], s[tuple(hi)])
        first = [slice(None)] * 3
        last = [slice(None)] * 3
        first[axis], last[axis] = 0, -1
        f[tuple(first)] = s[tuple(first)]
        f[tuple(last)] = s[tuple(last)]
        out.append(f)
    return FaceField(*out)


def divergence(g: Grid, flux: FaceField) -> np.ndarray:
    """Net outflux per cell for face fluxes oriented along +x, +y, +z."""
    div = np.diff(flux.x, axis=0) + np.diff(flux.y, axis=1) + np.diff(flux.z, axis=2)
    return div.ravel()


def boundary_outflux(flux: FaceField) -> float:
    """Total outward flux through all boundary faces."""
    parts = [
        flux.x[-1].ravel(), -flux.x[0].ravel(),
        flux.y[:, -1].ravel(), -flux.y[:, 0].ravel(),
        flux.z[:, :, -1].ravel(), -flux.z[:, :, 0].ravel(),
    ]
    return math.fsum(np.concatenate(parts))
