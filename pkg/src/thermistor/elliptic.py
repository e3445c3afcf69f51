"""Frozen-coefficient potential problem and the current integral.

Solves ``div(sigma grad phi) = 0`` in the cylinder with ``phi = 0`` on the
bottom base, ``phi = V`` on the top base and no lateral current. The problem
is linear in ``V``, so one solve with ``V = 1`` (the unit response) serves
every voltage: ``phi = V * unit_phi`` and ``I_R = V * I_hat``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import FaceField, Grid, face_conductivity
from .laws import MaterialLaws
from .linalg import assemble, pcg, transmissibilities

__all__ = [
    "EllipticSolution",
    "EnergyViolation",
    "UnitResponse",
    "check_elliptic_energy",
    "current_integral",
    "energy_bounds",
    "face_gradients",
    "h1_norm",
    "solve_potential",
    "solve_unit",
]

ENERGY_SLACK = 1e-10


class EnergyViolation(AssertionError):
    def __init__(self, name, lhs, rhs):
        super().__init__(f"{name}: {lhs!r} > {rhs!r}")
        self.name, self.lhs, self.rhs = name, lhs, rhs


@dataclass(frozen=True)
class UnitResponse:
    """Potential for ``V = 1`` and its derived per-unit-voltage quantities."""

    grid: Grid
    sigma_cell: np.ndarray
    face_sigma: FaceField
    trans: FaceField
    unit_phi: np.ndarray
    I_hat: float
    profile: np.ndarray
    residual: float
    iterations: int

    def scaled(self, V: float) -> "EllipticSolution":
        return EllipticSolution(self, float(V))


@dataclass(frozen=True)
class EllipticSolution:
    unit: UnitResponse
    V: float

    @property
    def grid(self) -> Grid:
        return self.unit.grid

    @property
    def phi(self) -> np.ndarray:
        return self.V * self.unit.unit_phi

    @property
    def unit_psi(self) -> np.ndarray:
        g = self.grid
        return self.unit.unit_phi - g.centers[2] / g.ell

    @property
    def psi(self) -> np.ndarray:
        return self.phi - g_z_over_ell(self.grid) * self.V

    @property
    def I_R(self) -> float:
        return self.V * self.unit.I_hat

    @property
    def ir_profile(self) -> np.ndarray:
        return self.V * self.unit.profile

    @property
    def solver_residual(self) -> float:
        return self.unit.residual

    @property
    def energy_phi(self) -> float:
        return self.V**2 * _energy(self.grid, self.unit, self.unit.unit_phi, top=1.0)

    @property
    def energy_psi(self) -> float:
        return self.V**2 * _energy(self.grid, self.unit, self.unit_psi, top=0.0)

    def face_gradients(self) -> FaceField:
        return face_gradients(self.grid, self.phi, self.V)


def g_z_over_ell(g: Grid) -> np.ndarray:
    return g.centers[2] / g.ell


def face_gradients(g: Grid, u, top: float, bottom: float = 0.0) -> FaceField:
    """Two-point difference quotients on every face.

    Base faces use the half-cell distance to the Dirichlet values ``bottom``
    and ``top``; lateral faces carry zero (no-flux).
    """
    u3 = g.as_3d(u)
    gx = np.zeros((g.nx + 1, g.ny, g.nz))
    gy = np.zeros((g.nx, g.ny + 1, g.nz))
    gz = np.empty((g.nx, g.ny, g.nz + 1))
    gx[1:-1] = np.diff(u3, axis=0) / g.hx
    gy[:, 1:-1] = np.diff(u3, axis=1) / g.hy
    gz[:, :, 1:-1] = np.diff(u3, axis=2) / g.hz
    gz[:, :, 0] = (u3[:, :, 0] - bottom) / (0.5 * g.hz)
    gz[:, :, -1] = (top - u3[:, :, -1]) / (0.5 * g.hz)
    return FaceField(gx, gy, gz)


def _energy(g: Grid, unit: UnitResponse, u, top: float) -> float:
    """Discrete Dirichlet energy  sum_f T_f (jump_f)^2 = int sigma |grad u|^2."""
    G = face_gradients(g, u, top)
    T = unit.trans
    ax, ay, az = g.face_areas
    dx, dy = g.hx, g.hy
    dz = np.full(g.nz + 1, g.hz)
    dz[0] = dz[-1] = 0.5 * g.hz
    # T * (G d)^2 with T = sigma A / d
    parts = (
        (T.x * (G.x * dx) ** 2).ravel(),
        (T.y * (G.y * dy) ** 2).ravel(),
        (T.z * (G.z * dz) ** 2).ravel(),
    )
    return math.fsum(np.concatenate(parts))


def solve_unit(g: Grid, sigma_field, tol_lin: float = 1e-10, maxiter=None) -> UnitResponse:
    """Unit-voltage potential for a given cellwise conductivity."""
    if not tol_lin > 0:
        raise ValueError("tol_lin must be positive")
    face_sigma = face_conductivity(g, sigma_field)
    T = transmissibilities(g, face_sigma, dirichlet_z=True)
    A = assemble(g, T)
    b = np.zeros(g.shape)
    b[:, :, -1] = T.z[:, :, -1]
    t_bottom = T.z[:, :, 0].ravel()

    def flux_certificate(x, r):
        # layer fluxes differ by the layer sums of the residual
        drift = np.concatenate(([0.0], np.cumsum(g.as_3d(r).sum(axis=(0, 1)))))
        i_est = abs(t_bottom @ g.as_3d(x)[:, :, 0].ravel())
        return np.ptp(drift) <= tol_lin * i_est

    res = pcg(
        A, b.ravel(), x0=g_z_over_ell(g), rtol=tol_lin, maxiter=maxiter, accept=flux_certificate
    )
    phi = res.x
    profile = _layer_fluxes(g, face_sigma, phi, 1.0)
    return UnitResponse(
        grid=g,
        sigma_cell=np.asarray(sigma_field, dtype=float),
        face_sigma=face_sigma,
        trans=T,
        unit_phi=phi,
        I_hat=float(profile.mean()),
        profile=profile,
        residual=res.residual,
        iterations=res.iterations,
    )


def _layer_fluxes(g: Grid, face_sigma: FaceField, phi, V: float) -> np.ndarray:
    G = face_gradients(g, phi, V)
    az = g.face_areas[2]
    q = face_sigma.z * G.z * az
    return np.array([math.fsum(q[:, :, k].ravel()) for k in range(g.nz + 1)])


def solve_potential(g: Grid, laws: MaterialLaws, theta_delay, V: float, tol_lin: float = 1e-10):
    """Potential for conductivity ``sigma(theta_delay)`` and top voltage ``V``."""
    theta_delay = g.check_field(theta_delay)
    return solve_unit(g, laws.sigma(theta_delay), tol_lin).scaled(V)


def current_integral(g: Grid, sol: EllipticSolution) -> tuple[float, np.ndarray]:
    """Cross-sectional current per horizontal face layer and its mean."""
    return sol.I_R, sol.ir_profile


def energy_bounds(sol: EllipticSolution, laws: MaterialLaws) -> tuple[float, float]:
    """Right-hand sides of the psi-energy and phi-energy bounds."""
    g = sol.grid
    az = g.face_areas[2]
    dz = np.full(g.nz + 1, g.hz)
    dz[0] = dz[-1] = 0.5 * g.hz
    vert = math.fsum((sol.unit.face_sigma.z * az * dz).ravel())
    psi_bound = vert * (sol.V / g.ell) ** 2
    phi_bound = 4.0 * laws.sigma_hi * g.volume / g.ell**2 * sol.V**2
    return psi_bound, phi_bound


def h1_norm(sol: EllipticSolution) -> float:
    """Discrete ``H^1`` norm of the potential (boundary values included)."""
    g = sol.grid
    G = sol.face_gradients()
    ax, ay, az = g.face_areas
    dz = np.full(g.nz + 1, g.hz)
    dz[0] = dz[-1] = 0.5 * g.hz
    grad = math.fsum(
        np.concatenate(
            ((G.x**2 * ax * g.hx).ravel(), (G.y**2 * ay * g.hy).ravel(), (G.z**2 * az * dz).ravel())
        )
    )
    return math.sqrt(g.cell_volume * math.fsum(sol.phi**2) + grad)


def check_elliptic_energy(sol: EllipticSolution, laws: MaterialLaws, V=None, g=None) -> dict:
    """Assert the psi- and phi-energy bounds with relative slack 1e-10."""
    psi_bound, phi_bound = energy_bounds(sol, laws)
    e_psi, e_phi = sol.energy_psi, sol.energy_phi
    if e_psi > psi_bound * (1 + ENERGY_SLACK):
        raise EnergyViolation("psi energy bound", e_psi, psi_bound)
    if e_phi > phi_bound * (1 + ENERGY_SLACK):
        raise EnergyViolation("phi energy bound", e_phi, phi_bound)
    return {
        "energy_psi": e_psi,
        "psi_bound": psi_bound,
        "energy_phi": e_phi,
        "phi_bound": phi_bound,
    }
