"""Implicit step of the heat equation in the Kirchhoff variable.

For the cell vector ``u`` (with ``theta = gamma(u)``) one step solves

    vol (gamma(u+) - theta) / dt + L u+ + P^T A (beta(u+_P) - h_G) = vol S

where ``L`` is the unit-coefficient two-point Laplacian with insulated bases,
``P`` picks the cell adjacent to each lateral face and ``A`` holds the
lateral face areas. Every row sum of ``L`` vanishes, so summing the residual
over cells gives the discrete energy balance exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .elliptic import EllipticSolution
from .grid import Grid
from .laws import MaterialLaws, Truncation
from .linalg import LinearSolverError, assemble, pcg, transmissibilities

__all__ = [
    "HeatState",
    "HeatStepConfig",
    "HeatStepError",
    "gradient_squared",
    "heat_state",
    "heat_step",
    "joule_source",
    "mass_balance_residual",
]

DAMPING_HALVINGS = 8


class HeatStepError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = list(history)


@dataclass(frozen=True)
class HeatStepConfig:
    dt: float
    tol_newton: float = 1e-10
    max_newton: int = 30
    max_halvings: int = 6
    tol_cg: float = 1e-13

    def __post_init__(self):
        if not (self.dt > 0 and self.tol_newton > 0 and self.tol_cg > 0):
            raise ValueError("dt and tolerances must be positive")
        if self.max_newton < 1 or self.max_halvings < 0:
            raise ValueError("max_newton must be >= 1 and max_halvings >= 0")


@dataclass
class HeatState:
    theta: np.ndarray
    u: np.ndarray
    t: float
    newton_iterations: int = 0
    substeps: int = 1
    history: list = field(default_factory=list)


def heat_state(laws: MaterialLaws, theta, t: float = 0.0) -> HeatState:
    theta = np.asarray(theta, dtype=float)
    return HeatState(theta.copy(), laws.kirchhoff(theta), t)


def gradient_squared(sol: EllipticSolution) -> np.ndarray:
    """Cellwise ``|grad phi|^2`` from one-sided face quotients.

    On each face the flux density ``q`` is shared by both neighbours; the
    half-cell quotient inside a cell is ``q / sigma_cell``. Per direction the
    squares of the two faces are averaged, then the directions are summed.
    """
    g = sol.grid
    G = sol.face_gradients()
    fs = sol.unit.face_sigma
    sig = g.as_3d(sol.unit.sigma_cell)
    total = np.zeros(g.shape)
    for qf, axis in ((fs.x * G.x, 0), (fs.y * G.y, 1), (fs.z * G.z, 2)):
        sq = qf**2
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis], hi[axis] = slice(0, -1), slice(1, None)
        total += 0.5 * (sq[tuple(lo)] + sq[tuple(hi)])
    return (total / sig**2).ravel()


def joule_source(
    laws: MaterialLaws, theta_delay, sol: EllipticSolution, trunc: Truncation, g: Grid
) -> np.ndarray:
    """Truncated Joule heating ``sigma(theta_delay) T_tau(|grad phi|^2)``."""
    if sol.grid != g:
        raise ValueError("elliptic solution lives on a different grid")
    sig = laws.sigma(g.check_field(theta_delay))
    return sig * trunc(gradient_squared(sol))


@lru_cache(maxsize=16)
def _heat_operator(g: Grid) -> sp.csr_matrix:
    return assemble(g, transmissibilities(g, None, dirichlet_z=False))


def _lateral_sum(g: Grid, values) -> np.ndarray:
    return np.bincount(g.lateral["cells"], weights=values, minlength=g.n_cells)


def _mass_scale(g: Grid, theta, source, h_gamma, dt) -> float:
    lat = g.lateral["areas"]
    return max(
        1.0,
        g.cell_volume * math.fsum(np.abs(theta)),
        dt * g.cell_volume * math.fsum(np.abs(source)),
        dt * math.fsum(lat * np.abs(h_gamma)),
    )


def _residual(g, laws, L, theta_old, source, h_gamma, dt, u):
    lat = g.lateral
    vol = g.cell_volume
    exch = lat["areas"] * (laws.beta(u[lat["cells"]]) - h_gamma)
    return vol * (laws.kirchhoff_inverse(u) - theta_old) / dt + L @ u + _lateral_sum(g, exch) - vol * source


def _newton(g, laws, theta_old, u0, source, h_gamma, dt, cfg):
    L = _heat_operator(g)
    lat = g.lateral
    vol = g.cell_volume
    target = cfg.tol_newton * _mass_scale(g, theta_old, source, h_gamma, dt) / dt
    u = u0.copy()
    F = _residual(g, laws, L, theta_old, source, h_gamma, dt, u)
    fn = float(np.sum(np.abs(F)))
    history = [fn]
    for it in range(cfg.max_newton + 1):
        if fn <= target:
            return u, it, history
        if it == cfg.max_newton:
            break
        d = vol * laws.gamma_prime(u) / dt
        d += _lateral_sum(g, lat["areas"] * laws.beta_prime(u[lat["cells"]]))
        J = L + sp.diags(d)
        try:
            delta = pcg(J.tocsr(), -F, rtol=cfg.tol_cg).x
        except LinearSolverError:
            break
        step = 1.0
        for _ in range(DAMPING_HALVINGS + 1):
            trial = u + step * delta
            Ft = _residual(g, laws, L, theta_old, source, h_gamma, dt, trial)
            ftn = float(np.sum(np.abs(Ft)))
            if ftn < fn or ftn <= target:
                break
            step *= 0.5
        else:
            break
        u, F, fn = trial, Ft, ftn
        history.append(fn)
    return None, cfg.max_newton, history


def heat_step(
    laws: MaterialLaws,
    g: Grid,
    state: HeatState,
    source,
    h_gamma,
    cfg: HeatStepConfig,
) -> HeatState:
    """Advance ``state`` by ``cfg.dt``; halves dt on Newton failure.

    ``source`` is the volumetric heat source per cell and ``h_gamma`` the
    exchange data ``h(theta_Gamma)`` per lateral face, both held fixed over
    the step.
    """
    source = g.check_field(source)
    h_gamma = np.asarray(h_gamma, dtype=float)
    if h_gamma.shape != (g.n_lateral,) or not np.all(np.isfinite(h_gamma)):
        raise ValueError(f"h_gamma must be a finite array of length {g.n_lateral}")
    histories = []
    for level in range(cfg.max_halvings + 1):
        n_sub = 2**level
        dt = cfg.dt / n_sub
        theta, u = state.theta, state.u
        iters = 0
        for _ in range(n_sub):
            u_new, it, hist = _newton(g, laws, theta, u, source, h_gamma, dt, cfg)
            histories.append(hist)
            if u_new is None:
                break
            iters += it
            u, theta = u_new, laws.kirchhoff_inverse(u_new)
        else:
            return HeatState(theta, u, state.t + cfg.dt, iters, n_sub, histories)
    raise HeatStepError(
        f"Newton failed at t = {state.t!r} after {cfg.max_halvings} dt halvings", histories
    )


def mass_balance_residual(
    g: Grid, before: HeatState, after: HeatState, source, h_gamma, laws: MaterialLaws, dt: float
) -> float:
    """Scaled defect of the cell-summed balance ``int theta+ - int theta = dt (int S - boundary loss)``."""
    lat = g.lateral
    loss = math.fsum(lat["areas"] * (laws.beta(after.u[lat["cells"]]) - h_gamma))
    vol = g.cell_volume
    gain = vol * math.fsum(source)
    change = vol * math.fsum(after.theta - before.theta)
    return abs(change - dt * (gain - loss)) / _mass_scale(g, before.theta, source, h_gamma, dt)
