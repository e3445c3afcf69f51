"""Sparse assembly of two-point-flux operators and a Jacobi-preconditioned CG."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import FaceField, Grid


class LinearSolverError(RuntimeError):
    def __init__(self, message, residual, iterations):
        super().__init__(f"{message} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass
class CGResult:
    x: np.ndarray
    residual: float
    iterations: int


def pcg(A, b, x0=None, rtol=1e-10, maxiter=None, atol=0.0, accept=None) -> CGResult:
    """Conjugate gradients with diagonal preconditioning.

    Stops when ``||b - A x|| <= max(rtol * ||b||, atol)`` and, if given,
    ``accept(x, r)`` holds. The reported residual is the recomputed true
    relative residual.
    """
    n = b.size
    maxiter = maxiter or max(10 * n, 1000)
    d = A.diagonal()
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return CGResult(np.zeros(n), 0.0, 0)
    target = max(rtol * bnorm, atol)
    r = b - A @ x
    z = r / d
    p = z.copy()
    rz = r @ z
    it = 0
    while np.linalg.norm(r) > target or (accept is not None and not accept(x, r)):
        if it >= maxiter:
            res = np.linalg.norm(b - A @ x) / bnorm
            raise LinearSolverError("CG iteration cap exceeded", res, it)
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        z = r / d
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
    res = np.linalg.norm(b - A @ x) / bnorm
    return CGResult(x, float(res), it)


def transmissibilities(g: Grid, coef: FaceField | None, dirichlet_z: bool) -> FaceField:
    """Face conductances ``coef * area / distance``; lateral faces carry zero.

    Base faces carry the half-cell conductance when ``dirichlet_z`` and zero
    otherwise (insulated).
    """
    ax, ay, az = g.face_areas
    if coef is None:
        cx = np.ones((g.nx + 1, g.ny, g.nz))
        cy = np.ones((g.nx, g.ny + 1, g.nz))
        cz = np.ones((g.nx, g.ny, g.nz + 1))
    else:
        cx, cy, cz = coef.x, coef.y, coef.z
    tx = cx * (ax / g.hx)
    ty = cy * (ay / g.hy)
    tz = cz * (az / g.hz)
    tx[0] = tx[-1] = 0.0
    ty[:, 0] = ty[:, -1] = 0.0
    if dirichlet_z:
        tz[:, :, 0] *= 2.0
        tz[:, :, -1] *= 2.0
    else:
        tz[:, :, 0] = tz[:, :, -1] = 0.0
    return FaceField(tx, ty, tz)


def assemble(g: Grid, t: FaceField) -> sp.csr_matrix:
    """Symmetric M-matrix of the two-point flux operator with conductances ``t``.

    Boundary-face conductances enter the diagonal only (Dirichlet coupling).
    """
    idx = g.cell_index
    rows, cols, vals = [], [], []
    diag = np.zeros(g.shape)
    for axis, tf in enumerate((t.x, t.y, t.z)):
        inner = [slice(None)] * 3
        inner[axis] = slice(1, -1)
        ti = tf[tuple(inner)]
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis], hi[axis] = slice(0, -1), slice(1, None)
        a, b = idx[tuple(lo)].ravel(), idx[tuple(hi)].ravel()
        w = ti.ravel()
        rows += [a, b]
        cols += [b, a]
        vals += [-w, -w]
        # each cell collects its two faces along this axis
        diag += tf[tuple(lo)] + tf[tuple(hi)]
    n = g.n_cells
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag.ravel())
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return A.tocsr()
