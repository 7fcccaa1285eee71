"""Conservative finite-difference operators on the tensor grid.

The diffusion operator is assembled in flux form with face-averaged
coefficients and zero-flux (homogeneous Neumann) boundary faces, so it is
symmetric, has zero row sums, and satisfies the discrete divergence theorem
exactly.  Point loads are bilinear hats of unit discrete mass.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import MarginError
from .grid import Grid2D


def lumped_weights(grid: Grid2D) -> np.ndarray:
    """Flat vector of tensor-trapezoid cell areas."""
    return grid.area_weights.reshape(-1)


def build_stiffness(grid: Grid2D, kappa_vals) -> sp.csr_matrix:
    """SPD stiffness for -div(kappa grad .) with zero boundary flux."""
    nx, ny = grid.nx, grid.ny
    hx, hy = grid.hx, grid.hy
    kap = np.asarray(kappa_vals, dtype=float).reshape(nx, ny)

    wx = np.full(nx, hx)
    wx[[0, -1]] = hx / 2
    wy = np.full(ny, hy)
    wy[[0, -1]] = hy / 2

    rows, cols, vals = [], [], []

    def flat(ix, iy):
        return ix * ny + iy

    # x-direction faces between (i, j) and (i+1, j): conductance kf * wy0 / hx
    kf = 0.5 * (kap[:-1, :] + kap[1:, :]) * (wy[None, :] / hx)
    I, J = np.meshgrid(np.arange(nx - 1), np.arange(ny), indexing="ij")
    p = (I * ny + J).reshape(-1)
    qn = ((I + 1) * ny + J).reshape(-1)
    g = kf.reshape(-1)
    rows += [p, qn, p, qn]
    cols += [p, qn, qn, p]
    vals += [g, g, -g, -g]

    # y-direction faces between (i, j) and (i, j+1)
    kf = 0.5 * (kap[:, :-1] + kap[:, 1:]) * (wx[:, None] / hy)
    I, J = np.meshgrid(np.arange(nx), np.arange(ny - 1), indexing="ij")
    p = (I * ny + J).reshape(-1)
    qn = (I * ny + J + 1).reshape(-1)
    g = kf.reshape(-1)
    rows += [p, qn, p, qn]
    cols += [p, qn, qn, p]
    vals += [g, g, -g, -g]

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return sp.csr_matrix((vals, (rows, cols)), shape=(grid.n_nodes, grid.n_nodes))


def hat_load(grid: Grid2D, point, amplitude: float = 1.0, min_margin_cells: float = 2.0):
    """Bilinear hat vector of discrete mass ``amplitude`` at the 4 cell nodes."""
    x, y = float(point[0]), float(point[1])
    gx = (x - grid.origin[0]) / grid.hx
    gy = (y - grid.origin[1]) / grid.hy
    if (
        gx < min_margin_cells
        or gy < min_margin_cells
        or gx > grid.nx - 1 - min_margin_cells
        or gy > grid.ny - 1 - min_margin_cells
    ):
        raise MarginError(
            f"atom at ({x:.4g}, {y:.4g}) is within {min_margin_cells} cells of the boundary"
        )
    ix = min(int(np.floor(gx)), grid.nx - 2)
    iy = min(int(np.floor(gy)), grid.ny - 2)
    ax = gx - ix
    ay = gy - iy
    b = np.zeros(grid.n_nodes)
    ny = grid.ny
    b[ix * ny + iy] = amplitude * (1 - ax) * (1 - ay)
    b[(ix + 1) * ny + iy] = amplitude * ax * (1 - ay)
    b[ix * ny + iy + 1] = amplitude * (1 - ax) * ay
    b[(ix + 1) * ny + iy + 1] = amplitude * ax * ay
    return b


def boundary_load_matrix(grid: Grid2D) -> sp.csr_matrix:
    """Maps boundary flux values (loop order) to the weak-form load vector."""
    ids, _, weights, _ = grid.boundary
    nb = ids.size
    return sp.csr_matrix(
        (weights, (ids, np.arange(nb))), shape=(grid.n_nodes, nb)
    )
