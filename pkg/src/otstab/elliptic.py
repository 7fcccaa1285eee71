"""Forward solver for the stationary point-source problem and the boundary
functionals built on it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import IllPosednessError, InvalidGeometryError
from .grid import (
    CoefficientSet,
    Grid2D,
    ScalarField,
    bilinear_sample,
    boundary_integral,
    extract_trace,
    normal_derivative,
)
from .measures import AtomicMeasure
from .operators import build_stiffness, hat_load, lumped_weights

Q_MIN = 1e-6


@dataclass
class EllipticSolution:
    """Discrete solution with its boundary trace and mass diagnostic."""

    u: ScalarField
    boundary_trace: np.ndarray
    mass_check: float  # integral of q u, equals total source mass up to solver tol
    iterations: int
    residual: float


def solve_forward(coeffs: CoefficientSet, mu: AtomicMeasure, grid: Grid2D | None = None,
                  tol: float = 1e-10) -> EllipticSolution:
    """Conjugate-gradient solve of -div(kappa grad u) + q u = sum a_j delta_j.

    Homogeneous Neumann data enter through the zero-flux assembly; the
    point loads are bilinear hats of unit discrete mass, which keeps the
    divergence-theorem identity integral(q u) = 1 exact at the discrete
    level.
    """
    grid = grid or coeffs.grid
    if grid != coeffs.grid:
        raise InvalidGeometryError("coefficients were sampled on a different grid")
    qv = coeffs.q.values.reshape(-1).real
    if np.min(qv) < Q_MIN:
        raise IllPosednessError(
            f"q must stay above {Q_MIN:g}; the pure-Neumann problem with unit "
            "source mass has no solution otherwise"
        )
    W = lumped_weights(grid)
    K = build_stiffness(grid, coeffs.kappa.values.real)
    A = K + sp.diags(W * qv)

    b = np.zeros(grid.n_nodes)
    for j in range(len(mu)):
        b += hat_load(grid, mu.locations[j], mu.amplitudes[j])

    inv_diag = 1.0 / A.diagonal()
    M = spla.LinearOperator(A.shape, matvec=lambda x: inv_diag * x)
    iters = 0

    def count(_):
        nonlocal iters
        iters += 1

    u, info = spla.cg(A, b, rtol=tol, atol=0.0, maxiter=20000, M=M, callback=count)
    if info != 0:
        raise IllPosednessError(f"conjugate gradient failed to converge (info={info})")
    resid = float(np.linalg.norm(A @ u - b) / np.linalg.norm(b))

    field = ScalarField(grid, u.reshape(grid.nx, grid.ny))
    mass = float(np.sum(W * qv * u))
    return EllipticSolution(
        u=field,
        boundary_trace=extract_trace(field),
        mass_check=mass,
        iterations=iters,
        residual=resid,
    )


def functional_R(u_trace, v: ScalarField, coeffs: CoefficientSet, grid: Grid2D | None = None):
    """Boundary pairing integral of kappa * dv/dn * u over the boundary."""
    grid = grid or v.grid
    kappa_trace = extract_trace(coeffs.kappa).real
    dv = normal_derivative(v)
    return boundary_integral(grid, kappa_trace * dv * np.asarray(u_trace))


def check_reciprocity(v: ScalarField, mu: AtomicMeasure, coeffs: CoefficientSet,
                      grid: Grid2D | None = None) -> float:
    """|R_1(v) - sum a_j v(s_j)|: the duality identity residual."""
    grid = grid or coeffs.grid
    sol = solve_forward(coeffs, mu, grid)
    lhs = functional_R(sol.boundary_trace, v, coeffs, grid)
    rhs = complex(np.sum(mu.amplitudes * bilinear_sample(v, mu.locations)))
    return float(abs(lhs - rhs))
