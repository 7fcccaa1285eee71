"""Rectangular grid, boundary geometry and discrete calculus.

The domain is an axis-aligned rectangle discretized by an nx-by-ny tensor
grid.  Boundary nodes are stored as one closed loop (bottom, right, top,
left) with outward unit normals and arc-length quadrature weights.  Corner
nodes keep a unit diagonal normal but carry zero quadrature weight; their
trapezoid half-weights are folded into the neighbouring node of each edge,
which keeps the weight sum exactly equal to the perimeter while making the
flux quadrature second-order consistent on every edge.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import (
    DuplicatePointError,
    InvalidGeometryError,
    OriginDegeneracyError,
)
from .expressions import parse_expression


@dataclass(frozen=True)
class Grid2D:
    """Uniform tensor grid on the rectangle [x0, x0+Lx] x [y0, y0+Ly]."""

    nx: int
    ny: int
    origin: tuple[float, float]
    extent: tuple[float, float]

    @property
    def hx(self) -> float:
        return self.extent[0] / (self.nx - 1)

    @property
    def hy(self) -> float:
        return self.extent[1] / (self.ny - 1)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    @cached_property
    def xs(self):
        return self.origin[0] + self.hx * np.arange(self.nx)

    @cached_property
    def ys(self):
        return self.origin[1] + self.hy * np.arange(self.ny)

    @cached_property
    def mesh(self):
        """(X1, X2) coordinate arrays of shape (nx, ny)."""
        return np.meshgrid(self.xs, self.ys, indexing="ij")

    @cached_property
    def area_weights(self):
        """Tensor-trapezoid cell areas, shape (nx, ny); sums to |Omega|."""
        wx = np.full(self.nx, self.hx)
        wx[[0, -1]] = self.hx / 2
        wy = np.full(self.ny, self.hy)
        wy[[0, -1]] = self.hy / 2
        return np.outer(wx, wy)

    @cached_property
    def boundary(self):
        """Closed boundary loop: (flat node ids, normals, weights, arclength)."""
        nx, ny, hx, hy = self.nx, self.ny, self.hx, self.hy
        Lx, Ly = self.extent
        ids, normals, weights, arcs = [], [], [], []

        def push(ix, iy, nrm, w, s):
            ids.append(ix * ny + iy)
            normals.append(nrm)
            weights.append(w)
            arcs.append(s)

        inv_sqrt2 = 1.0 / np.sqrt(2.0)
        for ix in range(nx):  # bottom, left to right
            if ix == 0:
                nrm, w = (-inv_sqrt2, -inv_sqrt2), 0.0
            elif ix == nx - 1:
                nrm, w = (inv_sqrt2, -inv_sqrt2), 0.0
            else:
                w = hx * (1.5 if ix in (1, nx - 2) else 1.0)
                nrm = (0.0, -1.0)
            push(ix, 0, nrm, w, ix * hx)
        for iy in range(1, ny):  # right, bottom to top
            if iy == ny - 1:
                nrm, w = (inv_sqrt2, inv_sqrt2), 0.0
            else:
                w = hy * (1.5 if iy in (1, ny - 2) else 1.0)
                nrm = (1.0, 0.0)
            push(nx - 1, iy, nrm, w, Lx + iy * hy)
        for ix in range(nx - 2, -1, -1):  # top, right to left
            if ix == 0:
                nrm, w = (-inv_sqrt2, inv_sqrt2), 0.0
            else:
                w = hx * (1.5 if ix in (1, nx - 2) else 1.0)
                nrm = (0.0, 1.0)
            push(ix, ny - 1, nrm, w, Lx + Ly + (nx - 1 - ix) * hx)
        for iy in range(ny - 2, 0, -1):  # left, top to bottom
            w = hy * (1.5 if iy in (1, ny - 2) else 1.0)
            push(0, iy, (-1.0, 0.0), w, 2 * Lx + Ly + (ny - 1 - iy) * hy)

        return (
            np.asarray(ids, dtype=np.int64),
            np.asarray(normals, dtype=float),
            np.asarray(weights, dtype=float),
            np.asarray(arcs, dtype=float),
        )

    @property
    def n_boundary(self) -> int:
        return 2 * self.nx + 2 * self.ny - 4

    @cached_property
    def _normal_derivative_matrix(self):
        """Sparse map from nodal values to one-sided n . grad on the boundary."""
        ids, normals, _, _ = self.boundary
        ny = self.ny
        rows, cols, vals = [], [], []
        for b, (flat, nrm) in enumerate(zip(ids, normals)):
            ix, iy = divmod(int(flat), ny)
            if nrm[0] != 0.0:
                sgn = 1.0 if nrm[0] > 0 else -1.0
                step = -1 if nrm[0] > 0 else 1
                for k, c in zip((0, step, 2 * step), (3.0, -4.0, 1.0)):
                    rows.append(b)
                    cols.append((ix + k) * ny + iy)
                    vals.append(nrm[0] * sgn * c / (2 * self.hx))
            if nrm[1] != 0.0:
                sgn = 1.0 if nrm[1] > 0 else -1.0
                step = -1 if nrm[1] > 0 else 1
                for k, c in zip((0, step, 2 * step), (3.0, -4.0, 1.0)):
                    rows.append(b)
                    cols.append(ix * ny + iy + k)
                    vals.append(nrm[1] * sgn * c / (2 * self.hy))
        return sp.csr_matrix(
            (vals, (rows, cols)), shape=(self.n_boundary, self.n_nodes)
        )

    def contains(self, points, margin: float = 0.0):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x0, y0 = self.origin
        x1 = x0 + self.extent[0]
        y1 = y0 + self.extent[1]
        return (
            (pts[:, 0] >= x0 + margin)
            & (pts[:, 0] <= x1 - margin)
            & (pts[:, 1] >= y0 + margin)
            & (pts[:, 1] <= y1 - margin)
        )

    def max_radius(self) -> float:
        """R0 = max |x| over the closed rectangle (attained at a corner)."""
        x0, y0 = self.origin
        x1 = x0 + self.extent[0]
        y1 = y0 + self.extent[1]
        corners = np.array([[x0, y0], [x0, y1], [x1, y0], [x1, y1]])
        return float(np.max(np.hypot(corners[:, 0], corners[:, 1])))


@dataclass
class ScalarField:
    """Nodal samples of a scalar function; complex-valued in general."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (self.grid.nx, self.grid.ny):
            if self.values.size == self.grid.n_nodes:
                self.values = self.values.reshape(self.grid.nx, self.grid.ny)
            else:
                raise InvalidGeometryError(
                    f"field has {self.values.size} values, grid has {self.grid.n_nodes} nodes"
                )

    @classmethod
    def from_callable(cls, grid: Grid2D, fn) -> "ScalarField":
        X1, X2 = grid.mesh
        return cls(grid, fn(X1, X2))

    @classmethod
    def constant(cls, grid: Grid2D, value) -> "ScalarField":
        dtype = complex if isinstance(value, complex) else float
        return cls(grid, np.full((grid.nx, grid.ny), value, dtype=dtype))

    @property
    def real(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.real.copy())


def build_grid(nx: int, ny: int, rect) -> Grid2D:
    """Grid on the rectangle rect = (x0, y0, x1, y1)."""
    x0, y0, x1, y1 = (float(v) for v in rect)
    if nx < 8 or ny < 8:
        raise InvalidGeometryError(f"need nx, ny >= 8, got {nx} x {ny}")
    if not (x1 > x0 and y1 > y0):
        raise InvalidGeometryError(f"degenerate rectangle {rect}")
    return Grid2D(nx=int(nx), ny=int(ny), origin=(x0, y0), extent=(x1 - x0, y1 - y0))


def extract_trace(f: ScalarField) -> np.ndarray:
    """Field values along the boundary loop."""
    ids = f.grid.boundary[0]
    return f.values.reshape(-1)[ids]


def boundary_integral(grid: Grid2D, trace) -> complex:
    """Arc-length quadrature sum(g_i * w_i) over the boundary loop."""
    trace = np.asarray(trace)
    weights = grid.boundary[2]
    if trace.shape[0] != weights.shape[0]:
        raise InvalidGeometryError(
            f"trace length {trace.shape[0]} != boundary node count {weights.shape[0]}"
        )
    return complex(np.sum(trace * weights))


def boundary_l2(grid: Grid2D, trace) -> float:
    """Discrete L2(boundary) norm of a trace."""
    w = grid.boundary[2]
    return float(np.sqrt(np.sum(w * np.abs(np.asarray(trace)) ** 2)))


def normal_derivative(f: ScalarField) -> np.ndarray:
    """One-sided second-order n . grad f at every boundary node."""
    return f.grid._normal_derivative_matrix @ f.values.reshape(-1)


def area_integral(f: ScalarField) -> complex:
    return complex(np.sum(f.grid.area_weights * f.values))


def l2_norm(f: ScalarField) -> float:
    return float(np.sqrt(np.sum(f.grid.area_weights * np.abs(f.values) ** 2)))


def _first_derivative(values, h, axis):
    out = np.gradient(values, h, axis=axis, edge_order=2)
    return out


def _second_derivative(values, h, axis):
    """Central second difference, one-sided (2nd order) at the two ends."""
    v = np.moveaxis(values, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2
    out[0] = (2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]) / h**2
    out[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / h**2
    return np.moveaxis(out, 0, axis)


def laplacian_nodal(values, hx, hy):
    """5-point Laplacian with one-sided second differences on the rim."""
    return _second_derivative(values, hx, 0) + _second_derivative(values, hy, 1)


def h1_norm(f: ScalarField) -> float:
    """Discrete H1 norm: L2 of the field and of both first differences."""
    g = f.grid
    fx = _first_derivative(f.values, g.hx, 0)
    fy = _first_derivative(f.values, g.hy, 1)
    w = g.area_weights
    return float(
        np.sqrt(np.sum(w * (np.abs(f.values) ** 2 + np.abs(fx) ** 2 + np.abs(fy) ** 2)))
    )


def sobolev_surrogate(f: ScalarField, p: int = 3) -> float:
    """l2 surrogate for the H^p norm: all mixed differences up to order p."""
    g = f.grid
    w = g.area_weights
    total = 0.0
    d = {(0, 0): f.values}
    for order in range(p + 1):
        for ax in range(order + 1):
            ay = order - ax
            if (ax, ay) not in d:
                if ax > 0:
                    d[(ax, ay)] = _first_derivative(d[(ax - 1, ay)], g.hx, 0)
                else:
                    d[(ax, ay)] = _first_derivative(d[(ax, ay - 1)], g.hy, 1)
            total += float(np.sum(w * np.abs(d[(ax, ay)]) ** 2))
    return float(np.sqrt(total))


def compute_qtilde_values(kappa_vals, q_vals, hx, hy):
    """q / kappa + Lap(sqrt kappa) / sqrt kappa on nodal arrays."""
    if np.any(np.asarray(kappa_vals).real <= 0):
        raise InvalidGeometryError("kappa must be strictly positive everywhere")
    rk = np.sqrt(kappa_vals)
    return q_vals / kappa_vals + laplacian_nodal(rk, hx, hy) / rk


def compute_qtilde(kappa: ScalarField, q: ScalarField) -> ScalarField:
    """Transformed potential of the conjugated operator, q/k + Lap(sqrt k)/sqrt k."""
    if kappa.grid is not q.grid and kappa.grid != q.grid:
        raise InvalidGeometryError("kappa and q live on different grids")
    if np.any(kappa.values.real <= 0):
        raise InvalidGeometryError("kappa must be strictly positive everywhere")
    g = kappa.grid
    vals = compute_qtilde_values(kappa.values, q.values, g.hx, g.hy)
    return ScalarField(g, vals)


def separation_params(points, grid: Grid2D):
    """(eta1, eta2, R0): min pair distance, min |s|, max |x| over the domain.

    eta1 is +inf for a single point.  Points at the coordinate origin are
    rejected because the growth vector of the oscillatory construction is
    proportional to the location itself.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 1:
        raise InvalidGeometryError("need at least one point")
    if not np.all(grid.contains(pts)):
        raise InvalidGeometryError("points must lie inside the domain")
    radii = np.hypot(pts[:, 0], pts[:, 1])
    if np.any(radii == 0.0):
        raise OriginDegeneracyError(
            "a point sits at the coordinate origin; shift the domain rectangle"
        )
    eta2 = float(np.min(radii))
    if pts.shape[0] == 1:
        eta1 = np.inf
    else:
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        iu = np.triu_indices(pts.shape[0], k=1)
        eta1 = float(np.min(dist[iu]))
        if eta1 == 0.0:
            raise DuplicatePointError("coincident points in the collection")
    return eta1, eta2, grid.max_radius()


@dataclass
class CoefficientSet:
    """Diffusivity and reaction fields plus the derived transformed potential.

    Coefficients are carried both as nodal fields and as the closed-form
    callables they were sampled from, so that the oversized periodic box of
    the correction solver can evaluate them outside the physical domain.
    """

    grid: Grid2D
    kappa: ScalarField
    q: ScalarField
    qtilde: ScalarField
    kappa_fn: object
    q_fn: object
    p: int = 3
    kappa_c0: float = field(init=False)
    qtilde_hp: float = field(init=False)

    def __post_init__(self):
        self.kappa_c0 = float(np.max(np.abs(self.kappa.values)))
        self.qtilde_hp = sobolev_surrogate(self.qtilde, self.p)

    @classmethod
    def from_callables(cls, grid: Grid2D, kappa_fn, q_fn, p: int = 3) -> "CoefficientSet":
        kappa = ScalarField.from_callable(grid, kappa_fn)
        q = ScalarField.from_callable(grid, q_fn)
        if np.any(kappa.values.real <= 0):
            raise InvalidGeometryError("kappa must be strictly positive on the closed domain")
        return cls(
            grid=grid,
            kappa=kappa,
            q=q,
            qtilde=compute_qtilde(kappa, q),
            kappa_fn=kappa_fn,
            q_fn=q_fn,
            p=p,
        )

    @classmethod
    def from_expressions(cls, grid: Grid2D, kappa_expr: str, q_expr: str, p: int = 3):
        return cls.from_callables(
            grid, parse_expression(kappa_expr), parse_expression(q_expr), p=p
        )

    @classmethod
    def constant(cls, grid: Grid2D, kappa: float = 1.0, q: float = 0.0, p: int = 3):
        return cls.from_callables(
            grid,
            lambda x1, x2, k=kappa: np.full_like(np.asarray(x1, dtype=float), k),
            lambda x1, x2, qq=q: np.full_like(np.asarray(x1, dtype=float), qq),
            p=p,
        )


def bilinear_sample(f: ScalarField, points) -> np.ndarray:
    """Bilinear interpolation of a nodal field at arbitrary interior points."""
    g = f.grid
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tx = (pts[:, 0] - g.origin[0]) / g.hx
    ty = (pts[:, 1] - g.origin[1]) / g.hy
    ix = np.clip(np.floor(tx).astype(int), 0, g.nx - 2)
    iy = np.clip(np.floor(ty).astype(int), 0, g.ny - 2)
    ax = tx - ix
    ay = ty - iy
    v = f.values
    return (
        v[ix, iy] * (1 - ax) * (1 - ay)
        + v[ix + 1, iy] * ax * (1 - ay)
        + v[ix, iy + 1] * (1 - ax) * ay
        + v[ix + 1, iy + 1] * ax * ay
    )
