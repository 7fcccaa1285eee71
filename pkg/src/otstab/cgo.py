"""Complex-geometric-optics test functions and interpolation bases.

Solutions of the conjugated equation (Lap + qt) w = 0 are built as
w = exp(rho . x) (1 + psi) with rho . rho = 0.  The correction psi solves
Lap psi + 2 rho . grad psi = -qt (1 + psi), realized on a periodic box of
twice the domain extent with the potential smoothly cut off, a Fourier
multiplier for the conjugated Laplacian (frequency lattice shifted by half
a cell so the symbol never vanishes on the grid) and a fixed-point
iteration.

The interpolation matrix A[l, j] = vt_j(s_l) factors as P C P with a known
diagonal P of exponential size and a bounded factor C; the linear algebra
runs on C, so large growth rates neither overflow nor poison the
interpolation residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AdmissibilityError,
    IllConditionedError,
    InvalidGeometryError,
    OriginDegeneracyError,
    OutOfBandError,
    RhoTooSmallError,
)
from .grid import (
    CoefficientSet,
    Grid2D,
    ScalarField,
    compute_qtilde_values,
    h1_norm,
    separation_params,
)

_EXP_GUARD = 600.0  # largest exponent materialized in double precision


@dataclass(frozen=True)
class RhoVector:
    """Complex direction rho = a + i b with rho . rho = 0."""

    a: tuple[float, float]
    b: tuple[float, float]

    @property
    def modulus(self) -> float:
        return math.sqrt(self.a[0] ** 2 + self.a[1] ** 2 + self.b[0] ** 2 + self.b[1] ** 2)

    @property
    def vec(self) -> np.ndarray:
        return np.array([self.a[0] + 1j * self.b[0], self.a[1] + 1j * self.b[1]])

    def self_product(self) -> complex:
        v = self.vec
        return complex(v @ v)

    def conj(self) -> "RhoVector":
        return RhoVector(a=self.a, b=(-self.b[0], -self.b[1]))


def make_rho(s, r: float) -> RhoVector:
    """Growth direction r*s paired with the rotated vector r*rot90(s)."""
    s = np.asarray(s, dtype=float)
    if r <= 0:
        raise InvalidGeometryError(f"need r > 0, got {r}")
    if np.hypot(s[0], s[1]) == 0.0:
        raise OriginDegeneracyError("rho construction degenerates at the origin")
    return RhoVector(a=(r * s[0], r * s[1]), b=(-r * s[1], r * s[0]))


def rtilde(n: int, eta1: float, eta2: float, qnorm: float = 0.0,
           c1: float = 1.0, four_m: bool = False) -> float:
    """Growth rate 2n(2/eta1^2 + (1 + C1 |qt|)/(sqrt2 eta2)); 4M variant on request."""
    if eta2 <= 0 or eta1 <= 0:
        raise InvalidGeometryError("separations must be positive")
    lead = 4.0 * n if four_m else 2.0 * n
    inv_eta1 = 0.0 if np.isinf(eta1) else 2.0 / eta1**2
    return lead * (inv_eta1 + (1.0 + c1 * qnorm) / (math.sqrt(2.0) * eta2))


# ---------------------------------------------------------------------------
# periodic box solver
# ---------------------------------------------------------------------------


def _smoothstep(t):
    """C^2 ramp from 0 to 1 on [0, 1]."""
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


@dataclass
class BoxField:
    """Values on the box grid, bilinear-sampled at physical points."""

    origin: tuple[float, float]
    spacing: tuple[float, float]
    values: np.ndarray

    def sample(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        nx, ny = self.values.shape
        tx = (pts[:, 0] - self.origin[0]) / self.spacing[0]
        ty = (pts[:, 1] - self.origin[1]) / self.spacing[1]
        ix = np.clip(np.floor(tx).astype(int), 0, nx - 2)
        iy = np.clip(np.floor(ty).astype(int), 0, ny - 2)
        ax = tx - ix
        ay = ty - iy
        v = self.values
        return (
            v[ix, iy] * (1 - ax) * (1 - ay)
            + v[ix + 1, iy] * ax * (1 - ay)
            + v[ix, iy + 1] * (1 - ax) * ay
            + v[ix + 1, iy + 1] * ax * ay
        )


@dataclass
class RawCorrection:
    """Correction data for one growth vector, kept on the box grid."""

    rho: RhoVector
    psi_box: BoxField
    sup_psi: float
    residual: float
    iterations: int

    def psi_at(self, points) -> np.ndarray:
        return self.psi_box.sample(points)

    def conj(self) -> "RawCorrection":
        return RawCorrection(
            rho=self.rho.conj(),
            psi_box=BoxField(self.psi_box.origin, self.psi_box.spacing, np.conj(self.psi_box.values)),
            sup_psi=self.sup_psi,
            residual=self.residual,
            iterations=self.iterations,
        )


class BoxWorkspace:
    """Shared geometry, cutoff and coefficient samples for correction solves.

    The box doubles the domain extent and is centered on it.  The cutoff is
    one on the domain and falls to zero (C^2 ramp) across 80 percent of the
    collar, leaving a zero band inside the periodic seam.
    """

    def __init__(self, grid: Grid2D, coeffs: CoefficientSet | None = None,
                 box_n: int = 128, qtilde_fn=None, qtilde_field: ScalarField | None = None):
        self.grid = grid
        Lx, Ly = grid.extent
        self.origin = (grid.origin[0] - Lx / 2, grid.origin[1] - Ly / 2)
        self.lengths = (2 * Lx, 2 * Ly)
        self.n = int(box_n)
        self.spacing = (self.lengths[0] / self.n, self.lengths[1] / self.n)
        xs = self.origin[0] + self.spacing[0] * np.arange(self.n)
        ys = self.origin[1] + self.spacing[1] * np.arange(self.n)
        self.X1, self.X2 = np.meshgrid(xs, ys, indexing="ij")

        ramp_x = _smoothstep(
            (0.4 * Lx - np.maximum(grid.origin[0] - self.X1, self.X1 - grid.origin[0] - Lx))
            / (0.4 * Lx)
        )
        ramp_y = _smoothstep(
            (0.4 * Ly - np.maximum(grid.origin[1] - self.X2, self.X2 - grid.origin[1] - Ly))
            / (0.4 * Ly)
        )
        self.chi = ramp_x * ramp_y

        if coeffs is not None:
            kappa_box = np.asarray(coeffs.kappa_fn(self.X1, self.X2), dtype=float)
            q_box = np.asarray(coeffs.q_fn(self.X1, self.X2), dtype=float)
            self.qtilde_box = compute_qtilde_values(
                kappa_box, q_box, self.spacing[0], self.spacing[1]
            )
            self.q_box = q_box
        elif qtilde_fn is not None:
            self.qtilde_box = np.asarray(qtilde_fn(self.X1, self.X2), dtype=complex)
            self.q_box = self.qtilde_box
        elif qtilde_field is not None:
            from .grid import bilinear_sample

            pts = np.column_stack([
                np.clip(self.X1.reshape(-1), grid.origin[0], grid.origin[0] + Lx),
                np.clip(self.X2.reshape(-1), grid.origin[1], grid.origin[1] + Ly),
            ])
            self.qtilde_box = bilinear_sample(qtilde_field, pts).reshape(self.X1.shape)
            self.q_box = self.qtilde_box
        else:
            raise InvalidGeometryError("box workspace needs coefficients or a potential")

        kx = np.fft.fftfreq(self.n, d=1.0 / self.n) + 0.5
        self.XI1, self.XI2 = np.meshgrid(
            2 * np.pi * kx / self.lengths[0], 2 * np.pi * kx / self.lengths[1], indexing="ij"
        )
        px = np.exp(1j * np.pi * (self.X1 - self.origin[0]) / self.lengths[0])
        py = np.exp(1j * np.pi * (self.X2 - self.origin[1]) / self.lengths[1])
        self.modulation = px * py

        self.mask_domain = (
            (self.X1 >= grid.origin[0]) & (self.X1 <= grid.origin[0] + Lx)
            & (self.X2 >= grid.origin[1]) & (self.X2 <= grid.origin[1] + Ly)
        )

    def potential(self, mode_shift: complex = 0.0, use_q: bool = False) -> np.ndarray:
        """Cut-off iteration potential; mode_shift subtracts a constant first.

        Membership in the adjoint solution space requires Lap w = qt w for
        the conjugated function w, so the fixed point runs on the negated
        potential.
        """
        base = self.q_box if use_q else self.qtilde_box
        return -self.chi * (base - mode_shift)

    def green_symbol(self, rho: RhoVector) -> np.ndarray:
        a1, a2 = rho.a
        b1, b2 = rho.b
        return (
            -(self.XI1**2 + self.XI2**2)
            - 2.0 * (b1 * self.XI1 + b2 * self.XI2)
            + 2j * (a1 * self.XI1 + a2 * self.XI2)
        )

    def solve(self, rho: RhoVector, potential: np.ndarray,
              tol: float = 1e-10, max_iter: int = 200) -> RawCorrection:
        """Fixed point psi <- G[-pot (1 + psi)] in the shifted spectral basis."""
        inv_sym = 1.0 / self.green_symbol(rho)
        mod = self.modulation
        mod_bar = np.conj(mod)

        def apply_green(f):
            return mod * np.fft.ifft2(np.fft.fft2(f * mod_bar) * inv_sym)

        psi = np.zeros_like(potential, dtype=complex)
        for it in range(max_iter):
            nxt = apply_green(-potential * (1.0 + psi))
            delta = float(np.max(np.abs(nxt - psi)))
            scale = 1.0 + float(np.max(np.abs(nxt)))
            psi = nxt
            if not np.isfinite(delta) or scale > 1e8:
                raise RhoTooSmallError(
                    f"correction iteration diverged at |rho|={rho.modulus:.3g}"
                )
            if delta <= tol * scale:
                box = BoxField(self.origin, self.spacing, psi)
                sup = float(np.max(np.abs(psi[self.mask_domain])))
                return RawCorrection(rho, box, sup, delta / scale, it + 1)
        raise RhoTooSmallError(
            f"correction iteration did not contract within {max_iter} steps "
            f"(|rho|={rho.modulus:.3g}); the growth rate violates the lower bound"
        )


@dataclass
class CGOSolution:
    """Correction and materialized test function for one growth vector."""

    rho: RhoVector
    psi: ScalarField
    v: ScalarField
    sup_psi: float
    residual: float
    iterations: int
    psi_box: BoxField

    def psi_at(self, points) -> np.ndarray:
        return self.psi_box.sample(points)


def solve_correction(rho: RhoVector, qtilde: ScalarField | None = None, *,
                     workspace: BoxWorkspace | None = None,
                     potential: np.ndarray | None = None,
                     coeffs: CoefficientSet | None = None,
                     box_n: int = 128, tol: float = 1e-10,
                     max_iter: int = 200) -> CGOSolution:
    """Correction psi and test function v = exp(rho.x)(1 + psi)/sqrt(kappa).

    The potential may come from a nodal field (clamp-extended onto the box),
    a prebuilt workspace, or a coefficient set whose closed forms are
    sampled on the box directly.
    """
    if workspace is None:
        if coeffs is not None:
            workspace = BoxWorkspace(coeffs.grid, coeffs=coeffs, box_n=box_n)
        elif qtilde is not None:
            workspace = BoxWorkspace(qtilde.grid, qtilde_field=qtilde, box_n=box_n)
        else:
            raise InvalidGeometryError("solve_correction needs a potential source")
    if potential is None:
        potential = workspace.potential()
    raw = workspace.solve(rho, potential, tol=tol, max_iter=max_iter)

    grid = workspace.grid
    X1, X2 = grid.mesh
    pts = np.column_stack([X1.reshape(-1), X2.reshape(-1)])
    psi_omega = raw.psi_at(pts).reshape(X1.shape)

    rv = rho.vec
    expo = rv[0] * X1 + rv[1] * X2
    if np.max(expo.real) > _EXP_GUARD:
        raise IllConditionedError("growth rate too large to materialize the test function")
    if coeffs is not None:
        sqrt_kappa = np.sqrt(np.asarray(coeffs.kappa_fn(X1, X2), dtype=float))
    else:
        sqrt_kappa = np.ones_like(X1)
    v_vals = np.exp(expo) * (1.0 + psi_omega) / sqrt_kappa
    return CGOSolution(
        rho=rho,
        psi=ScalarField(grid, psi_omega),
        v=ScalarField(grid, v_vals),
        sup_psi=raw.sup_psi,
        residual=raw.residual,
        iterations=raw.iterations,
        psi_box=raw.psi_box,
    )


# ---------------------------------------------------------------------------
# singular values
# ---------------------------------------------------------------------------


def _jacobi_hermitian_eigvals(H, max_sweeps: int = 100, tol: float = 1e-15):
    H = np.array(H, dtype=complex)
    n = H.shape[0]
    if n == 1:
        return H.real.reshape(1)
    for _ in range(max_sweeps):
        off = np.abs(H - np.diag(np.diag(H)))
        if np.max(off) <= tol * max(1.0, float(np.max(np.abs(np.diag(H))))):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                hpq = H[p, q]
                if abs(hpq) <= tol:
                    continue
                phase = hpq / abs(hpq)
                theta = 0.5 * math.atan2(2.0 * abs(hpq), H[p, p].real - H[q, q].real)
                c = math.cos(theta)
                s = math.sin(theta)
                up = c * H[:, p] + s * np.conj(phase) * H[:, q]
                uq = -s * phase * H[:, p] + c * H[:, q]
                H[:, p], H[:, q] = up, uq
                rp = c * H[p, :] + s * phase * H[q, :]
                rq = -s * np.conj(phase) * H[p, :] + c * H[q, :]
                H[p, :], H[q, :] = rp, rq
    return H.diagonal().real.copy()


def _mpmath_sigma_min(A) -> float:
    import mpmath as mp

    n = A.shape[0]
    scale = float(np.max(np.abs(A)))
    dps = 50 + int(0.5 * max(0.0, math.log10(max(scale, 1.0))))
    with mp.workdps(min(dps, 400)):
        M = mp.matrix(n, n)
        for i in range(n):
            for j in range(n):
                M[i, j] = mp.mpc(A[i, j].real, A[i, j].imag)
        svals = mp.svd_c(M, compute_uv=False)
        return float(min(svals))


def smallest_singular_value(A) -> float:
    """sigma_min via a Hermitian Jacobi eigensolve of A^H A (scale-safe).

    Falls back to high-precision SVD when the dynamic range of A swamps
    double precision.
    """
    A = np.asarray(A, dtype=complex)
    if A.shape[0] != A.shape[1]:
        raise InvalidGeometryError("need a square matrix")
    scale = float(np.max(np.abs(A)))
    if scale == 0.0:
        return 0.0
    eigs = _jacobi_hermitian_eigvals((A / scale).conj().T @ (A / scale))
    smin = scale * math.sqrt(max(float(np.min(eigs)), 0.0))
    smax = scale * math.sqrt(max(float(np.max(eigs)), 0.0))
    if smax > 0 and smin < 1e-7 * smax:
        smin = _mpmath_sigma_min(A)
    return smin


def beta_lower_bound(A) -> float:
    """Diagonal-dominance bound min|a_jj| - sqrt(sum off |a_lj|^2); may be negative."""
    A = np.asarray(A, dtype=complex)
    if A.shape[0] != A.shape[1]:
        raise InvalidGeometryError("need a square matrix")
    scale = float(np.max(np.abs(A)))
    if scale == 0.0:
        return 0.0
    B = np.abs(A / scale)
    diag_min = float(np.min(np.diag(B)))
    off = B - np.diag(np.diag(B))
    return scale * (diag_min - float(np.sqrt(np.sum(off**2))))


def lemma_beta_bound(r: float, n: int, eta1: float, eta2: float,
                     qnorm: float, c1: float, kappa_c0: float):
    """Closed-form lower bound exp(r eta2^2)/|kappa|_C0 times the bracket.

    Returns (bound, bracket).  Only meaningful when the bracket is
    positive; the exponential may overflow to inf for large r.
    """
    psi_term = 0.0 if qnorm == 0.0 else c1 * qnorm / (math.sqrt(2.0) * r * eta2)
    gauss = 0.0 if np.isinf(eta1) else math.exp(-r * eta1**2 / 2.0)
    bracket = 1.0 - n * (gauss + psi_term)
    arg = r * eta2**2
    if arg > 700:
        bound = math.inf if bracket > 0 else (-math.inf if bracket < 0 else 0.0)
    else:
        bound = math.exp(arg) / kappa_c0 * bracket
    return bound, bracket


# ---------------------------------------------------------------------------
# interpolation basis
# ---------------------------------------------------------------------------


@dataclass
class InterpolationBasis:
    """Fields v_i with v_i(s_j) = delta_ij plus conditioning diagnostics.

    ``coeff_matrix`` is D = C^{-T} for the bounded factor of A = P C P;
    basis functions are v_i = exp(-log_p_i) sum_j D[i, j] t_j with t_j the
    P-scaled raw solutions t_j = v~_j / P_j.
    """

    points: np.ndarray
    r_used: float
    A: np.ndarray
    beta_bound: float
    sigma_min: float
    basis: list
    interp_residual: float
    coeff_matrix: np.ndarray
    raw: list
    log_p: np.ndarray
    grid: Grid2D
    kappa_fn: object

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def scaled_raw_at(self, j: int, pts) -> np.ndarray:
        """t_j(pts) = exp(rho_j.x - r|s_j|^2/2)(1 + psi_j(x))/sqrt(kappa(x))."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        raw = self.raw[j]
        rv = raw.rho.vec
        s = self.points[j]
        expo = rv[0] * pts[:, 0] + rv[1] * pts[:, 1] - self.r_used * float(s @ s) / 2.0
        kap = np.asarray(self.kappa_fn(pts[:, 0], pts[:, 1]), dtype=float).reshape(pts.shape[0])
        return np.exp(expo) * (1.0 + raw.psi_at(pts)) / np.sqrt(kap)

    def eval_at_points(self, pts) -> np.ndarray:
        """Matrix V[i, l] = v_i(pts[l]), evaluated through the scaled factors."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        t_vals = np.stack([self.scaled_raw_at(j, pts) for j in range(self.n)])
        V = self.coeff_matrix @ t_vals
        return V * np.exp(-self.log_p)[:, None]

    def normal_traces(self) -> np.ndarray:
        from .grid import normal_derivative

        return np.stack([normal_derivative(f) for f in self.basis])


def _representable_r(pts, grid: Grid2D) -> float:
    """Largest r whose scaled basis fields stay below the exponent guard."""
    x0, y0 = grid.origin
    x1 = x0 + grid.extent[0]
    y1 = y0 + grid.extent[1]
    corners = np.array([[x0, y0], [x0, y1], [x1, y0], [x1, y1]])
    growth = max(float(np.max(corners @ s - (s @ s) / 2.0)) for s in pts)
    growth = max(growth, 1e-6)
    return 0.9 * _EXP_GUARD / growth


def _assemble_basis(pts, coeffs, r_val, workspace, potential, materialize=True):
    n = pts.shape[0]
    raws = []
    for j in range(n):
        rho_j = make_rho(pts[j], r_val)
        if potential is None:
            pot = workspace.potential()
        else:
            pot = potential
        raws.append(workspace.solve(rho_j, pot))

    kappa_pts = np.asarray(coeffs.kappa_fn(pts[:, 0], pts[:, 1]), dtype=float).reshape(n)
    sq = np.einsum("ij,ij->i", pts, pts)

    # bounded factor C[l, j] = exp(rho_j.s_l - r(|s_l|^2 + |s_j|^2)/2)(1 + psi_j(s_l))
    C = np.empty((n, n), dtype=complex)
    for j in range(n):
        rv = raws[j].rho.vec
        expo = pts @ rv - r_val * (sq + sq[j]) / 2.0
        C[:, j] = np.exp(expo) * (1.0 + raws[j].psi_at(pts))

    log_p = r_val * sq / 2.0 - 0.5 * np.log(kappa_pts)
    if float(np.max(log_p[:, None] + log_p[None, :])) > _EXP_GUARD:
        raise IllConditionedError("interpolation matrix exceeds double-precision range")
    A = np.exp(log_p)[:, None] * C * np.exp(log_p)[None, :]

    D = np.linalg.solve(C.T, np.eye(n, dtype=complex))
    resid_scaled = np.abs(D @ C.T - np.eye(n))
    ratio = np.exp(np.clip(log_p[None, :] - log_p[:, None], -700.0, 700.0))
    interp_residual = float(np.max(resid_scaled * ratio))

    sigma = smallest_singular_value(A)
    beta = beta_lower_bound(A)

    basis = InterpolationBasis(
        points=pts,
        r_used=r_val,
        A=A,
        beta_bound=beta,
        sigma_min=sigma,
        basis=[],
        interp_residual=interp_residual,
        coeff_matrix=D,
        raw=raws,
        log_p=log_p,
        grid=coeffs.grid,
        kappa_fn=coeffs.kappa_fn,
    )
    if materialize:
        basis.basis = _materialize_fields(basis)
    return basis


def _materialize_fields(basis: InterpolationBasis):
    grid = basis.grid
    X1, X2 = grid.mesh
    sqrt_kappa = np.sqrt(np.asarray(basis.kappa_fn(X1, X2), dtype=float))
    t_fields = []
    for j in range(basis.n):
        raw = basis.raw[j]
        rv = raw.rho.vec
        s = basis.points[j]
        expo = rv[0] * X1 + rv[1] * X2 - basis.r_used * float(s @ s) / 2.0
        if float(np.max(expo.real)) > _EXP_GUARD:
            raise IllConditionedError("basis field exceeds double-precision range")
        pts = np.column_stack([X1.reshape(-1), X2.reshape(-1)])
        psi = raw.psi_at(pts).reshape(X1.shape)
        t_fields.append(np.exp(expo) * (1.0 + psi) / sqrt_kappa)
    fields = []
    for i in range(basis.n):
        acc = np.zeros_like(t_fields[0])
        for j in range(basis.n):
            acc = acc + basis.coeff_matrix[i, j] * t_fields[j]
        fields.append(ScalarField(grid, acc * math.exp(-float(basis.log_p[i]))))
    return fields


def build_basis(points, coeffs: CoefficientSet, r: float | None = None, *,
                c1: float = 1.0, box_n: int = 128,
                workspace: BoxWorkspace | None = None,
                potential: np.ndarray | None = None,
                max_retries: int = 3, materialize: bool = True) -> InterpolationBasis:
    """Interpolation basis over the point set.

    With r=None the growth rate comes from the separation formula, clipped
    to keep exponentials representable; an explicit r is used as is.  Ill
    conditioning or a non-contracting correction triggers up to
    ``max_retries`` upward retries of r in auto mode.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    eta1, eta2, _ = separation_params(pts, coeffs.grid)

    auto = r is None
    if auto:
        r_val = min(
            rtilde(n, eta1, eta2, qnorm=coeffs.qtilde_hp, c1=c1),
            _representable_r(pts, coeffs.grid),
        )
    else:
        r_val = float(r)

    if workspace is None:
        workspace = BoxWorkspace(coeffs.grid, coeffs=coeffs, box_n=box_n)

    last_err = None
    for attempt in range(max_retries + 1):
        try:
            basis = _assemble_basis(pts, coeffs, r_val, workspace, potential, materialize)
        except RhoTooSmallError as exc:
            if not auto or attempt == max_retries:
                raise
            last_err = exc
            r_val *= 1.5
            continue
        scale = float(np.max(np.abs(basis.A)))
        if basis.sigma_min >= 1e-12 * scale:
            return basis
        if not auto or attempt == max_retries:
            raise IllConditionedError(
                f"sigma_min {basis.sigma_min:.3g} below 1e-12*max|A|={1e-12 * scale:.3g} at r={r_val:.4g}"
            )
        r_val *= 1.5
    raise last_err or IllConditionedError("basis construction failed")


def assemble_A(points, coeffs: CoefficientSet, r: float, *, box_n: int = 128,
               workspace: BoxWorkspace | None = None, potential: np.ndarray | None = None):
    """Raw interpolation matrix a_lj = vt_j(s_l) and the underlying corrections."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    separation_params(pts, coeffs.grid)  # raises on duplicates / origin degeneracy
    if workspace is None:
        workspace = BoxWorkspace(coeffs.grid, coeffs=coeffs, box_n=box_n)
    out = _assemble_basis(pts, coeffs, float(r), workspace, potential, materialize=False)
    return out.A, out.raw


# ---------------------------------------------------------------------------
# per-mode bases and time-dependent test functions
# ---------------------------------------------------------------------------


def _require_unit_kappa(coeffs: CoefficientSet):
    if np.max(np.abs(coeffs.kappa.values - 1.0)) > 1e-12:
        raise AdmissibilityError("the time-dependent model fixes kappa identically one")


def build_basis_mode_k(points, coeffs: CoefficientSet, k: int, K: int, t_star: float,
                       r: float | None = None, *, c1: float = 1.0, box_n: int = 128,
                       workspace: BoxWorkspace | None = None,
                       materialize: bool = True) -> InterpolationBasis:
    """Spatial basis for the potential shifted by the k-th Fourier frequency.

    Negative modes are complex conjugates of the positive ones; the
    conjugated equation carries the opposite oscillation direction, which
    the construction is free to pick.
    """
    if abs(k) > K:
        raise OutOfBandError(f"mode {k} outside the band |k| <= {K}")
    _require_unit_kappa(coeffs)
    if workspace is None:
        workspace = BoxWorkspace(coeffs.grid, coeffs=coeffs, box_n=box_n)
    shift = 2j * np.pi * abs(k) / t_star
    qk_norm = coeffs.qtilde_hp + 2 * np.pi * abs(k) / t_star * math.sqrt(
        coeffs.grid.extent[0] * coeffs.grid.extent[1]
    )
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    eta1, eta2, _ = separation_params(pts, coeffs.grid)
    if r is None:
        r_val = min(
            rtilde(pts.shape[0], eta1, eta2, qnorm=qk_norm, c1=c1),
            _representable_r(pts, coeffs.grid),
        )
    else:
        r_val = float(r)
    potential = workspace.potential(mode_shift=shift, use_q=True)
    basis = build_basis(
        pts, coeffs, r_val, c1=c1, workspace=workspace, potential=potential,
        materialize=materialize,
    )
    if k < 0:
        basis = _conjugate_basis(basis)
    return basis


def _conjugate_basis(basis: InterpolationBasis) -> InterpolationBasis:
    return InterpolationBasis(
        points=basis.points,
        r_used=basis.r_used,
        A=np.conj(basis.A),
        beta_bound=basis.beta_bound,
        sigma_min=basis.sigma_min,
        basis=[ScalarField(f.grid, np.conj(f.values)) for f in basis.basis],
        interp_residual=basis.interp_residual,
        coeff_matrix=np.conj(basis.coeff_matrix),
        raw=[raw.conj() for raw in basis.raw],
        log_p=basis.log_p,
        grid=basis.grid,
        kappa_fn=basis.kappa_fn,
    )


@dataclass
class TimeTestFunction:
    """Space-time test function sum_k V_k(x) e_k(t) on (0, T*).

    Only modes k >= 0 are stored; the negative half consists of conjugates,
    so the realized field Re V_0 + 2 Re sum_{k>=1} V_k e_k is real.
    """

    modes: list  # ScalarField V_k, k = 0..K
    t_star: float
    points: np.ndarray
    coefficients: np.ndarray  # (n_points, 2K+1), k = -K..K
    bases: list
    max_h1: float = 0.0

    @property
    def K(self) -> int:
        return len(self.modes) - 1

    @property
    def grid(self) -> Grid2D:
        return self.modes[0].grid

    def snapshot(self, t: float) -> ScalarField:
        vals = self.modes[0].values.real.copy()
        for k in range(1, self.K + 1):
            ek = np.exp(2j * np.pi * k * t / self.t_star)
            vals += 2.0 * (self.modes[k].values * ek).real
        return ScalarField(self.grid, vals)

    def snapshot_t_star(self) -> ScalarField:
        return self.snapshot(self.t_star)

    def boundary_normal_traces(self, times) -> np.ndarray:
        """Normal-derivative traces, shape (nt, n_boundary)."""
        from .grid import normal_derivative

        times = np.asarray(times, dtype=float)
        d0 = normal_derivative(self.modes[0]).real
        out = np.tile(d0, (times.size, 1)).astype(float)
        for k in range(1, self.K + 1):
            dk = normal_derivative(self.modes[k])
            phases = np.exp(2j * np.pi * k * times / self.t_star)
            out += 2.0 * (phases[:, None] * dk[None, :]).real
        return out

    def values_at_points(self, pts, times) -> np.ndarray:
        """v(p, t) on a point set and time grid, shape (npts, nt)."""
        from .grid import bilinear_sample

        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        times = np.asarray(times, dtype=float)
        v0 = bilinear_sample(self.modes[0], pts)
        out = np.tile(v0.real[:, None], (1, times.size)).astype(float)
        for k in range(1, self.K + 1):
            vk = bilinear_sample(self.modes[k], pts)
            phases = np.exp(2j * np.pi * k * times / self.t_star)
            out += 2.0 * (vk[:, None] * phases[None, :]).real
        return out

    def mode_residual(self) -> float:
        return max(max(r.residual for r in b.raw) for b in self.bases)


def build_time_test_function(points, intensities, coeffs: CoefficientSet, t_star: float,
                             r: float | None = None, *, c1: float = 1.0, box_n: int = 128,
                             workspace: BoxWorkspace | None = None,
                             h1_times: int = 33) -> TimeTestFunction:
    """Test function with v(s_j, t) = h_j(t), assembled mode by mode.

    ``intensities`` are band-limited signals sharing the horizon T*; their
    Fourier coefficients weight the per-mode interpolation bases.  The
    reported ``max_h1`` samples the discrete H1 norm over [0, T*].
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    if n != len(intensities):
        raise AdmissibilityError("one intensity per point required")
    K = max(g.K for g in intensities)
    coef = np.zeros((n, 2 * K + 1), dtype=complex)
    for j, g in enumerate(intensities):
        pad = K - g.K
        coef[j, pad : pad + 2 * g.K + 1] = g.coefficients
    _require_unit_kappa(coeffs)
    if workspace is None:
        workspace = BoxWorkspace(coeffs.grid, coeffs=coeffs, box_n=box_n)

    modes, bases = [], []
    for k in range(0, K + 1):
        basis = build_basis_mode_k(pts, coeffs, k, K, t_star, r, c1=c1, workspace=workspace)
        bases.append(basis)
        acc = np.zeros((coeffs.grid.nx, coeffs.grid.ny), dtype=complex)
        for j in range(n):
            c_kj = coef[j, K + k]
            if c_kj != 0:
                acc += c_kj * basis.basis[j].values
        modes.append(ScalarField(coeffs.grid, acc))

    fn = TimeTestFunction(
        modes=modes, t_star=t_star, points=pts, coefficients=coef, bases=bases
    )
    ts = np.linspace(0.0, t_star, h1_times)
    fn.max_h1 = max(h1_norm(fn.snapshot(t)) for t in ts)
    return fn
