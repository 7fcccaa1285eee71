"""Admissible point-source measures and the band-limited time signals.

Elliptic sources are probability measures made of finitely many positive
atoms.  Parabolic sources attach to each location a nonnegative band-limited
intensity on [0, T*], extended by zero up to the final time.  The orthogonal
projection onto the band-limited subspace is realized as a DFT truncation on
a uniform midpoint sample grid, which makes it exactly idempotent,
self-adjoint and contractive in the discrete inner product.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AdmissibilityError,
    AliasingError,
    AmbiguousMatchingError,
    DuplicatePointError,
    InfeasibleSpecError,
)

_MASS_TOL = 1e-12


@dataclass
class AtomicMeasure:
    """Finitely many positive atoms, total mass one."""

    locations: np.ndarray  # (m, 2)
    amplitudes: np.ndarray  # (m,)

    def __post_init__(self):
        self.locations = np.atleast_2d(np.asarray(self.locations, dtype=float))
        self.amplitudes = np.asarray(self.amplitudes, dtype=float)
        if self.locations.shape[0] != self.amplitudes.shape[0]:
            raise AdmissibilityError("location/amplitude count mismatch")
        if np.any(self.amplitudes <= 0):
            raise AdmissibilityError("amplitudes must be strictly positive")
        if abs(self.amplitudes.sum() - 1.0) > _MASS_TOL:
            raise AdmissibilityError(
                f"amplitudes sum to {self.amplitudes.sum():.17g}, expected 1"
            )
        d = self.locations[:, None, :] - self.locations[None, :, :]
        dist = np.hypot(d[..., 0], d[..., 1])
        iu = np.triu_indices(len(self), k=1)
        if len(self) > 1 and np.min(dist[iu]) == 0.0:
            raise DuplicatePointError("atoms must sit at pairwise distinct locations")

    def __len__(self) -> int:
        return self.locations.shape[0]


def uniform_midpoints(n: int, t_star: float) -> np.ndarray:
    """n uniform midpoint samples of [0, T*]."""
    return (np.arange(n) + 0.5) * (t_star / n)


@dataclass
class BandLimitedIntensity:
    """Real trigonometric polynomial sum c_k exp(2 pi i k t / T*), |k| <= K.

    Coefficients are stored for k = -K..K.  The signal is defined on
    [0, T*] and extended by zero afterwards.  ``require_nonneg`` applies the
    sampled nonnegativity check used for source intensities; projections of
    dual potentials are allowed to dip negative and skip it.
    """

    coefficients: np.ndarray  # (2K+1,) complex, index k+K
    t_star: float
    require_nonneg: bool = True

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=complex)
        if self.coefficients.ndim != 1 or self.coefficients.size % 2 != 1:
            raise AdmissibilityError("coefficient array must have odd length 2K+1")
        K = self.K
        sym = self.coefficients[::-1].conj()
        if np.max(np.abs(sym - self.coefficients)) > 1e-10 * max(
            1.0, np.max(np.abs(self.coefficients))
        ):
            raise AdmissibilityError("coefficients must be conjugate symmetric (real signal)")
        if self.require_nonneg:
            t = np.linspace(0.0, self.t_star, 16 * (2 * K + 1), endpoint=False)
            if np.min(self.sample(t)) < -1e-10:
                raise AdmissibilityError("intensity is negative on [0, T*]")

    @property
    def K(self) -> int:
        return (self.coefficients.size - 1) // 2

    @property
    def c0(self) -> float:
        return float(self.coefficients[self.K].real)

    @property
    def integral(self) -> float:
        """Exact integral over [0, T*]: T* times the zero mode."""
        return self.t_star * self.c0

    def sample(self, t) -> np.ndarray:
        """Evaluate the signal; zero for t outside [0, T*]."""
        t = np.asarray(t, dtype=float)
        ks = np.arange(-self.K, self.K + 1)
        phases = np.exp(2j * np.pi * np.outer(t, ks) / self.t_star)
        vals = (phases @ self.coefficients).real
        mask = (t >= 0.0) & (t <= self.t_star)
        return np.where(mask, vals, 0.0).reshape(t.shape)

    def l2_norm(self) -> float:
        """Exact L2(0, T*) norm via Parseval."""
        return float(np.sqrt(self.t_star * np.sum(np.abs(self.coefficients) ** 2)))

    @classmethod
    def constant(cls, value: float, K: int, t_star: float) -> "BandLimitedIntensity":
        c = np.zeros(2 * K + 1, dtype=complex)
        c[K] = value
        return cls(c, t_star, require_nonneg=value >= 0)

    @classmethod
    def mode(cls, k: int, K: int, t_star: float) -> "BandLimitedIntensity":
        """The single complex mode e_k is not real; returned without checks."""
        c = np.zeros(2 * K + 1, dtype=complex)
        c[k + K] = 1.0
        obj = cls.__new__(cls)
        obj.coefficients = c
        obj.t_star = t_star
        obj.require_nonneg = False
        return obj


def project_GK(samples, K: int, t_star: float, require_nonneg: bool = False):
    """Orthogonal projection of midpoint samples onto the band |k| <= K.

    ``samples`` are values at the uniform midpoints of [0, T*].  Needs at
    least 4(2K+1) samples; the DFT on that grid recovers the coefficients of
    band-limited signals exactly, so the projection is idempotent.
    """
    samples = np.asarray(samples)
    n = samples.shape[-1]
    if n < 4 * (2 * K + 1):
        raise AliasingError(f"need >= {4 * (2 * K + 1)} samples for K={K}, got {n}")
    t = uniform_midpoints(n, t_star)
    ks = np.arange(-K, K + 1)
    basis = np.exp(-2j * np.pi * np.outer(ks, t) / t_star)  # (2K+1, n)
    coeffs = (basis @ samples.reshape(n, -1)).reshape((2 * K + 1,) + samples.shape[:-1]) / n
    if samples.ndim == 1:
        return BandLimitedIntensity(coeffs, t_star, require_nonneg=require_nonneg)
    raise AdmissibilityError("project_GK expects a single time series")


@dataclass
class SpaceTimeAtomicMeasure:
    """Point sources with band-limited intensities; total space-time mass one."""

    locations: np.ndarray
    intensities: list[BandLimitedIntensity] = field(default_factory=list)

    def __post_init__(self):
        self.locations = np.atleast_2d(np.asarray(self.locations, dtype=float))
        if self.locations.shape[0] != len(self.intensities):
            raise AdmissibilityError("location/intensity count mismatch")
        d = self.locations[:, None, :] - self.locations[None, :, :]
        dist = np.hypot(d[..., 0], d[..., 1])
        iu = np.triu_indices(len(self), k=1)
        if len(self) > 1 and np.min(dist[iu]) == 0.0:
            raise DuplicatePointError("atoms must sit at pairwise distinct locations")
        t0 = self.intensities[0].t_star
        if any(abs(g.t_star - t0) > 1e-14 for g in self.intensities):
            raise AdmissibilityError("all intensities must share the activity horizon")
        total = sum(g.integral for g in self.intensities)
        if abs(total - 1.0) > _MASS_TOL:
            raise AdmissibilityError(f"total intensity integrates to {total:.17g}, expected 1")

    def __len__(self) -> int:
        return self.locations.shape[0]

    @property
    def t_star(self) -> float:
        return self.intensities[0].t_star

    @property
    def K(self) -> int:
        return max(g.K for g in self.intensities)

    def sample_intensities(self, t) -> np.ndarray:
        """Matrix g_j(t_i), shape (m, len(t))."""
        return np.stack([g.sample(t) for g in self.intensities])


@dataclass
class SupportPartition:
    """Disjoint split of the two supports by mass-flow direction.

    Index arrays refer to positions in the merged location list ``points``.
    ``mu_index``/``nu_index`` map each merged point to its position inside
    the originating measure (or -1).
    """

    points: np.ndarray  # (|S|, 2) merged locations
    S1: np.ndarray  # only in mu
    S2: np.ndarray  # only in nu
    S3: np.ndarray  # shared, mu-heavier (elliptic) or all shared (parabolic)
    S4: np.ndarray  # shared remainder (elliptic only)
    mu_index: np.ndarray
    nu_index: np.ndarray

    @property
    def n(self) -> int:
        return self.points.shape[0]


def _match_locations(mu_loc, nu_loc, tol):
    pairs = {}
    for i, p in enumerate(mu_loc):
        d = np.hypot(nu_loc[:, 0] - p[0], nu_loc[:, 1] - p[1])
        j = int(np.argmin(d))
        if d[j] <= tol:
            pairs[i] = j
    return pairs


def partition_supports(mu, nu, tol_match: float = 1e-12, parabolic: bool = False):
    """Classify atoms by whether they send or receive mass.

    Locations within ``tol_match`` are identified.  In elliptic mode the
    common support splits into a strictly-mu-heavier part and the rest; in
    parabolic mode the common support stays whole (the split happens per
    time instant later).
    """
    mu_loc = np.atleast_2d(np.asarray(mu.locations, dtype=float))
    nu_loc = np.atleast_2d(np.asarray(nu.locations, dtype=float))
    all_pts = np.vstack([mu_loc, nu_loc])
    d = all_pts[:, None, :] - all_pts[None, :, :]
    dist = np.hypot(d[..., 0], d[..., 1])
    iu = np.triu_indices(all_pts.shape[0], k=1)
    distinct = dist[iu][dist[iu] > tol_match]
    if distinct.size and tol_match > float(np.min(distinct)) / 2:
        raise AmbiguousMatchingError(
            f"tol_match={tol_match:g} exceeds half the atom separation {np.min(distinct):g}"
        )

    pairs = _match_locations(mu_loc, nu_loc, tol_match)
    matched_nu = set(pairs.values())

    points, mu_index, nu_index = [], [], []
    S1, S2, S3, S4 = [], [], [], []
    for i in range(mu_loc.shape[0]):
        k = len(points)
        points.append(mu_loc[i])
        mu_index.append(i)
        if i in pairs:
            j = pairs[i]
            nu_index.append(j)
            if parabolic:
                S3.append(k)
            else:
                if mu.amplitudes[i] > nu.amplitudes[j]:
                    S3.append(k)
                else:
                    S4.append(k)
        else:
            nu_index.append(-1)
            S1.append(k)
    for j in range(nu_loc.shape[0]):
        if j in matched_nu:
            continue
        k = len(points)
        points.append(nu_loc[j])
        mu_index.append(-1)
        nu_index.append(j)
        S2.append(k)

    return SupportPartition(
        points=np.asarray(points, dtype=float),
        S1=np.asarray(S1, dtype=int),
        S2=np.asarray(S2, dtype=int),
        S3=np.asarray(S3, dtype=int),
        S4=np.asarray(S4, dtype=int),
        mu_index=np.asarray(mu_index, dtype=int),
        nu_index=np.asarray(nu_index, dtype=int),
    )


@dataclass
class SamplerSpec:
    """Constraints for rejection sampling of admissible measures."""

    M: int
    eta1_min: float = 0.0
    eta2_min: float = 0.0
    margin: float = 0.05
    max_rejections: int = 100_000


def _sample_locations(spec: SamplerSpec, count, grid, rng):
    x0, y0 = grid.origin
    Lx, Ly = grid.extent
    m = spec.margin
    pts = []
    rejections = 0
    while len(pts) < count:
        p = np.array(
            [
                x0 + m + (Lx - 2 * m) * rng.random(),
                y0 + m + (Ly - 2 * m) * rng.random(),
            ]
        )
        ok = np.hypot(p[0], p[1]) >= spec.eta2_min
        if ok and pts:
            arr = np.asarray(pts)
            ok = np.min(np.hypot(arr[:, 0] - p[0], arr[:, 1] - p[1])) >= spec.eta1_min
        if ok:
            pts.append(p)
        else:
            rejections += 1
            if rejections > spec.max_rejections:
                raise InfeasibleSpecError(
                    f"exceeded {spec.max_rejections} rejections sampling {count} locations"
                )
    return np.asarray(pts)


def sample_random_measure(spec: SamplerSpec, grid, rng) -> AtomicMeasure:
    """Rejection-sampled admissible measure; deterministic for a seeded rng."""
    rng = np.random.default_rng(rng)
    pts = _sample_locations(spec, spec.M, grid, rng)
    amps = rng.uniform(0.2, 1.0, size=spec.M)
    amps = amps / amps.sum()
    return AtomicMeasure(pts, amps)


def sample_random_measure_pair(spec: SamplerSpec, grid, rng, disjoint: bool = True):
    """Two admissible measures whose union respects the separation spec."""
    rng = np.random.default_rng(rng)
    if disjoint:
        pts = _sample_locations(spec, 2 * spec.M, grid, rng)
        amps = rng.uniform(0.2, 1.0, size=2 * spec.M)
        mu = AtomicMeasure(pts[: spec.M], amps[: spec.M] / amps[: spec.M].sum())
        nu = AtomicMeasure(pts[spec.M :], amps[spec.M :] / amps[spec.M :].sum())
        return mu, nu
    mu = sample_random_measure(spec, grid, rng)
    nu = sample_random_measure(spec, grid, rng)
    return mu, nu


def sample_random_intensity(K: int, t_star: float, c0: float, rng) -> BandLimitedIntensity:
    """Nonnegative band-limited intensity with prescribed mean value c0."""
    rng = np.random.default_rng(rng)
    c = np.zeros(2 * K + 1, dtype=complex)
    c[K] = c0
    if K > 0:
        weights = rng.uniform(0.2, 1.0, size=K)
        weights = 0.425 * weights / weights.sum()  # sum 2|c_k| <= 0.85 c0, stays positive
        phases = rng.uniform(0.0, 2 * np.pi, size=K)
        for k in range(1, K + 1):
            c[K + k] = c0 * weights[k - 1] * np.exp(1j * phases[k - 1])
            c[K - k] = np.conj(c[K + k])
    return BandLimitedIntensity(c, t_star)


def sample_random_spacetime_pair(
    spec: SamplerSpec, grid, K: int, t_star: float, rng, disjoint: bool = True
):
    """Two admissible space-time measures with random band-limited intensities."""
    rng = np.random.default_rng(rng)
    mu_sp, nu_sp = sample_random_measure_pair(spec, grid, rng, disjoint=disjoint)

    def attach(meas):
        shares = meas.amplitudes  # reuse the normalized amplitudes as time-mass shares
        gs = [
            sample_random_intensity(K, t_star, share / t_star, rng) for share in shares
        ]
        return SpaceTimeAtomicMeasure(meas.locations, gs)

    return attach(mu_sp), attach(nu_sp)
