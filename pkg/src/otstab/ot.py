"""Exact discrete optimal transport between atomic measures.

The primal LP is solved by a transportation simplex with Bland's entering
rule and a lexicographic mass perturbation (supplies get one epsilon each,
the last demand absorbs them), which rules out cycling and makes every run
deterministic for a given input order.  Dual potentials are read off the
optimal basis tree with the root row potential pinned to zero.  A
spanning-tree enumeration over the complete bipartite support graph serves
as an independent oracle for small instances.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ImbalanceError, InvalidGeometryError, OracleSizeError

_FEAS_TOL = 1e-10


# ---------------------------------------------------------------------------
# cost functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CostSpec:
    """Bounded cost with c(x, x) = 0.

    kinds: ``truncated_euclidean`` (params: cap), ``scaled_squared``
    (params: scale), ``spacetime`` (params: time_weight, cap).  ``sup_norm``
    is the derived bound of c over the transport space.
    """

    kind: str
    cap: float = np.inf
    scale: float = 1.0
    time_weight: float = 1.0
    sup_norm: float = np.inf

    def expected_dim(self) -> int:
        return 3 if self.kind == "spacetime" else 2


def make_cost(kind: str, rect=None, horizon: float | None = None, **params) -> CostSpec:
    """Build a CostSpec and derive its sup norm from the domain geometry."""
    if rect is not None:
        x0, y0, x1, y1 = rect
        diam = float(np.hypot(x1 - x0, y1 - y0))
    else:
        diam = np.inf
    if kind == "truncated_euclidean":
        cap = float(params["cap"])
        return CostSpec(kind=kind, cap=cap, sup_norm=min(cap, diam))
    if kind == "scaled_squared":
        scale = float(params.get("scale", 1.0))
        if not np.isfinite(diam):
            raise InvalidGeometryError("scaled_squared cost needs the domain rectangle")
        return CostSpec(kind=kind, scale=scale, sup_norm=scale * diam**2)
    if kind == "spacetime":
        cap = float(params["cap"])
        lam = float(params.get("time_weight", 1.0))
        if horizon is None and not np.isfinite(cap):
            raise InvalidGeometryError("spacetime cost needs a cap or a time horizon")
        reach = np.hypot(diam, np.sqrt(lam) * horizon) if horizon is not None else np.inf
        return CostSpec(kind=kind, cap=cap, time_weight=lam, sup_norm=float(min(cap, reach)))
    raise InvalidGeometryError(f"unknown cost kind {kind!r}")


def eval_cost(spec: CostSpec, x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (spec.expected_dim(),) or y.shape != (spec.expected_dim(),):
        raise InvalidGeometryError(
            f"cost kind {spec.kind!r} expects points of dimension {spec.expected_dim()}"
        )
    return float(cost_matrix(spec, x[None, :], y[None, :])[0, 0])


def cost_matrix(spec: CostSpec, X, Y) -> np.ndarray:
    """Pairwise costs, shape (len(X), len(Y))."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    dx = X[:, None, 0] - Y[None, :, 0]
    dy = X[:, None, 1] - Y[None, :, 1]
    if spec.kind == "truncated_euclidean":
        return np.minimum(np.hypot(dx, dy), spec.cap)
    if spec.kind == "scaled_squared":
        return spec.scale * (dx**2 + dy**2)
    if spec.kind == "spacetime":
        dt = X[:, None, 2] - Y[None, :, 2]
        return np.minimum(np.sqrt(dx**2 + dy**2 + spec.time_weight * dt**2), spec.cap)
    raise InvalidGeometryError(f"unknown cost kind {spec.kind!r}")


# ---------------------------------------------------------------------------
# transportation simplex
# ---------------------------------------------------------------------------


@dataclass
class TransportResult:
    """Optimal plan with complementary dual potentials on the supports."""

    cost: float
    plan: np.ndarray  # (m, n)
    phi: np.ndarray  # (m,) potential on supp(mu)
    psi: np.ndarray  # (n,) potential on supp(nu)
    cost_values: np.ndarray  # (m, n) cost matrix used
    mass_mu: np.ndarray
    mass_nu: np.ndarray

    def dual_value(self) -> float:
        return float(self.mass_mu @ self.phi + self.mass_nu @ self.psi)

    def validate(self, tol: float = _FEAS_TOL):
        """Marginal, dual-feasibility and strong-duality checks."""
        row = np.abs(self.plan.sum(axis=1) - self.mass_mu).max()
        col = np.abs(self.plan.sum(axis=0) - self.mass_nu).max()
        feas = np.max(self.phi[:, None] + self.psi[None, :] - self.cost_values)
        gap = abs(self.cost - self.dual_value())
        if row > tol or col > tol:
            raise ImbalanceError(f"plan marginals off by {max(row, col):.3g}")
        if feas > tol:
            raise ImbalanceError(f"dual infeasible by {feas:.3g}")
        if gap > 1e-9 * (1.0 + abs(self.cost)):
            raise ImbalanceError(f"duality gap {gap:.3g}")
        return self


def _lex_lt(a, b, tol=1e-13):
    if a[0] < b[0] - tol:
        return True
    if a[0] > b[0] + tol:
        return False
    return a[1] < b[1]


def _tree_duals(m, n, basis_rows, basis_cols, C):
    """Potentials from the basis tree, root u_0 = 0."""
    u = np.full(m, np.nan)
    v = np.full(n, np.nan)
    u[0] = 0.0
    stack = [("r", 0)]
    while stack:
        side, k = stack.pop()
        if side == "r":
            for j in basis_rows[k]:
                if np.isnan(v[j]):
                    v[j] = C[k, j] - u[k]
                    stack.append(("c", j))
        else:
            for i in basis_cols[k]:
                if np.isnan(u[i]):
                    u[i] = C[i, k] - v[k]
                    stack.append(("r", i))
    return u, v


def solve_transport(C, a, b):
    """Transportation simplex on a cost matrix with masses a, b (each sums to 1)."""
    C = np.asarray(C, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = C.shape
    if np.any(a < -1e-15) or np.any(b < -1e-15):
        raise ImbalanceError("masses must be nonnegative")
    if abs(a.sum() - b.sum()) > _FEAS_TOL:
        raise ImbalanceError(f"mass imbalance {abs(a.sum() - b.sum()):.3g} exceeds {_FEAS_TOL}")

    # lexicographic perturbation: every supply gains one epsilon, the last
    # demand absorbs all of them
    ar = a.copy()
    ae = np.ones(m)
    br = b.copy()
    be = np.zeros(n)
    be[-1] = float(m)

    flows = {}
    basis_rows = [set() for _ in range(m)]
    basis_cols = [set() for _ in range(n)]

    def add_cell(i, j, fr, fe):
        flows[(i, j)] = [fr, fe]
        basis_rows[i].add(j)
        basis_cols[j].add(i)

    # northwest corner start
    i = j = 0
    sa, se = ar[0], ae[0]
    da, de = br[0], be[0]
    while True:
        take_supply = _lex_lt((sa, se), (da, de))
        if take_supply:
            add_cell(i, j, sa, se)
            da, de = da - sa, de - se
            i += 1
            if i >= m:
                break
            sa, se = ar[i], ae[i]
        else:
            add_cell(i, j, da, de)
            sa, se = sa - da, se - de
            j += 1
            if j >= n:
                break
            da, de = br[j], be[j]

    tol = 1e-12 * (1.0 + float(np.max(np.abs(C))) if C.size else 1.0)
    max_pivots = 20 * m * n + 2000
    for _ in range(max_pivots):
        u, v = _tree_duals(m, n, basis_rows, basis_cols, C)
        red = C - u[:, None] - v[None, :]
        for (bi, bj) in flows:
            red[bi, bj] = 0.0
        neg = red.reshape(-1) < -tol
        if not np.any(neg):
            break
        flat = int(np.argmax(neg))  # first negative in row-major order (Bland)
        p, q = divmod(flat, n)

        # unique tree path from row p to column q
        parent = {}
        stack = [("r", p)]
        seen = {("r", p)}
        while stack:
            node = stack.pop()
            side, k = node
            if node == ("c", q):
                break
            if side == "r":
                nbrs = [("c", j) for j in basis_rows[k]]
            else:
                nbrs = [("r", i) for i in basis_cols[k]]
            for nb in nbrs:
                if nb not in seen:
                    seen.add(nb)
                    parent[nb] = node
                    stack.append(nb)
        path = [("c", q)]
        while path[-1] != ("r", p):
            path.append(parent[path[-1]])
        path.reverse()  # row p ... col q

        cells = []
        for t in range(len(path) - 1):
            x, y = path[t], path[t + 1]
            cell = (x[1], y[1]) if x[0] == "r" else (y[1], x[1])
            cells.append(cell)
        minus = cells[0::2]

        theta = None
        leave = None
        for cell in minus:
            fr, fe = flows[cell]
            if theta is None or _lex_lt((fr, fe), theta):
                theta = (fr, fe)
                leave = cell
        for t, cell in enumerate(cells):
            sgn = -1.0 if t % 2 == 0 else 1.0
            flows[cell][0] += sgn * theta[0]
            flows[cell][1] += sgn * theta[1]
        add_cell(p, q, theta[0], theta[1])
        del flows[leave]
        basis_rows[leave[0]].discard(leave[1])
        basis_cols[leave[1]].discard(leave[0])
    else:
        raise ImbalanceError("transportation simplex exceeded its pivot budget")

    plan = np.zeros((m, n))
    for (bi, bj), (fr, _) in flows.items():
        plan[bi, bj] = max(fr, 0.0)
    u, v = _tree_duals(m, n, basis_rows, basis_cols, C)
    cost = float(np.sum(plan * C))
    return TransportResult(
        cost=cost,
        plan=plan,
        phi=u,
        psi=v,
        cost_values=C,
        mass_mu=a,
        mass_nu=b,
    )


def solve_ot(mu, nu, spec: CostSpec) -> TransportResult:
    """Optimal transport between two atomic measures (spatial supports)."""
    C = cost_matrix(spec, mu.locations, nu.locations)
    return solve_transport(C, mu.amplitudes, nu.amplitudes)


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------


@lru_cache(maxsize=32)
def _tree_tables(m: int, n: int):
    """Per-tree linear solves for all spanning trees of K_{m,n}.

    Returns (S, edge_flat): S[t] maps the reduced marginal vector
    [a; b[:-1]] to the flows on tree t's edges; edge_flat[t] holds the flat
    cost-matrix indices of those edges.
    """
    edges = [(i, j) for i in range(m) for j in range(n)]
    E = m + n - 1
    mats, idxs = [], []
    for combo in itertools.combinations(range(len(edges)), E):
        parent = list(range(m + n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        ok = True
        for e in combo:
            i, j = edges[e]
            ri, rj = find(i), find(m + j)
            if ri == rj:
                ok = False
                break
            parent[ri] = rj
        if not ok or len({find(k) for k in range(m + n)}) != 1:
            continue
        M = np.zeros((E, E))
        for col, e in enumerate(combo):
            i, j = edges[e]
            M[i, col] = 1.0  # row-i marginal
            if j < n - 1:
                M[m + j, col] = 1.0  # col-j marginal, last one dropped
        mats.append(np.linalg.inv(M[: E + 0]))  # square: m rows + (n-1) cols = E
        idxs.append([i * n + j for (i, j) in (edges[e] for e in combo)])
    return np.stack(mats), np.asarray(idxs, dtype=np.int64)


def brute_force_transport(C, a, b) -> float:
    """Minimum cost over every basic feasible solution (spanning trees)."""
    C = np.asarray(C, dtype=float)
    m, n = C.shape
    if m > 4 or n > 4:
        raise OracleSizeError(f"brute force limited to 4x4 supports, got {m}x{n}")
    if abs(np.sum(a) - np.sum(b)) > _FEAS_TOL:
        raise ImbalanceError("mass imbalance")
    S, edge_flat = _tree_tables(m, n)
    rhs = np.concatenate([a, b[: n - 1]])
    flows = S @ rhs  # (ntrees, E)
    feasible = np.all(flows >= -1e-12, axis=1)
    edge_costs = C.reshape(-1)[edge_flat]  # (ntrees, E)
    totals = np.sum(np.maximum(flows, 0.0) * edge_costs, axis=1)
    return float(np.min(totals[feasible]))


def brute_force_ot(mu, nu, spec: CostSpec) -> float:
    C = cost_matrix(spec, mu.locations, nu.locations)
    return brute_force_transport(C, mu.amplitudes, nu.amplitudes)


# ---------------------------------------------------------------------------
# dual normalization and diagnostics
# ---------------------------------------------------------------------------


def normalize_potentials(phi, psi, C, sup_norm: float | None = None):
    """Double c-transform on the supports followed by the box shift.

    Output satisfies 0 <= phi <= ||c||_inf and -||c||_inf <= psi <= 0 while
    J does not decrease and feasibility is preserved.
    """
    C = np.asarray(C, dtype=float)
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if np.max(phi[:, None] + psi[None, :] - C) > 1e-9:
        raise ImbalanceError("input potentials are infeasible")
    psi1 = np.min(C - phi[:, None], axis=0)
    phi1 = np.min(C - psi1[None, :], axis=1)
    lam = float(np.max(psi1))
    phi2 = phi1 + lam
    psi2 = psi1 - lam
    if sup_norm is not None:
        hi = sup_norm + 1e-12
        if np.any(phi2 < -1e-12) or np.any(phi2 > hi) or np.any(psi2 > 1e-12) or np.any(psi2 < -hi):
            raise ImbalanceError("normalized potentials escaped the dual box")
    return phi2, psi2


def duality_gap(result: TransportResult) -> float:
    """Primal minus dual objective; zero (to tolerance) at an optimum."""
    return float(np.sum(result.plan * result.cost_values) - result.dual_value())


# ---------------------------------------------------------------------------
# space-time discretization for parabolic transport
# ---------------------------------------------------------------------------


@dataclass
class SpaceTimeSupport:
    """Quadrature atoms (x1, x2, t) with masses for one space-time measure."""

    points: np.ndarray  # (m*nq, 3)
    masses: np.ndarray  # (m*nq,)
    n_atoms: int
    n_times: int
    times: np.ndarray
    weight: float  # quadrature weight T*/nq


def discretize_spacetime(measure, nq: int) -> SpaceTimeSupport:
    """Midpoint time quadrature of a space-time atomic measure.

    Exact for band-limited intensities as long as nq exceeds the Nyquist
    count, so the discrete masses sum to one up to rounding.
    """
    from .measures import uniform_midpoints

    t_star = measure.t_star
    times = uniform_midpoints(nq, t_star)
    w = t_star / nq
    g = measure.sample_intensities(times)  # (m, nq)
    pts = []
    for j in range(len(measure)):
        x1, x2 = measure.locations[j]
        for ti, t in enumerate(times):
            pts.append((x1, x2, t))
    masses = np.clip(g.reshape(-1) * w, 0.0, None)
    return SpaceTimeSupport(
        points=np.asarray(pts),
        masses=masses,
        n_atoms=len(measure),
        n_times=nq,
        times=times,
        weight=w,
    )


def solve_ot_spacetime(mu_st, nu_st, spec: CostSpec, nq: int):
    """Transport between discretized space-time measures.

    Returns (result, support_mu, support_nu).  Masses are renormalized by
    their common quadrature total to keep the LP exactly balanced.
    """
    sup_mu = discretize_spacetime(mu_st, nq)
    sup_nu = discretize_spacetime(nu_st, nq)
    total_mu = sup_mu.masses.sum()
    total_nu = sup_nu.masses.sum()
    if abs(total_mu - total_nu) > _FEAS_TOL:
        raise ImbalanceError(
            f"quadrature masses disagree: {total_mu:.17g} vs {total_nu:.17g}"
        )
    C = cost_matrix(spec, sup_mu.points, sup_nu.points)
    result = solve_transport(C, sup_mu.masses / total_mu, sup_nu.masses / total_nu)
    return result, sup_mu, sup_nu
