"""Crank-Nicolson forward solver for time-dependent point sources and
point-mass initial data, plus the space-time boundary functionals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AdmissibilityError, InvalidGeometryError
from .grid import Grid2D, ScalarField, boundary_integral, extract_trace
from .measures import AtomicMeasure, SpaceTimeAtomicMeasure
from .operators import build_stiffness, hat_load, lumped_weights


@dataclass
class ParabolicSolution:
    """Boundary trace over all time nodes and the snapshot at T*."""

    sigma_trace: np.ndarray  # (nt+1, n_boundary)
    snapshot_t_star: ScalarField | None
    times: np.ndarray
    dt: float
    nt: int
    mass_trace: np.ndarray  # integral of u dx at every time node
    grid: Grid2D
    t_star_index: int | None

    def trace_difference_l2(self, other: "ParabolicSolution") -> float:
        """L2(boundary x [0, T]) norm of the trace difference."""
        return trace_l2_norm(self.grid, self.times, self.sigma_trace - other.sigma_trace)


def trace_l2_norm(grid: Grid2D, times, trace) -> float:
    w_arc = grid.boundary[2]
    dt = times[1] - times[0]
    wt = np.full(times.size, dt)
    wt[[0, -1]] = dt / 2
    return float(np.sqrt(np.sum(wt[:, None] * w_arc[None, :] * np.abs(trace) ** 2)))


class CrankNicolsonStepper:
    """Factorized theta=1/2 stepper for W du/dt + (K + W q) u = load(t)."""

    def __init__(self, grid: Grid2D, q_vals, dt: float, kappa_vals=None):
        self.grid = grid
        self.dt = dt
        W = lumped_weights(grid)
        kv = np.ones(grid.n_nodes) if kappa_vals is None else np.asarray(kappa_vals).reshape(-1)
        K = build_stiffness(grid, kv)
        self.opq = K + sp.diags(W * np.asarray(q_vals, dtype=float).reshape(-1))
        Wd = sp.diags(W / dt)
        self.a_plus = (Wd + 0.5 * self.opq).tocsc()
        self.a_minus = (Wd - 0.5 * self.opq).tocsr()
        self.solver = spla.factorized(self.a_plus)
        self.weights = W
        self._startup = None

    def step(self, u, load_mid=None):
        rhs = self.a_minus @ u
        if load_mid is not None:
            rhs = rhs + load_mid
        return self.solver(rhs)

    def damped_step(self, u, load=None):
        """One backward-Euler half-step (Rannacher startup for rough data).

        Crank-Nicolson is not L-stable: point-mass data excites the stiffest
        modes, whose CN amplification sits near -1 and rings for hundreds of
        steps.  Two pairs of damped half-steps kill those modes without
        losing the second-order global accuracy.
        """
        if self._startup is None:
            Wd = sp.diags(self.weights / (self.dt / 2))
            self._startup = (spla.factorized((Wd + self.opq).tocsc()), Wd)
        solver, Wd = self._startup
        rhs = Wd @ u
        if load is not None:
            rhs = rhs + load
        return solver(rhs)

    def damped_step_transpose(self, x):
        """Transpose of one damped half-step: multiply by 2W/dt, then solve."""
        if self._startup is None:
            Wd = sp.diags(self.weights / (self.dt / 2))
            self._startup = (spla.factorized((Wd + self.opq).tocsc()), Wd)
        solver, Wd = self._startup
        return Wd @ solver(x)

    def energy_weight(self, x):
        """Apply W + (dt/2) H, the terminal metric dual to the CN pairing."""
        return self.weights * x + 0.5 * self.dt * (self.opq @ x)


def _validate_time_grid(T: float, t_star: float | None, nt: int):
    if nt < 64:
        raise AdmissibilityError(f"need nt >= 64 time steps, got {nt}")
    if t_star is not None:
        if not (0.0 < t_star < T):
            raise AdmissibilityError(f"need 0 < T*={t_star} < T={T}")
        ratio = t_star / (T / nt)
        if abs(ratio - round(ratio)) > 1e-9:
            raise AdmissibilityError(
                f"T*={t_star} must sit on the time grid (T/nt={T / nt:g})"
            )
        return int(round(ratio))
    return None


def solve_forward_pt_sources(q: ScalarField, src: SpaceTimeAtomicMeasure, grid: Grid2D,
                             T: float, t_star: float, nt: int,
                             keep_fields: bool = False) -> ParabolicSolution:
    """Heat solve with band-limited point sources active on [0, T*].

    Source intensities are evaluated exactly from their Fourier
    coefficients at the half-steps of the Crank-Nicolson scheme; they
    vanish on [T*, T] by the admissibility hypothesis.
    """
    if grid != q.grid:
        raise InvalidGeometryError("q sampled on a different grid")
    if abs(src.t_star - t_star) > 1e-12:
        raise AdmissibilityError(
            f"source horizon {src.t_star} does not match requested T* = {t_star}"
        )
    m_star = _validate_time_grid(T, t_star, nt)
    dt = T / nt
    times = dt * np.arange(nt + 1)
    stepper = CrankNicolsonStepper(grid, q.values.real, dt)

    hats = np.stack([hat_load(grid, s) for s in src.locations])  # (m, n_nodes)
    mids = times[:-1] + dt / 2
    g_mid = src.sample_intensities(mids)  # (m, nt), zero past T*

    u = np.zeros(grid.n_nodes)
    nb = grid.n_boundary
    ids = grid.boundary[0]
    sigma = np.zeros((nt + 1, nb))
    mass = np.zeros(nt + 1)
    snapshot = None
    fields = [] if keep_fields else None
    for m in range(nt + 1):
        sigma[m] = u[ids]
        mass[m] = float(np.sum(stepper.weights * u))
        if fields is not None:
            fields.append(u.copy())
        if m == m_star:
            snapshot = ScalarField(grid, u.reshape(grid.nx, grid.ny).copy())
        if m == nt:
            break
        load = hats.T @ g_mid[:, m]
        u = stepper.step(u, load)

    sol = ParabolicSolution(
        sigma_trace=sigma,
        snapshot_t_star=snapshot,
        times=times,
        dt=dt,
        nt=nt,
        mass_trace=mass,
        grid=grid,
        t_star_index=m_star,
    )
    if keep_fields:
        sol.fields = np.stack(fields)
    return sol


def solve_forward_initial_data(q: ScalarField, mu0: AtomicMeasure, grid: Grid2D,
                               T: float, nt: int, t_star: float | None = None,
                               keep_fields: bool = False) -> ParabolicSolution:
    """Heat solve with point-mass initial data (hat-load density at t=0)."""
    if grid != q.grid:
        raise InvalidGeometryError("q sampled on a different grid")
    m_star = _validate_time_grid(T, t_star, nt)
    dt = T / nt
    times = dt * np.arange(nt + 1)
    stepper = CrankNicolsonStepper(grid, q.values.real, dt)

    W = stepper.weights
    u = np.zeros(grid.n_nodes)
    for j in range(len(mu0)):
        u += hat_load(grid, mu0.locations[j], mu0.amplitudes[j])
    u = u / W  # density whose discrete integral is the total mass

    nb = grid.n_boundary
    ids = grid.boundary[0]
    sigma = np.zeros((nt + 1, nb))
    mass = np.zeros(nt + 1)
    snapshot = None
    fields = [] if keep_fields else None
    for m in range(nt + 1):
        sigma[m] = u[ids]
        mass[m] = float(np.sum(W * u))
        if fields is not None:
            fields.append(u.copy())
        if m_star is not None and m == m_star:
            snapshot = ScalarField(grid, u.reshape(grid.nx, grid.ny).copy())
        if m == nt:
            break
        if m < 2:
            u = stepper.damped_step(stepper.damped_step(u))
        else:
            u = stepper.step(u)

    sol = ParabolicSolution(
        sigma_trace=sigma,
        snapshot_t_star=snapshot,
        times=times,
        dt=dt,
        nt=nt,
        mass_trace=mass,
        grid=grid,
        t_star_index=m_star,
    )
    sol.final_field = ScalarField(grid, u.reshape(grid.nx, grid.ny))
    if keep_fields:
        sol.fields = np.stack(fields)
    return sol


def functional_R_parabolic(sol: ParabolicSolution, v) -> complex:
    """Snapshot pairing at T* plus the time-trapezoid boundary term on [0, T*].

    ``v`` is a time-dependent test function exposing ``snapshot_t_star()``
    and ``boundary_normal_traces(times)``.
    """
    if sol.t_star_index is None:
        raise AdmissibilityError("solution carries no snapshot at T*")
    grid = sol.grid
    snap_v = v.snapshot_t_star()
    snap_term = complex(
        np.sum(grid.area_weights * sol.snapshot_t_star.values * snap_v.values)
    )

    m_star = sol.t_star_index
    times = sol.times[: m_star + 1]
    dn_v = v.boundary_normal_traces(times)  # (m*+1, nb)
    w_arc = grid.boundary[2]
    wt = np.full(times.size, sol.dt)
    wt[[0, -1]] = sol.dt / 2
    bdry_term = complex(
        np.sum(wt[:, None] * w_arc[None, :] * sol.sigma_trace[: m_star + 1] * dn_v)
    )
    return snap_term + bdry_term


def functional_R_initial(sol: ParabolicSolution, control) -> complex:
    """Space-time pairing of the boundary trace with a control on Sigma.

    For plain controls the trace is averaged onto midsteps.  Controls built
    with the adjoint-exact pairing are summed against the trace at the left
    endpoint of each step, skipping the startup band; that is the pairing
    under which the discrete transfer identity holds exactly.
    """
    omega = control.omega
    w_arc = sol.grid.boundary[2]
    if getattr(control, "pairing", "plain") == "adjoint_exact":
        p0 = control.startup_pairs
        if omega.shape[0] + p0 != sol.nt:
            raise InvalidGeometryError(
                f"control has {omega.shape[0]} steps + {p0} startup, solution has {sol.nt}"
            )
        left_trace = sol.sigma_trace[p0 : p0 + omega.shape[0]]
        return complex(np.sum(sol.dt * w_arc[None, :] * left_trace * omega))
    if omega.shape[0] != sol.nt:
        raise InvalidGeometryError(
            f"control has {omega.shape[0]} steps, solution has {sol.nt}"
        )
    mid_trace = 0.5 * (sol.sigma_trace[:-1] + sol.sigma_trace[1:])
    return complex(np.sum(sol.dt * w_arc[None, :] * mid_trace * omega))
