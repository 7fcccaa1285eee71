"""Combined test functions, certificate formulas and the stability chains.

Each experiment trial runs the full pipeline: sample a pair of admissible
sources, solve the forward problems, solve the transport LP, normalize the
dual potentials, merge them into a single test function over the union
support, and compare the transport cost against the boundary evaluation of
the functional difference.  The certificate formulas are evaluated at the
paper-formula growth rate (which may be astronomically large; they are
reported in log form as well), while the test functions themselves use a
tamed growth rate chosen so the boundary quadrature stays meaningful in
double precision.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cgo import (
    BoxWorkspace,
    _representable_r,
    build_basis,
    build_time_test_function,
    rtilde,
)
from .control import solve_null_control, verify_transfer_identity
from .elliptic import functional_R, solve_forward
from .errors import OtStabError
from .grid import (
    CoefficientSet,
    ScalarField,
    boundary_l2,
    build_grid,
    separation_params,
)
from .measures import (
    SamplerSpec,
    partition_supports,
    project_GK,
    sample_random_measure_pair,
    sample_random_spacetime_pair,
)
from .ot import (
    make_cost,
    normalize_potentials,
    solve_ot,
    solve_ot_spacetime,
)
from .parabolic import (
    functional_R_initial,
    functional_R_parabolic,
    solve_forward_initial_data,
    solve_forward_pt_sources,
    trace_l2_norm,
)

SLACK = 0.10
_CHAIN_ATOL = 1e-8


# ---------------------------------------------------------------------------
# combined test functions
# ---------------------------------------------------------------------------


@dataclass
class CombinedTestFunction:
    """Single test function encoding both dual potentials.

    ``gamma`` holds the prescribed atom values (phi on the mass-sending
    part, -psi on the receiving part); ``atom_diff`` is the certified
    upper bound sum a v* - sum b v* evaluated directly on those values.
    """

    fieldv: ScalarField
    gamma: np.ndarray
    atom_diff: float
    J: float
    identity_residual: float
    basis: object


def combine_elliptic(phi, psi, partition, mu, nu, coeffs: CoefficientSet,
                     r: float | None = None, workspace: BoxWorkspace | None = None,
                     box_n: int = 128) -> CombinedTestFunction:
    """Merge normalized dual potentials into one test function over S.

    The construction interpolates phi on the sending part and -psi on the
    receiving part; J <= atom_diff then holds algebraically whenever
    phi + psi <= 0 on the matched atoms (guaranteed for normalized duals
    and costs with c(x, x) = 0).  The real part is returned: the operator
    has real coefficients, so it stays in the adjoint solution space and
    carries the same atom values.
    """
    part = partition
    gamma = np.zeros(part.n)
    for k in np.concatenate([part.S1, part.S3]).astype(int):
        gamma[k] = phi[part.mu_index[k]]
    for k in np.concatenate([part.S2, part.S4]).astype(int):
        gamma[k] = -psi[part.nu_index[k]]

    a_m = np.where(part.mu_index >= 0, mu.amplitudes[np.clip(part.mu_index, 0, None)], 0.0)
    b_m = np.where(part.nu_index >= 0, nu.amplitudes[np.clip(part.nu_index, 0, None)], 0.0)
    atom_diff = float(np.sum((a_m - b_m) * gamma))
    J = float(np.sum(mu.amplitudes * phi) + np.sum(nu.amplitudes * psi))

    # algebraic rearrangement of the combine construction
    check = 0.0
    for k in part.S1:
        check += a_m[k] * phi[part.mu_index[k]]
    for k in part.S2:
        check += b_m[k] * psi[part.nu_index[k]]
    for k in np.concatenate([part.S3, part.S4]).astype(int):
        w_val = phi[part.mu_index[k]] if k in set(part.S3.tolist()) else psi[part.nu_index[k]]
        check += abs(a_m[k] - b_m[k]) * w_val
    identity_residual = abs(check - atom_diff)

    basis = build_basis(part.points, coeffs, r, workspace=workspace, box_n=box_n)
    acc = np.zeros((coeffs.grid.nx, coeffs.grid.ny), dtype=complex)
    for k in range(part.n):
        if gamma[k] != 0.0:
            acc += gamma[k] * basis.basis[k].values
    return CombinedTestFunction(
        fieldv=ScalarField(coeffs.grid, acc.real.copy()),
        gamma=gamma,
        atom_diff=atom_diff,
        J=J,
        identity_residual=identity_residual,
        basis=basis,
    )


@dataclass
class CombinedTimeTestFunction:
    """Space-time analogue: per-atom dual signals projected onto the band."""

    fn: object  # TimeTestFunction
    signals: list
    atom_diff: float
    J: float


def combine_parabolic(phi, psi, partition, mu_st, nu_st, sup_mu, sup_nu,
                      coeffs: CoefficientSet, K: int,
                      r: float | None = None, workspace: BoxWorkspace | None = None,
                      box_n: int = 128) -> CombinedTimeTestFunction:
    """Merge space-time dual potentials into one band-limited test function.

    Signals switch between phi and -psi pointwise in time on the shared
    support; the band projection leaves the certified pairing unchanged
    because the source intensities are band-limited and the projection is
    the discrete orthogonal one on the same quadrature grid.
    """
    part = partition
    nq = sup_mu.n_times
    times_q = sup_mu.times
    w_q = sup_mu.weight
    t_star = mu_st.t_star
    a_sig = mu_st.sample_intensities(times_q)
    b_sig = nu_st.sample_intensities(times_q)

    signals = []
    for k in range(part.n):
        mi, ni = part.mu_index[k], part.nu_index[k]
        if mi >= 0 and ni < 0:
            sig = phi[mi * nq : (mi + 1) * nq]
        elif ni >= 0 and mi < 0:
            sig = -psi[ni * nq : (ni + 1) * nq]
        else:
            sig = np.where(
                a_sig[mi] >= b_sig[ni],
                phi[mi * nq : (mi + 1) * nq],
                -psi[ni * nq : (ni + 1) * nq],
            )
        signals.append(project_GK(sig, K, t_star))

    atom_diff = 0.0
    for k in range(part.n):
        mi, ni = part.mu_index[k], part.nu_index[k]
        a_t = a_sig[mi] if mi >= 0 else np.zeros(nq)
        b_t = b_sig[ni] if ni >= 0 else np.zeros(nq)
        atom_diff += float(np.sum((a_t - b_t) * signals[k].sample(times_q)) * w_q)
    J = float(sup_mu.masses @ phi / sup_mu.masses.sum() + sup_nu.masses @ psi / sup_nu.masses.sum())

    fn = build_time_test_function(
        part.points, signals, coeffs, t_star, r, workspace=workspace, box_n=box_n
    )
    return CombinedTimeTestFunction(fn=fn, signals=signals, atom_diff=atom_diff, J=J)


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------


def certificate_elliptic(M: int, eta1: float, eta2: float, R0: float,
                         kappa_c0: float, cost_sup: float, qtilde_norm: float,
                         c1: float = 1.0, c3: float = 1.0) -> dict:
    """Stability constant C3 |kappa| |c| M rt exp(rt (R0^2 - eta2^2)).

    The growth rate rt uses the main-theorem 4M variant.  The value easily
    overflows, so the log10 is reported alongside; with default constants
    it is labelled as holding only up to the unspecified factors.
    """
    rt = rtilde(M, eta1, eta2, qnorm=qtilde_norm, c1=c1, four_m=True)
    log10 = (
        math.log10(c3 * kappa_c0 * cost_sup * M * rt)
        + rt * (R0**2 - eta2**2) / math.log(10.0)
    )
    value = 10.0**log10 if log10 < 307 else math.inf
    note = "up to unspecified paper constants" if (c1 == 1.0 and c3 == 1.0) else "calibrated"
    return {"r_tilde": rt, "value": value, "log10": log10, "note": note}


def certificate_parabolic(n: int, K: int, eta1: float, eta2: float,
                          t_star: float, T: float, q_norm: float, area: float,
                          c1: float = 1.0) -> dict:
    """Growth rate r_K for the band-shifted potentials plus structure factors.

    The closing constant of the space-time estimate is existential; the
    report carries r_K, the mode-count factor sqrt(n^2 (2K+1)/T*), and the
    empirical ratio instead.
    """
    shifted = q_norm + 2.0 * math.pi * K * math.sqrt(area) / t_star
    r_K = rtilde(n, eta1, eta2, qnorm=shifted, c1=c1)
    factor = math.sqrt(n**2 * (2 * K + 1) / t_star)
    return {
        "r_K": r_K,
        "mode_factor": factor,
        "note": "closing constant unspecified; empirical ratio supplied instead",
    }


# ---------------------------------------------------------------------------
# experiment context and trials
# ---------------------------------------------------------------------------


def tame_growth_rate(points, grid, vcap: float = 30.0) -> float:
    """Growth rate keeping combined-basis amplitudes near vcap on the domain.

    The basis fields scale like exp(r (x . s_j - |s_j|^2/2 - |s_i|^2/2));
    capping that exponent keeps the boundary quadrature of the chain
    meaningfully above the forward-solver discretization error.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x0, y0 = grid.origin
    x1 = x0 + grid.extent[0]
    y1 = y0 + grid.extent[1]
    corners = np.array([[x0, y0], [x0, y1], [x1, y0], [x1, y1]])
    sq = np.einsum("ij,ij->i", pts, pts)
    growth = max(
        float(np.max(corners @ pts[j] - (sq[j] + np.min(sq)) / 2.0))
        for j in range(pts.shape[0])
    )
    growth = max(growth, 0.02)
    return float(np.clip(math.log(vcap) / growth, 4.0, _representable_r(pts, grid)))


class ExperimentContext:
    """Heavy shared state for one experiment configuration."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.grid = build_grid(cfg.grid_nx, cfg.grid_ny, cfg.rect)
        self.coeffs = CoefficientSet.from_expressions(
            self.grid, cfg.kappa_expr, cfg.q_expr, p=cfg.sobolev_p
        )
        self.cost = make_cost(
            cfg.cost_kind,
            rect=cfg.rect,
            horizon=cfg.t_star if cfg.cost_kind == "spacetime" else None,
            cap=cfg.cost_cap,
            scale=cfg.cost_scale,
            time_weight=cfg.cost_time_weight,
        )
        self.workspace = BoxWorkspace(self.grid, coeffs=self.coeffs, box_n=cfg.box_n)
        self.sampler = SamplerSpec(
            M=cfg.M,
            eta1_min=cfg.eta1_min,
            eta2_min=cfg.eta2_min,
            margin=cfg.sample_margin,
        )

    def rng(self, trial: int):
        return np.random.default_rng(
            np.random.SeedSequence(entropy=self.cfg.seed, spawn_key=(trial,))
        )

    def growth_rate(self, points) -> float:
        if self.cfg.cgo_r is not None:
            return float(self.cfg.cgo_r)
        return tame_growth_rate(points, self.grid)


def _base_row(trial: int, cfg) -> dict:
    return {
        "trial": trial,
        "seed": cfg.seed,
        "status": "ok",
        "T_c": math.nan,
        "J_at_optimum": math.nan,
        "R1_minus_R2": math.nan,
        "R1_minus_R2_atom": math.nan,
        "boundary_misfit": math.nan,
        "empirical_ratio": math.nan,
        "certificate_value": math.nan,
        "certificate_log10": math.nan,
        "r_used": math.nan,
        "eta1": math.nan,
        "eta2": math.nan,
        "R0": math.nan,
        "sigma_min": math.nan,
        "beta_bound": math.nan,
        "interp_residual": math.nan,
        "combine_identity_residual": math.nan,
        "imag_residual": math.nan,
        "control_iterations": 0,
        "control_terminal_rel": math.nan,
        "transfer_residual": math.nan,
        "identity_rel_mu": math.nan,
        "identity_rel_nu": math.nan,
        "chain_link1": False,
        "chain_link2": False,
        "chain_ok": False,
        "margin": math.nan,
        "error": "",
    }


def _chain_flags(row, slack: float):
    tc = row["T_c"]
    r_eval = row["R1_minus_R2"]
    cert = row["certificate_value"]
    misfit = row["boundary_misfit"]
    row["chain_link1"] = bool(tc <= r_eval * (1.0 + slack) + _CHAIN_ATOL)
    if r_eval <= _CHAIN_ATOL:
        row["chain_link2"] = True  # vanishing difference: nothing to bound
    elif math.isinf(cert):
        row["chain_link2"] = bool(misfit > 0 or r_eval <= _CHAIN_ATOL)
    else:
        row["chain_link2"] = bool(r_eval <= cert * misfit * (1.0 + slack) + _CHAIN_ATOL)
    row["chain_ok"] = bool(row["chain_link1"] and row["chain_link2"])
    row["margin"] = r_eval * (1.0 + slack) - tc
    row["empirical_ratio"] = tc / misfit if misfit > 0 else 0.0


def run_elliptic_trial(ctx: ExperimentContext, trial: int) -> dict:
    cfg = ctx.cfg
    row = _base_row(trial, cfg)
    rng = ctx.rng(trial)
    mu, nu = sample_random_measure_pair(ctx.sampler, ctx.grid, rng, disjoint=cfg.disjoint)
    u1 = solve_forward(ctx.coeffs, mu, ctx.grid)
    u2 = solve_forward(ctx.coeffs, nu, ctx.grid)

    res = solve_ot(mu, nu, ctx.cost).validate()
    phi, psi = normalize_potentials(res.phi, res.psi, res.cost_values, ctx.cost.sup_norm)
    part = partition_supports(mu, nu)
    eta1, eta2, R0 = separation_params(part.points, ctx.grid)
    r_used = ctx.growth_rate(part.points)
    combined = combine_elliptic(
        phi, psi, part, mu, nu, ctx.coeffs, r=r_used, workspace=ctx.workspace
    )

    R1 = functional_R(u1.boundary_trace, combined.fieldv, ctx.coeffs, ctx.grid)
    R2 = functional_R(u2.boundary_trace, combined.fieldv, ctx.coeffs, ctx.grid)
    misfit = boundary_l2(ctx.grid, u1.boundary_trace - u2.boundary_trace)
    cert = certificate_elliptic(
        cfg.M, eta1, eta2, R0, ctx.coeffs.kappa_c0, ctx.cost.sup_norm,
        ctx.coeffs.qtilde_hp, c1=cfg.C1, c3=cfg.C3,
    )

    row.update(
        T_c=res.cost,
        J_at_optimum=float(mu.amplitudes @ phi + nu.amplitudes @ psi),
        R1_minus_R2=float((R1 - R2).real),
        R1_minus_R2_atom=combined.atom_diff,
        boundary_misfit=misfit,
        certificate_value=cert["value"],
        certificate_log10=cert["log10"],
        r_used=combined.basis.r_used,
        eta1=eta1,
        eta2=eta2,
        R0=R0,
        sigma_min=combined.basis.sigma_min,
        beta_bound=combined.basis.beta_bound,
        interp_residual=combined.basis.interp_residual,
        combine_identity_residual=combined.identity_residual,
        imag_residual=float(abs((R1 - R2).imag)),
    )
    _chain_flags(row, cfg.slack)
    return row


def run_parabolic_trial(ctx: ExperimentContext, trial: int) -> dict:
    cfg = ctx.cfg
    row = _base_row(trial, cfg)
    rng = ctx.rng(trial)
    mu, nu = sample_random_spacetime_pair(
        ctx.sampler, ctx.grid, cfg.K, cfg.t_star, rng, disjoint=cfg.disjoint
    )
    q = ctx.coeffs.q
    u1 = solve_forward_pt_sources(q, mu, ctx.grid, cfg.T, cfg.t_star, cfg.nt)
    u2 = solve_forward_pt_sources(q, nu, ctx.grid, cfg.T, cfg.t_star, cfg.nt)

    res, sup_mu, sup_nu = solve_ot_spacetime(mu, nu, ctx.cost, cfg.nq)
    phi, psi = normalize_potentials(res.phi, res.psi, res.cost_values, ctx.cost.sup_norm)
    part = partition_supports(mu, nu, parabolic=True)
    eta1, eta2, R0 = separation_params(part.points, ctx.grid)
    r_used = ctx.growth_rate(part.points)
    combined = combine_parabolic(
        phi, psi, part, mu, nu, sup_mu, sup_nu, ctx.coeffs, cfg.K,
        r=r_used, workspace=ctx.workspace,
    )

    m_star = u1.t_star_index
    times_minus = u1.times[: m_star + 1]
    dn_v = combined.fn.boundary_normal_traces(times_minus)
    w_arc = ctx.grid.boundary[2]
    wt = np.full(times_minus.size, u1.dt)
    wt[[0, -1]] = u1.dt / 2
    diff_tr = u1.sigma_trace - u2.sigma_trace
    sigma_minus = float(
        np.sum(wt[:, None] * w_arc[None, :] * diff_tr[: m_star + 1] * dn_v)
    )

    snap = combined.fn.snapshot_t_star()
    with warnings.catch_warnings(record=True) as wrec:
        warnings.simplefilter("always")
        ctl = solve_null_control(
            snap, q, ctx.grid, span=(cfg.t_star, cfg.T), nt=cfg.nt - m_star,
            eps=cfg.control_eps, terminal_tol=cfg.control_terminal_tol,
            max_iter=cfg.control_max_iter,
        )
    mid = 0.5 * (diff_tr[m_star:-1] + diff_tr[m_star + 1 :])
    sigma_plus = float(np.sum(ctl.dt * w_arc[None, :] * mid * ctl.omega))

    misfit = trace_l2_norm(ctx.grid, u1.times, diff_tr)
    cert = certificate_parabolic(
        part.n, cfg.K, eta1, eta2, cfg.t_star, cfg.T,
        ctx.coeffs.qtilde_hp, ctx.grid.extent[0] * ctx.grid.extent[1], c1=cfg.C1,
    )

    row.update(
        T_c=res.cost,
        J_at_optimum=combined.J,
        R1_minus_R2=sigma_plus + sigma_minus,
        R1_minus_R2_atom=combined.atom_diff,
        boundary_misfit=misfit,
        certificate_value=math.inf,
        certificate_log10=cert["r_K"],
        r_used=r_used,
        eta1=eta1,
        eta2=eta2,
        R0=R0,
        sigma_min=min(b.sigma_min for b in combined.fn.bases),
        beta_bound=min(b.beta_bound for b in combined.fn.bases),
        interp_residual=max(b.interp_residual for b in combined.fn.bases),
        control_iterations=ctl.iterations,
        control_terminal_rel=ctl.achieved_terminal / max(ctl.target_norm, 1e-300),
        transfer_residual=verify_transfer_identity(u1, u2, snap, ctl),
    )
    if wrec:
        row["error"] = "; ".join(sorted({str(w.message).split(";")[0] for w in wrec}))
    _chain_flags(row, cfg.slack)
    return row


def run_initial_data_trial(ctx: ExperimentContext, trial: int) -> dict:
    cfg = ctx.cfg
    row = _base_row(trial, cfg)
    rng = ctx.rng(trial)
    mu, nu = sample_random_measure_pair(ctx.sampler, ctx.grid, rng, disjoint=cfg.disjoint)
    q = ctx.coeffs.q
    s1 = solve_forward_initial_data(q, mu, ctx.grid, cfg.T, cfg.nt)
    s2 = solve_forward_initial_data(q, nu, ctx.grid, cfg.T, cfg.nt)

    res = solve_ot(mu, nu, ctx.cost).validate()
    phi, psi = normalize_potentials(res.phi, res.psi, res.cost_values, ctx.cost.sup_norm)
    part = partition_supports(mu, nu)
    eta1, eta2, R0 = separation_params(part.points, ctx.grid)
    r_used = ctx.growth_rate(part.points)
    combined = combine_elliptic(
        phi, psi, part, mu, nu, ctx.coeffs, r=r_used, workspace=ctx.workspace
    )

    with warnings.catch_warnings(record=True) as wrec:
        warnings.simplefilter("always")
        ctl = solve_null_control(
            combined.fieldv, q, ctx.grid, span=(0.0, cfg.T), nt=cfg.nt,
            eps=cfg.control_eps, terminal_tol=cfg.control_terminal_tol,
            max_iter=cfg.control_max_iter, pairing="adjoint_exact", startup_pairs=2,
        )
    R1 = float(functional_R_initial(s1, ctl).real)
    R2 = float(functional_R_initial(s2, ctl).real)

    a_m = np.where(part.mu_index >= 0, mu.amplitudes[np.clip(part.mu_index, 0, None)], 0.0)
    b_m = np.where(part.nu_index >= 0, nu.amplitudes[np.clip(part.nu_index, 0, None)], 0.0)
    e1 = float(np.sum(a_m * combined.gamma))
    e2 = float(np.sum(b_m * combined.gamma))
    scale1 = max(abs(e1), 0.1 * ctx.cost.sup_norm)
    scale2 = max(abs(e2), 0.1 * ctx.cost.sup_norm)

    misfit = trace_l2_norm(ctx.grid, s1.times, s1.sigma_trace - s2.sigma_trace)
    cert = certificate_elliptic(
        cfg.M, eta1, eta2, R0, ctx.coeffs.kappa_c0, ctx.cost.sup_norm,
        ctx.coeffs.qtilde_hp, c1=cfg.C1, c3=cfg.C3,
    )

    row.update(
        T_c=res.cost,
        J_at_optimum=float(mu.amplitudes @ phi + nu.amplitudes @ psi),
        R1_minus_R2=R1 - R2,
        R1_minus_R2_atom=combined.atom_diff,
        boundary_misfit=misfit,
        certificate_value=cert["value"],
        certificate_log10=cert["log10"],
        r_used=combined.basis.r_used,
        eta1=eta1,
        eta2=eta2,
        R0=R0,
        sigma_min=combined.basis.sigma_min,
        beta_bound=combined.basis.beta_bound,
        interp_residual=combined.basis.interp_residual,
        combine_identity_residual=combined.identity_residual,
        control_iterations=ctl.iterations,
        control_terminal_rel=ctl.achieved_terminal / max(ctl.target_norm, 1e-300),
        identity_rel_mu=abs(R1 - e1) / scale1,
        identity_rel_nu=abs(R2 - e2) / scale2,
    )
    if wrec:
        row["error"] = "; ".join(sorted({str(w.message).split(";")[0] for w in wrec}))
    _chain_flags(row, cfg.slack)
    return row


_TRIAL_RUNNERS = {
    "elliptic": run_elliptic_trial,
    "parabolic": run_parabolic_trial,
    "initial_data": run_initial_data_trial,
}

_CTX_CACHE: dict = {}


def _run_trial_worker(args):
    cfg_key, cfg, trial = args
    ctx = _CTX_CACHE.get(cfg_key)
    if ctx is None:
        ctx = ExperimentContext(cfg)
        _CTX_CACHE[cfg_key] = ctx
    runner = _TRIAL_RUNNERS[cfg.mode]
    try:
        return runner(ctx, trial)
    except OtStabError as exc:
        row = _base_row(trial, cfg)
        row["status"] = "failed"
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row


@dataclass
class StabilityReport:
    """Per-trial chain results plus run-level summary and metadata."""

    mode: str
    rows: list
    summary: dict
    metadata: dict = field(default_factory=dict)

    @property
    def all_ok(self) -> bool:
        return all(r["chain_ok"] for r in self.rows)


def stability_experiment(cfg) -> StabilityReport:
    """Run every trial of the configured experiment and assemble the report."""
    t0 = time.time()
    key = cfg.cache_key()
    rows = []
    if cfg.threads > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            rows = list(
                pool.map(_run_trial_worker, [(key, cfg, t) for t in range(cfg.trials)])
            )
    else:
        for t in range(cfg.trials):
            rows.append(_run_trial_worker((key, cfg, t)))
    rows.sort(key=lambda r: r["trial"])

    ok_rows = [r for r in rows if r["status"] == "ok"]
    ratios = [r["empirical_ratio"] for r in ok_rows if np.isfinite(r["empirical_ratio"])]
    margins = [r["margin"] for r in ok_rows if np.isfinite(r["margin"])]
    failures = sum(1 for r in rows if not r["chain_ok"])
    summary = {
        "max_ratio": max(ratios) if ratios else 0.0,
        "min_margin": min(margins) if margins else 0.0,
        "failures": failures,
        "runtime_s": time.time() - t0,
    }
    metadata = {
        "mode": cfg.mode,
        "trials": cfg.trials,
        "seed": cfg.seed,
        "grid": [cfg.grid_nx, cfg.grid_ny],
        "constants": {"C1": cfg.C1, "C3": cfg.C3},
        "slack": cfg.slack,
    }
    return StabilityReport(mode=cfg.mode, rows=rows, summary=summary, metadata=metadata)
