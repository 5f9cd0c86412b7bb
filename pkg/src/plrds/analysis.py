"""Quantitative diagnostics: absorbing radii by quadrature, absorbing-entry
checks, energy audits, tail monitors, attractor estimation, and the
noise-intensity (upper-semicontinuity) sweep.

Every sweep fans out over (seed, alpha, initial condition) tasks on an
optional process pool; tasks share only immutable inputs and results merge in
deterministic task order, so worker count never changes any reported number.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .fields import (EndpointEnsemble, EnsembleTag, Field, Grid,
                     grid_arrays, hausdorff_semidistance, l2_sq,
                     make_field, p_dissipation, flux_pairing, tail_mass)
from .integrator import (StepperConfig, TrajectoryRecord, cocycle_apply,
                         pullback_run, _context)
from .noise import NoisePath, make_eta, make_path, ou_from_path, snap_steps
from .problem import ForcingNorms, ProblemSpec, alpha_zero

DEFAULT_GRID = Grid(1, 8.0, 257)
DEFAULT_C = 4.0
DEFAULT_QUAD_TOL = 1e-12
_SAMPLER_KEY = 0x1B1D


# ---------------------------------------------------------------------------
# Initial data: reproducible bumps inside a ball.
# ---------------------------------------------------------------------------

def sample_initial_ball(grid: Grid, radius: float, count: int,
                        seed: int = 1234) -> list:
    """Deterministic sum-of-bumps fields with L2 norm inside the radius."""
    if radius <= 0 or count < 1:
        raise ValueError("need positive radius and count")
    rng = np.random.Generator(np.random.Philox(key=np.array(
        [seed & 0xFFFFFFFFFFFFFFFF, _SAMPLER_KEY], dtype=np.uint64)))
    arrs = grid_arrays(grid)
    out = []
    for _ in range(count):
        vals = np.zeros(grid.shape)
        for _ in range(3):
            if grid.dim == 1:
                cx = rng.uniform(-grid.half_width / 2, grid.half_width / 2)
                r2 = (arrs.coords - cx) ** 2
            else:
                cx, cy = rng.uniform(-grid.half_width / 2, grid.half_width / 2, 2)
                r2 = (arrs.x - cx) ** 2 + (arrs.y - cy) ** 2
            width = rng.uniform(0.8, 1.6)
            vals += rng.standard_normal() * np.exp(-r2 / (2.0 * width * width))
        fld = make_field(grid, vals)
        nrm = math.sqrt(l2_sq(fld))
        target = radius * rng.uniform(0.3, 0.95)
        out.append(Field(grid, fld.values * (target / max(nrm, 1e-12))))
    return out


# ---------------------------------------------------------------------------
# Absorbing radii by quadrature along the noise.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadiusReport:
    """One absorbing radius with its pieces and quadrature provenance.

    radius is the full R; parts splits it into the calibration constant and
    the quadrature contributions; bound is the absorbing bound on ||u||^2
    implied by R for the spec's noise case; shift_sq is ||epsilon*h*z(omega)||^2
    (additive case, else 0).
    """

    radius: float
    bound: float
    shift_sq: float
    parts: dict
    truncation: float
    converged: bool
    growth_finite: bool


def _cumtrapz(values: np.ndarray, dx: float) -> np.ndarray:
    out = np.empty(len(values))
    out[0] = 0.0
    np.cumsum(0.5 * (values[1:] + values[:-1]) * dx, out=out[1:])
    return out


def _weight_window(path, spec: ProblemSpec, quad_tol: float, kind: str):
    """Weights and noise samples on [-S, 0] with S chosen so the weight tail
    falls below quad_tol (capped; the cap flags non-convergence)."""
    lam = spec.lam
    base_span = math.log(1.0 / quad_tol) / (1.25 * lam)
    dt = path.dt if not hasattr(path, "base") else path.base.dt
    n = max(int(round(4.0 / dt)), int(math.ceil(base_span / dt)))
    cap = 16 * max(int(math.ceil(base_span / dt)), int(round(1.0 / dt)))
    while True:
        span = n * dt
        s = -span + np.arange(n + 1) * dt
        if kind == "additive":
            z = ou_from_path(path, lam, -span, 0.0).values
            eta = make_eta(path, spec.eta, -span, 0.0).node_values(n + 1)
            integ = _cumtrapz(eta, dt)
            expo = 1.25 * lam * s - 2.0 * spec.alpha * (integ - integ[-1])
        else:
            z = ou_from_path(path, 1.0, -span, 0.0).values
            eta = None
            integ = _cumtrapz(z, dt)
            expo = (1.25 * lam * s - 2.0 * spec.alpha * (integ - integ[-1])
                    - 2.0 * spec.alpha * z)
        with np.errstate(over="ignore"):
            w = np.exp(expo)
        if w[0] < quad_tol:
            return s, w, z, eta, span, True
        if n >= cap:
            return s, w, z, eta, span, False
        n = min(2 * n, cap)


def absorbing_radius_additive(tau: float, path, spec: ProblemSpec,
                              quad_tol: float = DEFAULT_QUAD_TOL,
                              grid: Grid = DEFAULT_GRID,
                              c: float = DEFAULT_C) -> RadiusReport:
    """Absorbing radius for the additive model at observation time tau.

    R = c + c * int_{-S}^0 w(s) (|eps z|^p + |eps z|^q + (alpha eps eta z)^2) ds
          + c * int_{-S}^0 w(s) (||g(s+tau)||^2 + ||psi1||_1 + ||psi3||_q1^q1) ds

    with weight w(s) = exp((5/4) lam s - 2 alpha int_0^s eta dr), truncated
    where the weight falls below quad_tol.  The returned bound on ||u(tau)||^2
    is 2 ||eps h z(omega)||^2 + 2 R.  Warns when alpha exceeds the
    admissibility threshold for this eta.
    """
    if spec.noise_case != "additive":
        raise ValueError("spec is not the additive model")
    if spec.alpha > spec.alpha_max:
        warnings.warn(f"alpha={spec.alpha} exceeds the admissible threshold "
                      f"{spec.alpha_max:.6g}; the radius bound is heuristic there",
                      stacklevel=2)
    from .problem import check_growth_condition
    growth = check_growth_condition(spec, tau, grid=grid, quad_tol=quad_tol)
    s, w, z, eta, span, converged = _weight_window(path, spec, quad_tol, "additive")
    dt = s[1] - s[0]
    eps = spec.epsilon
    noise_term = (np.abs(eps * z) ** spec.p + np.abs(eps * z) ** spec.q
                  + (spec.alpha * eps * eta * z) ** 2)
    forcing = ForcingNorms(spec, grid)
    forcing_g = w * forcing.g_l2_sq(s + tau)
    forcing_psi = w * (forcing.psi1_l1(s + tau) + forcing.psi3_q1_pow(s + tau))
    parts = {
        "constant": c,
        "noise": c * float(np.trapezoid(w * noise_term, dx=dt)),
        "g": c * float(np.trapezoid(forcing_g, dx=dt)),
        "psi": c * float(np.trapezoid(forcing_psi, dx=dt)),
    }
    radius = parts["constant"] + parts["noise"] + parts["g"] + parts["psi"]
    hsq = float(np.sum(grid_arrays(grid).weights
                       * np.exp(-grid_arrays(grid).radial_sq)))
    shift_sq = (eps * float(z[-1])) ** 2 * hsq
    return RadiusReport(radius=radius, bound=2.0 * shift_sq + 2.0 * radius,
                        shift_sq=shift_sq, parts=parts, truncation=span,
                        converged=converged, growth_finite=growth.finite)


def absorbing_radius_multiplicative(tau: float, path, spec: ProblemSpec,
                                    quad_tol: float = DEFAULT_QUAD_TOL,
                                    grid: Grid = DEFAULT_GRID,
                                    c: float = DEFAULT_C) -> RadiusReport:
    """Absorbing radius for the multiplicative model.

    R = c + c * int_{-S}^0 w(s) (||psi1(s+tau)||_1 + ||g(s+tau)||^2) ds with
    weight w(s) = exp((5/4) lam s - 2 alpha int_0^s z dr - 2 alpha z(theta_s)).
    The bound on ||u(tau)||^2 is e^{2 alpha z(omega)} R.
    """
    if spec.noise_case != "multiplicative":
        raise ValueError("spec is not the multiplicative model")
    from .problem import check_growth_condition
    growth = check_growth_condition(spec, tau, grid=grid, quad_tol=quad_tol)
    s, w, z, _, span, converged = _weight_window(path, spec, quad_tol,
                                                 "multiplicative")
    dt = s[1] - s[0]
    forcing = ForcingNorms(spec, grid)
    parts = {
        "constant": c,
        "g": c * float(np.trapezoid(w * forcing.g_l2_sq(s + tau), dx=dt)),
        "psi": c * float(np.trapezoid(w * forcing.psi1_l1(s + tau), dx=dt)),
    }
    radius = parts["constant"] + parts["g"] + parts["psi"]
    bound = math.exp(2.0 * spec.alpha * float(z[-1])) * radius
    return RadiusReport(radius=radius, bound=bound, shift_sq=0.0, parts=parts,
                        truncation=span, converged=converged,
                        growth_finite=growth.finite)


def absorbing_radius_deterministic(tau: float, spec: ProblemSpec,
                                   quad_tol: float = DEFAULT_QUAD_TOL,
                                   grid: Grid = DEFAULT_GRID,
                                   c: float = DEFAULT_C,
                                   ds: float = 1e-3) -> RadiusReport:
    """The noise-free radius R0 = c + c int e^{(5/4) lam s} (||psi1||_1 + ||g||^2)."""
    span = math.log(1.0 / quad_tol) / (1.25 * spec.lam)
    n = int(math.ceil(span / ds))
    s = -(n * ds) + np.arange(n + 1) * ds
    w = np.exp(1.25 * spec.lam * s)
    forcing = ForcingNorms(spec, grid)
    parts = {
        "constant": c,
        "g": c * float(np.trapezoid(w * forcing.g_l2_sq(s + tau), dx=ds)),
        "psi": c * float(np.trapezoid(w * forcing.psi1_l1(s + tau), dx=ds)),
    }
    radius = parts["constant"] + parts["g"] + parts["psi"]
    return RadiusReport(radius=radius, bound=radius, shift_sq=0.0, parts=parts,
                        truncation=n * ds, converged=True, growth_finite=True)


def absorbing_bound(tau: float, path, spec: ProblemSpec,
                    quad_tol: float = DEFAULT_QUAD_TOL,
                    grid: Grid = DEFAULT_GRID, c: float = DEFAULT_C) -> float:
    """The case-appropriate absorbing bound on ||u(tau)||^2."""
    if spec.noise_case == "additive":
        return absorbing_radius_additive(tau, path, spec, quad_tol, grid, c).bound
    if spec.noise_case == "multiplicative":
        return absorbing_radius_multiplicative(tau, path, spec, quad_tol, grid, c).bound
    return absorbing_radius_deterministic(tau, spec, quad_tol, grid, c).bound


# ---------------------------------------------------------------------------
# Absorbing-entry experiment.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AbsorbingReport:
    """Entry of pullback endpoints into the absorbing ball.

    radius_sq is the largest per-path bound; entry_time is the first tested
    horizon from which every sampled trajectory satisfies its bound (None if
    some never does); per_path lists (seed, satisfied, margin) at the largest
    horizon; rows hold (seed, horizon, endpoint_l2_sq, bound, satisfied).
    """

    radius_sq: float
    entry_time: float | None
    per_path: list
    rows: list
    failures: list


def _absorb_task(args):
    (seed, tau, horizons, spec, grid, cfg, noise_dt, block_length,
     ball_radius, n_initials, sampler_seed, quad_tol, c) = args
    path = make_path(seed, noise_dt, block_length)
    bound = absorbing_bound(tau, path, spec, quad_tol, grid, c)
    initials = sample_initial_ball(grid, ball_radius, n_initials, sampler_seed)
    result = pullback_run(tau, horizons, initials, path, spec, cfg,
                          with_records=False)
    rows = []
    for h in horizons:
        members = result.ensembles[h].members
        worst = max((l2_sq(m) for m in members), default=float("nan"))
        rows.append((seed, h, worst, bound, bool(worst <= bound)))
    return rows, result.failures


def absorbing_check(tau: float, spec: ProblemSpec, horizons=(4.0, 8.0, 16.0, 32.0),
                    n_seeds: int = 16, n_initials: int = 4,
                    grid: Grid = DEFAULT_GRID,
                    cfg: StepperConfig = StepperConfig(),
                    noise_dt: float | None = None, block_length: float = 4.0,
                    base_seed: int = 0, ball_radius: float = 1.0,
                    sampler_seed: int = 1234,
                    quad_tol: float = DEFAULT_QUAD_TOL, c: float = DEFAULT_C,
                    workers: int = 1) -> AbsorbingReport:
    """Check that pullback endpoints enter the absorbing ball.

    For each seed, compares ||u(tau)||^2 at every horizon against the path's
    absorbing bound, with all initial states drawn from one fixed ball.
    """
    horizons = sorted(float(h) for h in horizons)
    noise_dt = cfg.dt if noise_dt is None else noise_dt
    tasks = [(base_seed + i, tau, horizons, spec, grid, cfg, noise_dt,
              block_length, ball_radius, n_initials, sampler_seed, quad_tol, c)
             for i in range(n_seeds)]
    results = _run_pool(_absorb_task, tasks, workers)
    rows, failures = [], []
    for r, f in results:
        rows.extend(r)
        failures.extend(f)
    sat_by_h = {h: all(r[4] for r in rows if r[1] == h) for h in horizons}
    entry = None
    for i, h in enumerate(horizons):
        if all(sat_by_h[hh] for hh in horizons[i:]):
            entry = h
            break
    largest = horizons[-1]
    per_path = [(r[0], r[4], r[3] - r[2]) for r in rows if r[1] == largest]
    radius_sq = max((r[3] for r in rows), default=float("nan"))
    return AbsorbingReport(radius_sq=radius_sq, entry_time=entry,
                           per_path=per_path, rows=rows, failures=failures)


# ---------------------------------------------------------------------------
# Energy audit.
# ---------------------------------------------------------------------------

def energy_audit(record: TrajectoryRecord, spec: ProblemSpec, path=None):
    """Audit the energy balance along a recorded trajectory.

    Additive model: evaluates the discrete residual of the energy identity

        d/dt ||v||^2 + 2 (lam - alpha eta) ||v||^2 + 2 ||grad w||_p^p
          = 2 eps z (|grad w|^{p-2} grad w, grad h) + 2 (f(t,x,w), v)
            + 2 (g, v) + 2 alpha eps eta z (h, v),      w = v + eps h z,

    with centered differences in time; the residual is O(dt + dx^2) on smooth
    data.  Multiplicative model: checks the corresponding differential
    inequality directionally, reporting max(0, lhs - rhs) per step.  Requires
    snapshots at consecutive node indices; returns (max |residual|, series).

    Noise samples are quadratured over the centered window as
    (z[k-1] + 2 z[k] + z[k+1]) / 4, matching the two step increments the
    window actually contains; sampling z at the node alone would inject the
    rough O(sqrt(dt)) mismatch between node values and step midpoints.
    """
    snaps = record.snapshots
    if len(snaps) < 3:
        raise ValueError("audit needs snapshots at three or more consecutive nodes")
    ks = sorted(snaps)
    interior = [k for k in ks if k - 1 in snaps and k + 1 in snaps]
    if not interior:
        raise ValueError("audit needs consecutive snapshot triples")
    grid = snaps[ks[0]].grid
    ctx = _context(spec, grid)
    arrs = grid_arrays(grid)
    wts = arrs.weights
    dt = record.dt
    z = record.z
    eta = record.eta
    energies = {k: l2_sq(snaps[k]) for k in ks}
    hfield = Field(grid, ctx.h)
    residuals = np.empty(len(interior))
    times = np.empty(len(interior))
    forcing = ForcingNorms(spec, grid) if record.case == "multiplicative" else None
    for i, k in enumerate(interior):
        t = float(record.times[k])
        v = snaps[k]
        dE = (energies[k + 1] - energies[k - 1]) / (2.0 * dt)
        zk = float(z[k - 1] + 2.0 * z[k] + z[k + 1]) / 4.0
        ek = float(eta[k - 1] + 2.0 * eta[k] + eta[k + 1]) / 4.0
        if record.case == "additive":
            w = Field(grid, v.values + (spec.epsilon * zk) * ctx.h)
            lhs = (dE + 2.0 * (spec.lam - spec.alpha * ek) * energies[k]
                   + 2.0 * p_dissipation(w, spec.p, spec.delta))
            rhs = (2.0 * spec.epsilon * zk
                   * flux_pairing(w, hfield, spec.p, spec.delta)
                   + 2.0 * float(np.sum(wts * ctx.f_of(t, w.values) * v.values))
                   + 2.0 * float(np.sum(wts * ctx.g_of(t) * v.values))
                   + 2.0 * spec.alpha * spec.epsilon * ek * zk
                   * float(np.sum(wts * ctx.h * v.values)))
            residuals[i] = lhs - rhs
        elif record.case == "multiplicative":
            lhs = (dE
                   + 2.0 * math.exp(spec.alpha * (spec.p - 2.0) * zk)
                   * p_dissipation(v, spec.p, spec.delta)
                   + (1.75 * spec.lam - 2.0 * spec.alpha * zk) * energies[k]
                   + 2.0 * spec.gamma1 * math.exp(spec.alpha * (spec.q - 2.0) * zk)
                   * float(np.sum(wts * np.abs(v.values) ** spec.q)))
            rhs = (2.0 * math.exp(-2.0 * spec.alpha * zk) * forcing.psi1_l1(t)
                   + (4.0 / spec.lam) * math.exp(-2.0 * spec.alpha * zk)
                   * forcing.g_l2_sq(t))
            residuals[i] = max(0.0, lhs - rhs)
        else:
            w = v
            lhs = (dE + 2.0 * spec.lam * energies[k]
                   + 2.0 * p_dissipation(w, spec.p, spec.delta))
            rhs = (2.0 * float(np.sum(wts * ctx.f_of(t, w.values) * v.values))
                   + 2.0 * float(np.sum(wts * ctx.g_of(t) * v.values)))
            residuals[i] = lhs - rhs
        times[i] = t
    return float(np.max(np.abs(residuals))), {"times": times, "residuals": residuals}


# ---------------------------------------------------------------------------
# Tail monitor.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailReport:
    """Tail masses of v outside each radius k at sampled sigma in [tau-1, tau].

    rows hold (seed, k, sigma, tail_plain, tail_rho, l2_sq); max_per_k maps k
    to the largest plain tail over (seed, sigma); monotone_in_k records the
    pointwise decrease across the ascending k list.
    """

    k_list: tuple
    sigmas: tuple
    rows: list
    max_per_k: dict
    monotone_in_k: bool
    failures: list


def _tail_task(args):
    (seed, tau, horizon, k_list, spec, grid, cfg, noise_dt, block_length,
     ball_radius, sampler_seed, sigma_idx) = args
    path = make_path(seed, noise_dt, block_length)
    initials = sample_initial_ball(grid, ball_radius, 1, sampler_seed)
    result = pullback_run(tau, [horizon], initials, path, spec, cfg,
                          snapshot_indices=sigma_idx, with_records=True)
    rows = []
    rec = result.records.get((horizon, 0))
    if rec is not None:
        for k_idx in sigma_idx:
            snap = rec.snapshots.get(k_idx)
            if snap is None:
                continue
            sigma = tau - horizon + k_idx * cfg.dt
            base = l2_sq(snap)
            for k in k_list:
                tm = tail_mass(snap, k)
                rows.append((seed, k, sigma, tm.plain, tm.rho_weighted, base))
    return rows, result.failures


def tail_check(tau: float, spec: ProblemSpec, horizon: float = 32.0,
               k_list=(2.0, 3.0, 4.0), n_seeds: int = 16,
               grid: Grid = DEFAULT_GRID, cfg: StepperConfig = StepperConfig(),
               noise_dt: float | None = None, block_length: float = 4.0,
               base_seed: int = 0, ball_radius: float = 1.0,
               sampler_seed: int = 1234, n_sigma: int = 8,
               workers: int = 1) -> TailReport:
    """Measure how much of v sits outside radius k along the last time unit.

    Samples n_sigma evenly spaced observation times in [tau-1, tau] (snapped
    to the step grid) at the given pullback horizon.  k_list must be
    ascending and inside the grid; tails decrease pointwise in k.
    """
    if horizon < 1.0:
        raise ValueError("tail_check samples the last time unit; horizon >= 1")
    k_list = tuple(float(k) for k in k_list)
    if list(k_list) != sorted(k_list):
        raise ValueError("k_list must be ascending")
    if k_list and k_list[-1] >= grid.half_width:
        raise ValueError("k values must be < grid half_width")
    if k_list and grid.half_width <= math.sqrt(2.0) * k_list[-1]:
        warnings.warn("half_width is not beyond sqrt(2) * max(k); the cutoff "
                      "plateau leaves the domain", stacklevel=2)
    noise_dt = cfg.dt if noise_dt is None else noise_dt
    nsteps = snap_steps(horizon, cfg.dt, "horizon")
    sigma_frac = np.linspace(0.0, 1.0, n_sigma)
    sigma_idx = sorted({nsteps - int(round(f / cfg.dt)) for f in (1.0 - sigma_frac)})
    sigma_idx = [i for i in sigma_idx if 0 <= i <= nsteps]
    tasks = [(base_seed + i, tau, float(horizon), k_list, spec, grid, cfg,
              noise_dt, block_length, ball_radius, sampler_seed, sigma_idx)
             for i in range(n_seeds)]
    results = _run_pool(_tail_task, tasks, workers)
    rows, failures = [], []
    for r, f in results:
        rows.extend(r)
        failures.extend(f)
    max_per_k = {k: max((r[3] for r in rows if r[1] == k), default=float("nan"))
                 for k in k_list}
    monotone = True
    by_loc = {}
    for r in rows:
        by_loc.setdefault((r[0], r[2]), {})[r[1]] = r[3]
    for vals in by_loc.values():
        seq = [vals[k] for k in k_list if k in vals]
        if any(seq[i + 1] > seq[i] + 1e-15 for i in range(len(seq) - 1)):
            monotone = False
    sigmas = tuple(sorted({r[2] for r in rows}))
    return TailReport(k_list=k_list, sigmas=sigmas, rows=rows,
                      max_per_k=max_per_k, monotone_in_k=monotone,
                      failures=failures)


# ---------------------------------------------------------------------------
# Attractor estimation and the noise-intensity sweep.
# ---------------------------------------------------------------------------

def estimate_attractor(tau: float, spec: ProblemSpec, path, horizon: float,
                       n_initials: int = 4, grid: Grid = DEFAULT_GRID,
                       cfg: StepperConfig = StepperConfig(),
                       cluster_tol: float | None = None,
                       sampler_seed: int = 1234,
                       quad_tol: float = DEFAULT_QUAD_TOL, c: float = DEFAULT_C,
                       check_contraction: bool = True) -> EndpointEnsemble:
    """Estimate the pullback attracting set at tau by long-horizon endpoints.

    Initial states come from the absorbing ball of the given path; endpoints
    closer than cluster_tol (default 1e-4 times the absorbing radius) are
    merged.  Warns when the endpoint spread at the full horizon exceeds the
    spread at half the horizon, which signals non-contraction.
    """
    bound = absorbing_bound(tau, path, spec, quad_tol, grid, c)
    radius = math.sqrt(max(bound, 1e-30))
    if cluster_tol is None:
        cluster_tol = 1e-4 * radius
    initials = sample_initial_ball(grid, radius, n_initials, sampler_seed)
    half = snap_steps(horizon, cfg.dt, "horizon") // 2 * cfg.dt
    horizons = [half, float(horizon)] if (check_contraction and 0.0 < half < horizon) \
        else [float(horizon)]
    result = pullback_run(tau, horizons, initials, path, spec, cfg,
                          with_records=False)
    ens = result.ensembles[float(horizon)]
    if check_contraction and len(horizons) == 2:
        s_half = result.ensembles[half].spread()
        s_full = ens.spread()
        if s_full > s_half + cluster_tol:
            warnings.warn(f"endpoint spread grew from {s_half:.3g} at horizon "
                          f"{half} to {s_full:.3g} at {horizon}; "
                          "no contraction yet", stacklevel=2)
    kept = []
    w = grid_arrays(grid).weights
    for m in ens.members:
        if all(math.sqrt(float(np.sum(w * (m.values - k.values) ** 2)))
               >= cluster_tol for k in kept):
            kept.append(m)
    seed = getattr(path.base if hasattr(path, "base") else path, "seed", None)
    return EndpointEnsemble(members=tuple(kept),
                            tag=EnsembleTag(tau=tau, seed=seed,
                                            alpha=spec.alpha, horizon=horizon))


@dataclass(frozen=True)
class UscReport:
    """Distances dist(A_alpha, A_0) per (alpha, seed) and their medians."""

    alphas: tuple
    seeds: tuple
    distances: np.ndarray
    medians: tuple
    failures: list


def _usc_task(args):
    (alpha, seed, tau, spec, grid, cfg, noise_dt, block_length, horizon,
     n_initials, sampler_seed, quad_tol, c) = args
    case = "multiplicative" if alpha > 0 else "deterministic"
    spec_a = spec.with_alpha(alpha, case)
    path = make_path(seed, noise_dt, block_length)
    ens = estimate_attractor(tau, spec_a, path, horizon, n_initials, grid, cfg,
                             sampler_seed=sampler_seed, quad_tol=quad_tol, c=c,
                             check_contraction=False)
    return ens


def usc_sweep(tau: float, spec: ProblemSpec, alphas=(0.4, 0.2, 0.1, 0.05),
              n_seeds: int = 8, horizon: float = 16.0,
              n_initials: int = 2, grid: Grid = DEFAULT_GRID,
              cfg: StepperConfig = StepperConfig(),
              noise_dt: float | None = None, block_length: float = 4.0,
              base_seed: int = 0, sampler_seed: int = 1234,
              quad_tol: float = DEFAULT_QUAD_TOL, c: float = DEFAULT_C,
              workers: int = 1) -> UscReport:
    """Compare the noisy attracting sets against the noise-free one as the
    multiplicative intensity alpha decreases toward zero.

    Estimates A_alpha per (alpha, seed) and A_0 once (deterministic run), and
    reports dist(A_alpha, A_0) with per-alpha medians.  alphas must be
    strictly decreasing and nonnegative.
    """
    alphas = tuple(float(a) for a in alphas)
    if any(a < 0 for a in alphas):
        raise ValueError("alphas must be nonnegative")
    if any(alphas[i + 1] >= alphas[i] for i in range(len(alphas) - 1)):
        raise ValueError("alphas must be strictly decreasing")
    noise_dt = cfg.dt if noise_dt is None else noise_dt
    spec0 = spec.with_alpha(0.0, "deterministic")
    a0 = estimate_attractor(tau, spec0, None, horizon, n_initials, grid, cfg,
                            sampler_seed=sampler_seed, quad_tol=quad_tol, c=c,
                            check_contraction=False)
    seeds = tuple(base_seed + i for i in range(n_seeds))
    tasks = [(a, s, tau, spec, grid, cfg, noise_dt, block_length, float(horizon),
              n_initials, sampler_seed, quad_tol, c)
             for a in alphas for s in seeds]
    ensembles = _run_pool(_usc_task, tasks, workers)
    dist = np.empty((len(alphas), len(seeds)))
    idx = 0
    for i in range(len(alphas)):
        for j in range(len(seeds)):
            dist[i, j] = hausdorff_semidistance(ensembles[idx], a0)
            idx += 1
    medians = tuple(float(np.median(dist[i])) for i in range(len(alphas)))
    return UscReport(alphas=alphas, seeds=seeds, distances=dist,
                     medians=medians, failures=[])


def alpha_solution_distances(tau: float, u0: Field, path, spec: ProblemSpec,
                             cfg: StepperConfig, alphas=(0.4, 0.2, 0.1, 0.05),
                             span: float = 1.0) -> list:
    """||u_alpha(tau+span) - u_0(tau+span)|| for the multiplicative model.

    The noise-free reference uses the deterministic stepper; one value per
    alpha, in the given order.
    """
    ref = cocycle_apply(span, tau, path, u0,
                        spec.with_alpha(0.0, "deterministic"), cfg)
    w = grid_arrays(u0.grid).weights
    out = []
    for a in alphas:
        ua = cocycle_apply(span, tau, path, u0,
                           spec.with_alpha(float(a), "multiplicative"), cfg)
        d = ua.values - ref.values
        out.append(math.sqrt(float(np.sum(w * d * d))))
    return out


# ---------------------------------------------------------------------------
# Worker pool.
# ---------------------------------------------------------------------------

def _run_pool(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=int(workers)) as ex:
        return list(ex.map(fn, tasks))
