"""Time integration: IMEX exponential-Euler steppers for the additive,
multiplicative, and deterministic models, the solution operator built from
them, and pullback runs.

The linear damping is integrated exactly and everything else explicitly:

    v_{k+1} = e^(-a dt) v_k + ((1 - e^(-a dt))/a) * RHS(t_k, v_k),

with a = lam - alpha*eta for the additive model and a = lam otherwise.  The
noise enters through the stationary OU value z: the additive model advances
v = u - epsilon*h*z, the multiplicative model v = e^(-alpha z) u.  z and eta
are sampled at step midpoints (left endpoint for the first substep when the
divergence guard splits a step).

Two reproducibility rules shape this module.  First, all step times are
integer multiples of dt, and time-periodic coefficients are evaluated at the
step index modulo the period, so runs started a whole period apart execute
identical float operations.  Second, the solution operator keeps the
untransformed state u between steps and performs the u -> v -> u transform
round trip inside every step; composing two runs then executes literally the
same operations as one long run, and the composition law holds exactly
rather than approximately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import (EndpointEnsemble, EnsembleTag, Field, Grid, _face_data,
                     grid_arrays, make_field)
from .noise import make_eta, ou_from_path, snap_steps
from .problem import ProblemSpec, compile_expression


@dataclass(frozen=True)
class StepperConfig:
    """Step size and guard policy for the time integrators."""

    dt: float = 1e-3
    scheme: str = "imex"
    substep_limit: int = 8
    energy_tol: float = 1e-3

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.scheme not in ("imex", "explicit"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.substep_limit < 0:
            raise ValueError("substep_limit must be >= 0")
        if self.energy_tol <= 0:
            raise ValueError("energy_tol must be positive")


class StiffnessError(RuntimeError):
    """Raised when the divergence guard exhausts its substep budget."""

    def __init__(self, report: dict):
        super().__init__(
            f"step at t={report.get('t')} still diverges after "
            f"{report.get('halvings')} halvings (norm {report.get('norm_before'):.3g} "
            f"-> {report.get('norm_after'):.3g}); suggested dt <= {report.get('suggested_dt'):.3g}")
        self.report = report


@dataclass
class TrajectoryRecord:
    """Per-node series along one run plus optional field snapshots.

    energy series is ||v||^2 at the nodes; the dissipation series hold the
    face quadrature of ||grad w||_p^p and the node quadrature of ||w||_q^q of
    the step's dissipation argument (w = v + epsilon*h*z for the additive
    model, v itself otherwise).  snapshots maps node index -> v-field.
    """

    case: str
    tau: float
    dt: float
    times: np.ndarray = None
    l2_sq: np.ndarray = None
    diss_p: np.ndarray = None
    diss_q: np.ndarray = None
    z: np.ndarray = None
    eta: np.ndarray = None
    p: float = 3.0
    q: float = 4.0
    snapshots: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("t,l2_sq,grad_p,q_norm,z,eta\n")
            gp = np.asarray(self.diss_p) ** (1.0 / self.p)
            qn = np.asarray(self.diss_q) ** (1.0 / self.q)
            for i, t in enumerate(self.times):
                fh.write(f"{t:.17g},{self.l2_sq[i]:.17g},{gp[i]:.17g},"
                         f"{qn[i]:.17g},{self.z[i]:.17g},{self.eta[i]:.17g}\n")


# ---------------------------------------------------------------------------
# Model context: grid-bound profiles and coefficient closures.
# ---------------------------------------------------------------------------

class _ModelContext:
    def __init__(self, spec: ProblemSpec, grid: Grid):
        self.spec = spec
        self.grid = grid
        arrs = grid_arrays(grid)
        self.arrs = arrs
        self.h = make_field(grid, np.exp(-0.5 * arrs.radial_sq)).values
        self.gauss = make_field(grid, np.exp(-arrs.radial_sq)).values
        self.x = arrs.x
        self.y = arrs.y if grid.dim == 2 else 0.0
        nl = spec.nonlinearity
        self._custom = compile_expression(nl.expression) if nl.kind == "custom" else None

    def f_of(self, t: float, w: np.ndarray) -> np.ndarray:
        spec = self.spec
        if self._custom is not None:
            out = self._custom(t=t, x=self.x, y=self.y, s=w)
            out = np.asarray(out, dtype=float)
            return np.broadcast_to(out, w.shape) if out.shape != w.shape else out
        return (-spec.gamma * np.abs(w) ** (spec.q - 2.0) * w
                + (spec.nonlinearity.phi_amp * math.sin(2.0 * math.pi * t / spec.period))
                * self.gauss)

    def g_of(self, t: float) -> np.ndarray:
        spec = self.spec
        return (spec.g_amp * math.cos(2.0 * math.pi * t / spec.period)) * self.gauss


_CTX_CACHE: dict = {}


def _context(spec: ProblemSpec, grid: Grid) -> _ModelContext:
    key = (spec, grid)
    ctx = _CTX_CACHE.get(key)
    if ctx is None:
        ctx = _ModelContext(spec, grid)
        if len(_CTX_CACHE) > 64:
            _CTX_CACHE.clear()
        _CTX_CACHE[key] = ctx
    return ctx


def _decay_coeffs(a: float, dt: float):
    if a == 0.0:
        return 1.0, dt
    return math.exp(-a * dt), -math.expm1(-a * dt) / a


def _lap_diss(values: np.ndarray, grid: Grid, p: float, delta: float):
    """p-Laplace array plus its dissipation pairing, sharing the face data."""
    dx = grid.dx
    faces = _face_data(values, grid.dim, dx, p, delta)
    out = np.zeros_like(values)
    if grid.dim == 1:
        gx, coef = faces[0]
        flux = coef * gx
        out[1:-1] = np.diff(flux) / dx
        diss = float(np.sum(coef * gx * gx) * dx)
    else:
        (gx, cx), (gy, cy) = faces
        fx = cx * gx
        fy = cy * gy
        out[1:-1, :] += (fx[1:, :] - fx[:-1, :]) / dx
        out[:, 1:-1] += (fy[:, 1:] - fy[:, :-1]) / dx
        diss = float((np.sum(cx * gx * gx) + np.sum(cy * gy * gy)) * dx * dx)
    return out, diss


def _apply_update(vv, a, dtt, rhs, ctx, scheme):
    if scheme == "imex":
        decay, gain = _decay_coeffs(a, dtt)
        out = decay * vv + gain * rhs
    else:
        out = vv + dtt * (rhs - a * vv)
    out[ctx.arrs.boundary] = 0.0
    return out


def _single_step(case: str, vv: np.ndarray, t_eval: float, dtt: float,
                 z_mid: float, eta_mid: float, ctx: _ModelContext, scheme: str):
    """One explicit/IMEX update; returns (v_new, diss_p, diss_q)."""
    spec = ctx.spec
    w = ctx.arrs.weights
    if case == "additive":
        warg = vv + (spec.epsilon * z_mid) * ctx.h
        lap, diss = _lap_diss(warg, ctx.grid, spec.p, spec.delta)
        rhs = ((lap + ctx.f_of(t_eval, warg)) + ctx.g_of(t_eval)) \
            + (spec.alpha * spec.epsilon * eta_mid * z_mid) * ctx.h
        a = spec.lam - spec.alpha * eta_mid
        dq = float(np.sum(w * np.abs(warg) ** spec.q))
    elif case == "multiplicative":
        lap, diss = _lap_diss(vv, ctx.grid, spec.p, spec.delta)
        scale = math.exp(spec.alpha * z_mid)
        rhs = ((math.exp(spec.alpha * (spec.p - 2.0) * z_mid) * lap
                + (spec.alpha * z_mid) * vv)
               + (1.0 / scale) * ctx.f_of(t_eval, scale * vv)) \
            + (1.0 / scale) * ctx.g_of(t_eval)
        a = spec.lam
        dq = float(np.sum(w * np.abs(vv) ** spec.q))
    else:
        lap, diss = _lap_diss(vv, ctx.grid, spec.p, spec.delta)
        rhs = (lap + ctx.f_of(t_eval, vv)) + ctx.g_of(t_eval)
        a = spec.lam
        dq = float(np.sum(w * np.abs(vv) ** spec.q))
    return _apply_update(vv, a, dtt, rhs, ctx, scheme), diss, dq


def _norm_ok(l2_old: float, l2_new: float) -> bool:
    return math.isfinite(l2_new) and l2_new <= 10.0 * l2_old + 1e-3


def _weighted_l2(values: np.ndarray, ctx: _ModelContext) -> float:
    return math.sqrt(float(np.sum(ctx.arrs.weights * values * values)))


def _macro_step(case, vv, t_eval, dtt, z0, z1, eta0, eta1, ctx, cfg):
    """One dt step with the divergence guard; halves into substeps on blowup."""
    z_mid = 0.5 * (z0 + z1)
    eta_mid = 0.5 * (eta0 + eta1)
    cand, diss, dq = _single_step(case, vv, t_eval, dtt, z_mid, eta_mid, ctx, cfg.scheme)
    l2_old = _weighted_l2(vv, ctx)
    l2_new = _weighted_l2(cand, ctx)
    if _norm_ok(l2_old, l2_new):
        return cand, diss, dq, l2_new
    for halvings in range(1, cfg.substep_limit + 1):
        nsub = 2 ** halvings
        hs = dtt / nsub
        cur = vv
        l2_cur = l2_old
        good = True
        for i in range(nsub):
            if i == 0:
                zs, es = z0, eta0          # left endpoint for the first substep
            else:
                frac = (i + 0.5) / nsub
                zs = z0 + frac * (z1 - z0)
                es = eta0 + frac * (eta1 - eta0)
            nxt, diss, dq = _single_step(case, cur, t_eval + i * hs, hs, zs, es,
                                         ctx, cfg.scheme)
            l2_nxt = _weighted_l2(nxt, ctx)
            if not _norm_ok(l2_cur, l2_nxt):
                good = False
                break
            cur, l2_cur = nxt, l2_nxt
        if good:
            return cur, diss, dq, l2_cur
    raise StiffnessError({
        "t": t_eval, "dt": dtt, "halvings": cfg.substep_limit,
        "norm_before": l2_old, "norm_after": l2_new,
        "suggested_dt": stable_dt_bound_values(vv, ctx.grid, ctx.spec),
    })


def stable_dt_bound_values(values: np.ndarray, grid: Grid, spec: ProblemSpec,
                           safety: float = 0.2) -> float:
    """Empirical explicit-diffusion bound safety * dx^p / max face coefficient."""
    faces = _face_data(values, grid.dim, grid.dx, spec.p, spec.delta)
    peak = max(float(np.max(coef)) for _, coef in faces)
    return safety * grid.dx ** spec.p / max(peak, 1e-12)


def stable_dt_bound(u: Field, spec: ProblemSpec, safety: float = 0.2) -> float:
    return stable_dt_bound_values(u.values, u.grid, spec, safety)


# ---------------------------------------------------------------------------
# Public single-step API (takes literal time and scalar noise samples).
# ---------------------------------------------------------------------------

def step_additive(v: Field, t: float, z_t: float, eta_t: float,
                  spec: ProblemSpec, cfg: StepperConfig) -> Field:
    """Advance the additive-model transformed state v by one dt."""
    ctx = _context(spec, v.grid)
    out, _, _, _ = _macro_step("additive", v.values, t, cfg.dt,
                               z_t, z_t, eta_t, eta_t, ctx, cfg)
    return Field(v.grid, out)


def step_multiplicative(v: Field, t: float, z_t: float,
                        spec: ProblemSpec, cfg: StepperConfig) -> Field:
    """Advance the multiplicative-model transformed state v by one dt."""
    ctx = _context(spec, v.grid)
    out, _, _, _ = _macro_step("multiplicative", v.values, t, cfg.dt,
                               z_t, z_t, 0.0, 0.0, ctx, cfg)
    return Field(v.grid, out)


def step_deterministic(u: Field, t: float, spec: ProblemSpec,
                       cfg: StepperConfig) -> Field:
    """Advance the noise-free model by one dt."""
    ctx = _context(spec, u.grid)
    out, _, _, _ = _macro_step("deterministic", u.values, t, cfg.dt,
                               0.0, 0.0, 0.0, 0.0, ctx, cfg)
    return Field(u.grid, out)


# ---------------------------------------------------------------------------
# State transforms between the equation variable u and the integrated v.
# ---------------------------------------------------------------------------

def transform_u_to_v(u: Field, z: float, spec: ProblemSpec) -> Field:
    if spec.noise_case == "additive":
        ctx = _context(spec, u.grid)
        return Field(u.grid, u.values - (spec.epsilon * z) * ctx.h)
    if spec.noise_case == "multiplicative":
        return Field(u.grid, math.exp(-spec.alpha * z) * u.values)
    return u.copy()


def transform_v_to_u(v: Field, z: float, spec: ProblemSpec) -> Field:
    if spec.noise_case == "additive":
        ctx = _context(spec, v.grid)
        return Field(v.grid, v.values + (spec.epsilon * z) * ctx.h)
    if spec.noise_case == "multiplicative":
        return Field(v.grid, math.exp(spec.alpha * z) * v.values)
    return v.copy()


# ---------------------------------------------------------------------------
# The solution operator and pullback runs.
# ---------------------------------------------------------------------------

def _noise_arrays(case: str, path, spec: ProblemSpec, span: float, dt: float,
                  nsteps: int):
    if case == "additive":
        z = ou_from_path(path, spec.lam, 0.0, span, dt).values
        eta = make_eta(path, spec.eta, 0.0, span, dt).node_values(nsteps + 1)
    elif case == "multiplicative":
        z = ou_from_path(path, 1.0, 0.0, span, dt).values
        eta = np.zeros(nsteps + 1)
    else:
        z = np.zeros(nsteps + 1)
        eta = np.zeros(nsteps + 1)
    return z, eta


def cocycle_apply(t: float, tau: float, path, u_tau: Field, spec: ProblemSpec,
                  cfg: StepperConfig, snapshot_indices=None,
                  with_record: bool = False):
    """The solution operator: evolve u_tau for duration t, starting at tau.

    The path argument carries the noise; its elapsed-time values drive the
    run, so passing a shifted view realizes the shifted noise.  t = 0 returns
    a copy of the input.  Composition over consecutive legs reproduces the
    long run exactly, and time-periodic coefficients make runs a whole period
    apart identical.

    With with_record=True also returns a TrajectoryRecord whose snapshots
    hold the transformed state v at the requested node indices.
    """
    dt = cfg.dt
    nsteps = snap_steps(t, dt, "t")
    if nsteps < 0:
        raise ValueError("duration t must be >= 0")
    tau_k = snap_steps(tau, dt, "tau")
    m = snap_steps(spec.period, dt, "period")
    if m < 1:
        raise ValueError("period must be a positive multiple of dt")
    case = spec.noise_case
    grid = u_tau.grid
    ctx = _context(spec, grid)
    want = set(int(i) for i in snapshot_indices) if snapshot_indices else set()

    record = TrajectoryRecord(case=case, tau=tau, dt=dt, p=spec.p, q=spec.q) \
        if with_record else None
    if nsteps == 0:
        out = u_tau.copy()
        if with_record:
            z, eta = _noise_arrays(case, path, spec, 0.0, dt, 0)
            vv = transform_u_to_v(out, float(z[0]), spec)
            arg0 = vv.values if case != "additive" else out.values
            record.times = np.array([float(tau)])
            record.l2_sq = np.array([_weighted_l2(vv.values, ctx) ** 2])
            record.diss_p = np.array([_lap_diss(arg0, grid, spec.p, spec.delta)[1]])
            record.diss_q = np.array([float(np.sum(ctx.arrs.weights
                                                   * np.abs(arg0) ** spec.q))])
            record.z = z
            record.eta = eta
            if 0 in want:
                record.snapshots[0] = vv
            return out, record
        return out

    z, eta = _noise_arrays(case, path, spec, nsteps * dt, dt, nsteps)
    state = u_tau.values.copy()
    eps = spec.epsilon
    alpha = spec.alpha

    l2s = np.empty(nsteps + 1)
    dps = np.empty(nsteps + 1)
    dqs = np.empty(nsteps + 1)

    vv_new = None
    for k in range(nsteps):
        t_eval = ((tau_k + k) % m) * dt
        if case == "additive":
            vv = state - (eps * z[k]) * ctx.h
        elif case == "multiplicative":
            vv = math.exp(-alpha * z[k]) * state
        else:
            vv = state
        if with_record:
            l2s[k] = float(np.sum(ctx.arrs.weights * vv * vv))
            if k in want:
                record.snapshots[k] = Field(grid, vv.copy())
        vv_new, diss, dq, _ = _macro_step(case, vv, t_eval, dt, z[k], z[k + 1],
                                          eta[k], eta[k + 1], ctx, cfg)
        if with_record:
            dps[k + 1] = diss
            dqs[k + 1] = dq
        if case == "additive":
            state = vv_new + (eps * z[k + 1]) * ctx.h
        elif case == "multiplicative":
            state = math.exp(alpha * z[k + 1]) * vv_new
        else:
            state = vv_new

    out = Field(grid, state)
    if not with_record:
        return out
    l2s[nsteps] = float(np.sum(ctx.arrs.weights * vv_new * vv_new))
    if nsteps in want:
        record.snapshots[nsteps] = Field(grid, vv_new.copy())
    # At node times the additive dissipation argument w = v + eps*h*z is u
    # itself; the multiplicative and deterministic arguments are v.
    if case == "multiplicative":
        arg0 = math.exp(-alpha * z[0]) * u_tau.values
    else:
        arg0 = u_tau.values
    dps[0] = _lap_diss(arg0, grid, spec.p, spec.delta)[1]
    dqs[0] = float(np.sum(ctx.arrs.weights * np.abs(arg0) ** spec.q))
    record.times = tau + np.arange(nsteps + 1) * dt
    record.l2_sq = l2s
    record.diss_p = dps
    record.diss_q = dqs
    record.z = z
    record.eta = eta
    return out, record


@dataclass
class PullbackResult:
    """Endpoint ensembles per horizon plus the per-run records."""

    ensembles: dict
    records: dict
    failures: list


def pullback_run(tau: float, horizons, initial_set, path, spec: ProblemSpec,
                 cfg: StepperConfig, snapshot_indices=None,
                 with_records: bool = True) -> PullbackResult:
    """Evolve each initial state from tau - horizon up to tau, per horizon.

    Uses the run started at tau - horizon with the noise shifted back by the
    horizon, which is the pullback convention: larger horizons look further
    into the past while the observation time stays tau.  Failed runs are
    recorded as annotations and skipped in the ensembles.
    """
    from .noise import shift
    horizons = list(horizons)
    if any(h < 0 for h in horizons):
        raise ValueError("horizons must be nonnegative")
    if sorted(horizons) != horizons:
        raise ValueError("horizons must be ascending")
    ensembles = {}
    records = {}
    failures = []
    seed = getattr(path.base if hasattr(path, "base") else path, "seed", None)
    for h in horizons:
        view = shift(path, -h) if path is not None else None
        members = []
        for idx, u0 in enumerate(initial_set):
            try:
                res = cocycle_apply(h, tau - h, view, u0, spec, cfg,
                                    snapshot_indices=snapshot_indices,
                                    with_record=with_records)
            except StiffnessError as exc:
                failures.append({"horizon": h, "initial": idx,
                                 "report": exc.report})
                continue
            if with_records:
                endpoint, rec = res
                records[(h, idx)] = rec
            else:
                endpoint = res
            members.append(endpoint)
        ensembles[h] = EndpointEnsemble(
            members=tuple(members),
            tag=EnsembleTag(tau=tau, seed=seed, alpha=spec.alpha, horizon=h))
    return PullbackResult(ensembles=ensembles, records=records, failures=failures)
