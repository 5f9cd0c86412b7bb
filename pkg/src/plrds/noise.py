"""Reproducible two-sided Brownian paths and derived Ornstein-Uhlenbeck signals.

The driving path is sampled lazily in fixed-length blocks, one counter-keyed
substream per signed block index, so a frozen realization can be extended
arbitrarily far backward or forward without disturbing values that were
already produced.  Every derived quantity (path values on the step grid, OU
values at a given rate) is a pure function of (seed, dt, block_length) and the
query location, independent of the order or extent of earlier queries: two
runs that look at overlapping windows see bitwise-identical numbers.  That is
what makes shift-composition and window-restart comparisons exact instead of
merely close.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

QUAD_TOL = 1e-12

_GRID_RTOL = 1e-9
_UINT_MASK = 0xFFFFFFFFFFFFFFFF


def snap_steps(value: float, dt: float, name: str = "time") -> int:
    """Return value/dt as an int, requiring value to sit on the dt grid."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    k = int(round(value / dt))
    if abs(value - k * dt) > _GRID_RTOL * max(1.0, abs(value)):
        raise ValueError(f"{name}={value!r} is not an integer multiple of dt={dt!r}")
    return k


# Anchor kernel: dot-product weights evaluating
#   z(T) = omega(T) - e^{-rate*S} omega(T-S)
#          - rate * int_{-S}^{0} e^{rate*tau} omega(T + tau) dtau
# over a window [-S, 0] truncated where the exponential falls below quad_tol.
# The weights integrate e^{rate*tau} against the hat basis of the node grid,
# so the quadrature is EXACT for the piecewise-linear interpolant of omega --
# the same input convention the in-block update integrates exactly.  Plain
# trapezoid weights would be fatally biased here: their O(dt^2) error on the
# exponential leaves a residue of roughly (rate*dt)^2/12 * omega(T) in every
# anchor, i.e. a Brownian-proportional contamination of z that a time average
# integrates into super-diffusive growth instead of averaging away.
_ANCHOR_CACHE: dict = {}


def _anchor_kernel(rate: float, dt: float, quad_tol: float = QUAD_TOL):
    key = (float(rate), float(dt), float(quad_tol))
    hit = _ANCHOR_CACHE.get(key)
    if hit is not None:
        return hit
    steps = int(math.ceil(-math.log(quad_tol) / (rate * dt)))
    tau = (np.arange(steps + 1) - steps) * dt
    x = rate * dt
    r2d = rate * rate * dt
    wts = np.exp(rate * tau) * (4.0 * math.sinh(0.5 * x) ** 2 / r2d)
    wts[0] = math.exp(rate * tau[0]) * (math.expm1(x) - x) / r2d
    wts[-1] = (x + math.expm1(-x)) / r2d
    bfac = math.exp(rate * tau[0])       # e^{-rate*S}, the boundary weight
    _ANCHOR_CACHE[key] = (steps, wts, bfac)
    return steps, wts, bfac


class _OuDerivable:
    """Mixin: canonical OU values for anything exposing a sample grid.

    OU values are organized in blocks of K = steps_per_block // m entries at
    step m*dt.  Each block starts from a fresh quadrature anchor at the block
    boundary and advances by the exact update for piecewise-linear input,

        z_{k+1} = e^{-rate*dt} z_k + (omega_{k+1}-omega_k) * (1-e^{-rate*dt})/(rate*dt),

    so the value at a given index never depends on how large a window was
    requested.  The anchor quadrature is exact for the same piecewise-linear
    input, so its mismatch with the value recursed out of the previous block
    is truncation-sized (the quad_tol tail weight, far below solver error).
    """

    def ou_grid_values(self, rate: float, k0: int, k1: int, m: int = 1) -> np.ndarray:
        """OU values at indices k0..k1 (inclusive) of the coarse grid m*dt."""
        if rate <= 0:
            raise ValueError(f"rate must be positive, got {rate!r}")
        m = int(m)
        if m < 1 or self.steps_per_block % m:
            raise ValueError("coarse step must divide the block length")
        if k1 < k0:
            raise ValueError("empty index range")
        kblock = self.steps_per_block // m
        with self._lock:
            cache = self._ou.setdefault((float(rate), m), {})
            out = np.empty(k1 - k0 + 1)
            for j in range(k0 // kblock, k1 // kblock + 1):
                blk = cache.get(j)
                if blk is None:
                    blk = self._ou_block(rate, m, j, kblock)
                    cache[j] = blk
                lo = max(k0, j * kblock)
                hi = min(k1, (j + 1) * kblock - 1)
                if hi >= lo:
                    out[lo - k0 : hi - k0 + 1] = blk[lo - j * kblock : hi - j * kblock + 1]
        return out

    def _ou_block(self, rate: float, m: int, j: int, kblock: int) -> np.ndarray:
        dt_ou = m * self.dt
        steps, wts, bfac = _anchor_kernel(rate, dt_ou)
        anchor = j * kblock            # OU index of the block boundary
        pi = anchor * m                # path-grid index of the same time
        win = self.grid_values(pi - steps * m, pi)[::m]
        z0 = win[-1] - bfac * win[0] - rate * float(np.dot(wts, win))
        if kblock == 1:
            return np.array([z0])
        nodes = self.grid_values(pi, pi + (kblock - 1) * m)[::m]
        dw = np.diff(nodes)
        decay = math.exp(-rate * dt_ou)
        gain = -math.expm1(-rate * dt_ou) / (rate * dt_ou)
        rest, _ = lfilter([gain], [1.0, -decay], dw, zi=np.array([decay * z0]))
        return np.concatenate(([z0], rest))


class NoisePath(_OuDerivable):
    """Two-sided Brownian path on a uniform grid with omega(0) = 0.

    Values at grid index i (time i*dt, i any integer) are deterministic in
    (seed, dt, block_length, i).  Between grid nodes the path is interpolated
    linearly.
    """

    def __init__(self, seed: int, dt: float, block_length: float = 4.0):
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt!r}")
        spb = snap_steps(block_length, dt, "block_length")
        if spb < 1:
            raise ValueError("block_length must be a positive multiple of dt")
        self.seed = int(seed)
        self.dt = float(dt)
        self.block_length = float(block_length)
        self.steps_per_block = spb
        self._inc: dict = {}
        self._blk: dict = {}
        self._bnd: dict = {0: 0.0}
        self._ou: dict = {}
        self._lock = threading.RLock()

    def __repr__(self):
        return (f"NoisePath(seed={self.seed}, dt={self.dt}, "
                f"block_length={self.block_length})")

    def _increments(self, j: int) -> np.ndarray:
        inc = self._inc.get(j)
        if inc is None:
            key = np.array([self.seed & _UINT_MASK, j & _UINT_MASK], dtype=np.uint64)
            rng = np.random.Generator(np.random.Philox(key=key))
            inc = rng.standard_normal(self.steps_per_block) * math.sqrt(self.dt)
            self._inc[j] = inc
        return inc

    def _block(self, j: int) -> np.ndarray:
        """omega at grid indices j*spb .. (j+1)*spb inclusive."""
        vals = self._blk.get(j)
        if vals is not None:
            return vals
        spb = self.steps_per_block
        inc = self._increments(j)
        vals = np.empty(spb + 1)
        if j >= 0:
            vals[0] = self._boundary(j)
            vals[1:] = vals[0] + np.cumsum(inc)
            self._bnd.setdefault(j + 1, float(vals[spb]))
        else:
            vals[spb] = self._boundary(j + 1)
            tails = np.cumsum(inc[::-1])[::-1]
            vals[:spb] = vals[spb] - tails
            self._bnd.setdefault(j, float(vals[0]))
        self._blk[j] = vals
        return vals

    def _boundary(self, j: int) -> float:
        """omega at grid index j*spb, walking outward from zero if needed."""
        bnd = self._bnd
        if j not in bnd:
            if j > 0:
                for jj in range(max(i for i in bnd if 0 <= i <= j), j):
                    self._block(jj)
            else:
                for jj in range(min(i for i in bnd if j <= i <= 0) - 1, j - 1, -1):
                    self._block(jj)
        return bnd[j]

    def grid_values(self, i0: int, i1: int) -> np.ndarray:
        """omega at grid indices i0..i1 inclusive (time = index * dt)."""
        if i1 < i0:
            raise ValueError("empty index range")
        spb = self.steps_per_block
        out = np.empty(i1 - i0 + 1)
        with self._lock:
            for j in range(i0 // spb, i1 // spb + 1):
                vals = self._block(j)
                lo = max(i0, j * spb)
                hi = min(i1, (j + 1) * spb)
                out[lo - i0 : hi - i0 + 1] = vals[lo - j * spb : hi - j * spb + 1]
        return out

    def values(self, ts) -> np.ndarray:
        """Path values at arbitrary times (linear between grid nodes)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        pos = ts / self.dt
        idx = np.floor(pos).astype(np.int64)
        frac = pos - idx
        lo = int(idx.min())
        hi = int(idx.max()) + 1
        base = self.grid_values(lo, hi)
        return base[idx - lo] * (1.0 - frac) + base[idx - lo + 1] * frac

    def value(self, t: float) -> float:
        return float(self.values([t])[0])


class TabulatedPath(_OuDerivable):
    """Path given by explicit grid samples (testing and replay).

    values[i] is the path at time (first_index + i) * dt.  Queries outside the
    tabulated window raise.
    """

    def __init__(self, values, dt: float, first_index: int = 0,
                 block_length: float = 4.0):
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt!r}")
        spb = snap_steps(block_length, dt, "block_length")
        if spb < 1:
            raise ValueError("block_length must be a positive multiple of dt")
        self.arr = np.asarray(values, dtype=float).copy()
        if self.arr.ndim != 1 or len(self.arr) < 2:
            raise ValueError("need a 1-d array of at least two samples")
        self.dt = float(dt)
        self.first_index = int(first_index)
        self.block_length = spb * self.dt
        self.steps_per_block = spb
        self._ou: dict = {}
        self._lock = threading.RLock()

    def grid_values(self, i0: int, i1: int) -> np.ndarray:
        lo = self.first_index
        hi = self.first_index + len(self.arr) - 1
        if i0 < lo or i1 > hi:
            raise ValueError(f"indices [{i0}, {i1}] outside tabulated window [{lo}, {hi}]")
        return self.arr[i0 - lo : i1 - lo + 1]

    def values(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        pos = ts / self.dt
        idx = np.floor(pos).astype(np.int64)
        frac = pos - idx
        base = self.grid_values(int(idx.min()), int(idx.max()) + 1)
        off = int(idx.min())
        return base[idx - off] * (1.0 - frac) + base[idx - off + 1] * frac

    def value(self, t: float) -> float:
        return float(self.values([t])[0])


@dataclass(frozen=True)
class ShiftedView:
    """The path s -> omega(s + offset) - omega(offset), lazily evaluated.

    Views always hold the root path plus a single accumulated offset, so
    composing shifts is associative to the last bit: shifting a view produces
    the same object as one shift by the summed offset.
    """

    base: object
    offset: float

    @property
    def dt(self) -> float:
        return self.base.dt

    @property
    def steps_per_block(self) -> int:
        return self.base.steps_per_block

    def values(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        return self.base.values(ts + self.offset) - self.base.value(self.offset)

    def value(self, t: float) -> float:
        return float(self.values([t])[0])


def make_path(seed: int, dt: float, block_length: float = 4.0) -> NoisePath:
    """Frozen two-sided Brownian path for the given seed and step grid."""
    return NoisePath(seed, dt, block_length)


def shift(path, s: float) -> ShiftedView:
    """Time-shifted view of a path; shifting a view accumulates offsets."""
    if isinstance(path, ShiftedView):
        return ShiftedView(path.base, path.offset + float(s))
    return ShiftedView(path, float(s))


def _resolve(path):
    if isinstance(path, ShiftedView):
        return path.base, path.offset
    return path, 0.0


@dataclass(frozen=True)
class OUPath:
    """Stationary OU values z at nodes t0 + k*dt, driven by a stored path."""

    rate: float
    t0: float
    dt: float
    values: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.values)) * self.dt

    def value_at(self, t: float) -> float:
        pos = (t - self.t0) / self.dt
        idx = int(math.floor(pos))
        idx = min(max(idx, 0), len(self.values) - 2)
        frac = pos - idx
        return float(self.values[idx] * (1.0 - frac) + self.values[idx + 1] * frac)


def ou_from_path(path, rate: float, t0: float, t1: float, dt: float | None = None) -> OUPath:
    """Stationary OU process driven by the given path, sampled on [t0, t1].

    The OU value at a node is a pure function of the underlying root path and
    the node's absolute time there, so evaluations through shifted views and
    over different windows agree bitwise wherever they overlap.  The process
    solves dz = -rate*z dt + d(omega); its marginal variance is 1/(2*rate).

    t0, t1, the OU step dt (default: the path step), and the view offset must
    all sit on the dt grid, and dt must divide the path's block length.
    """
    if rate <= 0:
        raise ValueError(f"rate must be positive, got {rate!r}")
    base, offset = _resolve(path)
    dt_ou = base.dt if dt is None else float(dt)
    m = snap_steps(dt_ou, base.dt, "dt")
    if m < 1:
        raise ValueError("dt must be a positive multiple of the path step")
    off_k = snap_steps(offset, dt_ou, "shift offset")
    k0 = snap_steps(t0, dt_ou, "t0")
    k1 = snap_steps(t1, dt_ou, "t1")
    if k1 < k0:
        raise ValueError("t1 must be >= t0")
    vals = base.ou_grid_values(rate, k0 + off_k, k1 + off_k, m)
    return OUPath(rate=float(rate), t0=k0 * dt_ou, dt=dt_ou, values=vals)


@dataclass(frozen=True)
class EtaConfig:
    """How the scalar modulation process eta is built from the noise.

    kind "constant" pins eta to `mean`; "ou" is the mean-zero stationary OU of
    rate `rate`; "shifted-ou" adds `mean` on top.  With `seed` set, eta rides
    its own independent path (shifted in lockstep with the main one);
    otherwise it is derived from the same path that drives the equation.
    """

    kind: str = "ou"
    mean: float = 0.0
    rate: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "ou", "shifted-ou"):
            raise ValueError(f"unknown eta kind {self.kind!r}")
        if self.rate <= 0:
            raise ValueError("eta rate must be positive")

    @property
    def mean_value(self) -> float:
        """The process mean E(eta)."""
        return 0.0 if self.kind == "ou" else self.mean


@dataclass(frozen=True)
class EtaProcess:
    """Realized eta on a node grid: constant, OU, or mean-shifted OU."""

    kind: str
    mean: float
    source: OUPath | None = None

    def node_values(self, n_nodes: int) -> np.ndarray:
        if self.source is None:
            return np.full(n_nodes, self.mean)
        if len(self.source.values) != n_nodes:
            raise ValueError("eta source does not match the requested grid")
        if self.mean == 0.0:
            return self.source.values
        return self.mean + self.source.values

    def value_at(self, t: float) -> float:
        if self.source is None:
            return self.mean
        return self.mean + self.source.value_at(t)


def make_eta(path, cfg: EtaConfig, t0: float, t1: float, dt: float | None = None) -> EtaProcess:
    """Realize eta alongside a path window (same offsets as the path)."""
    if cfg.kind == "constant":
        return EtaProcess(cfg.kind, cfg.mean, None)
    src_path = path
    if cfg.seed is not None:
        base, off = _resolve(path)
        independent = NoisePath(cfg.seed, base.dt, base.block_length)
        src_path = shift(independent, off) if off != 0.0 else independent
    src = ou_from_path(src_path, cfg.rate, t0, t1, dt)
    mean = cfg.mean if cfg.kind == "shifted-ou" else 0.0
    return EtaProcess(cfg.kind, mean, src)


def ergodic_diagnostics(z: OUPath) -> dict:
    """Sublinearity ratios |z(t)|/t and |(1/t) int_0^t z| at several horizons.

    Both ratios tend to zero along almost every realization; the report gives
    them at a quarter, half, and the full horizon (measured from the window
    start).  Requires a horizon of at least 100 time units.
    """
    n = len(z.values) - 1
    span = n * z.dt
    if span < 100.0:
        raise ValueError(f"horizon must be at least 100, got {span!r}")
    mids = 0.5 * (z.values[1:] + z.values[:-1]) * z.dt
    cum = np.concatenate(([0.0], np.cumsum(mids)))
    horizons, sub, mean = [], [], []
    for frac in (0.25, 0.5, 1.0):
        idx = max(1, int(round(frac * n)))
        h = idx * z.dt
        horizons.append(h)
        sub.append(abs(float(z.values[idx])) / h)
        mean.append(float(cum[idx]) / h)
    return {
        "horizons": np.array(horizons),
        "sublinear_ratio": np.array(sub),
        "mean_ratio": np.array(mean),
    }
