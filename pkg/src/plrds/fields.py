"""Spatial grids, discrete fields, the p-Laplace operator, norms, cutoffs,
tail masses, set distances, and field serialization.

Fields live on a uniform grid over [-half_width, half_width]^dim with zero
(Dirichlet) boundary values.  The p-Laplace operator div(|grad u|^(p-2) grad u)
is discretized in flux form: gradients at cell faces by central differences,
the face coefficient |grad u|^(p-2) from the full face gradient (the normal
difference plus, in two dimensions, the averaged transverse central
difference), then a divergence of the fluxes back at the nodes.  At p = 2 the
stencil reduces exactly to the standard 3/5-point Laplacian.  Integrals use
trapezoid weights, which is also the quadrature under which summation by
parts (and hence the discrete energy identity) is exact in one dimension.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from types import SimpleNamespace

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on [-half_width, half_width]^dim."""

    dim: int
    half_width: float
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim!r}")
        if self.n < 3:
            raise ValueError("need at least 3 nodes per direction")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / (self.n - 1)

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim


@lru_cache(maxsize=32)
def grid_arrays(grid: Grid) -> SimpleNamespace:
    """Cached coordinate, weight, and mask arrays for a grid."""
    x = np.linspace(-grid.half_width, grid.half_width, grid.n)
    w1 = np.full(grid.n, grid.dx)
    w1[0] *= 0.5
    w1[-1] *= 0.5
    if grid.dim == 1:
        radial_sq = x ** 2
        weights = w1
        boundary = np.zeros(grid.n, dtype=bool)
        boundary[0] = boundary[-1] = True
        xx, yy = x, None
    else:
        xx, yy = np.meshgrid(x, x, indexing="ij")
        radial_sq = xx ** 2 + yy ** 2
        weights = np.outer(w1, w1)
        boundary = np.zeros((grid.n, grid.n), dtype=bool)
        boundary[0, :] = boundary[-1, :] = True
        boundary[:, 0] = boundary[:, -1] = True
    return SimpleNamespace(coords=x, x=xx, y=yy, radial_sq=radial_sq,
                           radial=np.sqrt(radial_sq), weights=weights,
                           boundary=boundary, dx=grid.dx)


@dataclass(frozen=True)
class Field:
    """Values on a grid; boundary nodes are identically zero."""

    grid: Grid
    values: np.ndarray

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


def make_field(grid: Grid, values) -> Field:
    """Build a field, zeroing the boundary and checking finiteness."""
    arr = np.array(values, dtype=float)
    if arr.shape != grid.shape:
        raise ValueError(f"values shape {arr.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("field values must be finite")
    arr[grid_arrays(grid).boundary] = 0.0
    return Field(grid, arr)


def zero_field(grid: Grid) -> Field:
    return Field(grid, np.zeros(grid.shape))


# ---------------------------------------------------------------------------
# The p-Laplace operator and its quadratures.
# ---------------------------------------------------------------------------

def _face_data(values: np.ndarray, dim: int, dx: float, p: float, delta: float):
    """Per-direction face gradients and coefficients |grad|^(p-2) at faces."""
    e = 0.5 * (p - 2.0)
    if dim == 1:
        gx = np.diff(values) / dx
        coef = (gx * gx + delta * delta) ** e
        return ((gx, coef),)
    v = values
    pad_y = np.pad(v, ((0, 0), (1, 1)))
    dyn = (pad_y[:, 2:] - pad_y[:, :-2]) / (2.0 * dx)
    gx = (v[1:, :] - v[:-1, :]) / dx
    ty = 0.5 * (dyn[1:, :] + dyn[:-1, :])
    coef_x = (gx * gx + ty * ty + delta * delta) ** e

    pad_x = np.pad(v, ((1, 1), (0, 0)))
    dxn = (pad_x[2:, :] - pad_x[:-2, :]) / (2.0 * dx)
    gy = (v[:, 1:] - v[:, :-1]) / dx
    tx = 0.5 * (dxn[:, 1:] + dxn[:, :-1])
    coef_y = (gy * gy + tx * tx + delta * delta) ** e
    return ((gx, coef_x), (gy, coef_y))


def p_laplace(u: Field, p: float, delta: float = 0.0) -> Field:
    """div(|grad u|^(p-2) grad u) in flux form; boundary rows stay zero.

    delta > 0 regularizes the face coefficient to ((|grad|^2 + delta^2))^((p-2)/2)
    for stiff gradients.  p must be >= 2.
    """
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p!r}")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    dx = u.grid.dx
    faces = _face_data(u.values, u.grid.dim, dx, p, delta)
    out = np.zeros_like(u.values)
    if u.grid.dim == 1:
        gx, coef = faces[0]
        flux = coef * gx
        out[1:-1] = np.diff(flux) / dx
    else:
        (gx, cx), (gy, cy) = faces
        fx = cx * gx
        fy = cy * gy
        out[1:-1, :] += (fx[1:, :] - fx[:-1, :]) / dx
        out[:, 1:-1] += (fy[:, 1:] - fy[:, :-1]) / dx
        arrs = grid_arrays(u.grid)
        out[arrs.boundary] = 0.0
    return Field(u.grid, out)


def p_dissipation(u: Field, p: float, delta: float = 0.0) -> float:
    """The quadrature sum_faces |grad u|^(p-2) |D u|^2 dx^dim.

    This is exactly the discrete pairing (-p_laplace(u), u) by summation by
    parts, and at delta = 0 in one dimension it equals the face quadrature of
    ||grad u||_p^p.
    """
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p!r}")
    dx = u.grid.dx
    cell = dx ** u.grid.dim
    faces = _face_data(u.values, u.grid.dim, dx, p, delta)
    return float(sum(np.sum(coef * g * g) for g, coef in faces) * cell)


def flux_pairing(u: Field, other: Field, p: float, delta: float = 0.0) -> float:
    """The quadrature sum_faces |grad u|^(p-2) (D u)(D other) dx^dim.

    Discretely equal to (-p_laplace(u), other) for zero-boundary fields.
    """
    if u.grid != other.grid:
        raise ValueError("fields live on different grids")
    dx = u.grid.dx
    cell = dx ** u.grid.dim
    fu = _face_data(u.values, u.grid.dim, dx, p, delta)
    fo = _face_data(other.values, other.grid.dim, dx, 2.0, 0.0)
    return float(sum(np.sum(cu * gu * go) for (gu, cu), (go, _) in zip(fu, fo)) * cell)


def grad_p_pow(u: Field, p: float) -> float:
    """Face quadrature of ||grad u||_p^p."""
    return p_dissipation(u, p, 0.0)


def lebesgue_pow(u: Field, r: float) -> float:
    """Trapezoid quadrature of ||u||_r^r."""
    arrs = grid_arrays(u.grid)
    return float(np.sum(arrs.weights * np.abs(u.values) ** r))


def l2_sq(u: Field) -> float:
    arrs = grid_arrays(u.grid)
    return float(np.sum(arrs.weights * u.values * u.values))


def norms(u: Field, p: float, q: float) -> dict:
    """{l2, lp, lq, w1p} with trapezoid node weights and face gradients."""
    if p < 2 or q < p:
        raise ValueError("need 2 <= p <= q")
    lp_pow = lebesgue_pow(u, p)
    return {
        "l2": math.sqrt(l2_sq(u)),
        "lp": lp_pow ** (1.0 / p),
        "lq": lebesgue_pow(u, q) ** (1.0 / q),
        "w1p": (lp_pow + grad_p_pow(u, p)) ** (1.0 / p),
    }


# ---------------------------------------------------------------------------
# Cutoff, tail masses, set distance.
# ---------------------------------------------------------------------------

def cutoff_rho(s):
    """Smooth cutoff: 0 on [0, 1], 1 on [2, inf), quintic smoothstep between.

    Used with argument |x|^2/k^2, so it vanishes inside radius k and is one
    outside radius sqrt(2)*k.
    """
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0):
        raise ValueError("cutoff argument must be nonnegative")
    r = np.clip(arr - 1.0, 0.0, 1.0)
    out = r * r * r * (r * (6.0 * r - 15.0) + 10.0)
    return float(out) if np.isscalar(s) else out


@dataclass(frozen=True)
class TailMass:
    plain: float
    rho_weighted: float


def tail_mass(u: Field, k: float) -> TailMass:
    """Squared mass of u outside radius k: sharp and cutoff-weighted.

    plain integrates u^2 over nodes with |x| >= k; rho_weighted uses the
    smooth cutoff rho(|x|^2/k^2), which sits between the indicators of
    {|x| >= sqrt(2) k} and {|x| >= k}.
    """
    if not 0.0 < k < u.grid.half_width:
        raise ValueError(f"need 0 < k < half_width={u.grid.half_width}, got {k!r}")
    arrs = grid_arrays(u.grid)
    usq = u.values * u.values
    plain = float(np.sum((arrs.weights * usq)[arrs.radial >= k]))
    weighted = float(np.sum(arrs.weights * cutoff_rho(arrs.radial_sq / (k * k)) * usq))
    return TailMass(plain=plain, rho_weighted=weighted)


def _members(obj) -> list:
    return list(obj.members) if hasattr(obj, "members") else list(obj)


def hausdorff_semidistance(a, b) -> float:
    """max over members of a of the L2 distance to the nearest member of b."""
    fa, fb = _members(a), _members(b)
    if not fa:
        return 0.0
    if not fb:
        raise ValueError("second set is empty")
    grid = fa[0].grid
    for f in fa + fb:
        if f.grid != grid:
            raise ValueError("all members must share one grid")
    w = grid_arrays(grid).weights.ravel()
    mb = np.stack([f.values.ravel() for f in fb])
    worst = 0.0
    for f in fa:
        diff = mb - f.values.ravel()
        d2 = (diff * diff) @ w
        worst = max(worst, float(np.min(d2)))
    return math.sqrt(worst)


@dataclass(frozen=True)
class EnsembleTag:
    """Provenance of an endpoint ensemble."""

    tau: float
    seed: int | None = None
    alpha: float | None = None
    horizon: float | None = None


@dataclass(frozen=True)
class EndpointEnsemble:
    """A finite set of endpoint fields with a provenance tag."""

    members: tuple
    tag: EnsembleTag

    def __len__(self):
        return len(self.members)

    def spread(self) -> float:
        """Largest pairwise L2 distance among members."""
        worst = 0.0
        w = None
        for i, f in enumerate(self.members):
            if w is None:
                w = grid_arrays(f.grid).weights
            for g in self.members[i + 1:]:
                d = f.values - g.values
                worst = max(worst, float(np.sum(w * d * d)))
        return math.sqrt(worst)


# ---------------------------------------------------------------------------
# Serialization: one CSV row per node, and a raw binary dump.
# ---------------------------------------------------------------------------

def field_to_csv(u: Field, path) -> None:
    arrs = grid_arrays(u.grid)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        if u.grid.dim == 1:
            wr.writerow(["x", "value"])
            for xi, vi in zip(arrs.coords, u.values):
                wr.writerow([f"{xi:.17g}", f"{vi:.17g}"])
        else:
            wr.writerow(["x", "y", "value"])
            for i, xi in enumerate(arrs.coords):
                for j, yj in enumerate(arrs.coords):
                    wr.writerow([f"{xi:.17g}", f"{yj:.17g}", f"{u.values[i, j]:.17g}"])


def field_from_csv(path) -> Field:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        rows = [[float(c) for c in row] for row in rd if row]
    if header[-1] != "value" or len(header) not in (2, 3):
        raise ValueError(f"unrecognized field CSV header {header!r}")
    dim = len(header) - 1
    coords = sorted({r[0] for r in rows})
    n = len(coords)
    half = max(abs(coords[0]), abs(coords[-1]))
    grid = Grid(dim, half, n)
    if not np.allclose(coords, grid_arrays(grid).coords, atol=1e-9 * max(1.0, half)):
        raise ValueError("CSV nodes do not form a uniform symmetric grid")
    vals = np.zeros(grid.shape)
    dx = grid.dx
    for r in rows:
        i = int(round((r[0] + half) / dx))
        if dim == 1:
            vals[i] = r[1]
        else:
            vals[int(round((r[0] + half) / dx)), int(round((r[1] + half) / dx))] = r[2]
    return make_field(grid, vals)


_BIN_MAGIC = b"PLF1"


def field_to_binary(u: Field, path) -> None:
    """Raw dump: magic, dim, n (int32), half_width (float64), little-endian values."""
    with open(path, "wb") as fh:
        fh.write(_BIN_MAGIC)
        fh.write(struct.pack("<iid", u.grid.dim, u.grid.n, u.grid.half_width))
        fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())


def field_from_binary(path) -> Field:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _BIN_MAGIC:
            raise ValueError("not a field dump")
        dim, n, half = struct.unpack("<iid", fh.read(16))
        grid = Grid(dim, half, n)
        raw = fh.read()
    count = n ** dim
    if len(raw) != 8 * count:
        raise ValueError(f"payload holds {len(raw) // 8} values, expected {count}")
    vals = np.frombuffer(raw, dtype="<f8").reshape(grid.shape)
    return make_field(grid, vals)
