"""Problem data for the stochastic p-Laplace models: coefficients, the
nonlinearity with its envelope functions, and structural checks.

The default model family is

    f(t, x, s) = -gamma * |s|^(q-2) * s + phi(t, x),
    phi(t, x)  = phi_amp * sin(2*pi*t/period) * exp(-|x|^2),
    g(t, x)    = g_amp  * cos(2*pi*t/period) * exp(-|x|^2),
    h(x)       = exp(-|x|^2 / 2),

which satisfies the four structure conditions used by the energy estimates:

    (C1)  f(t,x,s)*s <= -gamma1*|s|^q + psi1(t,x)          gamma1 = gamma/2
    (C2)  |f(t,x,s)| <= psi2*|s|^(q-1) + psi3(t,x)
    (C3)  d f/d s    <= psi4
    (C4)  |d f/d s|  <= psi5*(1 + |s|^(q-2))

with psi1 = c_psi*|phi|^(q1), c_psi = (1/q1)*(q*gamma/2)^(-q1/q) (Young's
inequality with margin split), psi2 = gamma + 1, psi3 = |phi|, psi4 = 0,
psi5 = gamma*(q-1) + 1, and q1 = q/(q-1).
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .noise import EtaConfig

NOISE_CASES = ("additive", "multiplicative", "deterministic")


def conjugate_exponent(r: float) -> float:
    """The exponent r1 with 1/r + 1/r1 = 1."""
    if r <= 1:
        raise ValueError(f"exponent must exceed 1, got {r!r}")
    return r / (r - 1.0)


def alpha_zero(lam: float, eta_mean: float) -> float:
    """Largest admissible noise intensity lam / (8*(1 + |E eta|))."""
    if lam <= 0:
        raise ValueError(f"lam must be positive, got {lam!r}")
    return lam / (8.0 * (1.0 + abs(eta_mean)))


# ---------------------------------------------------------------------------
# Whitelisted scalar expressions for a custom nonlinearity f(t, x, s).
# Grammar: numbers, the variables, + - * / ** with unary minus, and calls to
# sin, cos, exp, abs, abspow(s, r) = |s|^r * s.
# ---------------------------------------------------------------------------

def _abspow(s, r):
    return np.abs(s) ** r * s


_EXPR_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs,
               "abspow": _abspow}
_EXPR_CACHE: dict = {}


def compile_expression(text: str, variables=("t", "x", "y", "s")):
    """Compile a whitelisted arithmetic expression to a vectorized callable.

    The callable takes the variables as keyword arguments and broadcasts over
    array inputs.  Anything outside the whitelist raises ValueError.
    """
    key = (text, tuple(variables))
    fn = _EXPR_CACHE.get(key)
    if fn is not None:
        return fn
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"invalid expression {text!r}: {exc}") from None
    allowed_binops = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)

    def check(node):
        if isinstance(node, ast.Expression):
            check(node.body)
        elif isinstance(node, ast.BinOp) and isinstance(node.op, allowed_binops):
            check(node.left)
            check(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            check(node.operand)
        elif isinstance(node, ast.Call):
            if (not isinstance(node.func, ast.Name)
                    or node.func.id not in _EXPR_FUNCS or node.keywords):
                raise ValueError(f"expression {text!r}: only calls to "
                                 f"{sorted(_EXPR_FUNCS)} are allowed")
            for arg in node.args:
                check(arg)
        elif isinstance(node, ast.Name):
            if node.id not in variables:
                raise ValueError(f"expression {text!r}: unknown name {node.id!r}")
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)):
                raise ValueError(f"expression {text!r}: non-numeric constant")
        else:
            raise ValueError(f"expression {text!r}: {type(node).__name__} not allowed")

    check(tree)
    code = compile(tree, "<expression>", "eval")

    def fn(**kw):
        scope = dict(_EXPR_FUNCS)
        scope.update(kw)
        return eval(code, {"__builtins__": {}}, scope)

    _EXPR_CACHE[key] = fn
    return fn


@dataclass(frozen=True)
class NonlinearitySpec:
    """Reaction term: the default power family or a custom expression.

    kind "power-plus-forcing" uses -gamma|s|^(q-2)s + phi(t,x) with the
    time-periodic gaussian phi above; kind "custom" evaluates `expression`
    in the variables t, x, y, s (y ignored in one dimension).
    """

    kind: str = "power-plus-forcing"
    gamma: float = 1.0
    phi_amp: float = 0.5
    expression: str | None = None

    def __post_init__(self):
        if self.kind not in ("power-plus-forcing", "custom"):
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.kind == "custom":
            if not self.expression:
                raise ValueError("custom nonlinearity needs an expression")
            compile_expression(self.expression)


@dataclass(frozen=True)
class ProblemSpec:
    """All coefficients of one model instance.

    noise_case selects the equation: "additive" (intensity epsilon on the
    profile h, modulation alpha*eta*u), "multiplicative" (intensity alpha on
    u itself), or "deterministic" (no noise; the alpha -> 0 limit).
    """

    lam: float = 1.0
    p: float = 3.0
    q: float = 4.0
    alpha: float = 0.0625
    epsilon: float = 0.25
    noise_case: str = "additive"
    g_amp: float = 0.5
    period: float = 1.0
    delta: float = 0.0
    nonlinearity: NonlinearitySpec = field(default_factory=NonlinearitySpec)
    eta: EtaConfig = field(default_factory=EtaConfig)

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.p < 2:
            raise ValueError("p must be >= 2")
        if self.q < self.p:
            raise ValueError("q must be >= p")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.noise_case not in NOISE_CASES:
            raise ValueError(f"unknown noise case {self.noise_case!r}")
        if self.period <= 0:
            raise ValueError("period must be positive")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")

    @property
    def gamma(self) -> float:
        return self.nonlinearity.gamma

    @property
    def p1(self) -> float:
        return conjugate_exponent(self.p)

    @property
    def q1(self) -> float:
        return conjugate_exponent(self.q)

    @property
    def alpha_max(self) -> float:
        """The admissibility threshold for this spec's eta."""
        return alpha_zero(self.lam, self.eta.mean_value)

    def with_alpha(self, alpha: float, noise_case: str | None = None) -> "ProblemSpec":
        kw = {"alpha": alpha}
        if noise_case is not None:
            kw["noise_case"] = noise_case
        return replace(self, **kw)

    # -- pointwise model functions (continuum; array-friendly) --------------

    def phi_time(self, t):
        return self.nonlinearity.phi_amp * np.sin(2.0 * np.pi * t / self.period)

    def g_time(self, t):
        return self.g_amp * np.cos(2.0 * np.pi * t / self.period)

    def phi_pointwise(self, t, r2):
        """phi(t, x) with r2 = |x|^2."""
        return self.phi_time(t) * np.exp(-r2)

    def g_pointwise(self, t, r2):
        return self.g_time(t) * np.exp(-r2)

    def h_pointwise(self, r2):
        return np.exp(-0.5 * r2)

    def f_pointwise(self, t, x, y, s):
        """f(t, x, s) for scalar/array inputs; y is ignored in one dimension."""
        nl = self.nonlinearity
        if nl.kind == "custom":
            fn = compile_expression(nl.expression)
            out = fn(t=t, x=x, y=y, s=s)
            return np.broadcast_to(np.asarray(out, dtype=float), np.shape(s)).copy() \
                if np.shape(out) != np.shape(s) else out
        r2 = np.asarray(x) ** 2 + (np.asarray(y) ** 2 if y is not None else 0.0)
        return -nl.gamma * np.abs(s) ** (self.q - 2.0) * s + self.phi_pointwise(t, r2)

    def f_prime_pointwise(self, t, x, y, s):
        """d f/d s; analytic for the default family, central difference otherwise."""
        nl = self.nonlinearity
        if nl.kind == "custom":
            step = 1e-5 * (1.0 + np.abs(s))
            up = self.f_pointwise(t, x, y, s + step)
            dn = self.f_pointwise(t, x, y, s - step)
            return (up - dn) / (2.0 * step)
        return -nl.gamma * (self.q - 1.0) * np.abs(s) ** (self.q - 2.0)

    # -- envelope functions (for the default family) ------------------------

    @property
    def gamma1(self) -> float:
        """Margin kept in condition (C1)."""
        return self.gamma / 2.0

    @property
    def c_psi(self) -> float:
        q1 = self.q1
        return (1.0 / q1) * (self.q * self.gamma / 2.0) ** (-q1 / self.q)

    def psi1_pointwise(self, t, r2):
        return self.c_psi * np.abs(self.phi_pointwise(t, r2)) ** self.q1

    def psi2_value(self) -> float:
        return self.gamma + 1.0

    def psi3_pointwise(self, t, r2):
        return np.abs(self.phi_pointwise(t, r2))

    def psi4_value(self) -> float:
        return 0.0

    def psi5_value(self) -> float:
        return self.gamma * (self.q - 1.0) + 1.0


# ---------------------------------------------------------------------------
# Forcing norms: closed-form separation time_factor(t) * profile_integral, so
# quadratures over long time windows never touch the grid in the inner loop.
# ---------------------------------------------------------------------------

class ForcingNorms:
    """Norm accessors ||g(t)||^2, ||psi1(t)||_1, ||psi3(t)||_{q1}^{q1} on a grid.

    Profile integrals are computed once with the grid's trapezoid weights;
    the time dependence multiplies through.
    """

    def __init__(self, spec: ProblemSpec, grid):
        from .fields import grid_arrays  # local import to keep layering simple
        arrs = grid_arrays(grid)
        prof = np.exp(-arrs.radial_sq)
        w = arrs.weights
        self.spec = spec
        self._g_prof_sq = float(np.sum(w * prof * prof))
        self._phi_prof_q1 = float(np.sum(w * prof ** spec.q1))

    def g_l2_sq(self, t):
        return self.spec.g_time(t) ** 2 * self._g_prof_sq

    def psi1_l1(self, t):
        return self.spec.c_psi * np.abs(self.spec.phi_time(t)) ** self.spec.q1 \
            * self._phi_prof_q1

    def psi3_q1_pow(self, t):
        return np.abs(self.spec.phi_time(t)) ** self.spec.q1 * self._phi_prof_q1

    def total(self, t):
        """The combined integrand of the forcing summability condition."""
        return self.g_l2_sq(t) + self.psi1_l1(t) + self.psi3_q1_pow(t)


# ---------------------------------------------------------------------------
# Structure validation and the forcing summability check.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StructureReport:
    """Sampled envelope-condition margins; violations are data, not errors."""

    sample_count: int
    checked: tuple
    violation_count: int
    violations: list
    worst_margin: dict


def validate_structure(spec: ProblemSpec, sample_count: int = 100_000,
                       seed: int = 0, s_bound: float = 3.0,
                       x_bound: float = 8.0, dim: int = 1) -> StructureReport:
    """Sample the envelope conditions (C1)-(C4) at random (t, x, s).

    Returns a report with every violated sample (condition, location, margin).
    The default family yields zero violations; a custom f is checked against
    the same default-family envelopes, so violations there are meaningful
    diagnostics rather than failures.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.Generator(np.random.Philox(key=np.array(
        [seed & 0xFFFFFFFFFFFFFFFF, 0x5157C64B], dtype=np.uint64)))
    t = rng.uniform(0.0, spec.period, sample_count)
    x = rng.uniform(-x_bound, x_bound, sample_count)
    y = rng.uniform(-x_bound, x_bound, sample_count) if dim == 2 else np.zeros(sample_count)
    s = rng.uniform(-s_bound, s_bound, sample_count)
    r2 = x ** 2 + y ** 2

    fv = spec.f_pointwise(t, x, y, s)
    fp = spec.f_prime_pointwise(t, x, y, s)
    aq = np.abs(s) ** spec.q
    margins = {
        "C1": -spec.gamma1 * aq + spec.psi1_pointwise(t, r2) - fv * s,
        "C2": spec.psi2_value() * np.abs(s) ** (spec.q - 1.0)
              + spec.psi3_pointwise(t, r2) - np.abs(fv),
        "C3": spec.psi4_value() - fp,
        "C4": spec.psi5_value() * (1.0 + np.abs(s) ** (spec.q - 2.0)) - np.abs(fp),
    }
    tol = -1e-12
    violations = []
    worst = {}
    for name, m in margins.items():
        worst[name] = float(np.min(m))
        bad = np.flatnonzero(m < tol)
        for i in bad[:50]:
            violations.append({"condition": name, "t": float(t[i]),
                               "x": float(x[i]), "y": float(y[i]),
                               "s": float(s[i]), "margin": float(m[i])})
        if len(bad) > 50:
            violations.append({"condition": name, "suppressed": int(len(bad) - 50)})
    count = int(sum(np.count_nonzero(m < tol) for m in margins.values()))
    return StructureReport(sample_count=sample_count,
                           checked=tuple(margins), violation_count=count,
                           violations=violations, worst_margin=worst)


@dataclass(frozen=True)
class GrowthReport:
    finite: bool
    value: float
    truncation: float


def check_growth_condition(spec: ProblemSpec, tau: float, grid=None,
                           quad_tol: float = 1e-12, dt: float = 0.05,
                           integrand=None) -> GrowthReport:
    """Evaluate int_{-inf}^{tau} e^{lam*s} (||g||^2 + ||psi1||_1 + ||psi3||^q1) ds.

    The integral is truncated where the weight e^{lam*s} falls below quad_tol.
    It is reported non-finite when the weighted integrand at the truncation
    point is not negligible against its peak, which is how an integrand that
    grows like the weight decays (or faster) shows up.  `integrand` may
    override the forcing-norm accessor (it receives an array of times).
    """
    from .fields import Grid
    if integrand is None:
        norms = ForcingNorms(spec, grid if grid is not None else Grid(1, 8.0, 257))
        integrand = norms.total
    s_min = min(tau, math.log(quad_tol) / spec.lam)
    n = max(2, int(math.ceil((tau - s_min) / dt)))
    s = np.linspace(s_min, tau, n + 1)
    weighted = np.exp(spec.lam * s) * np.asarray(integrand(s), dtype=float)
    peak = float(np.max(weighted))
    edge = float(np.mean(weighted[: max(2, n // 50)]))
    finite = not (peak > 0 and edge > 1e-6 * peak)
    value = float(np.trapezoid(weighted, dx=(tau - s_min) / n))
    return GrowthReport(finite=finite, value=value, truncation=float(s_min))
