"""Nonlinearities g, their primitives and the sign-split / regularized pieces.

The built-in family is

    g(s) = alpha * s * ln(s^2) + mu * |s|^(p-2) * s

(``kind="log_power"``; ``kind="pure_power"`` is the same family with
``alpha = 0``).  For it every primitive used by the energy has a closed form:

    G(s)  = alpha/2 * s^2 (ln s^2 - 1) + mu/p |s|^p
    H(s)  = int_0^s t g(t) dt = alpha s^3 (ln s^2 / 3 - 2/9) + mu s^(p+1)/(p+1)

and G_+, G_-, G_-^eps are sums of differences of G and H over the intervals
of (0, inf) on which g keeps a sign.  Custom nonlinearities supply ``g`` and
``G`` as scalar callables and everything else goes through adaptive
quadrature.

All array functions accept scalars or numpy arrays and return the same shape.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

# below this |s| the log family is evaluated as its continuous extension (0)
TINY = 1e-300

KINDS = ("log_power", "pure_power", "custom")


class InadmissibleExponentError(ValueError):
    """Raised when (N, q) lies outside the admissible range."""


class QuadratureError(RuntimeError):
    """Raised when adaptive quadrature of a custom nonlinearity fails."""


def admissibility_violation(N: int, q: float) -> Optional[str]:
    """Return a one-line description of the violated inequality, or None."""
    if int(N) != N or N < 2:
        return f"N must be an integer >= 2 (got N={N})"
    lo = 2.0 * N / (N + 2.0)
    if q < 2.0:
        if q <= lo:
            return (f"q={q} violates 2N/(N+2) < q: 2N/(N+2) = {lo:.6g} for N={N}")
        return None
    if q == 2.0:
        return "q=2 is excluded: need 2N/(N+2) < q < 2 (N>=2) or 2 < q < N (N>=3)"
    if N < 3:
        return f"q={q} > 2 requires N >= 3 (got N={N})"
    if q >= N:
        return f"q={q} violates q < N (N={N})"
    return None


@dataclass(frozen=True)
class Exponents:
    """Critical exponents attached to an admissible pair (N, q)."""

    N: int
    q: float
    q_star: float
    two_star: float
    q_prime: float
    q_bar: float
    q_tilde: float

    def delta(self, p: float) -> float:
        """GN exponent of the 2-gradient: N (p - 2) / (2 p)."""
        return self.N * (p - 2.0) / (2.0 * p)

    def nu(self, p: float) -> float:
        """GN exponent of the q-gradient: N q (p-2) / (p [N q - 2 (N - q)])."""
        N, q = self.N, self.q
        return N * q * (p - 2.0) / (p * (N * q - 2.0 * (N - q)))


def critical_exponents(N: int, q: float) -> Exponents:
    msg = admissibility_violation(N, q)
    if msg is not None:
        raise InadmissibleExponentError(msg)
    q_star = q * N / (N - q)
    two_star = 2.0 * N / (N - 2.0) if N >= 3 else math.inf
    return Exponents(
        N=int(N),
        q=float(q),
        q_star=q_star,
        two_star=two_star,
        q_prime=max(two_star, q_star),
        q_bar=(1.0 + 2.0 / N) * max(2.0, q),
        q_tilde=(1.0 + 2.0 / N) * min(2.0, q),
    )


@dataclass(frozen=True)
class NonlinearitySpec:
    """A nonlinearity g together with the problem exponents (N, q).

    For ``custom`` specs, ``g`` and ``G`` must be scalar callables with
    ``G(s) = int_0^s g``.
    """

    kind: str
    N: int
    q: float
    alpha: float = 0.0
    mu: float = 0.0
    p: float = 4.0
    g: Optional[Callable[[float], float]] = field(default=None, compare=False, repr=False)
    G: Optional[Callable[[float], float]] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}; expected one of {KINDS}")
        ex = critical_exponents(self.N, self.q)
        for name in ("alpha", "mu", "p", "q"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.kind == "custom":
            if self.g is None or self.G is None:
                raise ValueError("custom nonlinearity needs both g and G callables")
            return
        if self.kind == "pure_power" and self.alpha != 0.0:
            raise ValueError("pure_power requires alpha = 0")
        if self.alpha < 0.0:
            raise ValueError("alpha must be >= 0")
        if self.p <= 2.0:
            raise ValueError(f"p must exceed 2 (got {self.p})")
        if self.mu != 0.0 and self.N >= 3 and not self.p < ex.q_prime:
            raise ValueError(f"growth bound needs p < q' = {ex.q_prime:.6g} (got p={self.p})")

    @cached_property
    def exponents(self) -> Exponents:
        return critical_exponents(self.N, self.q)

    @property
    def closed_form(self) -> bool:
        return self.kind != "custom"

    @cached_property
    def sign_intervals(self) -> tuple:
        """Intervals (a, b, sign) of (0, inf) on which g has constant sign."""
        if self.closed_form:
            roots = _log_power_roots(self.alpha, self.mu, self.p)
        else:
            roots = _scan_roots(self.g)
        edges = [0.0, *roots, math.inf]
        out = []
        for a, b in zip(edges[:-1], edges[1:]):
            mid = 2.0 * a if math.isinf(b) else (math.sqrt(a * b) if a > 0 else 0.5 * b)
            if math.isinf(b) and a == 0.0:
                mid = 1.0
            val = float(_g_scalar(self, mid))
            out.append((a, b, 1 if val > 0 else -1))
        return tuple(out)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "alpha": self.alpha, "mu": self.mu, "p": self.p,
                "N": self.N, "q": self.q}

    @classmethod
    def from_dict(cls, d: dict) -> "NonlinearitySpec":
        kind = str(d.get("kind", "log_power"))
        return cls(kind=kind, N=int(d["N"]), q=float(d["q"]),
                   alpha=float(d.get("alpha", 0.0)), mu=float(d.get("mu", 0.0)),
                   p=float(d.get("p", 4.0)))


def log_nonlinearity(N: int = 3, q: float = 1.8, alpha: float = 1.0) -> NonlinearitySpec:
    """g(s) = alpha s ln s^2."""
    return NonlinearitySpec("log_power", N=N, q=q, alpha=alpha, mu=0.0)


def _log_power_roots(alpha: float, mu: float, p: float) -> list:
    """Positive zeros of h(t) = 2 alpha ln t + mu t^(p-2), where g = t h."""
    if alpha == 0.0:
        return []

    def h(x):  # in x = ln t
        return 2.0 * alpha * x + mu * math.exp((p - 2.0) * x)

    if mu == 0.0:
        return [1.0]
    if mu > 0.0:
        lo, hi = -1.0, 1.0
        while h(lo) > 0:
            lo *= 2.0
        while h(hi) < 0:
            hi *= 2.0
        return [math.exp(optimize.brentq(h, lo, hi, xtol=1e-15, rtol=1e-15))]
    # mu < 0: h rises to a maximum at t_m, then falls to -inf
    x_m = math.log(2.0 * alpha / (-mu * (p - 2.0))) / (p - 2.0)
    if h(x_m) <= 0.0:
        return []
    lo = x_m - 1.0
    while h(lo) > 0:
        lo = x_m - 2.0 * (x_m - lo)
    hi = x_m + 1.0
    while h(hi) > 0:
        hi = x_m + 2.0 * (hi - x_m)
    r1 = optimize.brentq(h, lo, x_m, xtol=1e-15, rtol=1e-15)
    r2 = optimize.brentq(h, x_m, hi, xtol=1e-15, rtol=1e-15)
    return [math.exp(r1), math.exp(r2)]


def _scan_roots(g: Callable, lo: float = -40.0, hi: float = 40.0, per_unit: int = 8) -> list:
    """Sign changes of a custom g on (0, inf), scanned on ln-spaced points."""
    xs = np.linspace(lo, hi, int((hi - lo) * per_unit) + 1)
    vals = np.array([g(math.exp(x)) for x in xs])
    roots = []
    last = None
    for i, v in enumerate(vals):
        if v == 0.0:
            continue
        if last is not None and vals[last] * v < 0.0:
            if i - last > 1:
                roots.append(math.exp(xs[last + 1]))
            else:
                x = optimize.brentq(lambda y: g(math.exp(y)), xs[last], xs[i], xtol=1e-15)
                roots.append(math.exp(x))
        last = i
    return roots


# ---------------------------------------------------------------------------
# closed-form pieces on t >= 0

def _safe_log_sq(t):
    tt = np.where(t > TINY, t, 1.0)
    return np.where(t > TINY, 2.0 * np.log(tt), 0.0)


def _g0(spec, t):
    return spec.alpha * t * _safe_log_sq(t) + spec.mu * t ** (spec.p - 1.0)


def _G0(spec, t):
    t = np.minimum(t, 1e300)
    return 0.5 * spec.alpha * t * t * (_safe_log_sq(t) - 1.0) + spec.mu / spec.p * t ** spec.p


def _H0(spec, t):
    return (spec.alpha * t ** 3 * (_safe_log_sq(t) / 3.0 - 2.0 / 9.0)
            + spec.mu * t ** (spec.p + 1.0) / (spec.p + 1.0))


def _dg0(spec, t):
    return spec.alpha * (_safe_log_sq(t) + 2.0) + spec.mu * (spec.p - 1.0) * t ** (spec.p - 2.0)


def _check_finite(s):
    arr = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite argument")
    return arr


def _out(x, like):
    return float(x) if np.ndim(like) == 0 else x


def _g_scalar(spec, s):
    if spec.closed_form:
        return _g0(spec, abs(s)) * (1.0 if s >= 0 else -1.0)
    return spec.g(s)


def _in_sign(spec, t, sign):
    mask = np.zeros(np.shape(t), dtype=bool)
    for a, b, sg in spec.sign_intervals:
        if sg == sign:
            mask |= (t > a) & (t <= b)
    return mask


# ---------------------------------------------------------------------------
# public pointwise operations

def eval_g(spec: NonlinearitySpec, s):
    s = _check_finite(s)
    if spec.closed_form:
        t = np.abs(s)
        return _out(np.sign(s) * _g0(spec, t), s)
    return _out(np.vectorize(spec.g, otypes=[float])(s), s)


def eval_G(spec: NonlinearitySpec, s):
    s = _check_finite(s)
    if spec.closed_form:
        return _out(_G0(spec, np.abs(s)), s)
    return _out(np.vectorize(spec.G, otypes=[float])(s), s)


def split_plus_minus(spec: NonlinearitySpec, s):
    """Return (g_plus, g_minus) with g_plus = G_plus' and g_minus = g_plus - g."""
    s = _check_finite(s)
    if spec.closed_form:
        t = np.abs(s)
        g0 = _g0(spec, t)
        gp = np.where(_in_sign(spec, t, 1), g0, 0.0) * np.sign(s)
        gm = np.where(_in_sign(spec, t, -1), -g0, 0.0) * np.sign(s)
        return _out(gp, s), _out(gm, s)
    g = np.vectorize(spec.g, otypes=[float])(s)
    gp = np.where(s >= 0, np.maximum(g, 0.0), np.minimum(g, 0.0))
    return _out(gp, s), _out(gp - g, s)


def _g_finite(spec, t):
    """spec.g(t), refusing non-finite values (QUADPACK cannot cope with them)."""
    v = float(spec.g(t))
    if not math.isfinite(v):
        raise QuadratureError(f"custom g returned {v} at s={t}")
    return v


def _custom_G_sign(spec, s: float, sign: int) -> float:
    """int over [0, s] (oriented so the result is >= 0) of max(sign*g, 0) pieces."""
    if s == 0.0:
        return 0.0
    direction = 1.0 if s > 0 else -1.0
    t_end = abs(s)

    def f(t):
        v = _g_finite(spec, direction * t) * direction
        return max(sign * v, 0.0)

    pts = [r for r in _scan_roots(lambda t: spec.g(direction * t) * direction) if r < t_end]
    val, err = 0.0, 0.0
    edges = [0.0, *pts, t_end]
    for a, b in zip(edges[:-1], edges[1:]):
        v, e = integrate.quad(f, a, b, limit=200, epsabs=1e-13, epsrel=1e-11)
        val += v
        err += e
    if err > 1e-8 * max(1.0, abs(val)):
        raise QuadratureError(f"quadrature of G_{'+' if sign > 0 else '-'} failed on [0, {s}]")
    return val


def G_plus(spec: NonlinearitySpec, s):
    s = _check_finite(s)
    if spec.closed_form:
        t = np.abs(s)
        out = np.zeros_like(t)
        for a, b, sg in spec.sign_intervals:
            if sg > 0:
                out = out + _G0(spec, np.clip(t, a, b)) - _G0(spec, a)
        return _out(out, s)
    return _out(np.vectorize(lambda x: _custom_G_sign(spec, x, 1), otypes=[float])(s), s)


def G_minus(spec: NonlinearitySpec, s):
    s = _check_finite(s)
    if spec.closed_form:
        t = np.abs(s)
        out = np.zeros_like(t)
        for a, b, sg in spec.sign_intervals:
            if sg < 0:
                out = out - (_G0(spec, np.clip(t, a, b)) - _G0(spec, a))
        return _out(out, s)
    return _out(np.vectorize(lambda x: _custom_G_sign(spec, x, -1), otypes=[float])(s), s)


def _check_eps(eps):
    if not (0.0 < eps < 1.0):
        raise ValueError(f"eps must lie in (0, 1) (got {eps})")


def phi_eps(eps: float, s):
    _check_eps(eps)
    s = _check_finite(s)
    return _out(np.minimum(np.abs(s) / eps, 1.0), s)


def G_minus_eps(spec: NonlinearitySpec, eps: Optional[float], s):
    """int_0^s phi_eps(t) g_minus(t) dt; ``eps=None`` gives G_minus."""
    if eps is None:
        return G_minus(spec, s)
    _check_eps(eps)
    s = _check_finite(s)
    if spec.closed_form:
        t = np.abs(s)
        lo = np.minimum(t, eps)
        hi = np.maximum(t, eps)
        out = np.zeros_like(t)
        for a, b, sg in spec.sign_intervals:
            if sg < 0:
                ramp = -(_H0(spec, np.clip(lo, a, b)) - _H0(spec, a)) / eps
                flat = -(_G0(spec, np.clip(hi, a, b)) - _G0(spec, np.clip(eps, a, b)))
                out = out + ramp + flat
        return _out(out, s)

    def one(x):
        if x == 0.0:
            return 0.0
        d = 1.0 if x > 0 else -1.0
        f = lambda t: min(t / eps, 1.0) * max(-_g_finite(spec, d * t) * d, 0.0)
        brk = [eps] if abs(x) > eps else []
        v, e = integrate.quad(f, 0.0, abs(x), points=brk or None, limit=200,
                              epsabs=1e-13, epsrel=1e-11)
        if e > 1e-8 * max(1.0, abs(v)):
            raise QuadratureError(f"quadrature of G_minus_eps failed on [0, {x}]")
        return v

    return _out(np.vectorize(one, otypes=[float])(s), s)


def G_eps(spec: NonlinearitySpec, eps: Optional[float], s):
    """G^eps = G_plus - G_minus_eps (>= G)."""
    return G_plus(spec, s) - G_minus_eps(spec, eps, s)


def g_eps(spec: NonlinearitySpec, eps: Optional[float], s):
    gp, gm = split_plus_minus(spec, s)
    if eps is None:
        return gp - gm
    return gp - phi_eps(eps, s) * gm


def dg_eps(spec: NonlinearitySpec, eps: Optional[float], s):
    """Derivative of g_eps (even in s); used only to build preconditioners."""
    s = _check_finite(s)
    if not spec.closed_form:
        h = 1e-6 * np.maximum(np.abs(s), 1e-3)
        return _out((g_eps(spec, eps, s + h) - g_eps(spec, eps, s - h)) / (2 * h), s)
    t = np.abs(s)
    d0 = _dg0(spec, t)
    pos = _in_sign(spec, t, 1)
    neg = _in_sign(spec, t, -1)
    if eps is None:
        return _out(np.where(pos | neg, d0, 0.0), s)
    g0 = _g0(spec, t)
    phi = np.minimum(t / eps, 1.0)
    dphi = np.where(t < eps, 1.0 / eps, 0.0)
    gm = np.where(neg, -g0, 0.0)
    dgm = np.where(neg, -d0, 0.0)
    return _out(np.where(pos, d0, 0.0) - dphi * gm - phi * dgm, s)


def c_eps_bound(spec: NonlinearitySpec, eps: float, samples: int = 20001) -> float:
    """max_{0<|t|<=1} phi_eps(t) g_minus(t) / (2|t|), so G_minus_eps(s) <= c s^2 on |s|<=1."""
    t = np.linspace(1.0 / samples, 1.0, samples)
    _, gm = split_plus_minus(spec, t)
    return float(np.max(phi_eps(eps, t) * np.abs(gm) / (2.0 * t)))


# ---------------------------------------------------------------------------
# assumption audit

@dataclass(frozen=True)
class AssumptionVerdict:
    name: str
    verdict: str  # "pass" | "fail" | "indeterminate"
    witness_s: list
    estimate: Optional[float]
    note: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "verdict": self.verdict,
                "witness_s": [float(x) for x in self.witness_s],
                "estimate": None if self.estimate is None else float(self.estimate)}


@dataclass(frozen=True)
class AssumptionReport:
    items: tuple

    def __getitem__(self, name: str) -> AssumptionVerdict:
        for it in self.items:
            if it.name == name:
                return it
        raise KeyError(name)

    @property
    def xi0(self) -> Optional[float]:
        w = self["g4"].witness_s
        return w[0] if self["g4"].verdict == "pass" and w else None

    def to_json(self) -> str:
        return json.dumps([it.to_dict() for it in self.items], indent=2)


def _aitken(x0, x1, x2):
    d1, d2 = x1 - x0, x2 - x1
    den = d2 - d1
    if den == 0.0 or not math.isfinite(den):
        return x2
    return x2 - d2 * d2 / den


def _limit_zero(name, s_points, values, rel=1e-2, note=""):
    """Verdict for lim f = 0 from samples ordered towards the limit point."""
    v = [float(x) for x in values]
    scale = max(abs(x) for x in v)
    if scale == 0.0:
        return AssumptionVerdict(name, "pass", list(s_points), 0.0, note)
    e1 = _aitken(*v[-4:-1])
    e2 = _aitken(*v[-3:])
    atol = rel * scale
    agree = abs(e1 - e2) <= 0.1 * max(abs(e1), abs(e2)) or max(abs(e1), abs(e2)) <= atol
    if not agree:
        return AssumptionVerdict(name, "indeterminate", list(s_points), e2, note)
    return AssumptionVerdict(name, "pass" if abs(e2) <= atol else "fail", list(s_points), e2, note)


def check_assumptions(spec: NonlinearitySpec, sample_count: int = 64) -> AssumptionReport:
    """Numerically audit (g0)-(g4) on log-spaced sample grids."""
    ex = spec.exponents
    small = [10.0 ** (-2 - k) for k in range(4)]     # 3 decades towards 0
    large = [10.0 ** (2 + k) for k in range(4)]      # 3 decades towards inf
    items = []

    g0_vals = [max(abs(eval_g(spec, s)), abs(eval_g(spec, -s))) for s in small]
    v0 = _limit_zero("g0", small, g0_vals)
    at0 = float(eval_g(spec, 0.0))
    if at0 != 0.0:
        v0 = AssumptionVerdict("g0", "fail", [0.0], at0)
    items.append(v0)

    g1_vals = [max(G_plus(spec, s), G_plus(spec, -s)) / s ** 2 for s in small]
    items.append(_limit_zero("g1", small, g1_vals))

    if spec.N >= 3:
        f = [max(abs(eval_g(spec, s)), abs(eval_g(spec, -s))) / s ** (ex.q_prime - 1.0) for s in large]
        growth = [f[k + 1] / f[k] if f[k] > 0 else 1.0 for k in range(3)]
        if f[-1] <= 1.1 * f[-2] or f[-1] == 0.0:
            verdict = "pass"
        elif growth[-1] > 2.0 and growth[-2] > 2.0:
            verdict = "fail"
        else:
            verdict = "indeterminate"
        items.append(AssumptionVerdict("g2", verdict, large, f[-1]))
    else:
        pts = [2.0, 4.0, 8.0, 16.0]
        vals = [max(abs(eval_g(spec, s)), abs(eval_g(spec, -s))) * math.exp(-s * s) for s in pts]
        items.append(_limit_zero("g2", pts, vals, note="N=2: only g(s) exp(-s^2) -> 0 is probed"))

    g3_vals = [max(G_plus(spec, s), G_plus(spec, -s)) / s ** ex.q_bar for s in large]
    items.append(_limit_zero("g3", large, g3_vals))

    items.append(_find_xi0(spec, sample_count))
    return AssumptionReport(tuple(items))


def _find_xi0(spec, sample_count):
    coarse = [math.exp(k) for k in range(-20, 21)]
    for grid in (coarse, list(np.exp(np.linspace(-20.0, 20.0, 40 * max(sample_count, 8) + 1)))):
        for s in grid:
            for x in (s, -s):
                G = float(eval_G(spec, x))
                if G > 0.0:
                    return AssumptionVerdict("g4", "pass", [float(x)], G)
    return AssumptionVerdict("g4", "fail", [], None, "no xi0 with G(xi0) > 0 found by scan")
