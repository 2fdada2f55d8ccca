"""Radial discretization of R^N.

A radial function u(|x|) is sampled on a uniform grid 0 = r_0 < ... < r_{n-1}
= r_max.  Integrals over R^N reduce to int_0^R f(r) omega r^(N-1) dr with
omega the area of the unit sphere; they are evaluated with trapezoidal
weights.  The trapezoid weight at the origin vanishes for N >= 2, so it is
replaced by the volume of the ball of radius h/2 (an O(h^N) change) to keep
the nodal mass matrix positive definite.

Gradient-type integrals use the cell differences (u_{i+1} - u_i)/h with
midpoint weights ``edge_weights``; ``derivative`` gives nodal central
differences for pointwise inspection.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.special import gamma


class ResamplingWarning(UserWarning):
    """Resampling pushed part of a field outside [0, r_max]."""


def sphere_area(N: int) -> float:
    """Surface area of the unit sphere in R^N."""
    return 2.0 * math.pi ** (N / 2.0) / gamma(N / 2.0)


def ball_volume(N: int, R: float) -> float:
    return sphere_area(N) * R ** N / N


@dataclass(frozen=True, eq=False)
class RadialGrid:
    N: int
    r_max: float
    n: int
    nodes: np.ndarray
    weights: np.ndarray
    edge_weights: np.ndarray

    @property
    def h(self) -> float:
        return self.r_max / (self.n - 1)

    @property
    def omega(self) -> float:
        return sphere_area(self.N)

    def field(self, values) -> "RadialField":
        return RadialField(self, np.asarray(values, dtype=float))

    def from_function(self, f) -> "RadialField":
        return RadialField(self, np.asarray(f(self.nodes), dtype=float))


def make_grid(N: int, r_max: float, n: int) -> RadialGrid:
    if int(N) != N or N < 1:
        raise ValueError(f"dimension must be a positive integer (got {N})")
    if not (r_max > 0 and math.isfinite(r_max)):
        raise ValueError(f"r_max must be positive and finite (got {r_max})")
    if int(n) != n or n < 16:
        raise ValueError(f"need at least 16 nodes (got {n})")
    N, n = int(N), int(n)
    r = np.linspace(0.0, r_max, n)
    h = r_max / (n - 1)
    om = sphere_area(N)
    w = om * h * r ** (N - 1)
    w[-1] *= 0.5
    w[0] = om * (0.5 * h) ** N / N
    mid = 0.5 * (r[1:] + r[:-1])
    W = om * h * mid ** (N - 1)
    for a in (r, w, W):
        a.setflags(write=False)
    return RadialGrid(N=N, r_max=float(r_max), n=n, nodes=r, weights=w, edge_weights=W)


@dataclass(frozen=True, eq=False)
class RadialField:
    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ValueError(f"field has {v.shape} values for a grid of {self.grid.n} nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    def with_values(self, values) -> "RadialField":
        return RadialField(self.grid, values)

    def __mul__(self, a: float) -> "RadialField":
        return RadialField(self.grid, self.values * a)

    __rmul__ = __mul__

    def __add__(self, other: "RadialField") -> "RadialField":
        return RadialField(self.grid, self.values + other.values)

    def __sub__(self, other: "RadialField") -> "RadialField":
        return RadialField(self.grid, self.values - other.values)


def derivative(u: RadialField, even: bool = True) -> RadialField:
    """Second-order nodal derivative; ``even`` pins u'(0) = 0."""
    v, h = u.values, u.grid.h
    d = np.empty_like(v)
    d[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    # one-sided stencils in difference form so constants give exactly 0
    d[0] = 0.0 if even else (3.0 * (v[1] - v[0]) - (v[2] - v[1])) / (2.0 * h)
    d[-1] = (3.0 * (v[-1] - v[-2]) - (v[-2] - v[-3])) / (2.0 * h)
    return RadialField(u.grid, d)


def edge_differences(u: RadialField) -> np.ndarray:
    """Cell-midpoint difference quotients (u_{i+1} - u_i)/h."""
    return np.diff(u.values) / u.grid.h


def integrate(f: RadialField) -> float:
    return float(np.dot(f.grid.weights, f.values))


def lp_norm(u: RadialField, m: float) -> float:
    if m < 1:
        raise ValueError(f"L^m norm needs m >= 1 (got {m})")
    return float(np.dot(u.grid.weights, np.abs(u.values) ** m)) ** (1.0 / m)


def mass(u: RadialField) -> float:
    return float(np.dot(u.grid.weights, u.values * u.values))


def grad_norm(u: RadialField, m: float = 2.0) -> float:
    """(int |u'|^m)^(1/m) from cell differences."""
    du = edge_differences(u)
    return float(np.dot(u.grid.edge_weights, np.abs(du) ** m)) ** (1.0 / m)


def project_mass(u: RadialField, c: float) -> RadialField:
    """Rescale u onto the sphere ||u||_2 = c."""
    m = mass(u)
    if not m > 0.0:
        raise ValueError("cannot project a zero field onto a mass sphere")
    return RadialField(u.grid, u.values * (c / math.sqrt(m)))


def _resample(u: RadialField, scale: float, amp: float, what: str,
              tol: float = 1e-3) -> RadialField:
    r = u.grid.nodes
    v = amp * np.interp(scale * r, r, u.values, right=0.0)
    out = RadialField(u.grid, v)
    # mass that should exist beyond r_max (scale < 1) is lost
    if scale < 1.0 and mass(u) > 0:
        lost = u.values[r > scale * u.grid.r_max]
        w = u.grid.weights[r > scale * u.grid.r_max]
        defect = float(np.dot(w, lost * lost)) / mass(u)
        if defect > tol:
            warnings.warn(f"{what}: {defect:.3g} of the mass leaves [0, r_max]",
                          ResamplingWarning, stacklevel=3)
    return out


def dilate(u: RadialField, t: float) -> RadialField:
    """u_t(x) = t^(N/2) u(t x), mass preserving in the continuum."""
    if not t > 0:
        raise ValueError("dilation factor must be positive")
    if t == 1.0:
        return u
    return _resample(u, t, t ** (u.grid.N / 2.0), "dilate")


def mass_scale(u: RadialField, s: float) -> RadialField:
    """x -> u(s^(-1/N) x), which multiplies the mass by s."""
    if not s > 0:
        raise ValueError("mass scale factor must be positive")
    if s == 1.0:
        return u
    return _resample(u, s ** (-1.0 / u.grid.N), 1.0, "mass_scale")


def mass_defect(u: RadialField, v: RadialField, expected_ratio: float = 1.0) -> float:
    """Relative deviation of mass(v)/mass(u) from ``expected_ratio``."""
    return abs(mass(v) / mass(u) / expected_ratio - 1.0)


def gaussian_bump(grid: RadialGrid, c: float, width: float | None = None) -> RadialField:
    width = grid.r_max / 8.0 if width is None else width
    u = grid.from_function(lambda r: np.exp(-0.5 * (r / width) ** 2))
    u.values[-1] = 0.0
    return project_mass(u, c)


def plateau_function(xi0: float, R: float, grid: RadialGrid) -> RadialField:
    """xi0 on r <= R, linear down to 0 at R + 1, zero beyond."""
    if not (R >= 0 and R + 1.0 < grid.r_max):
        raise ValueError(f"need 0 <= R and R + 1 < r_max (R={R}, r_max={grid.r_max})")
    r = grid.nodes
    v = xi0 * np.clip(R + 1.0 - r, 0.0, 1.0)
    return RadialField(grid, v)


def appendix_function(grid: RadialGrid) -> RadialField:
    """(r^(N/2) ln r)^(-1) for r >= 3, 0 for r <= 2, cubic bridge between.

    The bridge is the cubic Hermite interpolant with zero slopes at both
    ends; it is monotone on (2, 3).
    """
    if not grid.r_max > 3.0:
        raise ValueError("slow-decay profile needs r_max > 3")
    N = grid.N
    r = grid.nodes
    v = np.zeros_like(r)
    far = r >= 3.0
    v[far] = 1.0 / (r[far] ** (N / 2.0) * np.log(r[far]))
    mid = (r > 2.0) & (r < 3.0)
    top = 1.0 / (3.0 ** (N / 2.0) * math.log(3.0))
    bridge = CubicHermiteSpline([2.0, 3.0], [0.0, top], [0.0, 0.0])
    v[mid] = bridge(r[mid])
    return RadialField(grid, v)


def appendix_exact(N: int, r):
    """Closed form of the slow-decay profile and its derivative for r >= 3."""
    r = np.asarray(r, dtype=float)
    lr = np.log(r)
    u = 1.0 / (r ** (N / 2.0) * lr)
    du = -u * (N / 2.0 + 1.0 / lr) / r
    return u, du


def field_to_csv(u: RadialField, header: list[str] | None = None) -> str:
    buf = io.StringIO()
    for line in header or []:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r", "u"])
    for r, v in zip(u.grid.nodes, u.values):
        w.writerow([f"{r:.17g}", f"{v:.17g}"])
    return buf.getvalue()


def field_from_csv(text: str, N: int) -> RadialField:
    rows = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    data = list(csv.reader(rows[1:]))
    r = np.array([float(a) for a, _ in data])
    v = np.array([float(b) for _, b in data])
    grid = make_grid(N, float(r[-1]), len(r))
    if not np.allclose(grid.nodes, r, rtol=1e-12, atol=1e-14):
        raise ValueError("CSV nodes are not a uniform radial grid")
    return RadialField(grid, v)
