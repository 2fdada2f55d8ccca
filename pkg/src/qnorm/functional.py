"""Discrete energies J, J_eps, their exact gradients and identity residuals.

The discrete energy of a nodal field u is

    J_eps(u) = 1/2 sum_j W_j du_j^2
             + 1/q sum_j W_j [(du_j^2 + d^2)^(q/2) - d^q]
             + sum_i w_i G_minus_eps(u_i) - sum_i w_i G_plus(u_i)

with du_j the cell difference quotients, W_j the cell-midpoint weights, w_i
the nodal weights and d a small smoothing length keeping the q-term C^1.
``gradient`` returns the exact derivative of this expression represented in
the nodal L^2 inner product (divided by w_i).

The Pohozaev and Nehari residuals are evaluated with nodal central
differences instead of the cell differences used by the energy, so they
measure how well a discrete critical point satisfies the continuum
identities rather than re-checking the discrete KKT system.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import kernels
from . import nonlinearity as nl
from .grid import RadialField, derivative, grad_norm, lp_norm, mass

DEFAULT_DELTA = 1e-8

# relative size of the outer-half contribution that marks int G_minus as
# truncation-sensitive (not converged as r_max grows)
TAIL_FRACTION = 1e-3


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic2: float
    kineticq: float
    gminus_eps: float
    gplus: float
    eps: Optional[float] = None
    divergent: bool = False

    @property
    def total(self) -> float:
        return self.kinetic2 + self.kineticq + self.gminus_eps - self.gplus

    def to_dict(self) -> dict:
        d = asdict(self)
        d["total"] = self.total
        return d


def energy(u: RadialField, spec: nl.NonlinearitySpec, eps: Optional[float] = None, *,
           q_term: bool = True, delta_s: float = DEFAULT_DELTA,
           check_tail: bool = True, backend: Optional[str] = None) -> EnergyBreakdown:
    """J_eps(u), or J(u) when ``eps`` is None.

    Without regularization the negative part may fail to be integrable on
    R^N; if the outer half of the grid carries a non-negligible share of
    int G_minus(u) the term is reported as +inf with ``divergent=True``.
    """
    k2, kq, gm, gp, _ = kernels.evaluate(u.values, u.grid, spec, eps, q_term, delta_s,
                                         False, backend)
    divergent = False
    if eps is None and check_tail and gm > 0.0:
        outer = u.grid.nodes > 0.5 * u.grid.r_max
        tail = float(np.dot(u.grid.weights[outer], nl.G_minus(spec, u.values[outer])))
        if tail > TAIL_FRACTION * gm:
            divergent = True
            gm = math.inf
    return EnergyBreakdown(k2, kq, gm, gp, eps, divergent)


def euclidean_gradient(u: np.ndarray, grid, spec, eps, *, q_term=True,
                       delta_s=DEFAULT_DELTA, backend=None):
    """(energy total, d energy / d u_i) for a raw nodal array."""
    k2, kq, gm, gp, e = kernels.evaluate(u, grid, spec, eps, q_term, delta_s, True, backend)
    return k2 + kq + gm - gp, e


def gradient(u: RadialField, spec: nl.NonlinearitySpec, eps: Optional[float] = None, *,
             q_term: bool = True, delta_s: float = DEFAULT_DELTA,
             backend: Optional[str] = None) -> RadialField:
    _, e = euclidean_gradient(u.values, u.grid, spec, eps, q_term=q_term,
                              delta_s=delta_s, backend=backend)
    return RadialField(u.grid, e / u.grid.weights)


def inner(u: RadialField, v: RadialField) -> float:
    return float(np.dot(u.grid.weights, u.values * v.values))


def lagrange_multiplier(u: RadialField, grad: RadialField) -> float:
    """lambda making grad + lambda u orthogonal to u."""
    m = mass(u)
    if not m > 0.0:
        raise ValueError("multiplier undefined for a zero field")
    return -inner(grad, u) / m


def _identity_terms(u: RadialField, spec, q_term):
    du = derivative(u).values
    w = u.grid.weights
    k2 = float(np.dot(w, du * du))
    kq = float(np.dot(w, np.abs(du) ** spec.q)) if q_term else 0.0
    return k2, kq


def _relative(lhs: float, rhs: float) -> float:
    return abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1.0)


def nehari_residual(u: RadialField, lam: float, spec: nl.NonlinearitySpec,
                    eps: Optional[float] = None, *, q_term: bool = True) -> float:
    """int |u'|^2 + |u'|^q + lam u^2  versus  int g_eps(u) u."""
    k2, kq = _identity_terms(u, spec, q_term)
    lhs = k2 + kq + lam * mass(u)
    rhs = float(np.dot(u.grid.weights, nl.g_eps(spec, eps, u.values) * u.values))
    return _relative(lhs, rhs)


def pohozaev_residual(u: RadialField, lam: float, spec: nl.NonlinearitySpec,
                      eps: Optional[float] = None, *, q_term: bool = True) -> float:
    """(N-2)/2 |u'|_2^2 + (N-q)/q |u'|_q^q + lam N/2 |u|_2^2  versus  N int G_eps(u)."""
    N, q = spec.N, spec.q
    k2, kq = _identity_terms(u, spec, q_term)
    lhs = 0.5 * (N - 2) * k2 + (N - q) / q * kq + 0.5 * lam * N * mass(u)
    rhs = N * float(np.dot(u.grid.weights, nl.G_eps(spec, eps, u.values)))
    return _relative(lhs, rhs)


def gn_ratio(u: RadialField, p: float, C: float = 1.0, *, q: Optional[float] = None) -> float:
    """|u|_p / (C |u'|_2^delta |u|_2^(1-delta)); with ``q`` the q-gradient variant."""
    N = u.grid.N
    l2 = math.sqrt(mass(u))
    if l2 == 0.0:
        raise ValueError("GN ratio undefined for a zero field")
    if q is None:
        e = N * (p - 2.0) / (2.0 * p)
        gnorm = grad_norm(u, 2.0)
    else:
        e = N * q * (p - 2.0) / (p * (N * q - 2.0 * (N - q)))
        gnorm = grad_norm(u, q)
    return lp_norm(u, p) / (C * gnorm ** e * l2 ** (1.0 - e))


def gn_check(u: RadialField, p: float, N: int, C: float, *, q: Optional[float] = None) -> float:
    if u.grid.N != N:
        raise ValueError(f"field lives in dimension {u.grid.N}, not {N}")
    if q is None:
        bound = 2.0 * N / (N - 2.0) if N >= 3 else math.inf
    else:
        bound = nl.critical_exponents(N, q).q_prime
    if not 2.0 < p < bound:
        raise ValueError(f"GN exponent needs 2 < p < {bound:.6g} (got {p})")
    return gn_ratio(u, p, C, q=q)
