"""Minimization of J_eps on the mass sphere ||u||_2 = c and eps-continuation.

Each iteration takes a search direction tangent to the sphere in a
variable metric P, a tridiagonal approximation of the Hessian of the
Lagrangian J_eps + lambda/2 ||u||^2 (kinetic stiffness, linearized q-term,
and a floored mass term lambda - g_eps'(u)).  The step is projected back
onto the sphere and accepted by Armijo backtracking on J_eps, so the energy
trace never increases.  Near a nondegenerate minimizer P is the exact
Hessian and the iteration converges like Newton's method.

The last node carries a homogeneous Dirichlet condition; the remaining
nodes are free.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_banded, solveh_banded

from . import functional as fn
from . import kernels
from . import nonlinearity as nl
from .grid import (RadialField, RadialGrid, gaussian_bump, mass, plateau_function,
                   project_mass)

DEFAULT_SCHEDULE = tuple(2.0 ** -k for k in range(1, 13))
INITS = ("gaussian_bump", "plateau", "provided")


class SolverError(RuntimeError):
    """Non-finite energy during a solve."""


class StalledError(RuntimeError):
    def __init__(self, message: str, report: "SolveReport", stage: Optional[int] = None):
        super().__init__(message)
        self.report = report
        self.stage = stage


@dataclass(frozen=True)
class SolverConfig:
    step0: float = 1.0
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    tol_pgrad: Optional[float] = None  # None: 1e-8 (1 + |energy|)
    max_iter: int = 2000
    eps_schedule: tuple = DEFAULT_SCHEDULE
    delta_s: float = fn.DEFAULT_DELTA
    init: str = "gaussian_bump"
    seed: int = 0
    q_term: bool = True
    min_step: float = 1e-12
    metric_floor: float = 1e-2
    newton: bool = True
    patience: int = 50

    def __post_init__(self):
        sched = tuple(float(e) for e in self.eps_schedule)
        object.__setattr__(self, "eps_schedule", sched)
        for name in ("step0", "delta_s", "min_step", "metric_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.tol_pgrad is not None and not self.tol_pgrad > 0:
            raise ValueError("tol_pgrad must be positive")
        for name in ("armijo_c", "backtrack"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if int(self.patience) != self.patience or self.patience < 1:
            raise ValueError("patience must be a positive integer")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")
        if any(not 0 < e < 1 for e in sched):
            raise ValueError("eps_schedule entries must lie in (0, 1)")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValueError("eps_schedule must be strictly decreasing")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}")

    def tolerance(self, energy_total: float) -> float:
        if self.tol_pgrad is not None:
            return self.tol_pgrad
        return 1e-8 * (1.0 + abs(energy_total))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eps_schedule"] = list(self.eps_schedule)
        return d


@dataclass(frozen=True)
class SolveReport:
    field: RadialField
    lam: float
    energy: fn.EnergyBreakdown
    pgrad_norm: float
    pohozaev: float
    nehari: float
    mass_defect: float
    iterations: int
    eps: Optional[float]
    trace: tuple  # ((energy, pgrad_norm), ...)
    status: str = "converged"  # converged | stalled | max_iter
    c: float = 0.0

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self, with_field: bool = False) -> dict:
        d = {
            "c": self.c, "lambda": self.lam, "energy": self.energy.to_dict(),
            "pgrad_norm": self.pgrad_norm, "pohozaev": self.pohozaev,
            "nehari": self.nehari, "mass_defect": self.mass_defect,
            "iterations": self.iterations, "eps": self.eps, "status": self.status,
            "grid": {"N": self.field.grid.N, "r_max": self.field.grid.r_max,
                     "n": self.field.grid.n},
        }
        if with_field:
            d["field"] = self.field.values.tolist()
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(**kw), indent=2)

    def trace_csv(self, header: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in header:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "energy", "pgrad_norm"])
        for k, (e, g) in enumerate(self.trace):
            w.writerow([k, f"{e:.17g}", f"{g:.17g}"])
        return buf.getvalue()


def _hessian_parts(u, lam, grid, spec, eps, cfg):
    """Edge couplings and nodal potential of the Lagrangian Hessian."""
    h, W = grid.h, grid.edge_weights
    a = W / (h * h)
    if cfg.q_term:
        du = np.diff(u) / h
        d2 = cfg.delta_s ** 2
        s2 = du * du + d2
        a = a + W * s2 ** (0.5 * spec.q - 2.0) * ((spec.q - 1.0) * du * du + d2) / (h * h)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        pot = lam - nl.dg_eps(spec, eps, u)
    pot = np.clip(np.nan_to_num(pot, nan=0.0, posinf=1e300, neginf=-1e300), -1e300, 1e300)
    return a, pot


def _banded(a, pot, w, floor):
    """Tridiagonal matrix on the free nodes as (ab_upper, ab_general)."""
    diag = w * (pot if floor is None else np.maximum(pot, floor))
    diag[:-1] += a
    diag[1:] += a
    m = w.size - 1  # drop the Dirichlet node
    off = -a[: m - 1]
    if floor is not None:
        ab = np.zeros((2, m))
        ab[0, 1:] = off
        ab[1] = diag[:m]
        return ab
    ab = np.zeros((3, m))
    ab[0, 1:] = off
    ab[1] = diag[:m]
    ab[2, :-1] = off
    return ab


def _direction(solve, e, mu_):
    """Tangent step d = -A^-1 e + beta A^-1 M u with <M u, d> = 0."""
    pe = solve(e[:-1])
    pm = solve(mu_)
    den = float(np.dot(mu_, pm))
    if not (np.all(np.isfinite(pe)) and np.all(np.isfinite(pm))) or den == 0.0:
        return None
    d = np.zeros(e.size)
    d[:-1] = -pe + (float(np.dot(mu_, pe)) / den) * pm
    return d


def _residual_norm(e, u, lam, w):
    r = e[:-1] + lam * w[:-1] * u[:-1]
    return math.sqrt(float(np.dot(r, r / w[:-1])))


def _check_energy(parts, it):
    names = ("kinetic2", "kineticq", "gminus_eps", "gplus")
    for name, v in zip(names, parts):
        if not math.isfinite(v):
            raise SolverError(f"non-finite {name} at iteration {it}")


def minimize_fixed_eps(init_field: RadialField, c: float, spec: nl.NonlinearitySpec,
                       eps: Optional[float], cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Projected descent for min J_eps on the sphere of mass c^2 (eps=None: J)."""
    if not c > 0:
        raise ValueError("mass parameter c must be positive")
    grid = init_field.grid
    if grid.N != spec.N:
        raise ValueError(f"grid dimension {grid.N} differs from spec dimension {spec.N}")
    w = grid.weights
    u = init_field.values.copy()
    u[-1] = 0.0
    if not np.any(u):
        raise ValueError("initial field vanishes")
    u *= c / math.sqrt(float(np.dot(w, u * u)))
    kw = dict(q_term=cfg.q_term, delta_s=cfg.delta_s)

    def evaluate(v, it):
        parts = kernels.evaluate(v, grid, spec, eps, cfg.q_term, cfg.delta_s, True)
        _check_energy(parts[:4], it)
        return parts[0] + parts[1] + parts[2] - parts[3], parts[4]

    E, e = evaluate(u, 0)
    trace = []
    status = "max_iter"
    it = 0
    step = cfg.step0
    c2 = c * c
    for it in range(cfg.max_iter + 1):
        mu_ = u[:-1] * w[:-1]
        lam = -float(np.dot(e[:-1], u[:-1])) / c2
        res = _residual_norm(e, u, lam, w)
        trace.append((E, res))
        if res <= cfg.tolerance(E):
            status = "converged"
            break
        if it == cfg.max_iter:
            break
        if it >= cfg.patience and res > 0.99 * trace[-1 - cfg.patience][1]:
            status = "stalled"  # no progress over the last `patience` iterations
            break
        a, pot = _hessian_parts(u, lam, grid, spec, eps, cfg)
        d = None
        if cfg.newton:
            ab = _banded(a, pot, w, None)
            try:
                d = _direction(lambda b: solve_banded((1, 1), ab, b, check_finite=False), e, mu_)
            except (np.linalg.LinAlgError, ValueError):
                d = None
            # on the tangent space, negative slope means positive curvature along d
            if d is not None and not float(np.dot(e, d)) < 0:
                d = None
        if d is None:
            ab = _banded(a, pot, w, cfg.metric_floor * max(1.0, abs(lam)))
            d = _direction(lambda b: solveh_banded(ab, b, check_finite=False), e, mu_)
        if d is None:
            status = "stalled"
            break
        slope = float(np.dot(e, d))
        if not slope < 0:
            status = "stalled"
            break
        # Armijo on the projected point, comparing energies through accurate
        # differences; the trial step grows again after easy acceptances
        tau = min(cfg.step0, 2.0 * step)
        while True:
            v = u + tau * d
            v *= c / math.sqrt(float(np.dot(w, v * v)))
            dE = kernels.energy_difference(u, v, grid, spec, eps, cfg.q_term, cfg.delta_s)
            if dE <= cfg.armijo_c * tau * slope:
                break
            tau *= cfg.backtrack
            if tau < cfg.min_step:
                break
        if tau < cfg.min_step:
            status = "stalled"
            break
        _, ev = evaluate(v, it)
        step = tau
        # the trace accumulates the differences, so it is nonincreasing by construction
        u, E, e = v, E + dE, ev

    if spec.closed_form and float(np.dot(w, u)) < 0:
        # the built-in g are odd, so -u is the same critical point
        u, e = -u, -e
    f = RadialField(grid, u)
    lam = -float(np.dot(e[:-1], u[:-1])) / c2
    en = fn.energy(f, spec, eps, **kw)
    return SolveReport(
        field=f, lam=lam, energy=en, pgrad_norm=trace[-1][1],
        pohozaev=fn.pohozaev_residual(f, lam, spec, eps, q_term=cfg.q_term),
        nehari=fn.nehari_residual(f, lam, spec, eps, q_term=cfg.q_term),
        mass_defect=abs(mass(f) / c2 - 1.0), iterations=len(trace) - 1, eps=eps,
        trace=tuple(trace), status=status, c=float(c))


def initial_field(grid: RadialGrid, c: float, spec: nl.NonlinearitySpec,
                  cfg: SolverConfig, provided: Optional[RadialField] = None) -> RadialField:
    if cfg.init == "provided":
        if provided is None:
            raise ValueError("init=provided needs a field")
        return project_mass(provided, c)
    if cfg.init == "plateau":
        xi0 = nl.check_assumptions(spec).xi0 or 1.0
        R = max(0.0, min(grid.r_max / 4.0, grid.r_max - 2.0))
        return project_mass(plateau_function(xi0, R, grid), c)
    return gaussian_bump(grid, c)


def continuation_solve(c: float, spec: nl.NonlinearitySpec, cfg: SolverConfig,
                       grid: RadialGrid, init_field: Optional[RadialField] = None,
                       raise_on_stall: bool = False) -> list:
    """Warm-started solves along cfg.eps_schedule; the last report is the eps -> 0 proxy.

    When g has no negative part J_eps = J, so a single unregularized solve
    is returned.
    """
    if not cfg.eps_schedule:
        raise ValueError("eps_schedule is empty")
    u = initial_field(grid, c, spec, cfg, init_field)
    has_minus = any(s < 0 for _, _, s in spec.sign_intervals)
    schedule = cfg.eps_schedule if has_minus else (None,)
    reports = []
    for k, eps in enumerate(schedule):
        rep = minimize_fixed_eps(u, c, spec, eps, cfg)
        reports.append(rep)
        if rep.status != "converged" and raise_on_stall:
            raise StalledError(f"stage {k} (eps={eps}) ended {rep.status}", rep, k)
        u = rep.field
    return reports


@dataclass(frozen=True)
class AttainmentVerdict:
    attained: bool
    interior_suspected: bool
    lam: float
    mass_defect: float

    def to_dict(self) -> dict:
        return asdict(self)


def boundary_attainment(report: SolveReport, c: float, lam_tol: float = 1e-8,
                        defect_tol: float = 1e-10) -> AttainmentVerdict:
    defect = abs(mass(report.field) / (c * c) - 1.0)
    return AttainmentVerdict(
        attained=bool(defect <= defect_tol and report.lam > lam_tol),
        interior_suspected=bool(report.lam <= lam_tol),
        lam=report.lam, mass_defect=defect)


@dataclass(frozen=True)
class QualitativeVerdict:
    sign_constant: bool
    radially_monotone: bool
    defect_nodes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def qualitative_check(u: RadialField, rel_tol: float = 1e-8) -> QualitativeVerdict:
    v = u.values
    tol = rel_tol * float(np.max(np.abs(v))) if v.size else 0.0
    sign_ok = bool(np.all(v >= -tol) or np.all(v <= tol))
    a = np.abs(v)
    bad = np.nonzero(np.diff(a) > tol)[0] + 1
    return QualitativeVerdict(sign_ok, bad.size == 0, bad.tolist())


def rearrange_decreasing(u: RadialField) -> RadialField:
    """Equimeasurable radially decreasing rearrangement on the same grid.

    Node values are sorted in decreasing order and assigned outward; each
    value keeps the measure of the node it came from, and the result is
    sampled at the grid nodes by matching cumulative measure.
    """
    v = u.values
    if np.any(v < 0):
        raise ValueError("rearrangement needs a nonnegative field (pass |u|)")
    w = u.grid.weights
    order = np.argsort(-v, kind="stable")
    vals = v[order]
    cum_src = np.cumsum(w[order])
    cum_dst = np.cumsum(w)
    # node j takes the value occupying the middle of its measure slot
    mid = cum_dst - 0.5 * w
    idx = np.minimum(np.searchsorted(cum_src, mid), v.size - 1)
    out = vals[idx]
    if np.all(np.diff(v) <= 0):
        return u
    return RadialField(u.grid, out)
