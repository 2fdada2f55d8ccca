"""Mass sweeps, the c-bar dichotomy, the log-power threshold, GN constants
and the divergence demo for the unregularized energy.

Ground energies are reported as m(c) = min(0, E(c)) where E(c) is the
lowest energy found on the mass sphere inside the computational ball.  On
R^N a mass-c^2 field can spread out with vanishing energy, so whenever
E(c) >= 0 the infimum is 0 and the point is flagged ``degenerate``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from . import functional as fn
from . import nonlinearity as nl
from . import solver as sv
from .grid import (RadialGrid, appendix_function, gaussian_bump, grad_norm,
                   integrate, make_grid, mass, plateau_function, project_mass)

STATUSES = ("converged", "stalled", "degenerate")


# ---------------------------------------------------------------------------
# ground energy at one mass

@dataclass(frozen=True)
class PointResult:
    c: float
    sphere_energy: float
    lam: float
    status: str
    eps_energies: tuple
    tol: float
    starts: tuple = ()  # final energies of every start, for basin reporting
    stalled_stages: int = 0
    report: Optional[sv.SolveReport] = None

    @property
    def m(self) -> float:
        return min(0.0, self.sphere_energy) if math.isfinite(self.sphere_energy) else math.nan


def screened_start(grid: RadialGrid, c: float, spec, cfg: sv.SolverConfig, count: int = 24):
    """Gaussian bump of mass c^2 whose width minimizes the first-stage energy."""
    eps = cfg.eps_schedule[0] if cfg.eps_schedule else None
    if not any(s < 0 for _, _, s in spec.sign_intervals):
        eps = None
    best = None
    for width in np.geomspace(8.0 * grid.h, grid.r_max / 4.0, count):
        u = gaussian_bump(grid, c, width)
        e = fn.energy(u, spec, eps, q_term=cfg.q_term, delta_s=cfg.delta_s,
                      check_tail=False).total
        if best is None or e < best[0]:
            best = (e, u)
    return best[1]


def solve_point(c: float, spec, cfg: sv.SolverConfig, grid: RadialGrid,
                multi_start: bool = True, tol_energy: float = 1e-8,
                keep_report: bool = False) -> PointResult:
    """Lowest sphere energy at mass c^2 from one or two starts (never raises)."""
    starts = [None]
    if multi_start:
        starts.append(screened_start(grid, c, spec, cfg))
    best, finals = None, []
    for start in starts:
        run_cfg = cfg if start is None else sv.SolverConfig(**{**cfg.to_dict(), "init": "provided"})
        try:
            reps = sv.continuation_solve(c, spec, run_cfg, grid, init_field=start)
        except (sv.SolverError, nl.QuadratureError, FloatingPointError, ValueError,
                np.linalg.LinAlgError):
            finals.append(math.nan)
            continue
        e = reps[-1].energy.total
        finals.append(e)
        if best is None or e < best[-1].energy.total:
            best = reps
    if best is None:
        return PointResult(c, math.nan, math.nan, "stalled", (), math.nan, tuple(finals),
                           len(starts))
    last = best[-1]
    E = last.energy.total
    tol = cfg.tolerance(E)
    stalled = sum(r.status != "converged" for r in best)
    # a nonnegative sphere energy means m(c) = 0 whatever the last stages did
    if E >= -tol_energy:
        status = "degenerate"
    elif stalled:
        status = "stalled"
    else:
        status = "converged"
    return PointResult(c, E, last.lam, status, tuple(r.energy.total for r in best), tol,
                       tuple(finals), stalled, last if keep_report else None)


def _point_task(args):
    c, spec_dict, cfg_dict, grid_args, multi_start = args
    spec = nl.NonlinearitySpec.from_dict(spec_dict)
    return solve_point(c, spec, sv.SolverConfig(**cfg_dict), make_grid(*grid_args), multi_start)


# ---------------------------------------------------------------------------
# energy curve

@dataclass(frozen=True)
class EnergyCurve:
    c: tuple
    m: tuple
    lam: tuple
    status: tuple
    sphere_energy: tuple
    eps_energies: tuple
    checks: dict = field(default_factory=dict)
    plateau_bound: tuple = ()  # best plateau trial energy per c, an upper bound on m(c)

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.c, self.c[1:])):
            raise ValueError("c values must be strictly increasing")
        if any(s not in STATUSES for s in self.status):
            raise ValueError(f"status must be one of {STATUSES}")

    def to_csv(self, header: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in header:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["c", "m", "lambda", "status", "plateau_bound"])
        bound = self.plateau_bound or (math.nan,) * len(self.c)
        for c, m, lam, st, b in zip(self.c, self.m, self.lam, self.status, bound):
            w.writerow([f"{c:.17g}", f"{m:.17g}", f"{lam:.17g}", st, f"{b:.17g}"])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"c": list(self.c), "m": list(self.m), "lambda": list(self.lam),
                "status": list(self.status), "sphere_energy": list(self.sphere_energy),
                "eps_energies": [list(e) for e in self.eps_energies], "checks": self.checks,
                "plateau_bound": list(self.plateau_bound)}


def _interp(c_list, m_list, c):
    return float(np.interp(c, c_list, m_list))


def curve_checks(c, m, tols, eps_energies, pairs: int = 10, seed: int = 0,
                 scale_samples: int = 10) -> dict:
    """Monotonicity, subadditivity, scaling and eps-trend checks on a curve."""
    c = np.asarray(c, float)
    m = np.asarray(m, float)
    ok = np.isfinite(m)
    cc, mm, tt = c[ok], m[ok], np.asarray(tols, float)[ok]
    tt = np.where(np.isfinite(tt), tt, 0.0)
    mono = [{"c0": float(cc[i]), "c1": float(cc[i + 1]), "excess": float(mm[i + 1] - mm[i])}
            for i in range(cc.size - 1) if mm[i + 1] > mm[i] + 2.0 * max(tt[i], tt[i + 1])]
    rng = np.random.default_rng(seed)
    cand = [(i, j) for i in range(cc.size) for j in range(i, cc.size)
            if math.hypot(cc[i], cc[j]) <= cc[-1]]
    chosen = [cand[k] for k in rng.permutation(len(cand))[:pairs]] if cand else []
    sub = []
    for i, j in chosen:
        c3 = math.hypot(cc[i], cc[j])
        res = _interp(cc, mm, c3) - mm[i] - mm[j]
        sub.append({"c1": float(cc[i]), "c2": float(cc[j]), "c3": c3, "residual": float(res),
                    "ok": bool(res <= 2.0 * max(tt[i], tt[j]))})
    scal = []
    idx = [(i, j) for i in range(cc.size) for j in range(i + 1, cc.size)]
    for k in rng.permutation(len(idx))[:scale_samples] if idx else []:
        i, j = idx[k]
        s = (cc[j] / cc[i]) ** 2
        gap = mm[j] - s * mm[i]
        scal.append({"c": float(cc[i]), "s": float(s), "gap": float(gap),
                     "ok": bool(gap <= 2.0 * max(tt[i], tt[j]) * s)})
    eps_trend = []
    for cv, seq, tol in zip(c, eps_energies, tols):
        seq = np.asarray(seq, float)
        if seq.size < 2:
            continue
        inc = np.diff(seq)
        tol = tol if math.isfinite(tol) else 0.0
        tail = np.abs(inc[-4:])
        eps_trend.append({"c": float(cv),
                          "nondecreasing": bool(np.all(inc >= -2.0 * tol)),
                          "tail_shrinking": bool(np.all(np.diff(tail) <= 2.0 * tol))})
    return {
        "monotone": {"ok": not mono, "violations": mono},
        "subadditivity": {"ok": all(s["ok"] for s in sub), "pairs": sub},
        "scaling": {"ok": all(s["ok"] for s in scal), "samples": scal},
        "eps_trend": {"ok": all(e["nondecreasing"] and e["tail_shrinking"] for e in eps_trend),
                      "points": eps_trend},
    }


def sweep_mass(c_list: Sequence[float], spec, cfg: sv.SolverConfig, grid: RadialGrid, *,
               workers: int = 1, multi_start: bool = True, pairs: int = 10) -> EnergyCurve:
    c_list = [float(x) for x in c_list]
    if not c_list or any(x <= 0 for x in c_list):
        raise ValueError("c_list must contain positive values")
    if any(b <= a for a, b in zip(c_list, c_list[1:])):
        raise ValueError("c_list must be strictly increasing")
    if workers > 1 and spec.closed_form:
        tasks = [(c, spec.to_dict(), cfg.to_dict(), (grid.N, grid.r_max, grid.n), multi_start)
                 for c in c_list]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_point_task, tasks))
    else:
        results = [solve_point(c, spec, cfg, grid, multi_start) for c in c_list]
    results.sort(key=lambda r: r.c)
    m = [r.m for r in results]
    checks = curve_checks(c_list, m, [r.tol for r in results],
                          [r.eps_energies for r in results], pairs=pairs, seed=cfg.seed)
    bound = ()
    xi0 = nl.check_assumptions(spec).xi0 if spec.closed_form else None
    if xi0 is not None:
        bound = tuple(plateau_energy(spec, c, grid, xi0, q_term=cfg.q_term)[0] for c in c_list)
        over = [{"c": c, "m": mc, "bound": b} for c, mc, b, r in zip(c_list, m, bound, results)
                if math.isfinite(mc) and mc > min(0.0, b) + 2.0 * r.tol]
        checks["plateau_bound"] = {"ok": not over, "violations": over}
    return EnergyCurve(tuple(c_list), tuple(m), tuple(r.lam for r in results),
                       tuple(r.status for r in results),
                       tuple(r.sphere_energy for r in results),
                       tuple(r.eps_energies for r in results), checks, bound)


# ---------------------------------------------------------------------------
# threshold mass

@dataclass(frozen=True)
class CbarResult:
    value: object  # "zero", a float midpoint, or None when no bracket exists
    lo: float
    hi: float
    samples: tuple  # ((c, sphere energy), ...)
    monotone: bool
    note: str = ""

    def to_dict(self) -> dict:
        return {"value": self.value, "lo": self.lo, "hi": self.hi,
                "samples": [list(s) for s in self.samples], "monotone": self.monotone,
                "note": self.note}


def find_cbar(spec, c_lo: float, c_hi: float, tol: float, cfg: sv.SolverConfig,
              grid: RadialGrid, tol_energy: float = 1e-8) -> CbarResult:
    """Bisection on the predicate E(c) < -tol_energy."""
    if not 0 < c_lo < c_hi:
        raise ValueError("need 0 < c_lo < c_hi")
    if not tol > 0:
        raise ValueError("tol must be positive")
    samples = []

    def negative(c):
        r = solve_point(c, spec, cfg, grid)
        samples.append((c, r.sphere_energy))
        return r.sphere_energy < -tol_energy

    def monotone():
        s = sorted(samples)
        neg = [e < -tol_energy for _, e in s]
        return all(not a or b for a, b in zip(neg, neg[1:]))

    if negative(c_lo):
        return CbarResult("zero", 0.0, c_lo, tuple(samples), True)
    if not negative(c_hi):
        return CbarResult(None, c_lo, c_hi, tuple(samples), monotone(),
                          "no negative energy found up to c_hi")
    lo, hi = c_lo, c_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if negative(mid):
            hi = mid
        else:
            lo = mid
    mono = monotone()
    return CbarResult(0.5 * (lo + hi), lo, hi, tuple(samples), mono,
                      "" if mono else "predicate not monotone across the samples")


# ---------------------------------------------------------------------------
# log-power threshold

def _gtilde(alpha, mu, p, x):
    """G(s)/s^2 at s = e^x."""
    return 0.5 * alpha * (2.0 * x - 1.0) + mu / p * np.exp((p - 2.0) * x)


def _check_log_power(alpha, mu, p):
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not mu < 0:
        raise ValueError("mu must be negative")
    if not p > 2:
        raise ValueError("p must exceed 2")


@dataclass(frozen=True)
class GtildeMax:
    closed: float
    numeric: float
    s_star: float


def max_gtilde_closed(alpha: float, mu: float, p: float) -> float:
    _check_log_power(alpha, mu, p)
    base = alpha * p / (mu * (2.0 - p))
    return 0.5 * alpha * (math.log(base ** (2.0 / (p - 2.0))) - 1.0) - alpha / (p - 2.0)


def max_Gtilde(alpha: float, mu: float, p: float) -> GtildeMax:
    """max_{s>0} G(s)/s^2, closed form and golden-section value."""
    closed = max_gtilde_closed(alpha, mu, p)
    xs = np.linspace(-60.0, 60.0, 4801)
    with np.errstate(over="ignore"):
        vals = _gtilde(alpha, mu, p, xs)
    k = int(np.clip(np.nanargmax(vals), 1, xs.size - 2))
    res = optimize.minimize_scalar(lambda x: -_gtilde(alpha, mu, p, x),
                                   bracket=(xs[k - 1], xs[k], xs[k + 1]),
                                   method="golden", tol=1e-12)
    return GtildeMax(closed, float(-res.fun), float(math.exp(res.x)))


def mu_star_closed(alpha: float, p: float) -> float:
    if not alpha > 0 or not p > 2:
        raise ValueError("need alpha > 0 and p > 2")
    return -(alpha * p / (p - 2.0)) * math.exp(-p / 2.0)


@dataclass(frozen=True)
class Threshold:
    closed: float
    bisect: float


def mu_star_threshold(alpha: float, p: float) -> Threshold:
    """mu* in closed form and as the bisection root of mu -> max G(s)/s^2."""
    closed = mu_star_closed(alpha, p)
    f = lambda mu: max_gtilde_closed(alpha, mu, p)
    lo = -1.0
    while f(lo) >= 0:
        lo *= 2.0
    hi = -1e-3
    while f(hi) <= 0:
        hi *= 0.5
    root = optimize.bisect(f, lo, hi, xtol=1e-15, maxiter=400)
    return Threshold(closed, float(root))


theorem2_threshold = mu_star_threshold  # name used by the published API


def plateau_energy(spec, c: float, grid: RadialGrid, xi0: float, eps=None,
                   q_term: bool = True) -> tuple:
    """Best plateau trial energy at mass c^2: (energy, R)."""
    best = (math.inf, math.nan)
    for R in np.linspace(0.0, grid.r_max - 2.0, 200):
        u = plateau_function(xi0, R, grid)
        if mass(u) == 0:
            continue
        u = project_mass(u, c)
        e = fn.energy(u, spec, eps, q_term=q_term, check_tail=False).total
        if e < best[0]:
            best = (e, float(R))
    return best


def flip_runs(alpha: float, p: float, N: int, q: float, c: float, cfg: sv.SolverConfig,
              grid: RadialGrid, offset: float = 0.05) -> list:
    """Assumption audit and ground-state solve on both sides of mu*."""
    ms = mu_star_closed(alpha, p)
    out = []
    for side, mu in (("below", ms - offset), ("above", ms + offset)):
        spec = nl.NonlinearitySpec("log_power", N, q, alpha=alpha, mu=mu, p=p)
        audit = nl.check_assumptions(spec)
        pt = solve_point(c, spec, cfg, grid)
        out.append({"side": side, "mu": mu, "c": c, "g4": audit["g4"].verdict,
                    "xi0": audit.xi0, "sphere_energy": pt.sphere_energy, "m": pt.m,
                    "lambda": pt.lam, "status": pt.status,
                    "existence_observed": bool(pt.m < 0 and pt.lam > 0)})
    return out


def threshold_report(alpha: float, p: float, flips: Optional[list] = None) -> dict:
    t = mu_star_threshold(alpha, p)
    return {"alpha": alpha, "p": p, "mu_star_closed": t.closed, "mu_star_bisect": t.bisect,
            "flip_runs": flips or []}


# ---------------------------------------------------------------------------
# Gagliardo-Nirenberg constants

def _gn_pieces(u, grid, p, q, delta):
    w, W, h = grid.weights, grid.edge_weights, grid.h
    a = np.abs(u)
    P = float(np.dot(w, a ** p))
    M = float(np.dot(w, u * u))
    du = np.diff(u) / h
    if q is None:
        K = float(np.dot(W, du * du))
        dK_edge = 2.0 * W * du
    else:
        s2 = du * du + delta * delta
        K = float(np.dot(W, s2 ** (0.5 * q)))
        dK_edge = q * W * s2 ** (0.5 * q - 1.0) * du
    dK = np.zeros_like(u)
    dK[:-1] -= dK_edge / h
    dK[1:] += dK_edge / h
    return P, M, K, p * w * a ** (p - 2.0) * u, 2.0 * w * u, dK


def _neg_log_ratio(u, grid, p, q, N, delta):
    """-ln(ratio) and its gradient, ratio as in functional.gn_ratio with C = 1."""
    if q is None:
        e, m = N * (p - 2.0) / (2.0 * p), 2.0
    else:
        e, m = N * q * (p - 2.0) / (p * (N * q - 2.0 * (N - q))), q
    P, M, K, dP, dM, dK = _gn_pieces(u, grid, p, q, delta)
    if P <= 0 or M <= 0 or K <= 0:
        return math.inf, np.zeros_like(u)
    val = -(math.log(P) / p - e / m * math.log(K) - 0.5 * (1.0 - e) * math.log(M))
    grad = -(dP / (p * P) - e / m * dK / K - 0.5 * (1.0 - e) * dM / M)
    return val, grad


def random_battery(grid: RadialGrid, count: int, rng: np.random.Generator) -> list:
    """Gaussians, plateaus and random smooth mixtures of radial bumps."""
    r = grid.nodes
    L = grid.r_max
    out = []
    for k in range(count):
        kind = k % 3
        if kind == 0:
            width = L * rng.uniform(0.02, 0.15)
            v = np.exp(-0.5 * (r / width) ** 2)
        elif kind == 1:
            R = L * rng.uniform(0.0, 0.3)
            v = plateau_function(1.0, R, grid).values
        else:
            v = np.zeros_like(r)
            for _ in range(rng.integers(2, 6)):
                c0 = L * rng.uniform(0.0, 0.3)
                s = L * rng.uniform(0.02, 0.1)
                v += rng.uniform(-0.5, 1.0) * np.exp(-0.5 * ((r - c0) / s) ** 2)
        v[-1] = 0.0
        if np.any(v):
            out.append(grid.field(v))
    return out


@dataclass(frozen=True)
class GNEstimate:
    value: float
    battery_max: float
    field: object
    p: float
    N: int
    q: Optional[float]
    seed: int

    def to_dict(self) -> dict:
        return {"value": self.value, "battery_max": self.battery_max, "p": self.p,
                "N": self.N, "q": self.q, "seed": self.seed}


def estimate_gn_constant(p: float, N: int, trials: int = 30, seed: int = 0, *,
                         q: Optional[float] = None, grid: Optional[RadialGrid] = None,
                         ascent_starts: int = 3, delta: float = 1e-8) -> GNEstimate:
    """Lower bound on the GN constant: battery maximum refined by L-BFGS ascent."""
    if q is None:
        bound = 2.0 * N / (N - 2.0) if N >= 3 else math.inf
    else:
        if nl.admissibility_violation(N, q):
            raise nl.InadmissibleExponentError(nl.admissibility_violation(N, q))
        bound = nl.critical_exponents(N, q).q_prime
    if not 2.0 < p < bound:
        raise ValueError(f"GN exponent needs 2 < p < {bound:.6g} (got {p})")
    grid = grid or make_grid(N, 20.0, 1024)
    rng = np.random.default_rng(seed)
    battery = random_battery(grid, trials, rng)
    ratios = [fn.gn_ratio(u, p, q=q) for u in battery]
    order = np.argsort(ratios)[::-1][:ascent_starts]
    best_val, best_u = max(ratios), battery[int(np.argmax(ratios))].values
    for k in order:
        u0 = battery[int(k)].values
        # the ratio is scale invariant; normalize so L-BFGS works at unit size
        u0 = u0 / np.max(np.abs(u0))
        bounds = [(None, None)] * (grid.n - 1) + [(0.0, 0.0)]
        res = optimize.minimize(_neg_log_ratio, u0, args=(grid, p, q, N, delta), jac=True,
                                method="L-BFGS-B", bounds=bounds,
                                options={"maxiter": 3000, "gtol": 1e-10, "ftol": 1e-15})
        u = res.x
        if np.any(u):
            val = fn.gn_ratio(grid.field(u), p, q=q)
            if val > best_val:
                best_val, best_u = val, u
    return GNEstimate(float(best_val), float(max(ratios)), grid.field(best_u), p, N, q, seed)


# ---------------------------------------------------------------------------
# divergence of int u^2 ln u^2 for a slowly decaying field

@dataclass(frozen=True)
class AppendixTable:
    r_max: tuple
    I: tuple
    K2: tuple
    Kq: tuple
    N: int
    q: float
    checks: dict = field(default_factory=dict)

    def to_csv(self, header: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in header:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r_max", "I", "K2", "Kq"])
        for row in zip(self.r_max, self.I, self.K2, self.Kq):
            w.writerow([f"{x:.17g}" for x in row])
        return buf.getvalue()


def appendix_divergence(N: int, q: float, r_max_list: Sequence[float], h: float = 0.01,
                        rel_tol: float = 0.25) -> AppendixTable:
    """Truncated integrals of u^2 ln u^2, |u'|^2 and |u'|^q over growing balls."""
    nl.log_nonlinearity(N, q)  # exponent gate
    rs = [float(R) for R in r_max_list]
    if not rs or min(rs) <= 10 or any(b <= a for a, b in zip(rs, rs[1:])):
        raise ValueError("r_max list must be increasing with every entry > 10")
    I, K2, Kq = [], [], []
    for R in rs:
        grid = make_grid(N, R, int(round(R / h)) + 1)
        u = appendix_function(grid)
        v = u.values
        f = np.where(v > 0, v * v * 2.0 * np.log(np.where(v > 0, v, 1.0)), 0.0)
        I.append(integrate(grid.field(f)))
        K2.append(grad_norm(u, 2.0) ** 2)
        Kq.append(grad_norm(u, q) ** q)
    om = make_grid(N, rs[0], 16).omega
    dI = np.diff(I)
    lead = -N * om * np.diff(np.log(np.log(rs)))
    rel = np.abs(dI / lead - 1.0)
    d2 = np.abs(np.diff(K2))
    dq = np.abs(np.diff(Kq))
    checks = {
        "I_decreasing": bool(np.all(dI < 0)),
        "increment_rel_dev": rel.tolist(),
        "increments_track_leading_order": bool(np.all(rel <= rel_tol)),
        "K2_diffs": d2.tolist(),
        "Kq_diffs": dq.tolist(),
        "K2_shrinking": bool(np.all(np.diff(d2) < 0)),
        "Kq_shrinking": bool(np.all(np.diff(dq) < 0)),
    }
    return AppendixTable(tuple(rs), tuple(I), tuple(K2), tuple(Kq), N, q, checks)


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, default=lambda o: asdict(o) if hasattr(o, "__dataclass_fields__") else str(o))
