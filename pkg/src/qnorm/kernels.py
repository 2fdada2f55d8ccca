"""Backend selection for the energy/gradient kernel.

The compiled kernel (``qnorm._ckernel``) is used when it was built and the
nonlinearity has a closed form; otherwise the numpy route below runs.  Set
``QNORM_BACKEND=numpy`` to force the fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import nonlinearity as nl

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

HAVE_COMPILED = _ckernel is not None


def default_backend() -> str:
    env = os.environ.get("QNORM_BACKEND", "").strip().lower()
    if env in ("numpy", "python"):
        return "numpy"
    if env == "cython" and not HAVE_COMPILED:
        raise ImportError("QNORM_BACKEND=cython but qnorm._ckernel is not built")
    return "cython" if HAVE_COMPILED else "numpy"


BACKEND = default_backend()


def _intervals(spec):
    iv = spec.sign_intervals
    ia = np.array([a for a, _, _ in iv], dtype=float)
    ib = np.array([b for _, b, _ in iv], dtype=float)
    isg = np.array([s for _, _, s in iv], dtype=np.int64)
    return ia, ib, isg


def evaluate_numpy(u, grid, spec, eps, q_on, delta, want_grad):
    h, W, w = grid.h, grid.edge_weights, grid.weights
    q = spec.q
    du = np.diff(u) / h
    k2 = 0.5 * float(np.dot(W, du * du))
    flux = W * du
    kq = 0.0
    if q_on:
        s2 = du * du + delta * delta
        kq = float(np.dot(W, s2 ** (0.5 * q) - delta ** q)) / q
        flux = flux + W * s2 ** (0.5 * q - 1.0) * du
    gm = float(np.dot(w, nl.G_minus_eps(spec, eps, u)))
    gp = float(np.dot(w, nl.G_plus(spec, u)))
    if not want_grad:
        return k2, kq, gm, gp, None
    grad = np.zeros_like(u)
    grad[:-1] -= flux / h
    grad[1:] += flux / h
    grad -= w * nl.g_eps(spec, eps, u)
    return k2, kq, gm, gp, grad


def evaluate(u, grid, spec, eps, q_on, delta, want_grad, backend=None):
    """Return (kinetic2, kineticq, int G_minus_eps, int G_plus, euclidean gradient)."""
    backend = backend or BACKEND
    u = np.ascontiguousarray(u, dtype=float)
    if backend == "cython" and spec.closed_form:
        if _ckernel is None:
            raise ImportError("compiled kernel requested but not built")
        ia, ib, isg = _intervals(spec)
        return _ckernel.evaluate(
            u, grid.h, grid.edge_weights, grid.weights, spec.q, bool(q_on), delta,
            spec.alpha, spec.mu, spec.p, 0.0 if eps is None else float(eps),
            ia, ib, isg, bool(want_grad))
    return evaluate_numpy(u, grid, spec, eps, q_on, delta, want_grad)


# ---------------------------------------------------------------------------
# energy differences without cancellation
#
# Near a minimizer J(v) - J(u) is far below the roundoff of J itself, so the
# line search compares energies through pairwise-accurate differences.

def _dlog(x, y):
    """ln x^2 - ln y^2 (the vanishing placeholder is used at 0)."""
    # log1p form only where x and y are close; elsewhere nothing cancels
    near = (x > nl.TINY) & (y > nl.TINY) & (np.abs(x - y) <= 0.5 * y)
    ys = np.where(near, y, 1.0)
    ratio = np.where(near, (x - y) / ys, 0.0)
    return np.where(near, 2.0 * np.log1p(ratio), nl._safe_log_sq(x) - nl._safe_log_sq(y))


def _dpow(x, y, m):
    """x^m - y^m for x, y >= 0."""
    near = (y > 0) & (np.abs(x - y) <= 0.5 * y)
    ys = np.where(near, y, 1.0)
    ratio = np.where(near, (x - y) / ys, 0.0)
    rel = ys ** m * np.expm1(m * np.log1p(ratio))
    return np.where(near, rel, x ** m - y ** m)


def _dG0(spec, x, y):
    lx = nl._safe_log_sq(x)
    quad = (x - y) * (x + y) * (lx - 1.0) + y * y * _dlog(x, y)
    out = 0.5 * spec.alpha * quad
    if spec.mu:
        out = out + spec.mu / spec.p * _dpow(x, y, spec.p)
    return out


def _dH0(spec, x, y):
    lx = nl._safe_log_sq(x)
    cub = (x - y) * (x * x + x * y + y * y) * (lx / 3.0 - 2.0 / 9.0) + y ** 3 * _dlog(x, y) / 3.0
    out = spec.alpha * cub
    if spec.mu:
        out = out + spec.mu / (spec.p + 1.0) * _dpow(x, y, spec.p + 1.0)
    return out


def energy_difference(u, v, grid, spec, eps, q_on, delta):
    """J_eps(v) - J_eps(u) evaluated term by term."""
    if not spec.closed_form:
        a = evaluate(u, grid, spec, eps, q_on, delta, False)
        b = evaluate(v, grid, spec, eps, q_on, delta, False)
        return (b[0] + b[1] + b[2] - b[3]) - (a[0] + a[1] + a[2] - a[3])
    h, W, w = grid.h, grid.edge_weights, grid.weights
    du = np.diff(u) / h
    ddu = np.diff(v - u) / h
    dv = du + ddu
    ds2 = ddu * (dv + du)
    dk = 0.5 * W * ds2
    if q_on:
        s2 = du * du + delta * delta
        dk = dk + W * s2 ** (0.5 * spec.q) * np.expm1(0.5 * spec.q * np.log1p(ds2 / s2)) / spec.q
    tu, tv = np.abs(u), np.abs(v)
    dg = np.zeros_like(u)
    for a, b, sg in spec.sign_intervals:
        if sg > 0:
            dg -= _dG0(spec, np.clip(tv, a, b), np.clip(tu, a, b))
        elif eps is None:
            dg -= _dG0(spec, np.clip(tv, a, b), np.clip(tu, a, b))
        else:
            lo_u, lo_v = np.minimum(tu, eps), np.minimum(tv, eps)
            hi_u, hi_v = np.maximum(tu, eps), np.maximum(tv, eps)
            dg -= _dH0(spec, np.clip(lo_v, a, b), np.clip(lo_u, a, b)) / eps
            dg -= _dG0(spec, np.clip(hi_v, a, b), np.clip(hi_u, a, b))
    return float(np.sum(dk)) + float(np.dot(w, dg))
