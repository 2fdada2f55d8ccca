"""Randomized invariants of the discretization, functional and solver."""

import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from qnorm import analysis as an
from qnorm import functional as fn
from qnorm import nonlinearity as nl
from qnorm import solver as sv
from qnorm.grid import ResamplingWarning, dilate, make_grid, mass, mass_defect, mass_scale, project_mass

GRID = make_grid(3, 24.0, 4096)
SMALL = make_grid(3, 12.0, 256)
SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])

LOG = nl.log_nonlinearity(3, 1.8)
SPECS = [
    LOG,
    nl.NonlinearitySpec("log_power", 3, 1.8, alpha=1.0, mu=-0.2, p=4.0),
    nl.NonlinearitySpec("log_power", 3, 2.5, alpha=0.5, mu=0.3, p=3.0),
]

bump = st.tuples(st.floats(0.2, 2.0), st.floats(0.0, 4.0), st.floats(0.8, 2.5))


def field(grid, bumps):
    r = grid.nodes
    v = sum(a * np.exp(-0.5 * ((r - c0) / s) ** 2) for a, c0, s in bumps)
    v[-1] = 0.0
    return grid.field(v)


@SETTINGS
@given(st.lists(bump, min_size=1, max_size=4), st.floats(0.1, 50.0))
def test_projection_idempotent(bumps, c):
    u = project_mass(field(GRID, bumps), c)
    assert mass(u) == pytest.approx(c * c, rel=1e-12)
    np.testing.assert_allclose(project_mass(u, c).values, u.values, rtol=1e-12, atol=0)


@SETTINGS
@given(st.lists(bump, min_size=1, max_size=3), st.floats(0.5, 2.0))
def test_mass_scale_factor(bumps, s):
    u = field(GRID, bumps)
    with warnings.catch_warnings():
        warnings.simplefilter("error", ResamplingWarning)
        assert mass_defect(u, mass_scale(u, s), expected_ratio=s) <= 1e-4


@SETTINGS
@given(st.lists(bump, min_size=1, max_size=3), st.floats(0.6, 1.6))
def test_dilation_preserves_mass(bumps, t):
    u = field(GRID, bumps)
    with warnings.catch_warnings():
        warnings.simplefilter("error", ResamplingWarning)
        assert mass_defect(u, dilate(u, t)) <= 1e-4


@SETTINGS
@given(st.lists(bump, min_size=1, max_size=3), st.floats(1e-3, 1e3), st.floats(2.1, 5.9),
       st.sampled_from([None, 1.8]))
def test_gn_ratio_amplitude_homogeneity(bumps, k, p, q):
    u = field(GRID, bumps)
    assert fn.gn_ratio(u * k, p, q=q) == pytest.approx(fn.gn_ratio(u, p, q=q), rel=1e-12)
    assert fn.gn_ratio(u * -k, p, q=q) == pytest.approx(fn.gn_ratio(u, p, q=q), rel=1e-12)


@SETTINGS
@given(st.lists(bump, min_size=1, max_size=3), st.floats(0.8, 1.25))
def test_gn_ratio_dilation_invariance(bumps, t):
    u = field(GRID, bumps)
    assert fn.gn_ratio(dilate(u, t), 4.0) == pytest.approx(fn.gn_ratio(u, 4.0), rel=1e-3)


@SETTINGS
@given(st.sampled_from(SPECS), st.floats(1e-4, 0.9),
       st.lists(st.floats(-20.0, 20.0), min_size=1, max_size=50))
def test_regularized_negative_part_below_exact(spec, eps, s):
    s = np.asarray(s)
    gm, gme = nl.G_minus(spec, s), nl.G_minus_eps(spec, eps, s)
    assert np.all(gme <= gm + 1e-12 * (1 + np.abs(gm)))


def _battery():
    return an.random_battery(make_grid(3, 16.0, 1024), 45, np.random.default_rng(3))


BATTERY = _battery()


@SETTINGS
@given(st.integers(0, len(BATTERY) - 1), st.sampled_from(SPECS), st.floats(1e-4, 0.9),
       st.floats(0.3, 4.0))
def test_regularized_energy_below_exact_on_battery(k, spec, eps, amp):
    u = BATTERY[k] * amp
    J = fn.energy(u, spec, None, check_tail=False).total
    Je = fn.energy(u, spec, eps).total
    assert Je <= J + 1e-12 * (1 + abs(J))


@SETTINGS
@given(st.integers(0, len(BATTERY) - 1), st.sampled_from(SPECS),
       st.floats(1e-3, 0.5), st.floats(1.1, 10.0))
def test_smaller_eps_raises_energy_towards_exact(k, spec, eps, ratio):
    # eps1 < eps2 gives J_eps2 <= J_eps1 <= J
    u = BATTERY[k]
    coarse = fn.energy(u, spec, eps).total
    fine = fn.energy(u, spec, eps / ratio).total
    assert coarse <= fine + 1e-12 * (1 + abs(fine))


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(SPECS), st.floats(1.0, 40.0), st.sampled_from([0.5, 0.1, 0.01, None]),
       st.sampled_from(["gaussian_bump", "plateau"]), st.booleans())
def test_energy_trace_nonincreasing(spec, c, eps, init, q_term):
    cfg = sv.SolverConfig(init=init, q_term=q_term, max_iter=150)
    u0 = sv.initial_field(SMALL, c, spec, cfg)
    rep = sv.minimize_fixed_eps(u0, c, spec, eps, cfg)
    e = [x for x, _ in rep.trace]
    assert all(b <= a for a, b in zip(e, e[1:]))
    assert rep.mass_defect <= 1e-10
