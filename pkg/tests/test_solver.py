import json
import math
import warnings

import numpy as np
import pytest

from qnorm import functional as fn
from qnorm import nonlinearity as nl
from qnorm import solver as sv
from qnorm.grid import gaussian_bump, make_grid, mass

from oracles import gausson_energy, gausson_lambda, gausson_profile

LOG = nl.log_nonlinearity(3, 1.8)
NO_Q = sv.SolverConfig(q_term=False)


@pytest.fixture(scope="module")
def grid():
    return make_grid(3, 16.0, 2048)


@pytest.fixture(scope="module")
def gausson(grid):
    u0 = sv.initial_field(grid, 2.0, LOG, NO_Q)
    return sv.minimize_fixed_eps(u0, 2.0, LOG, None, NO_Q)


@pytest.fixture(scope="module")
def log_c30(grid):
    return sv.continuation_solve(30.0, LOG, sv.SolverConfig(), grid)


# --- configuration -------------------------------------------------------------

@pytest.mark.parametrize("bad", [dict(step0=0.0), dict(armijo_c=1.0), dict(backtrack=0.0),
                                 dict(tol_pgrad=-1.0), dict(max_iter=0),
                                 dict(eps_schedule=(0.1, 0.2)), dict(eps_schedule=(1.5,)),
                                 dict(init="random"), dict(patience=0)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        sv.SolverConfig(**bad)


def test_config_defaults():
    cfg = sv.SolverConfig()
    assert cfg.eps_schedule[0] == 0.5 and cfg.eps_schedule[-1] == 2.0 ** -12
    assert cfg.tolerance(-3.0) == pytest.approx(4e-8)
    assert sv.SolverConfig(tol_pgrad=1e-6).tolerance(100.0) == 1e-6
    assert json.loads(json.dumps(cfg.to_dict()))["armijo_c"] == 1e-4


# --- Gausson oracle ----------------------------------------------------------------

def test_gausson_profile_and_multiplier(gausson, grid):
    assert gausson.converged
    assert gausson.lam == pytest.approx(gausson_lambda(2.0), abs=1e-3)
    exact = gausson_profile(grid.nodes, 2.0)
    err = math.sqrt(mass(grid.field(gausson.field.values - exact)) / mass(grid.field(exact)))
    assert err <= 1e-2
    assert gausson.energy.total == pytest.approx(gausson_energy(2.0), rel=1e-5)
    assert gausson.nehari <= 1e-3 and gausson.pohozaev <= 5e-3


def test_report_invariants(gausson):
    assert gausson.mass_defect <= 1e-12
    energies = [e for e, _ in gausson.trace]
    assert all(b <= a for a, b in zip(energies, energies[1:]))
    assert gausson.pgrad_norm <= NO_Q.tolerance(gausson.energy.total)
    assert gausson.iterations == len(gausson.trace) - 1


def test_basin_robustness(gausson, grid):
    u0 = sv.initial_field(grid, 2.0, LOG, sv.SolverConfig(init="plateau", q_term=False))
    other = sv.minimize_fixed_eps(u0, 2.0, LOG, None, NO_Q)
    assert other.energy.total == pytest.approx(gausson.energy.total, rel=1e-4)


def test_determinism(grid):
    u0 = gaussian_bump(grid, 3.0)
    a = sv.minimize_fixed_eps(u0, 3.0, LOG, 0.01)
    b = sv.minimize_fixed_eps(u0, 3.0, LOG, 0.01)
    assert a.trace == b.trace
    np.testing.assert_array_equal(a.field.values, b.field.values)


def test_serialization(gausson):
    d = json.loads(gausson.to_json())
    assert d["status"] == "converged" and d["grid"]["n"] == 2048
    assert len(json.loads(gausson.to_json(with_field=True))["field"]) == 2048
    lines = gausson.trace_csv(["manifest_hash: x"]).splitlines()
    assert lines[0] == "# manifest_hash: x" and lines[1] == "iter,energy,pgrad_norm"
    assert len(lines) == 2 + len(gausson.trace)


def test_input_validation(grid):
    with pytest.raises(ValueError):
        sv.minimize_fixed_eps(gaussian_bump(grid, 1.0), 0.0, LOG, 0.1)
    with pytest.raises(ValueError):
        sv.minimize_fixed_eps(grid.field(np.zeros(grid.n)), 1.0, LOG, 0.1)
    with pytest.raises(ValueError):
        sv.minimize_fixed_eps(gaussian_bump(make_grid(2, 8.0, 64), 1.0), 1.0, LOG, 0.1)
    with pytest.raises(ValueError):
        sv.initial_field(grid, 1.0, LOG, sv.SolverConfig(init="provided"))


def test_non_finite_nonlinearity_aborts():
    bad = nl.NonlinearitySpec("custom", 3, 1.8,
                              g=lambda s: s ** 3 if abs(s) < 5 else math.nan,
                              G=lambda s: s ** 4 / 4)
    g = make_grid(3, 8.0, 64)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(nl.QuadratureError, match="nan"):
            sv.minimize_fixed_eps(gaussian_bump(g, 40.0), 40.0, bad, None)


def test_iteration_budget_reported(grid):
    rep = sv.minimize_fixed_eps(gaussian_bump(grid, 2.0), 2.0, LOG, 0.1,
                                sv.SolverConfig(max_iter=1))
    assert rep.status == "max_iter" and not rep.converged
    with pytest.raises(sv.StalledError) as info:
        sv.continuation_solve(2.0, LOG, sv.SolverConfig(max_iter=1), grid, raise_on_stall=True)
    assert info.value.stage == 0


# --- continuation ------------------------------------------------------------------

def test_continuation_values(log_c30):
    assert len(log_c30) == 12 and all(r.converged for r in log_c30)
    e = [r.energy.total for r in log_c30]
    tol = max(sv.SolverConfig().tolerance(x) for x in e)
    assert all(b >= a - tol for a, b in zip(e, e[1:]))
    assert [r.eps for r in log_c30] == list(sv.DEFAULT_SCHEDULE)


def test_continuation_cauchy_tail(log_c30):
    diffs = [math.sqrt(mass(b.field - a.field)) for a, b in zip(log_c30, log_c30[1:])]
    tail = diffs[-5:]
    assert all(y < x for x, y in zip(tail, tail[1:]))


def test_multiplier_positive_above_threshold(log_c30):
    last = log_c30[-1]
    assert last.lam > 0 and last.energy.total < 0
    verdict = sv.boundary_attainment(last, 30.0)
    assert verdict.attained and not verdict.interior_suspected


def test_no_negative_part_skips_continuation(grid):
    quartic = nl.NonlinearitySpec("pure_power", 3, 1.8, mu=1.0, p=3.1)
    reps = sv.continuation_solve(5.0, quartic, sv.SolverConfig(), grid)
    assert len(reps) == 1 and reps[0].eps is None


def test_empty_schedule_rejected(grid):
    with pytest.raises(ValueError):
        sv.continuation_solve(1.0, LOG, sv.SolverConfig(eps_schedule=()), grid)


# --- verdicts ------------------------------------------------------------------

def test_interior_flag_for_zero_multiplier(gausson):
    fake = sv.SolveReport(**{**gausson.__dict__, "lam": 0.0})
    v = sv.boundary_attainment(fake, 2.0)
    assert v.interior_suspected and not v.attained


def test_pure_power_below_cbar_is_degenerate(grid):
    quartic = nl.NonlinearitySpec("pure_power", 3, 1.8, mu=1.0, p=3.1)
    rep = sv.continuation_solve(2.0, quartic, sv.SolverConfig(max_iter=300), grid)[-1]
    # no negative energy is available at small mass: the field spreads out and E stays > 0
    assert rep.energy.total > 0
    assert sv.boundary_attainment(rep, 2.0).interior_suspected or rep.lam < 1e-2


def test_qualitative_gausson(gausson):
    v = sv.qualitative_check(gausson.field)
    assert v.sign_constant and v.radially_monotone and v.defect_nodes == []


def test_qualitative_two_bumps(grid):
    r = grid.nodes
    u = grid.field(np.exp(-r ** 2) + np.exp(-(r - 5.0) ** 2))
    v = sv.qualitative_check(u)
    assert v.sign_constant and not v.radially_monotone
    k_min = int(np.argmin(u.values[: int(5.0 / grid.h)]))
    assert v.defect_nodes[0] == k_min + 1
    assert not sv.qualitative_check(u - grid.field(np.full(grid.n, 0.5))).sign_constant


def test_qualitative_log_q_solution(log_c30):
    v = sv.qualitative_check(log_c30[-1].field)
    assert v.sign_constant and v.radially_monotone


def test_rearrangement(grid):
    r = grid.nodes
    dec = grid.field(np.exp(-r ** 2))
    assert sv.rearrange_decreasing(dec) is dec
    two = grid.field(0.5 * np.exp(-r ** 2) + np.exp(-(r - 4.0) ** 2))
    re = sv.rearrange_decreasing(two)
    assert np.all(np.diff(re.values) <= 0)
    assert abs(mass(re) / mass(two) - 1.0) <= 1e-2
    with pytest.raises(ValueError):
        sv.rearrange_decreasing(grid.field(-np.exp(-r ** 2)))


def test_rearrangement_mass_on_fine_grid():
    g = make_grid(3, 16.0, 8192)
    r = g.nodes
    two = g.field(0.5 * np.exp(-r ** 2) + np.exp(-(r - 4.0) ** 2))
    assert abs(mass(sv.rearrange_decreasing(two)) / mass(two) - 1.0) <= 1e-3


def test_rearrangement_does_not_raise_energy(grid):
    # soft diagnostic: the decreasing rearrangement should not cost energy
    r = grid.nodes
    rng = np.random.default_rng(2)
    worse = 0
    for _ in range(6):
        v = sum(rng.uniform(0.2, 1.0) * np.exp(-((r - rng.uniform(0, 6)) / rng.uniform(0.7, 2)) ** 2)
                for _ in range(3))
        v[-1] = 0.0
        u = grid.field(v)
        e0 = fn.energy(u, LOG, 0.01).total
        e1 = fn.energy(sv.rearrange_decreasing(u), LOG, 0.01).total
        worse += e1 > e0 + 1e-6 * abs(e0)
    assert worse == 0


def test_truncation_radius_insensitivity(log_c30):
    # same spacing, twice the radius: the localized ground state barely moves
    wide = sv.continuation_solve(30.0, LOG, sv.SolverConfig(), make_grid(3, 32.0, 4095))[-1]
    base = log_c30[-1]
    assert wide.energy.total == pytest.approx(base.energy.total, rel=1e-6)
    assert wide.lam == pytest.approx(base.lam, rel=1e-5)
