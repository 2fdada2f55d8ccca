import math
import warnings

import numpy as np
import pytest

from qnorm.grid import (ResamplingWarning, appendix_exact, appendix_function, ball_volume,
                        derivative, dilate, field_from_csv, field_to_csv, gaussian_bump,
                        grad_norm, integrate, lp_norm, make_grid, mass, mass_defect,
                        mass_scale, plateau_function, project_mass, sphere_area)


def gaussian(grid):
    return grid.from_function(lambda r: np.exp(-r * r / 2))


def test_sphere_area():
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)
    assert ball_volume(3, 2.0) == pytest.approx(32 * math.pi / 3)


@pytest.mark.parametrize("N,R,expected", [(3, 1.0, 4 * math.pi / 3), (2, 2.0, 4 * math.pi)])
def test_ball_volume_by_quadrature(N, R, expected):
    g = make_grid(N, R, 2001)
    assert integrate(g.field(np.ones(g.n))) == pytest.approx(expected, rel=1e-3)


def test_ball_volume_inside_larger_grid():
    g = make_grid(3, 4.0, 4001)
    ind = g.field((g.nodes <= 2.0).astype(float))
    # a sharp indicator converges at first order; the smooth cases are below
    assert integrate(ind) == pytest.approx(ball_volume(3, 2.0), rel=2e-3)


def test_gaussian_integral():
    g = make_grid(3, 12.0, 4001)
    f = g.from_function(lambda r: np.exp(-r * r))
    assert integrate(f) == pytest.approx(math.pi ** 1.5, abs=1e-6)
    assert mass(gaussian(g)) == pytest.approx(math.pi ** 1.5, abs=1e-6)


def test_quadrature_second_order():
    errs = []
    for n in (501, 1001):
        g = make_grid(3, 12.0, n)
        errs.append(abs(integrate(g.from_function(lambda r: np.exp(-r * r))) - math.pi ** 1.5))
    # at least second order; the smooth Gaussian does better
    assert errs[0] / errs[1] >= 3.6


def test_grid_validation():
    with pytest.raises(ValueError):
        make_grid(3, 1.0, 15)
    with pytest.raises(ValueError):
        make_grid(3, -1.0, 100)
    with pytest.raises(ValueError):
        make_grid(2.5, 1.0, 100)


def test_weights_positive_and_immutable():
    g = make_grid(3, 5.0, 64)
    assert np.all(g.weights > 0) and np.all(g.edge_weights > 0)
    with pytest.raises(ValueError):
        g.weights[0] = 1.0


def test_field_validation():
    g = make_grid(3, 5.0, 64)
    with pytest.raises(ValueError):
        g.field(np.ones(10))
    bad = np.ones(64)
    bad[3] = np.nan
    with pytest.raises(ValueError):
        g.field(bad)


# --- derivative ----------------------------------------------------------------

def test_derivative_quadratic_and_constant():
    g = make_grid(3, 2.0, 101)
    d = derivative(g.from_function(lambda r: r * r), even=False).values
    np.testing.assert_allclose(d, 2 * g.nodes, atol=1e-12)
    assert np.all(derivative(g.field(np.full(g.n, 3.7))).values == 0.0)


def test_derivative_gaussian_second_order():
    errs = []
    for n in (401, 801):
        g = make_grid(3, 8.0, n)
        d = derivative(gaussian(g)).values
        errs.append(np.max(np.abs(d + g.nodes * np.exp(-g.nodes ** 2 / 2))))
    assert errs[1] < 1e-3
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


# --- norms and projection --------------------------------------------------------

def test_lp_norm_plateau():
    g = make_grid(3, 10.0, 20001)
    u = g.field(np.where(g.nodes <= 2.0, 1.5, 0.0))
    for m in (1.0, 2.0, 4.0):
        assert lp_norm(u, m) == pytest.approx(1.5 * ball_volume(3, 2.0) ** (1 / m), rel=1e-3)
    with pytest.raises(ValueError):
        lp_norm(u, 0.5)


def test_project_mass():
    g = make_grid(3, 8.0, 256)
    rng = np.random.default_rng(0)
    u = g.field(rng.normal(size=g.n))
    v = project_mass(u, 1.7)
    assert mass(v) == pytest.approx(2.89, rel=1e-14)
    np.testing.assert_array_equal(project_mass(v, 1.7).values, v.values)
    np.testing.assert_allclose(project_mass(u * 2.0, 1.7).values, v.values, rtol=1e-15)
    with pytest.raises(ValueError):
        project_mass(g.field(np.zeros(g.n)), 1.0)


def test_gaussian_bump_mass_and_edge():
    g = make_grid(3, 16.0, 512)
    u = gaussian_bump(g, 2.0)
    assert mass(u) == pytest.approx(4.0, rel=1e-13)
    assert u.values[-1] == 0.0


# --- scalings ------------------------------------------------------------------

def test_dilate_identity_and_mass():
    g = make_grid(3, 16.0, 4096)
    u = gaussian(g)
    assert dilate(u, 1.0) is u
    assert mass_defect(u, dilate(u, 2.0)) < 1e-4
    ratio = grad_norm(dilate(u, 2.0)) ** 2 / grad_norm(u) ** 2
    assert ratio == pytest.approx(4.0, abs=1e-3)


def test_dilate_composition():
    g = make_grid(3, 16.0, 4096)
    u = gaussian(g)
    a = dilate(dilate(u, 1.3), 1.5).values
    b = dilate(u, 1.95).values
    assert np.max(np.abs(a - b)) < 1e-4


def test_mass_scale():
    g = make_grid(3, 16.0, 4096)
    u = gaussian(g)
    assert mass_scale(u, 1.0) is u
    v = mass_scale(u, 2.0)
    assert mass(v) / mass(u) == pytest.approx(2.0, abs=1e-4)
    k = grad_norm(v) ** 2 / grad_norm(u) ** 2
    assert k == pytest.approx(2.0 ** (1 - 2 / 3), abs=1e-3)


def test_resampling_loss_warns():
    g = make_grid(3, 6.0, 512)
    u = gaussian(g)
    with pytest.warns(ResamplingWarning):
        dilate(u, 0.3)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        dilate(u, 2.0)


def test_scaling_rejects_nonpositive():
    g = make_grid(3, 6.0, 64)
    with pytest.raises(ValueError):
        dilate(gaussian(g), 0.0)
    with pytest.raises(ValueError):
        mass_scale(gaussian(g), -1.0)


# --- explicit test functions --------------------------------------------------------

def test_plateau_function():
    g = make_grid(3, 10.0, 1001)
    u = plateau_function(2.0, 3.0, g)
    assert np.all(u.values[g.nodes <= 3.0] == 2.0)
    k = int(np.argmin(np.abs(g.nodes - 3.5)))
    assert u.values[k] == pytest.approx(1.0, abs=1e-12)
    assert np.all(u.values[g.nodes >= 4.0] == 0.0)
    assert mass(u) >= 4.0 * ball_volume(3, 3.0) * (1 - 1e-3)
    with pytest.raises(ValueError):
        plateau_function(1.0, 9.5, g)


def test_appendix_function():
    g = make_grid(3, 20.0, 2001)
    u = appendix_function(g)
    assert np.all(u.values[g.nodes <= 2.0] == 0.0)
    k = int(np.argmin(np.abs(g.nodes - math.e ** 2)))
    exact, _ = appendix_exact(3, g.nodes[k])
    assert u.values[k] == pytest.approx(float(exact), rel=1e-14)
    assert float(appendix_exact(3, math.e ** 2)[0]) == pytest.approx(math.exp(-3) / 2)
    bridge = u.values[(g.nodes > 2.0) & (g.nodes < 3.0)]
    assert np.all(np.diff(bridge) >= 0)
    with pytest.raises(ValueError):
        appendix_function(make_grid(3, 3.0, 64))


def test_appendix_gradient_bounded():
    vals = []
    for R in (50.0, 100.0, 200.0):
        g = make_grid(3, R, int(R / 0.02) + 1)
        vals.append(grad_norm(appendix_function(g)) ** 2)
    assert vals[0] < vals[1] < vals[2]
    assert (vals[2] - vals[1]) < 0.6 * (vals[1] - vals[0])


def test_field_csv_round_trip():
    g = make_grid(3, 4.0, 33)
    u = gaussian(g)
    text = field_to_csv(u, ["manifest abc"])
    assert text.startswith("# manifest abc\nr,u\n")
    v = field_from_csv(text, 3)
    np.testing.assert_array_equal(v.values, u.values)
    assert v.grid.r_max == g.r_max
