import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kpmsym.core import NCOMP, U, EquationParams, Field, GridSpec
from kpmsym.preissman import (ConvergenceError, SolverOptions, box_average, box_residual_values,
                              discrete_msym_residual, scheme_residual, solve_global, solve_tangent,
                              tangent_box_residual, ten_line_residual)
from kpmsym.solutions import LineSolitonParams, Scenario, lifted_field


# --- box averages -------------------------------------------------------------

@given(st.floats(-10, 10), st.sampled_from(["x", "y", "t", "xy", "xt", "yt", "xyt"]))
@settings(max_examples=30, deadline=None)
def test_box_average_of_constant(c, axes):
    out = box_average(np.full((3, 4, 5), c), axes)
    np.testing.assert_allclose(out, c, rtol=1e-15, atol=0)


def test_box_average_ramp_and_cube():
    ramp = np.broadcast_to(np.arange(6.0), (2, 2, 6))
    np.testing.assert_array_equal(box_average(ramp, "x")[0, 0], np.arange(6.0)[:-1] + 0.5)
    cube = np.arange(1.0, 9.0).reshape(2, 2, 2)
    assert box_average(cube, "xyt").item() == 4.5


# --- residual -----------------------------------------------------------------

def test_residual_of_zero(eq):
    g = GridSpec(0, 0, 0, 0.1, 0.1, 0.1, 3, 3, 3)
    assert scheme_residual(Field(g, np.zeros((NCOMP,) + g.shape)), eq).max_abs == 0


@pytest.mark.parametrize("tf", [1, 2])
def test_matrix_form_equals_ten_lines(tf, rng):
    eq = EquationParams(time_factor=tf)
    g = GridSpec(0, 0, 0, 0.3, 0.2, 0.1, 3, 3, 3)
    z = rng.standard_normal((NCOMP,) + g.shape)
    np.testing.assert_allclose(box_residual_values(z, g, eq), ten_line_residual(z, g, eq),
                               rtol=0, atol=1e-12)


def test_consistency_order_on_exact_sample(line, eq):
    # off the crest: there the leading error term cancels by symmetry
    res = []
    for h in (0.04, 0.02, 0.01):
        g = GridSpec(6.5 - 2 * h, -2 * h, 0.0, h, h, h, 5, 5, 3)
        res.append(scheme_residual(Field.sample(g, line.z), eq).max_abs)
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.all(np.abs(orders - 2) <= 0.3), orders


# --- nonlinear solve ----------------------------------------------------------

def test_zero_data_gives_zero(eq):
    g = GridSpec(0, 0, 0, 0.2, 0.1, 0.01, 6, 4, 3)
    zero = np.zeros((NCOMP,) + g.shape)
    sol = solve_global(zero[:, 0], zero, g, eq)
    np.testing.assert_array_equal(sol.field.values, 0)


def test_solved_soliton(solved_line, line, small_line_grid, eq):
    assert solved_line.max_residual <= 1e-10
    assert scheme_residual(solved_line.field, eq).max_abs <= 1e-10
    X, Y, T = small_line_grid.mesh()
    err = np.abs(solved_line.field.values[U] - line.u(X, Y, T)).max()
    assert err < 0.05 * (0.2 ** 2 + 0.1 ** 2 + 0.01 ** 2) * 100  # O(h^2)


def test_max_iters_one_reports_first_residual(line, small_line_grid, eq):
    z = lifted_field(line, small_line_grid)
    with pytest.raises(ConvergenceError) as info:
        solve_global(z[:, 0], z, small_line_grid, eq, SolverOptions(max_iters=1))
    assert info.value.iterations == 1
    assert info.value.residual > 1e-10
    assert info.value.slab == 0


def test_fixed_point_method_agrees(line, small_line_grid, eq, solved_line):
    z = lifted_field(line, small_line_grid)
    fp = solve_global(z[:, 0], z, small_line_grid, eq,
                      SolverOptions(method="fixed_point", max_iters=200))
    np.testing.assert_allclose(fp.field.values[U], solved_line.field.values[U], atol=1e-9)


def test_u_independent_of_auxiliary_guess(line, small_line_grid, eq, solved_line, rng):
    z = lifted_field(line, small_line_grid)
    bnd = z.copy()
    aux = np.arange(NCOMP) != U
    bnd[aux, :, 1:-1, 1:-1] += rng.standard_normal(bnd[aux, :, 1:-1, 1:-1].shape)
    other = solve_global(z[:, 0], bnd, small_line_grid, eq)
    np.testing.assert_allclose(other.field.values[U], solved_line.field.values[U], atol=1e-12)


# --- tangents -----------------------------------------------------------------

def _random_tangent_data(g, rng):
    return rng.standard_normal((NCOMP, g.ny, g.nx)), rng.standard_normal((NCOMP, g.nt, g.ny, g.nx))


def test_zero_tangent_data(solved_line, eq):
    g = solved_line.field.grid
    dz = solve_tangent(solved_line.field, np.zeros((NCOMP, g.ny, g.nx)),
                       np.zeros((NCOMP,) + g.shape), eq)
    np.testing.assert_array_equal(dz.values, 0)


def test_tangent_linearity(solved_line, eq, rng):
    g = solved_line.field.grid
    a, b = _random_tangent_data(g, rng), _random_tangent_data(g, rng)
    alpha, beta = 0.7, -1.3
    ta = solve_tangent(solved_line.field, *a, eq)
    tb = solve_tangent(solved_line.field, *b, eq)
    tc = solve_tangent(solved_line.field, alpha * a[0] + beta * b[0], alpha * a[1] + beta * b[1], eq)
    scale = np.abs(ta.values).max() + np.abs(tb.values).max()
    np.testing.assert_allclose(tc.values, alpha * ta.values + beta * tb.values, atol=1e-10 * scale)


def test_tangent_solves_linearised_scheme(solved_line, eq, rng):
    g = solved_line.field.grid
    t = solve_tangent(solved_line.field, *_random_tangent_data(g, rng), eq)
    r = tangent_box_residual(solved_line.field, t, eq)
    assert np.abs(r).max() <= 1e-10 * np.abs(t.values).max()


def test_tangent_matches_nonlinear_difference(line, small_line_grid, eq, solved_line):
    eps = 1e-6
    shifted = Scenario("line_soliton", params=LineSolitonParams(x_offset=6.0 + eps), eq=eq)
    z0 = lifted_field(line, small_line_grid)
    z1 = lifted_field(shifted, small_line_grid)
    sol1 = solve_global(z1[:, 0], z1, small_line_grid, eq, SolverOptions(tol_residual=1e-12))
    sol0 = solve_global(z0[:, 0], z0, small_line_grid, eq, SolverOptions(tol_residual=1e-12))
    dq = (z1 - z0) / eps
    t = solve_tangent(sol0.field, dq[:, 0], dq, eq)
    nonlin = (sol1.field.values[U] - sol0.field.values[U]) / eps
    assert np.abs(t.values[U] - nonlin).max() < 1e-3 * np.abs(nonlin).max()


# --- discrete conservation law ------------------------------------------------

def test_identical_tangents_give_exact_zero(solved_line, eq, rng):
    g = solved_line.field.grid
    t = solve_tangent(solved_line.field, *_random_tangent_data(g, rng), eq)
    assert np.all(discrete_msym_residual(t, t, eq).values == 0)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_solved_pairs_conserve(solved_line, eq, seed):
    rng = np.random.default_rng(seed)
    g = solved_line.field.grid
    a = solve_tangent(solved_line.field, *_random_tangent_data(g, rng), eq)
    b = solve_tangent(solved_line.field, *_random_tangent_data(g, rng), eq)
    res = np.abs(discrete_msym_residual(a, b, eq).values).max()
    assert res <= 1e-10 * np.abs(a.values).max() * np.abs(b.values).max()


def test_non_solution_tangent_breaks_the_law(solved_line, eq, rng):
    g = solved_line.field.grid
    a = solve_tangent(solved_line.field, *_random_tangent_data(g, rng), eq)
    b = Field(g, rng.standard_normal((NCOMP,) + g.shape))
    res = np.abs(discrete_msym_residual(a, b, eq).values).max()
    assert res > 1e-3 * np.abs(a.values).max() * np.abs(b.values).max()


@pytest.mark.parametrize("kind,grid", [
    ("lump", GridSpec(10.0 - 0.35, 10.0, 0.0, 0.1, 0.2, 0.01, 8, 4, 4)),
    ("two_soliton", GridSpec(6.0 - 0.7, 0.0, 0.0, 0.2, 0.1, 0.01, 8, 4, 4)),
])
def test_law_holds_for_other_scenarios(kind, grid, eq, rng):
    sc = Scenario(kind)
    z = lifted_field(sc, grid)
    base = solve_global(z[:, 0], z, grid, eq).field
    a = solve_tangent(base, *_random_tangent_data(grid, rng), eq)
    b = solve_tangent(base, *_random_tangent_data(grid, rng), eq)
    res = np.abs(discrete_msym_residual(a, b, eq).values).max()
    assert res <= 1e-10 * np.abs(a.values).max() * np.abs(b.values).max()
