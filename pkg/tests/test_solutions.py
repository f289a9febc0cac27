import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kpmsym.core import EquationParams, GridSpec
from kpmsym.solutions import (DEFAULT_LINE_SOLITON, DEFAULT_LUMP, DEFAULT_TWO_SOLITON, LineSolitonParams,
                              LumpParams, Scenario, adjudicate_lump_power, adjudicate_time_factor,
                              boundary_sampler, interaction_coefficient, line_soliton_u, lump_u,
                              pde_residual_oracle, probe_lattice, two_soliton_initial_u,
                              two_soliton_u, two_soliton_velocities)

S2 = np.sqrt(2) / 2


# --- line soliton -------------------------------------------------------------

def test_line_soliton_crest_values():
    assert line_soliton_u(6.0, 0.0, 0.0) == pytest.approx(2.0)
    assert line_soliton_u(6.0 + S2, 1.0, 0.0) == pytest.approx(2.0)


def test_line_soliton_crest_at_t10():
    v = DEFAULT_LINE_SOLITON.velocity()
    assert v == pytest.approx(2.5)
    assert 6.0 + v * 10 == pytest.approx(31.0)
    assert line_soliton_u(31.0, 0.0, 10.0) == pytest.approx(2.0)


@given(st.floats(-5, 5), st.floats(0, 40), st.floats(0, 2), st.floats(0, 10))
@settings(max_examples=80, deadline=None)
def test_travelling_wave_identity(shift, x, y, t):
    v = DEFAULT_LINE_SOLITON.velocity()
    a = line_soliton_u(x, y, t)
    b = line_soliton_u(x - v * shift, y, t - shift)
    assert a == pytest.approx(b, abs=1e-12)


def test_line_params_validation():
    with pytest.raises(ValueError):
        LineSolitonParams(k=0)


# --- two-soliton --------------------------------------------------------------

def test_two_soliton_velocities():
    v1, v2 = two_soliton_velocities()
    assert v1 == pytest.approx(3.0)
    assert v2 == pytest.approx(-1.0)


def test_two_soliton_superposition_at_first_crest():
    k2 = DEFAULT_TWO_SOLITON[1].k
    tail = 2 * k2 ** 2 / np.cosh(k2 * (6 - 11)) ** 2
    assert two_soliton_initial_u(6.0, 0.0) == pytest.approx(2.0 + tail)


def test_interaction_coefficient_regular():
    a12 = interaction_coefficient()
    assert 0 < a12 < 1
    assert a12 == pytest.approx(0.044, abs=5e-3)


def test_exact_two_soliton_solves_kp():
    usamp = lambda x, y, t: two_soliton_u(x, y, t)
    res = [pde_residual_oracle(usamp, EquationParams(), probe_lattice((8.0, 0.5)), h)
           for h in (0.1, 0.05, 0.025)]
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.all(np.abs(orders - 4) < 0.5), orders


def test_exact_two_soliton_matches_superposition_before_collision():
    x = np.linspace(0, 40, 201)
    diff = np.abs(two_soliton_u(x, 0.0, 0.0) - two_soliton_initial_u(x, 0.0)).max()
    assert diff < 0.05


# --- lump ---------------------------------------------------------------------

def test_lump_peak_and_corner():
    assert lump_u(10.0, 10.0, 0.0) == pytest.approx(4.0)
    assert lump_u(0.0, 0.0, 0.0) == pytest.approx(4 * 1 / 201 ** 2)
    assert lump_u(0.0, 0.0, 0.0) == pytest.approx(9.9e-5, rel=0.01)


def test_lump_decay():
    X = np.array([1e2, 1e3, 1e4])
    np.testing.assert_allclose(lump_u(10.0 + X, 10.0, 0.0) * X ** 2, -4, rtol=1e-3)


def test_lump_peak_moves_at_three_mu_sq():
    x = np.linspace(11, 15, 4001)
    assert x[np.argmax(lump_u(x, 10.0, 1.0))] == pytest.approx(13.0)


@given(st.floats(-8, 8), st.floats(0, 8), st.floats(0.25, 4))
@settings(max_examples=60, deadline=None)
def test_lump_even_in_y(x, dy, m):
    lp = LumpParams(mu_sq=m)
    assert lump_u(x, 10 + dy, 0.3, lp) == pytest.approx(lump_u(x, 10 - dy, 0.3, lp), rel=1e-12)


# --- oracle -------------------------------------------------------------------

def test_oracle_zero_field():
    zero = lambda x, y, t: np.zeros_like(x)
    for tf in (1, 2):
        assert pde_residual_oracle(zero, EquationParams(time_factor=tf),
                                   probe_lattice((0, 0)), 0.1) == 0


def test_time_factor_verdict():
    v = adjudicate_time_factor()
    assert v.unambiguous and v.selected == 1
    assert np.all(np.abs(v.orders[1] - 4) <= 0.5)
    assert np.all(v.orders[2] < 1)


def test_lump_power_verdict():
    v = adjudicate_lump_power()
    assert v.unambiguous and v.selected == 2
    assert v.summary() == "lump_denominator_power=2"


# --- boundary data ------------------------------------------------------------

def test_boundary_band_only():
    sc = Scenario("line_soliton")
    g = GridSpec(0, 0, 0, 0.2, 0.1, 0.01, 10, 5, 3)
    b = boundary_sampler(sc, g, 0, band=(2, 1))
    assert np.isnan(b[1:-1, 2:-2]).all()
    assert np.isfinite(b[:, :2]).all() and np.isfinite(b[0]).all()
    assert np.abs(b[:, :2]).max() < 1e-3  # left edge sits in the exponential tail


def test_boundary_lump_corner():
    sc = Scenario("lump", domain=(0, 20, 0, 20, 1))
    g = GridSpec(0, 0, 0, 0.5, 0.5, 0.01, 41, 41, 2)
    assert boundary_sampler(sc, g, 0)[0, 0] == pytest.approx(9.9e-5, rel=0.01)


def test_boundary_zero_and_manufactured():
    g = GridSpec(0, 0, 0, 0.5, 0.5, 0.01, 6, 6, 2)
    b = boundary_sampler(Scenario("zero"), g, 1)
    assert np.nanmax(np.abs(b)) == 0
    with pytest.raises(ValueError):
        boundary_sampler(Scenario("manufactured"), g, 0)


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario("kdv")
    with pytest.raises(ValueError):
        Scenario("two_soliton", two_soliton_boundary="periodic")
    assert not Scenario("two_soliton").has_exact_solution
    assert Scenario("lump").params == DEFAULT_LUMP
