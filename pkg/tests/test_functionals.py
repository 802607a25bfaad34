import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from masscrit.functionals import (NonFiniteFunctional, action, dilation_energy, dt_energy_along_dilation,
                                  dt_energy_fd, energy, evaluate, gn_check, nehari_residual,
                                  pohozaev_residual)
from masscrit.grid import ProblemParams, RadialFunction, build_grid, norms
from masscrit.nonlinearity import bump_family, power
from masscrit.shooting import compute_m1, find_ground_state, power_nl


def test_ground_state_residuals_small(params):
    gs = find_ground_state(power_nl(params), 1.0)
    nl = power_nl(params)
    assert abs(pohozaev_residual(nl, gs.u, 1.0)) <= 1e-6
    assert abs(nehari_residual(nl, gs.u, 1.0)) <= 1e-6


def test_power_ground_state_has_zero_energy(params):
    # critical scaling forces the free energy of the optimizer to vanish
    gs = find_ground_state(power_nl(params), 1.0)
    nm = norms(gs.u)
    assert abs(energy(power_nl(params), gs.u)) <= 1e-7 * nm.grad2


def test_evaluate_consistency(P2):
    nl = bump_family(P2, 0.5, 1)
    gs = find_ground_state(nl, 2.0)
    fv = evaluate(nl, gs.u, math.log(2.0), 3.0)
    assert fv.action_psi == pytest.approx(action(nl, gs.u, 2.0), rel=1e-14)
    assert fv.lagrangian == pytest.approx(fv.action_psi - 2.0 * 3.0, rel=1e-14)
    assert fv.zero_mass == fv.energy
    assert fv.K is not None
    # K is the unit-frequency action of the rescaled nonlinearity on the rescaled profile
    assert set(fv.as_dict()) >= {"action_psi", "energy", "Q", "pohozaev_res", "nehari_res"}


def test_evaluate_rejects_nonpositive_mass(P2):
    gs = find_ground_state(power_nl(P2), 1.0)
    with pytest.raises(ValueError):
        evaluate(power_nl(P2), gs.u, 0.0, 0.0)


def test_nonfinite_functional_reports_radius(P2):
    g = build_grid(P2, 10.0, 256)
    u = RadialFunction(g, 1e200 * np.exp(-g.nodes**2))
    with pytest.raises(NonFiniteFunctional) as exc, np.errstate(over="ignore"):
        energy(power(P2), u)
    assert exc.value.r >= 0.0


@st.composite
def radial_profiles(draw):
    N = draw(st.sampled_from([2, 3, 4]))
    a = draw(st.floats(0.2, 5.0))
    b = draw(st.floats(-0.9, 3.0))
    k = draw(st.floats(0.0, 0.999))
    return N, a, b, k


@given(radial_profiles())
def test_gagliardo_nirenberg_below_critical_mass(args):
    N, a, b, k = args
    P = ProblemParams(N)
    g = build_grid(P, 40.0, 4096)
    r = g.nodes
    v = np.exp(-a * r * r) * (1 + b * np.tanh(r) ** 2) ** 2
    u = RadialFunction(g, v)
    m1 = compute_m1(P)
    u = RadialFunction(g, v * math.sqrt(k * m1 / norms(u).mass))
    chk = gn_check(u, m1)
    assert not chk.vacuous
    assert chk.holds


def test_gn_check_flags_supercritical_mass(P2):
    g = build_grid(P2, 40.0, 4096)
    m1 = compute_m1(P2)
    u = RadialFunction(g, np.exp(-g.nodes**2))
    u = RadialFunction(g, u.values * math.sqrt(2 * m1 / norms(u).mass))
    assert gn_check(u, m1).vacuous


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_dilation_derivative_matches_finite_difference(P2, t):
    nl = bump_family(P2, 0.5, 1)
    gs = find_ground_state(nl, 1.0)
    exact = dt_energy_along_dilation(nl, gs.u, t)
    # t = 1 is a critical point, so the scale for the absolute error is grad2
    assert exact == pytest.approx(dt_energy_fd(nl, gs.u, t), rel=1e-6, abs=1e-8 * norms(gs.u).grad2)


def test_dilation_energy_of_power_is_linear_in_t(P2):
    nl = power_nl(P2)
    g = build_grid(P2, 40.0, 4096)
    u = RadialFunction(g, 0.8 * np.exp(-g.nodes**2))
    e1 = dilation_energy(nl, u, 1.0)
    assert dilation_energy(nl, u, 3.0) == pytest.approx(3.0 * e1, rel=1e-10)


def test_dilation_is_planar_only(P3):
    gs = find_ground_state(power_nl(P3), 1.0)
    with pytest.raises(ValueError):
        dilation_energy(power_nl(P3), gs.u, 2.0)
