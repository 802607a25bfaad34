import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from masscrit.grid import ProblemParams
from masscrit.nonlinearity import (OverlappingSupportError, bump_family, check_conditions, load_table,
                                   make_g2_example, make_g2_example_planar, make_profile_a, make_two_scale,
                                   make_xi, min_admissible_ell, perturb, plateau_power, power,
                                   profile_nonlinearity, rho_family, smooth_bump, tabulated, upsilon,
                                   verify_profile, xi_gq_norm, xi_norm)

positive = st.floats(1e-3, 1e3)


def fd(f, s, h=1e-6):
    return (f(s * (1 + h)) - f(s * (1 - h))) / (2 * s * h)


def test_power_values(params):
    nl = power(params)
    p = params.p
    assert nl.g(2.0) == pytest.approx(2.0**p)
    assert nl.G(2.0) == pytest.approx(2.0 ** (p + 1) / (p + 1))
    assert nl.h(5.0) == 0.0 and nl.H(5.0) == 0.0
    assert nl.is_power


@given(s=positive, N=st.sampled_from([2, 3, 4]))
def test_g_odd_G_even(s, N):
    nl = bump_family(ProblemParams(N), 0.5, 1)
    assert nl.g(-s) == -nl.g(s)
    assert nl.G(-s) == nl.G(s)


@given(s=st.floats(0.05, 20.0),
       which=st.sampled_from(["bump+", "bump-", "rho", "profile", "g2"]))
def test_G_is_primitive_of_g(s, which):
    P = ProblemParams(3)
    nl = {
        "bump+": lambda: bump_family(P, 0.5, 1),
        "bump-": lambda: bump_family(P, 0.5, -1),
        "rho": lambda: rho_family(P, 0.5),
        "profile": lambda: profile_nonlinearity(make_profile_a(0.3, 2.0, P), P),
        "g2": lambda: make_g2_example(P, 0.05),
    }[which]()
    assert fd(nl.G, s) == pytest.approx(nl.g(s), rel=1e-5, abs=1e-9)


@given(s=positive)
def test_scalar_path_matches_array_path(s):
    P = ProblemParams(2)
    for nl in (bump_family(P, 0.5, 1), rho_family(P, 0.5), profile_nonlinearity(make_profile_a(-0.3, 8.0, P), P)):
        assert nl.g_scalar(s) == pytest.approx(float(nl.g(s)), rel=1e-13)
        assert nl.g_scalar(-s) == pytest.approx(-float(nl.g(s)), rel=1e-13)


@given(s=positive, mu=st.floats(0.01, 100.0), N=st.sampled_from([2, 3, 4]))
def test_scaled_nonlinearity_identity(s, mu, N):
    nl = bump_family(ProblemParams(N), 0.5, 1)
    sc = nl.scaled(mu)
    assert sc.g(s) == pytest.approx(mu ** (-1 - N / 4) * nl.g(mu ** (N / 4) * s), rel=1e-12)
    assert sc.G(s) == pytest.approx(mu ** (-1 - N / 2) * nl.G(mu ** (N / 4) * s), rel=1e-12)


def test_power_is_invariant_under_scaling(params):
    nl = power(params).scaled(7.0)
    s = np.logspace(-3, 3, 50)
    np.testing.assert_allclose(nl.g(s), s**params.p, rtol=1e-13)


def test_bump_family_sign_of_deviation(P2):
    s = np.linspace(1.2, 2.8, 200)
    G0 = power(P2).G(s)
    assert np.all(bump_family(P2, 0.5, 1).G(s) > G0)
    assert np.all(bump_family(P2, 0.5, -1).G(s) < G0)
    outside = np.array([0.5, 0.99, 3.01, 10.0])
    np.testing.assert_array_equal(bump_family(P2, 0.5, 1).G(outside), power(P2).G(outside))


def test_bump_peak_value(P2):
    assert smooth_bump(2.0, 2.0, 1.0) == pytest.approx(1.0)
    nl = bump_family(P2, 0.5, 1)
    # G(2)/G0(2) - 1 = eps e^{-1}
    assert nl.G(2.0) / power(P2).G(2.0) - 1 == pytest.approx(0.5 / math.e, rel=1e-12)


def test_plateau_is_scaled_power(P2):
    nl = plateau_power(P2, 0.3)
    s = np.logspace(-2, 2, 20)
    np.testing.assert_allclose(nl.g(s), 1.3 * s**P2.p, rtol=1e-13)


# ---------------------------------------------------------------- conditions

@pytest.mark.parametrize("N", [2, 3, 4])
def test_power_satisfies_structural_conditions(N):
    rep = check_conditions(power(ProblemParams(N)))
    assert rep.ar.holds and rep.g3.holds and rep.limit_zero.holds and rep.limit_inf.holds


def test_rho_family_conditions(P2):
    rep = check_conditions(rho_family(P2, 0.5))
    assert rep.rho_below_alpha.holds
    assert rep.limit_zero.holds and rep.limit_inf.holds


def test_rho_family_needs_fast_vanishing_at_zero(P2):
    # k = 2 is too slow for N = 2: h(s)/s^p does not vanish at 0
    assert not check_conditions(rho_family(P2, 0.5, k=2.0)).limit_zero.holds


def test_rho_family_rejects_unknown_profile(P2):
    with pytest.raises(ValueError):
        rho_family(P2, 0.5, profile="cubic")


# ---------------------------------------------------------------- plateau profiles

@pytest.mark.parametrize("alpha", [-0.5, -0.3, 0.0, 0.3, 0.5])
@pytest.mark.parametrize("L", [2.0, 8.0, 32.0])
def test_profile_properties(alpha, L, params):
    chk = verify_profile(make_profile_a(alpha, L, params))
    assert chk["bounded"] and chk["vanishes_near_0_and_inf"] and chk["slope_bound"] and chk["plateau"]


@given(alpha=st.floats(-0.5, 0.5), L=st.floats(1.5, 200.0), s=st.floats(1e-4, 1e4))
def test_profile_pointwise_bounds(alpha, L, s):
    P = ProblemParams(2)
    a = make_profile_a(alpha, L, P)
    assert abs(a.at(s)) <= 0.5
    assert abs(a.dat(s) * s) < 1 / P.N**2
    if 1 / L <= s <= L:
        assert a.at(s) == alpha


def test_profile_rejects_large_alpha(P2):
    with pytest.raises(ValueError, match="1/2"):
        make_profile_a(0.7, 2.0, P2)


def test_profile_rejects_eroding_mollifier(P2):
    with pytest.raises(ValueError):
        make_profile_a(0.3, 2.0, P2, mollify_eps=1.0)


def test_two_scale_support_rule(P2):
    a1 = make_profile_a(-0.3, 2.0, P2)
    a2 = make_profile_a(0.3, 2.0, P2)
    need = min_admissible_ell(a1, a2, 2)
    assert need == pytest.approx(14.805, abs=1e-3)
    with pytest.raises(OverlappingSupportError):
        make_two_scale(a1, a2, need - 0.1, P2)
    nl = make_two_scale(a1, a2, need + 1, P2)
    f = math.exp(2 * (need + 1) / 4)
    assert nl.profile(1.0) == pytest.approx(-0.3)
    assert nl.profile(f) == pytest.approx(0.3)


def test_two_scale_of_zero_profiles_is_power(P2):
    z = make_profile_a(0.0, 2.0, P2)
    assert make_two_scale(z, z, 3.0, P2).is_power


# ---------------------------------------------------------------- perturbations

def _xi_bump(P):
    Xi = lambda s: smooth_bump(np.abs(s), 2.0, 0.5) * np.abs(s) ** 4
    dXi = lambda s: np.sign(s) * (4 * np.abs(s) ** 3 * smooth_bump(np.abs(s), 2.0, 0.5)
                                  + np.abs(s) ** 4 * fd(lambda x: smooth_bump(x, 2.0, 0.5), np.abs(s)))
    return make_xi(Xi, dXi, P, "bump4")


def test_xi_norm_homogeneous(P2):
    xi = upsilon(ProblemParams(3))
    assert xi_norm(xi * 3.0) == pytest.approx(3.0 * xi_norm(xi), rel=1e-10)


def test_xi_norm_dominates_gq_norm():
    P = ProblemParams(3)
    xi = upsilon(P)
    assert xi_gq_norm(xi, P.p) <= 2 * xi_norm(xi)


def test_perturb_adds_xi(P2):
    xi = _xi_bump(P2)
    nl = perturb(power(P2), xi, 0.1)
    s = np.array([1.8, 2.0, 2.2])
    np.testing.assert_allclose(nl.G(s), power(P2).G(s) + 0.1 * xi.Xi(s), rtol=1e-14)
    assert perturb(power(P2), xi, 0.0) is not None


# ---------------------------------------------------------------- zero-mass examples

def test_g2_example_quotient_nonincreasing(P3):
    nl = make_g2_example(P3, 0.0)
    s = np.linspace(0.5, 3.5, 4001)
    dF1 = nl.parts["dF1"](s)
    assert np.max(dF1) <= 1e-8
    assert abs(nl.parts["dF1"](np.array([2.0]))[0]) < 1e-8


def test_g2_example_breaks_g3_when_perturbed(P3):
    assert check_conditions(make_g2_example(P3, 0.0)).g3.holds
    rep = check_conditions(make_g2_example(P3, 0.05))
    assert not rep.g3.holds
    assert 1.7 < rep.g3.witness < 2.9


def test_g2_example_dimension_guard(P2, P3):
    with pytest.raises(ValueError):
        make_g2_example(P2)
    with pytest.raises(ValueError):
        make_g2_example_planar(P3)
    nl = make_g2_example_planar(P2, 0.1)
    assert nl.G(2.0) < 0


# ---------------------------------------------------------------- tabulated

def test_tabulated_power_roundtrip(tmp_path, P2):
    s = np.logspace(-2, 2, 400)
    path = tmp_path / "g.csv"
    path.write_text("s,g\n" + "\n".join(f"{a:.17g},{b:.17g}" for a, b in zip(s, s**3)))
    nl = load_table(path, P2)
    x = np.array([0.003, 0.5, 3.0, 500.0])
    np.testing.assert_allclose(nl.g(x), x**3, rtol=1e-4)
    np.testing.assert_allclose(nl.G(x), x**4 / 4, rtol=1e-3)


def test_tabulated_header_checked(tmp_path, P2):
    path = tmp_path / "bad.csv"
    path.write_text("x,y\n1,1\n")
    with pytest.raises(ValueError, match="header"):
        load_table(path, P2)


def test_tabulated_needs_four_nodes(P2):
    with pytest.raises(ValueError):
        tabulated(P2, [1, 2, 3], [1, 8, 27])
