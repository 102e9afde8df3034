"""Doubled-system structure, coefficient routes, and series consistency."""
import numpy as np
import pytest

from sflab.algebra import SemifiniteModel
from sflab.flow import sf_oracle
from sflab.generators import (dirac_circle, random_selfadjoint,
                              random_unitary)
from sflab.jlo import (DoubledSystem, anticommutator, boundary_decay_check,
                       cocycle_antisymmetry_check, commutator,
                       duhamel_coefficients, jlo_series_sf, jlo_term,
                       sf_doubled_r_integral, sf_superconnection_integral,
                       vertical_edge_symmetry_check)
from sflab.paths import conjugation_path


def _sys(seed=0, dim=3, scale=1.0):
    model = SemifiniteModel(((dim, 1.0),))
    rng = np.random.default_rng(seed)
    D = random_selfadjoint(model, rng, scale)
    u = random_unitary(model, rng)
    return DoubledSystem(model, D, u)


def test_structure_identities():
    sys = _sys(0)
    one = sys.model.identity()
    q, g, rho = sys.qhat, sys.gamma, sys.rho
    assert (q @ q - one).norm() < 1e-12
    assert (rho @ q @ rho + q).norm() < 1e-12
    assert (q @ g @ q - g).norm() < 1e-12
    assert (g @ g - one).norm() < 1e-12
    assert q.is_selfadjoint() and g.is_selfadjoint()
    # the grading commutes with D0 and with K = [D0, qhat]_+
    assert commutator(sys.d0, g).norm() < 1e-12
    assert commutator(sys.coupling, g).norm() < 1e-12


def test_d_rs_square_expansion():
    # D_{r,s}^2 = D_r^2 + s (1 - 2r) K + s^2
    sys = _sys(1)
    one = sys.model.identity()
    K = sys.coupling
    for r, s in [(0.0, 0.7), (0.3, 1.2), (1.0, 0.5)]:
        lhs = sys.d_rs(r, s)
        lhs = lhs @ lhs
        dr = sys.d_r(r)
        rhs = dr @ dr + (s * (1.0 - 2.0 * r)) * K + (s * s) * one
        assert (lhs - rhs).norm() < 1e-10


def test_r_edge_equals_base_space_heat_integrals():
    # raw identity pinning the supertrace normalization: the doubled
    # r-edge integral equals (1/sqrt(pi)) times the difference of two
    # base-space heat integrals along D + r A with A = u^-1 [D, u] and
    # B = u [D, u^-1]
    from sflab.calculus import DEFAULT_QUAD, eigendecompose, integrate_1d
    sys = _sys(2)
    D, u = sys.D, sys.u

    def base_integral(A):
        def integrand(r):
            H = D + r * A
            E = eigendecompose(H).apply(lambda x: np.exp(-x * x))
            return float(np.real(sys.base.trace(A @ E)))
        return integrate_1d(integrand, 0.0, 1.0, DEFAULT_QUAD).value

    a = base_integral(u.adjoint() @ commutator(D, u))
    b = base_integral(u @ commutator(D, u.adjoint()))
    lhs = sf_doubled_r_integral(sys)
    assert lhs == pytest.approx((a - b) / (2.0 * np.sqrt(np.pi)), abs=1e-9)


def test_edge_routes_agree_with_oracle():
    sys = _sys(3, dim=4, scale=1.3)
    ref = sf_oracle(conjugation_path(sys.D, sys.u))
    assert ref == pytest.approx(0.0, abs=1e-12)
    assert sf_doubled_r_integral(sys) == pytest.approx(ref, abs=1e-8)
    assert sf_superconnection_integral(sys) == pytest.approx(ref, abs=1e-8)


def test_coefficient_routes_cross_agree():
    sys = _sys(4)
    n_max = 4
    cs_circle = duhamel_coefficients(sys, n_max, method="taylor_circle")
    cs_dd = duhamel_coefficients(sys, n_max, method="divided_difference")
    assert np.max(np.abs(cs_circle - cs_dd)) < 1e-10
    rng = np.random.default_rng(99)
    cs_mc, errs = duhamel_coefficients(sys, 3, method="monte_carlo",
                                       rng=rng, samples=4000)
    for n in range(1, 4):
        assert abs(cs_mc[n] - cs_dd[n]) < 5.0 * max(errs[n], 1e-12)


def test_even_coefficients_vanish():
    sys = _sys(5)
    cs = duhamel_coefficients(sys, 6, method="taylor_circle")
    scale = max(1.0, np.max(np.abs(cs)))
    assert np.max(np.abs(cs[0::2])) / scale < 1e-12


def test_jlo_term_simplex_vs_coefficients():
    sys = _sys(6)
    for k in (0, 1, 2):
        t_simplex = jlo_term(sys, k, method="simplex")
        t_coeff = jlo_term(sys, k, method="coefficients")
        assert t_coeff == pytest.approx(t_simplex, abs=1e-10)


def test_jlo_series_matches_oracle():
    sys = _sys(7, dim=3, scale=0.9)
    res = jlo_series_sf(sys)
    assert res.converged
    assert res.value == pytest.approx(
        sf_oracle(conjugation_path(sys.D, sys.u)), abs=1e-6)


def test_boundary_decay():
    sys = _sys(8)
    for s0 in (4.0, 6.0, 8.0):
        chk = boundary_decay_check(sys, s0)
        assert chk.passed
    # envelope itself decays
    e = [boundary_decay_check(sys, s0).envelope for s0 in (4.0, 6.0, 8.0)]
    assert e[0] > e[1] > e[2]


def test_vertical_edge_symmetry():
    assert vertical_edge_symmetry_check(_sys(9)) < 1e-10


def test_cocycle_antisymmetry():
    sys = _sys(10)
    assert cocycle_antisymmetry_check(sys, 0) < 1e-10
    assert cocycle_antisymmetry_check(sys, 1) < 1e-10


def test_dirac_circle_routes_vanish():
    model, D, u = dirac_circle(2)
    sys = DoubledSystem(model, D, u)
    assert sf_doubled_r_integral(sys) == pytest.approx(0.0, abs=1e-8)
    assert sf_superconnection_integral(sys) == pytest.approx(0.0, abs=1e-8)
