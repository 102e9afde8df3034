"""Flow estimators, index formulas, eta reconciliation, one-form exactness."""
import numpy as np
import pytest
from scipy.special import erfc

from sflab.algebra import SemifiniteModel, singular_values
from sflab.calculus import eigendecompose, f_r_scalar, func_calc, integrate_1d
from sflab.flow import (eta_gamma_reconcile, eta_invariant,
                        finitely_summable_constant, gamma_correction,
                        gamma_unbounded, kernel_trace, laplace_identity_check,
                        loop_residual_bounded, loop_residual_unbounded,
                        normalization_constant_bounded,
                        normalization_constant_unbounded, one_form_bounded,
                        relative_index_exact, relative_index_formula,
                        sf_bounded_line, sf_bounded_path, sf_finitely_summable,
                        sf_oracle, sf_unbounded, theta_potential)
from sflab.generators import (random_path, random_projection,
                              random_selfadjoint, random_unitary)
from sflab.paths import (PiecewisePath, bounded_transform, conjugation_path,
                         eta_family_value, linear_path, transform_path)

MODEL = SemifiniteModel(((3, 1.0), (2, 0.5)))


def test_sf_oracle_single_crossing():
    # D_t = t - 1/2 crosses zero upward once: flow +1 per unit weight
    m = SemifiniteModel(((1, 1.0),))
    path = linear_path(m.diag([[-0.5]]), m.diag([[0.5]]))
    assert sf_oracle(path) == pytest.approx(1.0)
    m2 = SemifiniteModel(((1, 0.25),))
    path2 = linear_path(m2.diag([[-0.5]]), m2.diag([[0.5]]))
    assert sf_oracle(path2) == pytest.approx(0.25)


def test_sf_oracle_weighted_projections():
    m = SemifiniteModel(((1, 0.5),))
    P = m.operator([[[1.0]]])
    Q = m.operator([[[0.0]]])
    one = m.identity()
    path = linear_path(2.0 * P - one, 2.0 * Q - one)
    assert sf_oracle(path) == pytest.approx(-0.5)


def test_relative_index_exact_examples():
    m = SemifiniteModel(((1, 0.5),))
    P = m.operator([[[1.0]]])
    Q = m.operator([[[0.0]]])
    assert relative_index_exact(m, P, Q) == pytest.approx(0.5)
    assert relative_index_exact(m, Q, P) == pytest.approx(-0.5)
    assert relative_index_exact(m, P, P) == pytest.approx(0.0)


def test_relative_index_equals_trace_difference():
    rng = np.random.default_rng(0)
    for _ in range(10):
        P = random_projection(MODEL, rng)
        Q = random_projection(MODEL, rng)
        ref = float(np.real(MODEL.trace(P) - MODEL.trace(Q)))
        assert relative_index_exact(MODEL, P, Q) == pytest.approx(ref, abs=1e-10)


def test_relative_index_formula_routes():
    rng = np.random.default_rng(1)
    for _ in range(5):
        P = random_projection(MODEL, rng)
        Q = random_projection(MODEL, rng)
        ref = relative_index_exact(MODEL, P, Q)
        for n in (1.0, 2.5, 3.0):
            val = relative_index_formula(
                MODEL, P, Q, lambda x, n=n: x * np.abs(x) ** (n - 1.0))
            assert val == pytest.approx(ref, abs=1e-10)
        # flat-at-zero odd weight
        val = relative_index_formula(MODEL, P, Q, _odd_exp)
        assert val == pytest.approx(ref, abs=1e-10)


def _odd_exp(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        e = np.where(x == 0.0, 0.0, np.exp(-1.0 / np.where(x == 0.0, 1.0, x * x)))
    return x * e


def test_relative_index_formula_rejects_even_f():
    rng = np.random.default_rng(2)
    P = random_projection(MODEL, rng)
    Q = random_projection(MODEL, rng)
    with pytest.raises(ValueError):
        relative_index_formula(MODEL, P, Q, lambda x: np.abs(x))
    with pytest.raises(ValueError):
        relative_index_formula(MODEL, P, Q, lambda x: x * (1.0 - x * x))


def test_sf_bounded_line_matches_exact_index():
    rng = np.random.default_rng(3)
    for r, q in [(1.5, 1.0), (0.0, 0.7)]:
        P = random_projection(MODEL, rng)
        Q = random_projection(MODEL, rng)
        res = sf_bounded_line(MODEL, P, Q, r, q)
        assert res.value == pytest.approx(relative_index_exact(MODEL, Q, P), abs=1e-8)


def test_gamma_correction_kernel_contribution():
    # bounded transform of D with a kernel: gamma_{3/2,1} picks up half
    # the kernel weight
    m = SemifiniteModel(((3, 0.5),))
    D = m.diag([[0.0, 1.0, -1.0]])
    F = bounded_transform(D)
    # the +-1 eigenvalues of D transform symmetrically and cancel
    val = gamma_correction(m, F, 1.5, 1.0)
    assert val == pytest.approx(0.5 * 0.5, abs=1e-9)
    # symmetric spectrum pairs cancel; a lone 0.5 eigenvalue contributes
    # the same as it would on its own
    D3 = m.diag([[1.0, -1.0, 0.5]])
    v3 = gamma_correction(m, bounded_transform(D3), 1.5, 1.0)
    m1 = SemifiniteModel(((1, 0.5),))
    v3_single = gamma_correction(m1, bounded_transform(m1.diag([[0.5]])), 1.5, 1.0)
    assert v3 == pytest.approx(v3_single, abs=1e-9)


def test_sf_unbounded_concordance_small():
    rng = np.random.default_rng(4)
    path = random_path(MODEL, rng, n_nodes=3, scale=2.0)
    ref = sf_oracle(path)
    assert sf_unbounded(path, "theta").value == pytest.approx(ref, abs=1e-8)
    assert sf_unbounded(path, "eps", eps=0.25).value == pytest.approx(ref, abs=1e-8)
    assert sf_unbounded(path, "q", q=0.9).value == pytest.approx(ref, abs=1e-8)
    bp = transform_path(path)
    assert sf_bounded_path(bp, 1.5, 1.0).value == pytest.approx(ref, abs=1e-8)


def test_eta_invariant_scalar_closed_form():
    m = SemifiniteModel(((1, 1.0),))
    D = m.diag([[1.0]])
    assert eta_invariant(m, D, 1.0) == pytest.approx(erfc(1.0), abs=1e-11)
    # closed form for general diagonals: sum of sign * erfc(|lam| sqrt(eps))
    D2 = m.diag([[-2.0]])
    assert eta_invariant(m, D2, 0.5) == pytest.approx(-erfc(2.0 * np.sqrt(0.5)), abs=1e-11)


def test_eta_invariant_erfc_oracle_random():
    rng = np.random.default_rng(5)
    D = random_selfadjoint(MODEL, rng, 1.5)
    eig = eigendecompose(D)
    for eps in (0.5, 2.0):
        ref = sum(w * np.sum(np.sign(lam) * erfc(np.abs(lam) * np.sqrt(eps)))
                  for (_, w), lam in zip(MODEL.blocks, eig.eigenvalues))
        assert eta_invariant(MODEL, D, eps) == pytest.approx(ref, abs=1e-10)


def test_eta_gamma_reconcile_with_kernel():
    m = SemifiniteModel(((4, 0.5), (2, 1.5)))
    rng = np.random.default_rng(6)
    # embed kernels of dimension 0, 1, 2 via diagonal construction
    for kdim in (0, 1, 2):
        diag0 = np.array([1.3, -0.4, 2.0, -1.1])
        diag0[:kdim] = 0.0
        D = m.diag([diag0, np.array([0.7, -2.2])])
        u = random_unitary(m, rng)
        D = u @ D @ u.adjoint()
        assert kernel_trace(m, D) == pytest.approx(0.5 * kdim)
        for eps in (0.5, 1.0, 2.0):
            rec = eta_gamma_reconcile(m, D, eps)
            assert abs(rec.residual) < 1e-8


def test_sf_finitely_summable_on_conjugation():
    rng = np.random.default_rng(7)
    D = random_selfadjoint(MODEL, rng, 1.2)
    u = random_unitary(MODEL, rng)
    path = conjugation_path(D, u)
    for p in (2.0, 2.7):
        res = sf_finitely_summable(path, p)
        assert res.value == pytest.approx(sf_oracle(path), abs=1e-7)
    assert finitely_summable_constant(2.0) == pytest.approx(np.pi, abs=1e-12)


def test_sf_finitely_summable_rejects_unequal_endpoints():
    rng = np.random.default_rng(8)
    path = random_path(MODEL, rng, n_nodes=2)
    with pytest.raises(ValueError):
        sf_finitely_summable(path, 2.0)


def test_laplace_identity():
    rng = np.random.default_rng(9)
    for n in (1.0, 2.0, 3.5):
        D = random_selfadjoint(MODEL, rng, 1.5)
        assert laplace_identity_check(MODEL, D, n) < 1e-9


def test_theta_potential_is_a_potential():
    # theta(F2) - theta(F1) (same base) equals the one-form integral
    # along the chord from F1 to F2
    rng = np.random.default_rng(10)
    base = random_selfadjoint(MODEL, rng, 0.5)
    F1 = random_selfadjoint(MODEL, rng, 0.5)
    F2 = random_selfadjoint(MODEL, rng, 0.5)
    r, q = 1.5, 1.0
    t1 = theta_potential(MODEL, F1, base, r, q)
    t2 = theta_potential(MODEL, F2, base, r, q)
    from sflab.calculus import DEFAULT_QUAD
    from sflab.flow import _bounded_flow_integral
    chord, _ = _bounded_flow_integral(linear_path(F1, F2), r, q, spec=DEFAULT_QUAD)
    assert t2 - t1 == pytest.approx(chord, abs=1e-8)


def test_theta_potential_finite_difference_matches_one_form():
    rng = np.random.default_rng(11)
    base = random_selfadjoint(MODEL, rng, 0.5)
    F = random_selfadjoint(MODEL, rng, 0.5)
    X = random_selfadjoint(MODEL, rng)
    r, q = 1.5, 1.0
    h = 1e-5
    fd = (theta_potential(MODEL, F + h * X, base, r, q)
          - theta_potential(MODEL, F - h * X, base, r, q)) / (2 * h)
    assert fd == pytest.approx(one_form_bounded(MODEL, F, X, r, q), abs=1e-7)


def test_loop_residuals():
    rng = np.random.default_rng(12)
    Fs = [random_selfadjoint(MODEL, rng, 0.6) for _ in range(3)]
    assert loop_residual_bounded(MODEL, Fs, 1.5, 1.0) < 1e-8
    assert loop_residual_bounded(MODEL, Fs, 0.0, 0.7) < 1e-8
    Ds = [random_selfadjoint(MODEL, rng, 1.5) for _ in range(3)]
    assert loop_residual_unbounded(MODEL, Ds, 1.0) < 1e-8


def test_transform_identity_heat_weight():
    # the pullback of the r=3/2 one-form through the bounded transform is
    # the heat-type integrand of the q-variant: pointwise in t,
    # tau(F' f_{3/2}(1-F^2)) = tau(D' exp(-(1+D^2)^(1/q)))
    rng = np.random.default_rng(13)
    base = random_path(MODEL, rng, n_nodes=2, scale=1.5)
    tp = transform_path(base)
    for q in (0.7, 1.0):
        fr = f_r_scalar(1.5, q)
        for t in (0.2, 0.8):
            F, dF = tp.value(t), tp.derivative(t)
            G = func_calc(F, lambda x: fr(1.0 - x * x))
            lhs = float(np.real(MODEL.trace(dF @ G)))
            D, dD = base.value(t), base.derivative(t)
            H = func_calc(D, lambda x: np.exp(-((1.0 + x * x) ** (1.0 / q))))
            rhs = float(np.real(MODEL.trace(dD @ H)))
            assert lhs == pytest.approx(rhs, abs=1e-9)


def test_resolvent_domination_bound():
    # (1 + (D0+A)^2)^(-1) <= f(||A||) (1 + D0^2)^(-1) with
    # f(a) = 1 + (a^2 + a sqrt(a^2+4))/2
    rng = np.random.default_rng(14)
    for _ in range(5):
        D0 = random_selfadjoint(MODEL, rng, 1.5)
        A = random_selfadjoint(MODEL, rng, 0.8)
        a = A.norm()
        fa = 1.0 + 0.5 * (a * a + a * np.sqrt(a * a + 4.0))
        L = func_calc(D0 + A, lambda x: 1.0 / (1.0 + x * x))
        R = func_calc(D0, lambda x: 1.0 / (1.0 + x * x))
        gap = fa * R - L
        lam_min = min(np.min(np.linalg.eigvalsh(b)) for b in gap.blocks)
        assert lam_min > -1e-10


def test_interpolation_family_chord_vanishes():
    # the chord integral from the s -> 0 sign limit to F_delta goes to 0
    m = SemifiniteModel(((4, 1.0),))
    D = m.diag([[0.0, 1.0, -1.5, 0.4]])
    F0 = eta_family_value(D, 0.0)
    vals = []
    for delta in (0.5, 0.05, 0.005):
        Fd = eta_family_value(D, delta)
        vals.append(abs(theta_potential(m, Fd, F0, 1.5, 1.0)))
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < 5e-3


def test_constants_cross_identities():
    assert normalization_constant_unbounded(1.0) == pytest.approx(
        np.sqrt(np.pi) / np.e, abs=1e-13)
    for q in (0.6, 0.8, 1.0):
        assert normalization_constant_bounded(1.5, q) == pytest.approx(
            normalization_constant_unbounded(q), abs=1e-11)
