"""Paths, the bounded transform and its derivative routes."""
import numpy as np
import pytest

from sflab.algebra import SemifiniteModel
from sflab.calculus import func_calc
from sflab.generators import random_path, random_selfadjoint
from sflab.paths import (PiecewisePath, bounded_transform, conjugation_path,
                         eta_family_derivative, eta_family_value, linear_path,
                         positive_projection, sign_endpoint,
                         transform_derivative_resolvent, transform_path)

MODEL = SemifiniteModel(((3, 1.0), (2, 0.5)))


def test_piecewise_path_evaluation():
    rng = np.random.default_rng(0)
    A, B, C = (random_selfadjoint(MODEL, rng) for _ in range(3))
    path = PiecewisePath((A, B, C))
    assert (path.value(0.0) - A).norm() < 1e-14
    assert (path.value(0.5) - B).norm() < 1e-14
    assert (path.value(1.0) - C).norm() < 1e-14
    assert (path.value(0.25) - 0.5 * (A + B)).norm() < 1e-13
    assert (path.derivative(0.1) - 2.0 * (B - A)).norm() < 1e-13
    assert (path.derivative(0.9) - 2.0 * (C - B)).norm() < 1e-13
    with pytest.raises(ValueError):
        path.value(1.5)


def test_conjugation_path_endpoint():
    rng = np.random.default_rng(1)
    from sflab.generators import random_unitary
    D = random_selfadjoint(MODEL, rng)
    u = random_unitary(MODEL, rng)
    path = conjugation_path(D, u)
    assert (path.value(1.0) - u @ D @ u.adjoint()).norm() < 1e-13


def test_bounded_transform_identity():
    rng = np.random.default_rng(2)
    D = random_selfadjoint(MODEL, rng, 2.0)
    F = bounded_transform(D)
    one = MODEL.identity()
    # 1 - F^2 = (1 + D^2)^(-1)
    lhs = one - F @ F
    rhs = func_calc(D, lambda x: 1.0 / (1.0 + x * x))
    assert (lhs - rhs).norm() < 1e-12
    assert F.norm() < 1.0


def test_transform_path_derivative_vs_finite_difference():
    rng = np.random.default_rng(3)
    base = random_path(MODEL, rng, n_nodes=2, scale=1.5)
    tp = transform_path(base)
    t, h = 0.37, 1e-6
    fd = (1.0 / (2 * h)) * (tp.value(t + h) - tp.value(t - h))
    assert (tp.derivative(t) - fd).norm() < 1e-8


def test_transform_derivative_resolvent_agrees():
    rng = np.random.default_rng(4)
    base = random_path(MODEL, rng, n_nodes=2, scale=2.0)
    tp = transform_path(base)
    t = 0.61
    a = tp.derivative(t)
    b = transform_derivative_resolvent(base.value(t), base.derivative(t))
    assert (a - b).norm() < 1e-9


def test_eta_family_derivative_identity():
    # d/ds F_s = -(1/2) F_s (s + D^2)^(-1)
    rng = np.random.default_rng(5)
    D = random_selfadjoint(MODEL, rng, 1.5)
    s = 0.8
    der = eta_family_derivative(D, s)
    Fs = eta_family_value(D, s)
    R = func_calc(D, lambda x: 1.0 / (s + x * x))
    assert (der + 0.5 * (Fs @ R)).norm() < 1e-12
    # and 1 - F_s^2 = s (s + D^2)^(-1)
    one = MODEL.identity()
    assert ((one - Fs @ Fs) - s * R).norm() < 1e-12


def test_eta_family_limit_is_symmetric_sign():
    D = MODEL.diag([np.array([-2.0, 0.0, 1.0]), np.array([0.5, -0.5])])
    F0 = eta_family_value(D, 0.0)
    ref = MODEL.diag([np.array([-1.0, 0.0, 1.0]), np.array([1.0, -1.0])])
    assert (F0 - ref).norm() < 1e-12


def test_sign_endpoint_zero_convention():
    D = MODEL.diag([np.array([-2.0, 0.0, 1.0]), np.array([1e-12, -0.5])])
    S = sign_endpoint(D)
    ref = MODEL.diag([np.array([-1.0, 1.0, 1.0]), np.array([1.0, -1.0])])
    assert (S - ref).norm() < 1e-12
    P = positive_projection(D)
    assert float(np.real(MODEL.trace(P))) == pytest.approx(2.0 * 1.0 + 1.0 * 0.5)


def test_transformed_path_segments_follow_base():
    rng = np.random.default_rng(6)
    base = random_path(MODEL, rng, n_nodes=4)
    tp = transform_path(base)
    assert tp.segment_intervals() == base.segment_intervals()
    assert (tp.start - bounded_transform(base.start)).norm() < 1e-13
    assert (tp.end - bounded_transform(base.end)).norm() < 1e-13
