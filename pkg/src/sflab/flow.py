"""Spectral flow estimators and index formulas.

The oracle for every estimator is combinatorial: in a finite weighted
model the spectral flow of a path is the weighted trace of the positive
spectral projection at the end minus the one at the start (the
partitioned relative-index sum telescopes to exactly that).  The
estimators below recover the same number from integrals of one-forms
along the path -- with endpoint corrections pulling the endpoints to
their sign operators -- and from truncated eta integrals.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .algebra import BlockOperator, SemifiniteModel, hermitize, singular_values
from .calculus import (DEFAULT_QUAD, QuadratureSpec, eigendecompose, f_r_scalar,
                       func_calc, integrate_1d)
from .paths import (KERNEL_TOL, PiecewisePath, TransformedPath, bounded_transform,
                    linear_path, near_kernel_flag, positive_projection,
                    sign_endpoint, transform_path)

__all__ = [
    "normalization_constant_bounded",
    "normalization_constant_unbounded",
    "finitely_summable_constant",
    "sf_oracle",
    "relative_index_exact",
    "relative_index_formula",
    "one_form_bounded",
    "sf_bounded_line",
    "gamma_correction",
    "gamma_unbounded",
    "sf_bounded_path",
    "sf_unbounded",
    "eta_invariant",
    "kernel_trace",
    "eta_gamma_reconcile",
    "sf_finitely_summable",
    "laplace_identity_check",
    "theta_potential",
    "loop_residual_bounded",
    "loop_residual_unbounded",
    "EstimatorResult",
]

_CONST_QUAD = QuadratureSpec(abs_tol=1e-13, rel_tol=1e-13, max_subdivisions=400)


@lru_cache(maxsize=None)
def normalization_constant_bounded(r: float, q: float) -> float:
    """C_{r,q} = int_{-1}^{1} (1-u^2)^{-r} exp(-(1-u^2)^(-1/q)) du."""
    f = f_r_scalar(r, q)
    res = integrate_1d(lambda u: f(1.0 - u * u), -1.0, 1.0, _CONST_QUAD)
    return res.value


@lru_cache(maxsize=None)
def normalization_constant_unbounded(q: float) -> float:
    """C_q = int_R exp(-(1+x^2)^(1/q)) dx.  For q = 1 this is sqrt(pi)/e."""
    if not (0.0 < q <= 1.0):
        raise ValueError("q must lie in (0, 1]")
    res = integrate_1d(lambda x: np.exp(-((1.0 + x * x) ** (1.0 / q))), 0.0, np.inf,
                       _CONST_QUAD)
    return 2.0 * res.value


@lru_cache(maxsize=None)
def finitely_summable_constant(p: float) -> float:
    """C~_{p/2} = int_R (1+x^2)^(-p/2) dx, p > 1.  C~_1 = pi."""
    if not (p > 1.0):
        raise ValueError("p must exceed 1")
    res = integrate_1d(lambda x: (1.0 + x * x) ** (-0.5 * p), 0.0, np.inf, _CONST_QUAD)
    return 2.0 * res.value


@dataclass(frozen=True)
class EstimatorResult:
    name: str
    value: float
    main_integral: float
    corrections: dict = field(default_factory=dict)
    quad_error: float = 0.0
    flags: tuple[str, ...] = ()


# ---------------------------------------------------------------------------
# oracle and exact index
# ---------------------------------------------------------------------------

def _tau_projection(model: SemifiniteModel, P: BlockOperator) -> float:
    return float(np.real(model.trace(P)))


def sf_oracle(path, partition_points: int = 64, check: bool = True) -> float:
    """Net eigenvalue flow through zero along the path.

    Computed as tau of the positive spectral projection at the endpoint
    minus the one at the start (sign(0) = +1 throughout), and, when
    ``check`` is set, cross-validated against the partitioned
    relative-index sum over ``partition_points`` subintervals.
    """
    model = path.model
    P_end = positive_projection(path.value(1.0))
    P_start = positive_projection(path.value(0.0))
    value = _tau_projection(model, P_end) - _tau_projection(model, P_start)
    if check:
        ts = np.linspace(0.0, 1.0, partition_points + 1)
        projs = [positive_projection(path.value(t)) for t in ts]
        total = sum(
            relative_index_exact(model, projs[j], projs[j - 1])
            for j in range(1, len(projs))
        )
        if abs(total - value) > 1e-9 * (1.0 + abs(value)):
            raise ArithmeticError(
                f"partitioned index sum {total} disagrees with endpoint value {value}")
    return value


def _check_projection(P: BlockOperator, tol: float = 1e-10):
    defect = max((P @ P - P).norm(), P.symmetry_defect())
    if defect > tol * max(1.0, P.norm()):
        raise ValueError(f"not a projection (defect {defect:.3e})")


def relative_index_exact(model: SemifiniteModel, P: BlockOperator, Q: BlockOperator) -> float:
    """tau[ran P ^ ker Q] - tau[ker P ^ ran Q] via principal-angle ranks."""
    _check_projection(P)
    _check_projection(Q)

    def tau_ran_cap_ker(A: BlockOperator, B: BlockOperator) -> float:
        # dim(ran A ^ ker B) per block = dim ran A - rank(B restricted to ran A)
        tot = 0.0
        for (_, w), ab, bb in zip(model.blocks, A.blocks, B.blocks):
            lam, U = np.linalg.eigh(ab)
            V = U[:, lam > 0.5]
            if V.shape[1] == 0:
                continue
            sv = np.linalg.svd(bb @ V, compute_uv=False)
            rank = int(np.sum(sv > KERNEL_TOL * max(1.0, sv[0] if sv.size else 1.0)))
            tot += w * (V.shape[1] - rank)
        return tot

    return tau_ran_cap_ker(P, Q) - tau_ran_cap_ker(Q, P)


def relative_index_formula(model: SemifiniteModel, P: BlockOperator, Q: BlockOperator,
                           f, n_odd_samples: int = 17) -> float:
    """tau[f(P - Q)] / f(1) for continuous odd f with f(1) != 0."""
    xs = np.linspace(0.0, 1.0, n_odd_samples + 1)[1:]
    fx, fmx = np.asarray(f(xs), dtype=float), np.asarray(f(-xs), dtype=float)
    scale = max(1.0, float(np.max(np.abs(fx))))
    if np.max(np.abs(fx + fmx)) > 1e-12 * scale:
        raise ValueError("f must be odd")
    f1 = float(f(1.0))
    if f1 == 0.0 or abs(f1) < 1e-14 * scale:
        raise ValueError("f(1) must be nonzero")
    diff = hermitize(P - Q)
    val = eigendecompose(diff).trace_f(f)
    return val / f1


def kernel_trace(model: SemifiniteModel, D: BlockOperator,
                 kernel_tol: float = KERNEL_TOL) -> float:
    """tau of the spectral projection onto the kernel of D."""
    eig = eigendecompose(D)
    nrm = max(D.norm(), 1.0)
    return sum(w * int(np.sum(np.abs(lam) <= kernel_tol * nrm))
               for (_, w), lam in zip(model.blocks, eig.eigenvalues))


# ---------------------------------------------------------------------------
# bounded one-form estimators
# ---------------------------------------------------------------------------

def one_form_bounded(model: SemifiniteModel, F: BlockOperator, X: BlockOperator,
                     r: float, q: float) -> float:
    """alpha_r evaluated on the tangent X at F:
    tau(X |1-F^2|^(-r) exp(-|1-F^2|^(-1/q))) / C_{r,q}."""
    fr = f_r_scalar(r, q)
    G = func_calc(hermitize(F), lambda x: fr(1.0 - x * x))
    val = float(np.real(model.trace(X @ G)))
    return val / normalization_constant_bounded(r, q)


def _path_integral(path, integrand_t, spec: QuadratureSpec) -> tuple[float, float]:
    """Integrate a scalar function of the path parameter segment by segment."""
    total, err = 0.0, 0.0
    for a, b in path.segment_intervals():
        res = integrate_1d(integrand_t, a, b, spec)
        total += res.value
        err += res.error
    return total, err


def _bounded_flow_integral(path, r: float, q: float, spec: QuadratureSpec) -> tuple[float, float]:
    fr = f_r_scalar(r, q)
    C = normalization_constant_bounded(r, q)

    def integrand(t):
        F = path.value(t)
        dF = path.derivative(t)
        eig = eigendecompose(F)
        G = eig.apply(lambda x: fr(1.0 - x * x))
        return float(np.real(path.model.trace(dF @ G)))

    val, err = _path_integral(path, integrand, spec)
    return val / C, err / C


def sf_bounded_line(model: SemifiniteModel, P: BlockOperator, Q: BlockOperator,
                    r: float = 1.5, q: float = 1.0,
                    spec: QuadratureSpec = DEFAULT_QUAD) -> EstimatorResult:
    """Flow of the straight path from 2P-1 to 2Q-1 (no corrections needed:
    the endpoints are already symmetries)."""
    _check_projection(P)
    _check_projection(Q)
    one = model.identity()
    path = linear_path(2.0 * P - one, 2.0 * Q - one)
    val, err = _bounded_flow_integral(path, r, q, spec)
    return EstimatorResult("bounded_line", val, val, {}, err)


def gamma_correction(model: SemifiniteModel, F: BlockOperator, r: float, q: float,
                     spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """One-form integral along the straight path from F to its sign
    operator; the correction that compensates non-symmetry endpoints."""
    F = hermitize(F)
    Ftil = sign_endpoint(F)
    path = linear_path(F, Ftil)
    val, _ = _bounded_flow_integral(path, r, q, spec)
    return val


def gamma_unbounded(model: SemifiniteModel, D: BlockOperator,
                    spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Correction at an unbounded endpoint: gamma_{3/2,1} of the bounded
    transform of D."""
    return gamma_correction(model, bounded_transform(D), 1.5, 1.0, spec)


def sf_bounded_path(path, r: float = 1.5, q: float = 1.0,
                    spec: QuadratureSpec = DEFAULT_QUAD) -> EstimatorResult:
    """Flow of a bounded path with endpoint corrections:
    integral of the one-form plus gamma(end) - gamma(start)."""
    model = path.model
    val, err = _bounded_flow_integral(path, r, q, spec)
    g1 = gamma_correction(model, path.value(1.0), r, q, spec)
    g0 = gamma_correction(model, path.value(0.0), r, q, spec)
    flags = ()
    if near_kernel_flag(path.value(0.0)) or near_kernel_flag(path.value(1.0)):
        flags = ("endpoint_near_kernel",)
    return EstimatorResult("bounded_path", val + g1 - g0, val,
                           {"start": g0, "end": g1}, err, flags)


# ---------------------------------------------------------------------------
# unbounded estimators
# ---------------------------------------------------------------------------

def _trace_dexp(model: SemifiniteModel, path: PiecewisePath, t: float, weight) -> float:
    D = path.value(t)
    dD = path.derivative(t)
    eig = eigendecompose(D)
    G = eig.apply(weight)
    return float(np.real(model.trace(dD @ G)))


def sf_unbounded(path: PiecewisePath, variant: str = "theta", q: float | None = None,
                 eps: float | None = None,
                 spec: QuadratureSpec = DEFAULT_QUAD) -> EstimatorResult:
    """Flow of an unbounded self-adjoint path, by one of three weights.

    variant "theta": (1/sqrt(pi)) int tau(D' exp(-D^2)) dt, corrections
    gamma at the transformed endpoints.
    variant "eps":   same with D scaled by sqrt(eps).
    variant "q":     weight exp(-(1+D^2)^(1/q)) normalized by C_q,
    corrections gamma_{3/2,q} at the transformed endpoints.
    """
    model = path.model
    if variant == "theta":
        variant, eps = "eps", 1.0
    if variant == "eps":
        if eps is None or not (eps > 0):
            raise ValueError("eps variant needs eps > 0")
        pref = np.sqrt(eps / np.pi)

        def w(x):
            return np.exp(-np.clip(eps * x * x, None, 700.0))

        def integrand(t):
            return _trace_dexp(model, path, t, w)

        val, err = _path_integral(path, integrand, spec)
        main = pref * val
        se = np.sqrt(eps)
        g1 = gamma_unbounded(model, se * path.value(1.0), spec)
        g0 = gamma_unbounded(model, se * path.value(0.0), spec)
        name = "unbounded_eps"
    elif variant == "q":
        if q is None:
            raise ValueError("q variant needs q")
        C = normalization_constant_unbounded(q)

        def w(x, q=q):
            return np.exp(-np.clip((1.0 + x * x) ** (1.0 / q), None, 700.0))

        def integrand(t):
            return _trace_dexp(model, path, t, w)

        val, err = _path_integral(path, integrand, spec)
        main = val / C
        g1 = gamma_correction(model, bounded_transform(path.value(1.0)), 1.5, q, spec)
        g0 = gamma_correction(model, bounded_transform(path.value(0.0)), 1.5, q, spec)
        name = "unbounded_q"
    else:
        raise ValueError(f"unknown variant {variant!r}")
    flags = ()
    if near_kernel_flag(path.value(0.0)) or near_kernel_flag(path.value(1.0)):
        flags = ("endpoint_near_kernel",)
    return EstimatorResult(name, main + g1 - g0, main, {"start": g0, "end": g1},
                           err, flags)


def eta_invariant(model: SemifiniteModel, D: BlockOperator, eps: float,
                  spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Truncated eta: (1/sqrt(pi)) int_eps^inf tau(D exp(-t D^2)) t^(-1/2) dt."""
    if not (eps > 0):
        raise ValueError("eps must be > 0")
    eig = eigendecompose(D)
    lam_w = [(w, lam) for (_, w), lam in zip(model.blocks, eig.eigenvalues)]

    def integrand(t):
        tot = 0.0
        for w, lam in lam_w:
            tot += w * float(np.sum(lam * np.exp(-np.clip(t * lam * lam, None, 700.0))))
        return tot / np.sqrt(t)

    res = integrate_1d(integrand, eps, np.inf, spec)
    return res.value / np.sqrt(np.pi)


@dataclass(frozen=True)
class EtaReconciliation:
    half_eta: float
    gamma_term: float
    kernel_half: float

    @property
    def residual(self) -> float:
        return self.half_eta - (self.gamma_term - self.kernel_half)


def eta_gamma_reconcile(model: SemifiniteModel, D: BlockOperator, eps: float,
                        spec: QuadratureSpec = DEFAULT_QUAD) -> EtaReconciliation:
    """(1/2) eta_eps(D) against gamma of sqrt(eps) D minus half the kernel trace."""
    half_eta = 0.5 * eta_invariant(model, D, eps, spec)
    gam = gamma_unbounded(model, np.sqrt(eps) * D, spec)
    ker = 0.5 * kernel_trace(model, D)
    return EtaReconciliation(half_eta, gam, ker)


def sf_finitely_summable(path: PiecewisePath, p: float,
                         spec: QuadratureSpec = DEFAULT_QUAD) -> EstimatorResult:
    """Resolvent-power flow formula; requires unitarily equivalent
    endpoints (blockwise matching spectra), for which the corrections
    cancel identically."""
    model = path.model
    e0 = eigendecompose(path.value(0.0))
    e1 = eigendecompose(path.value(1.0))
    for l0, l1 in zip(e0.eigenvalues, e1.eigenvalues):
        if np.max(np.abs(np.sort(l0) - np.sort(l1))) > 1e-8 * (1.0 + np.max(np.abs(l0))):
            raise ValueError("endpoints are not unitarily equivalent blockwise")
    C = finitely_summable_constant(p)

    def integrand(t):
        return _trace_dexp(model, path, t, lambda x: (1.0 + x * x) ** (-0.5 * p))

    val, err = _path_integral(path, integrand, spec)
    return EstimatorResult("finitely_summable", val / C, val / C, {}, err / C)


def laplace_identity_check(model: SemifiniteModel, D: BlockOperator, n: float,
                           spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Weighted-l1 deviation of int_0^inf exp(-t(1+D^2)) t^(n-1) dt from
    Gamma(n) (1+D^2)^(-n), evaluated spectrally."""
    from scipy.special import gamma as gamma_fn
    if not (n > 0):
        raise ValueError("n must be > 0")
    eig = eigendecompose(D)
    dev = 0.0
    for (_, w), lam in zip(model.blocks, eig.eigenvalues):
        for x in lam:
            a = 1.0 + x * x
            res = integrate_1d(
                lambda t: np.exp(-np.clip(t * a, None, 700.0)) * t ** (n - 1.0),
                0.0, np.inf, spec)
            dev += w * abs(res.value - gamma_fn(n) * a ** (-n))
    return dev


# ---------------------------------------------------------------------------
# potential and closedness diagnostics
# ---------------------------------------------------------------------------

def theta_potential(model: SemifiniteModel, F: BlockOperator, base: BlockOperator,
                    r: float, q: float, spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Potential of the one-form relative to a base point:
    (1/C_{r,q}) int_0^1 tau((F - base) f_r(1 - F_t^2)) dt along the chord."""
    path = linear_path(hermitize(base), hermitize(F))
    val, _ = _bounded_flow_integral(path, r, q, spec)
    return val


def loop_residual_bounded(model: SemifiniteModel, loop: list[BlockOperator],
                          r: float, q: float,
                          spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """|integral of the one-form around a closed piecewise-linear loop|."""
    nodes = [hermitize(F) for F in loop]
    path = PiecewisePath(tuple(nodes) + (nodes[0],))
    val, _ = _bounded_flow_integral(path, r, q, spec)
    return abs(val)


def loop_residual_unbounded(model: SemifiniteModel, loop: list[BlockOperator],
                            eps: float, spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Same diagnostic for the heat-weight one-form on D-type operators."""
    nodes = [hermitize(D) for D in loop]
    path = PiecewisePath(tuple(nodes) + (nodes[0],))

    def integrand(t):
        return _trace_dexp(model, path, t,
                           lambda x: np.exp(-np.clip(eps * x * x, None, 700.0)))

    val, _ = _path_integral(path, integrand, spec)
    return abs(val) * np.sqrt(eps / np.pi)
