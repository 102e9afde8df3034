"""Graded doubling and entire-cocycle expansions.

A self-adjoint D and a unitary u on a base model are doubled twice
(two auxiliary qubit factors) so that the straight line from D to
u D u* becomes the top edge of a rectangle of self-adjoint operators
on the graded space.  Stokes' theorem trades the flow integral for a
one-sided integral over a coupling parameter s, whose expansion in
ordered exponentials reproduces the summable pairing with the unitary.
All four evaluation routes (r-edge integral, s-integral, coefficient
extraction, simplex series) are kept so they can check each other.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.linalg import expm

from .algebra import BlockOperator, SemifiniteModel, hermitize
from .calculus import (DEFAULT_QUAD, QuadratureSpec, eigendecompose, integrate_1d,
                       simplex_exp_chain, simplex_exp_chain_mc)

__all__ = [
    "DoubledSystem",
    "commutator",
    "anticommutator",
    "sf_doubled_r_integral",
    "sf_superconnection_integral",
    "boundary_decay_check",
    "vertical_edge_symmetry_check",
    "duhamel_coefficients",
    "jlo_term",
    "jlo_series_sf",
    "cocycle_antisymmetry_check",
]

_S0 = np.eye(2, dtype=complex)
_S1 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_S2 = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
_S3 = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
_E01 = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
_E10 = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)


def commutator(A: BlockOperator, B: BlockOperator) -> BlockOperator:
    return A @ B - B @ A


def anticommutator(A: BlockOperator, B: BlockOperator) -> BlockOperator:
    return A @ B + B @ A


def _expm_blocks(X: BlockOperator) -> BlockOperator:
    """exp of a (possibly non-normal) block operator, blockwise Pade."""
    return BlockOperator(X.model, tuple(expm(b) for b in X.blocks))


@dataclass(frozen=True)
class DoubledSystem:
    """Two-qubit doubling of (D, u) on a base model.

    Carries the grading Gamma = s2 x s3 x 1, the doubled operator
    D0 = s2 x s0 x D, the odd symmetry qhat built from u, the reflection
    rho = s2 x s0 x 1 conjugating qhat to -qhat, and the coupling
    K = [D0, qhat]_+.
    """

    base: SemifiniteModel
    D: BlockOperator
    u: BlockOperator

    def __post_init__(self):
        self.D._check_model(self.base)
        self.u._check_model(self.base)
        hermitize(self.D)
        one = self.base.identity()
        if (self.u @ self.u.adjoint() - one).norm() > 1e-9:
            raise ValueError("u must be unitary")

    @property
    def model(self) -> SemifiniteModel:
        return SemifiniteModel(tuple((4 * d, w) for d, w in self.base.blocks))

    def _lift(self, qubit2: np.ndarray, inner_blocks) -> BlockOperator:
        """qubit2 x (two-by-two of base blocks) -> doubled operator."""
        return BlockOperator(self.model, tuple(np.kron(qubit2, ib) for ib in inner_blocks))

    def _inner(self, s: np.ndarray, X: BlockOperator):
        return tuple(np.kron(s, b) for b in X.blocks)

    @property
    def gamma(self) -> BlockOperator:
        eye = self.base.identity()
        return self._lift(_S2, self._inner(_S3, eye))

    @property
    def rho(self) -> BlockOperator:
        eye = self.base.identity()
        return self._lift(_S2, self._inner(_S0, eye))

    @property
    def d0(self) -> BlockOperator:
        return self._lift(_S2, self._inner(_S0, self.D))

    @property
    def qhat(self) -> BlockOperator:
        uinv = self.u.adjoint()
        inner = tuple(
            np.kron(_E01, -1.0j * bi) + np.kron(_E10, 1.0j * bu)
            for bi, bu in zip(uinv.blocks, self.u.blocks)
        )
        return self._lift(_S3, inner)

    @property
    def coupling(self) -> BlockOperator:
        """K = [D0, qhat]_+; off-diagonal in the first qubit, built from
        the commutators [D, u] and [D, u^-1]."""
        return anticommutator(self.d0, self.qhat)

    def d_r(self, r: float) -> BlockOperator:
        q = self.qhat
        return (1.0 - r) * self.d0 - r * (q @ self.d0 @ q)

    def d_r_dot(self) -> BlockOperator:
        q = self.qhat
        return -(self.d0 + q @ self.d0 @ q)

    def d_rs(self, r: float, s: float) -> BlockOperator:
        return self.d_r(r) + s * self.qhat

    def supertrace(self, a: BlockOperator) -> float:
        """(1 / 2 sqrt(pi)) tau(Gamma a)."""
        return float(np.real(self.model.trace(self.gamma @ a))) / (2.0 * np.sqrt(np.pi))

    def heat(self, A: BlockOperator) -> BlockOperator:
        """exp(-A^2) for self-adjoint A on the doubled space."""
        return eigendecompose(A).apply(lambda x: np.exp(-np.clip(x * x, None, 700.0)))


def sf_doubled_r_integral(sys: DoubledSystem,
                          spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Flow of the straight path D -> u D u* from the r-edge integral:
    (1/2) int_0^1 Str(D_r' exp(-D_r^2)) dr."""
    dot = sys.d_r_dot()

    def integrand(r):
        return sys.supertrace(dot @ sys.heat(sys.d_r(r)))

    res = integrate_1d(integrand, 0.0, 1.0, spec)
    return 0.5 * res.value


def sf_superconnection_integral(sys: DoubledSystem,
                                spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Same flow from the coupling edge: int_0^inf Str(qhat exp(-D_{0,s}^2)) ds."""
    q = sys.qhat

    def integrand(s):
        return sys.supertrace(q @ sys.heat(sys.d_rs(0.0, s)))

    res = integrate_1d(integrand, 0.0, np.inf, spec)
    return res.value


@dataclass(frozen=True)
class BoundaryDecay:
    s0: float
    values: np.ndarray
    envelope: float

    @property
    def passed(self) -> bool:
        return bool(np.max(np.abs(self.values)) <= self.envelope)


def boundary_decay_check(sys: DoubledSystem, s0: float, n_grid: int = 9) -> BoundaryDecay:
    """Top-edge integrand at height s0 against its Gaussian envelope.

    D_{r,s}^2 >= s^2 - s ||K||, so the edge integrand is bounded by
    (1/2 sqrt(pi)) ||D_r'|| tau(1) exp(-s0^2 + s0 ||K||)."""
    dot = sys.d_r_dot()
    vals = np.array([
        sys.supertrace(dot @ sys.heat(sys.d_rs(r, s0)))
        for r in np.linspace(0.0, 1.0, n_grid)
    ])
    env = (dot.norm() * sys.model.total_width / (2.0 * np.sqrt(np.pi))
           * np.exp(-s0 * s0 + s0 * sys.coupling.norm()))
    return BoundaryDecay(s0, vals, float(env))


def vertical_edge_symmetry_check(sys: DoubledSystem, s_grid=None) -> float:
    """Max over s of |edge(r=1) + edge(r=0)|: conjugating with rho sends
    qhat to -qhat and exchanges the two vertical edges, so their
    integrands are pointwise opposite."""
    if s_grid is None:
        s_grid = np.linspace(0.0, 3.0, 7)
    q = sys.qhat
    rho = sys.rho
    if (rho @ q @ rho + q).norm() > 1e-12 * max(1.0, q.norm()):
        raise AssertionError("rho-conjugation does not negate qhat")
    worst = 0.0
    for s in s_grid:
        g0 = sys.supertrace(q @ sys.heat(sys.d_rs(0.0, s)))
        g1 = sys.supertrace(q @ sys.heat(sys.d_rs(1.0, s)))
        worst = max(worst, abs(g0 + g1))
    return worst


# ---------------------------------------------------------------------------
# coefficient extraction
# ---------------------------------------------------------------------------

def _coupling_trace(sys: DoubledSystem, zeta: complex) -> complex:
    """G(zeta) = tau(Gamma qhat exp(-(D0^2 + zeta K)))."""
    A = sys.d0 @ sys.d0 + zeta * sys.coupling
    E = _expm_blocks(-1.0 * A)
    return sys.model.trace(sys.gamma @ sys.qhat @ E)


def duhamel_coefficients(sys: DoubledSystem, n_max: int, method: str = "taylor_circle",
                         radius: float | None = None, n_points: int = 64,
                         rng: np.random.Generator | None = None,
                         samples: int = 20000):
    """Taylor coefficients c_n of G(zeta) = tau(Gamma qhat exp(-(D0^2 + zeta K))).

    taylor_circle    trapezoid rule on |zeta| = radius (default 1; entire
                     function, so aliasing is negligible while a small
                     radius would amplify roundoff by radius^-n).
    divided_difference
                     c_n = (-1)^n tau(Gamma qhat int_simplex
                     exp(-t0 D0^2) K ... K exp(-tn D0^2) dt), contracted
                     against divided differences of exp.  n <= 5.
    monte_carlo      same simplex integrals sampled uniformly; returns
                     (coefficients, standard errors).
    """
    if method == "taylor_circle":
        rho = 1.0 if radius is None else float(radius)
        thetas = 2.0 * np.pi * np.arange(n_points) / n_points
        gs = np.array([_coupling_trace(sys, rho * np.exp(1j * th)) for th in thetas])
        ns = np.arange(n_max + 1)
        phases = np.exp(-1j * np.outer(ns, thetas))
        cs = (phases @ gs) / (n_points * rho**ns)
        return cs
    A = sys.d0 @ sys.d0
    pre = sys.gamma @ sys.qhat
    K = sys.coupling
    if method == "divided_difference":
        out = [complex(sys.model.trace(pre @ _expm_blocks(-1.0 * A)))]
        for n in range(1, n_max + 1):
            out.append((-1.0) ** n * simplex_exp_chain(A, [K] * n, pre=pre))
        return np.array(out, dtype=complex)
    if method == "monte_carlo":
        if rng is None:
            raise ValueError("monte_carlo needs an rng")
        vals = [complex(sys.model.trace(pre @ _expm_blocks(-1.0 * A)))]
        errs = [0.0]
        for n in range(1, n_max + 1):
            m, se = simplex_exp_chain_mc(A, [K] * n, samples, rng, pre=pre)
            vals.append((-1.0) ** n * m)
            errs.append(se)
        return np.array(vals, dtype=complex), np.array(errs)
    raise ValueError(f"unknown method {method!r}")


def _base_chain_factors(sys: DoubledSystem, k: int, lead_inverse: bool):
    """Alternating commutator chain on the base space.

    lead_inverse: prefactor u^-1 and first factor [D, u]; otherwise the
    roles of u and u^-1 are swapped."""
    D, u = sys.D, sys.u
    uinv = u.adjoint()
    cu = commutator(D, u)
    cui = commutator(D, uinv)
    if lead_inverse:
        pre, first, second = uinv, cu, cui
    else:
        pre, first, second = u, cui, cu
    Bs = [first if j % 2 == 0 else second for j in range(2 * k + 1)]
    return pre, Bs


def jlo_term(sys: DoubledSystem, k: int, method: str = "simplex",
             coefficients: np.ndarray | None = None) -> float:
    """k-th summand of the pairing series: the simplex integral of the
    alternating base-space chain tr{u^-1 e^(-t0 D^2) [D,u] ... e^(-t D^2)}.

    method "simplex" contracts on the base space (k <= 2); method
    "coefficients" recovers the same number as (-1)^k c_{2k+1} / 4 from
    the coupling-trace coefficients.
    """
    if method == "simplex":
        if k > 2:
            raise ValueError("simplex route is limited to k <= 2")
        pre, Bs = _base_chain_factors(sys, k, lead_inverse=True)
        A = sys.D @ sys.D
        return float(np.real(simplex_exp_chain(A, Bs, pre=pre)))
    if method == "coefficients":
        cs = coefficients
        if cs is None:
            cs = duhamel_coefficients(sys, 2 * k + 1, method="taylor_circle")
        return float(np.real((-1.0) ** k * cs[2 * k + 1] / 4.0))
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class JloSeries:
    value: float
    terms: np.ndarray
    partial_sums: np.ndarray
    converged: bool


def jlo_series_sf(sys: DoubledSystem, k_max: int = 16, tol: float = 1e-8) -> JloSeries:
    """Flow of D -> u D u* as (1/sqrt(pi)) sum_k (-1)^k k! * term_k.

    The terms come from one coefficient circle.  Summation stops when
    two consecutive weighted terms drop below tol; if the roundoff
    floor of the coefficients (amplified by k!) sits above tol, the
    weighted terms bottom out and start growing again, and the sum is
    truncated at the smallest term, as for any asymptotic expansion.
    The k!-weighted terms peak near k = ||K||^2 / 4 before decaying,
    so in double precision the series is only usable for moderate
    coupling norms."""
    cs = duhamel_coefficients(sys, 2 * k_max + 1, method="taylor_circle")
    terms, sums, weighted = [], [], []
    total, small_streak, converged = 0.0, 0, False
    for k in range(k_max + 1):
        t_k = jlo_term(sys, k, method="coefficients", coefficients=cs)
        w_k = (-1.0) ** k * factorial(k) * t_k / np.sqrt(np.pi)
        total += w_k
        terms.append(t_k)
        sums.append(total)
        weighted.append(abs(w_k))
        small_streak = small_streak + 1 if abs(w_k) < tol else 0
        if small_streak >= 2:
            converged = True
            break
    if not converged and len(weighted) > 2:
        # asymptotic truncation: the magnitudes decay to the roundoff
        # floor (amplified by k!) and then grow again, so cut where the
        # series is quietest; pairing adjacent magnitudes keeps a single
        # anomalously small term in the noise region from winning
        pair = np.array(weighted[:-1]) + np.array(weighted[1:])
        best = int(np.argmin(pair))
        total = sums[best]
        terms, sums = terms[:best + 1], sums[:best + 1]
        converged = weighted[best] < tol
    return JloSeries(total, np.array(terms), np.array(sums), converged)


def cocycle_antisymmetry_check(sys: DoubledSystem, k: int) -> float:
    """|chain(u^-1 leading) + chain(u leading)|; the coboundary identity
    makes the two orderings exact negatives."""
    if k > 1:
        raise ValueError("antisymmetry check is limited to k <= 1")
    A = sys.D @ sys.D
    pre1, Bs1 = _base_chain_factors(sys, k, lead_inverse=True)
    pre2, Bs2 = _base_chain_factors(sys, k, lead_inverse=False)
    v1 = simplex_exp_chain(A, Bs1, pre=pre1)
    v2 = simplex_exp_chain(A, Bs2, pre=pre2)
    return abs(complex(v1).real + complex(v2).real)
