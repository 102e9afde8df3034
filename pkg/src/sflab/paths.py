"""Operator paths and the bounded transform.

Paths are piecewise linear: a base operator plus a chain of segments,
each linear in the path parameter.  Unbounded paths carry self-adjoint
D-type operators; bounded paths carry contractions F with 1 - F^2 >= 0.
The bounded transform F = D (1 + D^2)^(-1/2) maps one to the other, and
its exact parameter derivative comes from the divided-difference kernel.
A slower resolvent-integral form of the same derivative is kept as an
independent cross-check.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import BlockOperator, SemifiniteModel, hermitize
from .calculus import (DEFAULT_QUAD, QuadratureSpec, _quad_vec, eigendecompose,
                       frechet_derivative, func_calc)

__all__ = [
    "PiecewisePath",
    "linear_path",
    "conjugation_path",
    "bounded_transform",
    "transform_path",
    "transform_derivative_resolvent",
    "eta_family_value",
    "eta_family_derivative",
    "sign_endpoint",
    "positive_projection",
]

KERNEL_TOL = 1e-9


@dataclass(frozen=True)
class PiecewisePath:
    """Piecewise-linear path t -> A(t) on [0, 1].

    ``nodes`` are the operators at the segment endpoints; segment i
    interpolates linearly between nodes[i] and nodes[i+1] over an equal
    share of the parameter interval.
    """

    nodes: tuple[BlockOperator, ...]

    def __post_init__(self):
        if len(self.nodes) < 2:
            raise ValueError("a path needs at least two nodes")
        model = self.nodes[0].model
        for nd in self.nodes[1:]:
            nd._check_model(model)

    @property
    def model(self) -> SemifiniteModel:
        return self.nodes[0].model

    @property
    def n_segments(self) -> int:
        return len(self.nodes) - 1

    def segment_intervals(self) -> list[tuple[float, float]]:
        n = self.n_segments
        return [(i / n, (i + 1) / n) for i in range(n)]

    def _locate(self, t: float) -> tuple[int, float]:
        if not (0.0 <= t <= 1.0):
            raise ValueError("path parameter must lie in [0, 1]")
        n = self.n_segments
        i = min(int(t * n), n - 1)
        return i, t * n - i

    def value(self, t: float) -> BlockOperator:
        i, s = self._locate(t)
        return self.nodes[i] + s * (self.nodes[i + 1] - self.nodes[i])

    def derivative(self, t: float) -> BlockOperator:
        i, _ = self._locate(t)
        return self.n_segments * (self.nodes[i + 1] - self.nodes[i])

    @property
    def start(self) -> BlockOperator:
        return self.nodes[0]

    @property
    def end(self) -> BlockOperator:
        return self.nodes[-1]

    def reversed(self) -> "PiecewisePath":
        return PiecewisePath(tuple(reversed(self.nodes)))


def linear_path(A: BlockOperator, B: BlockOperator) -> PiecewisePath:
    return PiecewisePath((A, B))


def conjugation_path(D: BlockOperator, u: BlockOperator) -> PiecewisePath:
    """Linear path from D to u D u*."""
    return PiecewisePath((D, u @ D @ u.adjoint()))


def bounded_transform(D: BlockOperator) -> BlockOperator:
    """F = D (1 + D^2)^(-1/2); a self-adjoint strict contraction."""
    return func_calc(D, lambda x: x / np.sqrt(1.0 + x * x))


@dataclass(frozen=True)
class TransformedPath:
    """Bounded image of an unbounded path under D -> D(1+D^2)^(-1/2).

    value/derivative are exact: the derivative pushes the D-velocity
    through the divided differences of the transform.
    """

    base: PiecewisePath

    @property
    def model(self) -> SemifiniteModel:
        return self.base.model

    def segment_intervals(self):
        return self.base.segment_intervals()

    def value(self, t: float) -> BlockOperator:
        return bounded_transform(self.base.value(t))

    def derivative(self, t: float) -> BlockOperator:
        D = self.base.value(t)
        dD = self.base.derivative(t)
        return frechet_derivative(
            D, dD,
            lambda x: x / np.sqrt(1.0 + x * x),
            lambda x: (1.0 + x * x) ** -1.5,
        )

    @property
    def start(self) -> BlockOperator:
        return self.value(0.0)

    @property
    def end(self) -> BlockOperator:
        return self.value(1.0)


def transform_path(base: PiecewisePath) -> TransformedPath:
    return TransformedPath(base)


def transform_derivative_resolvent(D: BlockOperator, dD: BlockOperator,
                                   spec: QuadratureSpec = DEFAULT_QUAD) -> BlockOperator:
    """Resolvent-integral form of d/dt D_t (1 + D_t^2)^(-1/2).

    (1/pi) int_0^inf lam^(-1/2) [ (1+D^2+lam)^(-1) (1+lam) dD (1+D^2+lam)^(-1)
        - D (1+D^2+lam)^(-1) dD D (1+D^2+lam)^(-1) ] dlam.

    Redundant with the divided-difference route; kept as an independent
    validation target.
    """
    model = D.model
    D = hermitize(D)
    out = []
    for (d, _), Db, dDb in zip(model.blocks, D.blocks, dD.blocks):
        eye = np.eye(d)
        D2 = Db @ Db

        def g(lam, Db=Db, dDb=dDb, D2=D2, eye=eye):
            # substitute lam = u^2 to kill the lam^(-1/2) endpoint singularity
            u = lam
            lam = u * u
            R = np.linalg.inv(eye + D2 + lam * eye)
            term = R @ ((1.0 + lam) * dDb) @ R - (Db @ R) @ dDb @ (Db @ R)
            return 2.0 * term  # u^(-1) * term * d(lam) = 2 term du

        val, _ = _quad_vec(g, 0.0, np.inf, spec)
        out.append(val / np.pi)
    return BlockOperator(model, tuple(out))


def eta_family_value(D: BlockOperator, s: float) -> BlockOperator:
    """F_s = D (s + D^2)^(-1/2) for s > 0; the s -> 0 limit is sign(D)
    with sign(0) = 0 (the kernel survives in the limit)."""
    if s < 0:
        raise ValueError("s must be >= 0")
    if s == 0.0:
        nrm = max(D.norm(), 1.0)
        return func_calc(D, lambda x: np.where(np.abs(x) <= KERNEL_TOL * nrm, 0.0, np.sign(x)))
    return func_calc(D, lambda x: x / np.sqrt(s + x * x))


def eta_family_derivative(D: BlockOperator, s: float) -> BlockOperator:
    """d/ds F_s = -(1/2) D (s + D^2)^(-3/2)."""
    if s <= 0:
        raise ValueError("s must be > 0")
    return func_calc(D, lambda x: -0.5 * x * (s + x * x) ** -1.5)


def sign_endpoint(F: BlockOperator, kernel_tol: float = KERNEL_TOL) -> BlockOperator:
    """Spectral sign with the +1 convention on the (near-)kernel."""
    nrm = max(F.norm(), 1.0)
    return func_calc(F, lambda x: np.where(x >= -kernel_tol * nrm, 1.0, -1.0))


def positive_projection(F: BlockOperator, kernel_tol: float = KERNEL_TOL) -> BlockOperator:
    """Spectral projection onto [0, inf), kernel included."""
    nrm = max(F.norm(), 1.0)
    return func_calc(F, lambda x: np.where(x >= -kernel_tol * nrm, 1.0, 0.0))


def near_kernel_flag(F: BlockOperator, kernel_tol: float = KERNEL_TOL) -> bool:
    """True when some eigenvalue sits inside the sign-convention band."""
    eig = eigendecompose(F)
    nrm = max(F.norm(), 1.0)
    return any(np.any(np.abs(lam) <= kernel_tol * nrm) for lam in eig.eigenvalues)
