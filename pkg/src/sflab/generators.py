"""Seeded random instances used by the CLI scenarios and the tests."""
from __future__ import annotations

import numpy as np

from .algebra import BlockOperator, SemifiniteModel
from .paths import PiecewisePath

__all__ = [
    "random_selfadjoint",
    "random_unitary",
    "random_projection",
    "random_path",
    "dirac_circle",
]


def random_selfadjoint(model: SemifiniteModel, rng: np.random.Generator,
                       scale: float = 1.0) -> BlockOperator:
    out = []
    for d in model.dims:
        a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        out.append(scale * 0.5 * (a + a.conj().T) / np.sqrt(d))
    return BlockOperator(model, tuple(out))


def random_unitary(model: SemifiniteModel, rng: np.random.Generator) -> BlockOperator:
    out = []
    for d in model.dims:
        a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        qmat, rmat = np.linalg.qr(a)
        out.append(qmat * (np.diag(rmat) / np.abs(np.diag(rmat))))
    return BlockOperator(model, tuple(out))


def random_projection(model: SemifiniteModel, rng: np.random.Generator,
                      ranks=None) -> BlockOperator:
    """Random orthogonal projection with the given per-block ranks
    (ranks drawn uniformly when omitted)."""
    u = random_unitary(model, rng)
    out = []
    for i, d in enumerate(model.dims):
        r = int(rng.integers(0, d + 1)) if ranks is None else int(ranks[i])
        diag = np.zeros(d)
        diag[:r] = 1.0
        out.append(u.blocks[i] @ np.diag(diag) @ u.blocks[i].conj().T)
    return BlockOperator(model, tuple(out))


def random_path(model: SemifiniteModel, rng: np.random.Generator, n_nodes: int = 2,
                scale: float = 1.0) -> PiecewisePath:
    nodes = tuple(random_selfadjoint(model, rng, scale) for _ in range(n_nodes))
    return PiecewisePath(nodes)


def dirac_circle(m: int) -> tuple[SemifiniteModel, BlockOperator, BlockOperator]:
    """Mode truncation of the circle: D = diag(-m..m), u the cyclic mode
    shift (wrap-around keeps u exactly unitary)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    n = 2 * m + 1
    model = SemifiniteModel(((n, 1.0),))
    D = model.diag([np.arange(-m, m + 1, dtype=float)])
    shift = np.zeros((n, n), dtype=complex)
    for j in range(n):
        shift[(j + 1) % n, j] = 1.0
    u = BlockOperator(model, (shift,))
    return model, D, u
