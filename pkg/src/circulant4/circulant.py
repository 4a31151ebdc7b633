"""The circulant structure and Q-compatible circulant metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .geometry import ManifoldSpec, constant_grid
from .tensor import DIM, max_abs


def canonical_Q() -> np.ndarray:
    """Cyclic shift matrix with ones at (1,2), (2,3), (3,4), (4,1) (1-based).

    Column ``j`` holds ``Q e_j``, so ``Q e_1 = e_4`` and ``Q e_j = e_{j-1}``.
    """
    Q = np.zeros((DIM, DIM))
    for i in range(DIM):
        Q[i, (i + 1) % DIM] = 1.0
    return Q


def circulant(first_row) -> np.ndarray:
    """Matrix whose row ``i`` is ``first_row`` cyclically shifted right by ``i``."""
    c = np.asarray(first_row, dtype=float)
    return np.array([np.roll(c, i) for i in range(DIM)])


def circulant_eigenvalues(A: float, B: float, C: float) -> tuple[float, float, float, float]:
    """Eigenvalues of circ(A, B, C, B), indexed by Fourier mode 0..3."""
    return (A + 2 * B + C, A - C, A - 2 * B + C, A - C)


def compatibility_residual(g: np.ndarray, Q: np.ndarray) -> float:
    """``max |Q^T g Q - g|``, zero iff ``g(Qx, Qy) = g(x, y)``."""
    return max_abs(Q.T @ g @ Q - g)


@dataclass(frozen=True)
class CirculantMetricSpec:
    """Metric ``g = circ(A, B, C, B)`` from three scalar fields."""

    A: ex.Expr
    B: ex.Expr
    C: ex.Expr
    domain: tuple[tuple[float, float], ...]
    label: str = ""

    @classmethod
    def from_strings(cls, A: str, B: str, C: str, domain, label: str = "") -> "CirculantMetricSpec":
        return cls(ex.parse(A), ex.parse(B), ex.parse(C), tuple(map(tuple, domain)), label)


def to_manifold_spec(cs: CirculantMetricSpec) -> ManifoldSpec:
    row = (cs.A, cs.B, cs.C, cs.B)
    g = tuple(tuple(row[(j - i) % DIM] for j in range(DIM)) for i in range(DIM))
    return ManifoldSpec(g, constant_grid(canonical_Q()), tuple(cs.domain), cs.label)
