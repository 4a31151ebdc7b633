"""Small dense tensors on the 4-dimensional fibre.

Everything is a plain ``numpy`` array of float64. Index conventions, fixed for
the whole package:

* ``Mat4[k, j]``: row ``k``, column ``j``. For an endomorphism this is the
  component ``X^k_j``, so ``apply(X, e_j)`` is column ``j``.
* ``gamma[i, j, k]`` is the Christoffel symbol ``Gamma^k_{ij}``.
* ``nabla[i, j, k]`` is ``((nabla_i X) e_j)^k`` for a (1,1) field ``X``.
* ``F[i, j, k]`` is ``F(e_i, e_j, e_k)``.
* ``R[i, j, k, l]`` is ``R(e_i, e_j, e_k, e_l) = g(R(e_i, e_j) e_k, e_l)``.
"""

from __future__ import annotations

import numpy as np

DIM = 4


class SingularError(ArithmeticError):
    """Matrix is numerically singular."""


def mat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.asarray(a, dtype=float) @ np.asarray(b, dtype=float)


def mat_power(a: np.ndarray, n: int) -> np.ndarray:
    out = np.eye(DIM)
    for _ in range(n):
        out = mat_mul(out, a)
    return out


def mat_inverse(a: np.ndarray) -> np.ndarray:
    """Inverse of a 4x4 matrix.

    Raises :class:`SingularError` when ``|det a| < 1e-12 * max|a_ij|**4``.
    """
    a = np.asarray(a, dtype=float)
    scale = float(np.max(np.abs(a)))
    det = float(np.linalg.det(a))
    if scale == 0.0 or abs(det) < 1e-12 * scale**4:
        raise SingularError(f"singular matrix (det={det:.3e}, scale={scale:.3e})")
    # LAPACK gesv: LU with partial pivoting
    return np.linalg.solve(a, np.eye(DIM))


def apply(a: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.asarray(a, dtype=float) @ np.asarray(v, dtype=float)


def lower(mixed: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``out[i, j, m] = sum_k g[k, m] * mixed[i, j, k]``."""
    return np.einsum("ijk,km->ijm", mixed, g)


def contract_lee(F: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """Lee form ``alpha_k = g^{ij} F[i, j, k]`` (trace over the first two slots)."""
    return np.einsum("ij,ijk->k", ginv, F)


def compose(T: np.ndarray, *mats: np.ndarray | None) -> np.ndarray:
    """Insert endomorphisms into the slots of a covariant tensor.

    ``compose(F, None, Q, Q)[i, j, k] = F(e_i, Q e_j, Q e_k)``; ``None`` leaves a
    slot untouched. Works for any rank.
    """
    if len(mats) != T.ndim:
        raise ValueError(f"need {T.ndim} slot entries, got {len(mats)}")
    out = T
    for slot, m in enumerate(mats):
        if m is None:
            continue
        # X e_j = sum_a X[a, j] e_a
        out = np.moveaxis(np.tensordot(out, m, axes=([slot], [0])), -1, slot)
    return out


def max_abs(a) -> float:
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


def leading_minors(a: np.ndarray) -> list[float]:
    return [float(np.linalg.det(a[:n, :n])) for n in range(1, DIM + 1)]
