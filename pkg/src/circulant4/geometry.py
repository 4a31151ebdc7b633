"""Pointwise Levi-Civita geometry of a single chart.

A :class:`ManifoldSpec` holds the metric and structure components as
expressions. :func:`frame_at` evaluates everything needed downstream at one
point: metric, inverse, first derivatives, Christoffel symbols, covariant
derivatives of ``Q`` and ``P = Q^2``, and the (0,4) curvature tensor. All
derivatives are symbolic, so curvature carries no finite-difference error.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from . import expr as ex
from .tensor import DIM, SingularError, leading_minors, mat_inverse, mat_power, max_abs

Grid = tuple[tuple[ex.Expr, ...], ...]

MINOR_FLOOR = 1e-12
Q4_TOL = 1e-10
COMPAT_TOL = 1e-10
SYMMETRY_TOL = 1e-12
RETRY_CAP = 100


class PointError(ValueError):
    """The geometry is not admissible (or not computable) at a point."""


class SamplingError(RuntimeError):
    """No admissible point found within the retry cap."""


def as_grid(rows: Sequence[Sequence[ex.Expr | float | str]]) -> Grid:
    """Normalise a 4x4 nested sequence of expressions, numbers or strings."""
    if len(rows) != DIM or any(len(r) != DIM for r in rows):
        raise ValueError("expected a 4x4 array")

    def conv(v):
        if isinstance(v, str):
            return ex.parse(v)
        if isinstance(v, (int, float, np.floating, np.integer)):
            return ex.const(float(v))
        return v

    return tuple(tuple(conv(v) for v in r) for r in rows)


def constant_grid(m: np.ndarray) -> Grid:
    return tuple(tuple(ex.const(float(m[i, j])) for j in range(DIM)) for i in range(DIM))


def grid_product(a: Grid, b: Grid) -> Grid:
    """Symbolic matrix product with constant folding."""
    rows = []
    for i in range(DIM):
        row = []
        for j in range(DIM):
            acc: ex.Expr = ex.ZERO
            for l in range(DIM):
                acc = ex.add(acc, ex.mul(a[i][l], b[l][j]))
            row.append(acc)
        rows.append(tuple(row))
    return tuple(rows)


def eval_grid(grid: Grid, p) -> np.ndarray:
    return np.array([[ex.evaluate(e, p) for e in row] for row in grid])


def _grid_partials(grid: Grid) -> tuple[Grid, ...]:
    """``out[m][i][j] = d grid[i][j] / dx_{m+1}``."""
    return tuple(
        tuple(tuple(ex.differentiate(e, m + 1) for e in row) for row in grid)
        for m in range(DIM)
    )


@dataclass(frozen=True)
class ManifoldSpec:
    """Metric ``g_ij`` and structure ``Q^k_j`` components on a sampling box.

    ``q_exprs[k][j]`` is the component ``Q^k_j``; the default is the constant
    circulant shift (see :func:`circulant4.circulant.canonical_Q`).
    """

    g_exprs: Grid
    q_exprs: Grid
    domain: tuple[tuple[float, float], ...]
    label: str = ""
    coords: tuple[str, ...] = field(default=("x1", "x2", "x3", "x4"))

    def __post_init__(self):
        if len(self.domain) != DIM:
            raise ValueError("domain needs one interval per coordinate")
        for lo, hi in self.domain:
            if not lo <= hi:
                raise ValueError(f"empty interval [{lo}, {hi}]")

    @functools.cached_property
    def dg_exprs(self) -> tuple[Grid, ...]:
        return _grid_partials(self.g_exprs)

    @functools.cached_property
    def d2g_exprs(self) -> dict[tuple[int, int, int, int], ex.Expr]:
        """Second partials keyed by ``(m, n, i, j)`` with ``m <= n`` and ``i <= j``."""
        out = {}
        for m in range(DIM):
            for n in range(m, DIM):
                for i in range(DIM):
                    for j in range(i, DIM):
                        out[m, n, i, j] = ex.differentiate(self.dg_exprs[m][i][j], n + 1)
        return out

    @functools.cached_property
    def p_exprs(self) -> Grid:
        return grid_product(self.q_exprs, self.q_exprs)

    @functools.cached_property
    def _field_partials(self) -> dict[Grid, tuple[Grid, ...]]:
        return {}

    def partials(self, grid: Grid) -> tuple[Grid, ...]:
        cache = self._field_partials
        if grid not in cache:
            cache[grid] = _grid_partials(grid)
        return cache[grid]

    def scaled(self, c: float) -> "ManifoldSpec":
        """Same spec with the metric multiplied by the constant ``c``."""
        k = ex.const(c)
        g = tuple(tuple(ex.mul(k, e) for e in row) for row in self.g_exprs)
        return ManifoldSpec(g, self.q_exprs, self.domain, f"{self.label}*{c:g}")


@dataclass(frozen=True)
class GeometryFrame:
    point: np.ndarray
    g: np.ndarray
    ginv: np.ndarray
    dg: np.ndarray  # dg[k, i, j] = d_k g_ij
    gamma: np.ndarray  # gamma[i, j, k] = Gamma^k_ij
    Q: np.ndarray
    P: np.ndarray
    dQ: np.ndarray  # dQ[i, k, j] = d_i Q^k_j
    dP: np.ndarray
    nablaQ: np.ndarray  # nablaQ[i, j, k] = ((nabla_i Q) e_j)^k
    nablaP: np.ndarray
    R: np.ndarray  # R[i, j, k, l] = g(R(e_i, e_j) e_k, e_l)


def _eval_partials(partials: tuple[Grid, ...], p) -> np.ndarray:
    return np.array([eval_grid(pg, p) for pg in partials])


def christoffel(ginv: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """``gamma[i, j, k] = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij)``."""
    first_kind = 0.5 * (dg + dg.transpose(1, 0, 2) - dg.transpose(1, 2, 0))
    gamma = np.einsum("kl,ijl->ijk", ginv, first_kind)
    # exact symmetry in the lower pair
    return 0.5 * (gamma + gamma.transpose(1, 0, 2))


def covariant_derivative(X: np.ndarray, dX: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Components of ``(nabla_i X) e_j`` for a (1,1) field.

    ``out[i, j, k] = d_i X^k_j + Gamma^k_{il} X^l_j - Gamma^l_{ij} X^k_l``.
    """
    partial = dX.transpose(0, 2, 1)
    rotate = np.einsum("ilk,lj->ijk", gamma, X)
    shift = np.einsum("ijl,kl->ijk", gamma, X)
    return partial + rotate - shift


def curvature(g, ginv, dg, d2g, gamma) -> np.ndarray:
    """(0,4) curvature ``R[i, j, k, m] = g_lm R^l_ijk`` with
    ``R^l_ijk = d_i Gamma^l_jk - d_j Gamma^l_ik + Gamma^l_im Gamma^m_jk - Gamma^l_jm Gamma^m_ik``.
    """
    first_kind = 0.5 * (dg + dg.transpose(1, 0, 2) - dg.transpose(1, 2, 0))
    # d2g[m, a, i, j] = d_m d_a g_ij
    d_first = 0.5 * (
        d2g + d2g.transpose(0, 2, 1, 3) - d2g.transpose(0, 2, 3, 1)
    )  # d_m Gamma_{ijl}: [m, i, j, l]
    dginv = -np.einsum("ka,mab,bl->mkl", ginv, dg, ginv)
    dgamma = np.einsum("mkl,ijl->mijk", dginv, first_kind) + np.einsum(
        "kl,mijl->mijk", ginv, d_first
    )
    # dgamma[i, j, k, l] = d_i Gamma^l_jk
    quad = np.einsum("iml,jkm->ijkl", gamma, gamma)
    r_up = dgamma - dgamma.transpose(1, 0, 2, 3) + quad - quad.transpose(1, 0, 2, 3)
    return np.einsum("lm,ijkl->ijkm", g, r_up)


def _check_metric(g: np.ndarray, p) -> None:
    scale = max_abs(g)
    if max_abs(g - g.T) > SYMMETRY_TOL * max(1.0, scale):
        raise PointError(f"metric not symmetric at {list(p)}")
    minors = leading_minors(g)
    if min(minors) <= MINOR_FLOOR:
        raise PointError(f"metric not positive definite at {list(p)} (minors {minors})")


def _check_structure(g: np.ndarray, Q: np.ndarray, p) -> None:
    if max_abs(mat_power(Q, 4) - np.eye(DIM)) > Q4_TOL:
        raise PointError(f"Q^4 != id at {list(p)}")
    if max_abs(Q.T @ g @ Q - g) > COMPAT_TOL * max(1.0, max_abs(g)):
        raise PointError(f"Q is not an isometry of g at {list(p)}")


def _metric_data(spec: ManifoldSpec, p):
    g = eval_grid(spec.g_exprs, p)
    _check_metric(g, p)
    ginv = mat_inverse(g)
    dg = _eval_partials(spec.dg_exprs, p)
    return g, ginv, dg


def frame_at(spec: ManifoldSpec, p: Sequence[float]) -> GeometryFrame:
    """All pointwise geometric data at ``p``; raises :class:`PointError` if inadmissible."""
    p = np.asarray(p, dtype=float)
    try:
        g, ginv, dg = _metric_data(spec, p)
        Q = eval_grid(spec.q_exprs, p)
        _check_structure(g, Q, p)
        P = eval_grid(spec.p_exprs, p)
        dQ = _eval_partials(spec.partials(spec.q_exprs), p)
        dP = _eval_partials(spec.partials(spec.p_exprs), p)
        d2g = np.empty((DIM,) * 4)
        for (m, n, i, j), e in spec.d2g_exprs.items():
            v = ex.evaluate(e, p)
            d2g[m, n, i, j] = d2g[n, m, i, j] = d2g[m, n, j, i] = d2g[n, m, j, i] = v
    except (ex.EvalError, SingularError) as exc:
        raise PointError(f"{exc} at {list(p)}") from exc
    gamma = christoffel(ginv, dg)
    return GeometryFrame(
        point=p,
        g=g,
        ginv=ginv,
        dg=dg,
        gamma=gamma,
        Q=Q,
        P=P,
        dQ=dQ,
        dP=dP,
        nablaQ=covariant_derivative(Q, dQ, gamma),
        nablaP=covariant_derivative(P, dP, gamma),
        R=curvature(g, ginv, dg, d2g, gamma),
    )


def nabla_of_field(spec: ManifoldSpec, fld, p: Sequence[float]) -> np.ndarray:
    """Covariant derivative components ``[i, j, k]`` of an arbitrary (1,1) field."""
    grid = as_grid(fld)
    p = np.asarray(p, dtype=float)
    try:
        g, ginv, dg = _metric_data(spec, p)
        X = eval_grid(grid, p)
        dX = _eval_partials(spec.partials(grid), p)
    except (ex.EvalError, SingularError) as exc:
        raise PointError(f"{exc} at {list(p)}") from exc
    return covariant_derivative(X, dX, christoffel(ginv, dg))


def metricity_residual(frame: GeometryFrame) -> float:
    """``max |d_k g_ij - Gamma^l_ki g_lj - Gamma^l_kj g_il|``."""
    t1 = np.einsum("kil,lj->kij", frame.gamma, frame.g)
    t2 = np.einsum("kjl,il->kij", frame.gamma, frame.g)
    return max_abs(frame.dg - t1 - t2)


def curvature_symmetry_residuals(R: np.ndarray) -> dict[str, float]:
    """Relative residuals of the algebraic curvature symmetries."""
    scale = max(max_abs(R), 1e-300)
    return {
        "antisym_12": max_abs(R + R.transpose(1, 0, 2, 3)) / scale,
        "antisym_34": max_abs(R + R.transpose(0, 1, 3, 2)) / scale,
        "pair_sym": max_abs(R - R.transpose(2, 3, 0, 1)) / scale,
        "bianchi": max_abs(R + R.transpose(1, 2, 0, 3) + R.transpose(2, 0, 1, 3)) / scale,
    }


def sample_points(
    spec: ManifoldSpec,
    n_points: int,
    seed: int,
    compute: Callable[[ManifoldSpec, np.ndarray], object] = frame_at,
    retry_cap: int = RETRY_CAP,
    map_fn: Callable = map,
) -> Iterator[tuple[np.ndarray, object]]:
    """Yield ``n_points`` accepted ``(point, compute(spec, point))`` pairs.

    Candidates are drawn uniformly from the box with ``numpy``'s default
    generator; a candidate whose ``compute`` raises :class:`PointError` is
    discarded. ``map_fn`` may evaluate candidates concurrently (e.g.
    ``ThreadPoolExecutor.map``); acceptance still walks candidates in draw
    order, so output depends only on ``seed``.
    """
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    rng = np.random.default_rng(seed)
    lo = np.array([a for a, _ in spec.domain])
    hi = np.array([b for _, b in spec.domain])

    def attempt(pt):
        try:
            return pt, compute(spec, pt)
        except PointError as exc:
            return pt, exc

    accepted = failures = 0
    while accepted < n_points:
        batch = [lo + (hi - lo) * rng.random(DIM) for _ in range(n_points - accepted)]
        for pt, result in map_fn(attempt, batch):
            if isinstance(result, PointError):
                failures += 1
                if failures >= retry_cap:
                    raise SamplingError(
                        f"{spec.label or 'spec'}: {retry_cap} consecutive rejected points "
                        f"(last: {result})"
                    )
                continue
            failures = 0
            accepted += 1
            yield pt, result
            if accepted == n_points:
                return
