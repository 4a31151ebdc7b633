"""F, F-bar, Lee forms, class residuals and the universal identities.

Notation: ``F(x, y, z) = g((nabla_x P) y, z)`` and ``Fb(x, y, z) = g((nabla_x Q) y, z)``
with ``P = Q^2``. All tensors are component arrays in the chart basis, and
``compose`` inserts ``Q``, ``Q^2``, ``Q^3`` or ``P`` into individual slots.

Residual normalisation
----------------------
Every residual is a max-norm divided by a scale that makes it dimensionless and
invariant under ``g -> c g``. The scale is the size of the *ingredients* of the
covariant derivative (partials of the field and Christoffel terms) rather than
of ``nabla P`` itself, so a tensor that vanishes by cancellation shows up as a
round-off sized residual instead of ``0 / 0``::

    s_X     = |dX| + |Gamma| |X|                 (max-norms)
    F-scale = |g| * max(FLOOR, s_P)              class conditions on F or Fb
    Lee     = max(FLOOR, s_P)                    conditions on alpha
    fs      = |Q| * max(FLOOR, s_Q)
    ident   = |g| * max(FLOOR, s_Q, s_P)         identities mixing F and Fb
"""

from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import GeometryFrame, ManifoldSpec, frame_at, sample_points
from .tensor import compose, contract_lee, lower, mat_power, max_abs

FLOOR = 1e-12
DEFAULT_TOL = 1e-8

CLASSES = ("W0", "W1", "W2", "W3")
RESIDUALS = (
    "W0", "W1", "W2", "W3", "fs",
    "W1_bar", "W2_bar", "W3_bar",
    "W1_bar_plus", "W3_bar_qq",
)

IDENTITIES = {
    "f_symmetric": "F(x,y,z) = F(x,z,y)",
    "f_p_anti_invariant": "F(x,Py,Pz) = -F(x,y,z)",
    "fbar_pair_gives_f_qz": "Fb(x,y,z) + Fb(x,Qy,Qz) = F(x,y,Qz)",
    "fbar_pair_gives_f": "Fb(x,y,Q3z) + Fb(x,Qy,z) = F(x,y,z)",
    "fbar_pair_symmetric": "Fb(x,y,Q3z) + Fb(x,Qy,z) = Fb(x,z,Q3y) + Fb(x,Qz,y)",
    "fbar_q_orbit_sum": "sum_m Fb(x,Q^m y,Q^m z) = 0",
    "fbar_q_skew": "Fb(x,y,Qz) = -Fb(x,z,Qy)",
    "fbar_q3_skew": "Fb(x,y,Q3z) = -Fb(x,Q2z,Qy)",
    "r_q_invariant": "R(x,y,Qz,Qu) = R(x,y,z,u)   [when nabla Q = 0]",
    "r_p_tensor": "R(x,y,Pz,Pu) = R(x,y,z,u)   [when F = 0]",
}
UNIVERSAL = tuple(k for k in IDENTITIES if not k.startswith("r_"))


@dataclass(frozen=True)
class PointTensors:
    F: np.ndarray
    Fbar: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    frame: GeometryFrame

    @property
    def g(self) -> np.ndarray:
        return self.frame.g

    @property
    def Q(self) -> np.ndarray:
        return self.frame.Q

    @property
    def P(self) -> np.ndarray:
        return self.frame.P


def point_tensors(spec: ManifoldSpec, p) -> PointTensors:
    frame = frame_at(spec, p)
    return tensors_from_frame(frame)


def tensors_from_frame(frame: GeometryFrame) -> PointTensors:
    F = lower(frame.nablaP, frame.g)
    Fbar = lower(frame.nablaQ, frame.g)
    return PointTensors(
        F=F,
        Fbar=Fbar,
        alpha=contract_lee(F, frame.ginv),
        alpha_bar=contract_lee(Fbar, frame.ginv),
        frame=frame,
    )


# -- scales ---------------------------------------------------------------

def _ingredients(dX: np.ndarray, X: np.ndarray, gamma: np.ndarray) -> float:
    return max_abs(dX) + max_abs(gamma) * max_abs(X)


def f_scale(t: PointTensors) -> float:
    fr = t.frame
    return max_abs(fr.g) * max(FLOOR, _ingredients(fr.dP, fr.P, fr.gamma))


def lee_scale(t: PointTensors) -> float:
    fr = t.frame
    return max(FLOOR, _ingredients(fr.dP, fr.P, fr.gamma))


def identity_scale(t: PointTensors) -> float:
    fr = t.frame
    return max_abs(fr.g) * max(
        FLOOR,
        _ingredients(fr.dP, fr.P, fr.gamma),
        _ingredients(fr.dQ, fr.Q, fr.gamma),
    )


def curvature_scale(t: PointTensors) -> float:
    fr = t.frame
    # |R| is bounded by |g| (|dGamma| + |Gamma|^2); the first term is folded into |R| itself
    return max(FLOOR, max_abs(fr.R), max_abs(fr.g) * max_abs(fr.gamma) ** 2)


# -- building blocks --------------------------------------------------------

def _cyclic(T: np.ndarray) -> np.ndarray:
    """``T(x,y,z) + T(y,z,x) + T(z,x,y)``."""
    return T + np.einsum("jki->ijk", T) + np.einsum("kij->ijk", T)


def _qpowers(t: PointTensors):
    Q = t.Q
    return Q, Q @ Q, mat_power(Q, 3)


def _fbar_as_f(t: PointTensors) -> np.ndarray:
    """``Fb(x,y,Q3z) + Fb(x,Qy,z)``, which equals ``F(x,y,z)``."""
    Q, _, Q3 = _qpowers(t)
    return compose(t.Fbar, None, None, Q3) + compose(t.Fbar, None, Q, None)


def _fbar_as_f_pz(t: PointTensors) -> np.ndarray:
    """``Fb(x,y,Qz) + Fb(x,Qy,Q2z)``, which equals ``F(x,y,Pz)``."""
    Q, Q2, _ = _qpowers(t)
    return compose(t.Fbar, None, None, Q) + compose(t.Fbar, None, Q, Q2)


def _alpha_from_fbar(t: PointTensors) -> np.ndarray:
    """``abar(Q3z) + g^{ij} Fb(e_i, Qe_j, z)``, which equals ``alpha(z)``."""
    Q, _, Q3 = _qpowers(t)
    return t.alpha_bar @ Q3 + contract_lee(compose(t.Fbar, None, Q, None), t.frame.ginv)


def _w1_rhs(g: np.ndarray, alpha: np.ndarray, P: np.ndarray, sign: float = -1.0) -> np.ndarray:
    """``1/4 (g(x,y)a(z) + g(x,z)a(y) + sign*(g(x,Py)a(Pz) + g(x,Pz)a(Py)))``."""
    gP = g @ P
    aP = alpha @ P
    plain = np.einsum("ij,k->ijk", g, alpha)
    twisted = np.einsum("ij,k->ijk", gP, aP)
    return 0.25 * (plain + plain.transpose(0, 2, 1) + sign * (twisted + twisted.transpose(0, 2, 1)))


# -- class residuals on F -----------------------------------------------------

def residual_W0(t: PointTensors) -> float:
    if not np.any(t.frame.nablaP):
        return 0.0
    return max_abs(t.F) / f_scale(t)


def residual_W1(t: PointTensors) -> float:
    return max_abs(t.F - _w1_rhs(t.g, t.alpha, t.P)) / f_scale(t)


def residual_W2(t: PointTensors) -> float:
    cyc = _cyclic(compose(t.F, None, None, t.P))
    return max(max_abs(cyc) / f_scale(t), max_abs(t.alpha) / lee_scale(t))


def residual_W3(t: PointTensors) -> float:
    return max_abs(_cyclic(t.F)) / f_scale(t)


def residual_fs(t: PointTensors) -> float:
    """``(nabla_x Q) Q y + Q (nabla_x Q) y``, relative to the size of ``nabla Q``'s ingredients."""
    fr = t.frame
    if not np.any(fr.nablaQ):
        return 0.0
    term = np.einsum("ilk,lj->ijk", fr.nablaQ, fr.Q) + np.einsum("kl,ijl->ijk", fr.Q, fr.nablaQ)
    return max_abs(term) / (max_abs(fr.Q) * max(FLOOR, _ingredients(fr.dQ, fr.Q, fr.gamma)))


# -- the same conditions written through F-bar ----------------------------------

def residual_W1_bar(t: PointTensors, plus_signs: bool = False) -> float:
    """W1 through ``Fb``; ``alpha`` (from F) and ``abar`` (from Fb) both enter.

    ``plus_signs=True`` uses ``+`` in front of the ``Q^2``-twisted terms,
    which is *not* equivalent to the F-based condition; it is kept for
    comparison only.
    """
    _, Q2, _ = _qpowers(t)
    rhs = _w1_rhs(t.g, t.alpha, Q2, sign=1.0 if plus_signs else -1.0)
    main = max_abs(_fbar_as_f(t) - rhs) / f_scale(t)
    trace = max_abs(_alpha_from_fbar(t) - t.alpha) / lee_scale(t)
    return max(main, trace)


def residual_W2_bar(t: PointTensors) -> float:
    six = _cyclic(_fbar_as_f_pz(t))
    return max(max_abs(six) / f_scale(t), max_abs(_alpha_from_fbar(t)) / lee_scale(t))


def residual_W3_bar(t: PointTensors, qq_last_term: bool = False) -> float:
    """W3 through ``Fb``.

    The cyclic form ends in ``Fb(z,Qx,y)``; ``qq_last_term=True`` uses
    ``Fb(z,Qx,Qy)`` instead, which is reported alongside but not used for the
    verdict.
    """
    Q = t.Q
    Fb = t.Fbar
    G = _fbar_as_f(t)
    total = _cyclic(G)
    if qq_last_term:
        # swap Fb(z,Qx,y) for Fb(z,Qx,Qy); slot order of the [k,i,j] term
        cyclic_term = np.einsum("kij->ijk", compose(Fb, None, Q, None))
        qq = np.einsum("kij->ijk", compose(Fb, None, Q, Q))
        total = total - cyclic_term + qq
    return max_abs(total) / f_scale(t)


# -- identities ---------------------------------------------------------------

def q_parallel_residual(t: PointTensors) -> float:
    fr = t.frame
    if not np.any(fr.nablaQ):
        return 0.0
    return max_abs(fr.nablaQ) / max(FLOOR, _ingredients(fr.dQ, fr.Q, fr.gamma))


def identity_suite(t: PointTensors, tol: float = DEFAULT_TOL) -> dict[str, Optional[float]]:
    """Normalised residual of each identity; ``None`` where its hypothesis fails."""
    F, Fb = t.F, t.Fbar
    Q, Q2, Q3 = _qpowers(t)
    P = t.P
    G = _fbar_as_f(t)
    fbq = compose(Fb, None, None, Q)
    raw = {
        "f_symmetric": F - F.transpose(0, 2, 1),
        "f_p_anti_invariant": compose(F, None, P, P) + F,
        "fbar_pair_gives_f_qz": Fb + compose(Fb, None, Q, Q) - compose(F, None, None, Q),
        "fbar_pair_gives_f": G - F,
        "fbar_pair_symmetric": G - G.transpose(0, 2, 1),
        "fbar_q_orbit_sum": sum(
            compose(Fb, None, mat_power(Q, m), mat_power(Q, m)) for m in range(4)
        ),
        "fbar_q_skew": fbq + fbq.transpose(0, 2, 1),
        "fbar_q3_skew": compose(Fb, None, None, Q3) + compose(Fb, None, Q2, Q).transpose(0, 2, 1),
    }
    scale = identity_scale(t)
    out: dict[str, Optional[float]] = {k: max_abs(v) / scale for k, v in raw.items()}

    R = t.frame.R
    rscale = curvature_scale(t)
    out["r_q_invariant"] = (
        max_abs(compose(R, None, None, Q, Q) - R) / rscale
        if q_parallel_residual(t) <= tol
        else None
    )
    out["r_p_tensor"] = (
        max_abs(compose(R, None, None, P, P) - R) / rscale if residual_W0(t) <= tol else None
    )
    return out


# -- classification -------------------------------------------------------------

@dataclass
class PointRecord:
    index: int
    point: list[float]
    residuals: dict[str, float]
    identities: dict[str, Optional[float]]

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "point": self.point,
            "residuals": self.residuals,
            "identities": self.identities,
        }


@dataclass
class ClassReport:
    label: str
    n_points: int
    seed: int
    tol: float
    points: list[PointRecord]
    aggregates: dict[str, dict[str, float]]
    identity_aggregates: dict[str, dict]
    verdicts: dict[str, str]
    fs_equivalence: dict[str, object]
    normalization: str = "ingredient-scale (see circulant4.classify)"
    floor: float = FLOOR
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "n_points": self.n_points,
            "seed": self.seed,
            "tol": self.tol,
            "floor": self.floor,
            "normalization": self.normalization,
            "verdicts": self.verdicts,
            "fs_equivalence": self.fs_equivalence,
            "aggregates": self.aggregates,
            "identity_aggregates": self.identity_aggregates,
            "points": [p.to_dict() for p in self.points],
        }


def residuals(t: PointTensors) -> dict[str, float]:
    return {
        "W0": residual_W0(t),
        "W1": residual_W1(t),
        "W2": residual_W2(t),
        "W3": residual_W3(t),
        "fs": residual_fs(t),
        "W1_bar": residual_W1_bar(t),
        "W2_bar": residual_W2_bar(t),
        "W3_bar": residual_W3_bar(t),
        "W1_bar_plus": residual_W1_bar(t, plus_signs=True),
        "W3_bar_qq": residual_W3_bar(t, qq_last_term=True),
    }


def _stats(values: list[float]) -> dict[str, float]:
    if not values:
        return {"max": None, "mean": None, "count": 0}
    return {"max": max(values), "mean": math.fsum(values) / len(values), "count": len(values)}


def _verdicts(records: list[PointRecord], tol: float) -> dict[str, str]:
    w0 = [r.residuals["W0"] for r in records]
    out = {"W0": "holds" if max(w0) <= tol else "fails"}
    # where F vanishes the other conditions hold vacuously; judge them elsewhere
    live = [r for r in records if r.residuals["W0"] > tol]
    for name in ("W1", "W2", "W3"):
        if not live:
            out[name] = "indeterminate"
        else:
            worst = max(r.residuals[name] for r in live)
            out[name] = "holds" if worst <= tol else "fails"
    return out


def classify(
    spec: ManifoldSpec,
    n_points: int = 50,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    workers: int = 1,
) -> ClassReport:
    """Sample ``n_points`` admissible points and classify ``(M, P, g)``.

    Raises :class:`circulant4.geometry.SamplingError` if the box has no
    admissible points. The report depends only on ``(spec, n_points, seed,
    tol)``; ``workers`` changes wall time, not output.
    """
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(workers) as pool:
            accepted = list(sample_points(spec, n_points, seed, point_tensors, map_fn=pool.map))
    else:
        accepted = list(sample_points(spec, n_points, seed, point_tensors))

    records = [
        PointRecord(
            index=i,
            point=[float(v) for v in pt],
            residuals=residuals(t),
            identities=identity_suite(t, tol),
        )
        for i, (pt, t) in enumerate(accepted)
    ]

    aggregates = {name: _stats([r.residuals[name] for r in records]) for name in RESIDUALS}
    identity_aggregates = {}
    for name in IDENTITIES:
        vals = [r.identities[name] for r in records if r.identities[name] is not None]
        stats = _stats(vals)
        stats["holds"] = None if not vals else stats["max"] <= tol
        identity_aggregates[name] = stats

    mismatched = [
        r.index for r in records if (r.residuals["W0"] <= tol) != (r.residuals["fs"] <= tol)
    ]
    fs_equivalence = {
        "fs": "holds" if aggregates["fs"]["max"] <= tol else "fails",
        "consistent": not mismatched,
        "mismatched_points": mismatched,
    }
    return ClassReport(
        label=spec.label,
        n_points=n_points,
        seed=seed,
        tol=tol,
        points=records,
        aggregates=aggregates,
        identity_aggregates=identity_aggregates,
        verdicts=_verdicts(records, tol),
        fs_equivalence=fs_equivalence,
    )
