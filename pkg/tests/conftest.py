from pathlib import Path

import numpy as np
import pytest

from circulant4.circulant import CirculantMetricSpec, to_manifold_spec
from circulant4.cli import load_spec
from circulant4.geometry import eval_grid

ROOT = Path(__file__).resolve().parent.parent
SPEC_DIR = ROOT / "specs"
DATA_DIR = Path(__file__).resolve().parent / "data"

BOX = [(-0.5, 0.5)] * 4

# every curved spec in specs/ except the flat one
CURVED = ["curved", "curved_shear", "trig", "product", "parallel_q", "conformal", "rotated_general"]
CORPUS = ["flat"] + CURVED


def circ_spec(A, B, C, box=BOX, label=""):
    return to_manifold_spec(CirculantMetricSpec.from_strings(A, B, C, box, label))


def corpus_spec(name):
    spec, _ = load_spec(SPEC_DIR / f"{name}.toml")
    return spec


def random_points(spec, n, seed):
    rng = np.random.default_rng(seed)
    lo = np.array([a for a, _ in spec.domain])
    hi = np.array([b for _, b in spec.domain])
    return [lo + (hi - lo) * rng.random(4) for _ in range(n)]


# -- finite-difference oracles, independent of the symbolic path --------------

def fd_metric_derivative(spec, p, h=1e-5):
    """dg[k, i, j] by central differences of the evaluated metric."""
    p = np.asarray(p, dtype=float)
    out = np.empty((4, 4, 4))
    for k in range(4):
        step = np.zeros(4)
        step[k] = h
        out[k] = (eval_grid(spec.g_exprs, p + step) - eval_grid(spec.g_exprs, p - step)) / (2 * h)
    return out


def fd_christoffel(spec, p, h=1e-5):
    """gamma[i, j, k] = Gamma^k_ij from the textbook loop formula."""
    g = eval_grid(spec.g_exprs, p)
    ginv = np.linalg.inv(g)
    dg = fd_metric_derivative(spec, p, h)
    gamma = np.zeros((4, 4, 4))
    for i in range(4):
        for j in range(4):
            for k in range(4):
                s = 0.0
                for l in range(4):
                    s += 0.5 * ginv[k, l] * (dg[i, j, l] + dg[j, i, l] - dg[l, i, j])
                gamma[i, j, k] = s
    return gamma


def fd_curvature(spec, p, h_outer=1e-4, h_inner=1e-5):
    """R[i, j, k, m] with every derivative taken by finite differences."""
    p = np.asarray(p, dtype=float)
    gamma = fd_christoffel(spec, p, h_inner)
    dgamma = np.empty((4, 4, 4, 4))
    for m in range(4):
        step = np.zeros(4)
        step[m] = h_outer
        dgamma[m] = (fd_christoffel(spec, p + step, h_inner) - fd_christoffel(spec, p - step, h_inner)) / (2 * h_outer)
    g = eval_grid(spec.g_exprs, p)
    R = np.zeros((4,) * 4)
    for i in range(4):
        for j in range(4):
            for k in range(4):
                for l in range(4):
                    up = dgamma[i, j, k, l] - dgamma[j, i, k, l]
                    for m in range(4):
                        up += gamma[i, m, l] * gamma[j, k, m] - gamma[j, m, l] * gamma[i, k, m]
                    for m in range(4):
                        R[i, j, k, m] += g[l, m] * up
    return R


@pytest.fixture(scope="session")
def corpus():
    return {name: corpus_spec(name) for name in CORPUS}


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
