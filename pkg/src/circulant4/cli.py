"""Command-line front end: load a spec file, classify, print a report.

Spec files are TOML::

    [manifold]
    label = "curved"
    mode = "circulant"          # or "general"

    [metric]                    # circulant: A, B, C;  general: g11 .. g44
    A = "2 + x1^2"
    B = "x2/10"
    C = "1"

    [structure]                 # general mode only: q11 .. q44 (Q^k_j = q<k><j>)

    [domain]
    x1 = [-0.5, 0.5]
    x2 = [-0.5, 0.5]
    x3 = [-0.5, 0.5]
    x4 = [-0.5, 0.5]

    [run]
    points = 50
    seed = 0
    tol = 1e-8

Exit status: 0 on success (whatever the verdicts), 1 on a spec error, 2 when
no admissible points can be sampled.
"""

from __future__ import annotations

import argparse
import datetime
import json
import re
import sys
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from . import expr as ex
from .circulant import CirculantMetricSpec, canonical_Q, to_manifold_spec
from .classify import CLASSES, DEFAULT_TOL, IDENTITIES, classify
from .geometry import ManifoldSpec, SamplingError, as_grid
from .tensor import DIM

EXIT_OK, EXIT_SPEC, EXIT_SAMPLING = 0, 1, 2

DEFAULT_POINTS = 50
DEFAULT_SEED = 0


class SpecError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message}" + (f" ({', '.join(where)})" if where else ""))
        self.key = key
        self.line = line


def _line_of(text: str, section: str, key: str) -> int | None:
    current = None
    for n, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*=", s):
            return n
    return None


def _expr(doc_text: str, section: str, key: str, value: Any) -> ex.Expr:
    line = _line_of(doc_text, section, key)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return ex.const(value)
    if not isinstance(value, str):
        raise SpecError(f"expected an expression string in [{section}]", key, line)
    try:
        return ex.parse(value)
    except ex.ParseError as exc:
        raise SpecError(f"cannot parse {value!r}: {exc}", key, line) from exc


def _domain(text: str, doc: dict) -> tuple[tuple[float, float], ...]:
    section = doc.get("domain")
    if not isinstance(section, dict):
        raise SpecError("missing [domain] section", "domain")
    for key in section:
        if key not in {f"x{k}" for k in range(1, DIM + 1)}:
            raise SpecError("unknown key in [domain]", key, _line_of(text, "domain", key))
    out = []
    for k in range(1, DIM + 1):
        key = f"x{k}"
        line = _line_of(text, "domain", key)
        if key not in section:
            raise SpecError("missing domain interval", key)
        iv = section[key]
        if (
            not isinstance(iv, list)
            or len(iv) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in iv)
        ):
            raise SpecError("domain interval must be [min, max]", key, line)
        lo, hi = float(iv[0]), float(iv[1])
        if not lo <= hi:
            raise SpecError(f"empty interval [{lo}, {hi}]", key, line)
        out.append((lo, hi))
    return tuple(out)


def _general_grid(text: str, section_name: str, section: dict, prefix: str, symmetric: bool):
    known = {f"{prefix}{i}{j}" for i in range(1, DIM + 1) for j in range(1, DIM + 1)}
    for key in section:
        if key not in known:
            raise SpecError(f"unknown key in [{section_name}]", key, _line_of(text, section_name, key))
    rows = []
    for i in range(1, DIM + 1):
        row = []
        for j in range(1, DIM + 1):
            key, mirror = f"{prefix}{i}{j}", f"{prefix}{j}{i}"
            if key in section:
                row.append(_expr(text, section_name, key, section[key]))
            elif symmetric and mirror in section:
                row.append(_expr(text, section_name, mirror, section[mirror]))
            elif symmetric and i == j:
                raise SpecError("missing diagonal metric entry", key)
            else:
                row.append(ex.ZERO)
        rows.append(row)
    return as_grid(rows)


def parse_spec(text: str) -> tuple[ManifoldSpec, dict]:
    """Build a :class:`ManifoldSpec` and the ``[run]`` settings from spec text."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise SpecError(f"malformed spec file: {exc}") from exc

    manifold = doc.get("manifold", {})
    label = str(manifold.get("label", ""))
    mode = manifold.get("mode", "circulant")
    metric = doc.get("metric")
    if not isinstance(metric, dict):
        raise SpecError("missing [metric] section", "metric")
    domain = _domain(text, doc)

    if mode == "circulant":
        for key in ("A", "B", "C"):
            if key not in metric:
                raise SpecError(f"circulant metric needs {key}", key)
        extra = set(metric) - {"A", "B", "C"}
        if extra:
            key = sorted(extra)[0]
            raise SpecError("unknown key in [metric]", key, _line_of(text, "metric", key))
        if "structure" in doc:
            raise SpecError("[structure] is only allowed in general mode", "structure")
        cs = CirculantMetricSpec(
            *(_expr(text, "metric", k, metric[k]) for k in ("A", "B", "C")), domain, label
        )
        spec = to_manifold_spec(cs)
    elif mode == "general":
        g = _general_grid(text, "metric", metric, "g", symmetric=True)
        structure = doc.get("structure")
        if structure is None:
            q = as_grid(canonical_Q().tolist())
        else:
            q = _general_grid(text, "structure", structure, "q", symmetric=False)
        spec = ManifoldSpec(g, q, domain, label)
    else:
        raise SpecError(f"unknown mode {mode!r}", "mode", _line_of(text, "manifold", "mode"))

    run = doc.get("run", {})
    settings = {
        "points": run.get("points", DEFAULT_POINTS),
        "seed": run.get("seed", DEFAULT_SEED),
        "tol": float(run.get("tol", DEFAULT_TOL)),
    }
    if not isinstance(settings["points"], int) or settings["points"] < 1:
        raise SpecError("points must be a positive integer", "points")
    if not isinstance(settings["seed"], int):
        raise SpecError("seed must be an integer", "seed")
    return spec, settings


def load_spec(path: str | Path) -> tuple[ManifoldSpec, dict]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SpecError(f"cannot read {path}: {exc}") from exc
    return parse_spec(text)


# -- reports ------------------------------------------------------------------

def run(
    spec: ManifoldSpec,
    points: int = DEFAULT_POINTS,
    seed: int = DEFAULT_SEED,
    tol: float = DEFAULT_TOL,
    check_identities: bool = True,
    workers: int = 1,
) -> dict:
    """Classify ``spec`` and wrap the result with run metadata."""
    report = classify(spec, points, seed, tol, workers=workers)
    body = report.to_dict()
    if not check_identities:
        body["identity_aggregates"] = {}
        for p in body["points"]:
            p["identities"] = {}
    return {
        "tool": "circulant4",
        "version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "label": spec.label,
        "seed": seed,
        "tol": tol,
        "points": points,
        "check_identities": check_identities,
        "report": body,
    }


def to_machine(run_report: dict) -> str:
    return json.dumps(run_report, indent=1, allow_nan=False) + "\n"


def from_machine(text: str) -> dict:
    return json.loads(text)


def _sci(v) -> str:
    return "-" if v is None else f"{v:.2e}"


def to_text(run_report: dict) -> str:
    rep = run_report["report"]
    agg = rep["aggregates"]
    lines = [
        f"circulant4 {run_report['version']}  spec: {run_report['label'] or '(unnamed)'}",
        f"points: {rep['n_points']}  seed: {rep['seed']}  tol: {rep['tol']:.2e}",
        "",
        "class  verdict        max residual  via F-bar",
    ]
    for name in CLASSES:
        bar = agg.get(f"{name}_bar", {}).get("max") if name != "W0" else None
        lines.append(
            f"{name}: {rep['verdicts'][name]:<14} {_sci(agg[name]['max']):<13} {_sci(bar)}"
        )
    fs = rep["fs_equivalence"]
    lines += [
        "",
        f"fs condition: {fs['fs']} (max {_sci(agg['fs']['max'])}); "
        f"W0 <=> fs pointwise: {'consistent' if fs['consistent'] else 'INCONSISTENT'}",
        "non-equivalent F-bar forms (not used for verdicts):",
        f"  W1 with + on the Q2 terms {_sci(agg['W1_bar_plus']['max'])}; "
        f"W3 ending Fb(z,Qx,Qy) {_sci(agg['W3_bar_qq']['max'])}",
    ]
    if rep["identity_aggregates"]:
        lines += ["", "identity                                                     max residual  status"]
        for key, formula in IDENTITIES.items():
            st = rep["identity_aggregates"][key]
            status = "n/a" if st["holds"] is None else ("ok" if st["holds"] else "VIOLATED")
            lines.append(f"  {formula:<58} {_sci(st['max']):<13} {status}")
    return "\n".join(lines) + "\n"


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="circulant4",
        description="Classify (M, P = Q^2, g) for a circulant structure Q and check the F / F-bar identities.",
    )
    parser.add_argument("spec", help="TOML spec file")
    parser.add_argument("--points", type=int, help=f"sample points (default {DEFAULT_POINTS})")
    parser.add_argument("--seed", type=int, help=f"RNG seed (default {DEFAULT_SEED})")
    parser.add_argument("--tol", type=float, help=f"residual tolerance (default {DEFAULT_TOL:g})")
    parser.add_argument("--format", choices=("text", "machine"), default="text")
    parser.add_argument(
        "--check-identities", action=argparse.BooleanOptionalAction, default=True
    )
    parser.add_argument("--workers", type=int, default=1, help="threads for point evaluation")
    parser.add_argument("--scale", type=float, default=None, help="multiply the metric by a constant")
    args = parser.parse_args(argv)

    try:
        spec, settings = load_spec(args.spec)
    except SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    if args.scale is not None:
        if not args.scale > 0:
            print("spec error: --scale must be positive", file=sys.stderr)
            return EXIT_SPEC
        spec = spec.scaled(args.scale)
    for key in ("points", "seed", "tol"):
        if getattr(args, key) is not None:
            settings[key] = getattr(args, key)
    if settings["points"] < 1:
        print("spec error: --points must be >= 1", file=sys.stderr)
        return EXIT_SPEC

    try:
        report = run(
            spec,
            settings["points"],
            settings["seed"],
            settings["tol"],
            check_identities=args.check_identities,
            workers=args.workers,
        )
    except SamplingError as exc:
        print(f"sampling error: {exc}", file=sys.stderr)
        return EXIT_SAMPLING

    sys.stdout.write(to_machine(report) if args.format == "machine" else to_text(report))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
