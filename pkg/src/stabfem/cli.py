"""Command-line front end.

Runs a catalog benchmark (or a small inline steady problem) with one or
more schemes and writes solution fields, error tables and hill traces.

Configuration documents are JSON objects with the keys listed in
``CONFIG_KEYS``; see the README for the grammar and the output schemas.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assembly import ProblemSpec, SchemeOperator, constant_field, solve_system
from .benchmarks import BENCHMARK_NAMES, STEADY_ANGLES, BenchmarkResult, get_case, run_benchmark
from .discretization import build_line_mesh, build_quad_mesh
from .errors import ConfigParseError, ConfigurationError, ConvergenceError, SingularSystemError
from .io import ensure_dir, write_csv, write_nodal_csv, write_vtk
from .stabilization import SCHEMES, SchemeConfig

ERRORS_HEADER = ["benchmark", "scheme", "theta", "l2_rel", "max_rel", "et_l2", "et_max", "wall_ms"]
TRACE_HEADER = ["step", "time", "max_phi", "reference_max"]
EMIT_CHOICES = ("vtk", "csv", "table")
CONFIG_KEYS = (
    "benchmark",
    "problem",
    "scheme",
    "theta_deg",
    "pe_h",
    "diffusivity",
    "penalty",
    "k_tilde",
    "elements",
    "out_dir",
    "emit",
)
STEADY_BENCHMARKS = ("1d-steady", "2d-steady-case1", "2d-steady-case2")
ANGLE_BENCHMARKS = ("2d-steady-case1", "2d-steady-case2")
MAX_ELEMENTS = 4000
DEFAULT_PE_H = 1e6

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SOLVER = 4


@dataclass(frozen=True)
class RunConfig:
    """Validated run description.

    Exactly one of ``benchmark`` and ``problem`` is set. ``schemes`` and
    ``thetas`` are swept as a product; ``thetas`` is ``(None,)`` for cases
    without a flow angle.
    """

    benchmark: Optional[str] = None
    problem: Optional[dict] = None
    schemes: tuple = ("mmad",)
    thetas: tuple = (None,)
    pe_h: Optional[float] = None
    diffusivity: Optional[float] = None
    penalty: Optional[float] = None
    k_tilde: Optional[float] = None
    elements: Optional[int] = None
    out_dir: str = "out"
    emit: frozenset = field(default_factory=lambda: frozenset(EMIT_CHOICES))

    @property
    def label(self):
        return self.benchmark if self.benchmark is not None else "inline"


# --- parsing --------------------------------------------------------------

def _as_list(value):
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


def _number(doc, key, lo=None, hi=None, positive=False, integer=False):
    if key not in doc or doc[key] is None:
        return None
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigurationError(f"{key} must be a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigurationError(f"{key} must be an integer, got {v!r}")
    if not math.isfinite(v):
        raise ConfigurationError(f"{key} must be finite")
    if positive and not v > 0:
        raise ConfigurationError(f"{key} must be positive, got {v!r}")
    if lo is not None and v < lo or hi is not None and v > hi:
        raise ConfigurationError(f"{key} must lie in [{lo}, {hi}], got {v!r}")
    return int(v) if integer else float(v)


def validate(doc):
    """Build a :class:`RunConfig` from a decoded mapping, filling defaults."""
    if not isinstance(doc, dict):
        raise ConfigurationError("configuration must be a JSON object")
    unknown = sorted(set(doc) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigurationError(
            f"unknown keys {unknown}; valid keys: {', '.join(CONFIG_KEYS)}"
        )
    bench = doc.get("benchmark")
    problem = doc.get("problem")
    if (bench is None) == (problem is None):
        raise ConfigurationError("exactly one of 'benchmark' and 'problem' must be given")
    if bench is not None and bench not in BENCHMARK_NAMES:
        raise ConfigurationError(
            f"unknown benchmark {bench!r}; valid benchmarks: {', '.join(BENCHMARK_NAMES)}"
        )
    if problem is not None:
        _check_problem(problem)

    schemes = []
    for s in _as_list(doc.get("scheme", "mmad")):
        try:
            schemes.append(SchemeConfig(str(s)).kind)
        except ConfigurationError:
            raise ConfigurationError(
                f"unknown scheme {s!r}; valid schemes: {', '.join(SCHEMES)}"
            ) from None
    if not schemes:
        raise ConfigurationError("at least one scheme is required")

    thetas = (None,)
    if doc.get("theta_deg") is not None:
        if bench not in ANGLE_BENCHMARKS:
            raise ConfigurationError(
                f"theta_deg applies only to {', '.join(ANGLE_BENCHMARKS)}"
            )
        vals = []
        for t in _as_list(doc["theta_deg"]):
            try:
                t = float(t)
            except (TypeError, ValueError):
                raise ConfigurationError(f"theta_deg entries must be numbers, got {t!r}") from None
            if not 0.0 <= t <= 90.0:
                raise ConfigurationError(f"theta_deg must lie in [0, 90], got {t}")
            vals.append(t)
        thetas = tuple(vals)
    elif bench in ANGLE_BENCHMARKS:
        thetas = (45.0,)

    pe_h = _number(doc, "pe_h", positive=True)
    D = _number(doc, "diffusivity", lo=0.0)
    if pe_h is not None and D is not None:
        raise ConfigurationError("give either pe_h or diffusivity, not both")
    if pe_h is not None and bench not in STEADY_BENCHMARKS:
        raise ConfigurationError(f"pe_h applies only to {', '.join(STEADY_BENCHMARKS)}")
    if problem is not None and D is not None:
        raise ConfigurationError("set the diffusivity of an inline problem inside 'problem'")
    if bench in STEADY_BENCHMARKS and pe_h is None and D is None:
        pe_h = DEFAULT_PE_H

    emit = doc.get("emit", list(EMIT_CHOICES))
    emit = frozenset(str(e) for e in _as_list(emit))
    bad = sorted(emit - set(EMIT_CHOICES))
    if bad:
        raise ConfigurationError(f"unknown outputs {bad}; valid: {', '.join(EMIT_CHOICES)}")

    out_dir = doc.get("out_dir", "out")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigurationError("out_dir must be a non-empty string")

    return RunConfig(
        benchmark=bench,
        problem=problem,
        schemes=tuple(schemes),
        thetas=thetas,
        pe_h=pe_h,
        diffusivity=D,
        penalty=_number(doc, "penalty", lo=0.0),
        k_tilde=_number(doc, "k_tilde", lo=0.0),
        elements=_number(doc, "elements", lo=1, hi=MAX_ELEMENTS, integer=True),
        out_dir=out_dir,
        emit=emit,
    )


def parse_config(text):
    """Parse and validate a JSON configuration document.

    Raises
    ------
    ConfigParseError
        Malformed JSON; carries the 1-based line and column.
    ConfigurationError
        Well-formed but invalid content.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(exc.msg, exc.lineno, exc.colno) from None
    return validate(doc)


_PROBLEM_KEYS = ("mesh", "velocity", "D", "source", "dirichlet", "neumann")


def _check_problem(p):
    if not isinstance(p, dict):
        raise ConfigurationError("'problem' must be an object")
    unknown = sorted(set(p) - set(_PROBLEM_KEYS))
    if unknown:
        raise ConfigurationError(f"unknown problem keys {unknown}; valid: {', '.join(_PROBLEM_KEYS)}")
    mesh = p.get("mesh")
    if not isinstance(mesh, dict) or mesh.get("kind") not in ("line", "quad"):
        raise ConfigurationError("problem.mesh must be an object with kind 'line' or 'quad'")
    dim = 1 if mesh["kind"] == "line" else 2
    vel = _as_list(p.get("velocity", [0.0] * dim))
    if len(vel) != dim:
        raise ConfigurationError(f"problem.velocity needs {dim} components")
    if not isinstance(p.get("D", 0.0), (int, float)) or p.get("D", 0.0) < 0:
        raise ConfigurationError("problem.D must be a non-negative number")
    names = ("left", "right") if dim == 1 else ("left", "right", "bottom", "top")
    for key in ("dirichlet", "neumann"):
        for name in p.get(key, {}):
            if name not in names:
                raise ConfigurationError(
                    f"problem.{key} boundary {name!r} unknown; valid: {', '.join(names)}"
                )


def _inline_problem(p):
    """Mesh and :class:`ProblemSpec` of an inline constant-coefficient problem."""
    m = p["mesh"]
    if m["kind"] == "line":
        x0, x1 = m.get("bounds", [0.0, 1.0])
        mesh = build_line_mesh(int(m.get("elements", 10)), x0, x1)
    else:
        n = m.get("elements", [10, 10])
        nx, ny = (n, n) if isinstance(n, int) else n
        mesh = build_quad_mesh(int(nx), int(ny), tuple(tuple(b) for b in m.get("bounds", [[0, 1], [0, 1]])))
    src = p.get("source")
    spec = ProblemSpec(
        velocity=constant_field(_as_list(p.get("velocity", [0.0] * mesh.dim))),
        D=float(p.get("D", 0.0)),
        source=None if src is None else constant_field(src),
        dirichlet=[(k, constant_field(v)) for k, v in p.get("dirichlet", {}).items()],
        neumann=[(k, constant_field(v)) for k, v in p.get("neumann", {}).items()],
    )
    return mesh, spec


# --- running --------------------------------------------------------------

def _scheme(config, kind):
    return SchemeConfig(kind, penalty=config.penalty, k_tilde=config.k_tilde)


def _run_one(config, kind, theta):
    if config.benchmark is not None:
        case = get_case(
            config.benchmark,
            theta_deg=theta,
            pe_h=config.pe_h,
            D=config.diffusivity,
            elements=config.elements,
        )
        return run_benchmark(case, _scheme(config, kind))
    mesh, spec = _inline_problem(config.problem)
    start = time.perf_counter()
    scheme = _scheme(config, kind)
    sol = solve_system(SchemeOperator(mesh, scheme, spec).system(0.0))
    wall = 1e3 * (time.perf_counter() - start)
    return BenchmarkResult(None, scheme, mesh, {0: sol}, {}, wall_ms=wall)


def _errors_row(config, kind, theta, res):
    err = res.final_error
    et = res.et if res.et is not None else ("", "")
    return [
        config.label,
        kind,
        "" if theta is None else theta,
        "" if err is None else err.l2_rel,
        "" if err is None else err.max_rel,
        et[0],
        et[1],
        f"{res.wall_ms:.3f}",
    ]


def _write_fields(config, res, run_dir):
    mesh = res.mesh
    for step, sol in sorted(res.snapshots.items()):
        if mesh.dim == 1:
            if "csv" in config.emit:
                write_nodal_csv(mesh, sol.phi, sol.g, os.path.join(run_dir, f"solution_step{step}.csv"))
            continue
        if "vtk" not in config.emit:
            continue
        fields = {"phi": sol.phi}
        if sol.g is not None:
            fields["g_x"] = sol.g[:, 0]
            fields["g_y"] = sol.g[:, 1]
            fields["g_magnitude"] = np.linalg.norm(sol.g, axis=1)
        case = res.case
        if case is not None and case.reference is not None:
            fields["reference"] = case.reference(mesh.nodes, step * case.dt)
        write_vtk(mesh, fields, os.path.join(run_dir, f"solution_step{step}.vtk"))


def _write_trace(res, run_dir):
    case = res.case
    rows = [
        [n, n * case.dt, m, 1.0] for n, m in enumerate(res.trace.maxima)
    ]
    write_csv(os.path.join(run_dir, "hill_trace.csv"), TRACE_HEADER, rows)


def format_table(config, records):
    """Text table of relative errors, schemes by rows.

    Steady angle sweeps get one ``L2 / max`` column pair per angle; other
    runs list the final snapshot errors and the hill-tracking norms.
    """
    lines = [f"{config.label}: relative errors"]
    width = max(12, *(len(k) + 2 for k in config.schemes))

    def num(v):
        if v is None:
            return "-"
        return f"{v:.1e}" if 0 < abs(v) < 1e-4 else f"{v:.4f}"

    if config.thetas != (None,):
        top = " " * width + "".join(f"| theta={t:g}".ljust(24) for t in config.thetas)
        sub = "scheme".ljust(width) + "| L2         max        " * len(config.thetas)
        lines += [top, sub, "-" * len(sub)]
        for kind in config.schemes:
            cells = []
            for t in config.thetas:
                r = records.get((kind, t))
                e = None if r is None else r.final_error
                body = "failed" if e is None else f"{num(e.l2_rel):<11}{num(e.max_rel):<11}"
                cells.append(f"| {body:<22}")
            lines.append(kind.ljust(width) + "".join(cells))
        return "\n".join(lines) + "\n"
    head = "scheme".ljust(width) + "| L2        | max       | et_L2     | et_max    "
    lines += [head, "-" * len(head)]

    def cell(v):
        return "| " + num(v).ljust(10)

    for kind in config.schemes:
        r = records.get((kind, None))
        if r is None:
            lines.append(kind.ljust(width) + "| failed")
            continue
        e = r.final_error
        et = r.et or (None, None)
        lines.append(
            kind.ljust(width)
            + cell(None if e is None else e.l2_rel)
            + cell(None if e is None else e.max_rel)
            + cell(et[0])
            + cell(et[1])
        )
    return "\n".join(lines) + "\n"


def run(config, stdout=None, stderr=None):
    """Execute every (scheme, angle) combination and write the artifacts.

    Returns the process exit status: 0 when every run solved to tolerance
    and every requested file was written, otherwise nonzero.
    """
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        ensure_dir(config.out_dir)
    except OSError as exc:
        print(f"error: cannot create output directory: {exc}", file=stderr)
        return EXIT_IO

    combos = [(k, t) for k in config.schemes for t in config.thetas]
    records = {}
    rows = []
    status = EXIT_OK
    for kind, theta in combos:
        try:
            res = _run_one(config, kind, theta)
        except (SingularSystemError, ConvergenceError) as exc:
            residual = getattr(exc, "residual", None)
            print(
                f"error: solver failed for scheme={kind} theta={theta}: {exc}\n"
                f"  SolveReport(relative_residual={residual}, method='lu')",
                file=stderr,
            )
            status = EXIT_SOLVER
            continue
        records[(kind, theta)] = res
        rows.append(_errors_row(config, kind, theta, res))
        # one subdirectory per run when sweeping, so files never collide
        if len(combos) == 1:
            run_dir = config.out_dir
        else:
            tag = kind if theta is None else f"{kind}_theta{theta:g}"
            run_dir = os.path.join(config.out_dir, tag)
        try:
            ensure_dir(run_dir)
            _write_fields(config, res, run_dir)
            if res.trace is not None and "csv" in config.emit:
                _write_trace(res, run_dir)
        except OSError as exc:
            print(f"error: writing outputs failed: {exc}", file=stderr)
            return EXIT_IO

    try:
        if "csv" in config.emit:
            write_csv(os.path.join(config.out_dir, "errors.csv"), ERRORS_HEADER, rows)
        if "table" in config.emit:
            table = format_table(config, records)
            with open(os.path.join(config.out_dir, "table.txt"), "w") as fh:
                fh.write(table)
            stdout.write(table)
    except OSError as exc:
        print(f"error: writing outputs failed: {exc}", file=stderr)
        return EXIT_IO
    return status


# --- argument handling ----------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(
        prog="stabfem",
        description="Run stabilized convection-diffusion benchmarks.",
    )
    p.add_argument("--benchmark", choices=BENCHMARK_NAMES)
    p.add_argument("--scheme", help=f"comma-separated list from: {', '.join(SCHEMES)}")
    p.add_argument("--theta-deg", help="flow angle(s) in degrees, comma separated, or 'all'")
    p.add_argument("--pe-h", type=float, help="element Peclet number (steady cases)")
    p.add_argument("--diffusivity", type=float, help="diffusivity D (overrides the case default)")
    p.add_argument("--penalty", type=float, help="MZAD penalty p (default: element size)")
    p.add_argument("--k-tilde", type=float, help="MMAD auxiliary scale")
    p.add_argument("--elements", type=int, help="elements per side")
    p.add_argument("--out-dir", help="output directory (default: out)")
    p.add_argument("--emit", help="comma-separated outputs from: vtk, csv, table")
    p.add_argument("--config", help="JSON configuration file; its keys override flags")
    return p


def _flags_to_doc(ns):
    doc = {}
    if ns.benchmark is not None:
        doc["benchmark"] = ns.benchmark
    if ns.scheme is not None:
        doc["scheme"] = ns.scheme
    if ns.theta_deg is not None:
        doc["theta_deg"] = list(STEADY_ANGLES) if ns.theta_deg == "all" else ns.theta_deg
    for key in ("pe_h", "diffusivity", "penalty", "k_tilde", "elements", "out_dir", "emit"):
        v = getattr(ns, key)
        if v is not None:
            doc[key] = v
    return doc


def main(argv=None):
    ns = build_parser().parse_args(argv)
    doc = _flags_to_doc(ns)
    try:
        if ns.config is not None:
            try:
                with open(ns.config) as fh:
                    text = fh.read()
            except OSError as exc:
                print(f"error: cannot read config: {exc}", file=sys.stderr)
                return EXIT_IO
            try:
                file_doc = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigParseError(exc.msg, exc.lineno, exc.colno) from None
            if not isinstance(file_doc, dict):
                raise ConfigurationError("configuration must be a JSON object")
            if "benchmark" in file_doc or "problem" in file_doc:
                doc.pop("benchmark", None)
                doc.pop("problem", None)
            doc.update(file_doc)
        if "benchmark" not in doc and "problem" not in doc:
            raise ConfigurationError(
                f"no benchmark given; valid benchmarks: {', '.join(BENCHMARK_NAMES)}"
            )
        config = validate(doc)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
