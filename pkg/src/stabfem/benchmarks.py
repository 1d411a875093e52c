"""The benchmark catalog, reference solutions and error measures.

Relative errors are table-style nodal measures:
norms are taken over the nodal values, ``||phi - phi_h|| / ||phi||`` with the
Euclidean norm for ``l2_rel`` and the maximum norm for ``max_rel``. A
quadrature-based L2 norm is available for convergence studies through
:func:`field_errors`.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .assembly import CrankNicolson, ProblemSpec, SchemeOperator, constant_field, solve_system
from .discretization import build_line_mesh, build_quad_mesh, gauss_rule, ElementGeometry
from .errors import InvalidArgumentError
from .stabilization import SchemeConfig

BENCHMARK_NAMES = (
    "1d-steady",
    "1d-transient-hill",
    "2d-steady-case1",
    "2d-steady-case2",
    "2d-transient-irrotational",
    "2d-transient-rotational",
    "2d-heat",
)
STEADY_ANGLES = (22.5, 45.0, 67.5)


def diffusivity_from_peclet(pe, speed=1.0, length=1.0):
    """``D = L |u| / Pe`` for the unit reference length and speed of the benchmarks."""
    if not pe > 0:
        raise InvalidArgumentError("Peclet number must be positive")
    return length * speed / pe


# --- reference solutions --------------------------------------------------

def exact_1d_steady(x, u, D):
    """Exact solution of ``u phi' = D phi''`` on [0, 1] with phi(0)=0, phi(1)=1."""
    if not D > 0:
        raise InvalidArgumentError("D must be positive")
    x = np.asarray(x, dtype=float)
    r = u / D
    if r == 0.0:
        return x.copy()
    if r > 0:
        # (e^{r x} - 1)/(e^r - 1) rewritten with e^{r(x-1)} to avoid overflow
        return (np.exp(r * (x - 1.0)) - np.exp(-r)) / (-np.expm1(-r))
    return np.expm1(r * x) / np.expm1(r)


def sine_hill(x, width=math.pi / 10):
    """``sin^2(pi x / width)`` on [0, width], zero elsewhere."""
    x = np.asarray(x, dtype=float)
    return np.where((x >= 0) & (x <= width), np.sin(math.pi * x / width) ** 2, 0.0)


def cosine_hill(x, center, radius):
    """``(1 + cos(pi r / radius)) / 2`` for ``r <= radius``, zero elsewhere."""
    x = np.atleast_2d(x)
    r = np.linalg.norm(x - np.asarray(center, dtype=float), axis=1)
    return np.where(r <= radius, 0.5 * (1.0 + np.cos(math.pi * np.minimum(r / radius, 1.0))), 0.0)


# --- error measures -------------------------------------------------------

@dataclass(frozen=True)
class ErrorReport:
    l2_rel: float
    max_rel: float


@dataclass
class HillTrace:
    """Maximum nodal value after every step, step 0 included."""

    maxima: list = field(default_factory=list)

    def record(self, phi):
        self.maxima.append(float(np.max(phi)))

    @property
    def n_steps(self):
        return len(self.maxima) - 1

    @property
    def retention(self):
        return self.maxima[-1] / self.maxima[0]


def _as_phi(field_or_array):
    return np.asarray(getattr(field_or_array, "phi", field_or_array), dtype=float)


def error_norms(phi_h, reference, mesh=None, t=0.0):
    """Relative nodal l2 and max errors against a reference.

    ``reference`` is either an array of nodal values or a callable
    ``reference(x, t)`` evaluated at the mesh nodes.
    """
    phi_h = _as_phi(phi_h)
    if callable(reference):
        ref = np.asarray(reference(mesh.nodes, t), dtype=float)
    else:
        ref = np.asarray(reference, dtype=float)
    if ref.shape != phi_h.shape:
        raise InvalidArgumentError("reference and solution sizes differ")
    n2 = np.linalg.norm(ref)
    ninf = np.abs(ref).max()
    if n2 == 0.0 or ninf == 0.0:
        raise ZeroDivisionError("reference solution has zero norm")
    e = ref - phi_h
    return ErrorReport(float(np.linalg.norm(e) / n2), float(np.abs(e).max() / ninf))


def field_errors(mesh, phi_h, exact, grad_exact=None, n_gauss=4):
    """Absolute L2 and gradient (H1-seminorm) errors by quadrature.

    A rule with ``n_gauss`` points per direction is used so that the error
    integrals are not biased by superconvergence points of the 2-point rule.
    """
    geo = ElementGeometry(mesh, gauss_rule(mesh.dim, n_gauss))
    ne, nq, nen, dim = geo.dN.shape
    pe = _as_phi(phi_h)[mesh.elements]
    vals = np.einsum("qa,ea->eq", geo.N, pe)
    pts = geo.xq.reshape(-1, dim)
    ex = np.asarray(exact(pts), dtype=float).reshape(ne, nq)
    l2 = math.sqrt(float(np.sum(geo.wdet * (ex - vals) ** 2)))
    if grad_exact is None:
        return l2, None
    grads = np.einsum("eqai,ea->eqi", geo.dN, pe)
    gex = np.asarray(grad_exact(pts), dtype=float).reshape(ne, nq, dim)
    h1 = math.sqrt(float(np.sum(geo.wdet * np.sum((gex - grads) ** 2, axis=2))))
    return l2, h1


def transient_error_norms(trace, reference_maxima):
    """Relative l2 and max errors of the tracked hill maxima over all steps."""
    hm = np.asarray(getattr(trace, "maxima", trace), dtype=float)
    ref = np.asarray(reference_maxima, dtype=float)
    if ref.ndim and ref.shape != hm.shape:
        raise InvalidArgumentError("trace and reference lengths differ")
    ref = np.broadcast_to(ref, hm.shape)
    n2 = np.linalg.norm(ref)
    ninf = np.abs(ref).max()
    if n2 == 0.0:
        raise ZeroDivisionError("reference trace is zero")
    d = ref - hm
    return float(np.linalg.norm(d) / n2), float(np.abs(d).max() / ninf)


# --- catalog --------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkCase:
    """One benchmark experiment.

    ``mesh`` is a recipe ``("line", n, (x0, x1))`` or
    ``("quad", nx, ny, ((x0, x1), (y0, y1)))``. ``problem`` and ``reference``
    are built from ``params`` by the case factory; see :func:`get_case`.
    ``advective`` marks transport problems for which the micromorphic scale
    ``k_tilde`` defaults to 0.
    """

    name: str
    mesh: tuple
    problem: ProblemSpec
    steady: bool = True
    dt: float = 0.0
    n_steps: int = 0
    snapshots: tuple = ()
    reference: Optional[Callable] = None
    track_hill: bool = False
    advective: bool = False
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.steady:
            if not self.dt > 0:
                raise InvalidArgumentError("transient case needs dt > 0")
            if any(s > self.n_steps for s in self.snapshots):
                raise InvalidArgumentError("snapshot beyond the last step")

    def build_mesh(self):
        kind = self.mesh[0]
        if kind == "line":
            _, n, (x0, x1) = self.mesh
            return build_line_mesh(n, x0, x1)
        _, nx, ny, bounds = self.mesh
        return build_quad_mesh(nx, ny, bounds)

    @property
    def n_elems(self):
        return self.mesh[1] if self.mesh[0] == "line" else self.mesh[1] * self.mesh[2]

    def default_scheme(self, scheme):
        """Fill ``k_tilde`` for advective cases when the caller left it unset."""
        if scheme.kind == "mmad" and scheme.k_tilde is None and self.advective:
            return replace(scheme, k_tilde=0.0)
        return scheme


def _zero(x, t=0.0):
    return np.zeros(len(np.atleast_2d(x)))


def _one(x, t=0.0):
    return np.ones(len(np.atleast_2d(x)))


def _case_1d_steady(pe_h=1e6, D=None, elements=100, **_):
    D = diffusivity_from_peclet(pe_h) if D is None else D
    problem = ProblemSpec(
        velocity=constant_field([1.0]),
        D=D,
        dirichlet=[("left", _zero), ("right", _one)],
    )
    if D > 0:
        reference = lambda x, t=0.0: exact_1d_steady(np.atleast_2d(x)[:, 0], 1.0, D)
    else:
        # pure advection limit: zero up to the outflow node
        reference = lambda x, t=0.0: np.where(np.atleast_2d(x)[:, 0] >= 1.0, 1.0, 0.0)
    return BenchmarkCase(
        name="1d-steady",
        mesh=("line", elements, (0.0, 1.0)),
        problem=problem,
        reference=reference,
        params=dict(pe_h=pe_h, D=D, elements=elements),
    )


def _case_1d_hill(D=1e-6, elements=100, dt=0.005, n_steps=120, **_):
    velocity = 1.0
    hill = lambda x, t=0.0: sine_hill(np.atleast_2d(x)[:, 0] - velocity * t)
    problem = ProblemSpec(
        velocity=constant_field([velocity]),
        D=D,
        dirichlet=[("left", _zero)],
        initial=lambda x: hill(x, 0.0),
    )
    return BenchmarkCase(
        name="1d-transient-hill",
        mesh=("line", elements, (0.0, 1.0)),
        problem=problem,
        steady=False,
        dt=dt,
        n_steps=n_steps,
        snapshots=(0, 60, 100),
        reference=hill,
        track_hill=True,
        advective=True,
        params=dict(D=D, elements=elements),
    )


def _steady_2d(case, theta_deg=45.0, pe_h=1e6, D=None, elements=40, jump=0.2, **_):
    D = diffusivity_from_peclet(pe_h) if D is None else D
    th = math.radians(theta_deg)
    u = np.array([math.cos(th), math.sin(th)])
    left = lambda x, t=0.0: np.where(np.atleast_2d(x)[:, 1] <= jump + 1e-12, 1.0, 0.0)
    dirichlet = [("bottom", _one), ("left", left)]
    if case == 2:
        dirichlet += [("right", _zero), ("top", _zero)]

    def reference(x, t=0.0):
        x = np.atleast_2d(x)
        # signed distance side of the streamline through (0, jump)
        side = u[0] * (x[:, 1] - jump) - u[1] * x[:, 0]
        ref = np.where(side <= 1e-12, 1.0, 0.0)
        if case == 2:
            out = (x[:, 0] >= 1.0 - 1e-12) | (x[:, 1] >= 1.0 - 1e-12)
            inflow = (x[:, 1] <= 1e-12) | (x[:, 0] <= 1e-12)
            ref = np.where(out & ~inflow, 0.0, ref)
        return ref

    return BenchmarkCase(
        name=f"2d-steady-case{case}",
        mesh=("quad", elements, elements, ((0.0, 1.0), (0.0, 1.0))),
        problem=ProblemSpec(velocity=constant_field(u), D=D, dirichlet=dirichlet),
        reference=reference,
        params=dict(theta_deg=theta_deg, pe_h=pe_h, D=D, elements=elements),
    )


def _case_irrotational(D=1e-6, elements=120, dt=0.1, n_steps=80, radius=1.0, **_):
    center = np.array([-3.0, 0.0])
    u = np.array([1.0, 0.0])
    hill = lambda x, t=0.0: cosine_hill(np.atleast_2d(x) - u * t, center, radius)
    problem = ProblemSpec(
        velocity=constant_field(u),
        D=D,
        dirichlet=[("left", _zero)],
        initial=lambda x: hill(x, 0.0),
    )
    return BenchmarkCase(
        name="2d-transient-irrotational",
        mesh=("quad", elements, elements, ((-5.0, 5.0), (-5.0, 5.0))),
        problem=problem,
        steady=False,
        dt=dt,
        n_steps=n_steps,
        snapshots=(0, 40, 80),
        reference=hill,
        track_hill=True,
        advective=True,
        params=dict(D=D, elements=elements, radius=radius),
    )


def _case_rotational(D=1e-6, elements=40, n_steps=64, radius=0.25, **_):
    center = np.array([-0.5, 0.0])

    def velocity(x):
        x = np.atleast_2d(x)
        return np.column_stack([-x[:, 1], x[:, 0]])

    def hill(x, t=0.0):
        x = np.atleast_2d(x)
        c, s = math.cos(t), math.sin(t)
        # rotate back by angle t
        back = np.column_stack([c * x[:, 0] + s * x[:, 1], -s * x[:, 0] + c * x[:, 1]])
        return cosine_hill(back, center, radius)

    problem = ProblemSpec(
        velocity=velocity,
        D=D,
        dirichlet=[("left", _zero)],
        initial=lambda x: hill(x, 0.0),
    )
    return BenchmarkCase(
        name="2d-transient-rotational",
        mesh=("quad", elements, elements, ((-1.0, 1.0), (-1.0, 1.0))),
        problem=problem,
        steady=False,
        dt=2 * math.pi / 64,
        n_steps=n_steps,
        snapshots=(0, 32, 64),
        reference=hill,
        track_hill=True,
        advective=True,
        params=dict(D=D, elements=elements, radius=radius),
    )


def _case_heat(D=1e-6, elements=None, dt=0.05, n_steps=200, **_):
    nx, ny = (80, 20) if elements is None else (4 * elements, elements)
    wall = lambda x, t=0.0: 100.0 * math.sin(2 * math.pi / 5 * t) * np.ones(len(np.atleast_2d(x)))
    problem = ProblemSpec(
        velocity=constant_field([1.0, 0.5]),
        D=D,
        dirichlet=[("left", wall), ("bottom", _zero), ("top", _zero), ("right", _zero)],
    )
    return BenchmarkCase(
        name="2d-heat",
        mesh=("quad", nx, ny, ((0.0, 4.0), (0.0, 1.0))),
        problem=problem,
        steady=False,
        dt=dt,
        n_steps=n_steps,
        snapshots=(50, 100, 200),
        params=dict(D=D, elements=ny),
    )


_FACTORIES = {
    "1d-steady": _case_1d_steady,
    "1d-transient-hill": _case_1d_hill,
    "2d-steady-case1": lambda **kw: _steady_2d(1, **kw),
    "2d-steady-case2": lambda **kw: _steady_2d(2, **kw),
    "2d-transient-irrotational": _case_irrotational,
    "2d-transient-rotational": _case_rotational,
    "2d-heat": _case_heat,
}


def get_case(name, **params):
    """Build a benchmark case, overriding its default parameters.

    Unset (None) parameters keep their defaults.
    """
    if name not in _FACTORIES:
        raise InvalidArgumentError(
            f"unknown benchmark {name!r}; valid: {', '.join(BENCHMARK_NAMES)}"
        )
    params = {k: v for k, v in params.items() if v is not None}
    return _FACTORIES[name](**params)


def catalog():
    return [get_case(name) for name in BENCHMARK_NAMES]


# --- running --------------------------------------------------------------

@dataclass
class BenchmarkResult:
    case: BenchmarkCase
    scheme: SchemeConfig
    mesh: object
    snapshots: dict  # step -> SolutionField
    errors: dict  # step -> ErrorReport
    trace: Optional[HillTrace] = None
    et: Optional[tuple] = None
    wall_ms: float = 0.0

    @property
    def final_error(self):
        if not self.errors:
            return None
        return self.errors[max(self.errors)]


def run_benchmark(case, scheme, reference_errors=True):
    """Solve one case with one scheme and evaluate its metrics."""
    start = time.perf_counter()
    scheme = case.default_scheme(scheme)
    mesh = case.build_mesh()
    op = SchemeOperator(mesh, scheme, case.problem)
    snapshots, errors = {}, {}
    trace = None
    et = None
    if case.steady:
        sol = solve_system(op.system(0.0), 0.0)
        snapshots[0] = sol
        if case.reference is not None and reference_errors:
            errors[0] = error_norms(sol, case.reference, mesh)
    else:
        stepper = CrankNicolson(op, case.dt)
        state = stepper.initial_state(0.0)
        trace = HillTrace() if case.track_hill else None
        for n in range(case.n_steps + 1):
            if n > 0:
                state = stepper.step(state)
                # keep the step time exact instead of accumulating dt
                state.time = n * case.dt
            if trace is not None:
                trace.record(state.phi)
            if n in case.snapshots:
                snapshots[n] = state
                if case.reference is not None and reference_errors:
                    errors[n] = error_norms(state, case.reference, mesh, t=n * case.dt)
        if trace is not None:
            et = transient_error_norms(trace, np.ones(len(trace.maxima)))
    wall_ms = 1e3 * (time.perf_counter() - start)
    return BenchmarkResult(case, scheme, mesh, snapshots, errors, trace, et, wall_ms)
