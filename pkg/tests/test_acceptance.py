"""Acceptance criteria, one check per criterion.

Each ``criterion_N`` returns ``(ok, detail)``; the tests print one
``CRITERION N: PASS|FAIL`` line each and assert ``ok``. Run this file as a
script to print the lines without pytest.
"""
import math
import sys
from functools import lru_cache

import numpy as np
import pytest

from _runs import cached_run
from stabfem.assembly import (
    CrankNicolson,
    ProblemSpec,
    SchemeOperator,
    assemble_mass,
    assemble_steady,
    coercivity_matrix,
    compute_energy_J,
    condense_mzad,
    constant_field,
    solve_steady,
    solve_system,
)
from stabfem.benchmarks import (
    BENCHMARK_NAMES,
    STEADY_ANGLES,
    diffusivity_from_peclet,
    exact_1d_steady,
    field_errors,
    get_case,
    run_benchmark,
)
from stabfem.discretization import Mesh, build_quad_mesh, reference_shape
from stabfem.errors import ConvergenceError, SingularSystemError
from stabfem.sparse_linalg import from_triplets, impose_dirichlet, solve
from stabfem.stabilization import SchemeConfig, element_kbar

HILL_CASES = ("1d-transient-hill", "2d-transient-irrotational", "2d-transient-rotational")


def _zero(x, t=0.0):
    return np.zeros(len(np.atleast_2d(x)))


def _all_edges_zero(u, D, source=None):
    return ProblemSpec(
        velocity=constant_field(u),
        D=D,
        source=source,
        dirichlet=[(n, _zero) for n in ("left", "right", "bottom", "top")],
    )


def _perturbed_mesh(rng, nx, ny, amount):
    base = build_quad_mesh(nx, ny, ((0, 1), (0, 1)))
    nodes = base.nodes.copy()
    inner = np.setdiff1d(np.arange(base.n_nodes), base.boundary_nodes())
    h = min(1.0 / nx, 1.0 / ny)
    nodes[inner] += rng.uniform(-amount * h, amount * h, (len(inner), 2))
    return Mesh(2, nodes, base.elements, dict(base.boundary_sets))


def _steady_phi(name, kind, theta=None, **scheme_params):
    params = () if theta is None else (("theta_deg", theta),)
    return cached_run(name, kind, params, tuple(sorted(scheme_params.items())))


# --- criteria -------------------------------------------------------------

@lru_cache(maxsize=None)
def criterion_1():
    runs = {k: cached_run("1d-steady", k) for k in ("galerkin", "supg", "mmad")}
    g = runs["galerkin"].final_error
    ok = abs(g.l2_rel - 350.07) <= 0.05 * 350.07 and abs(g.max_rel - 49.99) <= 0.05 * 49.99
    for k in ("supg", "mmad"):
        e = runs[k].final_error
        ok &= e.l2_rel <= 1e-3 and e.max_rel <= 1e-3
    # timed on fresh runs so the cache does not hide the cost
    case = get_case("1d-steady")
    wall = max(run_benchmark(case, SchemeConfig(k)).wall_ms for k in runs)
    ok &= wall < 1000.0
    s, m = runs["supg"].final_error, runs["mmad"].final_error
    detail = (
        f"galerkin l2={g.l2_rel:.4f} max={g.max_rel:.4f}; supg l2={s.l2_rel:.1e} max={s.max_rel:.1e}; "
        f"mmad l2={m.l2_rel:.1e} max={m.max_rel:.1e}; slowest run {wall:.1f} ms"
    )
    return ok, detail


@lru_cache(maxsize=None)
def criterion_2():
    worst = 0.0
    for pe in (10.0, 1e3, 1e6):
        case = get_case("1d-steady", pe_h=pe)
        res = run_benchmark(case, SchemeConfig("supg"))
        x = res.mesh.nodes[:, 0]
        exact = exact_1d_steady(x, 1.0, case.problem.D)
        worst = max(worst, float(np.abs(res.snapshots[0].phi - exact)[1:-1].max()))
    return worst <= 1e-6, f"max interior nodal error {worst:.2e} over Pe_h in (10, 1e3, 1e6)"


@lru_cache(maxsize=None)
def criterion_3():
    h = 0.01
    mult = (1, 2, 5, 10)
    over, under, l2 = [], [], []
    for m in mult:
        res = _steady_phi("1d-steady", "mzad", penalty=m * h)
        phi = res.snapshots[0].phi
        over.append(float(phi.max() - 1.0))
        under.append(float(phi.min()))
        l2.append(res.final_error.l2_rel)
    monotone = all(over[i + 1] <= over[i] for i in range(len(over) - 1))
    band = [abs(e - 0.4265) <= 0.25 * 0.4265 for e in l2]
    detail = (
        "p/h=" + ",".join(map(str, mult))
        + "; overshoot=" + ",".join(f"{v:.2e}" for v in over)
        + "; min(phi)=" + ",".join(f"{v:.4f}" for v in under)
        + "; l2=" + ",".join(f"{v:.4f}" for v in l2)
    )
    return monotone and any(band), detail


@lru_cache(maxsize=None)
def criterion_4():
    rng = np.random.default_rng(2024)
    worst = math.inf
    for _ in range(20):
        nx, ny = (int(v) for v in rng.integers(2, 11, 2))
        mesh = _perturbed_mesh(rng, nx, ny, 0.2)
        ang = rng.uniform(0, 2 * math.pi)
        speed = 10 ** rng.uniform(-2, 1)
        D = float(rng.choice([0.0, 1e-6, 1e-3, 1.0]))
        prob = _all_edges_zero([speed * math.cos(ang), speed * math.sin(ang)], D)
        B = coercivity_matrix(mesh, SchemeConfig("mmad", k_tilde=1.0), prob)
        lam = np.linalg.eigvalsh(B).min()
        worst = min(worst, lam / np.linalg.norm(B, 2))
    return worst >= -1e-10, f"min lambda_min/||B|| over 20 meshes = {worst:.3e}"


@lru_cache(maxsize=None)
def criterion_5():
    worst = 0.0
    cases = [get_case("1d-steady")] + [get_case("2d-steady-case1", theta_deg=t) for t in STEADY_ANGLES]
    for case in cases:
        mesh = case.build_mesh()
        p = 1.0 / case.mesh[1]
        coupled = solve_steady(mesh, SchemeConfig("mzad", penalty=p), case.problem)
        condensed = solve_system(condense_mzad(mesh, p, case.problem))
        worst = max(worst, float(np.abs(coupled.phi - condensed.phi).max()))
    return worst <= 1e-8, f"max |phi_coupled - phi_condensed| = {worst:.2e} (1d-steady, case I at 3 angles)"


def _manufactured_errors(n):
    pi = math.pi
    u = np.array([1.0, 1.0])

    def exact(x):
        return np.sin(pi * x[:, 0]) * np.sin(pi * x[:, 1])

    def grad(x):
        return pi * np.column_stack([
            np.cos(pi * x[:, 0]) * np.sin(pi * x[:, 1]),
            np.sin(pi * x[:, 0]) * np.cos(pi * x[:, 1]),
        ])

    def source(x, t=0.0):
        x = np.atleast_2d(x)
        return grad(x) @ u + 2 * pi ** 2 * exact(x)

    mesh = build_quad_mesh(n, n, ((0, 1), (0, 1)))
    sol = solve_steady(mesh, SchemeConfig("mmad"), _all_edges_zero(u, 1.0, source=source))
    return field_errors(mesh, sol.phi, exact, grad)


def _cn_final(dt, D=0.1, n=40, T=1.0):
    from stabfem.discretization import build_line_mesh

    pi = math.pi
    mesh = build_line_mesh(n, 0, 1)

    def exact(x, t=0.0):
        return math.exp(-t) * np.sin(pi * np.atleast_2d(x)[:, 0])

    def source(x, t=0.0):
        x = np.atleast_2d(x)[:, 0]
        return math.exp(-t) * (-np.sin(pi * x) + pi * np.cos(pi * x) + D * pi ** 2 * np.sin(pi * x))

    prob = ProblemSpec(velocity=constant_field([1.0]), D=D, source=source,
                       dirichlet=[("left", _zero), ("right", _zero)], initial=lambda x: exact(x))
    cn = CrankNicolson(SchemeOperator(mesh, SchemeConfig("mmad"), prob), dt)
    s = cn.initial_state(0.0)
    for _ in range(int(round(T / dt))):
        s = cn.step(s)
    return s.phi


@lru_cache(maxsize=None)
def criterion_6():
    errs = [_manufactured_errors(n) for n in (10, 20, 40)]
    l2 = [math.log2(errs[i][0] / errs[i + 1][0]) for i in range(2)]
    h1 = [math.log2(errs[i][1] / errs[i + 1][1]) for i in range(2)]
    sols = [_cn_final(0.1 / 2 ** k) for k in range(4)]
    d = [np.linalg.norm(sols[k] - sols[k + 1]) for k in range(3)]
    tord = [math.log2(d[k] / d[k + 1]) for k in range(2)]
    ok = min(l2) >= 1.9 and min(h1) >= 0.95 and min(tord) >= 1.9
    detail = (
        f"L2 orders {l2[0]:.3f},{l2[1]:.3f}; gradient orders {h1[0]:.3f},{h1[1]:.3f}; "
        f"CN orders {tord[0]:.3f},{tord[1]:.3f}"
    )
    return ok, detail


@lru_cache(maxsize=None)
def criterion_7():
    r = {k: cached_run("2d-transient-irrotational", k) for k in ("supg", "mzad", "mmad")}
    ret = {k: v.trace.retention for k, v in r.items()}
    et = {k: v.et[0] for k, v in r.items()}
    parts = {
        "mmad retention >= 0.98": ret["mmad"] >= 0.98,
        "supg retention <= 0.92": ret["supg"] <= 0.92,
        "et(mmad) < et(mzad)": et["mmad"] < et["mzad"],
        "et(mmad) < et(supg)": et["mmad"] < et["supg"],
    }
    failed = [k for k, v in parts.items() if not v]
    detail = (
        f"retention mmad={ret['mmad']:.4f} supg={ret['supg']:.4f} mzad={ret['mzad']:.4f}; "
        f"et_l2 mmad={et['mmad']:.5f} supg={et['supg']:.5f} mzad={et['mzad']:.5f}"
        + ("" if not failed else "; failed: " + ", ".join(failed))
    )
    return not failed, detail


@lru_cache(maxsize=None)
def criterion_8():
    failed = []
    lo, hi = math.inf, -math.inf
    gal2 = math.inf
    for name in ("2d-steady-case1", "2d-steady-case2"):
        for t in STEADY_ANGLES:
            e = {}
            for k in ("galerkin", "supg", "mmad"):
                res = _steady_phi(name, k, theta=t)
                e[k] = res.final_error.l2_rel
                if k == "mmad":
                    phi = res.snapshots[0].phi
                    lo, hi = min(lo, phi.min()), max(hi, phi.max())
                    if phi.min() < -0.02 or phi.max() > 1.02:
                        failed.append(f"{name}@{t:g} mmad bounds [{phi.min():.3f}, {phi.max():.3f}]")
            if name == "2d-steady-case2":
                gal2 = min(gal2, e["galerkin"])
                if not e["galerkin"] > 10:
                    failed.append(f"{name}@{t:g} galerkin l2 {e['galerkin']:.3f} <= 10")
            if not e["mmad"] <= e["supg"] <= e["galerkin"]:
                failed.append(
                    f"{name}@{t:g} order mmad={e['mmad']:.4f} supg={e['supg']:.4f} gal={e['galerkin']:.4f}"
                )
    detail = f"mmad range [{lo:.4f}, {hi:.4f}]; min galerkin case II l2 {gal2:.2f}"
    if failed:
        detail += "; failed: " + "; ".join(failed)
    return not failed, detail


def _bounds_pure_advection(name):
    """Extreme nodal values of an MMAD run with k_tilde = 0 and D = 0, plus the data range."""
    scheme = SchemeConfig("mmad", k_tilde=0.0)
    thetas = STEADY_ANGLES if name in ("2d-steady-case1", "2d-steady-case2") else (None,)
    lo, hi = math.inf, -math.inf
    dlo, dhi = 0.0, 1.0
    for t in thetas:
        params = {"D": 0.0} if t is None else {"D": 0.0, "theta_deg": t}
        case = get_case(name, **params)
        mesh = case.build_mesh()
        op = SchemeOperator(mesh, scheme, case.problem)
        if case.steady:
            phi = solve_system(op.system(0.0), 0.0).phi
            lo, hi = min(lo, phi.min()), max(hi, phi.max())
            continue
        cn = CrankNicolson(op, case.dt)
        s = cn.initial_state(0.0)
        for n in range(case.n_steps + 1):
            if n > 0:
                s = cn.step(s)
            lo, hi = min(lo, s.phi.min()), max(hi, s.phi.max())
            for _, fn in case.problem.dirichlet:
                v = fn(mesh.nodes, n * case.dt)
                dlo, dhi = min(dlo, v.min()), max(dhi, v.max())
    return lo, hi, dlo, dhi


@lru_cache(maxsize=None)
def criterion_9():
    failed, parts = [], []
    for name in BENCHMARK_NAMES:
        try:
            lo, hi, dlo, dhi = _bounds_pure_advection(name)
        except (SingularSystemError, ConvergenceError) as exc:
            failed.append(f"{name}: solver failure {exc}")
            continue
        # the [-0.02, 1.02] band scaled to the range of the problem data
        tol = 0.02 * (dhi - dlo)
        parts.append(f"{name} [{lo:.3f}, {hi:.3f}]")
        if lo < dlo - tol or hi > dhi + tol:
            failed.append(f"{name} outside [{dlo - tol:g}, {dhi + tol:g}]")
    detail = "; ".join(parts)
    if failed:
        detail += "; failed: " + "; ".join(failed)
    return not failed, detail


def _prop_partition_of_unity():
    pts = np.random.default_rng(0).uniform(-1, 1, (1000, 2))
    N, dN = reference_shape(2, pts)
    return np.abs(N.sum(axis=1) - 1).max() <= 1e-13 and np.abs(dN.sum(axis=1)).max() <= 1e-13


def _prop_kbar_nonnegative():
    rng = np.random.default_rng(1)
    n = 100_000
    u = rng.normal(size=(n, 2)) * 10 ** rng.uniform(-6, 3, (n, 1))
    h = 10 ** rng.uniform(-4, 1, (n, 2))
    th = rng.uniform(0, 2 * np.pi, n)
    e = np.stack([np.column_stack([np.cos(th), np.sin(th)]),
                  np.column_stack([-np.sin(th), np.cos(th)])], axis=1)
    return all(np.all(element_kbar(u, h, e, D) >= 0) for D in (0.0, 1e-8, 1e-3, 1.0, 1e4))


def _prop_skew_convection():
    rng = np.random.default_rng(2)
    mesh = _perturbed_mesh(rng, 6, 5, 0.15)
    B = coercivity_matrix(mesh, SchemeConfig("galerkin"), _all_edges_zero([0.7, -0.4], 0.0))
    op = SchemeOperator(mesh, SchemeConfig("galerkin"), _all_edges_zero([0.7, -0.4], 0.0))
    keep = np.setdiff1d(np.arange(mesh.n_nodes), mesh.boundary_nodes())
    C = op.A.toarray()[np.ix_(keep, keep)]
    return np.abs(B).max() <= 1e-14 * np.abs(C).max()


def _prop_zero_stabilization():
    mesh = build_quad_mesh(5, 4, ((0, 1), (0, 1)))
    one = lambda x, t=0.0: np.ones(len(np.atleast_2d(x)))
    p = ProblemSpec(velocity=constant_field([0.8, 0.6]), D=0.01, source=constant_field(0.3),
                    dirichlet=[("left", one), ("bottom", _zero)])
    ref = assemble_steady(mesh, SchemeConfig("galerkin"), p)
    M0 = assemble_mass(mesh, SchemeConfig("galerkin"), p).toarray()
    ok = True
    for cfg in (SchemeConfig("classical_ad", classical_kbar=0.0), SchemeConfig("su", kbar_scale=0.0),
                SchemeConfig("supg", kbar_scale=0.0)):
        s = assemble_steady(mesh, cfg, p)
        ok &= np.array_equal(s.A.toarray(), ref.A.toarray()) and np.array_equal(s.b, ref.b)
        ok &= np.array_equal(assemble_mass(mesh, cfg, p).toarray(), M0)
    for cfg in (SchemeConfig("mzad", penalty=0.0),
                SchemeConfig("mmad", coupling=np.zeros((2, 2)), k_tilde=0.0)):
        A = assemble_steady(mesh, cfg, p).A.toarray()
        pd = np.arange(0, A.shape[0], 3)
        ok &= np.array_equal(A[np.ix_(pd, pd)], ref.A.toarray())
    return bool(ok)


def _prop_energy_minimization():
    rng = np.random.default_rng(5)
    mesh = build_quad_mesh(5, 5, ((0, 1), (0, 1)))
    H = np.array([[0.05, 0.02], [0.02, 0.03]])
    F = constant_field(2.0)
    sol = solve_steady(mesh, SchemeConfig("mmad", k_tilde=1.0, coupling=H),
                       _all_edges_zero([0.0, 0.0], 0.1, source=F))
    J0 = compute_energy_J(mesh, sol.phi, sol.g, 0.1, H, 1.0, source=F)
    free = np.setdiff1d(np.arange(mesh.n_nodes), mesh.boundary_nodes())
    for _ in range(50):
        dphi = np.zeros(mesh.n_nodes)
        dphi[free] = rng.normal(scale=1e-2, size=len(free))
        dg = rng.normal(scale=1e-2, size=sol.g.shape)
        if compute_energy_J(mesh, sol.phi + dphi, sol.g + dg, 0.1, H, 1.0, source=F) < J0:
            return False
    return True


def _prop_deterministic():
    case = get_case("1d-steady")
    a = run_benchmark(case, SchemeConfig("mmad"))
    b = run_benchmark(case, SchemeConfig("mmad"))
    return a.final_error == b.final_error and np.array_equal(a.snapshots[0].vector, b.snapshots[0].vector)


def _prop_dirichlet_bit_exact():
    rng = np.random.default_rng(7)
    M = rng.normal(size=(30, 30)) + 60 * np.eye(30)
    r, c = np.nonzero(M)
    A = from_triplets(30, 30, rows=r, cols=c, vals=M[r, c])
    dofs = rng.choice(30, 10, replace=False)
    vals = rng.normal(size=10) * 1e3
    A2, b2 = impose_dirichlet(A, rng.normal(size=30), list(zip(dofs, vals)))
    return np.array_equal(solve(A2, b2)[0][dofs], vals)


def _prop_hill_ordering():
    out = []
    for name in HILL_CASES:
        et = {k: cached_run(name, k).et[0] for k in ("supg", "mzad", "mmad")}
        if not (et["mmad"] < et["supg"] and et["mmad"] < et["mzad"]):
            out.append(f"{name} (mmad {et['mmad']:.6f}, supg {et['supg']:.6f}, mzad {et['mzad']:.6f})")
    return not out, out


def _prop_irrotational_overshoot():
    return max(cached_run("2d-transient-irrotational", "mmad").trace.maxima) - 1.0 <= 0.02


def _prop_diffusion_dominated():
    for pe in (0.1, 0.01):
        case = get_case("1d-steady", pe_h=pe)
        for k in ("galerkin", "classical_ad", "su", "supg", "mzad", "mmad"):
            if run_benchmark(case, SchemeConfig(k)).final_error.l2_rel > 1e-3:
                return False
    return True


def _prop_diagonal_symmetry():
    n = 41
    swap = np.arange(n * n).reshape(n, n).T.ravel()
    jump = 0.2
    one = lambda x, t=0.0: np.ones(len(np.atleast_2d(x)))
    bottom = lambda x, t=0.0: np.where(np.atleast_2d(x)[:, 0] <= jump + 1e-12, 1.0, 0.0)
    for t in STEADY_ANGLES:
        case = get_case("2d-steady-case1", theta_deg=t)
        mesh = case.build_mesh()
        th = math.radians(90.0 - t)
        mirrored = ProblemSpec(velocity=constant_field([math.cos(th), math.sin(th)]),
                               D=diffusivity_from_peclet(1e6),
                               dirichlet=[("left", one), ("bottom", bottom)])
        for k in ("galerkin", "supg", "mmad"):
            s = case.default_scheme(SchemeConfig(k))
            a = solve_system(SchemeOperator(mesh, s, case.problem).system(), 0.0).phi
            b = solve_system(SchemeOperator(mesh, s, mirrored).system(), 0.0).phi
            if np.abs(b[swap] - a).max() > 1e-10:
                return False
    return True


@lru_cache(maxsize=None)
def criterion_10():
    checks = {
        "partition of unity": _prop_partition_of_unity,
        "kbar >= 0 fuzzing": _prop_kbar_nonnegative,
        "skew convection": _prop_skew_convection,
        "zero-stabilization bit equality": _prop_zero_stabilization,
        "energy minimization": _prop_energy_minimization,
        "deterministic reruns": _prop_deterministic,
        "Dirichlet bit exactness": _prop_dirichlet_bit_exact,
        "irrotational MMAD overshoot <= 0.02": _prop_irrotational_overshoot,
        "Pe_h <= 0.1 accuracy": _prop_diffusion_dominated,
        "case I diagonal symmetry": _prop_diagonal_symmetry,
    }
    failed = [name for name, fn in checks.items() if not fn()]
    ordered, bad = _prop_hill_ordering()
    if not ordered:
        failed.append("hill decay ordering on " + "; ".join(bad))
    n = len(checks) + 1
    detail = f"{n - len(failed)}/{n} properties hold"
    if failed:
        detail += "; failed: " + "; ".join(failed)
    return not failed, detail


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 11)}


def _line(i):
    ok, detail = CRITERIA[i]()
    return ok, f"CRITERION {i}: {'PASS' if ok else 'FAIL'} - {detail}"


@pytest.mark.parametrize("i", sorted(CRITERIA))
def test_criterion(i):
    import conftest

    ok, line = _line(i)
    conftest.ACCEPTANCE_LINES[i] = line
    print(line)
    assert ok, line


if __name__ == "__main__":
    results = [_line(i) for i in sorted(CRITERIA)]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
