"""Global assembly and solution of the steady and transient problems.

Single-field schemes (Galerkin, classical artificial diffusion, SU, SUPG)
carry one unknown per node. The two-field schemes (MZAD, MMAD) add the
auxiliary gradient ``g`` with ``dim`` components per node, interleaved after
the nodal value of ``phi``.

All element integrals are evaluated with one vectorized pass over the
elements and scattered as triplets.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretization import DofLayout, element_centers, element_frames
from .errors import ConfigurationError, InvalidArgumentError
from .sparse_linalg import (
    DirichletLift,
    Factorization,
    SparseMatrix,
    from_triplets,
    impose_dirichlet,
    solve,
)
from .stabilization import element_H, element_kbar, streamline_tau


def constant_field(value):
    """Vectorized callable returning ``value`` at every point (and time)."""
    value = np.atleast_1d(np.asarray(value, dtype=float))

    def f(x, t=0.0):
        x = np.atleast_2d(x)
        if value.size == 1:
            return np.full(len(x), value[0])
        return np.tile(value, (len(x), 1))

    return f


@dataclass
class ProblemSpec:
    """Convection-diffusion problem data.

    All callables are vectorized over points: ``velocity(x)`` maps (n, dim)
    to (n, dim); ``source(x, t)``, boundary values ``value(x, t)`` and
    ``initial(x)`` map (n, dim) to (n,). Dirichlet sets listed earlier take
    precedence at nodes shared with later sets (corners).
    """

    velocity: Callable
    D: float
    source: Optional[Callable] = None
    dirichlet: list = field(default_factory=list)
    neumann: list = field(default_factory=list)
    initial: Optional[Callable] = None

    def __post_init__(self):
        if self.D < 0:
            raise InvalidArgumentError("diffusivity must be non-negative")
        d_names = {name for name, _ in self.dirichlet}
        n_names = {name for name, _ in self.neumann}
        if d_names & n_names:
            raise InvalidArgumentError(
                f"boundary sets {sorted(d_names & n_names)} are both Dirichlet and Neumann"
            )


@dataclass
class SolutionField:
    layout: DofLayout
    phi: np.ndarray
    g: Optional[np.ndarray] = None
    time: float = 0.0
    report: object = None

    @property
    def vector(self):
        if self.g is None:
            return self.phi.copy()
        return np.column_stack([self.phi, self.g]).ravel()

    @classmethod
    def from_vector(cls, layout, x, time=0.0, report=None):
        phi, g = layout.split(x)
        return cls(layout, phi, g, time, report)


@dataclass
class AssembledSystem:
    A: SparseMatrix
    b: np.ndarray
    constraints: list
    layout: DofLayout
    M: Optional[SparseMatrix] = None


class SchemeOperator:
    """Element data and global matrices of one scheme on one mesh.

    The steady operator and mass matrix are time independent (the velocity
    field is steady in every supported problem); the load and the Dirichlet
    values are evaluated on demand at a given time.
    """

    def __init__(self, mesh, scheme, problem, geometry=None):
        if scheme.kind == "mzad" and scheme.penalty is not None and scheme.penalty < 0:
            raise ConfigurationError("MZAD requires a penalty p >= 0")
        self.mesh = mesh
        self.scheme = scheme
        self.problem = problem
        self.dim = mesh.dim
        self.layout = DofLayout(mesh.n_nodes, 1 + mesh.dim if scheme.two_field else 1)
        self.geo = geometry if geometry is not None else mesh.geometry
        self.edofs = self.layout.element_dofs(mesh.elements)

        geo = self.geo
        ne, nq, nen, dim = geo.dN.shape
        self.uq = np.asarray(problem.velocity(geo.xq.reshape(-1, dim)), dtype=float).reshape(
            ne, nq, dim
        )
        self.uc = np.asarray(problem.velocity(element_centers(mesh)), dtype=float).reshape(ne, dim)
        self.h, self.e = element_frames(mesh)
        self.kbar = scheme.kbar_scale * element_kbar(self.uc, self.h, self.e, problem.D)
        self.k_tilde = scheme.resolved_k_tilde(problem.D)

        kind = scheme.kind
        if kind in ("su", "supg"):
            tau = streamline_tau(self.uc, self.kbar)
            streamline = np.einsum("ej,eqaj->eqa", self.uc, geo.dN)
            self.W = geo.N[None] + tau[:, None, None] * streamline
        else:
            self.W = np.broadcast_to(geo.N[None], (ne, nq, nen))
        self.W_conv = self.W if kind in ("su", "supg") else np.broadcast_to(geo.N[None], (ne, nq, nen))
        self.W_mass = self.W if kind == "supg" else np.broadcast_to(geo.N[None], (ne, nq, nen))

        if kind == "mmad":
            if scheme.coupling is not None:
                H0 = np.asarray(scheme.coupling, dtype=float).reshape(dim, dim)
                self.H = scheme.kbar_scale * np.broadcast_to(H0, (ne, dim, dim)).copy()
            else:
                self.H = element_H(self.uc, self.kbar)

        self._A = None
        self._M = None

    # --- element matrices -------------------------------------------------
    def _diffusivity(self):
        D = self.problem.D
        kind = self.scheme.kind
        if kind == "classical_ad":
            if self.scheme.classical_kbar == "auto":
                return D + self.kbar
            return D + np.full(self.mesh.n_elems, float(self.scheme.classical_kbar))
        if kind == "mzad":
            return D + self.penalty()
        return np.full(self.mesh.n_elems, D)

    def penalty(self):
        if self.scheme.penalty is None:
            return self.h.mean(axis=1)
        return np.full(self.mesh.n_elems, float(self.scheme.penalty))

    def element_phi_phi(self):
        geo = self.geo
        conv = np.einsum("eqj,eqbj->eqb", self.uq, geo.dN)
        C = np.einsum("eq,eqa,eqb->eab", geo.wdet, self.W_conv, conv)
        Kd = np.einsum("eq,eqai,eqbi->eab", geo.wdet, geo.dN, geo.dN)
        out = C + self._diffusivity()[:, None, None] * Kd
        if self.scheme.kind == "mmad":
            out = out + np.einsum("eq,eqai,eij,eqbj->eab", geo.wdet, geo.dN, self.H, geo.dN)
        return out

    def element_matrices(self):
        """Local steady matrices, shape (ne, nen * nf, nen * nf)."""
        pp = self.element_phi_phi()
        kind = self.scheme.kind
        if kind not in ("mzad", "mmad"):
            return pp
        geo = self.geo
        ne, nq, nen, dim = geo.dN.shape
        nf = 1 + dim
        N = geo.N
        w = geo.wdet
        mass = np.einsum("eq,qa,qb->eab", w, N, N)
        eye = np.eye(dim)
        if kind == "mzad":
            p = self.penalty()
            # phi rows / g cols: -p g . grad(dphi)
            pg = -p[:, None, None, None] * np.einsum("eq,eqaj,qb->eabj", w, geo.dN, N)
            # g rows / phi cols: -grad(phi) . dg
            gp = -np.einsum("eq,qa,eqbi->eaib", w, N, geo.dN)
            gg = np.einsum("eab,ij->eaibj", mass, eye)
        else:
            HdN = np.einsum("eij,eqbj->eqbi", self.H, geo.dN)
            pg = -np.einsum("eq,eqaj,qb->eabj", w, HdN, N)
            gp = -np.einsum("eq,qa,eqbi->eaib", w, N, HdN)
            K = self.k_tilde * eye[None]
            if self.k_tilde == 0.0:
                K = K + (self.scheme.g_regularization * self.kbar)[:, None, None] * eye[None]
            gg = np.einsum("eab,eij->eaibj", mass, self.H + K)
            if self.k_tilde != 0.0:
                stiff = np.einsum("eq,eqak,eqbk->eab", w, geo.dN, geo.dN)
                gg = gg + self.k_tilde * np.einsum("eab,ij->eaibj", stiff, eye)
        Ke = np.zeros((ne, nen, nf, nen, nf))
        Ke[:, :, 0, :, 0] = pp
        Ke[:, :, 0, :, 1:] = pg
        Ke[:, :, 1:, :, 0] = gp
        Ke[:, :, 1:, :, 1:] = gg
        return Ke.reshape(ne, nen * nf, nen * nf)

    def element_mass(self):
        geo = self.geo
        mm = np.einsum("eq,eqa,qb->eab", geo.wdet, self.W_mass, geo.N)
        if not self.scheme.two_field:
            return mm
        ne, nen = mm.shape[:2]
        nf = self.layout.fields_per_node
        Me = np.zeros((ne, nen, nf, nen, nf))
        Me[:, :, 0, :, 0] = mm
        return Me.reshape(ne, nen * nf, nen * nf)

    def _scatter(self, Ke):
        rows = np.broadcast_to(self.edofs[:, :, None], Ke.shape)
        cols = np.broadcast_to(self.edofs[:, None, :], Ke.shape)
        n = self.layout.n_dofs
        return from_triplets(n, n, rows=rows, cols=cols, vals=Ke)

    # --- global objects ---------------------------------------------------
    @property
    def A(self):
        if self._A is None:
            self._A = self._scatter(self.element_matrices())
        return self._A

    @property
    def M(self):
        if self._M is None:
            self._M = self._scatter(self.element_mass())
        return self._M

    def load(self, t=0.0):
        geo = self.geo
        ne, nq, nen, dim = geo.dN.shape
        b = np.zeros(self.layout.n_dofs)
        phi_dofs = self.edofs.reshape(ne, nen, -1)[:, :, 0]
        if self.problem.source is not None:
            F = np.asarray(self.problem.source(geo.xq.reshape(-1, dim), t), dtype=float)
            F = np.broadcast_to(F, (ne * nq,)).reshape(ne, nq)
            fe = np.einsum("eq,eqa,eq->ea", geo.wdet, self.W_mass, F)
            np.add.at(b, phi_dofs, fe)
        nf = self.layout.fields_per_node
        for name, flux in self.problem.neumann:
            facets = self.mesh.boundary_facets(name)
            X = self.mesh.nodes
            if self.dim == 1:
                vals = np.asarray(flux(X[facets[:, 0]], t), dtype=float)
                np.add.at(b, facets[:, 0] * nf, np.broadcast_to(vals, (len(facets),)))
                continue
            xg, wg = np.polynomial.legendre.leggauss(2)
            Ns = np.column_stack([0.5 * (1 - xg), 0.5 * (1 + xg)])  # (2 pts, 2 nodes)
            Xa, Xb = X[facets[:, 0]], X[facets[:, 1]]
            length = np.linalg.norm(Xb - Xa, axis=1)
            pts = np.einsum("qa,fad->fqd", Ns, np.stack([Xa, Xb], axis=1))
            vals = np.asarray(flux(pts.reshape(-1, 2), t), dtype=float)
            vals = np.broadcast_to(vals, (len(facets) * 2,)).reshape(len(facets), 2)
            fe = 0.5 * length[:, None] * np.einsum("q,fq,qa->fa", wg, vals, Ns)
            np.add.at(b, facets * nf, fe)
        return b

    def dirichlet_dofs(self):
        """Constrained phi dofs and the nodes they belong to (first set wins)."""
        nodes = []
        seen = set()
        owner = []
        for k, (name, _) in enumerate(self.problem.dirichlet):
            for n in self.mesh.boundary_sets[name]:
                if n not in seen:
                    seen.add(int(n))
                    nodes.append(int(n))
                    owner.append(k)
        nodes = np.array(nodes, dtype=np.int64)
        return self.layout.dof(nodes, 0), nodes, np.array(owner, dtype=np.int64)

    def dirichlet_values(self, t=0.0):
        dofs, nodes, owner = self.dirichlet_dofs()
        values = np.zeros(len(nodes))
        for k, (_, fn) in enumerate(self.problem.dirichlet):
            sel = owner == k
            if np.any(sel):
                v = np.asarray(fn(self.mesh.nodes[nodes[sel]], t), dtype=float)
                values[sel] = np.broadcast_to(v, (int(sel.sum()),))
        return dofs, values

    def constraints(self, t=0.0):
        dofs, values = self.dirichlet_values(t)
        return list(zip(dofs.tolist(), values.tolist()))

    def system(self, t=0.0, with_mass=False):
        return AssembledSystem(
            A=self.A,
            b=self.load(t),
            constraints=self.constraints(t),
            layout=self.layout,
            M=self.M if with_mass else None,
        )


def assemble_steady(mesh, scheme, problem, t=0.0):
    """Steady operator, load and Dirichlet constraints (not yet imposed)."""
    return SchemeOperator(mesh, scheme, problem).system(t)


def assemble_mass(mesh, scheme, problem):
    return SchemeOperator(mesh, scheme, problem).M


def solve_system(system, t=0.0):
    """Impose the recorded constraints, solve and unpack."""
    A, b = impose_dirichlet(system.A, system.b, system.constraints)
    x, report = solve(A, b)
    for dof, value in system.constraints:
        x[dof] = value
    return SolutionField.from_vector(system.layout, x, time=t, report=report)


def solve_steady(mesh, scheme, problem):
    return solve_system(assemble_steady(mesh, scheme, problem, 0.0), 0.0)


# --- time integration -----------------------------------------------------

def _theta_rows(layout):
    """Implicitness per row: 1/2 for phi rows, 1 for the algebraic g rows."""
    theta = np.full(layout.n_dofs, 0.5)
    if layout.fields_per_node > 1:
        theta[np.arange(layout.n_dofs) % layout.fields_per_node != 0] = 1.0
    return theta


def _cn_matrices(A, M, dt, theta):
    As = A.to_scipy() if isinstance(A, SparseMatrix) else sp.csr_matrix(A)
    Ms = M.to_scipy() if isinstance(M, SparseMatrix) else sp.csr_matrix(M)
    T = sp.diags(theta)
    lhs = Ms / dt + T @ As
    rhs = Ms / dt - sp.diags(1.0 - theta) @ As
    return SparseMatrix.from_scipy(lhs), rhs.tocsr()


def step_crank_nicolson(x, A, M, dt, load=None, t=0.0, dirichlet=None, layout=None):
    """One Crank-Nicolson step of ``M x' + A x = b(t)`` from ``t`` to ``t + dt``.

    Rows without mass (the auxiliary-gradient equations) are taken fully
    implicit at ``t + dt``. ``load(t)`` returns the load vector and
    ``dirichlet(t)`` returns ``(dofs, values)`` imposed at the new time.
    """
    if not dt > 0:
        raise InvalidArgumentError("dt must be positive")
    x = np.asarray(x, dtype=float)
    n = len(x)
    theta = _theta_rows(layout) if layout is not None else np.full(n, 0.5)
    L, R = _cn_matrices(A, M, dt, theta)
    rhs = R @ x
    if load is not None:
        b0, b1 = load(t), load(t + dt)
        rhs = rhs + (1.0 - theta) * b0 + theta * b1
    if dirichlet is not None:
        dofs, values = dirichlet(t + dt)
        L, rhs = impose_dirichlet(L, rhs, list(zip(dofs, values)))
    x1, _ = solve(L, rhs)
    if dirichlet is not None:
        x1[np.asarray(dofs, dtype=np.int64)] = values
    return x1


class CrankNicolson:
    """Crank-Nicolson integrator with a single factorization for all steps."""

    def __init__(self, operator, dt):
        if not dt > 0:
            raise InvalidArgumentError("dt must be positive")
        self.op = operator
        self.dt = float(dt)
        self.theta = _theta_rows(operator.layout)
        L, self.R = _cn_matrices(operator.A, operator.M, self.dt, self.theta)
        self.dofs, _ = operator.dirichlet_values(0.0)
        self.lift = DirichletLift(L, self.dofs)
        self.factor = Factorization(self.lift.matrix)
        self._has_source = operator.problem.source is not None or bool(operator.problem.neumann)
        self._zero = np.zeros(operator.layout.n_dofs)

    def _load(self, t):
        return self.op.load(t) if self._has_source else self._zero

    def initial_state(self, t0=0.0):
        """Interpolated initial condition with Dirichlet data and consistent g."""
        op = self.op
        phi = np.zeros(op.mesh.n_nodes)
        if op.problem.initial is not None:
            phi = np.asarray(op.problem.initial(op.mesh.nodes), dtype=float).copy()
        dofs, values = op.dirichlet_values(t0)
        phi[dofs // op.layout.fields_per_node] = values
        return SolutionField(op.layout, phi, consistent_g(op, phi), t0)

    def step(self, state):
        t0 = state.time
        t1 = t0 + self.dt
        x = state.vector
        rhs = self.R @ x
        if self._has_source:
            rhs = rhs + (1.0 - self.theta) * self._load(t0) + self.theta * self._load(t1)
        _, values = self.op.dirichlet_values(t1)
        rhs = self.lift.rhs(rhs, values)
        x1, report = self.factor.solve(rhs)
        x1[self.dofs] = values
        return SolutionField.from_vector(self.op.layout, x1, time=t1, report=report)


def consistent_g(op, phi):
    """Auxiliary field solving the g-equations for a given phi (None if single-field)."""
    layout = op.layout
    if layout.fields_per_node == 1:
        return None
    nf = layout.fields_per_node
    A = op.A.to_scipy()
    is_phi = np.arange(layout.n_dofs) % nf == 0
    gdofs = np.flatnonzero(~is_phi)
    pdofs = np.flatnonzero(is_phi)
    Agg = A[gdofs][:, gdofs]
    Agp = A[gdofs][:, pdofs]
    rhs = -(Agp @ phi)
    if not np.any(rhs):
        return np.zeros((layout.n_nodes, nf - 1))
    g = Factorization(SparseMatrix.from_scipy(Agg)).solve(rhs)[0]
    return g.reshape(layout.n_nodes, nf - 1)


# --- MZAD condensation ----------------------------------------------------

def condense_mzad(mesh, p, problem):
    """Single-field system obtained by eliminating g from the coupled MZAD system.

    ``g = -A_gg^{-1} A_gphi phi`` is the L2 projection of ``grad phi`` onto the
    nodal vector space, so the Schur complement
    ``A_pp - A_pg A_gg^{-1} A_gp`` is the projected artificial diffusion
    operator.
    """
    from .stabilization import SchemeConfig

    op = SchemeOperator(mesh, SchemeConfig("mzad", penalty=p), problem)
    A = op.A.to_scipy().tocsr()
    nf = op.layout.fields_per_node
    is_phi = np.arange(op.layout.n_dofs) % nf == 0
    pd, gd = np.flatnonzero(is_phi), np.flatnonzero(~is_phi)
    App = A[pd][:, pd]
    Apg = A[pd][:, gd]
    Agp = A[gd][:, pd]
    Agg = A[gd][:, gd].tocsc()
    X = spla.splu(Agg).solve(Agp.toarray())
    S = App.toarray() - Apg @ X
    b = op.load(0.0)[pd]
    dofs, values = op.dirichlet_values(0.0)
    layout = DofLayout(mesh.n_nodes, 1)
    return AssembledSystem(
        A=SparseMatrix.from_scipy(sp.csr_matrix(S)),
        b=b,
        constraints=list(zip((dofs // nf).tolist(), values.tolist())),
        layout=layout,
    )


# --- diagnostics ----------------------------------------------------------

def coercivity_matrix(mesh, scheme, problem):
    """Symmetric part of the stabilized operator with all boundary phi dofs removed."""
    op = SchemeOperator(mesh, scheme, problem)
    A = op.A.toarray()
    bnd = op.layout.dof(mesh.boundary_nodes(), 0)
    keep = np.setdiff1d(np.arange(op.layout.n_dofs), bnd)
    B = A[np.ix_(keep, keep)]
    return 0.5 * (B + B.T)


def coercivity_check(mesh, scheme, problem):
    """Smallest eigenvalue of :func:`coercivity_matrix`."""
    return float(np.linalg.eigvalsh(coercivity_matrix(mesh, scheme, problem)).min())


def compute_energy_J(mesh, phi, g, k, H, k_tilde, source=None, K=None, geometry=None):
    """Micromorphic energy of a pure-diffusion state.

    ``J = int k/2 |grad phi|^2 - F phi + 1/2 e.H.e + 1/2 g.K.g + k_tilde/2 |grad g|^2``
    with ``e = grad phi - g``. The load enters with a minus sign so that the
    stationarity condition is the assembled weak form with load ``+int F dphi``.
    ``H`` may be one (dim, dim) tensor or one per element.
    """
    geo = geometry if geometry is not None else mesh.geometry
    ne, nq, nen, dim = geo.dN.shape
    conn = mesh.elements
    phi = np.asarray(phi, dtype=float)
    pe = phi[conn]  # (ne, nen)
    grad_phi = np.einsum("eqai,ea->eqi", geo.dN, pe)
    val_phi = np.einsum("qa,ea->eq", geo.N, pe)
    if g is None:
        g = np.zeros((mesh.n_nodes, dim))
    ge = np.asarray(g, dtype=float).reshape(mesh.n_nodes, dim)[conn]  # (ne, nen, dim)
    val_g = np.einsum("qa,eai->eqi", geo.N, ge)
    grad_g = np.einsum("eqaj,eai->eqij", geo.dN, ge)
    H = np.broadcast_to(np.asarray(H, dtype=float), (ne, dim, dim))
    K = k_tilde * np.eye(dim) if K is None else np.asarray(K, dtype=float)
    e = grad_phi - val_g
    dens = 0.5 * k * np.einsum("eqi,eqi->eq", grad_phi, grad_phi)
    dens += 0.5 * np.einsum("eqi,eij,eqj->eq", e, H, e)
    dens += 0.5 * np.einsum("eqi,ij,eqj->eq", val_g, K, val_g)
    dens += 0.5 * k_tilde * np.einsum("eqij,eqij->eq", grad_g, grad_g)
    if source is not None:
        F = np.asarray(source(geo.xq.reshape(-1, dim), 0.0), dtype=float)
        dens -= np.broadcast_to(F, (ne * nq,)).reshape(ne, nq) * val_phi
    return float(np.sum(geo.wdet * dens))
