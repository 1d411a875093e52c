"""Structured meshes, reference shape functions, Gauss quadrature and dof layout.

Only 2-node segments (1D) and 4-node bilinear quadrilaterals (2D) are
supported. Quadrilateral nodes are numbered counterclockwise starting from
the reference corner (-1, -1).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DegenerateElementError, InvalidArgumentError

# reference corner coordinates of the bilinear quad, counterclockwise
_QUAD_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Line or quadrilateral mesh.

    Attributes
    ----------
    dim : int
        Spatial dimension, 1 or 2.
    nodes : ndarray, shape (n_nodes, dim)
    elements : ndarray of int, shape (n_elems, 2) or (n_elems, 4)
    boundary_sets : dict
        Maps "left", "right" (and "bottom", "top" in 2D) to ordered node
        index arrays. Corner nodes appear in two sets.
    """

    dim: int
    nodes: np.ndarray
    elements: np.ndarray
    boundary_sets: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise InvalidArgumentError(f"unsupported dimension {self.dim}")
        nodes = _frozen(self.nodes).reshape(-1, self.dim)
        elements = _frozen(self.elements, dtype=np.int64)
        if elements.ndim != 2 or elements.shape[1] != 2 ** self.dim:
            raise InvalidArgumentError("connectivity does not match mesh dimension")
        if elements.size and (elements.min() < 0 or elements.max() >= len(nodes)):
            raise InvalidArgumentError("connectivity references a missing node")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "elements", elements)
        object.__setattr__(
            self,
            "boundary_sets",
            {k: _frozen(v, dtype=np.int64) for k, v in self.boundary_sets.items()},
        )

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elems(self):
        return len(self.elements)

    @property
    def nodes_per_elem(self):
        return self.elements.shape[1]

    def boundary_nodes(self):
        """Sorted union of all boundary sets."""
        if not self.boundary_sets:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate(list(self.boundary_sets.values())))

    def boundary_facets(self, name):
        """Facets of a named boundary set.

        In 1D a facet is a single node, returned with shape (n, 1). In 2D the
        ordered node list is split into consecutive edges, shape (n - 1, 2).
        """
        ids = self.boundary_sets[name]
        if self.dim == 1:
            return ids.reshape(-1, 1)
        return np.column_stack([ids[:-1], ids[1:]])

    @cached_property
    def geometry(self):
        """Default quadrature-point geometry (2-point Gauss per direction)."""
        return ElementGeometry(self, gauss_rule(self.dim, 2))


def build_line_mesh(n_elems, x_min, x_max):
    """Uniform mesh of ``n_elems`` linear segments on ``[x_min, x_max]``."""
    if int(n_elems) != n_elems or n_elems < 1:
        raise InvalidArgumentError("n_elems must be a positive integer")
    if not x_min < x_max:
        raise InvalidArgumentError("x_min must be smaller than x_max")
    n_elems = int(n_elems)
    x = np.linspace(x_min, x_max, n_elems + 1)
    elements = np.column_stack([np.arange(n_elems), np.arange(1, n_elems + 1)])
    return Mesh(
        dim=1,
        nodes=x.reshape(-1, 1),
        elements=elements,
        boundary_sets={"left": [0], "right": [n_elems]},
    )


def build_quad_mesh(nx, ny, bounds):
    """Structured mesh of ``nx * ny`` bilinear quads.

    ``bounds`` is ``((x_min, x_max), (y_min, y_max))``. Node ``(i, j)`` of the
    grid gets index ``j * (nx + 1) + i``. Boundary sets run in increasing
    coordinate along each edge.
    """
    for n in (nx, ny):
        if int(n) != n or n < 1:
            raise InvalidArgumentError("nx and ny must be positive integers")
    (x0, x1), (y0, y1) = bounds
    if not (x0 < x1 and y0 < y1):
        raise InvalidArgumentError(f"degenerate rectangle {bounds!r}")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    elements = np.column_stack([
        idx[:-1, :-1].ravel(),
        idx[:-1, 1:].ravel(),
        idx[1:, 1:].ravel(),
        idx[1:, :-1].ravel(),
    ])
    boundary_sets = {
        "left": idx[:, 0],
        "right": idx[:, -1],
        "bottom": idx[0, :],
        "top": idx[-1, :],
    }
    return Mesh(dim=2, nodes=nodes, elements=elements, boundary_sets=boundary_sets)


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, dim) reference coordinates
    weights: np.ndarray  # (nq,)

    @property
    def n_points(self):
        return len(self.weights)


def gauss_rule(dim, n_per_dir=2):
    """Tensor-product Gauss-Legendre rule on ``[-1, 1]^dim``."""
    x, w = np.polynomial.legendre.leggauss(n_per_dir)
    if dim == 1:
        return QuadratureRule(_frozen(x.reshape(-1, 1)), _frozen(w))
    # xi varies fastest
    xi, eta = np.meshgrid(x, x)
    wx, wy = np.meshgrid(w, w)
    pts = np.column_stack([xi.ravel(), eta.ravel()])
    return QuadratureRule(_frozen(pts), _frozen((wx * wy).ravel()))


def reference_shape(dim, ref_pts):
    """Shape values and reference gradients at reference points.

    Returns ``(N, dN)`` with shapes ``(npts, nen)`` and ``(npts, nen, dim)``.
    """
    ref_pts = np.atleast_2d(np.asarray(ref_pts, dtype=float))
    if dim == 1:
        xi = ref_pts[:, 0]
        N = np.column_stack([0.5 * (1 - xi), 0.5 * (1 + xi)])
        dN = np.empty((len(xi), 2, 1))
        dN[:, 0, 0] = -0.5
        dN[:, 1, 0] = 0.5
        return N, dN
    xi, eta = ref_pts[:, 0], ref_pts[:, 1]
    cx, cy = _QUAD_CORNERS[:, 0], _QUAD_CORNERS[:, 1]
    N = 0.25 * (1 + np.outer(xi, cx)) * (1 + np.outer(eta, cy))
    dN = np.empty((len(xi), 4, 2))
    dN[:, :, 0] = 0.25 * cx * (1 + np.outer(eta, cy))
    dN[:, :, 1] = 0.25 * cy * (1 + np.outer(xi, cx))
    return N, dN


@dataclass(frozen=True)
class ShapeEval:
    values: np.ndarray  # (nen,)
    grads: np.ndarray  # (nen, dim), physical
    jac_det: float
    phys_point: np.ndarray  # (dim,)


def eval_shape(mesh, elem, ref_pt):
    """Evaluate shape functions of one element at one reference point."""
    ref_pt = np.asarray(ref_pt, dtype=float).reshape(1, mesh.dim)
    if np.any(np.abs(ref_pt) > 1.0 + 1e-12):
        raise InvalidArgumentError("reference point outside [-1, 1]^dim")
    N, dN = reference_shape(mesh.dim, ref_pt)
    X = mesh.nodes[mesh.elements[elem]]  # (nen, dim)
    J = dN[0].T @ X  # J[i, j] = dx_j / dxi_i
    det = float(np.linalg.det(J))
    if not det > 0.0:
        raise DegenerateElementError(f"element {elem} has Jacobian determinant {det}")
    grads = np.linalg.solve(J, dN[0].T).T
    return ShapeEval(values=N[0], grads=grads, jac_det=det, phys_point=N[0] @ X)


class ElementGeometry:
    """Shape data for every element at every point of a quadrature rule.

    Attributes
    ----------
    N : ndarray (nq, nen)
    dN : ndarray (ne, nq, nen, dim), physical gradients
    wdet : ndarray (ne, nq), weight times Jacobian determinant
    xq : ndarray (ne, nq, dim), physical quadrature points
    """

    def __init__(self, mesh, rule):
        self.rule = rule
        N, dNref = reference_shape(mesh.dim, rule.points)
        X = mesh.nodes[mesh.elements]  # (ne, nen, dim)
        # J[e, q, i, j] = sum_a dNref[q, a, i] X[e, a, j]
        J = np.einsum("qai,eaj->eqij", dNref, X)
        det = np.linalg.det(J)
        if np.any(det <= 0.0):
            bad = int(np.argwhere(det <= 0.0)[0, 0])
            raise DegenerateElementError(f"element {bad} has non-positive Jacobian")
        Jinv = np.linalg.inv(J)
        # grad N_a = J^{-1} dNref_a
        self.N = N
        self.dN = np.einsum("eqij,qaj->eqai", Jinv, dNref)
        self.wdet = det * rule.weights[None, :]
        self.xq = np.einsum("qa,eaj->eqj", N, X)


def element_sizes(mesh, elem):
    """Per-direction element lengths ``(h_1, ..., h_dim)``.

    In 2D, ``h_i`` is the distance between the midpoints of the two edges
    crossing natural direction ``i``.
    """
    if not 0 <= elem < mesh.n_elems:
        raise InvalidArgumentError(f"element index {elem} out of range")
    h, _ = element_frames(mesh)
    return h[elem]


def element_frames(mesh):
    """Sizes ``h`` (ne, dim) and natural unit directions ``e`` (ne, dim, dim).

    ``e[:, i]`` is the unit vector of natural direction ``i``.
    """
    X = mesh.nodes[mesh.elements]
    if mesh.dim == 1:
        d = (X[:, 1] - X[:, 0])[:, None, :]
    else:
        d = np.stack([
            0.5 * (X[:, 1] + X[:, 2]) - 0.5 * (X[:, 0] + X[:, 3]),
            0.5 * (X[:, 2] + X[:, 3]) - 0.5 * (X[:, 0] + X[:, 1]),
        ], axis=1)
    h = np.linalg.norm(d, axis=2)
    if np.any(h <= 0.0):
        raise DegenerateElementError("element with zero size")
    return h, d / h[:, :, None]


def element_centers(mesh):
    return mesh.nodes[mesh.elements].mean(axis=1)


@dataclass(frozen=True)
class DofLayout:
    """Node-interleaved dof numbering: dof of (node, field) is ``node * nf + field``.

    Field 0 is the primary unknown; fields ``1..dim`` are the components of
    the auxiliary gradient for two-field schemes.
    """

    n_nodes: int
    fields_per_node: int = 1

    @property
    def n_dofs(self):
        return self.n_nodes * self.fields_per_node

    def dof(self, node, field=0):
        return np.asarray(node) * self.fields_per_node + field

    def element_dofs(self, elements):
        """Global dofs per element in node-major local order, shape (ne, nen * nf)."""
        nf = self.fields_per_node
        return (elements[:, :, None] * nf + np.arange(nf)).reshape(len(elements), -1)

    def split(self, x):
        """Return ``(phi, g)``; ``g`` is None for single-field layouts."""
        x = np.asarray(x).reshape(self.n_nodes, self.fields_per_node)
        if self.fields_per_node == 1:
            return x[:, 0].copy(), None
        return x[:, 0].copy(), x[:, 1:].copy()
