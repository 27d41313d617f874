"""Quadratic (P2) finite elements on a structured triangulation of the unit square.

Every P2 degree of freedom of the structured grid sits on a lattice of spacing
h/2, so global dof ``I + J*(2n+1)`` is the lattice node ``(I*h/2, J*h/2)``.
Nothing here enforces boundary conditions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp

# P2 local numbering: vertices 0, 1, 2, then midpoints of edges (0,1), (1,2), (2,0).
_EDGES = ((0, 1), (1, 2), (2, 0))


@dataclass(frozen=True)
class Mesh:
    n_side: int
    vertices: np.ndarray  # (n_vertices, 2)
    triangles: np.ndarray  # (n_triangles, 3), counter-clockwise

    @property
    def h(self) -> float:
        return 1.0 / self.n_side

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def build_mesh(n_side: int) -> Mesh:
    """Right-diagonal triangulation of [0,1]^2 with ``2*n_side**2`` triangles.

    Each square cell is cut along its bottom-left to top-right diagonal.
    """
    if int(n_side) != n_side or n_side < 2:
        raise ValueError(f"n_side must be an integer >= 2, got {n_side!r}")
    n = int(n_side)
    xs = np.arange(n + 1) / n
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    i, j = i.ravel(), j.ravel()
    v00 = j * (n + 1) + i
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    return Mesh(n_side=n, vertices=vertices, triangles=triangles)


@dataclass(frozen=True)
class QuadratureRule:
    """Rule on the reference triangle; barycentric points, weights summing to 1."""

    points: np.ndarray  # (nq, 3)
    weights: np.ndarray  # (nq,)
    degree: int

    @property
    def n_points(self) -> int:
        return len(self.weights)


def degree5_rule() -> QuadratureRule:
    """Seven-point rule, exact for total degree 5."""
    s15 = np.sqrt(15.0)
    a1, b1 = (6.0 - s15) / 21.0, (9.0 + 2.0 * s15) / 21.0
    a2, b2 = (6.0 + s15) / 21.0, (9.0 - 2.0 * s15) / 21.0
    w1 = (155.0 - s15) / 1200.0
    w2 = (155.0 + s15) / 1200.0
    pts = [
        (1 / 3, 1 / 3, 1 / 3),
        (b1, a1, a1), (a1, b1, a1), (a1, a1, b1),
        (b2, a2, a2), (a2, b2, a2), (a2, a2, b2),
    ]
    weights = [9.0 / 40.0, w1, w1, w1, w2, w2, w2]
    return QuadratureRule(np.array(pts), np.array(weights), degree=5)


def collapsed_gauss_rule(n: int) -> QuadratureRule:
    """Conical product (Duffy-collapsed Gauss-Legendre) rule, exact to degree 2n-2.

    Used as an independent higher-order rule; ``collapsed_gauss_rule(5)`` is
    exact for degree 8.
    """
    g, gw = np.polynomial.legendre.leggauss(n)
    g = 0.5 * (g + 1.0)
    gw = 0.5 * gw
    xi, eta = np.meshgrid(g, g, indexing="ij")
    wxi, weta = np.meshgrid(gw, gw, indexing="ij")
    # (xi, eta) in unit square -> (x, y) = (xi*(1-eta), eta) in the reference triangle
    x = (xi * (1.0 - eta)).ravel()
    y = eta.ravel()
    w = (wxi * weta * (1.0 - eta)).ravel() * 2.0
    pts = np.column_stack([1.0 - x - y, x, y])
    return QuadratureRule(pts, w, degree=2 * n - 2)


def p2_shape(bary: np.ndarray) -> np.ndarray:
    """P2 shape values at barycentric points, shape (npts, 6)."""
    L = np.atleast_2d(bary)
    out = np.empty((len(L), 6))
    for a in range(3):
        out[:, a] = L[:, a] * (2.0 * L[:, a] - 1.0)
    for m, (a, b) in enumerate(_EDGES):
        out[:, 3 + m] = 4.0 * L[:, a] * L[:, b]
    return out


def p2_shape_grad_ref(bary: np.ndarray) -> np.ndarray:
    """Gradients wrt reference coordinates (x, y) = (L1, L2), shape (npts, 6, 2)."""
    L = np.atleast_2d(bary)
    # dL/dx = (-1, 1, 0), dL/dy = (-1, 0, 1)
    dL = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    out = np.empty((len(L), 6, 2))
    for a in range(3):
        out[:, a, :] = (4.0 * L[:, a] - 1.0)[:, None] * dL[a]
    for m, (a, b) in enumerate(_EDGES):
        out[:, 3 + m, :] = 4.0 * (L[:, a, None] * dL[b] + L[:, b, None] * dL[a])
    return out


@dataclass(frozen=True)
class ScalarSpaceP2:
    mesh: Mesh
    elem_dofs: np.ndarray  # (n_triangles, 6)
    dof_coords: np.ndarray  # (n_dofs, 2)

    @property
    def n_dofs(self) -> int:
        return len(self.dof_coords)

    @cached_property
    def jacobians(self) -> np.ndarray:
        """Affine map Jacobians J = [p1 - p0, p2 - p0] per triangle, (E, 2, 2)."""
        p = self.mesh.vertices[self.mesh.triangles]
        return np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * np.abs(np.linalg.det(self.jacobians))

    def physical_points(self, rule: QuadratureRule) -> np.ndarray:
        """Physical coordinates of quadrature points, (E, nq, 2)."""
        p = self.mesh.vertices[self.mesh.triangles]  # (E, 3, 2)
        return np.einsum("qa,eax->eqx", rule.points, p)


def p2_space(mesh: Mesh) -> ScalarSpaceP2:
    n = mesh.n_side
    m = 2 * n + 1
    # vertex (i, j) is lattice node (2i, 2j)
    vi = mesh.triangles % (n + 1)
    vj = mesh.triangles // (n + 1)
    LI, LJ = 2 * vi, 2 * vj
    cols = [LI[:, a] + m * LJ[:, a] for a in range(3)]
    for a, b in _EDGES:
        I = (LI[:, a] + LI[:, b]) // 2
        J = (LJ[:, a] + LJ[:, b]) // 2
        cols.append(I + m * J)
    elem_dofs = np.column_stack(cols).astype(np.int64)
    I, J = np.meshgrid(np.arange(m), np.arange(m), indexing="xy")
    dof_coords = np.column_stack([I.ravel(), J.ravel()]) * (0.5 / n)
    return ScalarSpaceP2(mesh=mesh, elem_dofs=elem_dofs, dof_coords=dof_coords)


@dataclass(frozen=True)
class BasisTables:
    """P2 shape data at every (triangle, quadrature point)."""

    space: ScalarSpaceP2
    rule: QuadratureRule
    values: np.ndarray  # (nq, 6), identical on every triangle
    grads: np.ndarray  # (E, nq, 6, 2) physical gradients
    weights: np.ndarray  # (E, nq) weights times triangle area
    points: np.ndarray  # (E, nq, 2)

    @property
    def n_quad_total(self) -> int:
        return self.weights.size

    def evaluate(self, coeffs: np.ndarray):
        """Values and gradients of FE functions at all quadrature points.

        ``coeffs`` is (n_dofs,) or (n_dofs, m). Returns ``(val, dx, dy)`` each
        flattened over (triangle, point) to shape (E*nq,) or (E*nq, m).
        """
        c = np.asarray(coeffs)
        loc = c[self.space.elem_dofs]  # (E, 6[, m])
        if c.ndim == 1:
            val = np.einsum("qa,ea->eq", self.values, loc)
            g = np.einsum("eqax,ea->eqx", self.grads, loc)
            return val.ravel(), g[..., 0].ravel(), g[..., 1].ravel()
        val = np.einsum("qa,eam->eqm", self.values, loc)
        g = np.einsum("eqax,eam->eqxm", self.grads, loc)
        m = c.shape[1]
        return val.reshape(-1, m), g[:, :, 0].reshape(-1, m), g[:, :, 1].reshape(-1, m)


def eval_at_quadpoints(space: ScalarSpaceP2, rule: QuadratureRule | None = None) -> BasisTables:
    rule = rule or degree5_rule()
    values = p2_shape(rule.points)
    gref = p2_shape_grad_ref(rule.points)
    Jinv = np.linalg.inv(space.jacobians)  # (E, 2, 2)
    # grad_phys = J^{-T} grad_ref
    grads = np.einsum("eyx,qay->eqax", Jinv, gref)
    weights = space.areas[:, None] * rule.weights[None, :]
    return BasisTables(space, rule, values, grads, weights, space.physical_points(rule))


def _assemble(space: ScalarSpaceP2, local: np.ndarray) -> sp.csr_matrix:
    local = 0.5 * (local + local.transpose(0, 2, 1))
    rows = np.repeat(space.elem_dofs, 6, axis=1).ravel()
    cols = np.tile(space.elem_dofs, (1, 6)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(space.n_dofs, space.n_dofs))
    A = A.tocsr()
    A.sum_duplicates()
    return A


def assemble_mass(space: ScalarSpaceP2, rule: QuadratureRule | None = None,
                  tables: BasisTables | None = None) -> sp.csr_matrix:
    t = tables or eval_at_quadpoints(space, rule)
    local = np.einsum("eq,qa,qb->eab", t.weights, t.values, t.values)
    return _assemble(space, local)


def assemble_stiffness(space: ScalarSpaceP2, rule: QuadratureRule | None = None,
                       tables: BasisTables | None = None) -> sp.csr_matrix:
    t = tables or eval_at_quadpoints(space, rule)
    local = np.einsum("eq,eqax,eqbx->eab", t.weights, t.grads, t.grads)
    return _assemble(space, local)


@dataclass(frozen=True)
class VectorField:
    space: ScalarSpaceP2
    comp_u: np.ndarray
    comp_v: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = self.space.n_dofs
        if self.comp_u.shape != (n,) or self.comp_v.shape != (n,):
            raise ValueError(f"components must have shape ({n},)")

    def __add__(self, other: VectorField) -> VectorField:
        return VectorField(self.space, self.comp_u + other.comp_u, self.comp_v + other.comp_v)

    def __sub__(self, other: VectorField) -> VectorField:
        return VectorField(self.space, self.comp_u - other.comp_u, self.comp_v - other.comp_v)

    def __mul__(self, s: float) -> VectorField:
        return VectorField(self.space, s * self.comp_u, s * self.comp_v)

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, space: ScalarSpaceP2) -> VectorField:
        return cls(space, np.zeros(space.n_dofs), np.zeros(space.n_dofs))


def l2_inner(a: VectorField, b: VectorField, M: sp.spmatrix) -> float:
    if a.space.n_dofs != b.space.n_dofs or M.shape[0] != a.space.n_dofs:
        raise ValueError("dimension mismatch between fields and mass matrix")
    return float(a.comp_u @ (M @ b.comp_u) + a.comp_v @ (M @ b.comp_v))


def interpolate(fn: Callable, space: ScalarSpaceP2) -> VectorField:
    """Nodal P2 interpolation of ``fn(x, y) -> (u, v)``; ``fn`` must accept arrays."""
    x, y = space.dof_coords[:, 0], space.dof_coords[:, 1]
    u, v = fn(x, y)
    u = np.broadcast_to(np.asarray(u, dtype=float), x.shape).copy()
    v = np.broadcast_to(np.asarray(v, dtype=float), x.shape).copy()
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        bad = np.flatnonzero(~(np.isfinite(u) & np.isfinite(v)))[0]
        raise ValueError(f"non-finite field value at dof {bad} {tuple(space.dof_coords[bad])}")
    return VectorField(space, u, v)


def locate(mesh: Mesh, x, y):
    """Containing triangle and barycentric coordinates of points in [0,1]^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any((x < 0) | (x > 1) | (y < 0) | (y > 1)):
        raise ValueError("points must lie in the unit square")
    n = mesh.n_side
    i = np.minimum((x * n).astype(int), n - 1)
    j = np.minimum((y * n).astype(int), n - 1)
    upper = (y * n - j) > (x * n - i)
    tri = 2 * (j * n + i) + upper
    p = mesh.vertices[mesh.triangles[tri]]  # (..., 3, 2)
    e1 = p[..., 1, :] - p[..., 0, :]
    e2 = p[..., 2, :] - p[..., 0, :]
    det = e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0]
    dx, dy = x - p[..., 0, 0], y - p[..., 0, 1]
    l1 = (dx * e2[..., 1] - dy * e2[..., 0]) / det
    l2 = (e1[..., 0] * dy - e1[..., 1] * dx) / det
    return tri, np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


def point_values(space: ScalarSpaceP2, coeffs: np.ndarray, x, y) -> np.ndarray:
    """Evaluate a P2 function (or the columns of a coefficient matrix) at points."""
    tri, bary = locate(space.mesh, x, y)
    N = p2_shape(bary.reshape(-1, 3))  # (P, 6)
    dofs = space.elem_dofs[tri.ravel()]  # (P, 6)
    c = np.asarray(coeffs)
    vals = np.einsum("pa,pa...->p...", N, c[dofs])
    return vals.reshape(np.shape(tri) + c.shape[1:])


def composite_rule(base: QuadratureRule, m: int) -> QuadratureRule:
    """Apply ``base`` on each of the m*m congruent sub-triangles of the reference triangle."""
    if m < 1:
        raise ValueError("subdivision count must be >= 1")
    # reference coordinates (x, y) = (L1, L2)
    bx, by = base.points[:, 1], base.points[:, 2]
    pts, wts = [], []
    for i in range(m):
        for j in range(m - i):
            # upward sub-triangle with corner (i, j)/m
            pts.append(np.column_stack([(i + bx) / m, (j + by) / m]))
            wts.append(base.weights / m**2)
            if i + j < m - 1:
                # downward sub-triangle with corner (i+1, j+1)/m
                pts.append(np.column_stack([(i + 1 - bx) / m, (j + 1 - by) / m]))
                wts.append(base.weights / m**2)
    xy = np.vstack(pts)
    bary = np.column_stack([1.0 - xy[:, 0] - xy[:, 1], xy[:, 0], xy[:, 1]])
    return QuadratureRule(bary, np.concatenate(wts), degree=base.degree)
