"""Nested triangular meshes and vector P1 elements with zero boundary trace.

Uniform red refinement makes every coarse P1 function exactly representable on
the finer level, so the discrete spaces are nested.  Degrees of freedom are the
two velocity components at each interior vertex, interleaved as
``2 * free_index + component``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.spatial import Delaunay

from .errors import LevelMismatch, MeshError
from .spaces import DiscreteField

__all__ = [
    "MeshLevel",
    "FESpace",
    "FEFunction",
    "TRIANGLE_RULES",
    "build_mesh_hierarchy",
    "refine",
    "fe_space",
    "interpolate",
    "symmetric_gradient",
    "gradient",
    "nodal_symmetric_gradient",
    "l2_inner",
    "prolong",
]

MAX_LEVELS = 8

_S15 = math.sqrt(15.0)
_A1, _A2 = (6.0 - _S15) / 21.0, (6.0 + _S15) / 21.0
_W1, _W2 = (155.0 - _S15) / 1200.0, (155.0 + _S15) / 1200.0

# barycentric points and weights summing to one
TRIANGLE_RULES = {
    1: (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])),
    3: (np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
        np.full(3, 1 / 3)),
    7: (np.array([[1 / 3, 1 / 3, 1 / 3],
                  [_A1, _A1, 1 - 2 * _A1], [_A1, 1 - 2 * _A1, _A1], [1 - 2 * _A1, _A1, _A1],
                  [_A2, _A2, 1 - 2 * _A2], [_A2, 1 - 2 * _A2, _A2], [1 - 2 * _A2, _A2, _A2]]),
        np.array([9 / 40, _W1, _W1, _W1, _W2, _W2, _W2])),
}


@dataclass(eq=False)
class MeshLevel:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_mask: np.ndarray
    parent: "MeshLevel | None" = None
    level_index: int = 0
    domain: str = "unit_square"
    # parent-vertex pair per vertex ((i, i) for inherited vertices)
    edge_parents: np.ndarray | None = field(default=None, repr=False)
    tri_parent: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        v = self.vertices[self.triangles]
        area2 = ((v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
                 - (v[:, 2, 0] - v[:, 0, 0]) * (v[:, 1, 1] - v[:, 0, 1]))
        if np.any(area2 <= 0):
            raise MeshError("mesh has non-positively oriented triangles")
        self.areas = 0.5 * area2
        for arr in (self.vertices, self.triangles, self.boundary_mask):
            arr.setflags(write=False)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def n_interior(self):
        return int(np.count_nonzero(~self.boundary_mask))

    @property
    def measure(self) -> float:
        return float(np.sum(self.areas))

    def is_descendant_of(self, other: "MeshLevel") -> bool:
        m = self
        while m is not None:
            if m is other:
                return True
            m = m.parent
        return False

    def __repr__(self):
        return (f"MeshLevel({self.domain}, level={self.level_index}, "
                f"vertices={self.n_vertices}, triangles={self.n_triangles})")


def _edges(triangles):
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    e.sort(axis=1)
    uniq, inverse, counts = np.unique(e, axis=0, return_inverse=True, return_counts=True)
    return uniq, inverse.reshape(3, -1).T, counts


def refine(mesh: MeshLevel) -> MeshLevel:
    """Uniform red refinement: every triangle splits into four similar ones."""
    edges, tri_edge, counts = _edges(mesh.triangles)
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])
    boundary = np.concatenate([mesh.boundary_mask, counts == 1])
    t = mesh.triangles
    m01, m12, m20 = (nv + tri_edge[:, 0], nv + tri_edge[:, 1], nv + tri_edge[:, 2])
    children = np.stack([
        np.column_stack([t[:, 0], m01, m20]),
        np.column_stack([m01, t[:, 1], m12]),
        np.column_stack([m20, m12, t[:, 2]]),
        np.column_stack([m01, m12, m20]),
    ], axis=1).reshape(-1, 3)
    tri_parent = np.repeat(np.arange(mesh.n_triangles), 4)
    own = np.arange(nv)
    edge_parents = np.vstack([np.column_stack([own, own]), edges])
    return MeshLevel(vertices, children, boundary, parent=mesh,
                     level_index=mesh.level_index + 1, domain=mesh.domain,
                     edge_parents=edge_parents, tri_parent=tri_parent)


def _unit_square():
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    triangles = np.array([[0, 1, 2], [0, 2, 3]])
    return MeshLevel(vertices, triangles, np.ones(4, dtype=bool), domain="unit_square")


def _disk(radius):
    if not radius > 0 or not math.isfinite(radius):
        raise MeshError(f"disk radius must be positive and finite, got {radius}")
    pts = [np.zeros((1, 2))]
    for ring, count in ((0.5, 6), (1.0, 12)):
        ang = 2 * np.pi * np.arange(count) / count
        pts.append(ring * radius * np.column_stack([np.cos(ang), np.sin(ang)]))
    vertices = np.vstack(pts)
    triangles = Delaunay(vertices).simplices.astype(np.int64)
    v = vertices[triangles]
    area2 = ((v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
             - (v[:, 2, 0] - v[:, 0, 0]) * (v[:, 1, 1] - v[:, 0, 1]))
    flip = area2 < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    triangles = triangles[np.lexsort(triangles.T[::-1])]
    boundary = np.zeros(len(vertices), dtype=bool)
    boundary[7:] = True
    return MeshLevel(vertices, triangles, boundary, domain=f"disk({radius:g})")


def parse_domain(domain) -> tuple[str, float]:
    if isinstance(domain, tuple):
        return domain[0], float(domain[1])
    text = str(domain).strip().replace(" ", "")
    if text == "unit_square":
        return "unit_square", 1.0
    if text.startswith("disk"):
        inner = text[4:].strip("()")
        try:
            return "disk", float(inner) if inner else 1.0
        except ValueError as exc:
            raise MeshError(f"bad disk radius in {domain!r}") from exc
    raise MeshError(f"unknown domain {domain!r}")


def build_mesh_hierarchy(domain="unit_square", levels: int = 1) -> list[MeshLevel]:
    """Coarse mesh plus ``levels - 1`` uniform refinements.

    ``domain`` is ``"unit_square"``, ``"disk(R)"`` or ``("disk", R)``.  The disk
    uses a fixed 12-gon boundary so refinement stays exactly nested.
    """
    if int(levels) != levels or not 1 <= levels <= MAX_LEVELS:
        raise MeshError(f"levels must be an integer in [1, {MAX_LEVELS}], got {levels}")
    kind, radius = parse_domain(domain)
    mesh = _unit_square() if kind == "unit_square" else _disk(radius)
    out = [mesh]
    for _ in range(levels - 1):
        out.append(refine(out[-1]))
    return out


class FESpace:
    """Vector P1 space on one mesh level, with cached geometry and mass matrix."""

    def __init__(self, mesh: MeshLevel, rule: int = 3):
        if rule not in TRIANGLE_RULES:
            raise ValueError(f"quadrature rule must be one of {sorted(TRIANGLE_RULES)}")
        self.mesh = mesh
        self.rule = rule
        free = ~mesh.boundary_mask
        self.free_vertices = np.flatnonzero(free)
        self.free_index = np.full(mesh.n_vertices, -1, dtype=np.int64)
        self.free_index[self.free_vertices] = np.arange(self.free_vertices.size)
        self.n_free = int(self.free_vertices.size)
        self.ndof = 2 * self.n_free

        tri = mesh.triangles
        v = mesh.vertices[tri]
        self.areas = mesh.areas
        # barycentric gradients: rows of inv([[1, x, y]])
        jac = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)  # (nt, 2, 2) columns
        jinv = np.linalg.inv(jac)  # rows are gradients of lambda_1, lambda_2
        g12 = jinv
        g0 = -g12.sum(axis=1, keepdims=True)
        self.bary_grads = np.concatenate([g0, g12], axis=1)  # (nt, 3, 2)

        fi = self.free_index[tri]  # (nt, 3)
        ldofs = np.empty((mesh.n_triangles, 6), dtype=np.int64)
        for a in range(3):
            for c in range(2):
                ldofs[:, 2 * a + c] = np.where(fi[:, a] >= 0, 2 * fi[:, a] + c, -1)
        self.local_dofs = ldofs

        eps = np.zeros((mesh.n_triangles, 6, 2, 2))
        for a in range(3):
            for c in range(2):
                g = self.bary_grads[:, a, :]
                eps[:, 2 * a + c, c, :] += 0.5 * g
                eps[:, 2 * a + c, :, c] += 0.5 * g
        self.eps_basis = eps  # symmetric gradient of each local basis function

        bary, w = TRIANGLE_RULES[rule]
        self.q_bary = bary
        self.q_points = np.einsum("qa,tad->tqd", bary, v)
        self.q_weights = self.areas[:, None] * w[None, :]

        self.mass = self._mass_matrix()
        self._vertex_mass = None

    def _mass_matrix(self):
        local = (np.ones((3, 3)) + np.eye(3)) / 12.0
        loc = self.areas[:, None, None] * local[None]
        rows, cols, vals = [], [], []
        ld = self.local_dofs
        for a in range(3):
            for b in range(3):
                for c in range(2):
                    r, s = ld[:, 2 * a + c], ld[:, 2 * b + c]
                    keep = (r >= 0) & (s >= 0)
                    rows.append(r[keep])
                    cols.append(s[keep])
                    vals.append(loc[keep, a, b])
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(self.ndof, self.ndof))

    def vertex_mass(self):
        """Scalar P1 mass matrix over all vertices (boundary included)."""
        if self._vertex_mass is None:
            local = (np.ones((3, 3)) + np.eye(3)) / 12.0
            tri = self.mesh.triangles
            rows = np.repeat(tri, 3, axis=1).ravel()
            cols = np.tile(tri, (1, 3)).ravel()
            vals = (self.areas[:, None, None] * local[None]).reshape(-1)
            n = self.mesh.n_vertices
            self._vertex_mass = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        return self._vertex_mass

    def scatter(self, local: np.ndarray) -> np.ndarray:
        """Sum per-triangle local vectors ``(nt, 6)`` into a global dof vector."""
        ld = self.local_dofs.ravel()
        vals = np.asarray(local, dtype=float).ravel()
        keep = ld >= 0
        return np.bincount(ld[keep], weights=vals[keep], minlength=self.ndof)

    def scatter_matrix(self, local: np.ndarray):
        """Assemble per-triangle local matrices ``(nt, 6, 6)`` into CSR."""
        ld = self.local_dofs
        rows = np.repeat(ld[:, :, None], 6, axis=2).ravel()
        cols = np.repeat(ld[:, None, :], 6, axis=1).ravel()
        vals = np.asarray(local, dtype=float).ravel()
        keep = (rows >= 0) & (cols >= 0)
        return sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(self.ndof, self.ndof))

    def local_coeffs(self, vec: np.ndarray) -> np.ndarray:
        """Gather a global dof vector into per-triangle ``(nt, 6)`` coefficients."""
        padded = np.append(np.asarray(vec, dtype=float), 0.0)
        return padded[self.local_dofs]  # index -1 hits the appended zero

    def eps_of(self, vec: np.ndarray) -> np.ndarray:
        """Per-triangle symmetric gradient ``(nt, 2, 2)`` of a dof vector."""
        return np.einsum("ti,tijk->tjk", self.local_coeffs(vec), self.eps_basis)

    def grad_of(self, vec: np.ndarray) -> np.ndarray:
        """Per-triangle full gradient ``(nt, 2, 2)``; row ``c`` is grad of component ``c``."""
        lc = self.local_coeffs(vec).reshape(-1, 3, 2)  # (nt, vertex, component)
        return np.einsum("tac,tad->tcd", lc, self.bary_grads)

    def values_at_quadrature(self, vec: np.ndarray) -> np.ndarray:
        """Function values ``(nt, nq, 2)`` at the quadrature points."""
        lc = self.local_coeffs(vec).reshape(-1, 3, 2)
        return np.einsum("qa,tac->tqc", self.q_bary, lc)

    def quadrature_points(self, t: float = 0.0) -> np.ndarray:
        pts = self.q_points.reshape(-1, 2)
        return np.column_stack([np.full(pts.shape[0], t), pts])


@lru_cache(maxsize=64)
def fe_space(mesh: MeshLevel, rule: int = 3) -> FESpace:
    return FESpace(mesh, rule)


class FEFunction:
    """Vector P1 function with implicit zero values on boundary vertices."""

    def __init__(self, mesh: MeshLevel, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        n_free = mesh.n_interior
        if coeffs.shape == (2 * n_free,):
            coeffs = coeffs.reshape(n_free, 2)
        if coeffs.shape != (n_free, 2):
            raise ValueError(f"expected ({n_free}, 2) coefficients, got {coeffs.shape}")
        self.mesh = mesh
        self.coeffs = coeffs

    @classmethod
    def zero(cls, mesh: MeshLevel) -> "FEFunction":
        return cls(mesh, np.zeros((mesh.n_interior, 2)))

    @property
    def space(self) -> FESpace:
        return fe_space(self.mesh)

    def vector(self) -> np.ndarray:
        return self.coeffs.reshape(-1).copy()

    def vertex_values(self) -> np.ndarray:
        out = np.zeros((self.mesh.n_vertices, 2))
        out[~self.mesh.boundary_mask] = self.coeffs
        return out

    def evaluate(self, points) -> np.ndarray:
        """Point values by brute-force triangle location (points outside give NaN)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        verts = self.mesh.vertices[self.mesh.triangles]
        vals = self.vertex_values()[self.mesh.triangles]
        out = np.full((points.shape[0], 2), np.nan)
        space = self.space
        for start in range(0, points.shape[0], 256):
            pts = points[start:start + 256]
            rel = pts[:, None, :] - verts[None, :, 0, :]
            lam12 = np.einsum("tad,ptd->pta", space.bary_grads[:, 1:, :], rel)
            lam = np.concatenate([1 - lam12.sum(axis=2, keepdims=True), lam12], axis=2)
            inside = np.all(lam >= -1e-12, axis=2)
            has = inside.any(axis=1)
            tri = np.argmax(inside, axis=1)
            idx = np.arange(pts.shape[0])
            res = np.einsum("pa,pac->pc", lam[idx, tri], vals[tri])
            out[start:start + 256][has] = res[has]
        return out

    def __add__(self, other):
        _same_mesh(self, other)
        return FEFunction(self.mesh, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _same_mesh(self, other)
        return FEFunction(self.mesh, self.coeffs - other.coeffs)

    def __mul__(self, alpha):
        return FEFunction(self.mesh, float(alpha) * self.coeffs)

    __rmul__ = __mul__


def _same_mesh(u, v):
    if u.mesh is not v.mesh:
        raise LevelMismatch("functions live on different mesh levels; prolong first")


def interpolate(mesh: MeshLevel, func) -> FEFunction:
    """Nodal interpolant of ``func(x) -> (N, 2)`` with boundary values dropped."""
    vals = np.asarray(func(mesh.vertices), dtype=float).reshape(mesh.n_vertices, 2)
    return FEFunction(mesh, vals[~mesh.boundary_mask])


def _per_triangle_field(space: FESpace, tensors: np.ndarray, t: float, rule: int | None):
    if rule is None or rule == 1:
        pts = space.mesh.vertices[space.mesh.triangles].mean(axis=1)
        points = np.column_stack([np.full(len(pts), t), pts])
        return DiscreteField(tensors, points, space.areas.copy(), "sym_tensor")
    sub = fe_space(space.mesh, rule)
    nq = sub.q_weights.shape[1]
    vals = np.repeat(tensors, nq, axis=0)
    return DiscreteField(vals, sub.quadrature_points(t), sub.q_weights.ravel(), "sym_tensor")


def symmetric_gradient(u: FEFunction, t: float = 0.0, rule: int | None = None) -> DiscreteField:
    """Piecewise-constant ``eps(u) = (grad u + grad u^T) / 2``.

    With ``rule=None`` the field has one node per triangle (its centroid,
    weighted by the area); otherwise the constant is repeated on the nodes of
    the chosen triangle rule.
    """
    space = fe_space(u.mesh)
    eps = space.eps_of(u.vector())
    eps = 0.5 * (eps + np.swapaxes(eps, 1, 2))
    return _per_triangle_field(space, eps, t, rule)


def nodal_symmetric_gradient(mesh: MeshLevel, values) -> np.ndarray:
    """Per-triangle ``eps`` of the P1 function with nodal ``values`` ``(nv, 2)``.

    Unlike :class:`FEFunction` the boundary values are kept, so affine fields
    such as rigid motions are reproduced exactly.
    """
    vals = np.asarray(values, dtype=float)[mesh.triangles]  # (nt, 3, 2)
    grad = np.einsum("tac,tad->tcd", vals, fe_space(mesh).bary_grads)
    return 0.5 * (grad + np.swapaxes(grad, 1, 2))


def gradient(u: FEFunction) -> np.ndarray:
    """Per-triangle full gradient ``(nt, 2, 2)``."""
    return fe_space(u.mesh).grad_of(u.vector())


def l2_inner(u: FEFunction, v: FEFunction) -> float:
    """Exact ``(u, v)_{L^2}`` through the P1 mass matrix."""
    _same_mesh(u, v)
    M = fe_space(u.mesh).mass
    return float(u.vector() @ (M @ v.vector()))


def prolong(u: FEFunction, fine: MeshLevel) -> FEFunction:
    """Exact representation of a coarse function on a descendant level."""
    if not fine.is_descendant_of(u.mesh):
        raise LevelMismatch("target mesh is not a refinement of the function's mesh")
    chain = []
    m = fine
    while m is not u.mesh:
        chain.append(m)
        m = m.parent
    vals = u.vertex_values()
    for level in reversed(chain):
        ep = level.edge_parents
        vals = 0.5 * (vals[ep[:, 0]] + vals[ep[:, 1]])
    return FEFunction(fine, vals[~fine.boundary_mask])
