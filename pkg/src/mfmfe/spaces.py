"""Velocity/pressure finite element spaces and degree-of-freedom management.

The velocity space on each reference cell is the lowest-order H(div) space
whose normal trace on every face is determined by its values at the face
vertices (linear on edges and triangle faces, bilinear on hexahedron
faces).  Bases are constructed numerically by solving the nodal system
over a monomial/curl spanning set; correctness is enforced by the duality
invariant checked at construction time.

Global velocity coefficients follow the volumetric-flux convention: the
coefficient attached to face e and vertex r is (u . n_e)(r) |e|, with the
global face normal pointing out of the lower-index adjacent cell.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import gauss
from .mesh import (
    REF_FACES,
    REF_NORMALS,
    REF_VERTICES,
    BoundaryKind,
    CellKind,
    batch_jacobian,
    batch_map,
)

__all__ = [
    "BasisSet",
    "DofMap",
    "VelocityField",
    "PressureField",
    "reference_basis",
    "piola_transform",
    "build_dof_map",
    "interpolate_velocity",
    "project_pressure",
]


def _span_triangle(pts):
    x, y = pts[..., 0], pts[..., 1]
    zero, one = np.zeros_like(x), np.ones_like(x)
    vals = [
        (one, zero), (x, zero), (y, zero),
        (zero, one), (zero, x), (zero, y),
    ]
    divs = [0.0, 1.0, 0.0, 0.0, 0.0, 1.0]
    return vals, divs


def _span_quad(pts):
    x, y = pts[..., 0], pts[..., 1]
    vals, divs = _span_triangle(pts)
    vals = vals + [(x * x, -2 * x * y), (2 * x * y, -y * y)]
    divs = divs + [0.0, 0.0]
    return vals, divs


def _span_tet(pts):
    x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
    zero, one = np.zeros_like(x), np.ones_like(x)
    vals, divs = [], []
    for a in range(3):
        for mono, dmono in ((one, (0, 0, 0)), (x, (1, 0, 0)), (y, (0, 1, 0)), (z, (0, 0, 1))):
            vec = [zero, zero, zero]
            vec[a] = mono
            vals.append(tuple(vec))
            divs.append(float(dmono[a]))
    return vals, divs


def _span_hex(pts):
    x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
    zero = np.zeros_like(x)
    vals, divs = _span_tet(pts)
    curls = [
        (x * z, -y * z, zero),          # curl (0, 0, xyz)
        (2 * x * y, -y * y, zero),      # curl (0, 0, xy^2)
        (zero, x * y, -x * z),          # curl (xyz, 0, 0)
        (zero, 2 * y * z, -z * z),      # curl (yz^2, 0, 0)
        (-x * y, zero, y * z),          # curl (0, xyz, 0)
        (-x * x, zero, 2 * x * z),      # curl (0, x^2 z, 0)
        (zero, -2 * x * z, zero),       # curl (0, 0, x^2 z)
        (x * x * z, -2 * x * y * z, zero),  # curl (0, 0, x^2 yz)
        (zero, zero, -2 * x * y),       # curl (xy^2, 0, 0)
        (zero, x * y * y, -2 * x * y * z),  # curl (xy^2 z, 0, 0)
        (-2 * y * z, zero, zero),       # curl (0, yz^2, 0)
        (-2 * x * y * z, zero, y * z * z),  # curl (0, xyz^2, 0)
    ]
    vals = vals + curls
    divs = divs + [0.0] * 12
    return vals, divs


_SPAN = {
    CellKind.TRIANGLE: _span_triangle,
    CellKind.QUADRILATERAL: _span_quad,
    CellKind.TETRAHEDRON: _span_tet,
    CellKind.HEXAHEDRON: _span_hex,
}


def _span_eval(kind, pts):
    """Spanning-set values (n_pts, n_span, d) and constant divergences."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    vals, divs = _SPAN[kind](pts)
    arr = np.stack([np.stack(v, axis=-1) for v in vals], axis=-2)
    return arr, np.asarray(divs)


class BasisSet:
    """Nodal velocity basis on one reference cell.

    Basis j is dual to the functional "normal component at vertex
    ``dof_vertices[j]`` of face ``dof_faces[j]``".
    """

    def __init__(self, kind):
        self.kind = kind
        faces = REF_FACES[kind]
        normals = REF_NORMALS[kind]
        verts = REF_VERTICES[kind]
        self.dof_faces = np.array([f for f, face in enumerate(faces) for _ in face])
        self.dof_vertices = np.array([v for face in faces for v in face])
        self.n_vdofs = self.dof_faces.size

        pts = verts[self.dof_vertices]
        span_vals, span_divs = _span_eval(kind, pts)  # (n_dofs, n_span, d)
        if span_vals.shape[1] != self.n_vdofs:
            raise AssertionError("spanning set size does not match DOF count")
        nodal = np.einsum("ksd,kd->ks", span_vals, normals[self.dof_faces])
        try:
            self.coeffs = np.linalg.solve(nodal, np.eye(self.n_vdofs))
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise AssertionError(f"singular nodal system for {kind}") from exc
        self.div = span_divs @ self.coeffs  # constant reference divergences
        err = np.abs(nodal @ self.coeffs - np.eye(self.n_vdofs)).max()
        if err > 1e-12:
            raise AssertionError(f"nodal duality violated for {kind}: {err:.2e}")

        # corner structure: the d DOFs whose vertex is each reference corner
        d = kind.dim
        self.vertex_dofs = np.stack(
            [np.nonzero(self.dof_vertices == v)[0] for v in range(len(verts))]
        )
        if self.vertex_dofs.shape[1] != d:
            raise AssertionError("each corner must carry exactly d DOFs")
        vals = self.eval(verts)  # (n_v, n_dofs, d)
        self.vertex_values = np.stack(
            [vals[v][self.vertex_dofs[v]] for v in range(len(verts))]
        )  # (n_v, d, d): values of the corner DOFs at their own corner

    def eval(self, pts):
        """Basis values at reference points: (n_pts, n_vdofs, d)."""
        span_vals, _ = _span_eval(self.kind, pts)
        return np.einsum("psd,sj->pjd", span_vals, self.coeffs)


@lru_cache(maxsize=None)
def reference_basis(kind):
    return BasisSet(kind)


def piola_transform(refmap, xhat, vhat, divhat=None):
    """Map a reference vector (and divergence) to the physical element.

    Returns J^{-1} DF vhat, and J^{-1} divhat when a divergence is given.
    """
    from .mesh import jacobian

    df, J = jacobian(refmap, xhat)
    v = (df @ np.asarray(vhat, dtype=float)) / J
    if divhat is None:
        return v
    return v, np.asarray(divhat) / J


@dataclass
class DofMap:
    """Vertex-grouped velocity numbering plus cell-centered pressures."""

    L: int
    num_pressures: int
    n_face_vertices: int
    dof_face: np.ndarray       # (L,) global face of each velocity DOF
    dof_vertex: np.ndarray     # (L,) global mesh vertex of each velocity DOF
    cell_dofs: np.ndarray      # (N_e, n_ldofs) local -> global DOF
    cell_dof_scale: np.ndarray  # (N_e, n_ldofs) orientation sign x sigma / |e|
    essential: np.ndarray      # (L,) True for u.n = 0 constrained DOFs
    vertex_dof_lists: list     # per mesh vertex: array of its DOF indices

    @property
    def group_sizes(self):
        return np.array([len(g) for g in self.vertex_dof_lists])


def build_dof_map(mesh):
    """Number velocity DOFs per (face, vertex) pair and group them by vertex."""
    basis = reference_basis(mesh.kind)
    n = mesh.faces.shape[1]
    L = n * mesh.num_faces
    dof_face = np.repeat(np.arange(mesh.num_faces), n)
    dof_vertex = mesh.faces.ravel()

    nl = basis.n_vdofs
    cell_dofs = np.empty((mesh.num_cells, nl), dtype=np.int64)
    sigma = _dof_stretch(mesh, basis)
    scale = np.empty((mesh.num_cells, nl))
    for j in range(nl):
        lf, lv = basis.dof_faces[j], basis.dof_vertices[j]
        gface = mesh.cell_faces[:, lf]
        gvert = mesh.cells[:, lv]
        pos = np.argmax(mesh.faces[gface] == gvert[:, None], axis=1)
        if not np.all(mesh.faces[gface, pos] == gvert):
            raise ValueError("non-conforming connectivity: face vertex not found")
        cell_dofs[:, j] = n * gface + pos
        sign = mesh.cell_face_sign[:, lf].astype(float)
        scale[:, j] = sign * sigma[:, j] / mesh.face_measures[gface]

    essential = (mesh.boundary_kind == BoundaryKind.NEUMANN.value)[dof_face]

    order = np.argsort(dof_vertex, kind="stable")
    counts = np.bincount(dof_vertex, minlength=mesh.num_vertices)
    splits = np.cumsum(counts)[:-1]
    vertex_dof_lists = np.split(order, splits)

    return DofMap(
        L=L,
        num_pressures=mesh.num_cells,
        n_face_vertices=n,
        dof_face=dof_face,
        dof_vertex=dof_vertex,
        cell_dofs=cell_dofs,
        cell_dof_scale=scale,
        essential=essential,
        vertex_dof_lists=vertex_dof_lists,
    )


def _dof_stretch(mesh, basis):
    """|cof(DF) n_hat| at each local DOF's vertex: face-measure stretch."""
    kind = mesh.kind
    df, det = batch_jacobian(kind, mesh.cell_coords, REF_VERTICES[kind])
    cof = det[..., None, None] * np.linalg.inv(df).swapaxes(-1, -2)
    nhat = REF_NORMALS[kind][basis.dof_faces]  # (n_ldofs, d)
    cof_at = cof[:, basis.dof_vertices]        # (N_e, n_ldofs, d, d)
    return np.linalg.norm(np.einsum("cjab,jb->cja", cof_at, nhat), axis=2)


@dataclass
class VelocityField:
    mesh: object
    dofmap: DofMap
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.dofmap.L,):
            raise ValueError("coefficient vector does not match the DOF map")


@dataclass
class PressureField:
    mesh: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.num_cells,):
            raise ValueError("pressure vector does not match the cell count")


def interpolate_velocity(mesh, dofmap, u_exact):
    """Face-based interpolant: L2-project the normal trace facewise.

    The projected trace is linear (2D edges, triangle faces) or bilinear
    (hexahedron faces) in the face parameters; its vertex values scaled by
    the face measure are the coefficients.
    """
    if mesh.dim == 2:
        coeffs = _interpolate_2d(mesh, u_exact)
    else:
        coeffs = _interpolate_3d(mesh, dofmap, u_exact)
    coeffs = np.where(dofmap.essential, 0.0, coeffs)
    return VelocityField(mesh, dofmap, coeffs)


def _interpolate_2d(mesh, u_exact):
    a = mesh.vertices[mesh.faces[:, 0]]
    b = mesh.vertices[mesh.faces[:, 1]]
    t, w = gauss.gauss_1d(5)
    x = a[:, None, :] * (1 - t)[None, :, None] + b[:, None, :] * t[None, :, None]
    tang = b - a
    normal = np.column_stack([tang[:, 1], -tang[:, 0]]) / mesh.face_measures[:, None]
    un = np.einsum("fqd,fd->fq", u_exact(x), normal)
    m0 = np.einsum("fq,q->f", un, w * (1 - t))
    m1 = np.einsum("fq,q->f", un, w * t)
    # invert the P1 Gram matrix [[1/3, 1/6], [1/6, 1/3]]
    a0 = 4.0 * m0 - 2.0 * m1
    a1 = -2.0 * m0 + 4.0 * m1
    return (np.column_stack([a0, a1]) * mesh.face_measures[:, None]).ravel()


def _face_trace_basis(kind, fpts):
    a = fpts[:, 0]
    if kind in (CellKind.TRIANGLE, CellKind.QUADRILATERAL):
        return np.stack([1 - a, a], axis=-1)
    b = fpts[:, 1]
    if kind == CellKind.TETRAHEDRON:
        return np.stack([1 - a - b, a, b], axis=-1)
    return np.stack([(1 - a) * (1 - b), a * (1 - b), a * b, (1 - a) * b], axis=-1)


def _interpolate_3d(mesh, dofmap, u_exact):
    kind = mesh.kind
    basis = reference_basis(kind)
    n = dofmap.n_face_vertices
    fpts, fw = gauss.face_rule(kind)
    coeffs = np.zeros(dofmap.L)
    df_v, det_v = batch_jacobian(kind, mesh.cell_coords, REF_VERTICES[kind])
    cof_v = det_v[..., None, None] * np.linalg.inv(df_v).swapaxes(-1, -2)
    for f in range(mesh.num_faces):
        cell = mesh.face_cells[f, 0]
        lf = int(np.nonzero(mesh.cell_faces[cell] == f)[0][0])
        face_ref = REF_FACES[kind][lf]
        xhat = gauss.face_param_to_ref(kind, face_ref, fpts)
        coords = mesh.cell_coords[cell][None]
        df, det = batch_jacobian(kind, coords, xhat)
        phys = batch_map(kind, coords, xhat)[0]
        qhat = np.einsum(
            "pab,pb->pa", np.linalg.inv(df[0]), u_exact(phys)
        ) * det[0][:, None]
        ghat = qhat @ REF_NORMALS[kind][lf]
        tr = _face_trace_basis(kind, fpts)
        gram = np.einsum("pi,pj,p->ij", tr, tr, fw)
        rhs = np.einsum("pi,p,p->i", tr, ghat, fw)
        vertex_vals = np.linalg.solve(gram, rhs)
        # express in the face's canonical (owner-local) vertex order
        for k_local, vref in enumerate(face_ref):
            gv = mesh.cells[cell, vref]
            pos = int(np.nonzero(mesh.faces[f] == gv)[0][0])
            nhat = REF_NORMALS[kind][lf]
            sigma = np.linalg.norm(cof_v[cell, vref] @ nhat)
            coeffs[n * f + pos] = vertex_vals[k_local] * mesh.face_measures[f] / sigma
    return coeffs


def project_pressure(mesh, p_exact):
    """Cellwise average of a scalar function (the L2 projection onto W_h)."""
    pts, wts = gauss.cell_rule(mesh.kind, npts=3)
    _, det = batch_jacobian(mesh.kind, mesh.cell_coords, pts)
    phys = batch_map(mesh.kind, mesh.cell_coords, pts)
    jw = np.abs(det) * wts
    vals = np.einsum("cp,cp->c", jw, p_exact(phys)) / jw.sum(axis=1)
    return PressureField(mesh, vals)
