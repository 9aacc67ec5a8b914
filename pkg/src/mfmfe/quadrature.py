"""Vertex (trapezoidal) quadrature rules for the velocity mass term.

The rules evaluate K^{-1} rho^{-1} q . v at the reference-cell vertices
only.  Because every basis function vanishes at the corners it does not
belong to, the resulting bilinear form couples, within each cell, only the
d degrees of freedom meeting at a corner; assembling over cells yields a
per-mesh-vertex block-diagonal matrix that can be eliminated locally.

The symmetric rule samples the mapped coefficient at each corner.  The
non-symmetric variant (for highly distorted cells) freezes the coefficient
at the cell average and the test-side Jacobian at the cell center.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .mesh import REF_VERTICES, REF_VOLUME, CellKind, batch_jacobian

__all__ = [
    "QuadratureVariant",
    "LocalVertexBlock",
    "VertexQuadrature",
    "local_velocity_blocks",
    "quadrature_bilinear_form",
    "mean_permeability",
]


class QuadratureVariant(Enum):
    SYMMETRIC = "symmetric"
    NONSYMMETRIC = "nonsymmetric"


@dataclass
class LocalVertexBlock:
    """Dense coupling of the velocity DOFs meeting one corner of one cell."""

    cell: int
    vertex: int              # local reference-vertex index
    dofs: np.ndarray         # local DOF indices at this corner
    matrix: np.ndarray       # (d, d), rows = test DOFs


class VertexQuadrature:
    """Corner-block evaluator bound to a mesh (and optionally a DOF map).

    With a DOF map the corner basis values carry the global orientation
    and flux normalization; without one they are the raw cell-local
    nodal basis (used by the standalone block operation).
    """

    def __init__(self, mesh, dofmap=None):
        from .spaces import reference_basis

        self.mesh = mesh
        self.kind = mesh.kind
        basis = reference_basis(self.kind)
        self.basis = basis
        kindverts = REF_VERTICES[self.kind]
        self.weight = REF_VOLUME[self.kind] / len(kindverts)
        self.df_v, det = batch_jacobian(self.kind, mesh.cell_coords, kindverts)
        if np.any(det <= 0):
            raise ValueError("mesh contains cells with nonpositive Jacobian")
        self.j_v = det  # (N_e, n_v)
        if dofmap is not None:
            scales = dofmap.cell_dof_scale[:, basis.vertex_dofs]  # (N_e, n_v, d)
            self.corner_dofs = dofmap.cell_dofs[:, basis.vertex_dofs]
        else:
            scales = np.ones((mesh.num_cells,) + basis.vertex_dofs.shape)
            self.corner_dofs = np.broadcast_to(
                basis.vertex_dofs, (mesh.num_cells,) + basis.vertex_dofs.shape
            )
        # vtilde[c, v, j, :] = scaled value of corner DOF j at corner v
        self.vtilde = scales[..., None] * basis.vertex_values[None]
        # DF vtilde: physical (unnormalized) corner vectors, (N_e, n_v, dof, comp)
        self.df_vtilde = np.einsum("cvab,cvjb->cvja", self.df_v, self.vtilde)
        df_c, det_c = batch_jacobian(
            self.kind, mesh.cell_coords, kindverts.mean(axis=0)[None]
        )
        self.df_center = df_c[:, 0]
        self._center = kindverts.mean(axis=0)

    def physical_corner_vectors(self):
        """Piola images of the corner DOF basis at their corners."""
        return self.df_vtilde / self.j_v[..., None, None]

    def blocks_symmetric(self, kinv_vertices, rho_inv_vertices):
        """Corner blocks (N_e, n_v, d, d) of the symmetric rule.

        kinv_vertices: (N_e, n_v, d, d); rho_inv_vertices: (N_e, n_v).
        """
        scale = self.weight * rho_inv_vertices / self.j_v
        return np.einsum(
            "cvja,cvab,cvib,cv->cvji", self.df_vtilde, kinv_vertices, self.df_vtilde, scale
        )

    def blocks_nonsymmetric(self, kbar_inv, rho_inv_bar):
        """Corner blocks of the non-symmetric rule.

        kbar_inv: (N_e, d, d) inverse mean permeability; rho_inv_bar: (N_e,).
        """
        if self.kind in (CellKind.TRIANGLE, CellKind.TETRAHEDRON):
            raise ValueError("the non-symmetric rule applies to mapped cells only")
        dfc_vtilde = np.einsum("cab,cvjb->cvja", self.df_center, self.vtilde)
        scale = self.weight * rho_inv_bar[:, None] / self.j_v
        return np.einsum(
            "cvja,cab,cvib,cv->cvji", dfc_vtilde, kbar_inv, self.df_vtilde, scale
        )

    def blocks(self, permeability, rho_inv_cells, variant):
        """Corner blocks for cellwise-constant density factors."""
        verts = self.mesh.cell_coords
        centers = self.mesh.cell_centers
        if variant == QuadratureVariant.SYMMETRIC:
            k = permeability.sample(verts, centers)
            kinv = np.linalg.inv(k)
            rho_inv_v = np.broadcast_to(rho_inv_cells[:, None], self.j_v.shape)
            return self.blocks_symmetric(kinv, rho_inv_v)
        kbar = mean_permeability(self.mesh, permeability)
        return self.blocks_nonsymmetric(np.linalg.inv(kbar), rho_inv_cells)


def mean_permeability(mesh, permeability):
    """Cellwise mean of K by fixed-order Gauss integration."""
    from .gauss import cell_rule
    from .mesh import batch_map

    pts, wts = cell_rule(mesh.kind, npts=2)
    _, det = batch_jacobian(mesh.kind, mesh.cell_coords, pts)
    phys = batch_map(mesh.kind, mesh.cell_coords, pts)
    k = permeability.sample(phys, mesh.cell_centers)
    jw = np.abs(det) * wts
    return np.einsum("cp,cpab->cab", jw, k) / jw.sum(axis=1)[:, None, None]


def local_velocity_blocks(cell, refmap, permeability, rho_vertex_values, variant):
    """Corner blocks of one cell in the cell-local nodal basis.

    ``rho_vertex_values`` are the density samples at the cell's vertices
    (all equal for elementwise-constant pressure).  Blocks are returned per
    local corner; summing q^T M v over corners evaluates the local rule.
    """
    from .mesh import Mesh

    single = Mesh(refmap.kind, refmap.vertex_coords, [list(range(refmap.kind.num_vertices))])
    quad = VertexQuadrature(single)
    rho = np.asarray(rho_vertex_values, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("density samples must be positive")
    verts = single.cell_coords
    permeability.check_spd(verts, single.cell_centers)
    if variant == QuadratureVariant.SYMMETRIC:
        kinv = np.linalg.inv(permeability.sample(verts, single.cell_centers))
        blocks = quad.blocks_symmetric(kinv, (1.0 / rho)[None, :])
    else:
        kbar = mean_permeability(single, permeability)
        blocks = quad.blocks_nonsymmetric(np.linalg.inv(kbar), np.array([1.0 / rho.mean()]))
    return [
        LocalVertexBlock(
            cell=cell,
            vertex=v,
            dofs=quad.basis.vertex_dofs[v].copy(),
            matrix=blocks[0, v],
        )
        for v in range(blocks.shape[1])
    ]


def quadrature_bilinear_form(q, v, permeability, pressure, eos, variant):
    """Global vertex-rule value of (K^{-1} rho^{-1}(p) q, v)_Q."""
    from .physics import density

    if q.mesh is not v.mesh:
        raise ValueError("fields live on different meshes")
    mesh = q.mesh
    dofmap = q.dofmap
    quad = VertexQuadrature(mesh, dofmap)
    rho_inv = 1.0 / density(eos, pressure.values)
    blocks = quad.blocks(permeability, rho_inv, variant)
    qc = q.coefficients[quad.corner_dofs]  # (N_e, n_v, d)
    vc = v.coefficients[quad.corner_dofs]
    return float(np.einsum("cvj,cvji,cvi->", vc, blocks, qc))
