"""Assembly of the nonlinear residuals and inexact-Newton Jacobian blocks.

The discrete unknowns at a time level are the velocity coefficients U and
the cellwise pressures P.  The residuals are

    F_j = (rho^{-1}(p) K^{-1} u_h, v_j)_Q - (p_h, div v_j) - (rho(p_h) g, v_j)
    G_j = -(phi rho(p_h), w_j) - (tau div u_h, w_j)
          + (phi rho(p_h^prev) + tau f, w_j)

with every compressibility term retained.  The Jacobian drops the
compressibility terms of dF/dP, leaving the nearly symmetric block system
[[A, B], [tau B^T, D]] with A block-diagonal per mesh vertex, B the
pressure/divergence coupling, and D diagonal.

Velocity DOFs on no-flow boundary faces are constrained to zero: their A
rows/columns are replaced by the identity, their B rows are zeroed, and
their residual entry becomes the constraint residual U_j itself.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import gauss
from .mesh import REF_VOLUME, batch_jacobian, batch_map, generate_mesh
from .physics import density
from .quadrature import QuadratureVariant, VertexQuadrature, mean_permeability
from .spaces import build_dof_map, project_pressure, reference_basis

__all__ = [
    "Discretization",
    "ResidualVector",
    "JacobianBlocks",
    "assemble_residual",
    "assemble_jacobian",
]


@dataclass
class ResidualVector:
    F: np.ndarray
    G: np.ndarray

    @property
    def norm(self):
        return float(np.sqrt(np.dot(self.F, self.F) + np.dot(self.G, self.G)))


@dataclass
class JacobianBlocks:
    """A as per-cell corner blocks; B sparse; D diagonal; C = tau B^T shared."""

    corner_blocks: np.ndarray  # (N_e, n_v, d, d)
    B: sp.csr_matrix           # (L, N_e)
    D: np.ndarray              # (N_e,) diagonal entries
    tau: float
    variant: QuadratureVariant

    @property
    def C(self):
        return self.tau * self.B.T


class VertexGroup:
    """Vertices with identical (DOF count, adjacent cell count) signature.

    Stores stacked per-vertex data enabling batched block factorization
    and Schur accumulation.
    """

    def __init__(self, ell, m, vertex_ids):
        self.ell = ell
        self.m = m
        self.vertex_ids = vertex_ids
        self.n = len(vertex_ids)
        self.dofs = None        # (n, ell)
        self.cells = None       # (n, m)
        self.B = None           # (n, ell, m)
        self.keep = None        # (n, ell) False where essential
        self.acc_flat = None    # flat A accumulation indices
        self.acc_cell = None    # cell of each incidence
        self.acc_corner = None  # corner of each incidence
        self.s_rows = None      # COO indices of the m x m Schur scatter
        self.s_cols = None

    def assemble_blocks(self, corner_blocks):
        vals = corner_blocks[self.acc_cell, self.acc_corner]
        flat = np.bincount(
            self.acc_flat, weights=vals.ravel(), minlength=self.n * self.ell**2
        )
        A = flat.reshape(self.n, self.ell, self.ell)
        keep = self.keep
        A *= keep[:, :, None] * keep[:, None, :]
        idx = np.arange(self.ell)
        A[:, idx, idx] += ~keep
        return A


class Discretization:
    """Mesh-bound precomputation of all time-independent operators."""

    def __init__(self, spec):
        self.spec = spec
        mesh = spec.mesh
        if mesh is None:
            mesh = generate_mesh(spec.mesh_params, spec.boundary_classifier)
        else:
            mesh.mark_boundaries(spec.boundary_classifier)
        self.mesh = mesh
        self.dofmap = build_dof_map(mesh)
        self.basis = reference_basis(mesh.kind)
        self.quad = VertexQuadrature(mesh, self.dofmap)
        self.variant = spec.variant
        self._build_divergence()
        self._build_geometry_blocks()
        self._build_source_cache()
        self._build_vertex_groups()
        self.phi_vol = spec.porosity * mesh.cell_volumes

    # -- time-independent operators -----------------------------------------

    def _build_divergence(self):
        mesh, dofmap, basis = self.mesh, self.dofmap, self.basis
        ne, nl = dofmap.cell_dofs.shape
        refvol = REF_VOLUME[mesh.kind]
        vals = -dofmap.cell_dof_scale * basis.div[None, :] * refvol
        rows = dofmap.cell_dofs.ravel()
        cols = np.repeat(np.arange(ne), nl)
        data = vals.ravel().copy()
        data[dofmap.essential[rows]] = 0.0
        self.B = sp.coo_matrix(
            (data, (rows, cols)), shape=(dofmap.L, ne)
        ).tocsr()
        self._b_triplets = (rows, cols, data)

    def _build_geometry_blocks(self):
        spec, mesh, quad = self.spec, self.mesh, self.quad
        if self.variant == QuadratureVariant.SYMMETRIC:
            k = spec.permeability.sample(mesh.cell_coords, mesh.cell_centers)
            self.blocks_geo = quad.blocks_symmetric(
                np.linalg.inv(k), np.ones_like(quad.j_v)
            )
        else:
            kbar = mean_permeability(mesh, spec.permeability)
            self.blocks_geo = quad.blocks_nonsymmetric(
                np.linalg.inv(kbar), np.ones(mesh.num_cells)
            )

    def _build_source_cache(self):
        mesh = self.mesh
        pts, wts = gauss.cell_rule(mesh.kind, npts=2)
        _, det = batch_jacobian(mesh.kind, mesh.cell_coords, pts)
        self._src_points = batch_map(mesh.kind, mesh.cell_coords, pts)
        self._src_jw = np.abs(det) * wts
        g = self.spec.gravity
        self._grav_cellvec = None
        if np.any(g != 0.0):
            gpts, gwts = gauss.cell_rule(mesh.kind, npts=2)
            basis_vals = self.basis.eval(gpts)  # (p, nl, d)
            df, det = batch_jacobian(mesh.kind, mesh.cell_coords, gpts)
            # int_E v_j dx = int_ref DF vhat_j  (Piola absorbs J)
            vecs = np.einsum("cpab,pjb,p->cja", df, basis_vals, gwts)
            self._grav_cellvec = vecs * self.dofmap.cell_dof_scale[:, :, None]

    def source_integrals(self, t):
        f = self.spec.source(self._src_points, t)
        return np.einsum("cp,cp->c", self._src_jw, f)

    # -- vertex grouping for local elimination ------------------------------

    def _build_vertex_groups(self):
        mesh, dofmap = self.mesh, self.dofmap
        nv = mesh.num_vertices
        ne, ncv = mesh.cells.shape

        inc_vert = mesh.cells.ravel()
        inc_cell = np.repeat(np.arange(ne), ncv)
        order = np.argsort(inc_vert, kind="stable")
        counts = np.bincount(inc_vert, minlength=nv)
        cell_lists = np.split(inc_cell[order], np.cumsum(counts)[:-1])

        sizes_l = dofmap.group_sizes
        sizes_m = counts
        keys = {}
        for v in range(nv):
            keys.setdefault((int(sizes_l[v]), int(sizes_m[v])), []).append(v)
        self.groups = []
        group_of_vertex = np.empty(nv, dtype=np.int64)
        index_in_group = np.empty(nv, dtype=np.int64)
        for (ell, m), verts in sorted(keys.items()):
            g = VertexGroup(ell, m, np.asarray(verts))
            g.dofs = np.stack([dofmap.vertex_dof_lists[v] for v in verts])
            g.cells = np.stack([cell_lists[v] for v in verts])
            g.keep = ~dofmap.essential[g.dofs]
            gi = len(self.groups)
            group_of_vertex[g.vertex_ids] = gi
            index_in_group[g.vertex_ids] = np.arange(g.n)
            self.groups.append(g)

        # corner incidences -> accumulation indices per group
        corner_dofs = self.quad.corner_dofs  # (N_e, n_v_cell, d)
        d = mesh.dim
        inc_corner = np.tile(np.arange(ncv), ne)
        inc_group = group_of_vertex[inc_vert]
        inc_gidx = index_in_group[inc_vert]
        for gi, g in enumerate(self.groups):
            sel = np.nonzero(inc_group == gi)[0]
            cells_sel = inc_cell[sel]
            corners_sel = inc_corner[sel]
            gidx = inc_gidx[sel]
            cdofs = corner_dofs[cells_sel, corners_sel]  # (k, d)
            pos = np.argmax(g.dofs[gidx][:, None, :] == cdofs[:, :, None], axis=2)
            base = gidx * g.ell * g.ell
            flat = (
                base[:, None, None]
                + pos[:, :, None] * g.ell
                + pos[:, None, :]
            )
            g.acc_flat = flat.ravel()
            g.acc_cell = cells_sel
            g.acc_corner = corners_sel
            g.s_rows = np.repeat(g.cells, g.m, axis=1).ravel()
            g.s_cols = np.tile(g.cells, (1, g.m)).ravel()

        # B restricted to each group, dense (n, ell, m)
        rows, cols, data = self._b_triplets
        dof_group = group_of_vertex[dofmap.dof_vertex]
        dof_gidx = index_in_group[dofmap.dof_vertex]
        for gi, g in enumerate(self.groups):
            sel = np.nonzero(dof_group[rows] == gi)[0]
            r, c, val = rows[sel], cols[sel], data[sel]
            i = dof_gidx[r]
            a = np.argmax(g.dofs[i] == r[:, None], axis=1)
            j = np.argmax(g.cells[i] == c[:, None], axis=1)
            flat = (i * g.ell + a) * g.m + j
            g.B = np.bincount(
                flat, weights=val, minlength=g.n * g.ell * g.m
            ).reshape(g.n, g.ell, g.m)

    # -- convenience ---------------------------------------------------------

    def corner_blocks(self, P):
        """Velocity quadrature blocks at the given pressure iterate."""
        rho_inv = 1.0 / density(self.spec.eos, P)
        return self.blocks_geo * rho_inv[:, None, None, None]

    def initial_state(self):
        P0 = project_pressure(self.mesh, self.spec.initial_pressure).values
        return np.zeros(self.dofmap.L), P0


def _apply_corner_blocks(disc, corner_blocks, U):
    dofs = disc.quad.corner_dofs
    uc = U[dofs]
    yc = np.einsum("cvji,cvi->cvj", corner_blocks, uc)
    return np.bincount(dofs.ravel(), weights=yc.ravel(), minlength=disc.dofmap.L)


def assemble_residual(disc, U, P, P_prev, t_next, f_int=None):
    """Full nonlinear residual (all compressibility terms retained)."""
    spec = disc.spec
    if f_int is None:
        f_int = disc.source_integrals(t_next)
    rho = density(spec.eos, P)
    blocks = disc.corner_blocks(P)
    F = _apply_corner_blocks(disc, blocks, U) + disc.B @ P
    if disc._grav_cellvec is not None:
        gv = rho[:, None] * np.einsum("cja,a->cj", disc._grav_cellvec, spec.gravity)
        F -= np.bincount(
            disc.dofmap.cell_dofs.ravel(), weights=gv.ravel(), minlength=disc.dofmap.L
        )
    ess = disc.dofmap.essential
    F[ess] = U[ess]
    rho_prev = density(spec.eos, P_prev)
    tau = spec.tau
    G = -disc.phi_vol * rho + tau * (disc.B.T @ U) + disc.phi_vol * rho_prev + tau * f_int
    return ResidualVector(F=F, G=G)


def assemble_jacobian(disc, P):
    """Inexact Newton Jacobian: compressibility terms of dF/dP dropped."""
    spec = disc.spec
    rho = density(spec.eos, P)
    D = -spec.porosity * spec.eos.c_f * rho * disc.mesh.cell_volumes
    return JacobianBlocks(
        corner_blocks=disc.corner_blocks(P),
        B=disc.B,
        D=D,
        tau=spec.tau,
        variant=disc.variant,
    )
