"""Reference cells, element mappings and quadrilateral mesh generators.

Cells are mapped from fixed reference elements: affine maps for simplices,
bilinear for quadrilaterals and trilinear for hexahedra.  The 2D generators
produce the four logically rectangular families used by the verification
harness (uniform, smoothly mapped, Kershaw-type and randomly h-perturbed).
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "CellKind",
    "RefMap",
    "Mesh",
    "MeshFamilyParams",
    "BoundaryKind",
    "MeshGenerationError",
    "map_to_physical",
    "jacobian",
    "generate_mesh",
    "h2_parallelogram_defect",
]


class CellKind(Enum):
    TRIANGLE = "triangle"
    QUADRILATERAL = "quadrilateral"
    TETRAHEDRON = "tetrahedron"
    HEXAHEDRON = "hexahedron"

    @property
    def dim(self):
        return 2 if self in (CellKind.TRIANGLE, CellKind.QUADRILATERAL) else 3

    @property
    def num_vertices(self):
        return _NUM_VERTICES[self]

    @property
    def num_faces(self):
        return len(REF_FACES[self])

    @property
    def is_affine(self):
        return self in (CellKind.TRIANGLE, CellKind.TETRAHEDRON)


_NUM_VERTICES = {
    CellKind.TRIANGLE: 3,
    CellKind.QUADRILATERAL: 4,
    CellKind.TETRAHEDRON: 4,
    CellKind.HEXAHEDRON: 8,
}

# Reference vertex coordinates (counterclockwise unit square; unit cube
# numbered bottom face then top face).
REF_VERTICES = {
    CellKind.TRIANGLE: np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
    CellKind.QUADRILATERAL: np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
    CellKind.TETRAHEDRON: np.array(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    ),
    CellKind.HEXAHEDRON: np.array(
        [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 1.0],
            [1.0, 1.0, 1.0],
            [0.0, 1.0, 1.0],
        ]
    ),
}

# Faces as tuples of reference-vertex indices, with outward unit normals.
REF_FACES = {
    CellKind.TRIANGLE: ((0, 1), (1, 2), (2, 0)),
    CellKind.QUADRILATERAL: ((0, 1), (1, 2), (2, 3), (3, 0)),
    CellKind.TETRAHEDRON: ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)),
    CellKind.HEXAHEDRON: (
        (0, 1, 2, 3),
        (0, 1, 5, 4),
        (1, 2, 6, 5),
        (3, 2, 6, 7),
        (0, 3, 7, 4),
        (4, 5, 6, 7),
    ),
}

_SQRT2 = np.sqrt(2.0)
_SQRT3 = np.sqrt(3.0)
REF_NORMALS = {
    CellKind.TRIANGLE: np.array([[0.0, -1.0], [1.0 / _SQRT2, 1.0 / _SQRT2], [-1.0, 0.0]]),
    CellKind.QUADRILATERAL: np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]),
    CellKind.TETRAHEDRON: np.array(
        [
            [0.0, 0.0, -1.0],
            [0.0, -1.0, 0.0],
            [-1.0, 0.0, 0.0],
            [1.0 / _SQRT3, 1.0 / _SQRT3, 1.0 / _SQRT3],
        ]
    ),
    CellKind.HEXAHEDRON: np.array(
        [
            [0.0, 0.0, -1.0],
            [0.0, -1.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
        ]
    ),
}

REF_VOLUME = {
    CellKind.TRIANGLE: 0.5,
    CellKind.QUADRILATERAL: 1.0,
    CellKind.TETRAHEDRON: 1.0 / 6.0,
    CellKind.HEXAHEDRON: 1.0,
}


class MeshGenerationError(RuntimeError):
    pass


class BoundaryKind(Enum):
    DIRICHLET = 1
    NEUMANN = 2


def shape_values(kind, xhat):
    """Nodal shape functions of the mapping at reference points (..., d)."""
    xhat = np.asarray(xhat, dtype=float)
    if kind == CellKind.TRIANGLE:
        x, y = xhat[..., 0], xhat[..., 1]
        return np.stack([1.0 - x - y, x, y], axis=-1)
    if kind == CellKind.QUADRILATERAL:
        x, y = xhat[..., 0], xhat[..., 1]
        return np.stack([(1 - x) * (1 - y), x * (1 - y), x * y, (1 - x) * y], axis=-1)
    if kind == CellKind.TETRAHEDRON:
        x, y, z = xhat[..., 0], xhat[..., 1], xhat[..., 2]
        return np.stack([1.0 - x - y - z, x, y, z], axis=-1)
    if kind == CellKind.HEXAHEDRON:
        x, y, z = xhat[..., 0], xhat[..., 1], xhat[..., 2]
        return np.stack(
            [
                (1 - x) * (1 - y) * (1 - z),
                x * (1 - y) * (1 - z),
                x * y * (1 - z),
                (1 - x) * y * (1 - z),
                (1 - x) * (1 - y) * z,
                x * (1 - y) * z,
                x * y * z,
                (1 - x) * y * z,
            ],
            axis=-1,
        )
    raise ValueError(f"unknown cell kind {kind}")


def shape_gradients(kind, xhat):
    """Reference gradients of the shape functions, shape (..., n_v, d)."""
    xhat = np.asarray(xhat, dtype=float)
    base = xhat.shape[:-1]
    one = np.ones(base)
    zero = np.zeros(base)
    if kind == CellKind.TRIANGLE:
        g = [[-one, -one], [one, zero], [zero, one]]
    elif kind == CellKind.QUADRILATERAL:
        x, y = xhat[..., 0], xhat[..., 1]
        g = [
            [-(1 - y), -(1 - x)],
            [(1 - y), -x],
            [y, x],
            [-y, (1 - x)],
        ]
    elif kind == CellKind.TETRAHEDRON:
        g = [
            [-one, -one, -one],
            [one, zero, zero],
            [zero, one, zero],
            [zero, zero, one],
        ]
    elif kind == CellKind.HEXAHEDRON:
        x, y, z = xhat[..., 0], xhat[..., 1], xhat[..., 2]
        g = [
            [-(1 - y) * (1 - z), -(1 - x) * (1 - z), -(1 - x) * (1 - y)],
            [(1 - y) * (1 - z), -x * (1 - z), -x * (1 - y)],
            [y * (1 - z), x * (1 - z), -x * y],
            [-y * (1 - z), (1 - x) * (1 - z), -(1 - x) * y],
            [-(1 - y) * z, -(1 - x) * z, (1 - x) * (1 - y)],
            [(1 - y) * z, -x * z, x * (1 - y)],
            [y * z, x * z, x * y],
            [-y * z, (1 - x) * z, (1 - x) * y],
        ]
    else:
        raise ValueError(f"unknown cell kind {kind}")
    return np.stack([np.stack(row, axis=-1) for row in g], axis=-2)


def in_reference_cell(kind, xhat, tol=1e-12):
    xhat = np.asarray(xhat, dtype=float)
    if kind in (CellKind.QUADRILATERAL, CellKind.HEXAHEDRON):
        return bool(np.all(xhat >= -tol) and np.all(xhat <= 1 + tol))
    return bool(np.all(xhat >= -tol) and np.all(xhat.sum(axis=-1) <= 1 + tol))


def batch_map(kind, coords, xhat):
    """Map reference points through a batch of cells.

    coords: (n_cells, n_v, d); xhat: (n_pts, d).  Returns (n_cells, n_pts, d).
    """
    n = shape_values(kind, xhat)  # (n_pts, n_v)
    return np.einsum("pv,cvd->cpd", n, coords)


def batch_jacobian(kind, coords, xhat):
    """DF and |det DF| for a batch of cells at reference points.

    Returns DF (n_cells, n_pts, d, d) with DF[a, b] = dF_a/dxhat_b, and
    det (n_cells, n_pts).
    """
    g = shape_gradients(kind, xhat)  # (n_pts, n_v, d)
    df = np.einsum("cva,pvb->cpab", coords, g)
    det = np.linalg.det(df)
    return df, det


@dataclass(frozen=True)
class RefMap:
    """Mapping from the reference cell onto one physical element."""

    kind: CellKind
    vertex_coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.vertex_coords, dtype=float)
        if coords.shape != (self.kind.num_vertices, self.kind.dim):
            raise ValueError(
                f"expected {self.kind.num_vertices} vertices of dimension "
                f"{self.kind.dim}, got array of shape {coords.shape}"
            )
        object.__setattr__(self, "vertex_coords", coords)

    def __call__(self, xhat):
        return map_to_physical(self, xhat)


def map_to_physical(refmap, xhat):
    """Evaluate the element mapping at a reference point (or points)."""
    xhat = np.asarray(xhat, dtype=float)
    if not in_reference_cell(refmap.kind, xhat):
        raise ValueError(f"point {xhat!r} outside the reference {refmap.kind.value}")
    n = shape_values(refmap.kind, xhat)
    return n @ refmap.vertex_coords


def jacobian(refmap, xhat):
    """Jacobian matrix DF and determinant J = |det DF| at a reference point."""
    xhat = np.asarray(xhat, dtype=float)
    if not in_reference_cell(refmap.kind, xhat):
        raise ValueError(f"point {xhat!r} outside the reference {refmap.kind.value}")
    g = shape_gradients(refmap.kind, xhat)
    df = np.einsum("va,...vb->...ab", refmap.vertex_coords, g)
    det = np.linalg.det(df)
    if np.any(det <= 0):
        raise MeshGenerationError(f"degenerate element: det DF = {det} at {xhat!r}")
    return df, np.abs(det)


def h2_parallelogram_defect(quad):
    """|r1 - r2 + r3 - r4| for a quadrilateral; zero iff a parallelogram.

    Accepts a quadrilateral RefMap or a (4, d) vertex array (e.g. one face
    of a hexahedron).
    """
    if isinstance(quad, RefMap):
        if quad.kind != CellKind.QUADRILATERAL:
            raise ValueError("parallelogram defect is defined for quadrilaterals")
        r = quad.vertex_coords
    else:
        r = np.asarray(quad, dtype=float)
        if r.shape[0] != 4 or r.shape[1] not in (2, 3):
            raise ValueError("expected four vertices of dimension 2 or 3")
    return float(np.linalg.norm(r[0] - r[1] + r[2] - r[3]))


class Mesh:
    """Conforming mesh of a single cell kind with oriented faces.

    Immutable after construction: geometry arrays should not be modified.
    Faces store their vertex tuple in the order induced by the lower-index
    adjacent cell, whose outward normal defines the global face normal.
    """

    def __init__(self, kind, vertices, cells, boundary_classifier=None):
        self.kind = kind
        self.dim = kind.dim
        self.vertices = np.asarray(vertices, dtype=float)
        self.cells = np.asarray(cells, dtype=np.int64)
        if self.cells.ndim != 2 or self.cells.shape[1] != kind.num_vertices:
            raise ValueError("cell array shape does not match the cell kind")
        self._build_faces()
        self._validate_geometry()
        self._compute_metrics()
        self.boundary_kind = np.zeros(self.num_faces, dtype=np.int8)
        self.mark_boundaries(boundary_classifier or (lambda x: BoundaryKind.DIRICHLET))

    # -- connectivity ------------------------------------------------------

    def _build_faces(self):
        ref_faces = REF_FACES[self.kind]
        nf, nfv = len(ref_faces), len(ref_faces[0])
        ne = self.cells.shape[0]
        # (ne * nf, nfv) face vertex tuples in cell-local order
        local = np.concatenate(
            [self.cells[:, list(f)][:, None, :] for f in ref_faces], axis=1
        ).reshape(ne * nf, nfv)
        key = np.sort(local, axis=1)
        _, first, inverse, counts = np.unique(
            key, axis=0, return_index=True, return_inverse=True, return_counts=True
        )
        if np.any(counts > 2):
            raise ValueError("non-conforming mesh: a face is shared by > 2 cells")
        self.num_faces = int(counts.size)
        self.faces = local[first]  # canonical order = owner cell's local order
        self.cell_faces = inverse.reshape(ne, nf)
        owner = first // nf
        occ_cell = np.repeat(np.arange(ne), nf)
        self.cell_face_sign = np.where(
            occ_cell[np.arange(ne * nf)] == owner[inverse], 1, -1
        ).astype(np.int8).reshape(ne, nf)
        face_cells = np.full((self.num_faces, 2), -1, dtype=np.int64)
        face_cells[:, 0] = owner
        second = counts == 2
        # the non-owner occurrence of each shared face
        order = np.argsort(inverse, kind="stable")
        starts = np.zeros(self.num_faces + 1, dtype=np.int64)
        np.cumsum(counts, out=starts[1:])
        other = order[starts[:-1][second] + 1] // nf
        face_cells[second, 1] = other
        self.face_cells = face_cells

    def _validate_geometry(self):
        kind = self.kind
        coords = self.cell_coords
        pts = np.vstack([REF_VERTICES[kind], REF_VERTICES[kind].mean(axis=0)[None, :]])
        _, det = batch_jacobian(kind, coords, pts)
        bad = np.nonzero(np.any(det <= 0.0, axis=1))[0]
        if bad.size:
            raise MeshGenerationError(
                f"cell {bad[0]} is inverted or degenerate (det DF <= 0)"
            )
        if kind == CellKind.QUADRILATERAL:
            r = coords
            for k in range(4):
                e1 = r[:, (k + 1) % 4] - r[:, k]
                e2 = r[:, (k + 2) % 4] - r[:, (k + 1) % 4]
                cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
                bad = np.nonzero(cross <= 0.0)[0]
                if bad.size:
                    raise MeshGenerationError(f"cell {bad[0]} is not convex")

    def _compute_metrics(self):
        from .gauss import cell_rule  # local import to avoid a cycle

        kind = self.kind
        coords = self.cell_coords
        pts, wts = cell_rule(kind, npts=3)
        _, det = batch_jacobian(kind, coords, pts)
        jw = np.abs(det) * wts
        self.cell_volumes = jw.sum(axis=1)
        # cell center = image of the reference centroid (the pressure
        # superconvergence point; equals the mass center on affine cells)
        center = REF_VERTICES[kind].mean(axis=0)[None]
        self.cell_centers = batch_map(kind, coords, center)[:, 0]
        diffs = coords[:, :, None, :] - coords[:, None, :, :]
        d2 = (diffs**2).sum(axis=-1)
        self.cell_diameters = np.sqrt(d2.max(axis=(1, 2)))
        self.h = float(self.cell_diameters.max())
        self.face_measures = self._face_measures()
        self.face_midpoints = self._face_midpoints()

    def _face_measures(self):
        v = self.vertices[self.faces]
        if self.dim == 2:
            return np.linalg.norm(v[:, 1] - v[:, 0], axis=1)
        if self.kind == CellKind.TETRAHEDRON:
            return 0.5 * np.linalg.norm(
                np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1
            )
        # bilinear (possibly non-planar) quad faces: integrate the area element
        from .gauss import tensor_rule

        pts, wts = tensor_rule(2, 3)
        a, b = pts[:, 0], pts[:, 1]
        sh = np.stack([(1 - a) * (1 - b), a * (1 - b), a * b, (1 - a) * b], axis=-1)
        dsh_a = np.stack([-(1 - b), (1 - b), b, -b], axis=-1)
        dsh_b = np.stack([-(1 - a), -a, a, (1 - a)], axis=-1)
        del sh
        ta = np.einsum("pv,fvd->fpd", dsh_a, v)
        tb = np.einsum("pv,fvd->fpd", dsh_b, v)
        return (np.linalg.norm(np.cross(ta, tb), axis=2) * wts).sum(axis=1)

    def _face_midpoints(self):
        return self.vertices[self.faces].mean(axis=1)

    # -- public geometry ---------------------------------------------------

    @property
    def num_cells(self):
        return self.cells.shape[0]

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def cell_coords(self):
        return self.vertices[self.cells]

    def ref_map(self, cell):
        return RefMap(self.kind, self.vertices[self.cells[cell]])

    @property
    def boundary_faces(self):
        return np.nonzero(self.face_cells[:, 1] < 0)[0]

    def mark_boundaries(self, classifier):
        """Assign Dirichlet/Neumann markers from a face-midpoint classifier."""
        marks = np.zeros(self.num_faces, dtype=np.int8)
        for f in self.boundary_faces:
            marks[f] = classifier(self.face_midpoints[f]).value
        self.boundary_kind = marks

    def outward_normal(self, cell, local_face, fpts=None):
        """Outward unit normal of a cell on one of its faces.

        2D: evaluated at the midpoint (edges are straight).  3D: evaluated
        at face-parameter points ``fpts`` (defaults to the face center).
        """
        verts = self.vertices[self.cells[cell]][list(REF_FACES[self.kind][local_face])]
        if self.dim == 2:
            t = verts[1] - verts[0]
            n = np.array([t[1], -t[0]])
            return n / np.linalg.norm(n)
        if fpts is None:
            fpts = np.array([[0.5, 0.5]]) if len(verts) == 4 else np.array([[1 / 3, 1 / 3]])
        a, b = fpts[:, 0], fpts[:, 1]
        if len(verts) == 4:
            ta = np.einsum(
                "pv,vd->pd", np.stack([-(1 - b), (1 - b), b, -b], axis=-1), verts
            )
            tb = np.einsum(
                "pv,vd->pd", np.stack([-(1 - a), -a, a, (1 - a)], axis=-1), verts
            )
        else:
            ta = np.broadcast_to(verts[1] - verts[0], (len(a), 3))
            tb = np.broadcast_to(verts[2] - verts[0], (len(a), 3))
        n = np.cross(ta, tb)
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        # orient outward: test against the vector from the cell center
        center = self.cell_centers[cell]
        mid = verts.mean(axis=0)
        if np.dot(n[0], mid - center) < 0:
            n = -n
        return n[0] if n.shape[0] == 1 else n


@dataclass(frozen=True)
class MeshFamilyParams:
    """Parameters of the generated quadrilateral mesh families."""

    family: str  # uniform | smooth | kershaw | random
    n: int
    seed: int | None = None

    def __post_init__(self):
        if self.family not in ("uniform", "smooth", "kershaw", "random"):
            raise ValueError(f"unknown mesh family {self.family!r}")
        if self.n < 2:
            raise ValueError("need at least 2 cells per direction")
        if self.family == "random" and self.seed is None:
            raise ValueError("the random family requires a seed")


def _kershaw_shift(x):
    """Zig-zag shear profile: piecewise linear between +/-0.3 across four bands."""
    knots = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
    vals = np.array([0.3, -0.3, 0.3, -0.3, 0.3])
    return np.interp(x, knots, vals)


def _grid_vertices(params):
    n = params.n
    s = np.linspace(0.0, 1.0, n + 1)
    xg, yg = np.meshgrid(s, s, indexing="xy")  # xg[j, i] = s[i]
    if params.family == "uniform":
        return xg, yg
    if params.family == "smooth":
        bump = np.sin(2 * np.pi * xg) * np.sin(2 * np.pi * yg)
        return xg + 0.06 * bump, yg - 0.05 * bump
    if params.family == "kershaw":
        w = np.minimum(yg, 1.0 - yg)
        return xg, yg + _kershaw_shift(xg) * w
    # randomly h-perturbed: jitter interior vertices about their uniform
    # position with amplitude (sqrt(2)/3) h per component
    h = 1.0 / n
    rng = np.random.default_rng(np.random.SeedSequence(entropy=params.seed, spawn_key=(n,)))
    r = rng.random(size=(n + 1, n + 1, 2))
    amp = (np.sqrt(2.0) / 3.0) * h
    dx = amp * (r[..., 0] - 0.5)
    dy = amp * (r[..., 1] - 0.5)
    interior = np.zeros_like(xg, dtype=bool)
    interior[1:-1, 1:-1] = True
    x = np.where(interior, xg + dx, xg)
    y = np.where(interior, yg + dy, yg)
    return x, y


def generate_mesh(params, boundary_classifier=None):
    """Generate an n-by-n quadrilateral mesh of (0,1)^2.

    Same parameters (including seed) always reproduce the identical mesh.
    """
    n = params.n
    x, y = _grid_vertices(params)
    vid = np.arange((n + 1) * (n + 1)).reshape(n + 1, n + 1)  # vid[j, i]
    vertices = np.column_stack([x.ravel(), y.ravel()])
    i = np.arange(n)
    jj, ii = np.meshgrid(np.arange(n), i, indexing="ij")
    cells = np.column_stack(
        [
            vid[jj, ii].ravel(),
            vid[jj, ii + 1].ravel(),
            vid[jj + 1, ii + 1].ravel(),
            vid[jj + 1, ii].ravel(),
        ]
    )
    return Mesh(CellKind.QUADRILATERAL, vertices, cells, boundary_classifier)
