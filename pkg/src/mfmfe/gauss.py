"""Fixed-order Gauss quadrature rules on the reference cells.

These rules back the auxiliary integrals (sources, projections, error
norms); the velocity mass term uses the vertex rule from
:mod:`mfmfe.quadrature` instead.
"""

import numpy as np

from .mesh import CellKind, REF_VERTICES


def gauss_1d(npts):
    """Gauss-Legendre nodes/weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def tensor_rule(dim, npts):
    """Tensor-product Gauss rule on the unit square/cube."""
    x, w = gauss_1d(npts)
    if dim == 2:
        xg, yg = np.meshgrid(x, x, indexing="ij")
        pts = np.column_stack([xg.ravel(), yg.ravel()])
        wts = np.outer(w, w).ravel()
    elif dim == 3:
        xg, yg, zg = np.meshgrid(x, x, x, indexing="ij")
        pts = np.column_stack([xg.ravel(), yg.ravel(), zg.ravel()])
        wts = (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel()
    else:
        raise ValueError(f"unsupported dimension {dim}")
    return pts, wts


# Degree-5 symmetric rule on the unit triangle (7 points).
_TRI7_W1 = 9.0 / 40.0
_TRI7_A = (6.0 + np.sqrt(15.0)) / 21.0
_TRI7_B = (6.0 - np.sqrt(15.0)) / 21.0
_TRI7_WA = (155.0 + np.sqrt(15.0)) / 1200.0
_TRI7_WB = (155.0 - np.sqrt(15.0)) / 1200.0


def triangle_rule():
    pts = np.array(
        [
            [1.0 / 3.0, 1.0 / 3.0],
            [_TRI7_A, _TRI7_A],
            [1.0 - 2.0 * _TRI7_A, _TRI7_A],
            [_TRI7_A, 1.0 - 2.0 * _TRI7_A],
            [_TRI7_B, _TRI7_B],
            [1.0 - 2.0 * _TRI7_B, _TRI7_B],
            [_TRI7_B, 1.0 - 2.0 * _TRI7_B],
        ]
    )
    wts = 0.5 * np.array([_TRI7_W1, _TRI7_WA, _TRI7_WA, _TRI7_WA, _TRI7_WB, _TRI7_WB, _TRI7_WB])
    return pts, wts


def tet_rule():
    """Degree-2 rule on the unit tetrahedron (4 points)."""
    a = (5.0 - np.sqrt(5.0)) / 20.0
    b = (5.0 + 3.0 * np.sqrt(5.0)) / 20.0
    pts = np.array([[a, a, a], [b, a, a], [a, b, a], [a, a, b]])
    wts = np.full(4, 1.0 / 24.0)
    return pts, wts


def cell_rule(kind, npts=3):
    """Volume rule on the reference cell of the given kind."""
    if kind == CellKind.QUADRILATERAL:
        return tensor_rule(2, npts)
    if kind == CellKind.HEXAHEDRON:
        return tensor_rule(3, npts)
    if kind == CellKind.TRIANGLE:
        return triangle_rule()
    if kind == CellKind.TETRAHEDRON:
        return tet_rule()
    raise ValueError(f"unknown cell kind {kind}")


def face_rule(kind, npts=5):
    """Rule on the reference face, returned in face-local parameters.

    2D cells have edge faces parametrized by t in [0, 1]; hexahedron faces
    are unit squares; tetrahedron faces use the unit-triangle rule.
    """
    if kind in (CellKind.TRIANGLE, CellKind.QUADRILATERAL):
        t, w = gauss_1d(npts)
        return t[:, None], w
    if kind == CellKind.HEXAHEDRON:
        return tensor_rule(2, 3)
    if kind == CellKind.TETRAHEDRON:
        return triangle_rule()
    raise ValueError(f"unknown cell kind {kind}")


def face_param_to_ref(kind, face_vertex_ids, fpts):
    """Map face-local parameter points into reference-cell coordinates.

    Faces are parametrized from their vertex list: edges linearly by t,
    triangle faces barycentrically, quad faces bilinearly.
    """
    verts = REF_VERTICES[kind][list(face_vertex_ids)]
    if kind in (CellKind.TRIANGLE, CellKind.QUADRILATERAL):
        t = fpts[:, 0]
        return (1.0 - t)[:, None] * verts[0] + t[:, None] * verts[1]
    if kind == CellKind.TETRAHEDRON:
        a, b = fpts[:, 0], fpts[:, 1]
        return (
            (1.0 - a - b)[:, None] * verts[0]
            + a[:, None] * verts[1]
            + b[:, None] * verts[2]
        )
    if kind == CellKind.HEXAHEDRON:
        a, b = fpts[:, 0], fpts[:, 1]
        return (
            ((1 - a) * (1 - b))[:, None] * verts[0]
            + (a * (1 - b))[:, None] * verts[1]
            + (a * b)[:, None] * verts[2]
            + ((1 - a) * b)[:, None] * verts[3]
        )
    raise ValueError(f"unknown cell kind {kind}")
