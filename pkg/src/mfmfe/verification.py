"""Error norms, convergence studies and the quarter five-spot driver.

Spatial errors combine the max over time levels with four spatial norms:
the L2 pressure error (9-point Gauss), the cell-center pressure error in
the volume-weighted discrete l2 norm, the L2 velocity error against the
face interpolant (vertex/trapezoidal rule), and the face-flux error in
the |E|/|e|-weighted edge norm (5-point Gauss per edge).
"""

from dataclasses import dataclass

import numpy as np

from . import gauss
from .assembly import Discretization
from .mesh import REF_FACES, REF_VERTICES, REF_VOLUME, MeshFamilyParams, batch_jacobian, batch_map
from .physics import (
    ConstantTensor,
    PiecewiseTensor,
    ScalarGrid,
    fivespot_problem,
    manufactured_problem,
    manufactured_solution,
)
from .quadrature import QuadratureVariant
from .random_field import MaternParams, sample_log_normal_field
from .solver import SolverConfig, time_march
from .spaces import interpolate_velocity

__all__ = [
    "RunErrors",
    "ErrorReport",
    "StudySpec",
    "FivespotResult",
    "compute_errors",
    "convergence_study",
    "convergence_rates",
    "fivespot_run",
    "diagonal_asymmetry",
]


@dataclass
class RunErrors:
    """Time-maximal spatial errors of one run."""

    e_p: float
    e_p_centers: float
    e_u: float
    e_u_face: float

    def as_tuple(self):
        return (self.e_p, self.e_p_centers, self.e_u, self.e_u_face)


class ErrorNormCache:
    """Mesh-bound geometry shared by all time levels of an error evaluation."""

    def __init__(self, disc):
        self.disc = disc
        mesh = disc.mesh
        kind = mesh.kind
        pts, wts = gauss.cell_rule(kind, npts=3)
        _, det = batch_jacobian(kind, mesh.cell_coords, pts)
        self.p_points = batch_map(kind, mesh.cell_coords, pts)
        self.p_jw = np.abs(det) * wts

        quad = disc.quad
        self.corner_weight = (REF_VOLUME[kind] / len(REF_VERTICES[kind])) * quad.j_v
        self.corner_vectors = quad.physical_corner_vectors()
        self.corner_dofs = quad.corner_dofs

        # edge geometry for the face norm (2D)
        t5, w5 = gauss.gauss_1d(5)
        self.edge_t, self.edge_w = t5, w5
        coords = mesh.cell_coords
        faces = REF_FACES[kind]
        a = np.stack([coords[:, f[0]] for f in faces], axis=1)  # (N_e, nf, 2)
        b = np.stack([coords[:, f[1]] for f in faces], axis=1)
        self.edge_points = (
            a[:, :, None, :] * (1 - t5)[None, None, :, None]
            + b[:, :, None, :] * t5[None, None, :, None]
        )
        tang = b - a
        elen = np.linalg.norm(tang, axis=2)
        self.edge_normals = np.stack([tang[..., 1], -tang[..., 0]], axis=-1) / elen[..., None]
        self.edge_len = elen
        gfaces = mesh.cell_faces
        self.edge_sign = mesh.cell_face_sign.astype(float)
        n = disc.dofmap.n_face_vertices
        # global DOFs of each local edge's endpoints, in local (f0, f1) order
        basis = disc.basis
        dof_by_face = np.stack(
            [disc.dofmap.cell_dofs[:, np.nonzero(basis.dof_faces == lf)[0]]
             for lf in range(len(faces))],
            axis=1,
        )  # (N_e, nf, 2)
        self.edge_dofs = dof_by_face
        self.edge_measure = mesh.face_measures[gfaces]

    def pressure_l2(self, p_exact_vals, P):
        d2 = (p_exact_vals - P[:, None]) ** 2
        return float(np.sqrt(np.einsum("cp,cp->", self.p_jw, d2)))

    def pressure_centers(self, p_center_vals, P):
        mesh = self.disc.mesh
        return float(np.sqrt(np.sum(mesh.cell_volumes * (p_center_vals - P) ** 2)))

    def velocity_trapezoid(self, Udiff):
        uc = Udiff[self.corner_dofs]
        v = np.einsum("cvj,cvja->cva", uc, self.corner_vectors)
        return float(np.sqrt(np.einsum("cv,cva->", self.corner_weight, v**2)))

    def velocity_face(self, u_exact_vals, U):
        """Face norm of (u_exact - u_h); u_exact_vals: (N_e, nf, q, d)."""
        un = np.einsum("cfqd,cfd->cfq", u_exact_vals, self.edge_normals)
        vals = U[self.edge_dofs] / self.edge_measure[..., None]  # vertex flux densities
        t = self.edge_t
        lerp = vals[..., 0:1] * (1 - t) + vals[..., 1:2] * t
        uhn = self.edge_sign[..., None] * lerp
        err2 = np.einsum("q,cfq->cf", self.edge_w, (un - uhn) ** 2)
        vols = self.disc.mesh.cell_volumes
        return float(np.sqrt(np.einsum("c,cf->", vols, err2)))


def compute_errors(disc, result, exact=None, cache=None):
    """Max-over-time errors of a trajectory against the exact solution."""
    if exact is None:
        exact = manufactured_solution()
    if not result.states:
        raise ValueError("trajectory holds no time levels")
    cache = cache or ErrorNormCache(disc)
    mesh = disc.mesh
    best = np.zeros(4)
    for t, (U, P) in zip(result.times, result.states):
        p_vals = exact.pressure(cache.p_points, t)
        e_p = cache.pressure_l2(p_vals, P)
        e_pc = cache.pressure_centers(exact.pressure(mesh.cell_centers, t), P)
        pi_u = interpolate_velocity(mesh, disc.dofmap, lambda x: exact.velocity(x, t))
        e_u = cache.velocity_trapezoid(pi_u.coefficients - U)
        e_uf = cache.velocity_face(exact.velocity(cache.edge_points, t), U)
        best = np.maximum(best, [e_p, e_pc, e_u, e_uf])
    return RunErrors(*best)


def convergence_rates(errors):
    """log2(E(h) / E(h/2)) down the refinement levels."""
    errors = np.asarray(errors, dtype=float)
    rates = np.full(errors.shape, np.nan)
    rates[1:] = np.log2(errors[:-1] / errors[1:])
    return rates


@dataclass
class StudySpec:
    """Refinement study of the smooth-solution benchmark."""

    family: str = "smooth"
    levels: int = 5
    n0: int = 16
    tau: float = 0.1
    t_final: float = 2.0
    variant: QuadratureVariant = QuadratureVariant.SYMMETRIC
    seed: int = 20170

    def mesh_params(self, level):
        return MeshFamilyParams(self.family, self.n0 * 2**level,
                                seed=self.seed if self.family == "random" else None)


@dataclass
class ErrorReport:
    """Per-level errors and observed convergence rates."""

    h: np.ndarray
    e_p: np.ndarray
    e_p_centers: np.ndarray
    e_u: np.ndarray
    e_u_face: np.ndarray
    rate_p: np.ndarray = None
    rate_p_centers: np.ndarray = None
    rate_u: np.ndarray = None
    rate_u_face: np.ndarray = None

    def __post_init__(self):
        self.rate_p = convergence_rates(self.e_p)
        self.rate_p_centers = convergence_rates(self.e_p_centers)
        self.rate_u = convergence_rates(self.e_u)
        self.rate_u_face = convergence_rates(self.e_u_face)

    def rows(self):
        out = []
        for i in range(len(self.h)):
            out.append(
                [
                    i,
                    self.h[i],
                    self.e_p[i],
                    self.rate_p[i],
                    self.e_p_centers[i],
                    self.rate_p_centers[i],
                    self.e_u[i],
                    self.rate_u[i],
                    self.e_u_face[i],
                    self.rate_u_face[i],
                ]
            )
        return out

    HEADER = [
        "level", "h",
        "e_p", "rate_p",
        "e_p_centers", "rate_p_centers",
        "e_u", "rate_u",
        "e_u_face", "rate_u_face",
    ]


def convergence_study(study, config=None, progress=None):
    """Run the benchmark over the refinement levels and tabulate errors."""
    config = config or SolverConfig()
    errs = []
    hs = []
    for level in range(study.levels):
        params = study.mesh_params(level)
        spec = manufactured_problem(
            params, tau=study.tau, t_final=study.t_final, variant=study.variant
        )
        disc = Discretization(spec)
        result = time_march(disc, config=config, store_states=True)
        run = compute_errors(disc, result)
        errs.append(run.as_tuple())
        hs.append(1.0 / params.n)
        if progress is not None:
            progress(level, params.n, run)
    errs = np.asarray(errs)
    return ErrorReport(
        h=np.asarray(hs),
        e_p=errs[:, 0],
        e_p_centers=errs[:, 1],
        e_u=errs[:, 2],
        e_u_face=errs[:, 3],
    )


# -- quarter five-spot --------------------------------------------------------


@dataclass
class FivespotResult:
    mesh: object
    pressure: np.ndarray
    speed: np.ndarray
    log_speed: np.ndarray
    records: list
    steady: bool
    provenance: dict
    log_permeability: np.ndarray = None
    steady_history: list = None


def _fivespot_permeability(case, n, nu=0.5, corr_range=0.3, variance=1.0, seed=0):
    full = np.array([[4.0, 0.5], [0.5, 4.0]])
    if case == "constant-full":
        return ConstantTensor(full, viscosity=2.0), None
    if case == "piecewise-full":
        strong = np.array([[16.0, 0.5], [0.5, 16.0]])
        return (
            PiecewiseTensor(lambda x: x[..., 0] <= 0.5, strong, full, viscosity=2.0),
            None,
        )
    if case == "random":
        sample = sample_log_normal_field(
            (n, n), MaternParams(nu=nu, corr_range=corr_range, variance=variance), seed
        )
        logk = sample.values.ravel()
        return ScalarGrid(np.exp(logk), viscosity=2.0), logk
    raise ValueError(f"unknown five-spot permeability case {case!r}")


def cell_center_velocity(disc, U):
    """u_h at the reference centroid of every cell."""
    mesh = disc.mesh
    center = REF_VERTICES[mesh.kind].mean(axis=0)[None]
    basis_vals = disc.basis.eval(center)[0]  # (nl, d)
    df, det = batch_jacobian(mesh.kind, mesh.cell_coords, center)
    coeff = U[disc.dofmap.cell_dofs] * disc.dofmap.cell_dof_scale
    vhat = np.einsum("cj,jb->cb", coeff, basis_vals)
    return np.einsum("cab,cb->ca", df[:, 0], vhat) / det[:, 0][:, None]


def fivespot_run(case="constant-full", n=128, tau=5e-3, t_final=10.0,
                 variant=QuadratureVariant.SYMMETRIC, config=None,
                 nu=0.5, corr_range=0.3, variance=1.0, seed=0):
    """March the quarter five-spot problem to its stationary state."""
    config = config or SolverConfig()
    perm, logk = _fivespot_permeability(
        case, n, nu=nu, corr_range=corr_range, variance=variance, seed=seed
    )
    spec = fivespot_problem(perm, n=n, tau=tau, t_final=t_final, variant=variant)
    disc = Discretization(spec)
    result = time_march(disc, config=config, store_states=False, steady=True)
    U, P = result.final
    u = cell_center_velocity(disc, U)
    speed = np.linalg.norm(u, axis=1)
    with np.errstate(divide="ignore"):
        log_speed = np.log10(speed)
    provenance = {
        "case": case,
        "n": n,
        "tau": tau,
        "variant": variant.value,
        "steps": len(result.records),
        "steady": result.steady,
        "final_residual": result.records[-1].final_residual,
    }
    if case == "random":
        provenance.update(nu=nu, corr_range=corr_range, variance=variance, seed=seed)
    return FivespotResult(
        mesh=disc.mesh,
        pressure=P,
        speed=speed,
        log_speed=log_speed,
        records=result.records,
        steady=result.steady,
        provenance=provenance,
        log_permeability=logk,
        steady_history=result.steady_history,
    )


def diagonal_asymmetry(values, n):
    """Max |v(i,j) - v(j,i)| of a cellwise field on the uniform n-by-n grid."""
    grid = np.asarray(values).reshape(n, n)
    return float(np.abs(grid - grid.T).max())
