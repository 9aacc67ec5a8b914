"""Equation of state, coefficient fields and the benchmark problem data.

All derivatives of the smooth-solution data (pressure gradient, time
derivative, divergence of the flux) are hand-derived closed forms; the
test suite cross-checks them against finite differences.
"""

from dataclasses import dataclass

import numpy as np

from .mesh import BoundaryKind
from .quadrature import QuadratureVariant

__all__ = [
    "Eos",
    "density",
    "density_derivative",
    "PermeabilityField",
    "ConstantTensor",
    "PiecewiseTensor",
    "ManufacturedTensor",
    "ScalarGrid",
    "ProblemSpec",
    "ManufacturedSolution",
    "manufactured_solution",
    "manufactured_rhs",
    "manufactured_problem",
    "fivespot_source",
    "fivespot_boundary_classifier",
    "fivespot_initial_pressure",
    "fivespot_problem",
]


@dataclass(frozen=True)
class Eos:
    """Exponential equation of state rho(p) = rho_ref exp(c_f (p - p_ref))."""

    rho_ref: float = 1.0
    p_ref: float = 0.0
    c_f: float = 0.0

    def __post_init__(self):
        if self.rho_ref <= 0:
            raise ValueError("reference density must be positive")
        if self.c_f < 0:
            raise ValueError("compressibility must be nonnegative")


def density(eos, p):
    return eos.rho_ref * np.exp(eos.c_f * (np.asarray(p, dtype=float) - eos.p_ref))


def density_derivative(eos, p):
    return eos.c_f * density(eos, p)


class PermeabilityField:
    """Base interface: sample K = K_hat / mu at points, resolved per cell.

    ``sample(points, cell_centers)`` takes points of shape (n_cells, n_pts, d)
    together with the owning cells' centers (used to resolve piecewise and
    cellwise fields on material interfaces) and returns SPD tensors of shape
    (n_cells, n_pts, d, d).
    """

    viscosity = 1.0

    def sample(self, points, cell_centers):
        raise NotImplementedError

    def check_spd(self, points, cell_centers):
        k = self.sample(points, cell_centers)
        sym = np.abs(k - k.swapaxes(-1, -2)).max()
        if sym > 1e-12:
            raise ValueError("permeability tensor is not symmetric")
        eig = np.linalg.eigvalsh(k)
        if eig.min() <= 0:
            raise ValueError("permeability tensor is not positive definite")


@dataclass
class ConstantTensor(PermeabilityField):
    tensor: np.ndarray
    viscosity: float = 1.0

    def __post_init__(self):
        self.tensor = np.asarray(self.tensor, dtype=float)

    def sample(self, points, cell_centers):
        shape = points.shape[:-1] + self.tensor.shape
        return np.broadcast_to(self.tensor / self.viscosity, shape)


@dataclass
class PiecewiseTensor(PermeabilityField):
    """Two-branch tensor selected by a predicate on the cell center."""

    predicate: callable
    tensor_a: np.ndarray
    tensor_b: np.ndarray
    viscosity: float = 1.0

    def __post_init__(self):
        self.tensor_a = np.asarray(self.tensor_a, dtype=float)
        self.tensor_b = np.asarray(self.tensor_b, dtype=float)

    def sample(self, points, cell_centers):
        take_a = np.asarray(self.predicate(cell_centers), dtype=bool)
        k = np.where(take_a[:, None, None], self.tensor_a, self.tensor_b)
        shape = points.shape[:-1] + self.tensor_a.shape
        return np.broadcast_to(k[:, None, :, :], shape) / self.viscosity


@dataclass
class ManufacturedTensor(PermeabilityField):
    """Full non-constant tensor of the smooth-solution test."""

    viscosity: float = 2.0

    def sample(self, points, cell_centers):
        x, y = points[..., 0], points[..., 1]
        k = np.empty(points.shape[:-1] + (2, 2))
        k[..., 0, 0] = 4.0 + (x + 2.0) ** 2 + y**2
        k[..., 0, 1] = 1.0 + x * y
        k[..., 1, 0] = 1.0 + x * y
        k[..., 1, 1] = 2.0
        return k / self.viscosity


@dataclass
class ScalarGrid(PermeabilityField):
    """Cellwise-constant scalar permeability times the identity."""

    values: np.ndarray
    viscosity: float = 1.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if np.any(self.values <= 0):
            raise ValueError("scalar permeability must be positive")

    def sample(self, points, cell_centers):
        d = points.shape[-1]
        k = self.values[:, None, None, None] * np.eye(d)
        shape = points.shape[:-1] + (d, d)
        return np.broadcast_to(k, shape) / self.viscosity


@dataclass
class ProblemSpec:
    """Complete specification of one flow problem."""

    mesh_params: object
    eos: Eos
    porosity: float
    permeability: PermeabilityField
    gravity: np.ndarray
    source: callable          # f(points, t) -> values
    initial_pressure: callable
    boundary_classifier: callable
    t_final: float
    tau: float
    variant: QuadratureVariant = QuadratureVariant.SYMMETRIC
    mesh: object = None

    def __post_init__(self):
        self.gravity = np.asarray(self.gravity, dtype=float)
        if not 0 < self.porosity:
            raise ValueError("porosity must be positive")
        if self.tau <= 0 or self.t_final <= 0:
            raise ValueError("time step and final time must be positive")

    @property
    def num_steps(self):
        n = self.t_final / self.tau
        if abs(n - round(n)) > 1e-9:
            raise ValueError("final time must be an integral number of steps")
        return int(round(n))


# -- smooth-solution benchmark ----------------------------------------------

_W = 3.0 * np.pi


@dataclass
class ManufacturedSolution:
    """Closed-form solution p = t sin^2(3 pi x) sin^2(3 pi y) and its data."""

    eos: Eos
    porosity: float
    permeability: ManufacturedTensor

    def pressure(self, x, t):
        sx = np.sin(_W * x[..., 0])
        sy = np.sin(_W * x[..., 1])
        return t * sx**2 * sy**2

    def pressure_t(self, x):
        sx = np.sin(_W * x[..., 0])
        sy = np.sin(_W * x[..., 1])
        return sx**2 * sy**2

    def grad_pressure(self, x, t):
        xx, yy = x[..., 0], x[..., 1]
        sx, cx = np.sin(_W * xx), np.cos(_W * xx)
        sy, cy = np.sin(_W * yy), np.cos(_W * yy)
        px = 2.0 * _W * t * sx * cx * sy**2
        py = 2.0 * _W * t * sx**2 * sy * cy
        return np.stack([px, py], axis=-1)

    def velocity(self, x, t):
        k = self.permeability.sample(x[None] if x.ndim == 2 else x, None)
        if x.ndim == 2:
            k = k[0]
        rho = density(self.eos, self.pressure(x, t))
        gp = self.grad_pressure(x, t)
        return -rho[..., None] * np.einsum("...ab,...b->...a", k, gp)

    def source(self, x, t):
        xx, yy = x[..., 0], x[..., 1]
        sx, cx = np.sin(_W * xx), np.cos(_W * xx)
        sy, cy = np.sin(_W * yy), np.cos(_W * yy)
        p = t * sx**2 * sy**2
        p_t = sx**2 * sy**2
        px = 2.0 * _W * t * sx * cx * sy**2
        py = 2.0 * _W * t * sx**2 * sy * cy
        pxx = 2.0 * _W**2 * t * np.cos(2 * _W * xx) * sy**2
        pyy = 2.0 * _W**2 * t * sx**2 * np.cos(2 * _W * yy)
        pxy = _W**2 * t * np.sin(2 * _W * xx) * np.sin(2 * _W * yy)
        mu = self.permeability.viscosity
        k11 = (4.0 + (xx + 2.0) ** 2 + yy**2) / mu
        k12 = (1.0 + xx * yy) / mu
        k22 = 2.0 / mu
        dxk11 = 2.0 * (xx + 2.0) / mu
        dyk21 = xx / mu
        dxk12 = yy / mu
        div_kgrad = (
            k11 * pxx
            + 2.0 * k12 * pxy
            + k22 * pyy
            + (dxk11 + dyk21) * px
            + dxk12 * py
        )
        kgrad_x = k11 * px + k12 * py
        kgrad_y = k12 * px + k22 * py
        grad_dot_kgrad = px * kgrad_x + py * kgrad_y
        rho = density(self.eos, p)
        cf = self.eos.c_f
        return self.porosity * cf * rho * p_t - cf * rho * grad_dot_kgrad - rho * div_kgrad

    def initial_pressure(self, x):
        return np.zeros(x.shape[:-1])


def manufactured_solution():
    eos = Eos(rho_ref=1.0, p_ref=0.0, c_f=4e-5)
    return ManufacturedSolution(eos=eos, porosity=0.2, permeability=ManufacturedTensor(viscosity=2.0))


def manufactured_rhs(x, t):
    """Source term of the smooth-solution benchmark at its fixed parameters."""
    return manufactured_solution().source(np.asarray(x, dtype=float), t)


def manufactured_problem(mesh_params, tau=0.1, t_final=2.0,
                         variant=QuadratureVariant.SYMMETRIC, mesh=None):
    ms = manufactured_solution()
    return ProblemSpec(
        mesh_params=mesh_params,
        eos=ms.eos,
        porosity=ms.porosity,
        permeability=ms.permeability,
        gravity=np.zeros(2),
        source=ms.source,
        initial_pressure=ms.initial_pressure,
        boundary_classifier=lambda x: BoundaryKind.DIRICHLET,
        t_final=t_final,
        tau=tau,
        variant=variant,
        mesh=mesh,
    )


# -- quarter five-spot -------------------------------------------------------


def fivespot_source(x, y):
    """Smoothed injection at (0,0) and production at (1,1)."""
    r0 = np.sqrt(np.asarray(x) ** 2 + np.asarray(y) ** 2)
    r1 = np.sqrt((np.asarray(x) - 1.0) ** 2 + (np.asarray(y) - 1.0) ** 2)
    return 200.0 * (np.tanh(200.0 * (0.025 - r0)) - np.tanh(200.0 * (0.025 - r1)))


def fivespot_boundary_classifier(point):
    x, y = float(point[0]), float(point[1])
    tol = 1e-12
    on_boundary = (
        min(abs(x), abs(x - 1.0), abs(y), abs(y - 1.0)) <= tol
        and -tol <= x <= 1 + tol
        and -tol <= y <= 1 + tol
    )
    if not on_boundary:
        raise ValueError(f"point ({x}, {y}) is not on the boundary of the unit square")
    if abs(x - 1.0) <= tol and y <= 0.75:
        return BoundaryKind.DIRICHLET
    if abs(y - 1.0) <= tol and x <= 0.75:
        return BoundaryKind.DIRICHLET
    return BoundaryKind.NEUMANN


def fivespot_initial_pressure(x):
    xx, yy = x[..., 0], x[..., 1]
    return (1.0 - 3.0 * xx**2 + 2.0 * xx**3) * (1.0 - 3.0 * yy**2 + 2.0 * yy**3)


def fivespot_problem(permeability, n=128, tau=5e-3, t_final=10.0,
                     variant=QuadratureVariant.SYMMETRIC, mesh=None):
    from .mesh import MeshFamilyParams

    eos = Eos(rho_ref=1.0, p_ref=0.0, c_f=4e-5)
    return ProblemSpec(
        mesh_params=MeshFamilyParams("uniform", n),
        eos=eos,
        porosity=0.2,
        permeability=permeability,
        gravity=np.zeros(2),
        source=lambda x, t: fivespot_source(x[..., 0], x[..., 1]),
        initial_pressure=fivespot_initial_pressure,
        boundary_classifier=fivespot_boundary_classifier,
        t_final=t_final,
        tau=tau,
        variant=variant,
        mesh=mesh,
    )
