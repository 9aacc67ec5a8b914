"""Inexact Newton iteration with local velocity elimination.

Each Newton step solves the nearly symmetric block system by inverting
the per-vertex velocity blocks and reducing to the cell-centered pressure
system (tau B^T A^{-1} B - D) dP = G - tau B^T A^{-1} F, then
back-substituting dU = -A^{-1} (B dP + F).  The pressure matrix is
assembled explicitly (9-point stencil on logically rectangular 2D grids)
and solved by a sparse factorization; because the coefficients drift only
through the tiny compressibility, the factorization is cached across
iterations and reused as a Krylov preconditioner, with a refresh when it
goes stale.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import assemble_jacobian, assemble_residual
from .quadrature import QuadratureVariant

__all__ = [
    "SolverConfig",
    "SchurSystem",
    "NewtonStats",
    "StepRecord",
    "MarchResult",
    "EliminationError",
    "LinearSolverError",
    "NewtonConvergenceError",
    "eliminate_velocity",
    "solve_schur",
    "newton_solve_step",
    "time_march",
]


class EliminationError(RuntimeError):
    pass


class LinearSolverError(RuntimeError):
    pass


class NewtonConvergenceError(RuntimeError):
    def __init__(self, message, residuals):
        super().__init__(message)
        self.residuals = residuals


@dataclass
class SolverConfig:
    newton_tol: float = 1e-9
    newton_abs_tol: float = 1e-12
    max_newton_iters: int = 20
    linear_tol: float = 1e-11
    max_linear_iters: int = 200
    steady_tol: float = 1e-8
    schur_method: str = "auto"  # auto | direct

    def __post_init__(self):
        if min(self.newton_tol, self.newton_abs_tol, self.linear_tol, self.steady_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_newton_iters < 1 or self.max_linear_iters < 1:
            raise ValueError("iteration limits must be at least 1")


@dataclass
class SchurSystem:
    """Cell-centered pressure system plus retained elimination factors."""

    S: sp.csr_matrix
    rhs: np.ndarray
    factors: list  # per group: (dofs, cells, A_inv, B, F_v)
    tau: float
    symmetric: bool

    def back_substitute(self, dP, L):
        dU = np.empty(L)
        for dofs, cells, a_inv, b, f_v in self.factors:
            r = np.einsum("nlm,nm->nl", b, dP[cells]) + f_v
            dU[dofs.ravel()] = -np.einsum("nlk,nk->nl", a_inv, r).ravel()
        return dU


@dataclass
class NewtonStats:
    iterations: int = 0
    residuals: list = field(default_factory=list)
    linear_iters: list = field(default_factory=list)
    converged: bool = False


def eliminate_velocity(disc, jac, res, tau):
    """Form the Schur system by inverting the per-vertex velocity blocks."""
    symmetric = jac.variant == QuadratureVariant.SYMMETRIC
    rows, cols, vals = [], [], []
    factors = []
    rhs = res.G.copy()
    for g in disc.groups:
        A = g.assemble_blocks(jac.corner_blocks)
        if symmetric:
            try:
                np.linalg.cholesky(A)
            except np.linalg.LinAlgError:
                raise EliminationError(_failing_vertex(g, A, spd=True)) from None
        try:
            a_inv = np.linalg.inv(A)
        except np.linalg.LinAlgError:
            raise EliminationError(_failing_vertex(g, A, spd=False)) from None
        f_v = res.F[g.dofs]
        ainv_b = a_inv @ g.B
        s_blk = tau * np.einsum("nlm,nlk->nmk", g.B, ainv_b)
        rows.append(g.s_rows)
        cols.append(g.s_cols)
        vals.append(s_blk.ravel())
        rhs -= tau * np.bincount(
            g.cells.ravel(),
            weights=np.einsum("nlm,nl->nm", ainv_b, f_v).ravel(),
            minlength=rhs.size,
        )
        factors.append((g.dofs, g.cells, a_inv, g.B, f_v))
    ne = res.G.size
    S = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ne, ne),
    ).tocsr()
    S = S - sp.diags(jac.D)
    return SchurSystem(S=S, rhs=rhs, factors=factors, tau=tau, symmetric=symmetric)


def _failing_vertex(group, A, spd):
    for i in range(group.n):
        try:
            if spd:
                np.linalg.cholesky(A[i])
            else:
                np.linalg.inv(A[i])
        except np.linalg.LinAlgError:
            kind = "non-SPD" if spd else "singular"
            return f"{kind} velocity block at mesh vertex {group.vertex_ids[i]}"
    return "velocity block factorization failed"


class SchurSolver:
    """Pressure-system solver with a cached, lazily refreshed factorization."""

    def __init__(self, config):
        self.config = config
        self._lu = None

    def solve(self, system):
        S, rhs = system.S, system.rhs
        rhs_norm = np.linalg.norm(rhs)
        if rhs_norm == 0.0:
            return np.zeros_like(rhs), 0
        tol = self.config.linear_tol
        if self.config.schur_method == "direct" or self._lu is None:
            self._lu = spla.splu(S.tocsc())
            x = self._lu.solve(rhs)
            if np.linalg.norm(S @ x - rhs) <= tol * rhs_norm:
                return x, 0
        else:
            x = self._lu.solve(rhs)
            if np.linalg.norm(S @ x - rhs) <= tol * rhs_norm:
                return x, 0
        x, iters = self._krylov(S, rhs, system.symmetric)
        if x is not None:
            return x, iters
        # stale preconditioner: refresh and retry once
        self._lu = spla.splu(S.tocsc())
        x = self._lu.solve(rhs)
        if np.linalg.norm(S @ x - rhs) <= tol * rhs_norm:
            return x, 0
        x, iters = self._krylov(S, rhs, system.symmetric)
        if x is None:
            raise LinearSolverError(
                f"pressure solve stalled after {self.config.max_linear_iters} iterations"
            )
        return x, iters

    def _krylov(self, S, rhs, symmetric):
        count = [0]

        def cb(_):
            count[0] += 1

        M = spla.LinearOperator(S.shape, matvec=self._lu.solve)
        kw = dict(rtol=self.config.linear_tol, atol=0.0, M=M,
                  maxiter=self.config.max_linear_iters)
        if symmetric:
            x, info = spla.cg(S, rhs, callback=cb, **kw)
        else:
            x, info = spla.gmres(S, rhs, callback=cb, callback_type="pr_norm", **kw)
        if info != 0 or np.linalg.norm(S @ x - rhs) > self.config.linear_tol * np.linalg.norm(rhs):
            return None, count[0]
        return x, count[0]


def solve_schur(system, config, solver=None):
    """Solve the cell-centered system to the configured relative tolerance."""
    solver = solver or SchurSolver(config)
    return solver.solve(system)


def newton_solve_step(disc, P_prev, t_next, U0=None, P0=None, config=None, schur_solver=None):
    """Advance one backward-Euler step by the inexact Newton iteration.

    The iteration stops when the full nonlinear residual satisfies
    ||(F, G)|| <= newton_tol ||(F, G)_0|| + newton_abs_tol.
    """
    config = config or SolverConfig()
    schur_solver = schur_solver or SchurSolver(config)
    U = np.zeros(disc.dofmap.L) if U0 is None else U0.copy()
    P = P_prev.copy() if P0 is None else P0.copy()
    f_int = disc.source_integrals(t_next)
    stats = NewtonStats()
    res = assemble_residual(disc, U, P, P_prev, t_next, f_int)
    r0 = res.norm
    stats.residuals.append(r0)
    target = config.newton_tol * r0 + config.newton_abs_tol
    tau = disc.spec.tau
    while res.norm > target:
        if stats.iterations >= config.max_newton_iters:
            raise NewtonConvergenceError(
                f"Newton stalled at residual {res.norm:.3e} "
                f"(target {target:.3e}) after {stats.iterations} iterations",
                stats.residuals,
            )
        jac = assemble_jacobian(disc, P)
        system = eliminate_velocity(disc, jac, res, tau)
        dP, lin_iters = schur_solver.solve(system)
        dU = system.back_substitute(dP, disc.dofmap.L)
        U += dU
        P += dP
        stats.iterations += 1
        stats.linear_iters.append(lin_iters)
        res = assemble_residual(disc, U, P, P_prev, t_next, f_int)
        stats.residuals.append(res.norm)
    stats.converged = True
    return U, P, stats


@dataclass
class StepRecord:
    step: int
    time: float
    newton_iters: int
    final_residual: float
    linear_iters: int


@dataclass
class MarchResult:
    times: list
    states: list        # [(U, P)] at the recorded times
    records: list       # per-step solver statistics
    steady: bool = False
    steady_history: list = field(default_factory=list)  # ||dP|| / (tau ||P||) per step

    @property
    def final(self):
        return self.states[-1]


def time_march(disc, config=None, store_states=True, steady=False, callback=None):
    """Backward-Euler march; optionally stop at a stationary state.

    Steady mode stops once ||P^{n+1} - P^n|| / (tau ||P^{n+1}||) drops
    below ``config.steady_tol``.
    """
    config = config or SolverConfig()
    spec = disc.spec
    schur_solver = SchurSolver(config)
    U, P = disc.initial_state()
    times, states, records = [], [], []
    n_steps = spec.num_steps
    reached_steady = False
    steady_history = []
    for n in range(n_steps):
        t_next = (n + 1) * spec.tau
        P_prev = P
        try:
            U, P, stats = newton_solve_step(
                disc, P_prev, t_next, U0=U, P0=P, config=config, schur_solver=schur_solver
            )
        except NewtonConvergenceError as exc:
            raise NewtonConvergenceError(
                f"time step {n + 1} (t = {t_next:g}): {exc}", exc.residuals
            ) from None
        records.append(
            StepRecord(
                step=n + 1,
                time=t_next,
                newton_iters=stats.iterations,
                final_residual=stats.residuals[-1],
                linear_iters=int(sum(stats.linear_iters)),
            )
        )
        if store_states:
            times.append(t_next)
            states.append((U.copy(), P.copy()))
        if callback is not None:
            callback(n + 1, t_next, U, P)
        if steady:
            dp = np.linalg.norm(P - P_prev)
            scale = spec.tau * max(np.linalg.norm(P), 1e-300)
            steady_history.append(dp / scale)
            if dp / scale < config.steady_tol:
                reached_steady = True
                break
    if not store_states:
        times, states = [records[-1].time], [(U, P)]
    return MarchResult(
        times=times,
        states=states,
        records=records,
        steady=reached_steady,
        steady_history=steady_history,
    )
