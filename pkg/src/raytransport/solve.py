"""Assembly and solution of the discrete viscosity problem.

The stationary system discretizes

    -eps Delta u + H u + alpha u = f . xi^m

on the phase grid, with the boundary ring pinned by row replacement:
outflow nodes carry the supplied data, inflow and glancing nodes carry 0.
eps = 0 is allowed and gives the pure upwind transport system.

The time-dependent problem is stepped with implicit Euler,

    (u^{n+1} - u^n) / dt + L_eps u^{n+1} = f(t_{n+1}) . xi^m,

with boundary data read at t_{n+1} and u^0 = 0; the step matrix is factored
once and reused.

Solves are restarted GMRES on the interior block (boundary unknowns are
eliminated exactly), preconditioned by an incomplete LU factorization, with
a Jacobi fallback.  Reports carry an independently recomputed relative
residual of the full assembled system.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AssemblyError, NonConvergenceError, NumericalError
from .phasegrid import (
    BoundaryMask,
    GridFunction,
    PhaseGrid,
    classify_boundary,
    h_matrix,
    laplace_matrix,
)
from .refractive import RefractiveModel
from .tensorfield import SymmetricTensorField, moment
from .transport import Attenuation


@dataclass
class SolveReport:
    iterations: int
    final_residual: float
    converged: bool
    wall_time: float
    method: str = "gmres+ilu"


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """Assembled discrete operator with Dirichlet rows replaced by identity."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    grid: PhaseGrid
    mask: BoundaryMask
    dirichlet_values: np.ndarray  # full-length; zero off the boundary ring
    epsilon: float

    @property
    def size(self) -> int:
        return self.rhs.shape[0]

    @property
    def interior_idx(self) -> np.ndarray:
        return np.arange((self.grid.I - 1) * self.grid.J * self.grid.K)


def symmetric_part(a: sp.spmatrix) -> sp.csr_matrix:
    return (0.5 * (a + a.T)).tocsr()


def _boundary_values(boundary_data, mask: BoundaryMask, size: int) -> np.ndarray:
    """Normalize outflow data to a full-length vector (zeros elsewhere)."""
    out = np.zeros(size)
    if isinstance(boundary_data, Mapping):
        missing = [int(i) for i in mask.outflow_idx if int(i) not in boundary_data]
        if missing:
            raise AssemblyError(
                f"boundary data missing for {len(missing)} outflow nodes (first: {missing[:3]})"
            )
        for i in mask.outflow_idx:
            out[i] = float(boundary_data[int(i)])
        return out
    data = np.asarray(boundary_data, dtype=float)
    if data.shape == (size,):
        out[mask.outflow_idx] = data[mask.outflow_idx]
        return out
    if data.shape == (mask.outflow_idx.size,):
        out[mask.outflow_idx] = data
        return out
    raise AssemblyError(
        f"boundary data shape {data.shape} matches neither the grid ({size},) "
        f"nor the outflow set ({mask.outflow_idx.size},)"
    )


def interior_operator(
    grid: PhaseGrid,
    model: RefractiveModel,
    att: Attenuation,
    epsilon: float,
) -> sp.csr_matrix:
    """The raw operator -eps*Laplace + H + alpha*I on all rows (no pinning)."""
    if epsilon < 0.0:
        raise ValueError("epsilon must be nonnegative")
    alpha = np.asarray(att.alpha(grid.x, grid.xi), dtype=float)
    a = h_matrix(grid, model) + sp.diags(alpha)
    if epsilon > 0.0:
        a = a - epsilon * laplace_matrix(grid, model)
    a = a.tocsr()
    a.sum_duplicates()
    a.sort_indices()
    return a


def assemble(
    grid: PhaseGrid,
    model: RefractiveModel,
    f: SymmetricTensorField,
    att: Attenuation,
    epsilon: float,
    boundary_data,
    t: float = 0.0,
) -> LinearSystem:
    """Assemble the stationary system with pinned boundary ring.

    ``boundary_data`` covers the outflow nodes: a mapping from linear node
    index to value, a full-grid array, or an array in outflow-index order.
    """
    mask = classify_boundary(grid, model)
    ub = _boundary_values(boundary_data, mask, grid.size)

    raw = interior_operator(grid, model, att, epsilon).tocoo()
    ring = grid.boundary_indices
    keep = raw.row < ring[0]
    rows = np.concatenate([raw.row[keep], ring])
    cols = np.concatenate([raw.col[keep], ring])
    vals = np.concatenate([raw.data[keep], np.ones(ring.size)])
    a = sp.coo_matrix((vals, (rows, cols)), shape=raw.shape).tocsr()
    a.sum_duplicates()
    a.sort_indices()

    b = np.asarray(moment(f, t, grid.x, grid.xi), dtype=float)
    b[ring] = ub[ring]
    if not np.all(np.isfinite(a.data)) or not np.all(np.isfinite(b)):
        raise AssemblyError("assembled system contains non-finite entries")
    return LinearSystem(matrix=a, rhs=b, grid=grid, mask=mask, dirichlet_values=ub, epsilon=epsilon)


# ---------------------------------------------------------------------------
# Krylov solve
# ---------------------------------------------------------------------------

def _make_preconditioner(a_ii: sp.csr_matrix, kind: str):
    if kind == "none":
        return None
    if kind == "jacobi":
        d = a_ii.diagonal()
        d = np.where(np.abs(d) > 0.0, d, 1.0)
        return spla.LinearOperator(a_ii.shape, matvec=lambda v: v / d)
    if kind == "ilu":
        try:
            ilu = spla.spilu(a_ii.tocsc(), drop_tol=1e-6, fill_factor=30)
            return spla.LinearOperator(a_ii.shape, matvec=ilu.solve)
        except RuntimeError:
            return _make_preconditioner(a_ii, "jacobi")
    raise ValueError(f"unknown preconditioner {kind!r}")


def default_max_iter(size: int) -> int:
    """Default cap on restart cycles, 20 * sqrt(system size)."""
    return int(np.ceil(20.0 * np.sqrt(size)))


def solve_static(
    system: LinearSystem,
    tol: float = 1e-10,
    max_iter: int | None = None,
    method: str = "gmres",
    preconditioner: str = "ilu",
    restart: int = 60,
    x0: np.ndarray | None = None,
) -> tuple[GridFunction, SolveReport]:
    """Solve the assembled system to relative residual <= tol.

    ``max_iter`` caps GMRES restart cycles (each of ``restart`` inner
    iterations); BiCGStab interprets it as its plain iteration cap.
    Non-convergence is reported, not raised: the best iterate is returned
    with ``converged=False`` and the caller decides.
    """
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    t0 = time.perf_counter()
    a = system.matrix
    interior = system.interior_idx
    ring = system.grid.boundary_indices
    ub = system.dirichlet_values

    a_ii = a[interior][:, interior].tocsr()
    a_ib = a[interior][:, ring].tocsr()
    b_i = system.rhs[interior] - a_ib @ ub[ring]

    u = np.zeros(system.size)
    u[ring] = ub[ring]
    iters = 0
    if np.linalg.norm(b_i) == 0.0:
        xi_sol = np.zeros(interior.size)
    else:
        m = _make_preconditioner(a_ii, preconditioner)
        cycles = max_iter if max_iter is not None else default_max_iter(system.size)

        count = {"n": 0}

        def cb(_):
            count["n"] += 1

        if method == "gmres":
            xi_sol, _ = spla.gmres(
                a_ii, b_i, x0=x0[interior] if x0 is not None else None,
                rtol=tol, atol=0.0, restart=restart, maxiter=cycles, M=m,
                callback=cb, callback_type="pr_norm",
            )
        elif method == "bicgstab":
            xi_sol, _ = spla.bicgstab(
                a_ii, b_i, x0=x0[interior] if x0 is not None else None,
                rtol=tol, atol=0.0, maxiter=cycles * restart, M=m, callback=cb,
            )
        else:
            raise ValueError(f"unknown method {method!r}")
        iters = count["n"]
    if not np.all(np.isfinite(xi_sol)):
        raise NumericalError("solver produced non-finite iterates")
    u[interior] = xi_sol

    bnorm = float(np.linalg.norm(system.rhs))
    res = float(np.linalg.norm(system.rhs - a @ u)) / (bnorm if bnorm > 0.0 else 1.0)
    report = SolveReport(
        iterations=iters,
        final_residual=res,
        converged=bool(res <= tol),
        wall_time=time.perf_counter() - t0,
        method=f"{method}+{preconditioner}",
    )
    return GridFunction(system.grid, u), report


def solve_dynamic(
    grid: PhaseGrid,
    model: RefractiveModel,
    f: SymmetricTensorField,
    att: Attenuation,
    epsilon: float,
    dt: float,
    t_final: float,
    boundary_data,
    tol: float = 1e-10,
    max_iter: int | None = None,
    preconditioner: str = "ilu",
    allow_unconverged: bool = False,
) -> tuple[list[GridFunction], list[SolveReport]]:
    """Implicit Euler march of the dynamic problem; returns all steps.

    ``boundary_data`` is either a callable (step_index, t) -> values over the
    outflow nodes (in outflow-index order) or an array of shape
    (n_steps + 1, n_outflow) indexed by step.  Step 0 is the initial state
    u = 0; steps 1..N are solved at t_n = n dt.
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    if t_final < dt:
        raise ValueError("t_final must be at least dt")
    n_steps = int(np.floor(t_final / dt + 1e-9))
    mask = classify_boundary(grid, model)

    if callable(boundary_data):
        bd = boundary_data
    else:
        table = np.asarray(boundary_data, dtype=float)
        if table.shape != (n_steps + 1, mask.outflow_idx.size):
            raise AssemblyError(
                f"boundary table shape {table.shape} != {(n_steps + 1, mask.outflow_idx.size)}"
            )

        def bd(step, t):
            return table[step]

    raw = interior_operator(grid, model, att, epsilon)
    interior = np.arange((grid.I - 1) * grid.J * grid.K)
    ring = grid.boundary_indices
    a_ii = raw[interior][:, interior].tocsr()
    a_ib = raw[interior][:, ring].tocsr()
    m_step = (a_ii + sp.diags(np.full(interior.size, 1.0 / dt))).tocsr()
    precond = _make_preconditioner(m_step, preconditioner)
    cycles = max_iter if max_iter is not None else default_max_iter(grid.size)

    states = [GridFunction(grid, np.zeros(grid.size))]
    reports: list[SolveReport] = []
    u_int = np.zeros(interior.size)
    for step in range(1, n_steps + 1):
        t_n = step * dt
        t0 = time.perf_counter()
        ub_full = np.zeros(grid.size)
        ub_full[mask.outflow_idx] = np.asarray(bd(step, t_n), dtype=float)
        b_i = (
            np.asarray(moment(f, t_n, grid.x[interior], grid.xi[interior]), dtype=float)
            + u_int / dt
            - a_ib @ ub_full[ring]
        )
        count = {"n": 0}

        def cb(_):
            count["n"] += 1

        u_new, _ = spla.gmres(
            m_step, b_i, x0=u_int, rtol=tol, atol=0.0, restart=60,
            maxiter=cycles, M=precond, callback=cb, callback_type="pr_norm",
        )
        if not np.all(np.isfinite(u_new)):
            raise NumericalError(f"non-finite iterates at step {step}")
        rnorm = float(np.linalg.norm(b_i))
        res = float(np.linalg.norm(b_i - m_step @ u_new)) / (rnorm if rnorm > 0.0 else 1.0)
        report = SolveReport(
            iterations=count["n"],
            final_residual=res,
            converged=bool(res <= tol),
            wall_time=time.perf_counter() - t0,
        )
        if not report.converged and not allow_unconverged:
            raise NonConvergenceError(
                f"step {step} (t = {t_n:.6g}) stopped at relative residual {res:.3e}"
            )
        u_int = u_new
        full = np.zeros(grid.size)
        full[interior] = u_int
        full[ring] = ub_full[ring]
        states.append(GridFunction(grid, full))
        reports.append(report)
    return states, reports


# ---------------------------------------------------------------------------
# discrete coercivity estimate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoercivityEstimate:
    lambda_min: float
    reliable: bool
    probes: int


def discrete_coercivity(system: LinearSystem, probes: int = 4, seed: int = 0) -> CoercivityEstimate:
    """Smallest eigenvalue of the symmetric part of the interior block.

    Estimated by shifted Lanczos iterations: with c an upper bound on the
    spectrum (max absolute row sum), the largest eigenvalue of c I - S gives
    lambda_min(S) = c - lambda_max(c I - S).  Each probe restarts the
    iteration from a fresh random vector; a positive result certifies
    discrete coercivity of the assembled operator.
    """
    interior = system.interior_idx
    s = symmetric_part(system.matrix[interior][:, interior])
    n = s.shape[0]
    c = float(np.max(np.abs(s).sum(axis=1)))
    shifted = (sp.identity(n) * c - s).tocsr()
    rng = np.random.default_rng(seed)
    best = -np.inf
    reliable = True
    for _ in range(max(1, probes)):
        v0 = rng.standard_normal(n)
        try:
            vals = spla.eigsh(
                shifted, k=1, which="LA", v0=v0, return_eigenvectors=False,
                maxiter=max(2000, 40 * n), tol=1e-10,
            )
            best = max(best, float(vals[0]))
        except spla.ArpackError:
            reliable = False
    if not np.isfinite(best):
        return CoercivityEstimate(lambda_min=np.nan, reliable=False, probes=probes)
    return CoercivityEstimate(lambda_min=c - best, reliable=reliable, probes=probes)
