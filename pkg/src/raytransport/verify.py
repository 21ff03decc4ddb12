"""Numerical verification tools: the fiber-integral identity and the eps sweep.

Two independent checks of the machinery:

* ``check_fiber_identity`` evaluates, over the direction sphere at a fixed base
  point in 3D, the two sides of the integration-by-parts identity

      - oint G^k_ij xi_i xi_j (du/dxi_k) u domega = oint <grad n, xi> / n u^2 domega,

  with the fiber derivatives du/dxi expressed through the (theta, phi) chart
  of the sphere of radius 1/n.  The pairing <grad n, xi> is evaluated under a
  selectable convention (the two readings differ by a factor n^2), and
  ``calibrate_identity_convention`` picks the one whose discrepancy vanishes
  under quadrature refinement.

* ``epsilon_sweep`` solves the viscosity system for a decreasing list of eps
  against boundary data read off the characteristic solution, and records
  relative errors against that same characteristic reference on the whole
  grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NumericalError
from .geodesic import IntegratorConfig
from .phasegrid import GridFunction, PhaseGrid, classify_boundary
from .refractive import RefractiveModel, acceleration
from .solve import SolveReport, assemble, solve_static
from .tensorfield import SymmetricTensorField
from .transport import Attenuation, QuadratureConfig, interior_solution_grid

CONVENTIONS = ("metric-gradient", "euclidean-gradient")


def _fiber_a(th, ph):
    return 1.0 + 0.5 * np.sin(th) * np.cos(ph)


def _fiber_a_dth(th, ph):
    return 0.5 * np.cos(th) * np.cos(ph)


def _fiber_a_dph(th, ph):
    return -0.5 * np.sin(th) * np.sin(ph)


def _fiber_b(th, ph):
    return np.exp(0.7 * np.sin(th) * np.sin(ph) + 0.3 * np.cos(th))


def _fiber_b_dth(th, ph):
    return _fiber_b(th, ph) * (0.7 * np.cos(th) * np.sin(ph) - 0.3 * np.sin(th))


def _fiber_b_dph(th, ph):
    return _fiber_b(th, ph) * 0.7 * np.sin(th) * np.cos(ph)


def _fiber_c(th, ph):
    return np.cos(th) + 0.5 * np.sin(th) ** 2 * np.sin(ph) * np.cos(ph)


def _fiber_c_dth(th, ph):
    return -np.sin(th) + np.sin(th) * np.cos(th) * np.sin(ph) * np.cos(ph)


def _fiber_c_dph(th, ph):
    return 0.5 * np.sin(th) ** 2 * (np.cos(ph) ** 2 - np.sin(ph) ** 2)


def standard_fiber_functions() -> list["FiberFunction"]:
    """Three smooth sphere functions with analytic chart derivatives.

    All are restrictions of entire functions of the unit direction vector,
    so their chart derivatives carry the sin(theta) factors that keep the
    1/sin(theta) terms of the fiber-derivative formulas bounded.
    """
    return [
        FiberFunction(value=_fiber_a, d_theta=_fiber_a_dth, d_phi=_fiber_a_dph),
        FiberFunction(value=_fiber_b, d_theta=_fiber_b_dth, d_phi=_fiber_b_dph),
        FiberFunction(value=_fiber_c, d_theta=_fiber_c_dth, d_phi=_fiber_c_dph),
    ]


@dataclass(frozen=True)
class FiberFunction:
    """A smooth test function on the direction sphere, u(theta, phi).

    Analytic chart derivatives are optional; central differences with step
    1e-5 are used when they are absent.
    """

    value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    d_theta: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    d_phi: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None


@dataclass(frozen=True)
class IdentityCheck:
    lhs: float
    rhs: float
    abs_diff: float
    convention: str


def check_fiber_identity(
    model: RefractiveModel,
    u_test: FiberFunction,
    x,
    n_theta: int = 64,
    n_phi: int = 64,
    convention: str = "metric-gradient",
) -> IdentityCheck:
    """Evaluate both sides of the fiber-integral identity at a base point.

    Quadrature is Gauss-Legendre in cos(theta) (which absorbs the sin(theta)
    of the sphere measure) tensored with the trapezoid rule in phi.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    if n_theta < 4 or n_phi < 4:
        raise ValueError("quadrature orders must be at least 4")
    if model.dim != 3:
        raise ValueError("the identity is checked on the 3D sphere bundle")
    x = np.asarray(x, dtype=float)
    if np.linalg.norm(x) >= 1.0:
        raise ValueError("base point must lie strictly inside the ball")

    s, w = np.polynomial.legendre.leggauss(n_theta)
    theta = np.arccos(s)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    wq = w[:, None] * (2.0 * np.pi / n_phi)

    u = np.asarray(u_test.value(th, ph), dtype=float)
    if u_test.d_theta is not None:
        u_th = np.asarray(u_test.d_theta(th, ph), dtype=float)
    else:
        h = 1e-5
        u_th = (u_test.value(th + h, ph) - u_test.value(th - h, ph)) / (2.0 * h)
    if u_test.d_phi is not None:
        u_ph = np.asarray(u_test.d_phi(th, ph), dtype=float)
    else:
        h = 1e-5
        u_ph = (u_test.value(th, ph + h) - u_test.value(th, ph - h)) / (2.0 * h)

    nval = float(model.n(x))
    grad = np.asarray(model.grad_n(x), dtype=float)
    sin_t, cos_t = np.sin(th), np.cos(th)
    sin_p, cos_p = np.sin(ph), np.cos(ph)
    omega = np.stack([sin_t * cos_p, sin_t * sin_p, cos_t], axis=-1)
    xi = omega / nval

    # chart form of the ambient fiber derivatives on the sphere |xi| = 1/n
    du_dxi = np.stack(
        [
            nval * (cos_p * cos_t * u_th - sin_p / sin_t * u_ph),
            nval * (sin_p * cos_t * u_th + cos_p / sin_t * u_ph),
            -nval * sin_t * u_th,
        ],
        axis=-1,
    )

    xb = np.broadcast_to(x, xi.shape)
    a = acceleration(model, xb, xi)  # equals -G^k_ij xi_i xi_j
    lhs_integrand = np.einsum("tpk,tpk->tp", a, du_dxi) * u
    lhs = float(np.sum(wq * lhs_integrand))

    g_dot_omega = np.einsum("k,tpk->tp", grad, omega)
    if convention == "metric-gradient":
        # <grad n, xi> read as the euclidean pairing with |xi| = 1/n
        rhs_integrand = g_dot_omega / nval**2 * u**2
    else:
        # metric pairing of the euclidean gradient: an extra n^2
        rhs_integrand = g_dot_omega * u**2
    rhs = float(np.sum(wq * rhs_integrand))
    return IdentityCheck(lhs=lhs, rhs=rhs, abs_diff=abs(lhs - rhs), convention=convention)


def calibrate_identity_convention(
    models: Sequence[RefractiveModel],
    u_tests: Sequence[FiberFunction],
    points: Sequence,
    orders: tuple[int, int] = (16, 32),
) -> tuple[str, dict]:
    """Run both pairing conventions under refinement and pick the consistent one.

    Returns the winning convention and a per-convention record of the worst
    discrepancy at the coarse and fine orders.
    """
    record: dict = {}
    for conv in CONVENTIONS:
        worst = []
        for order in orders:
            d = 0.0
            for m in models:
                for u in u_tests:
                    for x in points:
                        chk = check_fiber_identity(m, u, x, n_theta=order, n_phi=order, convention=conv)
                        d = max(d, chk.abs_diff / (1.0 + abs(chk.rhs)))
            worst.append(d)
        record[conv] = tuple(worst)
    chosen = min(CONVENTIONS, key=lambda c: record[c][-1])
    return chosen, record


# ---------------------------------------------------------------------------
# relative errors and the eps sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorNorms:
    l2: float
    linf: float


def relative_error(
    u_num: GridFunction,
    u_ref: GridFunction,
    floor_cut: float | None = None,
) -> tuple[GridFunction, ErrorNorms]:
    """Pointwise |u_num - u_ref| / max(|u_ref|, floor_cut) and its norms.

    The default floor is 1e-12 * max|u_ref| (1.0 when the reference vanishes
    identically); the l2 norm is the node-averaged root mean square over all
    nodes.
    """
    if u_num.grid is not u_ref.grid and u_num.grid.size != u_ref.grid.size:
        raise ValueError("grid mismatch between numerical and reference fields")
    ref = u_ref.values
    if floor_cut is None:
        m = float(np.max(np.abs(ref)))
        floor_cut = 1e-12 * m if m > 0.0 else 1.0
    field = np.abs(u_num.values - ref) / np.maximum(np.abs(ref), floor_cut)
    norms = ErrorNorms(l2=float(np.sqrt(np.mean(field**2))), linf=float(np.max(field)))
    return GridFunction(u_num.grid, field), norms


@dataclass(eq=False)
class SweepResult:
    """Per-eps relative errors of the viscosity solves against the characteristic reference.

    Norms are taken over the nodes where |u_ref| exceeds the floor cut.
    """

    epsilons: tuple[float, ...]
    l2: tuple[float, ...]
    linf: tuple[float, ...]
    reports: list[SolveReport]
    error_fields: list[GridFunction | None]
    solutions: list[GridFunction | None]
    u_ref: GridFunction
    floor_cut: float

    def __post_init__(self):
        eps = np.asarray(self.epsilons)
        if eps.size and (np.any(np.diff(eps) >= 0.0) or np.any(eps <= 0.0)):
            raise ValueError("epsilons must be strictly decreasing and positive")

    def rows(self):
        for k, eps in enumerate(self.epsilons):
            r = self.reports[k]
            yield (eps, self.l2[k], self.linf[k], r.iterations, r.final_residual, r.converged)


def epsilon_sweep(
    model: RefractiveModel,
    f: SymmetricTensorField,
    att: Attenuation,
    grid: PhaseGrid,
    eps_list: Sequence[float],
    q: QuadratureConfig | None = None,
    cfg: IntegratorConfig | None = None,
    tol: float = 1e-10,
    max_iter: int | None = None,
    preconditioner: str = "ilu",
    method: str = "gmres",
    workers: int = 1,
) -> SweepResult:
    """Solve the viscosity system for each eps against characteristic boundary data.

    The reference solution is the characteristic integral evaluated at every
    grid node; its restriction to the outflow ring is the Dirichlet data, so
    the relative error vanishes there by construction.  Solver failures are
    recorded per eps (NaN norms) and the sweep continues.
    """
    eps = [float(e) for e in eps_list]
    if not eps or any(e <= 0.0 for e in eps) or any(a <= b for a, b in zip(eps, eps[1:])):
        raise ValueError("eps_list must be strictly decreasing and positive")
    q = q or QuadratureConfig()
    u_ref_vals = interior_solution_grid(model, f, att, grid, q=q, t=0.0, cfg=cfg, workers=workers)
    u_ref = GridFunction(grid, u_ref_vals)
    mref = float(np.max(np.abs(u_ref_vals)))
    floor_cut = 1e-12 * mref if mref > 0.0 else 1.0
    norm_mask = np.abs(u_ref_vals) > floor_cut

    l2s, linfs, reports, fields, sols = [], [], [], [], []
    for e in eps:
        try:
            system = assemble(grid, model, f, att, e, u_ref_vals)
            sol, rep = solve_static(
                system, tol=tol, max_iter=max_iter, method=method, preconditioner=preconditioner
            )
            field, _ = relative_error(sol, u_ref, floor_cut=floor_cut)
            masked = field.values[norm_mask] if norm_mask.any() else field.values
            l2s.append(float(np.sqrt(np.mean(masked**2))))
            linfs.append(float(np.max(masked)))
            reports.append(rep)
            fields.append(field)
            sols.append(sol)
        except NumericalError:
            l2s.append(float("nan"))
            linfs.append(float("nan"))
            reports.append(SolveReport(iterations=0, final_residual=float("inf"), converged=False, wall_time=0.0))
            fields.append(None)
            sols.append(None)
    return SweepResult(
        epsilons=tuple(eps),
        l2=tuple(l2s),
        linf=tuple(linfs),
        reports=reports,
        error_fields=fields,
        solutions=sols,
        u_ref=u_ref,
        floor_cut=floor_cut,
    )
