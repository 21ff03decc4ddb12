"""Attenuated ray transforms and the characteristic transport solution.

The transform of a rank-m field f with absorption alpha, evaluated at an
outflow boundary state (x, xi), integrates the moment f . gamma'^m along the
ray through (x, xi) from its entry parameter up to 0, damped by the
accumulated absorption:

    value = int_{tau_-}^{0} (f . gamma'^m)(t + tau) exp(-int_tau^0 alpha) dtau.

Evaluating the same integral at interior states extends the transform to the
whole phase space; that extension solves the transport equation

    d_t u + H u + alpha u = f . xi^m,

vanishes on inflow boundary states and restricts to the transform on outflow
states, which makes it the reference solution ("characteristic oracle") for
the grid solvers.

Implementation notes.  All evaluation is routed through one batched
backward march: rays step with RK4 in two half-steps per quadrature interval
(the half-step state feeds the interval rule), absorption accumulates as a
running trapezoid sum on the same nodes, and boundary exits are parked
during the march and refined afterwards in a single batched bisection.
Single-state operations are the batch of one, so every public entry point
exercises the same arithmetic.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Callable, Sequence

import numpy as np

from .errors import StencilError, TraceLimitError
from .geodesic import GLANCING_TOL, IntegratorConfig, PhaseSpacePoint, refine_exit, rk4_step
from .refractive import RefractiveModel, acceleration
from .tensorfield import SymmetricTensorField, moment


@dataclass(frozen=True)
class Attenuation:
    """Absorption coefficient alpha(x, xi) >= alpha0 > 0 on phase space."""

    alpha: Callable[[np.ndarray, np.ndarray], np.ndarray]
    alpha0: float

    def __post_init__(self):
        if not self.alpha0 > 0.0:
            raise ValueError("alpha0 must be positive")


def _const_alpha(a: float, x, xi):
    return np.full(np.asarray(x).shape[:-1], a)


def constant_attenuation(a: float) -> Attenuation:
    return Attenuation(alpha=partial(_const_alpha, float(a)), alpha0=float(a))


def parse_attenuation(spec: str) -> Attenuation:
    """``constant:<a>`` or a bare positive number."""
    spec = spec.strip()
    head, _, tail = spec.partition(":")
    try:
        if head == "constant":
            return constant_attenuation(float(tail))
        return constant_attenuation(float(spec))
    except ValueError:
        raise ValueError(f"bad attenuation spec {spec!r}") from None


@dataclass(frozen=True)
class QuadratureConfig:
    rule: str = "simpson"
    step: float = 1e-3

    def __post_init__(self):
        if self.rule not in ("midpoint", "simpson"):
            raise ValueError(f"rule must be 'midpoint' or 'simpson', got {self.rule!r}")
        if not self.step > 0.0:
            raise ValueError("step must be positive")


# ---------------------------------------------------------------------------
# the batched backward march
# ---------------------------------------------------------------------------

@dataclass
class MarchResult:
    values: np.ndarray      # integral per ray
    tau_minus: np.ndarray   # entry parameter per ray (<= 0)
    partials: np.ndarray | None = None  # (n_rows, n_rays) partial integrals at s = k*step


def _march_backward(
    model: RefractiveModel,
    f: SymmetricTensorField,
    att: Attenuation,
    t: float,
    x0: np.ndarray,
    xi0: np.ndarray,
    q: QuadratureConfig,
    cfg: IntegratorConfig,
    dynamic: bool,
    record: bool = False,
) -> MarchResult:
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    xi0 = np.atleast_2d(np.asarray(xi0, dtype=float))
    n_rays = x0.shape[0]
    step = float(q.step)
    half = 0.5 * step
    simpson = q.rule == "simpson"

    def alpha_at(x, vback):
        return np.asarray(att.alpha(x, -vback), dtype=float)

    def source_at(s_offset, x, vback):
        tv = (t - s_offset) if dynamic else t
        return np.asarray(moment(f, tv, x, -vback), dtype=float)

    values = np.zeros(n_rays)
    tau_minus = np.zeros(n_rays)

    # Boundary states heading inward along the reversed ray are the live ones;
    # inflow and glancing boundary states carry the empty integral.
    rad = np.sqrt(np.einsum("ij,ij->i", x0, x0))
    pairing = np.einsum("ij,ij->i", xi0, x0)
    dead = (rad >= 1.0 - 10.0 * cfg.boundary_tol) & (pairing <= GLANCING_TOL)

    alive = np.nonzero(~dead)[0]
    xa = x0[alive]
    va = -xi0[alive]
    Ia = np.zeros(alive.size)
    Aa = np.zeros(alive.size)
    sa = np.zeros(alive.size)
    aa = alpha_at(xa, va)
    ga = source_at(np.zeros(alive.size), xa, va)

    parked: list[tuple] = []
    snapshots: list[np.ndarray] = [np.zeros(n_rays)] if record else []
    full = np.zeros(n_rays) if record else None

    steps = 0
    while alive.size:
        if steps >= cfg.max_steps:
            raise TraceLimitError(
                f"{alive.size} rays did not exit within {cfg.max_steps} quadrature steps"
            )
        steps += 1
        xm, vm = rk4_step(model, xa, va, half)
        xe, ve = rk4_step(model, xm, vm, half)
        out_mid = np.einsum("ij,ij->i", xm, xm) >= 1.0
        out_end = np.einsum("ij,ij->i", xe, xe) >= 1.0
        crossed = out_mid | out_end
        if crossed.any():
            # Exit lies within this step; park the pre-step state and refine later.
            hi = np.where(out_end[crossed], step, half)
            parked.append((
                alive[crossed], xa[crossed], va[crossed], Ia[crossed],
                Aa[crossed], sa[crossed], ga[crossed], aa[crossed], hi,
                steps,
            ))
        keep = ~crossed
        alive = alive[keep]
        if alive.size:
            xk, vk = xm[keep], vm[keep]
            xek, vek = xe[keep], ve[keep]
            am = alpha_at(xk, vk)
            ae = alpha_at(xek, vek)
            Am = Aa[keep] + 0.25 * step * (aa[keep] + am)
            Ae = Am + 0.25 * step * (am + ae)
            sk = sa[keep]
            gm = source_at(sk + half, xk, vk) * np.exp(-Am)
            ge = source_at(sk + step, xek, vek) * np.exp(-Ae)
            if simpson:
                Ia = Ia[keep] + (step / 6.0) * (ga[keep] + 4.0 * gm + ge)
            else:
                Ia = Ia[keep] + step * gm
            xa, va, Aa, aa, ga = xek, vek, Ae, ae, ge
            sa = sk + step
        else:
            xa = np.empty((0, x0.shape[1]))
            va = xa
            Ia = Aa = sa = aa = ga = np.empty(0)
        if record:
            full[alive] = Ia
            snapshots.append(full.copy())

    # Refine all parked exits in one batch and add their stub contributions.
    if parked:
        idx = np.concatenate([p[0] for p in parked])
        xP = np.concatenate([p[1] for p in parked])
        vP = np.concatenate([p[2] for p in parked])
        IP = np.concatenate([p[3] for p in parked])
        AP = np.concatenate([p[4] for p in parked])
        sP = np.concatenate([p[5] for p in parked])
        gP = np.concatenate([p[6] for p in parked])
        aP = np.concatenate([p[7] for p in parked])
        hiP = np.concatenate([np.asarray(p[8]) for p in parked])
        kP = np.concatenate([np.full(p[0].size, p[9]) for p in parked])

        ds, xE, vE = refine_exit(model, xP, vP, hiP)
        xm, vm = rk4_step(model, xP, vP, 0.5 * ds)
        am = alpha_at(xm, vm)
        ae = alpha_at(xE, vE)
        Am = AP + 0.25 * ds * (aP + am)
        Ae = Am + 0.25 * ds * (am + ae)
        gm = source_at(sP + 0.5 * ds, xm, vm) * np.exp(-Am)
        ge = source_at(sP + ds, xE, vE) * np.exp(-Ae)
        if simpson:
            stub = (ds / 6.0) * (gP + 4.0 * gm + ge)
        else:
            stub = ds * gm
        values[idx] = IP + stub
        tau_minus[idx] = -(sP + ds)

        if record:
            table = np.stack(snapshots, axis=0)
            for col, row0, val in zip(idx, kP, values[idx]):
                table[int(row0):, col] = val
            return MarchResult(values=values, tau_minus=tau_minus, partials=table)

    if record:
        table = np.stack(snapshots, axis=0) if snapshots else np.zeros((1, n_rays))
        return MarchResult(values=values, tau_minus=tau_minus, partials=table)
    return MarchResult(values=values, tau_minus=tau_minus)


# ---------------------------------------------------------------------------
# public transform operations
# ---------------------------------------------------------------------------

def _require_static(f: SymmetricTensorField):
    if f.time_dependent or f.switch_on:
        raise ValueError("field is time-dependent; use the dynamic transform")


def _require_outflow(p: PhaseSpacePoint):
    r = float(np.linalg.norm(p.x))
    if abs(r - 1.0) > 1e-9:
        raise ValueError(f"point is not on the boundary: |x| = {r:.6g}")
    if float(np.dot(p.xi, p.x)) < -GLANCING_TOL:
        raise ValueError("not an outflow boundary state: <xi, nu> < 0")


def _default_cfg(q: QuadratureConfig) -> IntegratorConfig:
    # budget enough steps for rays of metric length 20 at the requested step
    return IntegratorConfig(step=q.step, max_steps=max(20000, int(20.0 / q.step)))


def ray_transform_static(
    model: RefractiveModel,
    f: SymmetricTensorField,
    att: Attenuation,
    p: PhaseSpacePoint,
    q: QuadratureConfig | None = None,
    cfg: IntegratorConfig | None = None,
) -> float:
    """Attenuated transform of a time-independent field at an outflow state."""
    _require_static(f)
    _require_outflow(p)
    q = q or QuadratureConfig()
    cfg = cfg or _default_cfg(q)
    res = _march_backward(model, f, att, 0.0, p.x, p.xi, q, cfg, dynamic=False)
    return float(res.values[0])


def ray_transform_dynamic(
    model: RefractiveModel,
    f: SymmetricTensorField,
    att: Attenuation,
    t: float,
    p: PhaseSpacePoint,
    q: QuadratureConfig | None = None,
    cfg: IntegratorConfig | None = None,
) -> float:
    """Dynamic transform: the field is read at time t + tau along the ray."""
    _require_outflow(p)
    q = q or QuadratureConfig()
    cfg = cfg or _default_cfg(q)
    res = _march_backward(model, f, att, float(t), p.x, p.xi, q, cfg, dynamic=True)
    return float(res.values[0])


def interior_solution(
    model: RefractiveModel,
    f: SymmetricTensorField,
    att: Attenuation,
    t: float,
    p: PhaseSpacePoint,
    q: QuadratureConfig | None = None,
    cfg: IntegratorConfig | None = None,
) -> float:
    """The characteristic solution u(t, x, xi) at an interior phase state.

    Vanishes as (x, xi) approaches an inflow boundary state and tends to the
    dynamic transform at outflow states.
    """
    r = float(np.linalg.norm(p.x))
    if r > 1.0:
        raise ValueError(f"point is not inside the ball: |x| = {r:.6g}")
    q = q or QuadratureConfig()
    cfg = cfg or _default_cfg(q)
    res = _march_backward(model, f, att, float(t), p.x, p.xi, q, cfg, dynamic=True)
    return float(res.values[0])


def _chunk_eval(model, f, att, t, x, xi, q, cfg, dynamic):
    return _march_backward(model, f, att, t, x, xi, q, cfg, dynamic=dynamic).values


def interior_solution_grid(
    model: RefractiveModel,
    f: SymmetricTensorField,
    att: Attenuation,
    grid,
    q: QuadratureConfig | None = None,
    t: float = 0.0,
    cfg: IntegratorConfig | None = None,
    workers: int = 1,
) -> np.ndarray:
    """Characteristic solution at every node of a phase grid.

    Inflow and glancing boundary nodes get exactly 0.  With ``workers > 1``
    the node range is split into contiguous chunks evaluated in separate
    processes and reassembled in chunk order, so the result does not depend
    on the worker count.
    """
    q = q or QuadratureConfig()
    cfg = cfg or _default_cfg(q)
    dynamic = f.time_dependent or f.switch_on
    x, xi = grid.x, grid.xi
    if workers <= 1:
        return _chunk_eval(model, f, att, t, x, xi, q, cfg, dynamic)
    bounds = np.linspace(0, x.shape[0], workers + 1).astype(int)
    jobs = [(x[a:b], xi[a:b]) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(
            pool.map(
                partial(_chunk_eval, model, f, att, t, q=q, cfg=cfg, dynamic=dynamic),
                [j[0] for j in jobs],
                [j[1] for j in jobs],
            )
        )
    return np.concatenate(parts)


def dynamic_boundary_table(
    model: RefractiveModel,
    f: SymmetricTensorField,
    att: Attenuation,
    x: np.ndarray,
    xi: np.ndarray,
    times: Sequence[float],
    q: QuadratureConfig | None = None,
    cfg: IntegratorConfig | None = None,
) -> np.ndarray:
    """Dynamic transform values at the given boundary states for many times.

    Returns an array of shape (len(times), n_states).  For fields that are
    constant in time the table is computed from a single march: without a
    switch-on the transform does not depend on t at all, and with one the
    value at time t is the partial integral accumulated over the most recent
    stretch of ray of parameter length t, read off the recorded march.
    """
    q = q or QuadratureConfig()
    cfg = cfg or _default_cfg(q)
    times = np.asarray(list(times), dtype=float)
    if np.any(times < 0.0):
        raise ValueError("times must be nonnegative")

    if f.time_dependent:
        rows = [
            _march_backward(model, f, att, float(tv), x, xi, q, cfg, dynamic=True).values
            for tv in times
        ]
        return np.stack(rows, axis=0)

    if not f.switch_on:
        vals = _march_backward(model, f, att, 0.0, x, xi, q, cfg, dynamic=False).values
        return np.tile(vals, (times.size, 1))

    res = _march_backward(model, f, att, 0.0, x, xi, q, cfg, dynamic=False, record=True)
    table = res.partials
    n_rows = table.shape[0]
    if n_rows == 1:
        return np.tile(table[0], (times.size, 1))
    pos = np.clip(times / q.step, 0.0, n_rows - 1.0)
    k0 = np.minimum(pos.astype(int), n_rows - 2)
    w = pos - k0
    return (1.0 - w)[:, None] * table[k0] + w[:, None] * table[k0 + 1]


# ---------------------------------------------------------------------------
# pointwise transport residual
# ---------------------------------------------------------------------------

def _phase_point_2d(model, x, theta) -> PhaseSpacePoint:
    d = np.array([np.cos(theta), np.sin(theta)])
    return PhaseSpacePoint(x=np.asarray(x, dtype=float), xi=d / float(model.n(np.asarray(x))))


def _turn_rate(model, x, xi) -> float:
    a = acceleration(model, np.asarray(x, dtype=float), np.asarray(xi, dtype=float))
    return float((a[1] * xi[0] - a[0] * xi[1]) / np.dot(xi, xi))


def transport_residual(
    model: RefractiveModel,
    f: SymmetricTensorField,
    att: Attenuation,
    u: Callable[[float, PhaseSpacePoint], float],
    t: float,
    p: PhaseSpacePoint,
    fd_step: float,
    time_derivative: bool | None = None,
) -> float:
    """(d_t u) + H u + alpha u - f . xi^m at a 2D phase state.

    H u is assembled from central differences of u in the sphere-bundle
    coordinates (x, theta): the x-derivatives hold the direction angle fixed
    (the tangent is re-normalized at the shifted base point) and the fiber
    derivative is a central difference in theta, weighted by the turning
    rate of the ray.  The time derivative is a central difference with the
    same step; by default it is evaluated only when the field depends on
    time (it vanishes identically otherwise).
    """
    if model.dim != 2:
        raise ValueError("transport_residual is implemented for dim 2")
    x = np.asarray(p.x, dtype=float)
    xi = np.asarray(p.xi, dtype=float)
    r = float(np.linalg.norm(x))
    if r + fd_step >= 1.0 - 1e-12:
        raise StencilError(f"stencil of width {fd_step} does not fit at |x| = {r:.6g}")
    theta = float(np.arctan2(xi[1], xi[0]))

    def u_at(xx, th):
        return float(u(t, _phase_point_2d(model, xx, th)))

    u0 = float(u(t, p))
    e1 = np.array([fd_step, 0.0])
    e2 = np.array([0.0, fd_step])
    du_dx1 = (u_at(x + e1, theta) - u_at(x - e1, theta)) / (2.0 * fd_step)
    du_dx2 = (u_at(x + e2, theta) - u_at(x - e2, theta)) / (2.0 * fd_step)
    du_dth = (u_at(x, theta + fd_step) - u_at(x, theta - fd_step)) / (2.0 * fd_step)
    h_u = xi[0] * du_dx1 + xi[1] * du_dx2 + _turn_rate(model, x, xi) * du_dth

    if time_derivative is None:
        time_derivative = f.time_dependent or f.switch_on
    dt_u = 0.0
    if time_derivative:
        dt_u = (float(u(t + fd_step, p)) - float(u(t - fd_step, p))) / (2.0 * fd_step)

    alpha0 = float(np.asarray(att.alpha(x[None, :], xi[None, :]))[0])
    src = float(moment(f, t, x, xi))
    return dt_u + h_u + alpha0 * u0 - src


def oracle_residuals(
    model: RefractiveModel,
    f: SymmetricTensorField,
    att: Attenuation,
    t: float,
    points: Sequence[PhaseSpacePoint],
    fd_step: float,
    q: QuadratureConfig | None = None,
    cfg: IntegratorConfig | None = None,
) -> np.ndarray:
    """transport_residual of the characteristic solution at many states.

    Equivalent to calling :func:`transport_residual` with
    u = interior_solution at each state, but all stencil evaluations are
    batched into single marches.
    """
    if model.dim != 2:
        raise ValueError("oracle_residuals is implemented for dim 2")
    q = q or QuadratureConfig()
    cfg = cfg or _default_cfg(q)
    n_pts = len(points)
    starts_x = np.empty((7 * n_pts, 2))
    starts_xi = np.empty((7 * n_pts, 2))
    thetas = np.empty(n_pts)
    for i, p in enumerate(points):
        x = np.asarray(p.x, dtype=float)
        xi = np.asarray(p.xi, dtype=float)
        r = float(np.linalg.norm(x))
        if r + fd_step >= 1.0 - 1e-12:
            raise StencilError(f"stencil of width {fd_step} does not fit at |x| = {r:.6g}")
        th = float(np.arctan2(xi[1], xi[0]))
        thetas[i] = th
        offs = [
            (x, th),
            (x + np.array([fd_step, 0.0]), th),
            (x - np.array([fd_step, 0.0]), th),
            (x + np.array([0.0, fd_step]), th),
            (x - np.array([0.0, fd_step]), th),
            (x, th + fd_step),
            (x, th - fd_step),
        ]
        for s, (xx, tt) in enumerate(offs):
            pp = _phase_point_2d(model, xx, tt)
            starts_x[7 * i + s] = pp.x
            starts_xi[7 * i + s] = pp.xi

    vals = _march_backward(model, f, att, float(t), starts_x, starts_xi, q, cfg, dynamic=True).values
    vals = vals.reshape(n_pts, 7)

    time_derivative = f.time_dependent or f.switch_on
    dt_u = np.zeros(n_pts)
    if time_derivative:
        centers_x = starts_x[::7]
        centers_xi = starts_xi[::7]
        up = _march_backward(model, f, att, float(t) + fd_step, centers_x, centers_xi, q, cfg, dynamic=True).values
        um = _march_backward(model, f, att, float(t) - fd_step, centers_x, centers_xi, q, cfg, dynamic=True).values
        dt_u = (up - um) / (2.0 * fd_step)

    out = np.empty(n_pts)
    for i, p in enumerate(points):
        x = np.asarray(p.x, dtype=float)
        xi = np.asarray(p.xi, dtype=float)
        u0, up1, um1, up2, um2, uthp, uthm = vals[i]
        du_dx1 = (up1 - um1) / (2.0 * fd_step)
        du_dx2 = (up2 - um2) / (2.0 * fd_step)
        du_dth = (uthp - uthm) / (2.0 * fd_step)
        h_u = xi[0] * du_dx1 + xi[1] * du_dx2 + _turn_rate(model, x, xi) * du_dth
        alpha0 = float(np.asarray(att.alpha(x[None, :], xi[None, :]))[0])
        src = float(moment(f, t, x, xi))
        out[i] = dt_u[i] + h_u + alpha0 * u0 - src
    return out
