"""Geodesic integration on the unit ball with boundary-exit detection.

Rays are solutions of gamma'' = -G(gamma)[gamma', gamma'] integrated with
classical fixed-step RK4.  The affine parameter is metric arc length: states
are kept at metric unit speed, |v| = 1/n(x) euclidean.  Exits through the
unit sphere are refined by bisection on |gamma(tau)| - 1 inside the crossing
step, so entry/exit parameters are resolved far below the step size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, TraceLimitError
from .refractive import RefractiveModel, acceleration

# Tangential boundary starts below this |<xi, nu>| are treated as glancing.
GLANCING_TOL = 1e-12


@dataclass(frozen=True)
class IntegratorConfig:
    step: float = 1e-3
    max_steps: int = 20000
    boundary_tol: float = 1e-10

    def __post_init__(self):
        if not self.step > 0.0:
            raise ValueError("step must be positive")
        if not self.boundary_tol > 0.0:
            raise ValueError("boundary_tol must be positive")


@dataclass(frozen=True)
class PhaseSpacePoint:
    """A position in the ball with a metric-unit tangent (|xi| = 1/n(x))."""

    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float))


def unit_phase_point(model: RefractiveModel, x, direction) -> PhaseSpacePoint:
    """Normalize ``direction`` to metric unit speed at x."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(direction, dtype=float)
    nd = np.linalg.norm(d)
    if nd == 0.0:
        raise ValueError("direction must be non-zero")
    return PhaseSpacePoint(x=x, xi=d / (nd * float(model.n(x))))


def angle_phase_point(model: RefractiveModel, x, theta: float) -> PhaseSpacePoint:
    """2D helper: metric-unit tangent at angle theta."""
    return unit_phase_point(model, x, np.array([np.cos(theta), np.sin(theta)]))


def speed_defect(model: RefractiveModel, x, v) -> float:
    """|n(x) |v| - 1|: deviation from metric unit speed."""
    return abs(float(model.n(np.asarray(x))) * float(np.linalg.norm(v)) - 1.0)


@dataclass(frozen=True, eq=False)
class GeodesicPath:
    """A sampled geodesic through tau = 0 with boundary endpoints.

    ``taus`` is strictly increasing from tau_minus to tau_plus; node i holds
    position xs[i] and velocity vs[i].
    """

    taus: np.ndarray
    xs: np.ndarray
    vs: np.ndarray
    tau_minus: float
    tau_plus: float
    step: float

    def __len__(self) -> int:
        return self.taus.shape[0]


# ---------------------------------------------------------------------------
# RK4 stepping (batched: states of shape (N, dim))
# ---------------------------------------------------------------------------

def rk4_step(model: RefractiveModel, x: np.ndarray, v: np.ndarray, h):
    """One classical RK4 step of size h (scalar or per-row array)."""
    h = np.asarray(h, dtype=float)
    if h.ndim:
        h = h[..., None]
    a1 = acceleration(model, x, v)
    x2 = x + 0.5 * h * v
    v2 = v + 0.5 * h * a1
    a2 = acceleration(model, x2, v2)
    x3 = x + 0.5 * h * v2
    v3 = v + 0.5 * h * a2
    a3 = acceleration(model, x3, v3)
    x4 = x + h * v3
    v4 = v + h * a3
    a4 = acceleration(model, x4, v4)
    xn = x + (h / 6.0) * (v + 2.0 * v2 + 2.0 * v3 + v4)
    vn = v + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    return xn, vn


def refine_exit(model: RefractiveModel, x: np.ndarray, v: np.ndarray, hi, iters: int = 60):
    """Bisect the crossing of |gamma| = 1 inside a step.

    ``x, v`` are the last states strictly inside the ball and the crossing
    happens within step size ``hi`` (scalar or per-row).  Returns
    (s_exit, x_exit, v_exit); each bisection iterate re-steps from (x, v) so
    the refined state is an RK4 state, not an interpolant.
    """
    lo = np.zeros(x.shape[0])
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (x.shape[0],)).copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        xm, _ = rk4_step(model, x, v, mid)
        outside = np.einsum("ij,ij->i", xm, xm) >= 1.0
        hi = np.where(outside, mid, hi)
        lo = np.where(outside, lo, mid)
    s = hi  # first parameter at or beyond the sphere
    xe, ve = rk4_step(model, x, v, s)
    return s, xe, ve


def _march(model: RefractiveModel, x0: np.ndarray, v0: np.ndarray, cfg: IntegratorConfig):
    """March one ray forward until it exits; returns node lists and exit state."""
    h = cfg.step
    taus = [0.0]
    xs = [x0.copy()]
    vs = [v0.copy()]
    x, v = x0.copy(), v0.copy()
    for _ in range(cfg.max_steps):
        xn, vn = rk4_step(model, x[None, :], v[None, :], h)
        xn, vn = xn[0], vn[0]
        if np.dot(xn, xn) >= 1.0:
            s, xe, ve = refine_exit(model, x[None, :], v[None, :], h)
            tau_exit = taus[-1] + float(s[0])
            taus.append(tau_exit)
            xs.append(xe[0])
            vs.append(ve[0])
            return taus, xs, vs
        x, v = xn, vn
        taus.append(taus[-1] + h)
        xs.append(x.copy())
        vs.append(v.copy())
    raise TraceLimitError(
        f"ray did not reach the boundary within {cfg.max_steps} steps of size {h}"
    )


def trace(model: RefractiveModel, p: PhaseSpacePoint, cfg: IntegratorConfig | None = None) -> GeodesicPath:
    """Integrate the geodesic through p both ways to the boundary.

    The backward half is traced as the forward geodesic of (x, -xi) with the
    parameter sign flipped.  Starts on the boundary are allowed: an outward
    tangent gives tau_plus = 0, an inward one tau_minus = 0, and a glancing
    tangent returns the trivial single-node path (tau_minus = tau_plus = 0).
    """
    cfg = cfg or IntegratorConfig()
    x0 = np.asarray(p.x, dtype=float)
    xi0 = np.asarray(p.xi, dtype=float)
    if np.linalg.norm(xi0) == 0.0:
        raise ValueError("xi must be non-zero")
    if speed_defect(model, x0, xi0) > 1e-8:
        raise ValueError("xi is not metric-unit; normalize with unit_phase_point")
    r0 = float(np.linalg.norm(x0))
    if r0 > 1.0 + 10.0 * cfg.boundary_tol:
        raise DomainError(f"start point outside the ball: |x| = {r0:.6g}")

    on_boundary = r0 >= 1.0 - 10.0 * cfg.boundary_tol
    pairing = float(np.dot(xi0, x0))
    if on_boundary and abs(pairing) <= GLANCING_TOL:
        return GeodesicPath(
            taus=np.array([0.0]),
            xs=x0[None, :].copy(),
            vs=xi0[None, :].copy(),
            tau_minus=0.0,
            tau_plus=0.0,
            step=cfg.step,
        )

    if on_boundary and pairing > 0.0:
        fwd = ([0.0], [x0.copy()], [xi0.copy()])
    else:
        fwd = _march(model, x0, xi0, cfg)
    if on_boundary and pairing < 0.0:
        bwd = ([0.0], [x0.copy()], [xi0.copy()])
    else:
        bwd = _march(model, x0, -xi0, cfg)

    b_taus, b_xs, b_vs = bwd
    f_taus, f_xs, f_vs = fwd
    taus = [-t for t in reversed(b_taus[1:])] + list(f_taus)
    xs = list(reversed(b_xs[1:])) + list(f_xs)
    vs = [-v for v in reversed(b_vs[1:])] + list(f_vs)
    return GeodesicPath(
        taus=np.asarray(taus),
        xs=np.asarray(xs),
        vs=np.asarray(vs),
        tau_minus=float(taus[0]),
        tau_plus=float(taus[-1]),
        step=cfg.step,
    )


def tau_bounds(model: RefractiveModel, p: PhaseSpacePoint, cfg: IntegratorConfig | None = None) -> tuple[float, float]:
    """Entry and exit parameters (tau_minus <= 0 <= tau_plus) of the ray through p."""
    path = trace(model, p, cfg)
    return path.tau_minus, path.tau_plus


def bouguer_invariant(model: RefractiveModel, x, v) -> float:
    """Angular momentum n^2(x) (x1 v2 - x2 v1) of a 2D ray state.

    For rotationally symmetric media this is conserved along geodesics
    (Bouguer's law; equal to n |v| r sin(angle to the radial direction)
    times n, and to n r sin(angle) at metric unit speed).
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    n = float(model.n(x))
    return n * n * float(x[0] * v[1] - x[1] * v[0])
