"""Refractive-index models and pointwise quantities of the conformal metric.

A refractive index n(x) > 0 on the closed unit ball induces the conformal
metric g_ij = n^2(x) delta_ij (Fermat's principle: travel time equals metric
length).  Everything geometric that the rest of the package needs is a closed
form in n and its first two derivatives:

    inner product     <u, v>_g = n^2 (u . v)
    Christoffels      G^k_ij   = (d_j n delta_ik + d_i n delta_jk - d_k n delta_ij) / n
    ray acceleration  a_k      = -G^k_ij v_i v_j
                               = (d_k n |v|^2 - 2 v_k (grad n . v)) / n

where dots and |.| on the right-hand sides are euclidean.  Models carry
analytic value/gradient/Hessian closures so that integrators and stencil
assembly can evaluate derivatives at arbitrary points without interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from typing import Callable

import numpy as np

from .errors import DomainError

# Points whose euclidean norm exceeds 1 by more than this are outside the domain.
BALL_TOL = 1e-12


@dataclass(frozen=True)
class RefractiveModel:
    """An analytic refractive index on the closed unit ball.

    All three closures are vectorized: they accept points of shape
    (..., dim) and return shapes (...), (..., dim) and (..., dim, dim).
    ``floor`` is a certified lower bound of n on the ball, supplied by the
    model (not estimated from samples).
    """

    dim: int
    n: Callable[[np.ndarray], np.ndarray]
    grad_n: Callable[[np.ndarray], np.ndarray]
    hess_n: Callable[[np.ndarray], np.ndarray]
    floor: float
    name: str = ""

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if not self.floor > 0.0:
            raise ValueError(f"floor must be positive, got {self.floor}")


def check_in_ball(x: np.ndarray) -> np.ndarray:
    """Validate that every point of x (..., dim) lies in the closed unit ball."""
    x = np.asarray(x, dtype=float)
    r2 = np.einsum("...i,...i->...", x, x)
    if np.any(r2 > (1.0 + BALL_TOL) ** 2):
        raise DomainError(f"point outside the closed unit ball: |x| = {np.sqrt(r2.max()):.6g}")
    return x


# ---------------------------------------------------------------------------
# pointwise metric quantities
# ---------------------------------------------------------------------------

def metric_inner(model: RefractiveModel, x, u, v) -> float:
    """Metric inner product <u, v>_g = n^2(x) (u . v) at a point of the ball."""
    x = check_in_ball(x)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return float(model.n(x) ** 2 * np.dot(u, v))


def metric_norm(model: RefractiveModel, x, u) -> float:
    """Metric norm |u|_g = n(x) |u|."""
    return float(np.sqrt(metric_inner(model, x, u, u)))


def christoffel(model: RefractiveModel, x) -> np.ndarray:
    """Christoffel symbols of g = n^2 delta as an array G[k, i, j].

    G^k_ij = (d_j n delta_ik + d_i n delta_jk - d_k n delta_ij) / n,
    symmetric in the lower pair (i, j).
    """
    x = check_in_ball(x)
    d = model.dim
    nv = float(model.n(x))
    g = np.asarray(model.grad_n(x), dtype=float)
    eye = np.eye(d)
    gamma = (
        np.einsum("j,ik->kij", g, eye)
        + np.einsum("i,jk->kij", g, eye)
        - np.einsum("k,ij->kij", g, eye)
    ) / nv
    return gamma


def geodesic_acceleration(model: RefractiveModel, x, v) -> np.ndarray:
    """Ray acceleration -G^k_ij v_i v_j at a single point.

    Evaluated through the closed form (d_k n |v|^2 - 2 v_k (grad n . v)) / n;
    the explicit Christoffel contraction agrees to rounding and is kept as a
    test oracle only.
    """
    x = check_in_ball(x)
    v = np.asarray(v, dtype=float)
    return acceleration(model, x, v)


def acceleration(model: RefractiveModel, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Vectorized ray acceleration for batched states x, v of shape (..., dim).

    No domain check: integrators call this at high rate on states they keep
    inside the ball themselves.
    """
    n = np.asarray(model.n(x), dtype=float)
    g = np.asarray(model.grad_n(x), dtype=float)
    gv = np.einsum("...i,...i->...", g, v)
    v2 = np.einsum("...i,...i->...", v, v)
    return (g * v2[..., None] - 2.0 * v * gv[..., None]) / n[..., None]


# ---------------------------------------------------------------------------
# smallness-of-refraction condition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoercivityReport:
    """Suprema of |grad n|/n over the ball in both norm conventions.

    ``sup_riemannian`` is sup |grad n| / n^2 (the metric norm of the metric
    gradient divided by n); ``sup_euclidean`` is sup |grad n| / n.  The
    ``satisfied`` flag compares the Riemannian reading against alpha0, which
    is the reading consistent with pairing the metric gradient with a
    metric-unit direction; the stricter euclidean value is reported so
    callers can apply it instead.
    """

    sup_riemannian: float
    sup_euclidean: float
    alpha0: float
    satisfied: bool


def _ball_samples(dim: int, samples: int) -> np.ndarray:
    """A dense deterministic grid on the closed unit ball, including r=0 and r=1.

    The angular counts are multiples of 4 so that all half-axis directions are
    sampled exactly (boundary maxima of non-radial models sit there).
    """
    if samples < 8:
        raise ValueError("samples must be at least 8")
    if dim == 2:
        nr, nphi = samples, 4 * max(samples // 4, 16)
        r = np.linspace(0.0, 1.0, nr)
        phi = np.linspace(0.0, 2.0 * np.pi, nphi, endpoint=False)
        rr, pp = np.meshgrid(r, phi, indexing="ij")
        x = np.stack([rr * np.cos(pp), rr * np.sin(pp)], axis=-1)
        return x.reshape(-1, 2)
    nr = min(samples, 160)
    ntheta = max(nr // 2 * 2 + 1, 33)
    nphi = 4 * max(nr // 2, 12)
    r = np.linspace(0.0, 1.0, nr)
    theta = np.linspace(0.0, np.pi, ntheta)
    phi = np.linspace(0.0, 2.0 * np.pi, nphi, endpoint=False)
    rr, tt, pp = np.meshgrid(r, theta, phi, indexing="ij")
    x = np.stack(
        [rr * np.sin(tt) * np.cos(pp), rr * np.sin(tt) * np.sin(pp), rr * np.cos(tt)],
        axis=-1,
    )
    return x.reshape(-1, 3)


def coercivity_margin(model: RefractiveModel, alpha0: float, samples: int = 512) -> CoercivityReport:
    """Estimate sup |grad n|/n over the ball and compare against alpha0.

    ``samples`` is the radial resolution of the sampling grid; angular
    resolutions are derived from it.
    """
    if not alpha0 > 0.0:
        raise ValueError(f"alpha0 must be positive, got {alpha0}")
    x = _ball_samples(model.dim, samples)
    n = np.asarray(model.n(x), dtype=float)
    g = np.asarray(model.grad_n(x), dtype=float)
    gn = np.sqrt(np.einsum("...i,...i->...", g, g))
    sup_eucl = float(np.max(gn / n))
    sup_riem = float(np.max(gn / n**2))
    return CoercivityReport(
        sup_riemannian=sup_riem,
        sup_euclidean=sup_eucl,
        alpha0=float(alpha0),
        satisfied=bool(sup_riem < alpha0),
    )


# ---------------------------------------------------------------------------
# model registry
# ---------------------------------------------------------------------------
# Builders return picklable models: the closures are partials of the
# module-level functions below, so grids of transforms can be farmed out to
# worker processes.

def _poly_val(coeffs: tuple, x: np.ndarray) -> np.ndarray:
    s = np.einsum("...i,...i->...", x, x)
    out = np.zeros_like(s)
    for c in reversed(coeffs):
        out = out * s + c
    return out


def _poly_grad(coeffs: tuple, x: np.ndarray) -> np.ndarray:
    s = np.einsum("...i,...i->...", x, x)
    dp = np.zeros_like(s)
    for k in range(len(coeffs) - 1, 0, -1):
        dp = dp * s + k * coeffs[k]
    return 2.0 * dp[..., None] * x


def _poly_hess(coeffs: tuple, x: np.ndarray) -> np.ndarray:
    s = np.einsum("...i,...i->...", x, x)
    dp = np.zeros_like(s)
    for k in range(len(coeffs) - 1, 0, -1):
        dp = dp * s + k * coeffs[k]
    ddp = np.zeros_like(s)
    for k in range(len(coeffs) - 1, 1, -1):
        ddp = ddp * s + k * (k - 1) * coeffs[k]
    d = x.shape[-1]
    eye = np.eye(d)
    return 4.0 * ddp[..., None, None] * x[..., :, None] * x[..., None, :] + 2.0 * dp[
        ..., None, None
    ] * eye


def _affine_val(a: float, b: tuple, x: np.ndarray) -> np.ndarray:
    return a + np.einsum("...i,i->...", x, np.asarray(b))


def _affine_grad(b: tuple, x: np.ndarray) -> np.ndarray:
    out = np.empty_like(np.asarray(x, dtype=float))
    out[...] = np.asarray(b)
    return out


def _zero_hess(dim: int, x: np.ndarray) -> np.ndarray:
    shape = np.asarray(x).shape[:-1] + (dim, dim)
    return np.zeros(shape)


def radial_poly_model(coeffs, dim: int = 2, name: str = "") -> RefractiveModel:
    """n(x) = c0 + c1 r^2 + c2 r^4 + ... with r = |x| (coefficients in r^2).

    The certified floor is the exact minimum of the polynomial over r in
    [0, 1], found from the real critical points of the 1D polynomial in r^2.
    """
    coeffs = tuple(float(c) for c in coeffs)
    if not coeffs:
        raise ValueError("radial model needs at least one coefficient")
    p = np.polynomial.Polynomial(coeffs)
    candidates = [0.0, 1.0]
    if len(coeffs) > 2:
        for root in p.deriv().roots():
            if abs(root.imag) < 1e-12 and 0.0 < root.real < 1.0:
                candidates.append(float(root.real))
    floor = min(float(p(s)) for s in candidates)
    return RefractiveModel(
        dim=dim,
        n=partial(_poly_val, coeffs),
        grad_n=partial(_poly_grad, coeffs),
        hess_n=partial(_poly_hess, coeffs),
        floor=floor,
        name=name or "radial:" + ",".join(repr(c) for c in coeffs),
    )


def constant_model(n0: float, dim: int = 2) -> RefractiveModel:
    """Homogeneous medium n(x) = n0; geodesics are straight chords."""
    return radial_poly_model((float(n0),), dim=dim, name=f"constant:{n0!r}")


def paper4_model(dim: int = 2) -> RefractiveModel:
    """The bundled demo medium n(x) = |x|^2 + 1.5."""
    return radial_poly_model((1.5, 1.0), dim=dim, name="paper4")


def affine_model(a: float, b, name: str = "") -> RefractiveModel:
    """n(x) = a + b . x; requires a > |b| so n stays positive on the ball."""
    b = tuple(float(bi) for bi in b)
    a = float(a)
    floor = a - float(np.linalg.norm(b))
    if not floor > 0.0:
        raise ValueError("affine model is not positive on the ball")
    dim = len(b)
    return RefractiveModel(
        dim=dim,
        n=partial(_affine_val, a, b),
        grad_n=partial(_affine_grad, b),
        hess_n=partial(_zero_hess, dim),
        floor=floor,
        name=name or "affine:" + ",".join(repr(v) for v in (a, *b)),
    )


def parse_model(spec: str, dim: int = 2) -> RefractiveModel:
    """Build a model from a config string.

    Accepted forms: ``paper4``, ``constant:<n0>``, ``radial:<c0,c1,...>``,
    ``affine:<a,b1,b2[,b3]>``.
    """
    spec = spec.strip()
    head, _, tail = spec.partition(":")
    try:
        if head == "paper4" and not tail:
            return paper4_model(dim=dim)
        if head == "constant":
            return constant_model(float(tail), dim=dim)
        if head == "radial":
            return radial_poly_model([float(v) for v in tail.split(",")], dim=dim)
        if head == "affine":
            vals = [float(v) for v in tail.split(",")]
            if len(vals) - 1 != dim:
                raise ValueError(f"affine model needs {dim} slope entries")
            return affine_model(vals[0], vals[1:])
    except ValueError as exc:
        raise ValueError(f"bad model spec {spec!r}: {exc}") from None
    raise ValueError(f"unknown model spec {spec!r}")
