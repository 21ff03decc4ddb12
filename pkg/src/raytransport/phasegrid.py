"""Polar phase-space grid and finite-difference operators (dim 2).

Nodes live on the product of a polar grid of the unit disk and a uniform
angle grid for the ray direction:

    r_i = i/I (i = 1..I),  phi_j = 2 pi j / J,  theta_k = 2 pi k / K,
    x_ij = r_i (cos phi_j, sin phi_j),
    xi_ijk = (cos theta_k, sin theta_k) / n(x_ij).

Linear ordering is k fastest, then j, then i.  The ring i = I lies exactly on
the unit circle and is classified into outflow / inflow / glancing states by
the sign of <xi, nu>.

Two discrete operators are provided as sparse matrices:

* the ray derivative H u = rdot d_r u + phidot d_phi u + thetadot d_theta u,
  discretized with first-order differences upwinded node-by-node against the
  sign of each advection coefficient (stability of the transport part);

* the phase Laplacian Delta = Delta_x + Delta_xi with second-order central
  differences (symmetry of the diffusion part), where

      Delta_x  u = (d_rr + d_r / r + d_phiphi / r^2) u / n^2
                   + (grad n . grad_x u) / n^3,
      Delta_xi u = d_thetatheta u

  (the fiber part of the phase Laplacian reduces to a bare second theta
  derivative: the 1/n^2 scale of the ambient fiber derivatives cancels
  against the fiber radius 1/n).

Angle directions wrap periodically.  The innermost ring i = 1 closes its
radial stencils through the disk center: the missing inward neighbor is the
antipodal node (r_1, phi + pi, theta), which is the same ambient state at
signed radius -r_1, and the stencil weights account for the doubled spacing.
The resulting one-sided closure keeps first-order consistency at the inner
ring without a special center equation.  At the boundary ring one-sided
interior differences are used; solver assembly replaces those rows anyway.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geodesic import GLANCING_TOL
from .refractive import RefractiveModel, acceleration

OUTFLOW, INFLOW, GLANCING = 1, -1, 0


@dataclass(frozen=True, eq=False)
class PhaseGrid:
    I: int
    J: int
    K: int
    rs: np.ndarray       # (I,)
    phis: np.ndarray     # (J,)
    thetas: np.ndarray   # (K,)
    r: np.ndarray        # per node (size,)
    phi: np.ndarray
    theta: np.ndarray
    x: np.ndarray        # (size, 2)
    xi: np.ndarray       # (size, 2)
    n_node: np.ndarray   # n(x) per node

    @property
    def size(self) -> int:
        return self.I * self.J * self.K

    def index(self, i: int, j: int, k: int) -> int:
        """Linear index of 0-based (i, j, k); k fastest, then j, then i."""
        return (i * self.J + j) * self.K + k

    @property
    def boundary_indices(self) -> np.ndarray:
        """Linear indices of the ring r = 1 (0-based i = I - 1)."""
        return np.arange((self.I - 1) * self.J * self.K, self.I * self.J * self.K)

    @property
    def dr(self) -> float:
        return 1.0 / self.I

    @property
    def dphi(self) -> float:
        return 2.0 * np.pi / self.J

    @property
    def dtheta(self) -> float:
        return 2.0 * np.pi / self.K


def build_grid(model: RefractiveModel, I: int, J: int, K: int) -> PhaseGrid:
    if min(I, J, K) < 3:
        raise ValueError(f"grid sizes must be at least 3, got {(I, J, K)}")
    if model.dim != 2:
        raise ValueError("phase grids are 2D")
    rs = np.arange(1, I + 1) / I
    phis = 2.0 * np.pi * np.arange(1, J + 1) / J
    thetas = 2.0 * np.pi * np.arange(1, K + 1) / K
    rr, pp, tt = np.meshgrid(rs, phis, thetas, indexing="ij")
    r = rr.reshape(-1)
    phi = pp.reshape(-1)
    theta = tt.reshape(-1)
    x = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)
    n_node = np.asarray(model.n(x), dtype=float)
    xi = np.stack([np.cos(theta), np.sin(theta)], axis=-1) / n_node[:, None]
    return PhaseGrid(
        I=I, J=J, K=K, rs=rs, phis=phis, thetas=thetas,
        r=r, phi=phi, theta=theta, x=x, xi=xi, n_node=n_node,
    )


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: PhaseGrid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.shape != (self.grid.size,):
            raise ValueError(
                f"value count {self.values.shape} does not match grid size {self.grid.size}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function has non-finite values")

    def slice_k(self, k: int) -> np.ndarray:
        """The (I, J) spatial slice at direction index k (0-based)."""
        return self.values.reshape(self.grid.I, self.grid.J, self.grid.K)[:, :, k]


@dataclass(frozen=True, eq=False)
class BoundaryMask:
    """Classification of the boundary ring by the sign of <xi, nu>."""

    classes: np.ndarray        # per boundary node, values in {OUTFLOW, INFLOW, GLANCING}
    boundary_idx: np.ndarray   # linear indices of the ring, in grid order
    outflow_idx: np.ndarray
    inflow_idx: np.ndarray
    glancing_idx: np.ndarray


def classify_boundary(grid: PhaseGrid, model: RefractiveModel) -> BoundaryMask:
    idx = grid.boundary_indices
    # nu = x on the unit circle, so <xi, nu> = cos(theta - phi) / n.
    pairing = np.einsum("ij,ij->i", grid.xi[idx], grid.x[idx])
    classes = np.where(pairing > GLANCING_TOL, OUTFLOW, np.where(pairing < -GLANCING_TOL, INFLOW, GLANCING))
    return BoundaryMask(
        classes=classes,
        boundary_idx=idx,
        outflow_idx=idx[classes == OUTFLOW],
        inflow_idx=idx[classes == INFLOW],
        glancing_idx=idx[classes == GLANCING],
    )


def advection_coefficients(grid: PhaseGrid, model: RefractiveModel):
    """Characteristic velocity (rdot, phidot, thetadot) of the ray flow at each node.

    rdot = xi . rhat, phidot = (xi . phihat) / r, and thetadot is the turning
    rate of the direction angle, (a2 xi1 - a1 xi2) / |xi|^2 with a the ray
    acceleration.
    """
    rhat = np.stack([np.cos(grid.phi), np.sin(grid.phi)], axis=-1)
    phihat = np.stack([-np.sin(grid.phi), np.cos(grid.phi)], axis=-1)
    rdot = np.einsum("ij,ij->i", grid.xi, rhat)
    phidot = np.einsum("ij,ij->i", grid.xi, phihat) / grid.r
    a = acceleration(model, grid.x, grid.xi)
    xi2 = np.einsum("ij,ij->i", grid.xi, grid.xi)
    thetadot = (a[:, 1] * grid.xi[:, 0] - a[:, 0] * grid.xi[:, 1]) / xi2
    return rdot, phidot, thetadot


# ---------------------------------------------------------------------------
# index bookkeeping for stencils
# ---------------------------------------------------------------------------

def _node_indices(grid: PhaseGrid):
    lin = np.arange(grid.size)
    JK = grid.J * grid.K
    i0 = lin // JK
    j0 = (lin // grid.K) % grid.J
    k0 = lin % grid.K
    return lin, i0, j0, k0


def _antipodal_cols(grid: PhaseGrid, lin, j0):
    """Columns and weights realizing the value at (r_1, phi + pi, theta).

    With J even the angle phi + pi is a grid angle; with J odd it falls
    exactly midway between two, so the ghost value is their mean.
    """
    J, K = grid.J, grid.K
    base = lin - j0 * K  # index with j = 0
    if J % 2 == 0:
        ja = (j0 + J // 2) % J
        return base + ja * K, base + ja * K, 1.0, 0.0
    ja = (j0 + J // 2) % J
    jb = (j0 + J // 2 + 1) % J
    return base + ja * K, base + jb * K, 0.5, 0.5


def _coo(parts, size):
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    vals = np.concatenate([p[2] for p in parts])
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def _radial_first_central(grid: PhaseGrid):
    """Central first derivative in r (with the pole and boundary closures)."""
    lin, i0, j0, _ = _node_indices(grid)
    JK = grid.J * grid.K
    h = grid.dr
    parts = []
    inner = (i0 >= 1) & (i0 <= grid.I - 2)
    li = lin[inner]
    parts += [(li, li + JK, np.full(li.size, 1.0 / (2 * h))),
              (li, li - JK, np.full(li.size, -1.0 / (2 * h)))]
    pole = i0 == 0
    lp = lin[pole]
    ca, cb, wa, wb = _antipodal_cols(grid, lp, j0[pole])
    # offsets: ghost at -2h, neighbor at +h
    parts += [(lp, ca, np.full(lp.size, -wa / (6 * h))),
              (lp, cb, np.full(lp.size, -wb / (6 * h))),
              (lp, lp, np.full(lp.size, -1.0 / (2 * h))),
              (lp, lp + JK, np.full(lp.size, 2.0 / (3 * h)))]
    bd = i0 == grid.I - 1
    lb = lin[bd]
    parts += [(lb, lb - 2 * JK, np.full(lb.size, 1.0 / (2 * h))),
              (lb, lb - JK, np.full(lb.size, -4.0 / (2 * h))),
              (lb, lb, np.full(lb.size, 3.0 / (2 * h)))]
    return _coo(parts, grid.size)


def _radial_second(grid: PhaseGrid):
    lin, i0, j0, _ = _node_indices(grid)
    JK = grid.J * grid.K
    h2 = grid.dr ** 2
    parts = []
    inner = (i0 >= 1) & (i0 <= grid.I - 2)
    li = lin[inner]
    parts += [(li, li - JK, np.full(li.size, 1.0 / h2)),
              (li, li, np.full(li.size, -2.0 / h2)),
              (li, li + JK, np.full(li.size, 1.0 / h2))]
    pole = i0 == 0
    lp = lin[pole]
    ca, cb, wa, wb = _antipodal_cols(grid, lp, j0[pole])
    # nonuniform weights for offsets (-2h, 0, +h)
    parts += [(lp, ca, np.full(lp.size, wa / (3 * h2))),
              (lp, cb, np.full(lp.size, wb / (3 * h2))),
              (lp, lp, np.full(lp.size, -1.0 / h2)),
              (lp, lp + JK, np.full(lp.size, 2.0 / (3 * h2)))]
    bd = i0 == grid.I - 1
    lb = lin[bd]
    parts += [(lb, lb - 2 * JK, np.full(lb.size, 1.0 / h2)),
              (lb, lb - JK, np.full(lb.size, -2.0 / h2)),
              (lb, lb, np.full(lb.size, 1.0 / h2))]
    return _coo(parts, grid.size)


def _periodic_first(grid: PhaseGrid, axis: str):
    lin, _, j0, k0 = _node_indices(grid)
    if axis == "phi":
        step, K = grid.dphi, grid.K
        plus = lin + (((j0 + 1) % grid.J) - j0) * K
        minus = lin + (((j0 - 1) % grid.J) - j0) * K
    else:
        step = grid.dtheta
        plus = lin + ((k0 + 1) % grid.K) - k0
        minus = lin + ((k0 - 1) % grid.K) - k0
    parts = [(lin, plus, np.full(lin.size, 1.0 / (2 * step))),
             (lin, minus, np.full(lin.size, -1.0 / (2 * step)))]
    return _coo(parts, grid.size)


def _periodic_second(grid: PhaseGrid, axis: str):
    lin, _, j0, k0 = _node_indices(grid)
    if axis == "phi":
        step, K = grid.dphi, grid.K
        plus = lin + (((j0 + 1) % grid.J) - j0) * K
        minus = lin + (((j0 - 1) % grid.J) - j0) * K
    else:
        step = grid.dtheta
        plus = lin + ((k0 + 1) % grid.K) - k0
        minus = lin + ((k0 - 1) % grid.K) - k0
    h2 = step ** 2
    parts = [(lin, minus, np.full(lin.size, 1.0 / h2)),
             (lin, lin, np.full(lin.size, -2.0 / h2)),
             (lin, plus, np.full(lin.size, 1.0 / h2))]
    return _coo(parts, grid.size)


# ---------------------------------------------------------------------------
# the discrete operators
# ---------------------------------------------------------------------------

def h_matrix(grid: PhaseGrid, model: RefractiveModel) -> sp.csr_matrix:
    """Upwind discretization of the ray derivative H."""
    rdot, phidot, thetadot = advection_coefficients(grid, model)
    lin, i0, j0, k0 = _node_indices(grid)
    JK = grid.J * grid.K
    h = grid.dr
    parts = []

    # radial legs, upwinded by the sign of rdot
    backward = ((i0 == grid.I - 1) | ((i0 >= 1) & (rdot >= 0.0)))
    lb = lin[backward]
    cb = rdot[backward]
    parts += [(lb, lb, cb / h), (lb, lb - JK, -cb / h)]

    forward = (i0 <= grid.I - 2) & (rdot < 0.0)
    lf = lin[forward]
    cf = rdot[forward]
    parts += [(lf, lf, -cf / h), (lf, lf + JK, cf / h)]

    pole_back = (i0 == 0) & (rdot >= 0.0)
    lp = lin[pole_back]
    cp = rdot[pole_back]
    ca, cc, wa, wb = _antipodal_cols(grid, lp, j0[pole_back])
    # upstream value sits across the center at signed radius -r_1: spacing 2h
    parts += [(lp, lp, cp / (2 * h)), (lp, ca, -wa * cp / (2 * h)), (lp, cc, -wb * cp / (2 * h))]

    # periodic legs in phi and theta
    for coeff, axis in ((phidot, "phi"), (thetadot, "theta")):
        if axis == "phi":
            step = grid.dphi
            plus = lin + (((j0 + 1) % grid.J) - j0) * grid.K
            minus = lin + (((j0 - 1) % grid.J) - j0) * grid.K
        else:
            step = grid.dtheta
            plus = lin + ((k0 + 1) % grid.K) - k0
            minus = lin + ((k0 - 1) % grid.K) - k0
        up = coeff >= 0.0
        lu, cu = lin[up], coeff[up]
        parts += [(lu, lu, cu / step), (lu, minus[up], -cu / step)]
        ld, cd = lin[~up], coeff[~up]
        parts += [(ld, ld, -cd / step), (ld, plus[~up], cd / step)]

    return _coo(parts, grid.size)


def laplace_x_matrix(grid: PhaseGrid, model: RefractiveModel) -> sp.csr_matrix:
    """Spatial part of the phase Laplacian in polar coordinates."""
    d2r = _radial_second(grid)
    d1r = _radial_first_central(grid)
    d2p = _periodic_second(grid, "phi")
    d1p = _periodic_first(grid, "phi")
    n = grid.n_node
    g = np.asarray(model.grad_n(grid.x), dtype=float)
    rhat = np.stack([np.cos(grid.phi), np.sin(grid.phi)], axis=-1)
    phihat = np.stack([-np.sin(grid.phi), np.cos(grid.phi)], axis=-1)
    g_r = np.einsum("ij,ij->i", g, rhat)
    g_phi = np.einsum("ij,ij->i", g, phihat)
    euclid = d2r + sp.diags(1.0 / grid.r) @ d1r + sp.diags(1.0 / grid.r**2) @ d2p
    drift = sp.diags(g_r) @ d1r + sp.diags(g_phi / grid.r) @ d1p
    out = (sp.diags(n**-2.0) @ euclid + sp.diags(n**-3.0) @ drift).tocsr()
    out.sum_duplicates()
    out.sort_indices()
    return out


def laplace_xi_matrix(grid: PhaseGrid, model: RefractiveModel) -> sp.csr_matrix:
    """Fiber part of the phase Laplacian: a bare second theta derivative."""
    return _periodic_second(grid, "theta")


def laplace_matrix(grid: PhaseGrid, model: RefractiveModel) -> sp.csr_matrix:
    out = (laplace_x_matrix(grid, model) + laplace_xi_matrix(grid, model)).tocsr()
    out.sum_duplicates()
    out.sort_indices()
    return out


def apply_H(grid: PhaseGrid, model: RefractiveModel, u: GridFunction) -> GridFunction:
    """Upwind ray derivative of a grid function."""
    return GridFunction(grid, h_matrix(grid, model) @ u.values)


def apply_laplace(grid: PhaseGrid, model: RefractiveModel, u: GridFunction) -> GridFunction:
    """Phase Laplacian (spatial + fiber part) of a grid function."""
    return GridFunction(grid, laplace_matrix(grid, model) @ u.values)
