"""First-kind single-layer solver for sound-soft scattering.

Solves ``int_S g(x, s) h(s) ds = exp(ik alpha.x)`` for x on S, with
``g = exp(ik|x-s|) / (4 pi |x-s|)``; the solution is h = u_N.

Discretisation: the surface parameter grid (Gauss in cos theta, trapezoid in
phi) is split into patches whose (t, phi) areas equal the grid weights.  The
unknowns are patch charges ``sigma_j = A_j h_j`` with A_j the node's quadrature
area, and the stored matrix is the symmetric kernel matrix::

    G_ij = (1/A_j) int_{patch j} g(x_i, s) ds,   then G <- (G + G^T)/2

so ``sum_j G_ij sigma_j = u_inc(x_i)``.  Well separated patches get a plain
3x3 Gauss rule, near patches Gauss rules on sub-rectangles of roughly unit
physical aspect, and the self patch Duffy fans around the node, which cancel
the 1/r singularity.  Integrating every patch (rather than sampling the
kernel at the node) makes constant densities exact, which keeps the
operator's breakdown at interior eigenvalues sharp.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .farfield import FarFieldPattern, ParamSurface
from .mie import BoundaryTrace
from .sphgrid import Direction, SphereGrid, make_grid

logger = logging.getLogger(__name__)

MAX_NODES = 10_000
COND_LIMIT = 1e12
NEAR_FACTOR = 3.0
QUAD_ORDER = 8
FAR_ORDER = 3
MAX_SPLIT = 32


class BemSizeError(ValueError):
    pass


class NearEigenvalueError(RuntimeError):
    """The first-kind operator is numerically singular (k^2 near an interior eigenvalue)."""

    def __init__(self, condition: float, k: float, limit: float):
        super().__init__(
            f"single-layer operator ill-conditioned at k={k!r}: "
            f"condition estimate {condition:.3e} exceeds {limit:.1e}"
        )
        self.condition = condition
        self.k = k


@dataclass(frozen=True, eq=False)
class BoundaryOperator:
    surface: ParamSurface
    k: float
    grid: SphereGrid
    points: np.ndarray
    normals: np.ndarray
    areas: np.ndarray
    matrix: np.ndarray
    lu: tuple
    condition: float

    @property
    def size(self) -> int:
        return self.areas.size


def _kernel(k: float, r: np.ndarray) -> np.ndarray:
    """g = 1/(4 pi r) + (exp(ikr) - 1)/(4 pi r); the second part tends to ik/(4 pi)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        smooth = np.where(r > 0, np.expm1(1j * k * r) / r, 1j * k)
        static = np.where(r > 0, 1.0 / r, 0.0)
    return (static + smooth) / (4 * math.pi)


def _theta_geometry(surface: ParamSurface, theta, phi):
    """Points and area density per dtheta dphi."""
    t = np.cos(theta)
    r, _, jac = surface.geometry(t, phi)
    return r, jac * np.sin(theta)


def _patch_edges(grid: SphereGrid):
    """Theta and phi intervals of each node's patch."""
    tg = grid.t[:: grid.n_phi]
    wg = grid.weights[:: grid.n_phi] / (2 * math.pi / grid.n_phi)
    b = 1.0 - np.concatenate([[0.0], np.cumsum(wg)])
    b[-1] = -1.0
    th_edges = np.arccos(np.clip(b, -1.0, 1.0))
    dphi = 2 * math.pi / grid.n_phi
    th0 = np.repeat(th_edges[:-1], grid.n_phi)
    th1 = np.repeat(th_edges[1:], grid.n_phi)
    ph0 = grid.phi - dphi / 2
    return th0, th1, ph0, ph0 + dphi


def _gauss01(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1), 0.5 * w


def _metric_lengths(surface: ParamSurface, theta, phi, eps=1e-7):
    """Physical lengths of unit steps in theta and phi at a parameter point."""
    r0, _ = _theta_geometry(surface, theta, phi)
    rt, _ = _theta_geometry(surface, theta + eps, phi)
    rp, _ = _theta_geometry(surface, theta, phi + eps)
    return np.linalg.norm(rt - r0, axis=-1) / eps, np.linalg.norm(rp - r0, axis=-1) / eps


def _patch_rule(surface, th0, th1, ph0, ph1, q):
    """Sub-rectangle Gauss rule on one patch: points (n, 3) and weights (n,)."""
    lt, lp = _metric_lengths(surface, 0.5 * (th0 + th1), 0.5 * (ph0 + ph1))
    size_t, size_p = lt * (th1 - th0), lp * (ph1 - ph0)
    nt = int(min(MAX_SPLIT, max(1, round(size_t / max(size_p, 1e-300)))))
    npf = int(min(MAX_SPLIT, max(1, round(size_p / max(size_t, 1e-300)))))
    x, w = _gauss01(q)
    et = np.linspace(th0, th1, nt + 1)
    ep = np.linspace(ph0, ph1, npf + 1)
    tt = (et[:-1, None] + np.diff(et)[:, None] * x[None, :]).ravel()
    wt = (np.diff(et)[:, None] * w[None, :]).ravel()
    pp = (ep[:-1, None] + np.diff(ep)[:, None] * x[None, :]).ravel()
    wp = (np.diff(ep)[:, None] * w[None, :]).ravel()
    T, P = np.meshgrid(tt, pp, indexing="ij")
    pts, dens = _theta_geometry(surface, T.ravel(), P.ravel())
    return pts, (wt[:, None] * wp[None, :]).ravel() * dens


def _far_rules(surface, th0, th1, ph0, ph1, q):
    """Plain q x q Gauss rule on every patch: points (N, q*q, 3), weights (N, q*q)."""
    x, w = _gauss01(q)
    T = th0[:, None, None] + (th1 - th0)[:, None, None] * x[None, :, None]
    P = ph0[:, None, None] + (ph1 - ph0)[:, None, None] * x[None, None, :]
    T, P = np.broadcast_arrays(T, P)
    pts, dens = _theta_geometry(surface, T.reshape(len(th0), -1), P.reshape(len(th0), -1))
    W = ((th1 - th0)[:, None, None] * (ph1 - ph0)[:, None, None] * w[None, :, None] * w[None, None, :])
    return pts, W.reshape(len(th0), -1) * dens


def _self_rule(surface, th_i, ph_i, th0, th1, ph0, ph1, q):
    """Duffy-fan rule on the patch containing the node (th_i, ph_i)."""
    lt, lp = _metric_lengths(surface, th_i, ph_i)
    corners = [(th0, ph0), (th1, ph0), (th1, ph1), (th0, ph1)]
    x, w = _gauss01(q)
    all_t, all_p, all_w = [], [], []
    for c1, c2 in zip(corners, corners[1:] + corners[:1]):
        v1 = np.array(c1) - (th_i, ph_i)
        v2 = np.array(c2) - (th_i, ph_i)
        area2 = abs(v1[0] * v2[1] - v1[1] * v2[0])
        if area2 == 0:
            continue
        # split the base edge so pieces are no longer than the apex-to-edge distance
        base = np.hypot(lt * (v2[0] - v1[0]), lp * (v2[1] - v1[1]))
        height = area2 * lt * lp / max(base, 1e-300)
        n_tau = int(min(MAX_SPLIT, max(1, math.ceil(base / max(height, 1e-300)))))
        e = np.linspace(0.0, 1.0, n_tau + 1)
        tau = (e[:-1, None] + np.diff(e)[:, None] * x[None, :]).ravel()
        wtau = (np.diff(e)[:, None] * w[None, :]).ravel()
        S, TAU = np.meshgrid(x, tau, indexing="ij")
        WS, WT = np.meshgrid(w, wtau, indexing="ij")
        edge = v1[None, :] + TAU.ravel()[:, None] * (v2 - v1)[None, :]
        pt = S.ravel()[:, None] * edge
        all_t.append(th_i + pt[:, 0])
        all_p.append(ph_i + pt[:, 1])
        all_w.append((WS * WT).ravel() * S.ravel() * area2)
    tt, pp, ww = np.concatenate(all_t), np.concatenate(all_p), np.concatenate(all_w)
    pts, dens = _theta_geometry(surface, tt, pp)
    return pts, ww * dens


@dataclass(frozen=True, eq=False)
class NearField:
    """k-independent near-pair quadrature: distances and weights per (row, col) pair."""

    rows: np.ndarray
    cols: np.ndarray
    offsets: np.ndarray
    r: np.ndarray
    w: np.ndarray


class Discretization:
    """Geometry of a surface on a parameter grid, reusable across wavenumbers."""

    def __init__(self, surface: ParamSurface, n_theta: int, n_phi: int,
                 quad_order: int = QUAD_ORDER, cache_near: bool = False):
        if n_theta * n_phi > MAX_NODES:
            raise BemSizeError(f"{n_theta * n_phi} nodes exceed the dense cap of {MAX_NODES}")
        self.surface = surface
        self.grid = make_grid(n_theta, n_phi)
        self.quad_order = quad_order
        self.points, self.normals, self.areas = surface.quadrature(self.grid)
        self.dist = np.linalg.norm(self.points[:, None, :] - self.points[None, :, :], axis=-1)
        th0, th1, ph0, ph1 = _patch_edges(self.grid)
        lt, lp = _metric_lengths(surface, self.grid.theta, self.grid.phi)
        diam = np.hypot(lt * (th1 - th0), lp * (ph1 - ph0))
        self.near = self.dist < NEAR_FACTOR * diam[None, :]
        self._edges = (th0, th1, ph0, ph1)
        self._rules = [_patch_rule(surface, th0[j], th1[j], ph0[j], ph1[j], quad_order)
                       for j in range(self.grid.size)]
        self._far_pts, self._far_w = _far_rules(surface, th0, th1, ph0, ph1, FAR_ORDER)
        self._cache = self._build_cache() if cache_near else None

    def _pair_rules(self, i):
        th0, th1, ph0, ph1 = self._edges
        g = self.grid
        for j in np.flatnonzero(self.near[i]):
            if j == i:
                pts, wts = _self_rule(self.surface, g.theta[i], g.phi[i], th0[i], th1[i],
                                      ph0[i], ph1[i], self.quad_order)
            else:
                pts, wts = self._rules[j]
            yield j, np.linalg.norm(pts - self.points[i], axis=-1), wts

    def _build_cache(self) -> NearField:
        rows, cols, rs, ws = [], [], [], []
        for i in range(self.grid.size):
            for j, r, w in self._pair_rules(i):
                rows.append(i)
                cols.append(j)
                rs.append(r)
                ws.append(w)
        lengths = np.array([len(r) for r in rs])
        offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]])
        return NearField(np.array(rows), np.array(cols), offsets, np.concatenate(rs), np.concatenate(ws))

    def _far_matrix(self, k: float) -> np.ndarray:
        n = self.grid.size
        G = np.empty((n, n), dtype=complex)
        step = max(1, 2_000_000 // (n * self._far_w.shape[1]))
        for i0 in range(0, n, step):
            x = self.points[i0 : i0 + step]
            r = np.linalg.norm(x[:, None, None, :] - self._far_pts[None], axis=-1)
            G[i0 : i0 + step] = np.sum(_kernel(k, r) * self._far_w[None], axis=-1)
        return G / self.areas[None, :]

    def kernel_matrix(self, k: float) -> np.ndarray:
        G = self._far_matrix(k)
        if self._cache is not None:
            c = self._cache
            vals = np.add.reduceat(_kernel(k, c.r) * c.w, c.offsets)
            G[c.rows, c.cols] = vals / self.areas[c.cols]
        else:
            for i in range(self.grid.size):
                for j, r, w in self._pair_rules(i):
                    G[i, j] = np.sum(_kernel(k, r) * w) / self.areas[j]
        return 0.5 * (G + G.T)


def assemble(surface: ParamSurface, k: float, n_theta: int = 24, n_phi: int = 48,
             quad_order: int = QUAD_ORDER, discretization: Discretization | None = None) -> BoundaryOperator:
    """Discretise the single-layer operator and factor it (LU with partial pivoting).

    Pass a prebuilt ``discretization`` to reuse geometry across wavenumbers.
    """
    if k <= 0:
        raise ValueError("wavenumber must be positive")
    disc = discretization or Discretization(surface, n_theta, n_phi, quad_order)
    G = disc.kernel_matrix(k)
    lu = scipy.linalg.lu_factor(G)
    rcond, _ = scipy.linalg.lapack.zgecon(lu[0], np.linalg.norm(G, 1), norm="1")
    condition = math.inf if rcond == 0 else 1.0 / rcond
    logger.debug("assembled N=%d k=%g cond~%.3e", disc.grid.size, k, condition)
    return BoundaryOperator(disc.surface, float(k), disc.grid, disc.points, disc.normals,
                            disc.areas, G, lu, float(condition))


def condition_sweep(surface: ParamSurface, ks, n_theta: int, n_phi: int) -> list[tuple]:
    """(k, condition estimate) across wavenumbers with shared geometry."""
    disc = Discretization(surface, n_theta, n_phi, cache_near=True)
    return [(float(k), assemble(surface, float(k), discretization=disc).condition) for k in ks]


def _check_condition(op: BoundaryOperator, cond_limit: float) -> None:
    if not op.condition < cond_limit:
        raise NearEigenvalueError(op.condition, op.k, cond_limit)


def solve_charges(op: BoundaryOperator, alphas: np.ndarray, cond_limit: float = COND_LIMIT):
    """Charges sigma for each incident direction (columns) and the max relative residual."""
    _check_condition(op, cond_limit)
    alphas = np.atleast_2d(alphas)
    rhs = np.exp(1j * op.k * (op.points @ alphas.T))
    sigma = scipy.linalg.lu_solve(op.lu, rhs)
    res = np.max(np.abs(op.matrix @ sigma - rhs)) / np.max(np.abs(rhs))
    return sigma, float(res)


def solve_normal_derivative(op: BoundaryOperator, alpha, cond_limit: float = COND_LIMIT) -> BoundaryTrace:
    """u_N at the surface nodes for incident direction ``alpha``."""
    al = alpha.as_array() if isinstance(alpha, Direction) else np.asarray(alpha, float)
    sigma, res = solve_charges(op, al[None, :], cond_limit)
    logger.debug("first-kind solve residual %.3e", res)
    return BoundaryTrace(grid=op.grid, values=sigma[:, 0] / op.areas, radius=op.surface.bounding_radius)


def far_field_matrix(op: BoundaryOperator, alphas: np.ndarray, beta_grid: SphereGrid,
                     cond_limit: float = COND_LIMIT) -> np.ndarray:
    """A(beta_i, alpha_j) for all beta grid nodes and incident directions."""
    sigma, _ = solve_charges(op, alphas, cond_limit)
    phase = np.exp(-1j * op.k * (beta_grid.points @ op.points.T))
    return -(phase @ sigma) / (4 * math.pi)


def bem_far_field(op: BoundaryOperator, alpha, beta_grid: SphereGrid,
                  cond_limit: float = COND_LIMIT) -> FarFieldPattern:
    al = alpha.as_array() if isinstance(alpha, Direction) else np.asarray(alpha, float)
    return FarFieldPattern(beta_grid, far_field_matrix(op, al[None, :], beta_grid, cond_limit)[:, 0])


def amplitude(op: BoundaryOperator, beta, alpha, cond_limit: float = COND_LIMIT) -> complex:
    """Single amplitude value A(beta, alpha)."""
    b = beta.as_array() if isinstance(beta, Direction) else np.asarray(beta, float)
    al = alpha.as_array() if isinstance(alpha, Direction) else np.asarray(alpha, float)
    sigma, _ = solve_charges(op, al[None, :], cond_limit)
    return complex(-(np.exp(-1j * op.k * (op.points @ b)) @ sigma[:, 0]) / (4 * math.pi))
