"""Far-field map from boundary data and Herglotz wave functions.

``amplitude_from_boundary`` evaluates ``A(beta) = -(1/4pi) int_S exp(-ik beta.s) u_N(s) ds``
by the surface quadrature; ``herglotz`` evaluates
``w(x) = int_{S^2} exp(-ik beta.x) f(beta) dbeta`` by the sphere quadrature.
Surfaces are parametrised over (t, phi) with t = cos(theta), so the sphere
grid weights times the surface Jacobian give the surface quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .sphgrid import (
    HarmonicCoeffs,
    ResolutionError,
    ShapeError,
    SphereGrid,
    analyze,
    grid_for_degree,
    l2_norm,
    synthesize_function,
    truncation_degree,
)

# mapping(t, phi) -> (r, r_t, r_phi), each of shape t.shape + (3,)
Mapping = Callable[[np.ndarray, np.ndarray], tuple]


@dataclass(frozen=True, eq=False)
class ParamSurface:
    kind: str
    mapping: Mapping
    bounding_radius: float
    semi_axes: tuple = ()

    @classmethod
    def sphere(cls, a: float) -> "ParamSurface":
        return cls.ellipsoid(a, a, a, kind="sphere")

    @classmethod
    def ellipsoid(cls, ax: float, ay: float, az: float, kind: str = "ellipsoid") -> "ParamSurface":
        if min(ax, ay, az) <= 0:
            raise ValueError("semi-axes must be positive")

        def mapping(t, phi):
            s = np.sqrt(np.clip(1.0 - t * t, 0.0, None))
            cp, sp = np.cos(phi), np.sin(phi)
            r = np.stack([ax * s * cp, ay * s * sp, az * t], axis=-1)
            ds = -t / s
            r_t = np.stack([ax * ds * cp, ay * ds * sp, np.full_like(t, az)], axis=-1)
            r_p = np.stack([-ax * s * sp, ay * s * cp, np.zeros_like(t)], axis=-1)
            return r, r_t, r_p

        return cls(kind, mapping, float(max(ax, ay, az)), (float(ax), float(ay), float(az)))

    @classmethod
    def star_shaped(cls, radius: Callable, radius_t: Callable, radius_phi: Callable, bound: float):
        """Generic smooth star-shaped surface r = rho(t, phi) * x0(t, phi)."""

        def mapping(t, phi):
            s = np.sqrt(np.clip(1.0 - t * t, 0.0, None))
            cp, sp = np.cos(phi), np.sin(phi)
            x0 = np.stack([s * cp, s * sp, t], axis=-1)
            x0_t = np.stack([-t / s * cp, -t / s * sp, np.ones_like(t)], axis=-1)
            x0_p = np.stack([-s * sp, s * cp, np.zeros_like(t)], axis=-1)
            rho = radius(t, phi)[..., None]
            return (
                rho * x0,
                radius_t(t, phi)[..., None] * x0 + rho * x0_t,
                radius_phi(t, phi)[..., None] * x0 + rho * x0_p,
            )

        return cls("generic-smooth", mapping, float(bound))

    def geometry(self, t, phi):
        """Points, unit outward normals and Jacobian |r_t x r_phi|."""
        r, r_t, r_p = self.mapping(np.asarray(t, float), np.asarray(phi, float))
        cross = np.cross(r_p, r_t)
        jac = np.linalg.norm(cross, axis=-1)
        normal = cross / jac[..., None]
        # orient outward for star-shaped surfaces about the origin
        flip = np.sum(normal * r, axis=-1) < 0
        normal = np.where(flip[..., None], -normal, normal)
        return r, normal, jac

    def quadrature(self, grid: SphereGrid):
        """Surface nodes, normals and weights (grid weights times Jacobian)."""
        r, n, jac = self.geometry(grid.t, grid.phi)
        return r, n, grid.weights * jac


@dataclass(frozen=True, eq=False)
class FarFieldPattern:
    grid: SphereGrid
    values: np.ndarray
    coeffs: Optional[HarmonicCoeffs] = None

    def with_coeffs(self, L: int) -> "FarFieldPattern":
        return FarFieldPattern(self.grid, self.values, analyze(self.values, self.grid, L))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("theta,phi,re_A,im_A\n")
            for th, ph, v in zip(self.grid.theta, self.grid.phi, self.values):
                fh.write(f"{th:.17g},{ph:.17g},{v.real:.17g},{v.imag:.17g}\n")


def amplitude_from_boundary(surface: ParamSurface, trace, k: float, beta_grid: SphereGrid,
                            surface_grid: Optional[SphereGrid] = None) -> FarFieldPattern:
    """Far-field amplitude from normal-derivative samples on ``surface``.

    ``trace`` is a BoundaryTrace (its grid is the surface parameter grid) or
    a bare array together with ``surface_grid``.
    """
    if surface_grid is None:
        surface_grid = trace.grid
    values = np.asarray(getattr(trace, "values", trace))
    if values.shape != (surface_grid.size,):
        raise ShapeError(f"trace has {values.shape} samples, surface grid has {surface_grid.size}")
    s, _, w = surface.quadrature(surface_grid)
    phase = np.exp(-1j * k * (beta_grid.points @ s.T))
    amp = -(phase @ (w * values)) / (4 * math.pi)
    return FarFieldPattern(beta_grid, amp)


def optical_theorem_defect(pattern: FarFieldPattern, forward: complex, k: float) -> float:
    """Relative defect |Im A(alpha,alpha) - (k/4pi)||A||^2| / |Im A(alpha,alpha)|."""
    power = k / (4 * math.pi) * l2_norm(pattern.values, pattern.grid) ** 2
    return abs(forward.imag - power) / abs(forward.imag)


def _herglotz_grid(f, x_radius: float, k: float, grid: Optional[SphereGrid]):
    need = 2 * truncation_degree(k, x_radius)
    if isinstance(f, HarmonicCoeffs):
        need = max(need, f.max_degree + truncation_degree(k, x_radius))
        if grid is None:
            grid = grid_for_degree(need)
        elif grid.exactness_degree < need:
            raise ResolutionError(f"herglotz needs exactness >= {need}, grid has {grid.exactness_degree}")
        return grid, synthesize_function(f, grid)
    if grid is None:
        raise ShapeError("sampled kernels require their beta grid")
    if grid.exactness_degree < need:
        raise ResolutionError(f"herglotz needs exactness >= {need}, grid has {grid.exactness_degree}")
    samples = np.asarray(f)
    if samples.shape != (grid.size,):
        raise ShapeError("kernel samples do not match grid")
    return grid, samples


def herglotz(f, k: float, x, grid: Optional[SphereGrid] = None):
    """Herglotz wave function w(x) for kernel ``f`` (coefficients or grid samples).

    ``x`` is a point or an array of points with shape (..., 3).
    """
    x = np.asarray(x, dtype=float)
    pts = x.reshape(-1, 3)
    radius = float(np.max(np.linalg.norm(pts, axis=1), initial=0.0))
    grid, samples = _herglotz_grid(f, radius, k, grid)
    w = np.exp(-1j * k * (pts @ grid.points.T)) @ (grid.weights * samples)
    w = w.reshape(x.shape[:-1])
    return complex(w) if w.ndim == 0 else w


_STENCIL = np.array(
    [[0, 0, 0], [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=float
)


def helmholtz_residual(f, k: float, x, h: float, grid: Optional[SphereGrid] = None) -> float:
    """|Delta_h w + k^2 w| at ``x`` with the 7-point finite-difference Laplacian."""
    pts = np.asarray(x, dtype=float)[None, :] + h * _STENCIL
    if grid is None and isinstance(f, HarmonicCoeffs):
        # one grid for all stencil points keeps the quadrature error smooth in x
        radius = float(np.max(np.linalg.norm(pts, axis=1)))
        grid = grid_for_degree(max(2 * truncation_degree(k, radius),
                                   f.max_degree + truncation_degree(k, radius)))
    w = herglotz(f, k, pts, grid)
    lap = (np.sum(w[1:]) - 6 * w[0]) / (h * h)
    return float(abs(lap + k * k * w[0]))


def annihilation_residual(f: HarmonicCoeffs, surface: ParamSurface, k: float,
                          surface_grid: Optional[SphereGrid] = None) -> float:
    """max over surface nodes of |w(s)|; zero iff f annihilates the surface."""
    if surface_grid is None:
        surface_grid = grid_for_degree(2 * truncation_degree(k, surface.bounding_radius))
    s, _, _ = surface.quadrature(surface_grid)
    if not np.any(f.coeffs):
        return 0.0
    return float(np.max(np.abs(herglotz(f, k, s))))
