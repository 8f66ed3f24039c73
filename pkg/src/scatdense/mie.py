"""Sound-soft sphere scattering in closed form (modal series).

For a ball of radius ``a`` centred at the origin and incident wave
``exp(i k alpha.x)`` the total field outside the ball is::

    u = sum_l (2l+1) i^l [j_l(kr) + c_l h_l(kr)] P_l(alpha.x0),   c_l = -j_l(ka)/h_l(ka)

which vanishes termwise at r = a.  From the large-argument form of h_l the
far-field amplitude is ``A(beta, alpha) = (1/(ik)) sum_l (2l+1) c_l P_l(beta.alpha)``
and, via the Wronskian, the boundary normal derivative is
``u_N = -i/(k a^2) sum_l (2l+1) i^l P_l(alpha.s0) / h_l(ka)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import specfun
from .sphgrid import Direction, HarmonicCoeffs, SphereGrid, angles_of, degree_of_flat, truncation_degree


class MieDomainError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MieModel:
    a: float
    k: float
    L: int
    c: np.ndarray

    @property
    def ka(self) -> float:
        return self.k * self.a


@dataclass(frozen=True, eq=False)
class BoundaryTrace:
    """Samples of u_N on a surface, ordered like the surface's parameter grid."""

    grid: SphereGrid
    values: np.ndarray
    radius: float = 1.0

    def __post_init__(self):
        if np.shape(self.values) != (self.grid.size,):
            raise ValueError("trace length does not match its grid")

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("theta,phi,re_h,im_h\n")
            for th, ph, v in zip(self.grid.theta, self.grid.phi, self.values):
                fh.write(f"{th:.17g},{ph:.17g},{v.real:.17g},{v.imag:.17g}\n")


def build_mie(a: float, k: float) -> MieModel:
    if not (a > 0 and k > 0):
        raise MieDomainError(f"radius and wavenumber must be positive (a={a}, k={k})")
    L = truncation_degree(k, a)
    h = specfun.sph_h1_all(L, k * a)
    j = h.real
    return MieModel(a=float(a), k=float(k), L=L, c=-j / h)


def _as_points(v) -> np.ndarray:
    if isinstance(v, Direction):
        return v.as_array()
    return np.asarray(v, dtype=float)


def _cosines(beta: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    return np.clip(beta @ alpha.T if alpha.ndim == 2 else beta @ alpha, -1.0, 1.0)


def far_field_from_cosine(model: MieModel, t) -> np.ndarray:
    """A as a function of t = beta.alpha."""
    p = specfun.legendre_all(model.L, t)
    w = (2 * np.arange(model.L + 1) + 1) * model.c
    return np.tensordot(w, p, axes=(0, 0)) / (1j * model.k)


def far_field(model: MieModel, beta, alpha):
    """Scattering amplitude A(beta, alpha, k).

    ``beta`` and ``alpha`` may be Directions or arrays of unit vectors with
    shapes (..., 3); with arrays of shape (N, 3) and (M, 3) the result is (N, M).
    """
    b, al = _as_points(beta), _as_points(alpha)
    res = far_field_from_cosine(model, _cosines(b, al))
    return complex(res) if np.ndim(res) == 0 else res


def far_field_coeffs(model: MieModel, alpha) -> HarmonicCoeffs:
    """Harmonic coefficients in beta of A(., alpha): (4 pi/(ik)) c_l conj(Y_lm(alpha))."""
    al = _as_points(alpha)
    th, ph = angles_of(al)
    y = specfun.sph_harmonics_all(model.L, th, ph)
    ells = degree_of_flat(model.L)
    return HarmonicCoeffs(model.L, 4 * math.pi / (1j * model.k) * model.c[ells] * np.conj(y))


def _radial(x) -> tuple[np.ndarray, np.ndarray]:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r = np.linalg.norm(x, axis=-1)
    return x, r


def scattered_field(model: MieModel, x, alpha) -> np.ndarray:
    """v(x) = u - exp(i k alpha.x) for points with |x| >= a."""
    x, r = _radial(x)
    if np.any(r < model.a * (1 - 1e-12)):
        raise MieDomainError("field points must satisfy |x| >= a")
    al = _as_points(alpha)
    t = (x @ al) / r
    h = specfun.sph_h1_all(model.L, model.k * r)
    p = specfun.legendre_all(model.L, np.clip(t, -1, 1))
    n = np.arange(model.L + 1)
    w = ((2 * n + 1) * (1j) ** n * model.c)[:, None]
    return np.sum(w * h * p, axis=0)


def scattered_field_radial_derivative(model: MieModel, x, alpha) -> np.ndarray:
    """d v / d r at points with |x| >= a."""
    x, r = _radial(x)
    al = _as_points(alpha)
    t = (x @ al) / r
    h = specfun.sph_h1_all(model.L + 1, model.k * r)
    dh = specfun.derivative_from_orders(h, model.k * r)
    p = specfun.legendre_all(model.L, np.clip(t, -1, 1))
    n = np.arange(model.L + 1)
    w = ((2 * n + 1) * (1j) ** n * model.c)[:, None]
    return model.k * np.sum(w * dh * p, axis=0)


def scattering_solution(model: MieModel, x, alpha) -> np.ndarray:
    """Total field u(x, alpha, k) = exp(i k alpha.x) + v(x) for |x| >= a."""
    x, _ = _radial(x)
    al = _as_points(alpha)
    return np.exp(1j * model.k * (x @ al)) + scattered_field(model, x, alpha)


def boundary_normal_derivative(model: MieModel, grid: SphereGrid, alpha) -> BoundaryTrace:
    """u_N on the sphere |s| = a at the grid directions s0."""
    al = _as_points(alpha)
    t = grid.points @ al
    h = specfun.sph_h1_all(model.L, model.ka)
    n = np.arange(model.L + 1)
    w = (2 * n + 1) * (1j) ** n / h
    p = specfun.legendre_all(model.L, np.clip(t, -1, 1))
    vals = (-1j / (model.k * model.a**2)) * (w @ p)
    return BoundaryTrace(grid=grid, values=vals, radius=model.a)


def write_far_field_slice(fh, model: MieModel, n: int = 181) -> None:
    """CSV of A against cos(angle between beta and alpha)."""
    t = np.linspace(-1.0, 1.0, n)
    a = far_field_from_cosine(model, t)
    fh.write("cos_theta,re_A,im_A\n")
    for ti, ai in zip(t, a):
        fh.write(f"{ti:.17g},{ai.real:.17g},{ai.imag:.17g}\n")
