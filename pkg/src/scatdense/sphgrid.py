"""Quadrature on the unit sphere and spherical-harmonic transforms.

Grids are tensor products of Gauss-Legendre nodes in cos(theta) and the
uniform trapezoid rule in phi.  Nodes are stored theta-major, phi-inner.
Harmonic coefficient tables are ordered ell-major, m-inner.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import specfun
from .specfun import HarmonicIndex


class GridConfigError(ValueError):
    pass


class ResolutionError(ValueError):
    pass


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class Direction:
    """A unit vector on S^2."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        n = math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)
        if abs(n - 1.0) > 1e-12:
            raise ValueError(f"direction is not a unit vector (norm {n!r})")

    @classmethod
    def from_vector(cls, v) -> "Direction":
        v = np.asarray(v, dtype=float)
        n = np.linalg.norm(v)
        if n == 0:
            raise ValueError("zero vector has no direction")
        v = v / n
        return cls(float(v[0]), float(v[1]), float(v[2]))

    @classmethod
    def from_angles(cls, theta: float, phi: float) -> "Direction":
        st = math.sin(theta)
        return cls(st * math.cos(phi), st * math.sin(phi), math.cos(theta))

    @property
    def theta(self) -> float:
        return math.atan2(math.hypot(self.x, self.y), self.z)

    @property
    def phi(self) -> float:
        p = math.atan2(self.y, self.x)
        return p + 2 * math.pi if p < 0 else p

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def __neg__(self) -> "Direction":
        return Direction(-self.x, -self.y, -self.z)


def angles_of(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Polar and azimuthal angles of an array of unit vectors, shape (..., 3)."""
    points = np.asarray(points, dtype=float)
    # atan2 keeps full relative accuracy near the poles, where arccos does not
    theta = np.arctan2(np.hypot(points[..., 0], points[..., 1]), points[..., 2])
    phi = np.mod(np.arctan2(points[..., 1], points[..., 0]), 2 * math.pi)
    return theta, phi


@dataclass(frozen=True, eq=False)
class SphereGrid:
    n_theta: int
    n_phi: int
    t: np.ndarray  # cos(theta) per node
    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray
    exactness_degree: int
    _ycache: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def points(self) -> np.ndarray:
        st = np.sin(self.theta)
        return np.stack([st * np.cos(self.phi), st * np.sin(self.phi), self.t], axis=-1)

    @property
    def nodes(self) -> list[Direction]:
        return [Direction(*p) for p in self.points]

    def harmonics(self, lmax: int) -> np.ndarray:
        """Y_lm sampled at the nodes, shape ((lmax+1)**2, size); cached."""
        y = self._ycache.get(lmax)
        if y is None:
            y = specfun.sph_harmonics_all(lmax, self.theta, self.phi)
            self._ycache[lmax] = y
        return y


def make_grid(n_theta: int, n_phi: int) -> SphereGrid:
    """Gauss-Legendre (cos theta) x trapezoid (phi) grid."""
    if n_theta < 2 or n_phi < 4:
        raise GridConfigError(f"grid needs n_theta >= 2 and n_phi >= 4, got ({n_theta}, {n_phi})")
    tg, wg = np.polynomial.legendre.leggauss(n_theta)
    tg, wg = tg[::-1], wg[::-1]  # theta increasing
    phis = 2 * math.pi * np.arange(n_phi) / n_phi
    t = np.repeat(tg, n_phi)
    w = np.repeat(wg, n_phi) * (2 * math.pi / n_phi)
    phi = np.tile(phis, n_theta)
    return SphereGrid(
        n_theta=n_theta,
        n_phi=n_phi,
        t=t,
        theta=np.arccos(t),
        phi=phi,
        weights=w,
        exactness_degree=min(2 * n_theta - 1, n_phi - 1),
    )


def grid_for_degree(degree: int) -> SphereGrid:
    """Smallest grid of this family integrating polynomials up to ``degree`` exactly."""
    return make_grid(max(2, (degree + 2) // 2), max(4, degree + 1))


def truncation_degree(k: float, radius: float) -> int:
    """Degree at which expansions of exp(i k beta.x), |x| <= radius, are cut off."""
    return int(math.ceil(k * radius)) + 20


def _check_samples(f, grid: SphereGrid) -> np.ndarray:
    f = np.asarray(f)
    if f.shape[-1] != grid.size:
        raise ShapeError(f"sample length {f.shape[-1]} does not match grid size {grid.size}")
    return f


def inner_product(f, g, grid: SphereGrid) -> complex:
    """Bilinear pairing sum_j w_j f_j g_j (no conjugation)."""
    f, g = _check_samples(f, grid), _check_samples(g, grid)
    return complex(np.sum(grid.weights * f * g))


def hermitian_inner_product(f, g, grid: SphereGrid) -> complex:
    """Sum_j w_j f_j conj(g_j)."""
    f, g = _check_samples(f, grid), _check_samples(g, grid)
    return complex(np.sum(grid.weights * f * np.conj(g)))


def l2_norm(f, grid: SphereGrid) -> float:
    f = _check_samples(f, grid)
    return math.sqrt(float(np.sum(grid.weights * np.abs(f) ** 2)))


@dataclass(frozen=True, eq=False)
class HarmonicCoeffs:
    max_degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != ((self.max_degree + 1) ** 2,):
            raise ShapeError(f"expected {(self.max_degree + 1) ** 2} coefficients, got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, max_degree: int) -> "HarmonicCoeffs":
        return cls(max_degree, np.zeros((max_degree + 1) ** 2, dtype=complex))

    @classmethod
    def from_dict(cls, terms: dict, max_degree: int | None = None) -> "HarmonicCoeffs":
        """Build from ``{(ell, m): value}`` or ``{HarmonicIndex: value}``."""
        idx = {(k.ell, k.m) if isinstance(k, HarmonicIndex) else tuple(k): v for k, v in terms.items()}
        for ell, m in idx:
            HarmonicIndex(ell, m)
        lmax = max((l for l, _ in idx), default=0) if max_degree is None else max_degree
        c = np.zeros((lmax + 1) ** 2, dtype=complex)
        for (ell, m), v in idx.items():
            c[HarmonicIndex(ell, m).flat] = v
        return cls(lmax, c)

    def __getitem__(self, key) -> complex:
        ell, m = (key.ell, key.m) if isinstance(key, HarmonicIndex) else key
        if ell > self.max_degree:
            return 0j
        return complex(self.coeffs[HarmonicIndex(ell, m).flat])

    def degree_block(self, ell: int) -> np.ndarray:
        if ell > self.max_degree:
            return np.zeros(2 * ell + 1, dtype=complex)
        return self.coeffs[ell * ell : (ell + 1) ** 2]

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def padded(self, max_degree: int) -> "HarmonicCoeffs":
        c = np.zeros((max_degree + 1) ** 2, dtype=complex)
        n = min(c.size, self.coeffs.size)
        c[:n] = self.coeffs[:n]
        return HarmonicCoeffs(max_degree, c)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            write_coeffs_csv(fh, self)

    @classmethod
    def from_csv(cls, path) -> "HarmonicCoeffs":
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
        header, body = rows[0], rows[1:]
        if [h.strip() for h in header] != ["ell", "m", "re", "im"]:
            raise ShapeError(f"unexpected coefficient header {header}")
        terms = {(int(r[0]), int(r[1])): complex(float(r[2]), float(r[3])) for r in body}
        return cls.from_dict(terms)


def write_coeffs_csv(fh, c: HarmonicCoeffs) -> None:
    fh.write("ell,m,re,im\n")
    for l in range(c.max_degree + 1):
        for m in range(-l, l + 1):
            v = c.coeffs[l * l + l + m]
            fh.write(f"{l},{m},{v.real:.17g},{v.imag:.17g}\n")


def write_grid_csv(fh, grid: SphereGrid) -> None:
    fh.write("theta,phi,weight\n")
    for th, ph, w in zip(grid.theta, grid.phi, grid.weights):
        fh.write(f"{th:.17g},{ph:.17g},{w:.17g}\n")


def analyze(f, grid: SphereGrid, L: int) -> HarmonicCoeffs:
    """Coefficients f_lm = <f, Y_lm> by quadrature."""
    f = _check_samples(f, grid)
    if 2 * L > grid.exactness_degree:
        raise ResolutionError(
            f"degree {L} needs exactness >= {2 * L}, grid has {grid.exactness_degree}"
        )
    y = grid.harmonics(L)
    return HarmonicCoeffs(L, np.conj(y) @ (grid.weights * f))


def synthesize_function(c: HarmonicCoeffs, grid: SphereGrid) -> np.ndarray:
    """Pointwise sum_lm c_lm Y_lm at the grid nodes."""
    return c.coeffs @ grid.harmonics(c.max_degree)


def plane_wave_coeffs(k: float, s, L: int) -> HarmonicCoeffs:
    """Coefficients in beta of exp(-i k beta.s): 4 pi (-i)^l j_l(k|s|) conj(Y_lm(s0))."""
    s = np.asarray(s, dtype=float)
    r = float(np.linalg.norm(s))
    jl = specfun.sph_jn_all(L, k * r)
    if r > 0:
        th, ph = angles_of(s / r)
    else:
        th, ph = 0.0, 0.0
    ys = specfun.sph_harmonics_all(L, th, ph)
    ells = np.repeat(np.arange(L + 1), 2 * np.arange(L + 1) + 1)
    return HarmonicCoeffs(L, 4 * math.pi * (-1j) ** ells * jl[ells] * np.conj(ys))


def degree_of_flat(lmax: int) -> np.ndarray:
    """Degree ell for each flat coefficient position up to lmax."""
    return np.repeat(np.arange(lmax + 1), 2 * np.arange(lmax + 1) + 1)
