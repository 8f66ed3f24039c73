"""Least-squares synthesis of target patterns from scattering amplitudes.

A target f on the beta grid is approximated by sum_j c_j A(., alpha_j, k)
in the quadrature-weighted L2(S^2) norm with a relative rank cutoff.  For a
sound-soft ball at k with j_l0(ka) = 0 every amplitude is orthogonal to the
degree-l0 harmonics, so the residual can never drop below the norm of f's
degree-l0 block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from . import specfun
from .mie import MieModel, build_mie, far_field
from .sphgrid import (
    Direction,
    HarmonicCoeffs,
    SphereGrid,
    grid_for_degree,
    synthesize_function,
    truncation_degree,
)

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))
EIGEN_FLAG_THRESHOLD = 1e-8


class SynthesisConfigError(ValueError):
    pass


def _van_der_corput(n: np.ndarray) -> np.ndarray:
    out = np.zeros(n.shape)
    denom = 1.0
    n = n.copy()
    while np.any(n):
        denom *= 2.0
        out += (n & 1) / denom
        n >>= 1
    return out


def _rotation(seed: int) -> np.ndarray:
    if seed == 0:
        return np.eye(3)
    q, r = np.linalg.qr(np.random.default_rng(seed).standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@dataclass(frozen=True, eq=False)
class DirectionSet:
    """Incident directions alpha_j with their generation rule."""

    points: np.ndarray
    rule: str = "explicit"
    seed: int = 0

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if np.any(np.abs(np.linalg.norm(p, axis=1) - 1.0) > 1e-12):
            raise SynthesisConfigError("directions must be unit vectors")
        if len(p) > 1:
            g = np.clip(p @ p.T, -1.0, 1.0)
            np.fill_diagonal(g, -1.0)
            # acos near 1 loses accuracy; compare chord length instead
            if np.max(g) > math.cos(1e-6):
                raise SynthesisConfigError("directions are not pairwise distinct")
        object.__setattr__(self, "points", p)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def directions(self) -> list[Direction]:
        return [Direction.from_vector(p) for p in self.points]

    @classmethod
    def fibonacci(cls, M: int, seed: int = 0) -> "DirectionSet":
        """Nested quasi-uniform spiral: golden-angle azimuths, van der Corput heights.

        Prefixes of a larger set equal the smaller set, so residual curves over
        increasing M are taken over nested dictionaries.
        """
        if M < 1:
            raise SynthesisConfigError("need at least one direction")
        i = np.arange(M)
        z = 1.0 - 2.0 * _van_der_corput(i + 1)
        phi = np.mod(i * GOLDEN_ANGLE, 2 * math.pi)
        s = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        pts = np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)
        return cls(pts @ _rotation(seed).T, "fibonacci-spiral", seed)

    @classmethod
    def explicit(cls, directions: Sequence) -> "DirectionSet":
        pts = [d.as_array() if isinstance(d, Direction) else np.asarray(d, float) for d in directions]
        return cls(np.array(pts), "explicit", 0)

    def prefix(self, M: int) -> "DirectionSet":
        return DirectionSet(self.points[:M], self.rule, self.seed)


@dataclass
class SynthesisReport:
    k: float
    M: int
    coefficients: np.ndarray
    residual: float
    target_norm: float
    gram_condition: float
    rank: int
    eigenflag: float = math.nan

    @property
    def relative_residual(self) -> float:
        return self.residual / self.target_norm if self.target_norm else 0.0

    @property
    def near_eigenvalue(self) -> bool:
        return self.eigenflag < EIGEN_FLAG_THRESHOLD

    def as_record(self) -> dict:
        return {
            "k": self.k,
            "M": self.M,
            "residual": self.residual,
            "relative_residual": self.relative_residual,
            "gram_condition": self.gram_condition,
            "rank": self.rank,
            "eigenflag": self.eigenflag,
        }


def build_dictionary(model, dirs: DirectionSet, beta_grid: SphereGrid) -> np.ndarray:
    """Matrix whose column j holds A(., alpha_j) on ``beta_grid``.

    ``model`` is a MieModel or a bem.BoundaryOperator.
    """
    if isinstance(model, MieModel):
        return far_field(model, beta_grid.points, dirs.points)
    from . import bem

    if isinstance(model, bem.BoundaryOperator):
        return bem.far_field_matrix(model, dirs.points, beta_grid)
    raise TypeError(f"unsupported scattering model {type(model).__name__}")


def _ordered_orthogonalization(A: np.ndarray, cutoff: float):
    """Column-order Gram-Schmidt (two passes) dropping numerically dependent columns.

    Column j is kept when its component orthogonal to the kept columns before it
    exceeds ``cutoff`` times the largest column norm among columns 0..j.  The
    kept set of a prefix is the prefix of the kept set, so spans are nested.
    """
    n, m = A.shape
    Q = np.zeros((n, m), dtype=complex)
    kept = []
    cmax = 0.0
    for j in range(m):
        v = A[:, j].astype(complex)
        cmax = max(cmax, float(np.linalg.norm(v)))
        q = Q[:, : len(kept)]
        for _ in range(2):
            v = v - q @ (q.conj().T @ v)
        nv = float(np.linalg.norm(v))
        if cmax > 0 and nv > cutoff * cmax:
            Q[:, len(kept)] = v / nv
            kept.append(j)
    return Q[:, : len(kept)], kept


def solve_ls(dictionary: np.ndarray, f, beta_grid: SphereGrid, svd_cutoff: float = 1e-10,
             k: float = math.nan, radius: Optional[float] = None) -> SynthesisReport:
    """Quadrature-weighted least squares with a relative rank cutoff.

    Columns are orthogonalised in order and a column is discarded when its new
    component is below ``svd_cutoff`` relative to the largest column norm; the
    residual is the distance of f to the retained span.  The singular values of
    the weighted dictionary give the reported Gram condition number.  With
    ``radius`` the eigenflag is the distance from k*radius to the nearest zero
    of j_l, l up to the truncation degree.
    """
    D = np.asarray(dictionary)
    if D.ndim != 2 or D.shape[1] == 0:
        raise SynthesisConfigError("empty dictionary")
    f = np.asarray(f, dtype=complex)
    if D.shape[0] != beta_grid.size or f.shape != (beta_grid.size,):
        raise SynthesisConfigError("dictionary, target and grid sizes disagree")
    sw = np.sqrt(beta_grid.weights)
    A = sw[:, None] * D
    fw = sw * f
    Q, kept = _ordered_orthogonalization(A, svd_cutoff)
    r = fw.copy()
    for i in range(Q.shape[1]):
        r = r - Q[:, i] * (Q[:, i].conj() @ r)
    coeffs = np.zeros(D.shape[1], dtype=complex)
    if kept:
        R = np.triu(Q.conj().T @ A[:, kept])
        coeffs[kept] = scipy.linalg.solve_triangular(R, Q.conj().T @ fw)
    s = np.linalg.svd(A, compute_uv=False)
    gram_condition = float((s[0] / s[-1]) ** 2) if s[-1] > 0 else math.inf
    eigenflag = math.nan
    if radius is not None and math.isfinite(k):
        eigenflag, _ = specfun.nearest_zero_distance(k * radius, truncation_degree(k, radius))
    return SynthesisReport(
        k=float(k),
        M=D.shape[1],
        coefficients=coeffs,
        residual=float(np.linalg.norm(r)),
        target_norm=float(np.linalg.norm(fw)),
        gram_condition=gram_condition,
        rank=len(kept),
        eigenflag=eigenflag,
    )


def sweep_grid(a: float, k_max: float, target_degree: int) -> SphereGrid:
    """Beta grid exact for |residual|^2 of every dictionary up to k_max."""
    return grid_for_degree(2 * max(truncation_degree(k_max, a), target_degree))


def synthesize_sphere(a: float, k: float, target: HarmonicCoeffs, Ms: Sequence[int],
                      svd_cutoff: float = 1e-10, seed: int = 0,
                      beta_grid: Optional[SphereGrid] = None) -> list[SynthesisReport]:
    """Reports for nested Fibonacci dictionaries of the given sizes on a ball."""
    model = build_mie(a, k)
    if beta_grid is None:
        beta_grid = sweep_grid(a, k, target.max_degree)
    f = synthesize_function(target, beta_grid)
    dirs = DirectionSet.fibonacci(max(Ms), seed)
    D = build_dictionary(model, dirs, beta_grid)
    eigenflag, _ = specfun.nearest_zero_distance(k * a, model.L)
    reports = []
    for M in Ms:
        rep = solve_ls(D[:, :M], f, beta_grid, svd_cutoff, k)
        rep.eigenflag = eigenflag
        reports.append(rep)
    return reports


def obstruction_profile(a: float, ell0: int, f: HarmonicCoeffs, M: int, k_range: tuple,
                        n_k: int, svd_cutoff: float = 1e-10, seed: int = 0,
                        beta_grid: Optional[SphereGrid] = None) -> list[tuple]:
    """Residual of synthesising ``f`` with M directions across a k interval.

    ``ell0`` names the degree whose zeros the sweep is meant to expose; the
    residual itself does not depend on it.  Pieces of one sweep computed
    separately must share ``beta_grid``.
    """
    k_lo, k_hi = k_range
    if not (0 < k_lo <= k_hi) or n_k < 1:
        raise SynthesisConfigError("k range must be positive and n_k >= 1")
    ks = np.linspace(k_lo, k_hi, n_k) if n_k > 1 else np.array([k_lo])
    grid = beta_grid if beta_grid is not None else sweep_grid(a, k_hi, f.max_degree)
    fs = synthesize_function(f, grid)
    dirs = DirectionSet.fibonacci(M, seed)
    out = []
    for k in ks:
        D = build_dictionary(build_mie(a, float(k)), dirs, grid)
        out.append((float(k), solve_ls(D, fs, grid, svd_cutoff, float(k)).residual))
    return out


def profile_peaks(profile: Sequence[tuple]) -> list[float]:
    """k values of strict interior local maxima of a residual curve."""
    r = [p[1] for p in profile]
    return [profile[i][0] for i in range(1, len(r) - 1) if r[i] > r[i - 1] and r[i] > r[i + 1]]


def projection_lower_bound(f: HarmonicCoeffs, a: float, k: float, tol: float = 1e-10) -> float:
    """Norm of f's blocked component when k*a sits on a zero of some j_l0, else 0."""
    table = specfun.bessel_zeros_below(f.max_degree, k * a + 1.0)
    blocked = 0.0
    for ell, zeros in table.items():
        if any(abs(z / a - k) <= tol for z in zeros):
            blocked += float(np.sum(np.abs(f.degree_block(ell)) ** 2))
    return math.sqrt(blocked)
