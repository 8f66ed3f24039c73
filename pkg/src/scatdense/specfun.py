"""Real-argument special functions.

Spherical Bessel/Neumann/Hankel functions, Legendre polynomials, orthonormal
complex spherical harmonics and zeros of j_l.

Spherical harmonics use the orthonormal convention with the Condon-Shortley
phase::

    Y_lm(theta, phi) = (-1)^m sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!) P_l^m(cos theta) e^{i m phi}

where ``P_l^m`` is the associated Legendre function *without* the
Condon-Shortley factor.  With this choice ``conj(Y_lm) = (-1)^m Y_l,-m``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_DEGREE = 200

_RESCALE_BIG = 1e250
_RESCALE_SMALL = 1e-250


class UnsupportedDegreeError(ValueError):
    pass


class SingularArgumentError(ValueError):
    pass


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class HarmonicIndex:
    ell: int
    m: int

    def __post_init__(self):
        if self.ell < 0 or abs(self.m) > self.ell:
            raise ValueError(f"invalid harmonic index (ell={self.ell}, m={self.m})")

    @property
    def flat(self) -> int:
        """Position in the ell-major, m-inner coefficient ordering."""
        return self.ell * self.ell + self.ell + self.m


@dataclass(frozen=True)
class BesselZero:
    ell: int
    index: int
    x: float


def _check_degree(ell: int) -> None:
    if ell < 0:
        raise UnsupportedDegreeError(f"degree must be non-negative, got {ell}")
    if ell > MAX_DEGREE:
        raise UnsupportedDegreeError(f"degree {ell} exceeds supported cap {MAX_DEGREE}")


def _miller_start(lmax: int, xmax: float) -> int:
    n = max(lmax, int(math.ceil(xmax)))
    return n + 30 + int(math.ceil(math.sqrt(40.0 * n)))


def sph_jn_all(lmax: int, x) -> np.ndarray:
    """j_0..j_lmax at ``x``; result has shape ``(lmax + 1,) + x.shape``.

    Orders l <= x use upward recurrence from the closed forms of j_0, j_1;
    orders l > x come from a normalised downward (Miller) recurrence.
    """
    _check_degree(lmax)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("spherical Bessel functions require x >= 0")
    shape = x.shape
    xf = x.ravel()
    out = np.zeros((lmax + 1, xf.size))
    zero = xf == 0.0
    out[0, zero] = 1.0
    pos = ~zero
    if not np.any(pos):
        return out.reshape((lmax + 1,) + shape)
    xp = xf[pos]

    # downward Miller recurrence over all orders
    nstart = _miller_start(lmax, float(xp.max()))
    down = np.zeros((lmax + 1, xp.size))
    f_hi = np.zeros_like(xp)
    f = np.full_like(xp, 1e-300)
    for n in range(nstart, 0, -1):
        f_lo = (2 * n + 1) / xp * f - f_hi
        f_hi, f = f, f_lo
        if n - 1 <= lmax:
            down[n - 1] = f
        big = np.abs(f) > _RESCALE_BIG
        if np.any(big):
            f[big] *= _RESCALE_SMALL
            f_hi[big] *= _RESCALE_SMALL
            down[:, big] *= _RESCALE_SMALL
    # f now holds unnormalised j_0, f_hi unnormalised j_1
    s, c = np.sin(xp), np.cos(xp)
    j0 = s / xp
    j1 = s / (xp * xp) - c / xp
    use_j0 = np.abs(j0) >= np.abs(j1)
    scale = np.where(use_j0, j0 / np.where(use_j0, f, 1.0), j1 / np.where(use_j0, 1.0, f_hi))
    down *= scale

    # upward recurrence where it is stable (l <= x)
    up = np.zeros_like(down)
    up[0] = j0
    if lmax >= 1:
        up[1] = j1
    # values with l > x overflow here but are discarded below
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, lmax):
            up[n + 1] = (2 * n + 1) / xp * up[n] - up[n - 1]
    orders = np.arange(lmax + 1)[:, None]
    res = np.where(orders <= xp[None, :], up, down)
    res[0] = j0
    out[:, pos] = res
    return out.reshape((lmax + 1,) + shape)


def sph_yn_all(lmax: int, x) -> np.ndarray:
    """y_0..y_lmax by upward recurrence (stable for the dominant solution)."""
    _check_degree(lmax)
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise SingularArgumentError("spherical Neumann/Hankel functions are singular at x = 0")
    out = np.empty((lmax + 1,) + x.shape)
    s, c = np.sin(x), np.cos(x)
    out[0] = -c / x
    if lmax >= 1:
        out[1] = -c / (x * x) - s / x
    with np.errstate(over="ignore"):
        for n in range(1, lmax):
            out[n + 1] = (2 * n + 1) / x * out[n] - out[n - 1]
    return out


def sph_h1_all(lmax: int, x) -> np.ndarray:
    return sph_jn_all(lmax, x) + 1j * sph_yn_all(lmax, x)


def derivative_from_orders(values: np.ndarray, x) -> np.ndarray:
    """Derivatives of a family f_0..f_L via f_l' = f_{l-1} - (l+1)/x f_l, f_0' = -f_1.

    The last order needs f_{L+1}, so ``values`` must carry one order more than
    the derivatives returned.
    """
    x = np.asarray(x, dtype=float)
    lmax = values.shape[0] - 2
    d = np.empty_like(values[: lmax + 1])
    d[0] = -values[1]
    for n in range(1, lmax + 1):
        d[n] = values[n - 1] - (n + 1) / x * values[n]
    return d


def sph_bessel_j(ell: int, x):
    """Spherical Bessel function j_ell(x)."""
    res = sph_jn_all(ell, x)[ell]
    return res if np.ndim(res) else float(res)


def sph_bessel_y(ell: int, x):
    res = sph_yn_all(ell, x)[ell]
    return res if np.ndim(res) else float(res)


def sph_hankel1(ell: int, x):
    """Outgoing spherical Hankel function h_ell^(1)(x) = j_ell(x) + i y_ell(x)."""
    res = sph_h1_all(ell, x)[ell]
    return res if np.ndim(res) else complex(res)


def sph_bessel_j_deriv(ell: int, x):
    vals = sph_jn_all(ell + 1, x)
    res = derivative_from_orders(vals, x)[ell]
    return res if np.ndim(res) else float(res)


def sph_hankel1_deriv(ell: int, x):
    vals = sph_h1_all(ell + 1, x)
    res = derivative_from_orders(vals, x)[ell]
    return res if np.ndim(res) else complex(res)


def legendre_all(lmax: int, t) -> np.ndarray:
    """P_0..P_lmax at ``t`` by the three-term recurrence."""
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1 + 1e-12):
        raise DomainError("Legendre polynomials require |t| <= 1")
    t = np.clip(t, -1.0, 1.0)
    out = np.empty((lmax + 1,) + t.shape)
    out[0] = 1.0
    if lmax >= 1:
        out[1] = t
    for n in range(1, lmax):
        out[n + 1] = ((2 * n + 1) * t * out[n] - n * out[n - 1]) / (n + 1)
    return out


def legendre_p(ell: int, t):
    res = legendre_all(ell, t)[ell]
    return res if np.ndim(res) else float(res)


def num_harmonics(lmax: int) -> int:
    return (lmax + 1) ** 2


def harmonic_indices(lmax: int) -> list[HarmonicIndex]:
    return [HarmonicIndex(l, m) for l in range(lmax + 1) for m in range(-l, l + 1)]


def sph_harmonics_all(lmax: int, theta, phi) -> np.ndarray:
    """All Y_lm with l <= lmax, rows in ell-major/m-inner order.

    Uses the fully normalised associated Legendre recurrence, stable up to
    the degree cap.  Result shape is ``((lmax+1)**2,) + theta.shape``.
    """
    _check_degree(lmax)
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    theta, phi = np.broadcast_arrays(theta, phi)
    ct, st = np.cos(theta), np.sin(theta)
    out = np.empty(((lmax + 1) ** 2,) + theta.shape, dtype=complex)
    pmm = np.full(theta.shape, 1.0 / math.sqrt(4.0 * math.pi))
    for m in range(lmax + 1):
        if m > 0:
            pmm = -math.sqrt((2 * m + 1) / (2.0 * m)) * st * pmm
        eimp = np.exp(1j * m * phi)
        sign = (-1) ** m
        p_prev2 = None
        p_prev = pmm
        for l in range(m, lmax + 1):
            if l == m:
                p = pmm
            elif l == m + 1:
                p = math.sqrt(2 * m + 3) * ct * pmm
            else:
                a = math.sqrt((4 * l * l - 1) / (l * l - m * m))
                a_prev = math.sqrt((4 * (l - 1) ** 2 - 1) / ((l - 1) ** 2 - m * m))
                p = a * (ct * p_prev - p_prev2 / a_prev)
            if l > m:
                p_prev2, p_prev = p_prev, p
            y = p * eimp
            out[l * l + l + m] = y
            if m > 0:
                out[l * l + l - m] = sign * np.conj(y)
    return out


def sph_harmonic(idx: HarmonicIndex, theta, phi):
    """Single orthonormal spherical harmonic Y_{idx.ell, idx.m}(theta, phi)."""
    res = sph_harmonics_all(idx.ell, theta, phi)[idx.flat]
    return res if np.ndim(res) else complex(res)


def _bisect_newton(ell: int, lo, hi) -> np.ndarray:
    """Refine the single sign change of j_ell in each bracket [lo_i, hi_i] to machine precision."""
    lo = np.array(lo, dtype=float, ndmin=1)
    hi = np.array(hi, dtype=float, ndmin=1)
    if lo.size == 0:
        return lo
    jlo = sph_jn_all(ell, lo)[ell]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        jm = sph_jn_all(ell, mid)[ell]
        same = (jm > 0) == (jlo > 0)
        lo = np.where(same, mid, lo)
        jlo = np.where(same, jm, jlo)
        hi = np.where(same, hi, mid)
        if np.all(hi - lo < 1e-6 * hi):
            break
    x = 0.5 * (lo + hi)
    for _ in range(20):
        vals = sph_jn_all(ell + 1, x)
        step = vals[ell] / derivative_from_orders(vals, x)[ell]
        x_new = np.clip(x - step, lo, hi)
        done = np.all(np.abs(x_new - x) <= 2e-16 * x)
        x = x_new
        if done:
            break
    return x


def bessel_zeros(ell: int, count: int) -> list[BesselZero]:
    """First ``count`` positive zeros of j_ell.

    Brackets come from interlacing: the n-th zero of j_l lies strictly between
    the n-th and (n+1)-th zeros of j_{l-1}, starting from j_0's zeros n*pi.
    """
    _check_degree(ell)
    if count < 1:
        raise ValueError("count must be >= 1")
    prev = np.pi * np.arange(1, count + ell + 1)
    for l in range(1, ell + 1):
        prev = _bisect_newton(l, prev[:-1], prev[1:])
    return [BesselZero(ell, n + 1, float(x)) for n, x in enumerate(prev[:count])]


def bessel_zeros_below(lmax: int, xmax: float) -> dict[int, list[float]]:
    """All zeros of j_l below ``xmax`` for every l <= lmax, from one interlacing chain."""
    _check_degree(lmax)
    n0 = int(xmax / math.pi) + lmax + 2
    prev = np.pi * np.arange(1, n0 + 1)
    table = {0: [float(z) for z in prev if z < xmax]}
    for l in range(1, lmax + 1):
        # level l must keep lmax - l + 1 zeros past xmax so every later bracket closes
        need = lmax - l + 1
        first_beyond = int(np.searchsorted(prev, xmax))
        stop = min(len(prev), first_beyond + need + 1)
        prev = _bisect_newton(l, prev[: stop - 1], prev[1:stop])
        table[l] = [float(z) for z in prev if z < xmax]
    return table


def nearest_zero_distance(x: float, lmax: int) -> tuple[float, int]:
    """Distance from ``x`` to the nearest zero of any j_l with l <= lmax, and that l."""
    best, best_ell = math.inf, -1
    for l, zeros in bessel_zeros_below(lmax, x + math.pi + 1.0).items():
        for z in zeros:
            if abs(z - x) < best:
                best, best_ell = abs(z - x), l
    return best, best_ell
