"""Special functions for the series solver.

Associated Legendre functions (Condon-Shortley phase, used consistently
everywhere in this package) and spherical Bessel families j_n, y_n of
complex argument, plus the outward-decaying spherical Hankel combination.

Values of j_n and y_n are delegated to scipy, which is accurate to ~1e-13
relative over the supported envelope (|z| <= 1e3, n <= 100 and beyond).
The outward combination h_n is NOT formed as j_n + i*y_n: for arguments
with a large imaginary part both terms grow like exp(|Im z|) while their
sum decays like exp(-|Im z|), so the naive sum cancels catastrophically.
It is instead built by its own upward recurrence from the closed-form
seeds, which is stable because h_n dominates the recurrence in the
growing direction.

Overflow policy: any operation whose result would leave the double range
raises :class:`SpecFunOverflowError` instead of returning infinities.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special as _sp

__all__ = [
    "SpecFunOverflowError",
    "assoc_legendre",
    "legendre_all",
    "assoc_legendre_norm_all",
    "sph_bessel_j",
    "sph_bessel_y",
    "sph_bessel_j_deriv",
    "sph_bessel_y_deriv",
    "sph_hankel_out",
    "sph_hankel_out_deriv",
    "sph_jn_all",
    "sph_yn_all",
    "sph_hn_all",
    "deriv_from_values",
    "max_safe_order",
]

# exp(i*z) overflows double for |Im z| beyond ~709; keep margin for the /z seeds
_IM_MAX = 690.0
_ABS_LIMIT = 1e290
_LOG_LIMIT = math.log(_ABS_LIMIT)


class SpecFunOverflowError(OverflowError):
    """Result magnitude exceeds the representable double range."""


def _check_order(n: int) -> int:
    n = int(n)
    if n < 0:
        raise ValueError(f"order must be non-negative, got {n}")
    return n


def _check_argument(z: complex) -> complex:
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ValueError(f"argument must be finite, got {z}")
    return z


# ---------------------------------------------------------------------------
# spherical Bessel families
# ---------------------------------------------------------------------------

def sph_jn_all(nmax: int, z: complex) -> np.ndarray:
    """j_0..j_nmax at complex z.  j_n is regular at z = 0."""
    nmax = _check_order(nmax)
    z = _check_argument(z)
    if z == 0:
        out = np.zeros(nmax + 1, dtype=complex)
        out[0] = 1.0
        return out
    if abs(z.imag) > _IM_MAX:
        raise SpecFunOverflowError(f"|Im z| = {abs(z.imag):.3g} too large for j_n({z})")
    vals = _sp.spherical_jn(np.arange(nmax + 1), z)
    if not np.all(np.isfinite(vals)):
        raise SpecFunOverflowError(f"j_n overflow for n <= {nmax}, z = {z}")
    return np.asarray(vals, dtype=complex)


def sph_yn_all(nmax: int, z: complex) -> np.ndarray:
    """y_0..y_nmax at complex z != 0 (y_n is singular at the origin)."""
    nmax = _check_order(nmax)
    z = _check_argument(z)
    if z == 0:
        raise ValueError("y_n is singular at z = 0")
    if abs(z.imag) > _IM_MAX:
        raise SpecFunOverflowError(f"|Im z| = {abs(z.imag):.3g} too large for y_n({z})")
    vals = _sp.spherical_yn(np.arange(nmax + 1), z)
    if not np.all(np.isfinite(vals)):
        raise SpecFunOverflowError(f"y_n overflow for n <= {nmax}, z = {z}")
    return np.asarray(vals, dtype=complex)


def sph_hn_all(nmax: int, z: complex) -> np.ndarray:
    """Outward-decaying spherical Hankel combination h_0..h_nmax.

    Returns j_n + i*y_n (~ exp(+iz)/z, decaying outward) when Im z >= 0
    and j_n - i*y_n when Im z < 0, so the result always decays as the
    radial coordinate grows.  Upward recurrence from the closed n = 0, 1
    seeds; stable because h_n dominates for growing n.
    """
    nmax = _check_order(nmax)
    z = _check_argument(z)
    if z == 0:
        raise ValueError("h_n is singular at z = 0")
    if abs(z.imag) > _IM_MAX:
        raise SpecFunOverflowError(f"|Im z| = {abs(z.imag):.3g} too large for h_n({z})")
    sign = 1.0 if z.imag >= 0 else -1.0
    e = np.exp(sign * 1j * z)
    out = np.empty(nmax + 1, dtype=complex)
    out[0] = -sign * 1j * e / z
    if nmax >= 1:
        out[1] = -e * (z + sign * 1j) / z**2
    for k in range(1, nmax):
        nxt = (2 * k + 1) / z * out[k] - out[k - 1]
        if abs(nxt.real) > _ABS_LIMIT or abs(nxt.imag) > _ABS_LIMIT:
            raise SpecFunOverflowError(f"h_n overflow at n = {k + 1}, z = {z}")
        out[k + 1] = nxt
    return out


def deriv_from_values(values: np.ndarray, z: complex) -> np.ndarray:
    """Derivatives f'_n from the value table, via f'_n = f_{n-1} - (n+1)/z * f_n.

    Holds for j, y and any fixed linear combination; f'_0 = -f_1.
    """
    if len(values) < 2:
        raise ValueError("need values up to order n+1 to form derivatives")
    z = complex(z)
    n = np.arange(len(values))
    out = np.empty_like(values)
    out[1:] = values[:-1] - (n[1:] + 1) / z * values[1:]
    out[0] = -values[1]
    return out


def sph_bessel_j(n: int, z: complex) -> complex:
    """Spherical Bessel function of the first kind, complex argument."""
    return complex(sph_jn_all(_check_order(n), z)[n])


def sph_bessel_y(n: int, z: complex) -> complex:
    """Spherical Bessel function of the second kind, complex argument."""
    return complex(sph_yn_all(_check_order(n), z)[n])


def sph_bessel_j_deriv(n: int, z: complex) -> complex:
    n = _check_order(n)
    z = _check_argument(z)
    if z == 0:
        # j'_n(0): zero except j'_1(0) = 1/3
        return 1.0 / 3.0 if n == 1 else 0.0
    vals = sph_jn_all(n + 1, z)
    return complex(vals[n - 1] - (n + 1) / z * vals[n]) if n >= 1 else complex(-vals[1])


def sph_bessel_y_deriv(n: int, z: complex) -> complex:
    n = _check_order(n)
    vals = sph_yn_all(n + 1, z)
    z = complex(z)
    return complex(vals[n - 1] - (n + 1) / z * vals[n]) if n >= 1 else complex(-vals[1])


def sph_hankel_out(n: int, z: complex) -> complex:
    """Outward-decaying Hankel combination, see :func:`sph_hn_all`."""
    return complex(sph_hn_all(_check_order(n), z)[n])


def sph_hankel_out_deriv(n: int, z: complex) -> complex:
    n = _check_order(n)
    vals = sph_hn_all(n + 1, z)
    z = complex(z)
    return complex(vals[n - 1] - (n + 1) / z * vals[n]) if n >= 1 else complex(-vals[1])


def max_safe_order(z: complex, nmax: int) -> int:
    """Largest order <= nmax whose y_n/h_n magnitude stays in double range.

    Conservative log-domain walk of the upward recurrence growth; used by
    the series solver to stop before the basis overflows.
    """
    z = _check_argument(z)
    az = abs(z)
    if az == 0:
        return 0
    log_mag = abs(z.imag) + math.log(max(1.0 / az, 1e-300))
    n = 0
    while n < nmax:
        step = math.log((2 * n + 1) / az) if (2 * n + 1) > az else 0.0
        if log_mag + step > _LOG_LIMIT:
            return n
        log_mag += step
        n += 1
    return nmax


# ---------------------------------------------------------------------------
# Legendre functions
# ---------------------------------------------------------------------------

def legendre_all(nmax: int, x: float) -> np.ndarray:
    """Legendre polynomials P_0..P_nmax(x) by the three-term recurrence."""
    nmax = _check_order(nmax)
    out = np.empty(nmax + 1)
    out[0] = 1.0
    if nmax >= 1:
        out[1] = x
    for n in range(1, nmax):
        out[n + 1] = ((2 * n + 1) * x * out[n] - n * out[n - 1]) / (n + 1)
    return out


def assoc_legendre(n: int, m: int, x: float) -> float:
    """Associated Legendre function P_n^m(x) with the Condon-Shortley phase.

    Unnormalized; magnitudes grow like (n+m)!/(n-m)! so keep n moderate or
    use :func:`assoc_legendre_norm_all` for high degrees.
    """
    n = _check_order(n)
    m = int(m)
    if not 0 <= m <= n:
        raise ValueError(f"order must satisfy 0 <= m <= n, got m={m}, n={n}")
    if not -1.0 <= x <= 1.0:
        raise ValueError(f"argument must lie in [-1, 1], got {x}")
    # seed P_m^m = (-1)^m (2m-1)!! (1-x^2)^(m/2), then climb in degree
    pmm = 1.0
    if m > 0:
        s = math.sqrt((1.0 - x) * (1.0 + x))
        fact = 1.0
        for _ in range(m):
            pmm *= -fact * s
            fact += 2.0
    if n == m:
        return pmm
    pmmp1 = x * (2 * m + 1) * pmm
    if n == m + 1:
        return pmmp1
    for k in range(m + 2, n + 1):
        pmm, pmmp1 = pmmp1, ((2 * k - 1) * x * pmmp1 - (k + m - 1) * pmm) / (k - m)
    return pmmp1


def assoc_legendre_norm_all(nmax: int, m: int, x: float) -> np.ndarray:
    """Orthonormal associated Legendre values for degrees 0..nmax at fixed m.

    Normalized so that the square integrates to 1 over x in [-1, 1]:
    Pbar_n^m = sqrt((2n+1)/2 * (n-m)!/(n+m)!) * P_n^m.  Entries with
    degree < m are zero.  Stable for high degrees where the unnormalized
    values overflow.
    """
    nmax = _check_order(nmax)
    m = int(m)
    if m < 0:
        raise ValueError(f"order m must be non-negative, got {m}")
    if not -1.0 <= x <= 1.0:
        raise ValueError(f"argument must lie in [-1, 1], got {x}")
    out = np.zeros(nmax + 1)
    if m > nmax:
        return out
    s = math.sqrt((1.0 - x) * (1.0 + x))
    pbar = math.sqrt(0.5)
    for k in range(1, m + 1):
        pbar *= -math.sqrt((2 * k + 1) / (2.0 * k)) * s
    out[m] = pbar
    if m == nmax:
        return out
    out[m + 1] = math.sqrt(2 * m + 3.0) * x * out[m]
    for n in range(m + 2, nmax + 1):
        a = math.sqrt((4.0 * n * n - 1.0) / (n * n - m * m))
        b = math.sqrt(((n - 1.0) ** 2 - m * m) / (4.0 * (n - 1.0) ** 2 - 1.0))
        out[n] = a * (x * out[n - 1] - b * out[n - 2])
    return out
