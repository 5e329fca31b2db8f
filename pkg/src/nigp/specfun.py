"""Special functions behind the normalized inverse-Gaussian process.

Everything here is a pure function of its arguments. The Lévy tail

    L(x) = a / sqrt(2 pi) * int_x^inf exp(-t/2) t^(-3/2) dt

is evaluated through the closed form obtained by one integration by parts,

    L(x) = a * [sqrt(2/pi) x^(-1/2) exp(-x/2) - erfc(sqrt(x/2))],

written with the scaled complementary error function so that neither term
underflows. ``xi(a) = 1 / (a^2 e^a Gamma(-2, a))`` controls the variance of
the process and behaves like ``a`` for large ``a``.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import special

from .roots import TableGuess, invert_decreasing

__all__ = [
    "check_concentration",
    "erfc_scaled",
    "erfc",
    "bessel_k_half",
    "log_bessel_k",
    "upper_gamma_neg2",
    "scaled_upper_gamma_neg2",
    "xi",
    "levy_tail",
    "log_levy_tail",
    "levy_tail_inverse",
    "levy_tail_inverse_guess",
]

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# below this, Gamma(0, a) = E1(a) is scaled by e^a directly; above it the
# recurrence loses ~a^2 ulps and the continued fraction is used instead
_RECURRENCE_LIMIT = 50.0


def check_concentration(a: float) -> float:
    a = float(a)
    if not (a > 0 and math.isfinite(a)):
        raise ValueError(f"concentration a must be a positive finite number, got {a!r}")
    return a


def erfc_scaled(x):
    """``exp(x**2) * erfc(x)``; finite for all large positive ``x``."""
    return special.erfcx(x)


def erfc(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", under="ignore"):
        out = np.where(x >= 0, erfc_scaled(np.abs(x)) * np.exp(-x * x), 2.0 - erfc_scaled(np.abs(x)) * np.exp(-x * x))
    return out[()] if out.ndim == 0 else out


def _scaled_bessel_k_half(m: int, z):
    """``e^z K_{m/2}(z)`` for odd ``m >= 1`` by upward recurrence in the order."""
    k_prev = np.sqrt(np.pi / (2.0 * z))  # order 1/2
    if m == 1:
        return k_prev
    k = k_prev * (1.0 + 1.0 / z)  # order 3/2
    nu = 1.5
    for _ in range((m - 3) // 2):
        k_prev, k = k, k_prev + (2.0 * nu / z) * k
        nu += 1.0
    return k


def bessel_k_half(order_num: int, z):
    """Modified Bessel function of the third kind ``K_{order_num/2}(z)``.

    Only half-integer orders are supported (``order_num`` odd); negative orders
    use ``K_{-nu} = K_nu``.
    """
    m = int(order_num)
    if m != order_num or m % 2 == 0:
        raise ValueError(f"order numerator must be an odd integer, got {order_num!r}")
    z = np.asarray(z, dtype=float)
    if np.any(~(z > 0)):
        raise ValueError("bessel_k_half requires z > 0")
    with np.errstate(under="ignore"):
        out = _scaled_bessel_k_half(abs(m), z) * np.exp(-z)
    return out[()] if out.ndim == 0 else out


def log_bessel_k(order_num: int, z):
    """``log K_{order_num/2}(z)`` without overflow or underflow.

    Odd numerators go through the elementary closed form; even numerators
    (integer order, e.g. the two-cell density) use scipy's scaled ``kve``.
    """
    m = abs(int(order_num))
    z = np.asarray(z, dtype=float)
    if np.any(~(z > 0)):
        raise ValueError("log_bessel_k requires z > 0")
    if m % 2:
        out = np.log(_scaled_bessel_k_half(m, z)) - z
    else:
        out = np.log(special.kve(m // 2, z)) - z
    return out[()] if out.ndim == 0 else out


def _scaled_gamma_neg2_cf(a: float) -> float:
    """``e^a Gamma(-2, a)`` by the Legendre continued fraction (modified Lentz)."""
    s = -2.0
    tiny = 1e-300
    b = a + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 500):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h / (a * a)


def scaled_upper_gamma_neg2(a: float) -> float:
    """``e^a Gamma(-2, a)``.

    Two downward steps of ``Gamma(s, x) = (Gamma(s+1, x) - x^s e^-x) / s`` from
    ``Gamma(0, a) = E1(a)``, carried out on the ``e^a``-scaled values.
    """
    a = float(a)
    if not a > 0:
        raise ValueError(f"Gamma(-2, a) diverges for a <= 0, got {a!r}")
    if a > _RECURRENCE_LIMIT:
        return _scaled_gamma_neg2_cf(a)
    g0 = special.exp1(a) * math.exp(a)
    g1 = (g0 - 1.0 / a) / -1.0
    return (g1 - 1.0 / (a * a)) / -2.0


def upper_gamma_neg2(a: float) -> float:
    """Upper incomplete gamma ``Gamma(-2, a) = int_a^inf t^-3 e^-t dt``."""
    g = scaled_upper_gamma_neg2(a)
    return g * math.exp(-a)


def xi(a: float) -> float:
    """``1 / (a^2 e^a Gamma(-2, a))``, the variance scale of the process."""
    a = check_concentration(a)
    return 1.0 / (a * a * scaled_upper_gamma_neg2(a))


_ASYMPTOTIC_FROM = 1000.0


def _tail_bracket(x):
    # sqrt(2/pi) x^-1/2 - erfcx(sqrt(x/2)) = e^{x/2} L(x) / a
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < _ASYMPTOTIC_FROM
    xs = x[small]
    out[small] = _SQRT_2_OVER_PI / np.sqrt(xs) - special.erfcx(np.sqrt(0.5 * xs))
    # the difference cancels for large x; sum the erfcx asymptotic series instead
    xl = x[~small]
    term = 1.0 / xl
    acc = term.copy()
    for k in range(2, 12):
        term = term * -(2 * k - 1) / xl
        acc += term
    out[~small] = _SQRT_2_OVER_PI / np.sqrt(xl) * acc
    return out


def log_levy_tail(a: float, x):
    a = check_concentration(a)
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError("levy_tail requires x > 0")
    out = math.log(a) - 0.5 * x + np.log(_tail_bracket(x))
    return out[()] if out.ndim == 0 else out


def levy_tail(a: float, x):
    """Expected number of jumps larger than ``x`` of the inverse-Gaussian subordinator."""
    with np.errstate(under="ignore"):
        return np.exp(log_levy_tail(a, x))


def _log_tail_and_slope(a: float):
    log_a = math.log(a)

    def fun(y):
        x = np.exp(y)
        br = _tail_bracket(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            h = log_a - 0.5 * x + np.log(br)
            # d log L / d log x = -x * a/sqrt(2 pi) e^{-x/2} x^{-3/2} / L
            dh = -_INV_SQRT_2PI / (np.sqrt(x) * br)
        return h, dh

    return fun


def levy_tail_inverse(a: float, u, x0=None):
    """The unique ``x`` with ``L(x) = u``; elementwise for array ``u``.

    ``x0`` overrides the starting guess of the bracket search (default 1).
    """
    a = check_concentration(a)
    u = np.asarray(u, dtype=float)
    if np.any(~(u > 0)):
        raise ValueError("levy_tail_inverse requires u > 0")
    out = invert_decreasing(_log_tail_and_slope(a), np.log(u), 1.0 if x0 is None else x0)
    return out[()] if out.ndim == 0 else out


@lru_cache(maxsize=64)
def _tail_table(a: float) -> TableGuess:
    return TableGuess(_log_tail_and_slope(a), 1e-300, 1400.0)


def levy_tail_inverse_guess(a: float, u):
    """Tabulated starting point for :func:`levy_tail_inverse`."""
    a = check_concentration(a)
    return _tail_table(a)(np.log(np.asarray(u, dtype=float)))
