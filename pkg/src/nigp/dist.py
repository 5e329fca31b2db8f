"""Inverse-Gaussian building blocks and the normalized inverse-Gaussian density.

The finite-sum sampler uses ``X_n ~ IG(mean=a/n, shape=(a/n)^2)``, whose density

    a/(n sqrt(2 pi)) t^(-3/2) exp(-(a^2/(n^2 t) + t)/2 + a/n)

is the standard ``IG(mu, lam)`` density with ``lam = mu^2``. Survival and
distribution functions are evaluated in log space with the scaled
complementary error function, so that ``exp(2 lam / mu)`` never appears on its
own and both tails keep full relative accuracy.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass

import numpy as np
from scipy import special

from .roots import TableGuess, invert_decreasing
from .specfun import check_concentration, log_bessel_k

__all__ = [
    "IgParams",
    "NigParams",
    "ig_log_pdf",
    "ig_log_survival",
    "ig_log_cdf",
    "ig_survival",
    "ig_cdf",
    "ig_survival_inverse",
    "ig_inverse_guess",
    "ig_sample",
    "nig_log_density",
    "SIMPLEX_TOL",
]

SIMPLEX_TOL = 1e-12
_LOG_HALF = math.log(0.5)
_SQRT_HALF = math.sqrt(0.5)


@dataclass(frozen=True)
class IgParams:
    """Inverse-Gaussian law with mean ``mu`` and shape ``lam``."""

    mu: float
    lam: float

    def __post_init__(self):
        if not (self.mu > 0 and self.lam > 0) or not (math.isfinite(self.mu) and math.isfinite(self.lam)):
            raise ValueError(f"IG parameters must be positive and finite, got mu={self.mu!r}, lam={self.lam!r}")

    @classmethod
    def for_finite_sum(cls, a: float, n: int) -> "IgParams":
        """``IG(a/n, (a/n)^2)``, the law of a single term of the ``n``-term sum."""
        a = check_concentration(a)
        if int(n) != n or n < 1:
            raise ValueError(f"n must be a positive integer, got {n!r}")
        mu = a / n
        return cls(mu, mu * mu)

    @property
    def variance(self) -> float:
        return self.mu**3 / self.lam


@dataclass(frozen=True)
class NigParams:
    """Parameters ``(gamma_1, ..., gamma_m)`` of the normalized inverse-Gaussian law."""

    gamma: tuple

    def __post_init__(self):
        g = tuple(float(v) for v in self.gamma)
        if len(g) < 2:
            raise ValueError("normalized inverse-Gaussian needs m >= 2 cells")
        if any(not (v > 0 and math.isfinite(v)) for v in g):
            raise ValueError(f"all gamma_i must be positive, got {g!r}")
        object.__setattr__(self, "gamma", g)

    @classmethod
    def from_partition(cls, a: float, masses) -> "NigParams":
        """``gamma_i = a * H(A_i)`` for a partition with base masses ``H(A_i)``."""
        a = check_concentration(a)
        return cls(tuple(a * float(h) for h in masses))

    @property
    def m(self) -> int:
        return len(self.gamma)


def _split_args(params: IgParams, x):
    sl = math.sqrt(params.lam)
    sx = np.sqrt(x)
    # y1 = sqrt(lam/x)(x/mu - 1), y2 = sqrt(lam/x)(x/mu + 1); y2^2/2 = y1^2/2 + 2 lam/mu
    y1 = sl * (x - params.mu) / (params.mu * sx)
    y2 = sl * (x + params.mu) / (params.mu * sx)
    return y1, y2


def _log_tails(params: IgParams, x):
    """Return ``(log S(x), log F(x))`` for ``x > 0``."""
    y1, y2 = _split_args(params, x)
    e2 = special.erfcx(y2 * _SQRT_HALF)
    upper = y1 >= 0
    log_s = np.empty_like(x)
    log_f = np.empty_like(x)
    with np.errstate(divide="ignore"):
        # x >= mu: S = e^{-y1^2/2} (erfcx(y1/sqrt2) - erfcx(y2/sqrt2)) / 2
        yu = y1[upper]
        ls = -0.5 * yu * yu + _LOG_HALF + np.log(special.erfcx(yu * _SQRT_HALF) - e2[upper])
        log_s[upper] = ls
        log_f[upper] = np.log1p(-np.exp(ls))
        # x < mu: F = e^{-y1^2/2} (erfcx(-y1/sqrt2) + erfcx(y2/sqrt2)) / 2
        yl = y1[~upper]
        lf = -0.5 * yl * yl + _LOG_HALF + np.log(special.erfcx(-yl * _SQRT_HALF) + e2[~upper])
        log_f[~upper] = lf
        log_s[~upper] = np.log1p(-np.exp(lf))
    return log_s, log_f


def _check_x(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x >= 0)):
        raise ValueError("inverse-Gaussian functions require x >= 0")
    return x


def ig_log_pdf(params: IgParams, x):
    x = _check_x(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        y1, _ = _split_args(params, x)
        out = 0.5 * math.log(params.lam / (2 * math.pi)) - 1.5 * np.log(x) - 0.5 * y1 * y1
    out = np.where(x > 0, out, -np.inf)
    return out[()] if out.ndim == 0 else out


def ig_log_survival(params: IgParams, x):
    x = _check_x(x)
    pos = x > 0
    out = np.zeros_like(x)
    if np.any(pos):
        out[pos] = _log_tails(params, x[pos])[0]
    return out[()] if out.ndim == 0 else out


def ig_log_cdf(params: IgParams, x):
    x = _check_x(x)
    pos = x > 0
    out = np.full_like(x, -np.inf)
    if np.any(pos):
        out[pos] = _log_tails(params, x[pos])[1]
    return out[()] if out.ndim == 0 else out


def ig_survival(params: IgParams, x):
    """``Pr(X > x)`` for ``X ~ IG(mu, lam)``; equals 1 at ``x = 0``."""
    with np.errstate(under="ignore"):
        return np.exp(ig_log_survival(params, x))


def ig_cdf(params: IgParams, x):
    with np.errstate(under="ignore"):
        return np.exp(ig_log_cdf(params, x))


def _log_odds_and_slope(params: IgParams):
    half_log_lam = 0.5 * math.log(params.lam / (2 * math.pi))

    def fun(y):
        x = np.exp(y)
        log_s, log_f = _log_tails(params, x)
        y1, _ = _split_args(params, x)
        # log(x * pdf(x)) = log sqrt(lam / (2 pi x)) - y1^2/2
        log_xpdf = half_log_lam - 0.5 * y - 0.5 * y1 * y1
        with np.errstate(over="ignore", invalid="ignore"):
            slope = -(np.exp(log_xpdf - log_s) + np.exp(log_xpdf - log_f))
        return log_s - log_f, slope

    return fun


@lru_cache(maxsize=64)
def _inverse_table(params: IgParams) -> TableGuess:
    mu, lam = params.mu, params.lam
    # log F ~ -lam/(2x) on the left, log S ~ -lam x/(2 mu^2) on the right
    x_lo = min(mu, lam) / 2000.0
    x_hi = max(mu, 2000.0 * mu * mu / lam)
    return TableGuess(_log_odds_and_slope(params), x_lo, x_hi)


def ig_inverse_guess(params: IgParams, p, q=None):
    """Tabulated starting point for :func:`ig_survival_inverse`."""
    p = np.asarray(p, dtype=float)
    q = 1.0 - p if q is None else np.asarray(q, dtype=float)
    return _inverse_table(params)(np.log(p) - np.log(q))


def ig_survival_inverse(params: IgParams, p, q=None, x0=None):
    """The unique ``x`` with ``Pr(X > x) = p``.

    ``q = 1 - p`` may be passed explicitly when the caller can form it without
    cancellation; the solve runs on the log-odds ``log S - log F`` so both tails
    keep relative precision.
    """
    p = np.asarray(p, dtype=float)
    if q is None:
        if np.any(~((p > 0) & (p < 1))):
            raise ValueError("ig_survival_inverse requires 0 < p < 1")
        q = 1.0 - p
    else:
        # p may round to 1 when the exact complement q is tiny
        q = np.asarray(q, dtype=float)
        if np.any(~((p > 0) & (q > 0) & (p <= 1) & (q <= 1))):
            raise ValueError("ig_survival_inverse requires 0 < p, q <= 1")
    target = np.log(p) - np.log(q)
    out = invert_decreasing(_log_odds_and_slope(params), target, 1.0 if x0 is None else x0)
    return out[()] if out.ndim == 0 else out


def ig_sample(params: IgParams, rng: np.random.Generator, size=None):
    """Draw from ``IG(mu, lam)`` by the transformation method.

    The chi-square variate ``nu^2`` determines two candidate roots; the smaller
    is kept with probability ``mu / (mu + root)`` using an independent uniform.
    """
    mu, lam = params.mu, params.lam
    nu = rng.standard_normal(size)
    u = rng.random(size)
    return _transform(mu, lam, nu * nu, u)


def _transform(mu, lam, y, u):
    w = mu * y
    # smaller root of the quadratic, mu + (mu/2lam)(w - sqrt(4 lam w + w^2)),
    # rewritten without cancellation
    x = 2.0 * lam * mu / (2.0 * lam + w + np.sqrt(4.0 * lam * w + w * w))
    return np.where(u <= mu / (mu + x), x, mu * mu / x)


def ig_sample_array(mu, lam, rng: np.random.Generator):
    """Vectorized draws with per-element ``mu`` and ``lam`` arrays."""
    mu = np.asarray(mu, dtype=float)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), mu.shape)
    nu = rng.standard_normal(mu.shape)
    u = rng.random(mu.shape)
    return _transform(mu, lam, nu * nu, u)


def nig_log_density(params: NigParams, z) -> float:
    """Log of the normalized inverse-Gaussian density at ``z``.

    Returns ``-inf`` off the open simplex (all ``z_i > 0`` and ``sum z = 1``
    within ``SIMPLEX_TOL``). The exponential prefactor is ``exp(sum gamma_i)``
    over the ``m`` cells.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or z.size != params.m:
        raise ValueError(f"z must be a vector of length {params.m}")
    if np.any(~(z > 0)) or abs(z.sum() - 1.0) > SIMPLEX_TOL:
        return -math.inf
    g = np.asarray(params.gamma)
    m = params.m
    s = float(np.sum(g * g / z))
    rs = math.sqrt(s)
    return (
        float(g.sum())
        + float(np.log(g).sum())
        - (m / 2 - 1) * math.log(2.0)
        - (m / 2) * math.log(math.pi)
        + float(log_bessel_k(m, rs))
        - (m / 4) * math.log(s)
        - 1.5 * float(np.log(z).sum())
    )
