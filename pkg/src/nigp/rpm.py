"""Random probability measures: base measures, discrete realizations, samplers.

Three samplers produce a :class:`DiscreteMeasure`:

* :func:`sample_nigp_finite` normalizes the ``n``-term sum
  ``sum_i G_n^{-1}(Gamma_i / Gamma_{n+1}) delta_{theta_i}``;
* :func:`sample_nigp_ferguson_klass` normalizes the truncated series
  ``sum_i L^{-1}(Gamma_i) delta_{theta_i}``;
* :func:`sample_dirichlet_stick` is a truncated stick-breaking Dirichlet process,
  kept as a comparison baseline.

Atoms are kept in arrival order, so finite-sum weights come out strictly
decreasing. :func:`sample_partition_masses` draws the exact finite-dimensional
law of the process over a partition (independent inverse-Gaussian increments,
normalized), which is what the large-``a`` experiments use.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special

from .dist import IgParams, ig_inverse_guess, ig_sample_array, ig_survival_inverse
from .roots import RootFindingError
from .specfun import check_concentration, levy_tail_inverse, levy_tail_inverse_guess

__all__ = [
    "BaseMeasure",
    "DiscreteMeasure",
    "GammaArrivals",
    "TruncationRule",
    "TruncationBudgetExceeded",
    "gamma_arrivals",
    "finite_sum_jumps",
    "ferguson_klass_jumps",
    "sample_nigp_finite",
    "sample_nigp_ferguson_klass",
    "sample_dirichlet_stick",
    "sample_partition_masses",
    "measure_cdf",
    "measure_quantile",
    "sup_distance",
    "WEIGHT_SUM_TOL",
]

WEIGHT_SUM_TOL = 1e-12


class TruncationBudgetExceeded(RuntimeError):
    pass


# -- base measures -----------------------------------------------------------


@dataclass(frozen=True)
class BaseMeasure:
    """Centering distribution ``H`` seen through its cdf, quantile and pdf.

    Draws are ``quantile(U)`` with ``U`` uniform, so a measure is fully
    described by ``kind`` and ``params`` for serialization.
    """

    kind: str
    cdf: Callable
    quantile: Callable
    pdf: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def sample(self, rng: np.random.Generator, size=None):
        return self.quantile(rng.random(size))

    def mass(self, lo=None, hi=None) -> float:
        """``H((lo, hi])``; ``None`` stands for an infinite endpoint."""
        upper = 1.0 if hi is None else float(self.cdf(hi))
        lower = 0.0 if lo is None else float(self.cdf(lo))
        return upper - lower

    @classmethod
    def uniform(cls, low: float = 0.0, high: float = 1.0) -> "BaseMeasure":
        low, high = float(low), float(high)
        if not high > low:
            raise ValueError("uniform base measure needs high > low")
        width = high - low

        def cdf(x):
            return np.clip((np.asarray(x, dtype=float) - low) / width, 0.0, 1.0)

        def quantile(u):
            return low + width * np.asarray(u, dtype=float)

        def pdf(x):
            x = np.asarray(x, dtype=float)
            return np.where((x >= low) & (x <= high), 1.0 / width, 0.0)

        return cls("uniform", cdf, quantile, pdf, {"low": low, "high": high})

    @classmethod
    def normal(cls, loc: float = 0.0, scale: float = 1.0) -> "BaseMeasure":
        loc, scale = float(loc), float(scale)
        if not scale > 0:
            raise ValueError("normal base measure needs scale > 0")

        def cdf(x):
            return special.ndtr((np.asarray(x, dtype=float) - loc) / scale)

        def quantile(u):
            return loc + scale * special.ndtri(np.asarray(u, dtype=float))

        def pdf(x):
            z = (np.asarray(x, dtype=float) - loc) / scale
            return np.exp(-0.5 * z * z) / (scale * math.sqrt(2 * math.pi))

        return cls("normal", cdf, quantile, pdf, {"loc": loc, "scale": scale})

    @classmethod
    def from_dict(cls, spec: dict) -> "BaseMeasure":
        spec = dict(spec)
        kind = spec.pop("kind", "uniform")
        if kind == "uniform":
            return cls.uniform(**spec)
        if kind == "normal":
            return cls.normal(**spec)
        raise ValueError(f"unknown base measure kind {kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


# -- discrete measures -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """A finite list of atoms with nonnegative weights summing to one."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float)
        weights = np.array(self.weights, dtype=float)
        if atoms.ndim != 1 or atoms.shape != weights.shape:
            raise ValueError("atoms and weights must be 1-d arrays of equal length")
        if atoms.size == 0:
            raise ValueError("a discrete measure needs at least one atom")
        if np.any(~(weights >= 0)):
            raise ValueError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {weights.sum()!r}, not 1")
        atoms.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.atoms.size

    def mass(self, lo=None, hi=None) -> float:
        """``P((lo, hi])``."""
        inside = np.ones(self.atoms.size, dtype=bool)
        if lo is not None:
            inside &= self.atoms > lo
        if hi is not None:
            inside &= self.atoms <= hi
        return float(self.weights[inside].sum())

    def to_rows(self):
        return list(zip(self.atoms.tolist(), self.weights.tolist()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["atom", "weight"])
        for atom, weight in self.to_rows():
            writer.writerow([repr(atom), repr(weight)])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"atoms": self.atoms.tolist(), "weights": self.weights.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "DiscreteMeasure":
        data = json.loads(text)
        return cls(np.array(data["atoms"]), np.array(data["weights"]))

    @classmethod
    def from_csv(cls, text: str) -> "DiscreteMeasure":
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls(np.array([float(r["atom"]) for r in rows]), np.array([float(r["weight"]) for r in rows]))


def _normalize(jumps: np.ndarray) -> np.ndarray:
    return jumps / jumps.sum(axis=-1, keepdims=True)


def measure_cdf(P: DiscreteMeasure, x):
    """``P((-inf, x])``, right-continuous; vectorized over ``x``."""
    order = np.argsort(P.atoms, kind="stable")
    atoms = P.atoms[order]
    cum = np.concatenate([[0.0], np.cumsum(P.weights[order])])
    idx = np.searchsorted(atoms, np.asarray(x, dtype=float), side="right")
    # past the last atom the mass is exactly 1, whatever the rounding of the cumsum
    out = np.where(idx == atoms.size, 1.0, np.minimum(cum[idx], 1.0))
    return out[()] if np.ndim(out) == 0 else out


def measure_quantile(P: DiscreteMeasure, t):
    """Generalized inverse ``inf{x : P((-inf, x]) >= t}`` for ``0 < t < 1``."""
    t = np.asarray(t, dtype=float)
    if np.any(~((t > 0) & (t < 1))):
        raise ValueError("quantile level must lie in (0, 1)")
    order = np.argsort(P.atoms, kind="stable")
    atoms = P.atoms[order]
    cum = np.cumsum(P.weights[order])
    idx = np.minimum(np.searchsorted(cum, t, side="left"), atoms.size - 1)
    out = atoms[idx]
    return out[()] if out.ndim == 0 else out


def sup_distance(P: DiscreteMeasure, H: BaseMeasure) -> float:
    """Kolmogorov distance ``sup_x |P((-inf, x]) - H(x)|`` for continuous ``H``."""
    return float(sup_distance_batch(P.atoms[None, :], P.weights[None, :], H)[0])


def sup_distance_batch(atoms: np.ndarray, weights: np.ndarray, H: BaseMeasure) -> np.ndarray:
    """Row-wise Kolmogorov distance for stacked draws of equal length."""
    order = np.argsort(atoms, axis=-1, kind="stable")
    xs = np.take_along_axis(atoms, order, axis=-1)
    cum = np.cumsum(np.take_along_axis(weights, order, axis=-1), axis=-1)
    left = cum - np.take_along_axis(weights, order, axis=-1)
    h = H.cdf(xs)
    # the step function is flat between atoms and H is monotone, so the sup is
    # attained at a left or right limit of some atom
    return np.maximum(np.abs(cum - h), np.abs(left - h)).max(axis=-1)


def batch_quantile(atoms: np.ndarray, weights: np.ndarray, levels) -> np.ndarray:
    """Row-wise generalized inverse at each of ``levels``; shape (rows, levels)."""
    order = np.argsort(atoms, axis=-1, kind="stable")
    xs = np.take_along_axis(atoms, order, axis=-1)
    cum = np.cumsum(np.take_along_axis(weights, order, axis=-1), axis=-1)
    out = np.empty((atoms.shape[0], len(levels)))
    for j, t in enumerate(levels):
        idx = np.minimum((cum < t).sum(axis=-1), atoms.shape[-1] - 1)
        out[:, j] = np.take_along_axis(xs, idx[:, None], axis=-1)[:, 0]
    return out


# -- arrivals and truncation ---------------------------------------------------


@dataclass(frozen=True)
class GammaArrivals:
    """Arrival times ``Gamma_i = E_1 + ... + E_i`` of a unit-rate Poisson process."""

    increments: np.ndarray

    @property
    def gammas(self) -> np.ndarray:
        return np.cumsum(self.increments, axis=-1)


def gamma_arrivals(n: int, rng: np.random.Generator) -> GammaArrivals:
    """The first ``n + 1`` arrivals."""
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    return GammaArrivals(rng.standard_exponential(int(n) + 1))


@dataclass(frozen=True)
class TruncationRule:
    """Stop after ``n_jumps`` terms, or once the last term's share of the
    running total falls below ``rel_tol``; never go past ``cap`` terms."""

    n_jumps: Optional[int] = None
    rel_tol: float = 1e-8
    cap: int = 100_000

    def __post_init__(self):
        if self.n_jumps is not None and not (1 <= self.n_jumps <= self.cap):
            raise ValueError("n_jumps must lie in [1, cap]")
        if self.n_jumps is None and not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")

    @classmethod
    def from_dict(cls, spec: Optional[dict]) -> "TruncationRule":
        return cls(**(spec or {}))

    def to_dict(self) -> dict:
        return {"n_jumps": self.n_jumps, "rel_tol": self.rel_tol, "cap": self.cap}


# -- finite-sum representation ---------------------------------------------------


def finite_sum_jumps(a: float, n: int, increments: np.ndarray) -> np.ndarray:
    """Unnormalized terms ``G_n^{-1}(Gamma_i / Gamma_{n+1})``, ``i = 1..n``.

    ``increments`` holds ``E_1, ..., E_m`` (``m >= n + 1``) along the last axis;
    extra leading axes are independent draws solved together. The complement
    ``1 - Gamma_i / Gamma_{n+1}`` is formed from the tail sum of increments so
    that terms near ``i = n`` keep their relative precision.
    """
    increments = np.asarray(increments, dtype=float)[..., : n + 1]
    if increments.shape[-1] != n + 1:
        raise ValueError(f"need at least n + 1 = {n + 1} increments")
    gam = np.cumsum(increments, axis=-1)
    total = gam[..., -1:]
    tail = np.cumsum(increments[..., ::-1], axis=-1)[..., ::-1][..., 1:]
    p = gam[..., :-1] / total
    q = tail / total
    params = IgParams.for_finite_sum(a, n)
    try:
        return ig_survival_inverse(params, p, q, x0=ig_inverse_guess(params, p, q))
    except RootFindingError as exc:
        flat = exc.indices[:1]
        i = int(np.unravel_index(flat, p.shape)[-1][0]) + 1 if flat.size else -1
        ratio = float(p.ravel()[flat[0]]) if flat.size else math.nan
        raise RootFindingError(f"G_n inverse failed at i={i}, Gamma_i/Gamma_(n+1)={ratio!r}: {exc}", exc.indices, exc.targets) from exc


def sample_nigp_finite(a: float, n: int, H: BaseMeasure, rng: np.random.Generator) -> DiscreteMeasure:
    """One draw of the normalized ``n``-term finite-sum representation."""
    a = check_concentration(a)
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    arrivals = gamma_arrivals(n, rng)
    atoms = H.sample(rng, n)
    jumps = finite_sum_jumps(a, n, arrivals.increments)
    return DiscreteMeasure(atoms, _normalize(jumps))


# -- Ferguson-Klass series ---------------------------------------------------------


def ferguson_klass_jumps(a: float, gammas: np.ndarray) -> np.ndarray:
    """``L^{-1}(Gamma_i)`` for given arrival times (decreasing in ``i``)."""
    gammas = np.asarray(gammas, dtype=float)
    return levy_tail_inverse(a, gammas, x0=levy_tail_inverse_guess(a, gammas))


def _truncation_index(jumps: np.ndarray, rel_tol: float) -> Optional[int]:
    share = jumps / np.cumsum(jumps)
    hit = np.flatnonzero(share < rel_tol)
    return int(hit[0]) + 1 if hit.size else None


def sample_nigp_ferguson_klass(
    a: float, H: BaseMeasure, truncation: TruncationRule, rng: np.random.Generator
) -> DiscreteMeasure:
    """One draw of the truncated, normalized Ferguson-Klass series."""
    a = check_concentration(a)
    if truncation.n_jumps is not None:
        increments = rng.standard_exponential(truncation.n_jumps)
        jumps = ferguson_klass_jumps(a, np.cumsum(increments))
    else:
        increments = np.empty(0)
        jumps = np.empty(0)
        block = 1024
        while True:
            take = min(block, truncation.cap - increments.size)
            if take <= 0:
                raise TruncationBudgetExceeded(
                    f"relative tail share {truncation.rel_tol:g} not reached within {truncation.cap} jumps"
                )
            start = increments.sum()
            new = rng.standard_exponential(take)
            increments = np.concatenate([increments, new])
            jumps = np.concatenate([jumps, ferguson_klass_jumps(a, start + np.cumsum(new))])
            stop = _truncation_index(jumps, truncation.rel_tol)
            if stop is not None:
                jumps = jumps[:stop]
                break
            block *= 2
    atoms = H.sample(rng, jumps.size)
    return DiscreteMeasure(atoms, _normalize(jumps))


# -- Dirichlet baseline ------------------------------------------------------------


def sample_dirichlet_stick(
    a: float, H: BaseMeasure, truncation: TruncationRule, rng: np.random.Generator
) -> DiscreteMeasure:
    """Truncated stick-breaking draw of a Dirichlet process; the residual mass
    goes to the last stick."""
    a = check_concentration(a)
    if truncation.n_jumps is not None:
        v = rng.beta(1.0, a, truncation.n_jumps)
    else:
        v = np.empty(0)
        block = 256
        while True:
            take = min(block, truncation.cap - v.size)
            if take <= 0:
                raise TruncationBudgetExceeded(
                    f"residual mass {truncation.rel_tol:g} not reached within {truncation.cap} sticks"
                )
            v = np.concatenate([v, rng.beta(1.0, a, take)])
            residual = np.exp(np.cumsum(np.log1p(-v)))
            hit = np.flatnonzero(residual < truncation.rel_tol)
            if hit.size:
                v = v[: hit[0] + 1]
                break
            block *= 2
    log_left = np.concatenate([[0.0], np.cumsum(np.log1p(-v))[:-1]])
    weights = v * np.exp(log_left)
    weights[-1] += 1.0 - weights.sum()
    atoms = H.sample(rng, weights.size)
    return DiscreteMeasure(atoms, weights)


# -- exact finite-dimensional law ------------------------------------------------------


def sample_partition_masses(a: float, masses, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw ``(P(A_1), ..., P(A_m))`` for a partition with ``H(A_i) = masses[i]``.

    Uses independent ``IG(gamma_i, gamma_i^2)`` increments with
    ``gamma_i = a H(A_i)`` normalized by their sum; cells of zero base mass get
    zero mass. ``size`` prepends independent draws.
    """
    a = check_concentration(a)
    masses = np.asarray(masses, dtype=float)
    if np.any(masses < 0) or abs(masses.sum() - 1.0) > 1e-9:
        raise ValueError("partition masses must be nonnegative and sum to 1")
    shape = (() if size is None else tuple(np.atleast_1d(size))) + masses.shape
    g = np.broadcast_to(a * masses, shape)
    pos = g > 0
    incr = np.zeros(shape)
    incr[pos] = ig_sample_array(g[pos], g[pos] ** 2, rng)
    return incr / incr.sum(axis=-1, keepdims=True)
