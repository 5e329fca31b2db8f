"""Seeded Monte-Carlo checks of the large-``a`` behaviour of the process.

Every check takes an :class:`ExperimentConfig` and returns an
:class:`ExperimentReport` whose comparisons pair an estimate (with its Monte
Carlo standard error) with an analytic target and a tolerance. Gating
comparisons decide ``report.passed``; diagnostic ones (``gating=False``) carry
finite-``a`` or finite-``n`` targets that explain residual bias.

Random streams
--------------
Replicate ``r`` of stream ``s`` draws from
``np.random.default_rng(SeedSequence(seed, spawn_key=(s, r)))``. Streams are
independent of how replicates are chunked or spread over workers, and adding
replicates never changes earlier ones.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np
from scipy import integrate, stats

from . import __version__
from .dist import IgParams, NigParams, ig_survival, ig_survival_inverse, nig_log_density
from .rpm import (
    BaseMeasure,
    TruncationBudgetExceeded,
    TruncationRule,
    WEIGHT_SUM_TOL,
    batch_quantile,
    ferguson_klass_jumps,
    finite_sum_jumps,
    sample_dirichlet_stick,
    sample_nigp_ferguson_klass,
    sample_partition_masses,
    sup_distance_batch,
    _truncation_index,
)
from .specfun import levy_tail, levy_tail_inverse, xi

__all__ = [
    "SAMPLERS",
    "CHECKS",
    "ConfigError",
    "ExperimentConfig",
    "Comparison",
    "ExperimentReport",
    "replicate_rng",
    "check_moments",
    "check_clt_covariance",
    "check_quantile_process",
    "check_median_iqr",
    "check_glivenko_cantelli",
    "check_representation_convergence",
    "run_check",
]

SAMPLERS = ("finite_sum", "ferguson_klass", "dirichlet", "partition")
CONVERGENCE_QUANTITIES = ("tail", "inverse", "coupled", "ks")

# stream tags for replicate_rng
MAIN_STREAM = 0
KS_REFERENCE_STREAM = 1
COUPLED_STREAM = 2

_CHUNK_ELEMENTS = 2_000_000


class ConfigError(ValueError):
    """Invalid experiment configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def replicate_rng(seed: int, replicate: int, stream: int = MAIN_STREAM) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(replicate))))


@dataclass
class ExperimentConfig:
    """One Monte-Carlo experiment.

    ``grid`` depends on the check: ``[lo, hi]`` interval pairs (``None`` for an
    infinite end) for moments and Glivenko-Cantelli, evaluation points for the
    CLT check, probability levels for the quantile checks, and ``x`` points for
    the deterministic convergence curves. ``schedule`` is the ascending list of
    ``n`` in ``a = n^2 c`` for Glivenko-Cantelli, or of finite-sum sizes for
    the convergence check.
    """

    check: str = "moments"
    a: float = 100.0
    n: int = 1000
    replicates: int = 1000
    grid: list = field(default_factory=list)
    seed: int = 0
    sampler: str = "finite_sum"
    base: dict = field(default_factory=lambda: {"kind": "uniform", "low": 0.0, "high": 1.0})
    truncation: dict = field(default_factory=dict)
    c: Optional[float] = None
    schedule: list = field(default_factory=list)
    epsilons: list = field(default_factory=lambda: [0.05, 0.1, 0.2])
    curve_a: float = 1.0
    ks_draws: int = 2000
    partition_cells: int = 20000
    k_sigma: float = 4.0
    rel_tol: float = 0.10
    coupled: bool = True
    quantities: list = field(default_factory=lambda: list(CONVERGENCE_QUANTITIES))
    jobs: int = 1

    @classmethod
    def from_dict(cls, data: dict, path: str = "config") -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown field")
        cfg = cls(**data)
        cfg.validate(path)
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self, path: str = "config") -> None:
        if self.check not in CHECKS:
            raise ConfigError(f"{path}.check", f"unknown check {self.check!r}; expected one of {sorted(CHECKS)}")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"{path}.sampler", f"unknown sampler {self.sampler!r}")
        if not (isinstance(self.a, (int, float)) and self.a > 0):
            raise ConfigError(f"{path}.a", "must be a positive number")
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"{path}.n", "must be a positive integer")
        if int(self.replicates) != self.replicates or self.replicates < 100:
            raise ConfigError(f"{path}.replicates", "statistical checks need at least 100 replicates")
        if self.check != "glivenko_cantelli" and self.check != "representation_convergence" and not self.grid:
            raise ConfigError(f"{path}.grid", "must be nonempty")
        if self.check == "glivenko_cantelli":
            if self.c is None or not self.c > 0:
                raise ConfigError(f"{path}.c", "the a = n^2 c schedule needs c > 0")
            _check_schedule(self.schedule, f"{path}.schedule")
        if self.check == "representation_convergence":
            _check_schedule(self.schedule, f"{path}.schedule")
            if not self.coupled:
                raise ConfigError(f"{path}.coupled", "the pathwise comparison needs shared arrivals")
            bad = [q for q in self.quantities if q not in CONVERGENCE_QUANTITIES]
            if bad or not self.quantities:
                raise ConfigError(f"{path}.quantities", f"expected a nonempty subset of {list(CONVERGENCE_QUANTITIES)}")
        try:
            BaseMeasure.from_dict(self.base)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}.base", str(exc)) from exc
        try:
            TruncationRule.from_dict(self.truncation)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}.truncation", str(exc)) from exc
        if self.jobs < 1:
            raise ConfigError(f"{path}.jobs", "must be >= 1")


def _check_schedule(schedule, path):
    if len(schedule) < 2:
        raise ConfigError(path, "needs at least two entries")
    if any(int(v) != v or v < 1 for v in schedule):
        raise ConfigError(path, "entries must be positive integers")
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ConfigError(path, "must be strictly ascending")


@dataclass
class Comparison:
    statistic: str
    estimate: float
    se: float
    target: float
    tolerance: float
    rule: str
    passed: bool
    gating: bool = True


@dataclass
class ExperimentReport:
    check: str
    comparisons: list
    config: dict
    provenance: dict
    series: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.comparisons if c.gating)

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "passed": self.passed,
            "comparisons": [asdict(c) for c in self.comparisons],
            "series": [list(row) for row in self.series],
            "config": self.config,
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_rows(self):
        return [(self.check, c.statistic, c.estimate, c.se, c.target, c.passed) for c in self.comparisons]

    def comparison(self, statistic: str) -> Comparison:
        for c in self.comparisons:
            if c.statistic == statistic:
                return c
        raise KeyError(statistic)


# -- comparison helpers --------------------------------------------------------


def _within_se(name, est, se, target, k, gating=True):
    tol = k * se
    return Comparison(name, float(est), float(se), float(target), float(tol), f"|est-target|<={k:g}se", bool(abs(est - target) <= tol), gating)


def _within_rel(name, est, se, target, rel, gating=True):
    tol = rel * abs(target)
    return Comparison(name, float(est), float(se), float(target), float(tol), f"|est-target|<={rel:g}|target|", bool(abs(est - target) <= tol), gating)


def _within_rel_or_se(name, est, se, target, rel, k, gating=True):
    tol = max(rel * abs(target), k * se)
    return Comparison(name, float(est), float(se), float(target), float(tol), f"|est-target|<=max({rel:g}|target|,{k:g}se)", bool(abs(est - target) <= tol), gating)


def _at_most(name, est, bound, gating=True):
    return Comparison(name, float(est), 0.0, float(bound), 0.0, "est<=target", bool(est <= bound), gating)


def _strictly_decreasing(name, values, gating=True):
    values = [float(v) for v in values]
    ok = all(b < a for a, b in zip(values, values[1:]))
    worst = max(b - a for a, b in zip(values, values[1:]))
    return Comparison(name, worst, 0.0, 0.0, 0.0, "max successive change<0", bool(ok), gating)


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def _var_se(x):
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    v = float(np.mean(d * d) * x.size / (x.size - 1))
    return v, float(np.std(d * d, ddof=1) / math.sqrt(x.size))


def _cov_se(x, y):
    dx = x - x.mean()
    dy = y - y.mean()
    prod = dx * dy
    return float(prod.sum() / (x.size - 1)), float(np.std(prod, ddof=1) / math.sqrt(x.size))


def _skew_kurt(x):
    d = x - x.mean()
    m2 = np.mean(d * d)
    return float(np.mean(d**3) / m2**1.5), float(np.mean(d**4) / m2**2 - 3.0)


# -- replicate evaluation ------------------------------------------------------


@dataclass(frozen=True)
class _Request:
    """Functionals evaluated on every replicate draw."""

    sets: tuple = ()
    points: tuple = ()
    levels: tuple = ()
    sup: bool = False


def _set_mass_batch(atoms, weights, lo, hi):
    inside = np.ones(atoms.shape, dtype=bool)
    if lo is not None:
        inside &= atoms > lo
    if hi is not None:
        inside &= atoms <= hi
    return np.where(inside, weights, 0.0).sum(axis=-1)


def _functionals_from_atoms(atoms, weights, H, req: _Request) -> dict:
    out = {}
    if req.sets:
        out["sets"] = np.stack([_set_mass_batch(atoms, weights, lo, hi) for lo, hi in req.sets], axis=-1)
    if req.points:
        out["points"] = np.stack([_set_mass_batch(atoms, weights, None, t) for t in req.points], axis=-1)
    if req.levels:
        out["levels"] = batch_quantile(atoms, weights, req.levels)
    if req.sup:
        out["sup"] = sup_distance_batch(atoms, weights, H)
    return out


def _partition_functionals(a, H, req: _Request, rngs, cells) -> dict:
    """Exact finite-dimensional draws on a partition in probability scale.

    Set endpoints and points become cut points. When quantile levels or the sup
    distance are requested, a uniform grid of ``cells`` cells is added; quantiles
    are interpolated linearly inside the crossing cell.
    """
    cuts = set()
    for lo, hi in req.sets:
        cuts.update(float(H.cdf(v)) for v in (lo, hi) if v is not None)
    cuts.update(float(H.cdf(t)) for t in req.points)
    if req.levels or req.sup:
        cuts.update(np.linspace(0.0, 1.0, cells + 1).tolist())
    u = np.array(sorted(cuts | {0.0, 1.0}))
    masses = np.diff(u)
    cum = np.empty((len(rngs), u.size))
    cum[:, 0] = 0.0
    for r, rng in enumerate(rngs):
        cum[r, 1:] = np.cumsum(sample_partition_masses(a, masses, rng))
    cum[:, -1] = 1.0

    def at(v):
        return 0.0 if v is None else float(H.cdf(v))

    def col(v):
        return int(np.searchsorted(u, at(v)))

    out = {}
    if req.sets:
        out["sets"] = np.stack(
            [(cum[:, col(hi)] if hi is not None else 1.0) - (cum[:, col(lo)] if lo is not None else 0.0) for lo, hi in req.sets],
            axis=-1,
        )
    if req.points:
        out["points"] = np.stack([cum[:, col(t)] for t in req.points], axis=-1)
    if req.levels:
        qs = np.empty((len(rngs), len(req.levels)))
        for j, s in enumerate(req.levels):
            k = np.clip((cum < s).sum(axis=-1), 1, u.size - 1)
            c0 = np.take_along_axis(cum, (k - 1)[:, None], axis=-1)[:, 0]
            c1 = np.take_along_axis(cum, k[:, None], axis=-1)[:, 0]
            frac = np.where(c1 > c0, (s - c0) / np.where(c1 > c0, c1 - c0, 1.0), 1.0)
            qs[:, j] = H.quantile(u[k - 1] + frac * (u[k] - u[k - 1]))
        out["levels"] = qs
    if req.sup:
        out["sup"] = np.abs(cum - u).max(axis=-1)
    return out


def _evaluate_chunk(args) -> dict:
    sampler, a, n, base, truncation, cells, seed, stream, start, stop, req = args
    H = BaseMeasure.from_dict(base)
    rngs = [replicate_rng(seed, r, stream) for r in range(start, stop)]
    if sampler == "finite_sum":
        incr = np.empty((len(rngs), n + 1))
        atoms = np.empty((len(rngs), n))
        for i, rng in enumerate(rngs):
            # same consumption order as rpm.sample_nigp_finite
            incr[i] = rng.standard_exponential(n + 1)
            atoms[i] = H.sample(rng, n)
        weights = finite_sum_jumps(a, n, incr)
        weights /= weights.sum(axis=-1, keepdims=True)
        return _functionals_from_atoms(atoms, weights, H, req)
    if sampler == "partition":
        return _partition_functionals(a, H, req, rngs, cells)
    rule = TruncationRule.from_dict(truncation)
    draw = sample_nigp_ferguson_klass if sampler == "ferguson_klass" else sample_dirichlet_stick
    parts = []
    for rng in rngs:
        P = draw(a, H, rule, rng)
        parts.append(_functionals_from_atoms(P.atoms[None, :], P.weights[None, :], H, req))
    return {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}


def _replicates(cfg: ExperimentConfig, a: float, req: _Request, replicates=None, stream=MAIN_STREAM, sampler=None, n=None) -> dict:
    sampler = sampler or cfg.sampler
    n = int(n or cfg.n)
    replicates = int(replicates or cfg.replicates)
    width = n if sampler == "finite_sum" else (cfg.partition_cells if sampler == "partition" else 1000)
    chunk = max(1, min(replicates, _CHUNK_ELEMENTS // max(width, 1)))
    tasks = [
        (sampler, float(a), n, cfg.base, cfg.truncation, cfg.partition_cells, cfg.seed, stream, s, min(s + chunk, replicates), req)
        for s in range(0, replicates, chunk)
    ]
    if cfg.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            parts = list(pool.map(_evaluate_chunk, tasks))
    else:
        parts = [_evaluate_chunk(t) for t in tasks]
    return {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}


def _provenance(cfg: ExperimentConfig) -> dict:
    return {"seed": cfg.seed, "version": __version__, "stream_rule": "SeedSequence(seed, spawn_key=(stream, replicate))"}


def _interval(pair):
    lo, hi = pair
    return (None if lo is None else float(lo), None if hi is None else float(hi))


def _label(pair):
    lo, hi = pair
    return f"({'-inf' if lo is None else repr(lo)},{'inf' if hi is None else repr(hi)}]"


def _disjoint(s, t):
    lo1, hi1 = s
    lo2, hi2 = t
    lo1 = -math.inf if lo1 is None else lo1
    lo2 = -math.inf if lo2 is None else lo2
    hi1 = math.inf if hi1 is None else hi1
    hi2 = math.inf if hi2 is None else hi2
    return hi1 <= lo2 or hi2 <= lo1


def nig_two_cell_moments(gamma1: float, gamma2: float):
    """Exact mean, variance, skewness and excess kurtosis of ``Z_1`` under
    ``N-IG(gamma1, gamma2)`` by quadrature of the joint density."""
    params = NigParams((gamma1, gamma2))
    c = gamma1 / (gamma1 + gamma2)

    def f(z):
        return math.exp(nig_log_density(params, np.array([z, 1.0 - z])))

    sd = math.sqrt(c * (1 - c) / (gamma1 + gamma2))
    pts = [max(1e-12, c - 12 * sd), c, min(1 - 1e-12, c + 12 * sd)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        m = [integrate.quad(lambda z, k=k: (z - c) ** k * f(z), 0.0, 1.0, points=pts, limit=500, epsabs=1e-16, epsrel=1e-10)[0] for k in range(5)]
    mean = c + m[1] / m[0]
    var = m[2] / m[0] - (m[1] / m[0]) ** 2
    mu3 = m[3] / m[0] - 3 * (mean - c) * m[2] / m[0] + 2 * (mean - c) ** 3
    mu4 = m[4] / m[0] - 4 * (mean - c) * m[3] / m[0] + 6 * (mean - c) ** 2 * m[2] / m[0] - 3 * (mean - c) ** 4
    return mean, var, mu3 / var**1.5, mu4 / var**2 - 3.0


# -- checks ------------------------------------------------------------------------


def check_moments(cfg: ExperimentConfig) -> ExperimentReport:
    """Mean, variance and disjoint cross-moments of ``P(A)``."""
    sets = [_interval(p) for p in cfg.grid]
    pairs = [(i, j) for i in range(len(sets)) for j in range(i + 1, len(sets)) if _disjoint(sets[i], sets[j])]
    if not pairs:
        raise ConfigError("config.grid", "needs at least two disjoint sets")
    H = BaseMeasure.from_dict(cfg.base)
    a = float(cfg.a)
    x = xi(a)
    draws = _replicates(cfg, a, _Request(sets=tuple(sets)))["sets"]
    k, rel = cfg.k_sigma, cfg.rel_tol
    comps = []
    for i, s in enumerate(sets):
        h = H.mass(*s)
        p = draws[:, i]
        label = _label(s)
        if h == 0.0 or h == 1.0:
            # zero-mass sets carry no atoms; full-mass sets hold every weight, exact up to the weight-sum tolerance
            comps.append(_at_most(f"max|P{label}-H{label}|", float(np.abs(p - h).max()), 0.0 if h == 0.0 else WEIGHT_SUM_TOL))
            continue
        comps.append(_within_se(f"mean P{label}", *_mean_se(p), h, k))
        v, vse = _var_se(p)
        comps.append(_within_rel(f"var P{label}", v, vse, h * (1 - h) / x, rel))
        if cfg.sampler == "finite_sum":
            n = cfg.n
            comps.append(_within_rel(f"var P{label} finite-n", v, vse, h * (1 - h) * ((1 - 1 / n) / x + 1 / n), rel, gating=False))
    for i, j in pairs:
        hi_, hj = H.mass(*sets[i]), H.mass(*sets[j])
        prod = draws[:, i] * draws[:, j]
        est, se = _mean_se(prod)
        target = hi_ * hj * (x - 1) / x
        comps.append(_within_rel(f"E[P{_label(sets[i])}P{_label(sets[j])}]", est, se, target, rel))
        if cfg.sampler == "finite_sum":
            comps.append(_within_rel(f"E[P{_label(sets[i])}P{_label(sets[j])}] finite-n", est, se, target * (1 - 1 / cfg.n), rel, gating=False))
    return ExperimentReport("moments", comps, cfg.to_dict(), _provenance(cfg))


def check_clt_covariance(cfg: ExperimentConfig) -> ExperimentReport:
    """Finite-dimensional law of ``sqrt(a) (P(-inf, t] - H(t))`` against the
    Brownian-bridge kernel ``H(s ^ t) - H(s) H(t)``."""
    pts = sorted(float(t) for t in cfg.grid)
    H = BaseMeasure.from_dict(cfg.base)
    a = float(cfg.a)
    hs = [float(H.cdf(t)) for t in pts]
    draws = _replicates(cfg, a, _Request(points=tuple(pts)))["points"]
    D = math.sqrt(a) * (draws - np.array(hs))
    R = D.shape[0]
    k, rel = cfg.k_sigma, cfg.rel_tol
    scale = a / xi(a)
    comps = []
    for j, t in enumerate(pts):
        comps.append(_within_se(f"mean D({t!r})", *_mean_se(D[:, j]), 0.0, k))
    for i in range(len(pts)):
        for j in range(i, len(pts)):
            est, se = _cov_se(D[:, i], D[:, j])
            kernel = min(hs[i], hs[j]) - hs[i] * hs[j]
            name = f"cov D({pts[i]!r},{pts[j]!r})"
            comps.append(_within_rel_or_se(name, est, se, kernel, rel, k))
            comps.append(_within_rel_or_se(name + " finite-a", est, se, kernel * scale, rel, k, gating=False))
    skew_se, kurt_se = math.sqrt(6.0 / R), math.sqrt(24.0 / R)
    for j, t in enumerate(pts):
        skew, kurt = _skew_kurt(D[:, j])
        comps.append(_within_se(f"skew D({t!r})", skew, skew_se, 0.0, k))
        comps.append(_within_se(f"excess kurtosis D({t!r})", kurt, kurt_se, 0.0, k))
        if 0.0 < hs[j] < 1.0:
            _, _, s_exact, k_exact = nig_two_cell_moments(a * hs[j], a * (1 - hs[j]))
            comps.append(_within_se(f"skew D({t!r}) finite-a", skew, skew_se, s_exact, k, gating=False))
            comps.append(_within_se(f"excess kurtosis D({t!r}) finite-a", kurt, kurt_se, k_exact, k, gating=False))
    return ExperimentReport("clt_covariance", comps, cfg.to_dict(), _provenance(cfg))


def _require_pdf(H: BaseMeasure):
    if H.pdf is None:
        raise ConfigError("config.base", "quantile checks need a base measure with a pdf")


def check_quantile_process(cfg: ExperimentConfig) -> ExperimentReport:
    """Covariance of ``sqrt(a) (P^{-1}(s) - H^{-1}(s))`` against
    ``(s ^ t - s t) / (h(H^{-1}(s)) h(H^{-1}(t)))``."""
    levels = sorted(float(s) for s in cfg.grid)
    if any(not 0 < s < 1 for s in levels):
        raise ConfigError("config.grid", "quantile levels must lie in (0, 1)")
    H = BaseMeasure.from_dict(cfg.base)
    _require_pdf(H)
    a = float(cfg.a)
    hq = [float(H.pdf(H.quantile(s))) for s in levels]
    if min(hq) <= 0:
        raise ConfigError("config.base", "pdf vanishes at a requested quantile")
    draws = _replicates(cfg, a, _Request(levels=tuple(levels)))["levels"]
    Q = math.sqrt(a) * (draws - np.array([float(H.quantile(s)) for s in levels]))
    k, rel = cfg.k_sigma, cfg.rel_tol
    comps = [_within_se(f"mean Q({s!r})", *_mean_se(Q[:, j]), 0.0, k) for j, s in enumerate(levels)]
    for i in range(len(levels)):
        for j in range(i, len(levels)):
            s, t = levels[i], levels[j]
            target = (min(s, t) - s * t) / (hq[i] * hq[j])
            comps.append(_within_rel_or_se(f"cov Q({s!r},{t!r})", *_cov_se(Q[:, i], Q[:, j]), target, rel, k))
    return ExperimentReport("quantile_process", comps, cfg.to_dict(), _provenance(cfg))


def check_median_iqr(cfg: ExperimentConfig) -> ExperimentReport:
    """Limiting variances of the median and the interquartile range.

    The IQR target is the closed form ``3/h^2(q3) + 3/h^2(q1) - 2/(h(q1)h(q3))``;
    the quantile-kernel value, one sixteenth of it, is reported as a diagnostic.
    """
    H = BaseMeasure.from_dict(cfg.base)
    _require_pdf(H)
    a = float(cfg.a)
    q1, q2, q3 = (float(H.quantile(s)) for s in (0.25, 0.5, 0.75))
    h1, h2, h3 = (float(H.pdf(q)) for q in (q1, q2, q3))
    if min(h1, h2, h3) <= 0:
        raise ConfigError("config.base", "pdf vanishes at a quartile")
    draws = _replicates(cfg, a, _Request(levels=(0.25, 0.5, 0.75)))["levels"]
    med = math.sqrt(a) * (draws[:, 1] - q2)
    iqr = math.sqrt(a) * ((draws[:, 2] - draws[:, 0]) - (q3 - q1))
    k, rel = cfg.k_sigma, cfg.rel_tol
    iqr_closed = 3 / h3**2 + 3 / h1**2 - 2 / (h1 * h3)
    comps = [
        _within_se("mean sqrt(a)(median-q2)", *_mean_se(med), 0.0, k),
        _within_rel("var sqrt(a)(median-q2)", *_var_se(med), 1 / (4 * h2**2), rel),
        _within_se("mean sqrt(a)(IQR-(q3-q1))", *_mean_se(iqr), 0.0, k),
        _within_rel("var sqrt(a)(IQR-(q3-q1))", *_var_se(iqr), iqr_closed, rel),
        _within_rel("var sqrt(a)(IQR-(q3-q1)) kernel", *_var_se(iqr), iqr_closed / 16, rel, gating=False),
    ]
    return ExperimentReport("median_iqr", comps, cfg.to_dict(), _provenance(cfg))


def check_glivenko_cantelli(cfg: ExperimentConfig) -> ExperimentReport:
    """Sup-distance decay along ``a = n^2 c`` and the Chebyshev envelope.

    ``grid[0]`` is the set used for the Chebyshev exceedance check; the bound is
    ``H(A)(1-H(A)) / (xi(a) eps^2)``. The variant multiplying by ``xi(a)`` is
    reported as a diagnostic.
    """
    H = BaseMeasure.from_dict(cfg.base)
    A = _interval(cfg.grid[0]) if cfg.grid else (0.0, 0.3)
    hA = H.mass(*A)
    medians, comps, series = [], [], []
    for n in cfg.schedule:
        a = float(n * n * cfg.c)
        x = xi(a)
        out = _replicates(cfg, a, _Request(sets=(A,), sup=True))
        sup = out["sup"]
        dev = np.abs(out["sets"][:, 0] - hA)
        med, q90 = float(np.median(sup)), float(np.quantile(sup, 0.9))
        medians.append(med)
        series += [(int(n), "median_sup_distance", med), (int(n), "q90_sup_distance", q90)]
        comps.append(Comparison(f"median sup-distance n={n}", med, 0.0, 0.0, 0.0, "info", True, False))
        comps.append(Comparison(f"q90 sup-distance n={n}", q90, 0.0, 0.0, 0.0, "info", True, False))
        for eps in cfg.epsilons:
            freq = float(np.mean(dev > eps))
            comps.append(_at_most(f"Pr(|P{_label(A)}-H|>{eps!r}) n={n}", freq, hA * (1 - hA) / (x * eps * eps)))
            comps.append(_at_most(f"Pr(|P{_label(A)}-H|>{eps!r}) n={n} xi-multiplied", freq, hA * (1 - hA) * x / (eps * eps), gating=False))
        v, vse = _var_se(out["sets"][:, 0])
        comps.append(_within_rel(f"var P{_label(A)} n={n}", v, vse, hA * (1 - hA) / x, cfg.rel_tol, gating=False))
        comps.append(_within_rel(f"var P{_label(A)} n={n} xi-multiplied", v, vse, hA * (1 - hA) * x, cfg.rel_tol, gating=False))
    comps.append(_strictly_decreasing("median sup-distance decreasing", medians))
    return ExperimentReport("glivenko_cantelli", comps, cfg.to_dict(), _provenance(cfg), series)


def _coupled_errors(cfg: ExperimentConfig, A) -> np.ndarray:
    """``|P_finite,n(A) - P_FK(A)|`` per replicate and schedule entry, with the
    finite sums and the Ferguson-Klass series sharing arrivals and atoms."""
    H = BaseMeasure.from_dict(cfg.base)
    rule = TruncationRule.from_dict(cfg.truncation)
    a = float(cfg.a)
    n_max = int(max(cfg.schedule))
    length = max(n_max + 1, rule.n_jumps if rule.n_jumps is not None else rule.cap)
    errors = np.empty((cfg.replicates, len(cfg.schedule)))
    for r in range(cfg.replicates):
        rng = replicate_rng(cfg.seed, r, COUPLED_STREAM)
        incr = rng.standard_exponential(length)
        atoms = H.sample(rng, length)
        gam = np.cumsum(incr)
        fk = _fk_truncated(a, gam, rule)
        mask = np.ones(length, dtype=bool)
        if A[0] is not None:
            mask &= atoms > A[0]
        if A[1] is not None:
            mask &= atoms <= A[1]
        p_fk = fk[mask[: fk.size]].sum() / fk.sum()
        for j, n in enumerate(cfg.schedule):
            jumps = finite_sum_jumps(a, int(n), incr)
            errors[r, j] = abs(jumps[mask[: int(n)]].sum() / jumps.sum() - p_fk)
    return errors


def _fk_truncated(a: float, gammas: np.ndarray, rule: TruncationRule) -> np.ndarray:
    if rule.n_jumps is not None:
        return ferguson_klass_jumps(a, gammas[: rule.n_jumps])
    jumps = np.empty(0)
    block = 1024
    while jumps.size < gammas.size:
        new = ferguson_klass_jumps(a, gammas[jumps.size : jumps.size + block])
        jumps = np.concatenate([jumps, new])
        stop = _truncation_index(jumps, rule.rel_tol)
        if stop is not None:
            return jumps[:stop]
        block *= 2
    raise TruncationBudgetExceeded(f"relative tail share {rule.rel_tol:g} not reached within {gammas.size} jumps")


def check_representation_convergence(cfg: ExperimentConfig) -> ExperimentReport:
    """Finite-sum representation versus the Lévy-tail limit.

    Deterministic curves at ``curve_a`` over ``schedule`` and the ``x`` points in
    ``grid`` (default ``[1.0]``); then coupled pathwise errors at ``a`` on the
    set ``(0, 0.5]`` of the base measure's probability scale; then a two-sample
    KS test between ``ks_draws`` finite-sum draws (``n = max(schedule)``) and as
    many independent Ferguson-Klass draws of the same set probability.
    """
    H = BaseMeasure.from_dict(cfg.base)
    xs = [float(v) for v in (cfg.grid or [1.0])]
    wanted = set(cfg.quantities)
    comps, series = [], []
    for x in xs:
        lx, linv = float(levy_tail(cfg.curve_a, x)), float(levy_tail_inverse(cfg.curve_a, x))
        tail_err, inv_err = [], []
        for n in cfg.schedule:
            params = IgParams.for_finite_sum(cfg.curve_a, int(n))
            if "tail" in wanted:
                tail_err.append(abs(n * float(ig_survival(params, x)) - lx))
                series.append((int(n), f"|nG_n({x!r})-L({x!r})|", tail_err[-1]))
            if "inverse" in wanted:
                inv_err.append(abs(float(ig_survival_inverse(params, x / n)) - linv))
                series.append((int(n), f"|G_n^-1({x!r}/n)-L^-1({x!r})|", inv_err[-1]))
        if tail_err:
            comps.append(_strictly_decreasing(f"|nG_n({x!r})-L({x!r})| decreasing", tail_err))
        if inv_err:
            comps.append(_strictly_decreasing(f"|G_n^-1({x!r}/n)-L^-1({x!r})| decreasing", inv_err))

    lo = float(H.quantile(0.0))
    A = (lo if math.isfinite(lo) else None, float(H.quantile(0.5)))
    if "coupled" in wanted:
        medians = np.median(_coupled_errors(cfg, A), axis=0)
        for n, med in zip(cfg.schedule, medians):
            series.append((int(n), "median|P_finite,n(A)-P_FK(A)|", float(med)))
        comps.append(_strictly_decreasing("coupled median |P_finite,n(A)-P_FK(A)| decreasing", medians))

    if "ks" in wanted:
        req = _Request(sets=(A,))
        n_ks = int(max(cfg.schedule))
        finite = _replicates(cfg, cfg.a, req, replicates=cfg.ks_draws, sampler="finite_sum", n=n_ks)["sets"][:, 0]
        fk = _replicates(cfg, cfg.a, req, replicates=cfg.ks_draws, stream=KS_REFERENCE_STREAM, sampler="ferguson_klass")["sets"][:, 0]
        ks = stats.ks_2samp(finite, fk)
        comps.append(Comparison("KS finite_sum vs ferguson_klass p-value", float(ks.pvalue), 0.0, 0.01, 0.0, "pvalue>=0.01", bool(ks.pvalue >= 0.01)))
        comps.append(Comparison("KS statistic", float(ks.statistic), 0.0, 0.0, 0.0, "info", True, False))
    return ExperimentReport("representation_convergence", comps, cfg.to_dict(), _provenance(cfg), series)


CHECKS = {
    "moments": check_moments,
    "clt_covariance": check_clt_covariance,
    "quantile_process": check_quantile_process,
    "median_iqr": check_median_iqr,
    "glivenko_cantelli": check_glivenko_cantelli,
    "representation_convergence": check_representation_convergence,
}


def run_check(cfg: ExperimentConfig) -> ExperimentReport:
    cfg.validate()
    return CHECKS[cfg.check](cfg)
