import json
import math

import numpy as np
import pytest

from nigp.asympt import (
    ConfigError,
    ExperimentConfig,
    ExperimentReport,
    _Request,
    _replicates,
    _require_pdf,
    nig_two_cell_moments,
    replicate_rng,
    run_check,
)
from nigp.rpm import BaseMeasure
from nigp.specfun import xi

SEED = 8675309


def _cfg(**kw):
    base = dict(seed=SEED, replicates=200)
    base.update(kw)
    return ExperimentConfig(**base)


# -- configuration ------------------------------------------------------------------


@pytest.mark.parametrize(
    "kw,path",
    [
        (dict(check="nope", grid=[[0, 1]]), "check"),
        (dict(check="moments", grid=[[0, 1]], replicates=99), "replicates"),
        (dict(check="moments", grid=[]), "grid"),
        (dict(check="moments", grid=[[0, 1]], sampler="gibbs"), "sampler"),
        (dict(check="moments", grid=[[0, 1]], a=0.0), "a"),
        (dict(check="glivenko_cantelli", schedule=[2, 4]), "c"),
        (dict(check="glivenko_cantelli", c=1.0, schedule=[4, 2]), "schedule"),
        (dict(check="representation_convergence", schedule=[10, 10]), "schedule"),
        (dict(check="representation_convergence", schedule=[10, 100], coupled=False), "coupled"),
        (dict(check="representation_convergence", schedule=[10, 100], quantities=["speed"]), "quantities"),
        (dict(check="moments", grid=[[0, 1]], base={"kind": "cauchy"}), "base"),
    ],
)
def test_config_violations_name_the_field(kw, path):
    with pytest.raises(ConfigError) as info:
        run_check(_cfg(**kw))
    assert info.value.path.endswith(path)


def test_config_rejects_unknown_field():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"check": "moments", "grid": [[0, 1]], "colour": "red"})


def test_config_dict_round_trip():
    cfg = _cfg(check="moments", grid=[[0.0, 0.3], [0.5, 0.8]])
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


def test_moments_needs_disjoint_sets():
    with pytest.raises(ConfigError):
        run_check(_cfg(check="moments", grid=[[0.0, 0.5], [0.2, 0.8]]))


def test_require_pdf():
    H = BaseMeasure("custom", lambda x: x, lambda u: u)
    with pytest.raises(ConfigError):
        _require_pdf(H)


# -- streams and reduction ------------------------------------------------------------


def test_replicate_streams_are_distinct_and_stable():
    a = replicate_rng(1, 0).random(3)
    assert np.array_equal(a, replicate_rng(1, 0).random(3))
    assert not np.array_equal(a, replicate_rng(1, 1).random(3))
    assert not np.array_equal(a, replicate_rng(1, 0, stream=1).random(3))
    assert not np.array_equal(a, replicate_rng(2, 0).random(3))


def test_adding_replicates_keeps_earlier_ones():
    req = _Request(sets=((0.0, 0.3),))
    small = _replicates(_cfg(n=50), 10.0, req, replicates=100)["sets"]
    large = _replicates(_cfg(n=50), 10.0, req, replicates=300)["sets"]
    assert np.array_equal(small, large[:100])


@pytest.mark.parametrize("sampler", ["finite_sum", "partition", "ferguson_klass"])
def test_parallel_reduction_is_bit_identical(sampler, monkeypatch):
    import nigp.asympt as asympt

    # force several chunks so the pool actually splits work
    monkeypatch.setattr(asympt, "_CHUNK_ELEMENTS", 5000)
    req = _Request(sets=((0.0, 0.3),), points=(0.5,), levels=(0.25, 0.75), sup=True)
    kw = dict(n=50, sampler=sampler, partition_cells=200)
    one = _replicates(_cfg(jobs=1, **kw), 10.0, req, replicates=120)
    two = _replicates(_cfg(jobs=2, **kw), 10.0, req, replicates=120)
    for key in one:
        assert np.array_equal(one[key], two[key])


def test_reports_deterministic():
    cfg = _cfg(check="moments", a=50.0, n=100, grid=[[0.0, 0.3], [0.5, 0.8]])
    assert run_check(cfg).to_json() == run_check(cfg).to_json()


# -- checks ----------------------------------------------------------------------------------


def test_moments_example_and_degenerate_sets():
    cfg = _cfg(check="moments", a=100.0, n=1000, replicates=400, grid=[[0.0, 0.3], [0.5, 0.8], [1.0, 2.0], [None, None]])
    rep = run_check(cfg)
    mean = rep.comparison("mean P(0.0,0.3]")
    assert mean.target == pytest.approx(0.3) and mean.passed
    assert rep.comparison("var P(0.0,0.3]").target == pytest.approx(0.21 / xi(100.0))
    assert rep.comparison("max|P(1.0,2.0]-H(1.0,2.0]|").estimate == 0.0
    assert rep.comparison("max|P(-inf,inf]-H(-inf,inf]|").passed
    # the n = 1000 sum inflates Var by 1 + (xi - 1)/n; the exact finite-n target absorbs it
    assert rep.comparison("var P(0.0,0.3] finite-n").passed and rep.comparison("var P(0.5,0.8] finite-n").passed
    cross = rep.comparison("E[P(0.0,0.3]P(0.5,0.8]]")
    assert cross.target == pytest.approx(0.09 * (xi(100.0) - 1) / xi(100.0))


def test_clt_single_point_coincides_with_variance_identity():
    a = 200.0
    clt = run_check(_cfg(check="clt_covariance", a=a, n=400, grid=[0.3]))
    mom = run_check(_cfg(check="moments", a=a, n=400, grid=[[None, 0.3], [0.3, None]]))
    cov = clt.comparison("cov D(0.3,0.3) finite-a")
    var = mom.comparison("var P(-inf,0.3]")
    assert cov.target == pytest.approx(a * var.target, rel=1e-14)
    # same replicate streams, so the estimates are the same numbers scaled by a
    assert cov.estimate == pytest.approx(a * var.estimate, rel=1e-10)


def test_clt_report_shape():
    rep = run_check(_cfg(check="clt_covariance", a=500.0, sampler="partition", grid=[0.25, 0.5, 0.75]))
    c = rep.comparison("cov D(0.25,0.75)")
    assert c.target == pytest.approx(0.0625)
    assert rep.comparison("cov D(0.5,0.5)").target == pytest.approx(0.25)
    assert rep.comparison("skew D(0.5)").se == pytest.approx(math.sqrt(6 / 200))
    assert not rep.comparison("skew D(0.25) finite-a").gating


def test_two_cell_moments_match_identities():
    a, h = 1000.0, 0.25
    mean, var, skew, kurt = nig_two_cell_moments(a * h, a * (1 - h))
    assert mean == pytest.approx(h, rel=1e-8)
    assert var == pytest.approx(h * (1 - h) / xi(a), rel=1e-7)
    # delta-method leading term 3(1 - 2h)/sqrt(a h (1 - h))
    assert skew == pytest.approx(3 * (1 - 2 * h) / math.sqrt(a * h * (1 - h)), rel=0.02)


def test_quantile_process_targets():
    rep = run_check(_cfg(check="quantile_process", a=1e3, sampler="partition", partition_cells=2000, grid=[0.25, 0.75]))
    assert rep.comparison("cov Q(0.25,0.75)").target == pytest.approx(0.0625)
    with pytest.raises(ConfigError):
        run_check(_cfg(check="quantile_process", grid=[0.0, 0.5]))


def test_median_iqr_targets():
    rep = run_check(_cfg(check="median_iqr", a=1e3, sampler="partition", partition_cells=2000, grid=[0.5], base={"kind": "normal", "loc": 0.0, "scale": 1.0}))
    assert rep.comparison("var sqrt(a)(median-q2)").target == pytest.approx(math.pi / 2)
    rep = run_check(_cfg(check="median_iqr", a=1e3, sampler="partition", partition_cells=2000, grid=[0.5]))
    assert rep.comparison("var sqrt(a)(IQR-(q3-q1))").target == pytest.approx(4.0)
    assert rep.comparison("var sqrt(a)(IQR-(q3-q1)) kernel").target == pytest.approx(0.25)


def test_glivenko_cantelli_bound_and_full_mass_set():
    rep = run_check(_cfg(check="glivenko_cantelli", c=1.0, schedule=[2, 4], n=200, grid=[[None, None]]))
    for eps in (0.05, 0.1, 0.2):
        c = rep.comparison(f"Pr(|P(-inf,inf]-H|>{eps!r}) n=4")
        assert c.estimate == 0.0 and c.target == 0.0 and c.passed
    rep = run_check(_cfg(check="glivenko_cantelli", c=1.0, schedule=[10, 20], n=200, grid=[[0.0, 0.3]]))
    c = rep.comparison("Pr(|P(0.0,0.3]-H|>0.05) n=20")
    assert c.target == pytest.approx(0.21 / (xi(400.0) * 0.0025))
    assert [row[0] for row in rep.series] == [10, 10, 20, 20]


def test_representation_curves_only():
    rep = run_check(_cfg(check="representation_convergence", schedule=[10, 100], quantities=["tail", "inverse"]))
    assert len(rep.series) == 4 and rep.passed


def test_representation_coupled_small():
    rep = run_check(_cfg(check="representation_convergence", a=10.0, schedule=[10, 100, 1000], replicates=100, quantities=["coupled"]))
    assert rep.comparison("coupled median |P_finite,n(A)-P_FK(A)| decreasing").passed


# -- report serialization ---------------------------------------------------------------------


def test_report_serialization():
    rep = run_check(_cfg(check="moments", a=20.0, n=50, grid=[[0.0, 0.3], [0.5, 0.8]]))
    data = json.loads(rep.to_json())
    assert data["check"] == "moments" and data["passed"] == rep.passed
    assert data["provenance"]["seed"] == SEED and "version" in data["provenance"]
    assert data["config"]["a"] == 20.0
    rows = rep.csv_rows()
    assert all(len(r) == 6 and r[0] == "moments" for r in rows)
    assert isinstance(rep, ExperimentReport)
