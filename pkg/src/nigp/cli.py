"""Command-line front end: ``nigp {sample,verify,converge}``.

All commands read the same YAML schema::

    seed: 20240611          # master seed (0 <= seed < 2**64)
    jobs: 1                 # worker processes for replicate evaluation
    sample:                 # used by ``sample``
      sampler: finite_sum   # finite_sum | ferguson_klass | dirichlet
      a: 10.0
      n: 100
      draws: 3
      base: {kind: uniform, low: 0.0, high: 1.0}
      truncation: {n_jumps: null, rel_tol: 1.0e-8, cap: 100000}
    checks:                 # used by ``verify``; one entry per named check
      - {check: moments, a: 100.0, n: 1000, replicates: 1000, grid: [[0.0, 0.3], [0.5, 0.8]]}
    converge:               # used by ``converge``; schedule-based checks
      - {check: representation_convergence, schedule: [10, 100, 1000], ...}

Entries under ``checks`` and ``converge`` take the fields of
:class:`nigp.asympt.ExperimentConfig` except ``seed`` and ``jobs``, which come
from the top level. Precedence is flag, then environment (``NIGP_SEED``,
``NIGP_JOBS``), then config file.

Draw ``d`` of ``sample`` and replicate ``r`` of every check use the stream
``SeedSequence(seed, spawn_key=(stream, index))``.

Exit codes: 0 all gates pass, 1 a statistical gate failed, 2 configuration or
IO error, 3 numerical failure (root finding, truncation budget, quadrature).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from . import __version__
from .asympt import ConfigError, ExperimentConfig, replicate_rng, run_check
from .roots import RootFindingError
from .rpm import (
    BaseMeasure,
    TruncationBudgetExceeded,
    TruncationRule,
    sample_dirichlet_stick,
    sample_nigp_ferguson_klass,
    sample_nigp_finite,
)

EXIT_OK, EXIT_GATE, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
U64 = 2**64

SAMPLE_SAMPLERS = ("finite_sum", "ferguson_klass", "dirichlet")
CONVERGE_CHECKS = ("representation_convergence", "glivenko_cantelli")


@dataclass
class SampleConfig:
    sampler: str = "finite_sum"
    a: float = 1.0
    n: int = 100
    draws: int = 1
    base: dict = field(default_factory=lambda: {"kind": "uniform", "low": 0.0, "high": 1.0})
    truncation: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict, path: str = "sample") -> "SampleConfig":
        _reject_unknown(cls, data, path)
        cfg = cls(**data)
        if cfg.sampler not in SAMPLE_SAMPLERS:
            raise ConfigError(f"{path}.sampler", f"expected one of {list(SAMPLE_SAMPLERS)}")
        if not (isinstance(cfg.a, (int, float)) and cfg.a > 0):
            raise ConfigError(f"{path}.a", "must be a positive number")
        if int(cfg.n) != cfg.n or cfg.n < 1:
            raise ConfigError(f"{path}.n", "must be a positive integer")
        if int(cfg.draws) != cfg.draws or cfg.draws < 1:
            raise ConfigError(f"{path}.draws", "must be a positive integer")
        for name, build in (("base", BaseMeasure.from_dict), ("truncation", TruncationRule.from_dict)):
            try:
                build(getattr(cfg, name))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{path}.{name}", str(exc)) from exc
        return cfg


@dataclass
class RunConfig:
    seed: int = 0
    jobs: int = 1
    sample: Optional[SampleConfig] = None
    checks: list = field(default_factory=list)
    converge: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, data) -> "RunConfig":
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be a mapping")
        _reject_unknown(cls, data, "config")
        seed = _seed(data.get("seed", 0), "config.seed")
        jobs = _jobs(data.get("jobs", 1), "config.jobs")
        sample = data.get("sample")
        return cls(
            seed=seed,
            jobs=jobs,
            sample=None if sample is None else SampleConfig.from_dict(_mapping(sample, "sample"), "sample"),
            checks=_experiments(data.get("checks") or [], "checks"),
            converge=_experiments(data.get("converge") or [], "converge"),
        )

    def to_dict(self) -> dict:
        out = {"seed": self.seed, "jobs": self.jobs}
        if self.sample is not None:
            out["sample"] = dataclasses.asdict(self.sample)
        out["checks"] = [_experiment_dict(c) for c in self.checks]
        out["converge"] = [_experiment_dict(c) for c in self.converge]
        return out

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def experiment(self, cfg: ExperimentConfig) -> ExperimentConfig:
        return dataclasses.replace(cfg, seed=self.seed, jobs=self.jobs)


def _reject_unknown(cls, data, path):
    known = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown field")


def _mapping(value, path):
    if not isinstance(value, dict):
        raise ConfigError(path, "must be a mapping")
    return value


def _experiments(items, path):
    if not isinstance(items, list):
        raise ConfigError(path, "must be a list")
    out = []
    for i, item in enumerate(items):
        item = _mapping(item, f"{path}[{i}]")
        for key in ("seed", "jobs"):
            if key in item:
                raise ConfigError(f"{path}[{i}].{key}", "set at the top level, not per check")
        try:
            out.append(ExperimentConfig.from_dict(item, f"{path}[{i}]"))
        except TypeError as exc:
            raise ConfigError(f"{path}[{i}]", str(exc)) from exc
    return out


def _experiment_dict(cfg: ExperimentConfig) -> dict:
    d = cfg.to_dict()
    d.pop("seed")
    d.pop("jobs")
    return d


def _seed(value, path) -> int:
    try:
        seed = int(value)
    except (TypeError, ValueError):
        raise ConfigError(path, f"not an integer: {value!r}") from None
    if seed != value and not isinstance(value, str) or not 0 <= seed < U64:
        raise ConfigError(path, "must be an integer in [0, 2**64)")
    return seed


def _jobs(value, path) -> int:
    try:
        jobs = int(value)
    except (TypeError, ValueError):
        raise ConfigError(path, f"not an integer: {value!r}") from None
    if jobs < 1:
        raise ConfigError(path, "must be >= 1")
    return jobs


def load_config(path: Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("--config", str(exc)) from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"not valid YAML: {exc}") from exc
    return RunConfig.from_dict(data)


# -- rendering ----------------------------------------------------------------------


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)  # shortest round-trip form
    return v


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_outputs(out: Path, files: dict, force: bool) -> None:
    """Write every file or none; refuses to replace existing files without ``force``."""
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError("--out", str(exc)) from exc
    if not force:
        clash = sorted(name for name in files if (out / name).exists())
        if clash:
            raise ConfigError("--out", f"{', '.join(clash)} already exist in {out}; pass --force to overwrite")
    try:
        for name, text in files.items():
            write_atomic(out / name, text)
    except OSError as exc:
        raise ConfigError("--out", str(exc)) from exc


def _manifest(command, args, run: RunConfig, files: dict) -> str:
    return _json_text(
        {
            "command": command,
            "config": str(args.config),
            "out": str(args.out),
            "seed": run.seed,
            "jobs": run.jobs,
            "format": args.format,
            "version": __version__,
            "stream_rule": "SeedSequence(seed, spawn_key=(stream, index))",
            "resolved_config": run.to_dict(),
            "files": {name: hashlib.sha256(text.encode()).hexdigest() for name, text in sorted(files.items())},
        }
    )


# -- commands -------------------------------------------------------------------------


def cmd_sample(args, run: RunConfig) -> int:
    if run.sample is None:
        raise ConfigError("sample", "the sample command needs a 'sample' section")
    sc = run.sample
    H = BaseMeasure.from_dict(sc.base)
    rule = TruncationRule.from_dict(sc.truncation)
    draws = []
    for d in range(int(sc.draws)):
        rng = replicate_rng(run.seed, d)
        if sc.sampler == "finite_sum":
            draws.append(sample_nigp_finite(sc.a, int(sc.n), H, rng))
        elif sc.sampler == "ferguson_klass":
            draws.append(sample_nigp_ferguson_klass(sc.a, H, rule, rng))
        else:
            draws.append(sample_dirichlet_stick(sc.a, H, rule, rng))
    if args.format == "csv":
        rows = [(d, float(x), float(w)) for d, P in enumerate(draws) for x, w in P.to_rows()]
        files = {"draws.csv": _csv_text(("draw_id", "atom", "weight"), rows)}
    else:
        payload = {"draws": [{"draw_id": d, "atoms": P.atoms.tolist(), "weights": P.weights.tolist()} for d, P in enumerate(draws)]}
        files = {"draws.json": _json_text(payload)}
    files["sample.manifest.json"] = _manifest("sample", args, run, files)
    _write_outputs(args.out, files, args.force)
    return EXIT_OK


def _run_reports(run: RunConfig, configs) -> list:
    return [run_check(run.experiment(cfg)) for cfg in configs]


def cmd_verify(args, run: RunConfig) -> int:
    if not run.checks:
        raise ConfigError("checks", "no checks requested")
    reports = _run_reports(run, run.checks)
    passed = all(r.passed for r in reports)
    rows = [row for r in reports for row in r.csv_rows()]
    files = {
        "report.json": _json_text({"passed": passed, "reports": [r.to_dict() for r in reports]}),
        "report.csv": _csv_text(("check", "statistic", "estimate", "se", "target", "pass"), rows),
    }
    files["verify.manifest.json"] = _manifest("verify", args, run, files)
    _write_outputs(args.out, files, args.force)
    for r in reports:
        print(f"{r.check}: {'PASS' if r.passed else 'FAIL'}", file=sys.stderr)
    return EXIT_OK if passed else EXIT_GATE


def cmd_converge(args, run: RunConfig) -> int:
    if not run.converge:
        raise ConfigError("converge", "no convergence experiments requested")
    for i, cfg in enumerate(run.converge):
        if cfg.check not in CONVERGE_CHECKS:
            raise ConfigError(f"converge[{i}].check", f"expected one of {list(CONVERGE_CHECKS)}")
    reports = _run_reports(run, run.converge)
    passed = all(r.passed for r in reports)
    rows = [(int(n), q, float(v)) for r in reports for n, q, v in r.series]
    if args.format == "csv":
        files = {"convergence.csv": _csv_text(("n", "quantity", "value"), rows)}
    else:
        files = {"convergence.json": _json_text({"passed": passed, "rows": [{"n": n, "quantity": q, "value": v} for n, q, v in rows]})}
    files["converge.manifest.json"] = _manifest("converge", args, run, files)
    _write_outputs(args.out, files, args.force)
    return EXIT_OK if passed else EXIT_GATE


COMMANDS = {"sample": cmd_sample, "verify": cmd_verify, "converge": cmd_converge}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nigp", description="Normalized inverse-Gaussian process simulation and checks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("sample", "draw random measures"),
        ("verify", "run Monte-Carlo checks and write reports"),
        ("converge", "write convergence curves in long format"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, required=True, help="YAML config file")
        p.add_argument("--out", type=Path, required=True, help="output directory (created if absent)")
        p.add_argument("--seed", help="master seed, overrides NIGP_SEED and the config")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--force", action="store_true", help="overwrite existing output files")
        p.add_argument("--jobs", help="worker processes, overrides NIGP_JOBS and the config")
    return parser


def _resolve(args, run: RunConfig) -> RunConfig:
    seed = args.seed if args.seed is not None else os.environ.get("NIGP_SEED")
    if seed is not None:
        run.seed = _seed(seed, "--seed" if args.seed is not None else "NIGP_SEED")
    jobs = args.jobs if args.jobs is not None else os.environ.get("NIGP_JOBS")
    if jobs is not None:
        run.jobs = _jobs(jobs, "--jobs" if args.jobs is not None else "NIGP_JOBS")
    return run


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = _resolve(args, load_config(args.config))
        return COMMANDS[args.command](args, run)
    except ConfigError as exc:
        print(f"nigp: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RootFindingError, TruncationBudgetExceeded, FloatingPointError) as exc:
        print(f"nigp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
