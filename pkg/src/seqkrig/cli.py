"""Command-line front end.

Subcommands::

    seqkrig design --n 25 --m 2 --method md --seed 0 --out-dir out/
    seqkrig run    --config run.json   [--seed S] [--out-dir out/]
    seqkrig bench  --config bench.json [--jobs J] [--format csv|json]
    seqkrig score  --config run.json   [--out-dir out/]

Exit status: 0 ok, 2 usage or config error, 3 numerical failure, 4 I/O failure.
Set ``SEQKRIG_LOG`` (DEBUG, INFO, WARNING, ...) to change log verbosity.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import __version__
from .batch_select import ClusterParams
from .criteria import Criterion, score_candidates
from .design_space import candidate_grid, latin_hypercube, md_optimized_design, mixture_discrepancy
from .exceptions import CampaignError, NumericalError, SeqKrigError
from .kriging import fit
from .sequential import FIT_TAG, GRID_TAG, CampaignConfig, Termination, run_campaign
from .testbed import get_function, run_comparison

log = logging.getLogger("seqkrig")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

RUN_FIELDS = {
    "objective", "criterion", "n0", "rounds", "b", "alpha", "beta", "alpha_decay", "n_all",
    "candidate_method", "seed", "termination", "test_matrix_size", "md_budget", "n_starts",
    "regenerate_candidates", "freeze_hyperparameters",
}
BENCH_FIELDS = {
    "functions", "criteria", "b_values", "replications", "seed", "test_matrix_size", "n_all",
    "added_points", "batch_rounds", "alpha", "beta", "md_budget",
}


class ConfigError(SeqKrigError, ValueError):
    """Bad config file; carries the offending field and its line when known."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    version: str = __version__
    wall_clock_seconds: float = 0.0
    outputs: dict = field(default_factory=dict)

    def add(self, path: Path, content: str) -> None:
        self.outputs[path.name] = hashlib.sha256(content.encode()).hexdigest()

    def to_json(self) -> str:
        return json.dumps(
            {
                "command": self.command,
                "config": self.config,
                "seed": self.seed,
                "version": self.version,
                "wall_clock_seconds": self.wall_clock_seconds,
                "outputs": self.outputs,
            },
            indent=2,
            sort_keys=True,
        )


# config parsing --------------------------------------------------------------


def _line_of(text: str, key: str) -> Optional[int]:
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return i
    return None


def load_config(path, allowed: set, required: tuple) -> tuple:
    """Read a JSON config object; returns ``(dict, raw_text)``."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, line=exc.lineno) from exc
    if not isinstance(data, dict):
        raise ConfigError("top level must be a JSON object", line=1)
    for key in data:
        if key not in allowed:
            raise ConfigError("unknown field", key, _line_of(text, key))
    for key in required:
        if key not in data:
            raise ConfigError("missing required field", key)
    return data, text


def _function(spec, text: str, key: str):
    try:
        if isinstance(spec, str):
            return get_function(spec)
        if isinstance(spec, dict) and "name" in spec:
            return get_function(spec["name"], spec.get("m"))
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), key, _line_of(text, key)) from exc
    raise ConfigError("expected a function name or {\"name\": ..., \"m\": ...}", key, _line_of(text, key))


def _checked(text: str, key: str, build):
    try:
        return build()
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), key, _line_of(text, key)) from exc


def campaign_from_config(data: dict, text: str = "") -> CampaignConfig:
    objective = _function(data["objective"], text, "objective")
    batch = _checked(
        text,
        "b",
        lambda: ClusterParams(
            b=int(data.get("b", 1)),
            alpha=data.get("alpha", 15),
            beta=data.get("beta", 5.0),
            alpha_decay=data.get("alpha_decay", 0.5),
        ),
    )
    term = data.get("termination", {"kind": "rounds"})
    termination = _checked(text, "termination", lambda: Termination(term.get("kind", "rounds"), term.get("value")))
    criterion = _checked(text, "criterion", lambda: Criterion.parse(data.get("criterion", "gra")))
    kwargs = dict(
        objective=objective,
        criterion=criterion,
        n0=data.get("n0"),
        batch=batch,
        rounds=int(data.get("rounds", 20)),
        n_all=int(data.get("n_all", 1000)),
        candidate_method=data.get("candidate_method", "md"),
        seed=int(data.get("seed", 0)),
        termination=termination,
        test_matrix_size=int(data.get("test_matrix_size", 10_000)),
        md_budget=int(data.get("md_budget", 10_000)),
        n_starts=int(data.get("n_starts", 5)),
        regenerate_candidates=bool(data.get("regenerate_candidates", False)),
        freeze_hyperparameters=bool(data.get("freeze_hyperparameters", False)),
    )
    if kwargs["candidate_method"] not in ("md", "lhs"):
        raise ConfigError("must be 'md' or 'lhs'", "candidate_method", _line_of(text, "candidate_method"))
    return _checked(text, "objective", lambda: CampaignConfig(**kwargs))


def _override(data: dict, args, keys=("seed", "test_matrix_size", "n_all")) -> dict:
    data = dict(data)
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    return data


# output ----------------------------------------------------------------------


def _write(manifest: RunManifest, out_dir: Path, name: str, content: str) -> None:
    path = out_dir / name
    path.write_text(content)
    manifest.add(path, content)


def _finish(manifest: RunManifest, out_dir: Path, started: float) -> None:
    manifest.wall_clock_seconds = round(time.perf_counter() - started, 3)
    (out_dir / "manifest.json").write_text(manifest.to_json())


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# commands --------------------------------------------------------------------


def cmd_design(args) -> int:
    started = time.perf_counter()
    if args.method == "md":
        design = md_optimized_design(args.n, args.m, args.seed, args.budget)
    else:
        design = latin_hypercube(args.n, args.m, args.seed)
    md2 = mixture_discrepancy(design).md_squared
    out = _out_dir(args)
    meta = {"n": args.n, "m": args.m, "method": args.method, "seed": args.seed, "md_squared": md2}
    manifest = RunManifest("design", meta, args.seed)
    if args.format == "json":
        _write(manifest, out, "design.json", json.dumps({**meta, "points": design.points.tolist()}, indent=2, sort_keys=True))
    else:
        _write(manifest, out, "design.csv", design.to_csv())
        _write(manifest, out, "design_meta.json", json.dumps(meta, indent=2, sort_keys=True))
    _finish(manifest, out, started)
    print(f"MD^2 = {md2!r}")
    return EXIT_OK


def cmd_run(args) -> int:
    started = time.perf_counter()
    data, text = load_config(args.config, RUN_FIELDS, ("objective",))
    data = _override(data, args)
    cfg = campaign_from_config(data, text)
    if args.jobs is not None:
        from dataclasses import replace

        cfg = replace(cfg, jobs=args.jobs)
    result = run_campaign(cfg)
    out = _out_dir(args)
    manifest = RunManifest("run", cfg.to_dict(), cfg.seed)
    _write(manifest, out, "trace.json", result.to_json())
    _write(manifest, out, "rounds.csv", result.to_csv())
    _finish(manifest, out, started)
    rep = result.final_metrics
    if rep is not None:
        print(f"final n={result.final_design.n} rmse={rep.rmse:.6g} mae={rep.mae:.6g}")
    return EXIT_OK


def cmd_bench(args) -> int:
    started = time.perf_counter()
    data, text = load_config(args.config, BENCH_FIELDS, ("functions", "criteria"))
    data = _override(data, args)
    fns = [_function(f, text, "functions") for f in data["functions"]]
    if not fns:
        raise ConfigError("function list is empty", "functions", _line_of(text, "functions"))
    if not data["criteria"]:
        raise ConfigError("criteria list is empty", "criteria", _line_of(text, "criteria"))
    criteria = _checked(text, "criteria", lambda: [Criterion.parse(c) for c in data["criteria"]])
    table = run_comparison(
        fns,
        criteria,
        [int(b) for b in data.get("b_values", [1])],
        int(data.get("replications", 10)),
        int(data.get("seed", 0)),
        test_matrix_size=int(data.get("test_matrix_size", 10_000)),
        n_all=int(data.get("n_all", 1000)),
        added_points=int(data.get("added_points", 20)),
        batch_rounds=int(data.get("batch_rounds", 10)),
        alpha=data.get("alpha", 15),
        beta=data.get("beta", 5.0),
        md_budget=int(data.get("md_budget", 10_000)),
        jobs=args.jobs or 1,
    )
    out = _out_dir(args)
    manifest = RunManifest("bench", data, int(data.get("seed", 0)))
    if args.format == "json":
        _write(manifest, out, "table.json", table.to_json())
    else:
        _write(manifest, out, "table.csv", table.to_csv())
        _write(manifest, out, "replications.csv", table.replications_csv())
    _write(manifest, out, "curves.dat", table.curves_text())
    _finish(manifest, out, started)
    sys.stdout.write(table.to_csv())
    return EXIT_OK


def cmd_score(args) -> int:
    """Score the candidate grid against the initial design of a run config."""
    started = time.perf_counter()
    data, text = load_config(args.config, RUN_FIELDS, ("objective",))
    data = _override(data, args)
    cfg = campaign_from_config(data, text)
    design = md_optimized_design(cfg.n0, cfg.m, cfg.seed, cfg.md_budget)
    y = cfg.objective.evaluate(design.points)
    model = fit(design, y, rng_seed=cfg.seed ^ FIT_TAG, n_starts=cfg.n_starts) if cfg.criterion.needs_model else None
    grid = candidate_grid(cfg.n_all, cfg.m, cfg.seed ^ GRID_TAG, cfg.candidate_method, cfg.md_budget)
    scores = score_candidates(cfg.criterion, model, design, grid, jobs=args.jobs or 1)
    out = _out_dir(args)
    manifest = RunManifest("score", cfg.to_dict(), cfg.seed)
    if args.format == "json":
        body = {"candidates": grid.points.tolist(), "scores": [float(s) for s in scores]}
        _write(manifest, out, "scores.json", json.dumps(body, indent=2))
    else:
        header = ",".join([f"x{j + 1}" for j in range(cfg.m)] + ["score"])
        rows = [",".join([repr(float(v)) for v in x] + [repr(float(s))]) for x, s in zip(grid.points, scores)]
        _write(manifest, out, "scores.csv", "\n".join([header] + rows) + "\n")
    _finish(manifest, out, started)
    return EXIT_OK


# entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqkrig", description="Sequential Kriging design toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=".", help="directory for output files")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--jobs", type=int, default=None, help="worker cap")

    d = sub.add_parser("design", parents=[common], help="generate an LHS or MD-optimized design")
    d.add_argument("--n", type=int, required=True)
    d.add_argument("--m", type=int, required=True)
    d.add_argument("--method", choices=("lhs", "md"), default="md")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--budget", type=int, default=10_000, help="MD exchange iterations")
    d.set_defaults(func=cmd_design)

    for name, func, text in (
        ("run", cmd_run, "run one sequential campaign"),
        ("bench", cmd_bench, "run the replicated criteria comparison"),
        ("score", cmd_score, "export criterion scores over the candidate grid"),
    ):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--test-matrix-size", dest="test_matrix_size", type=int, default=None)
        p.add_argument("--n-all", dest="n_all", type=int, default=None)
        p.set_defaults(func=func)
    return parser


def _configure_logging() -> None:
    level = os.environ.get("SEQKRIG_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "jobs", None) is not None and args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, CampaignError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
