"""Benchmark functions on ``[0, 1]^m``, accuracy metrics and the comparison harness."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .design_space import DesignMatrix, as_points, latin_hypercube

log = logging.getLogger(__name__)


# test functions -------------------------------------------------------------


def branin(x):
    x1 = 15.0 * x[:, 0] - 5.0
    x2 = 15.0 * x[:, 1]
    return (x2 - 5.1 / (4 * np.pi**2) * x1**2 + 5.0 / np.pi * x1 - 6.0) ** 2 + 10.0 * (1.0 - 1.0 / (8 * np.pi)) * np.cos(x1) + 10.0


def rational(x):
    x1, x2 = x[:, 0], x[:, 1]
    with np.errstate(divide="ignore"):
        # exp(-0.5/x2) -> 0 as x2 -> 0+, so the factor tends to 1
        damp = np.where(x2 > 0, 1.0 - np.exp(-0.5 / np.where(x2 > 0, x2, 1.0)), 1.0)
    return damp * (2300 * x1**3 + 1900 * x1**2 + 2092 * x1 + 60) / (100 * x1**3 + 500 * x1**2 + 4 * x1 + 20)


def log_trig(x):
    return np.log(2.0 + np.sin(2 * np.pi * x[:, 0])) * np.cos(2 * np.pi * x[:, 1] ** 2)


HARTMANN3_C = np.array([1.0, 1.2, 3.0, 3.2])
HARTMANN3_A = np.array([[3.0, 10, 30], [0.1, 10, 35], [3.0, 10, 30], [0.1, 10, 35]])
HARTMANN3_P = np.array(
    [
        [0.3689, 0.1170, 0.2673],
        [0.4699, 0.4387, 0.7470],
        [0.1091, 0.8732, 0.5547],
        [0.03815, 0.5743, 0.8828],
    ]
)


def hartmann3(x):
    inner = np.einsum("ij,nij->ni", HARTMANN3_A, (x[:, None, :] - HARTMANN3_P[None, :, :]) ** 2)
    return -np.exp(-inner) @ HARTMANN3_C


def ackley(x):
    m = x.shape[1]
    return (
        -20.0 * np.exp(-0.2 * np.sqrt(np.sum(x * x, axis=1) / m))
        - np.exp(np.sum(np.cos(2 * np.pi * x), axis=1) / m)
        + 20.0
        + np.e
    )


def zakharov(x):
    i = np.arange(1, x.shape[1] + 1)
    s = x @ (0.5 * i)
    return np.sum(x * x, axis=1) + s**2 + s**4


def rosenbrock(x):
    return np.sum(100.0 * (x[:, 1:] - x[:, :-1] ** 2) ** 2 + (x[:, :-1] - 1.0) ** 2, axis=1)


_REGISTRY = {
    "f1": ("branin", branin, 2),
    "f2": ("rational", rational, 2),
    "f3": ("log_trig", log_trig, 2),
    "f4": ("hartmann3", hartmann3, 3),
    "f5": ("ackley5", ackley, 5),
    "f6": ("zakharov", zakharov, None),
    "f7": ("rosenbrock", rosenbrock, None),
}
_ALIASES = {v[0]: k for k, v in _REGISTRY.items()}


@dataclass(frozen=True)
class TestFunction:
    """One of the seven benchmark functions, evaluated on ``[0, 1]^m``."""

    __test__ = False  # keep pytest from collecting this class

    id: str
    m: int

    def __post_init__(self):
        key = _ALIASES.get(self.id, self.id)
        if key not in _REGISTRY:
            raise ValueError(f"unknown test function {self.id!r}")
        object.__setattr__(self, "id", key)
        fixed = _REGISTRY[key][2]
        if fixed is not None and self.m != fixed:
            raise ValueError(f"{key} is defined for m={fixed}, got m={self.m}")
        if self.m < 2:
            raise ValueError("test functions need m >= 2")

    @property
    def name(self) -> str:
        return _REGISTRY[self.id][0]

    @property
    def label(self) -> str:
        return f"{self.id}(m={self.m})"

    def __call__(self, x):
        return self.evaluate(x)

    def evaluate(self, x):
        arr = np.asarray(x, dtype=float)
        single = arr.ndim <= 1
        arr = np.atleast_2d(arr)
        if arr.shape[1] != self.m:
            raise ValueError(f"{self.id} expects dimension {self.m}, got {arr.shape[1]}")
        if np.any(arr < 0.0) or np.any(arr > 1.0) or not np.all(np.isfinite(arr)):
            raise ValueError(f"{self.id} is defined on [0, 1]^{self.m}; got out-of-domain point")
        out = _REGISTRY[self.id][1](arr)
        return float(out[0]) if single else out

    def to_dict(self) -> dict:
        return {"name": self.id, "m": self.m}


def get_function(name: str, m: Optional[int] = None) -> TestFunction:
    key = _ALIASES.get(name, name)
    if key not in _REGISTRY:
        raise ValueError(f"unknown test function {name!r}")
    fixed = _REGISTRY[key][2]
    if m is None:
        if fixed is None:
            raise ValueError(f"{key} needs an explicit dimension m")
        m = fixed
    return TestFunction(key, int(m))


# metrics --------------------------------------------------------------------


@dataclass(frozen=True)
class MetricReport:
    rmse: float
    mae: float
    n_test: int


def metrics(model, fn: Callable, test_matrix) -> MetricReport:
    """RMSE and maximum absolute error of ``model`` against ``fn`` on a test matrix."""
    pts = as_points(test_matrix)
    if pts.shape[0] == 0:
        raise ValueError("empty test matrix")
    err = np.asarray(fn(pts), dtype=float) - model.predict(pts)
    return MetricReport(float(np.sqrt(np.mean(err * err))), float(np.max(np.abs(err))), int(pts.shape[0]))


def sign_test(wins: int, losses: int) -> float:
    """One-sided sign-test p-value for ``wins`` out of ``wins + losses`` (ties dropped)."""
    from scipy.stats import binomtest

    n = wins + losses
    if n == 0:
        return 1.0
    return float(binomtest(wins, n, 0.5, alternative="greater").pvalue)


def paired_sign_test(a, b) -> float:
    """p-value for "``a`` tends to be smaller than ``b``" over paired replications."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return sign_test(int(np.sum(a < b)), int(np.sum(a > b)))


# comparison harness ---------------------------------------------------------

SCENARIO_TAG = 0x510E0000


@dataclass
class Cell:
    function: str
    m: int
    criterion: str
    b: int
    replication: int
    seed: int
    rmse: Optional[float] = None
    mae: Optional[float] = None
    curve: list = field(default_factory=list)  # (n_points, rmse, mae) per round
    error: Optional[str] = None


@dataclass
class ComparisonTable:
    cells: list
    criteria: list

    def _groups(self):
        groups = {}
        for c in self.cells:
            groups.setdefault((c.function, c.m, c.b), {}).setdefault(c.criterion, []).append(c)
        return groups

    def median(self, function: str, m: int, b: int, criterion: str, metric: str = "rmse") -> float:
        vals = [getattr(c, metric) for c in self._groups()[(function, m, b)].get(criterion, []) if c.error is None]
        return float(np.median(vals)) if vals else math.nan

    def values(self, function: str, m: int, b: int, criterion: str, metric: str = "rmse") -> list:
        cells = sorted(self._groups()[(function, m, b)].get(criterion, []), key=lambda c: c.replication)
        return [getattr(c, metric) if c.error is None else math.nan for c in cells]

    def to_csv(self) -> str:
        """Median table: one row per (function, m, b, metric), winner = lowest median."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["function", "m", "b", "metric"] + list(self.criteria) + ["winner"])
        for (fn, m, b), _ in sorted(self._groups().items()):
            for metric in ("mae", "rmse"):
                meds = [self.median(fn, m, b, c, metric) for c in self.criteria]
                finite = [(v, c) for v, c in zip(meds, self.criteria) if not math.isnan(v)]
                winner = min(finite)[1] if finite else ""
                w.writerow([fn, m, b, metric] + [repr(v) for v in meds] + [winner])
        return buf.getvalue()

    def replications_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["function", "m", "b", "criterion", "replication", "seed", "rmse", "mae", "error"])
        for c in self.cells:
            w.writerow([c.function, c.m, c.b, c.criterion, c.replication, c.seed, repr(c.rmse), repr(c.mae), c.error or ""])
        return buf.getvalue()

    def curves_text(self) -> str:
        """Per-round RMSE/MAE curves as gnuplot data blocks (blank-line separated)."""
        lines = []
        for c in self.cells:
            lines.append(f"# {c.function} m={c.m} b={c.b} criterion={c.criterion} rep={c.replication}")
            lines.append("# n_points rmse mae")
            lines.extend(f"{n} {r!r} {a!r}" for n, r, a in c.curve)
            lines.extend(["", ""])
        return "\n".join(lines)

    def to_dict(self) -> dict:
        medians = []
        for (fn, m, b), _ in sorted(self._groups().items()):
            for metric in ("mae", "rmse"):
                medians.append(
                    {"function": fn, "m": m, "b": b, "metric": metric,
                     "medians": {c: self.median(fn, m, b, c, metric) for c in self.criteria}}
                )
        return {"criteria": list(self.criteria), "cells": [asdict(c) for c in self.cells], "medians": medians}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _run_cell(args):
    from .exceptions import SeqKrigError
    from .sequential import CampaignConfig, run_campaign

    cell, config = args
    try:
        res = run_campaign(config)
        rep = res.final_metrics
        cell.rmse, cell.mae = rep.rmse, rep.mae
        cell.curve = [(int(sum(len(r.points) for r in res.records[: i + 1])), r.rmse, r.mae) for i, r in enumerate(res.records)]
    except (SeqKrigError, ValueError, ArithmeticError) as exc:
        cell.error = f"{type(exc).__name__}: {exc}"
        log.warning("cell %s/%s/b=%d/rep=%d failed: %s", cell.function, cell.criterion, cell.b, cell.replication, exc)
    return cell


def run_comparison(
    fns: Sequence[TestFunction],
    criteria: Sequence,
    b_values: Sequence[int],
    replications: int,
    seed: int,
    *,
    test_matrix_size: int = 10_000,
    n_all: int = 1000,
    added_points: int = 20,
    batch_rounds: int = 10,
    alpha: float = 15,
    beta: float = 5.0,
    md_budget: int = 10_000,
    jobs: int = 1,
) -> ComparisonTable:
    """Replicated comparison of criteria on benchmark functions.

    Each campaign starts from ``5m`` points. One-point designs add
    ``added_points`` points; batch designs run ``batch_rounds`` rounds of ``b``.
    Replication ``r`` of scenario ``s`` uses seed ``seed ^ (s << 16 | r)`` for
    every criterion and batch size, so comparisons are paired; the scenario's
    test matrix is drawn once from ``seed ^ (SCENARIO_TAG + s)``.
    """
    from .batch_select import ClusterParams
    from .criteria import Criterion
    from .sequential import CampaignConfig

    if not criteria:
        raise ValueError("criteria list is empty")
    if not fns:
        raise ValueError("function list is empty")
    if replications < 1:
        raise ValueError("replications must be >= 1")
    crits = [Criterion.parse(c) for c in criteria]
    jobs_list = []
    for s, fn in enumerate(fns):
        test_matrix = latin_hypercube(test_matrix_size, fn.m, seed ^ (SCENARIO_TAG + s))
        for b in b_values:
            for crit in crits:
                for r in range(replications):
                    cell_seed = seed ^ ((s << 16) | r)
                    rounds = added_points if b == 1 else batch_rounds
                    cfg = CampaignConfig(
                        objective=fn,
                        criterion=crit,
                        batch=ClusterParams(b=b, alpha=alpha, beta=beta),
                        rounds=rounds,
                        n_all=n_all,
                        seed=cell_seed,
                        test_matrix=test_matrix,
                        md_budget=md_budget,
                    )
                    cell = Cell(fn.id, fn.m, crit.short, b, r, cell_seed)
                    jobs_list.append((cell, cfg))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_cell, jobs_list))
    else:
        cells = [_run_cell(j) for j in jobs_list]
    return ComparisonTable(cells, [c.short for c in crits])
