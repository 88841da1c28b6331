"""Sequential design campaigns: observe, fit, score, select, repeat."""

from __future__ import annotations

import csv
import functools
import io
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Union

import numpy as np

from .batch_select import ClusterParams, naive_top_b, select_batch, top_b_distinct
from .criteria import Criterion, score_candidates
from .design_space import DesignMatrix, as_points, candidate_grid, latin_hypercube, md_optimized_design
from .exceptions import CampaignError, ClusteringError, EmptyCandidatesError, NumericalError
from .kriging import KrigingModel, fit, refit_with
from .testbed import MetricReport, TestFunction, metrics

log = logging.getLogger(__name__)

# Seed splitting: every random stream of a campaign is the campaign seed XOR a fixed tag.
GRID_TAG = 0x6A09
TEST_TAG = 0xBB67
FIT_TAG = 0x3C6E0000


@functools.lru_cache(maxsize=32)
def _cached_grid(n_all: int, m: int, seed: int, method: str, budget: int) -> DesignMatrix:
    return candidate_grid(n_all, m, seed, method, budget)


@dataclass(frozen=True)
class Termination:
    """``rounds`` (cap on iterations), ``points`` (cap on design size) or ``rmse``."""

    kind: str = "rounds"
    value: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("rounds", "points", "rmse"):
            raise ValueError(f"unknown termination kind {self.kind!r}")
        if self.kind != "rounds" and self.value is None:
            raise ValueError(f"termination {self.kind!r} needs a value")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value}


@dataclass(frozen=True)
class CampaignConfig:
    objective: Union[TestFunction, Callable]
    criterion: Criterion = Criterion.GRADIENT
    m: Optional[int] = None
    n0: Optional[int] = None
    batch: ClusterParams = ClusterParams()
    rounds: int = 20
    n_all: int = 1000
    candidate_method: str = "md"
    seed: int = 0
    termination: Termination = Termination()
    test_matrix_size: int = 10_000
    test_matrix: Optional[DesignMatrix] = None
    md_budget: int = 10_000
    n_starts: int = 5
    jobs: int = 1
    regenerate_candidates: bool = False
    freeze_hyperparameters: bool = False
    initial_design: Optional[DesignMatrix] = None
    candidates: Optional[DesignMatrix] = None

    def __post_init__(self):
        object.__setattr__(self, "criterion", Criterion.parse(self.criterion))
        m = self.m
        if isinstance(self.objective, TestFunction):
            if m is not None and m != self.objective.m:
                raise ValueError("m does not match the test function dimension")
            m = self.objective.m
        if m is None:
            raise ValueError("m is required for external objectives")
        object.__setattr__(self, "m", int(m))
        if self.n0 is None:
            object.__setattr__(self, "n0", 5 * int(m))
        if self.n0 < 2:
            raise ValueError("n0 must be at least 2")
        if self.termination.kind == "rounds" and self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.n_all < self.batch.b:
            raise ValueError("n_all must be at least the batch size")
        if self.termination.kind == "rmse" and not isinstance(self.objective, TestFunction):
            raise ValueError("rmse termination needs a test-function objective")

    @property
    def has_truth(self) -> bool:
        return isinstance(self.objective, TestFunction)

    def to_dict(self) -> dict:
        obj = self.objective.to_dict() if self.has_truth else getattr(self.objective, "__name__", "external")
        return {
            "objective": obj,
            "criterion": self.criterion.value,
            "m": self.m,
            "n0": self.n0,
            "batch": self.batch.to_dict(),
            "rounds": self.rounds,
            "n_all": self.n_all,
            "candidate_method": self.candidate_method,
            "seed": self.seed,
            "termination": self.termination.to_dict(),
            "test_matrix_size": self.test_matrix_size if self.test_matrix is None else self.test_matrix.n,
            "md_budget": self.md_budget,
            "regenerate_candidates": self.regenerate_candidates,
            "freeze_hyperparameters": self.freeze_hyperparameters,
        }


class Observer:
    """Evaluates the objective once per distinct point and caches the result."""

    def __init__(self, objective: Callable):
        self.objective = objective
        self.n_evaluations = 0
        self._cache = {}

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(as_points(points))
        out = np.empty(pts.shape[0])
        for i, x in enumerate(pts):
            key = x.tobytes()
            if key not in self._cache:
                try:
                    value = float(np.asarray(self.objective(x)).reshape(-1)[0])
                except CampaignError:
                    raise
                except Exception as exc:
                    raise CampaignError(f"objective failed at {x.tolist()}: {exc}") from exc
                if not np.isfinite(value):
                    raise CampaignError(f"objective returned non-finite value {value} at {x.tolist()}")
                self._cache[key] = value
                self.n_evaluations += 1
            out[i] = self._cache[key]
        return out


@dataclass
class RoundRecord:
    round: int
    points: np.ndarray
    observations: np.ndarray
    hyperparameters: Optional[dict]
    rmse: Optional[float] = None
    mae: Optional[float] = None
    alpha_used: Optional[float] = None
    fallback: bool = False

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "points": self.points.tolist(),
            "observations": self.observations.tolist(),
            "hyperparameters": self.hyperparameters,
            "rmse": self.rmse,
            "mae": self.mae,
            "alpha_used": self.alpha_used,
            "fallback": self.fallback,
        }


@dataclass
class CampaignResult:
    config: dict
    records: List[RoundRecord]
    final_design: DesignMatrix
    final_observations: np.ndarray
    n_evaluations: int
    final_model: Optional[KrigingModel] = field(default=None, repr=False)

    @property
    def final_metrics(self) -> Optional[MetricReport]:
        last = self.records[-1]
        if last.rmse is None:
            return None
        return MetricReport(last.rmse, last.mae, self.config.get("test_matrix_size", 0))

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "rounds": [r.to_dict() for r in self.records],
            "final_design": self.final_design.points.tolist(),
            "final_observations": self.final_observations.tolist(),
            "n_evaluations": self.n_evaluations,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        m = self.final_design.m
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round"] + [f"x{j + 1}" for j in range(m)] + ["response", "rmse", "mae"])
        for rec in self.records:
            for x, y in zip(rec.points, rec.observations):
                w.writerow([rec.round] + [repr(float(v)) for v in x] + [repr(float(y)), _fmt(rec.rmse), _fmt(rec.mae)])
        return buf.getvalue()


def _fmt(v):
    return "" if v is None else repr(float(v))


def _remove_in_design(pool: np.ndarray, design: DesignMatrix) -> np.ndarray:
    from .criteria import in_design_mask

    return pool[~in_design_mask(design, pool)]


def run_campaign(config: CampaignConfig) -> CampaignResult:
    """Run one sequential-design campaign.

    The initial design is MD-optimized (unless supplied). The candidate grid is
    drawn once and selected points are removed from it. Each round scores the
    remaining candidates, picks one point (``b = 1``) or a clustered batch,
    observes it and refits. The MD criterion selects without a model; a model
    is still fitted whenever accuracy metrics are tracked and at the end.
    """
    cfg = config
    m = cfg.m
    observer = Observer(cfg.objective)
    truth = cfg.objective if cfg.has_truth else None
    test_matrix = None
    if truth is not None:
        test_matrix = cfg.test_matrix or latin_hypercube(cfg.test_matrix_size, m, cfg.seed ^ TEST_TAG)

    design = cfg.initial_design or md_optimized_design(cfg.n0, m, cfg.seed, cfg.md_budget)
    if design.n != cfg.n0:
        raise ValueError("initial design size differs from n0")
    pool = as_points(cfg.candidates) if cfg.candidates is not None else as_points(
        _cached_grid(cfg.n_all, m, cfg.seed ^ GRID_TAG, cfg.candidate_method, cfg.md_budget)
    )
    pool = _remove_in_design(pool, design)

    needs_model = cfg.criterion.needs_model or truth is not None
    records: List[RoundRecord] = []
    result = CampaignResult(cfg.to_dict(), records, design, np.empty(0), 0)

    def fit_model(des, obs, previous, rnd):
        if previous is not None and cfg.freeze_hyperparameters:
            return refit_with(previous, des, obs)
        warm = previous.kernel if previous is not None else None
        return fit(des, obs, rng_seed=cfg.seed ^ (FIT_TAG + rnd), warm_start=warm, n_starts=cfg.n_starts)

    def record(rnd, pts, obs, model, alpha=None, fallback=False):
        rec = RoundRecord(rnd, np.asarray(pts), np.asarray(obs), model.summary() if model else None, alpha_used=alpha, fallback=fallback)
        if model is not None and truth is not None:
            rep = metrics(model, truth, test_matrix)
            rec.rmse, rec.mae = rep.rmse, rep.mae
        records.append(rec)
        return rec

    try:
        y = observer(design)
        model = fit_model(design, y, None, 0) if needs_model else None
        record(0, design.points, y, model)

        rnd = 0
        while not _done(cfg, rnd, design, records):
            rnd += 1
            b = cfg.batch.b
            if cfg.termination.kind == "points":
                b = min(b, int(cfg.termination.value) - design.n)
            if pool.shape[0] < b:
                raise CampaignError("candidate pool exhausted")
            if cfg.regenerate_candidates:
                pool = _remove_in_design(
                    as_points(candidate_grid(cfg.n_all, m, cfg.seed ^ GRID_TAG ^ rnd, cfg.candidate_method, cfg.md_budget)),
                    design,
                )
            scores = score_candidates(cfg.criterion, model if cfg.criterion.needs_model else None, design, pool, jobs=cfg.jobs)
            alpha, fallback = None, False
            if b == 1:
                chosen = naive_top_b(scores, 1)
            else:
                try:
                    part = select_batch(pool, scores, replace(cfg.batch, b=b))
                except ClusteringError:
                    part = top_b_distinct(pool, scores, b)
                chosen, alpha, fallback = part.batch, part.alpha_used, part.fallback
            batch = pool[chosen]
            pool = np.delete(pool, chosen, axis=0)
            yb = observer(batch)
            design = design.append(batch)
            y = np.concatenate([y, yb])
            model = fit_model(design, y, model, rnd) if needs_model else None
            record(rnd, batch, yb, model, alpha, fallback)
            log.info("round %d: n=%d rmse=%s", rnd, design.n, records[-1].rmse)

        if model is None:
            model = fit_model(design, y, None, rnd)
    except (CampaignError, NumericalError, EmptyCandidatesError) as exc:
        result.final_design = design
        result.n_evaluations = observer.n_evaluations
        if isinstance(exc, CampaignError):
            exc.result = result
            raise
        raise CampaignError(str(exc), result) from exc

    result.final_design = design
    result.final_observations = y
    result.n_evaluations = observer.n_evaluations
    result.final_model = model
    return result


def _done(cfg: CampaignConfig, rnd: int, design: DesignMatrix, records) -> bool:
    kind = cfg.termination.kind
    if kind == "rounds":
        return rnd >= cfg.rounds
    if kind == "points":
        return design.n >= cfg.termination.value
    # rmse threshold, with the round cap as a safety stop
    return records[-1].rmse <= cfg.termination.value or rnd >= cfg.rounds
