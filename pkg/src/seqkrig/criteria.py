"""Point-selection criteria for sequential Kriging designs.

Every criterion is a score to be maximized over a candidate set. All
model-based criteria accept a single point ``(m,)`` (returning a float) or a
stack of points ``(N, m)`` (returning an array).
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .design_space import DesignMatrix, DUPLICATE_TOL, as_points, md_squared_with_point
from .exceptions import EmptyCandidatesError
from .kriging import KrigingModel

CHUNK = 256


class Criterion(str, Enum):
    EI0 = "EI0"
    EI1 = "EI1"
    EI2 = "EI2"
    MAX_VARIANCE = "MaxVariance"
    MD = "MD"
    GRADIENT = "Gradient"
    VARIANCE_BOUND = "VarianceBound"

    @classmethod
    def parse(cls, name) -> "Criterion":
        if isinstance(name, cls):
            return name
        key = str(name).strip()
        for c in cls:
            if key == c.value or key.upper() == c.name:
                return c
        alias = _ALIASES.get(key.lower())
        if alias is None:
            raise ValueError(f"unknown criterion {name!r}")
        return alias

    @property
    def needs_model(self) -> bool:
        return self is not Criterion.MD

    @property
    def short(self) -> str:
        return _SHORT[self]


_ALIASES = {
    "ei0": Criterion.EI0,
    "ei1": Criterion.EI1,
    "ei2": Criterion.EI2,
    "s": Criterion.MAX_VARIANCE,
    "var_s": Criterion.MAX_VARIANCE,
    "maxvariance": Criterion.MAX_VARIANCE,
    "md": Criterion.MD,
    "gra": Criterion.GRADIENT,
    "gradient": Criterion.GRADIENT,
    "var": Criterion.VARIANCE_BOUND,
    "variancebound": Criterion.VARIANCE_BOUND,
}
_SHORT = {
    Criterion.EI0: "ei0",
    Criterion.EI1: "ei1",
    Criterion.EI2: "ei2",
    Criterion.MAX_VARIANCE: "s",
    Criterion.MD: "md",
    Criterion.GRADIENT: "gra",
    Criterion.VARIANCE_BOUND: "var",
}


@dataclass(frozen=True)
class NearestNeighborInfo:
    index: int
    distance: float
    f_star: float


def _query(x):
    arr = np.asarray(x, dtype=float)
    single = arr.ndim <= 1
    return (arr.reshape(1, -1) if single else arr), single


def _nearest(points: np.ndarray, xs: np.ndarray):
    """Indices and distances of the Euclidean-nearest design rows (lowest index on ties)."""
    d2 = np.sum((xs[:, None, :] - points[None, :, :]) ** 2, axis=2)
    idx = np.argmin(d2, axis=1)
    return idx, np.sqrt(d2[np.arange(len(xs)), idx])


def nearest_neighbor(design, observations, x) -> NearestNeighborInfo:
    pts = as_points(design)
    if pts.shape[0] == 0:
        raise ValueError("design is empty")
    xs, _ = _query(x)
    idx, dist = _nearest(pts, xs)
    i = int(idx[0])
    return NearestNeighborInfo(i, float(dist[0]), float(np.asarray(observations)[i]))


def _out(values, single):
    return float(values[0]) if single else values


def phi_s(model: KrigingModel, x):
    """Prediction variance."""
    return model.predict_variance(x)


def phi_md(current, x):
    """Negative MD^2 of the current design augmented by ``x`` (needs no model)."""
    xs, single = _query(x)
    pts = as_points(current)
    if single:
        DesignMatrix(np.vstack([pts, xs]))  # raises on duplicates
    return _out(-md_squared_with_point(pts, xs), single)


def _taylor_deviation(model: KrigingModel, xs: np.ndarray):
    """``yhat(x) - f(x*) - grad yhat(x*)' (x - x*)`` and ``d(x, x*)``."""
    pts = model.design.points
    idx, dist = _nearest(pts, xs)
    yhat = model.predict(xs)
    f_star = model.observations[idx]
    # the surrogate gradient stands in for the unknown true gradient at x*
    grads = model.predict_gradient(pts)
    slope = np.sum(grads[idx] * (xs - pts[idx]), axis=1)
    return yhat - f_star - slope, dist


def phi_ei0(model: KrigingModel, x):
    xs, single = _query(x)
    idx, _ = _nearest(model.design.points, xs)
    bias = model.predict(xs) - model.observations[idx]
    return _out(bias * bias + model.predict_variance(xs), single)


def phi_ei1(model: KrigingModel, x):
    xs, single = _query(x)
    dev, _ = _taylor_deviation(model, xs)
    return _out(dev * dev + model.predict_variance(xs), single)


def phi_ei2(model: KrigingModel, x):
    xs, single = _query(x)
    dev, dist = _taylor_deviation(model, xs)
    return _out(dev * dev * dist + model.predict_variance(xs), single)


def phi_gra(model: KrigingModel, x):
    """``sqrt(E||grad f||^2) d(x, x*) + |yhat(x) - f(x*)|``."""
    xs, single = _query(x)
    idx, dist = _nearest(model.design.points, xs)
    spread = np.abs(model.predict(xs) - model.observations[idx])
    return _out(np.sqrt(model.gradient_norm_expectation(xs)) * dist + spread, single)


def phi_var(model: KrigingModel, x):
    """``min(sqrt(k(x,x) - r'K^-1 r), sqrt(sum_i g_i(x)) d(x, x*))``, without tau."""
    xs, single = _query(x)
    _, dist = _nearest(model.design.points, xs)
    sd = np.sqrt(model.correlation_residual(xs))
    bound = np.sqrt(np.sum(model.gradient_variance_diagonal(xs), axis=1)) * dist
    return _out(np.minimum(sd, bound), single)


_MODEL_CRITERIA = {
    Criterion.EI0: phi_ei0,
    Criterion.EI1: phi_ei1,
    Criterion.EI2: phi_ei2,
    Criterion.MAX_VARIANCE: phi_s,
    Criterion.GRADIENT: phi_gra,
    Criterion.VARIANCE_BOUND: phi_var,
}


def evaluate(criterion, model: Optional[KrigingModel], current, xs) -> np.ndarray:
    """Scores of ``criterion`` at the rows of ``xs`` (no duplicate checks)."""
    criterion = Criterion.parse(criterion)
    xs = np.atleast_2d(as_points(xs))
    if criterion is Criterion.MD:
        return -md_squared_with_point(current, xs)
    if model is None:
        raise ValueError(f"criterion {criterion.value} needs a fitted model")
    return np.asarray(_MODEL_CRITERIA[criterion](model, xs), dtype=float)


@dataclass(frozen=True)
class Selection:
    index: int
    value: float
    scores: np.ndarray  # -inf where the candidate is already in the design

    def to_csv(self, candidates) -> str:
        pts = as_points(candidates)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{j + 1}" for j in range(pts.shape[1])] + ["score"])
        for row, s in zip(pts, self.scores):
            w.writerow([repr(float(v)) for v in row] + [repr(float(s))])
        return buf.getvalue()


def in_design_mask(current, candidates) -> np.ndarray:
    """Candidate rows that coincide (within 1e-12) with a current design row."""
    from scipy.spatial import cKDTree

    cur = as_points(current)
    cand = as_points(candidates)
    dist, _ = cKDTree(cur).query(cand, k=1, p=np.inf)
    return dist < DUPLICATE_TOL


def score_candidates(criterion, model, current, candidates, *, jobs: int = 1) -> np.ndarray:
    """Scores over a candidate set; rows already in ``current`` get ``-inf``.

    Candidates are scored in fixed-size chunks whether or not threads are
    used, so serial and parallel runs give bit-identical scores.
    """
    criterion = Criterion.parse(criterion)
    cand = as_points(candidates)
    if current is None:
        current = model.design
    mask = in_design_mask(current, cand)
    scores = np.full(cand.shape[0], -np.inf)
    live = np.flatnonzero(~mask)
    chunks = [live[i : i + CHUNK] for i in range(0, len(live), CHUNK)]

    def work(ix):
        return evaluate(criterion, model, current, cand[ix])

    if jobs > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(ix) for ix in chunks]
    for ix, vals in zip(chunks, results):
        scores[ix] = vals
    return scores


def argmax_over_candidates(criterion, model, current, candidates, *, jobs: int = 1) -> Selection:
    """Lowest-index maximizer of the criterion over the candidate rows."""
    criterion = Criterion.parse(criterion)
    if criterion.needs_model and model is None:
        raise ValueError(f"criterion {criterion.value} needs a fitted model")
    scores = score_candidates(criterion, model, current, candidates, jobs=jobs)
    if not np.any(np.isfinite(scores)):
        raise EmptyCandidatesError("every candidate is already in the current design")
    idx = int(np.argmax(scores))
    return Selection(idx, float(scores[idx]), scores)
