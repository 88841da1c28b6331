"""Cluster-based top-b batch selection.

Candidates are walked in descending score order and grown into clusters; the
first (best) point of each of the first ``b`` clusters forms the batch. A
candidate joins

* a singleton cluster ``{x_C}`` when the closed axis-aligned box spanned by
  ``x_C`` and the candidate holds at most ``alpha`` candidate points (both
  corners included), or
* a larger cluster when its distance to the centroid is strictly below
  ``beta`` times the mean member-to-centroid distance.

Clusters are tested in creation order and the first match wins. When the walk
ends with fewer than ``b`` clusters, ``alpha`` is shrunk and the walk repeated.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .design_space import as_points
from .exceptions import ClusteringError


@dataclass(frozen=True)
class ClusterParams:
    b: int = 1
    alpha: float = 15
    beta: float = 5.0
    alpha_decay: float = 0.5

    def __post_init__(self):
        if int(self.b) != self.b or self.b < 1:
            raise ValueError("batch size b must be a positive integer")
        if not self.alpha >= 1:
            raise ValueError("alpha must be >= 1")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not 0 < self.alpha_decay < 1:
            raise ValueError("alpha_decay must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {"b": self.b, "alpha": self.alpha, "beta": self.beta, "alpha_decay": self.alpha_decay}

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterParams":
        return cls(**{k: d[k] for k in ("b", "alpha", "beta", "alpha_decay") if k in d})


@dataclass
class ClusterPartition:
    clusters: List[List[int]]
    batch: List[int]
    alpha_used: float
    fallback: bool = False
    scores: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {
            "clusters": [list(map(int, c)) for c in self.clusters],
            "batch": list(map(int, self.batch)),
            "alpha_used": self.alpha_used,
            "fallback": self.fallback,
        }
        if self.scores is not None:
            out["scores"] = [float(s) for s in self.scores]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def score_order(scores: np.ndarray) -> np.ndarray:
    """Indices in descending score order; ties keep the lower index first."""
    return np.argsort(-np.asarray(scores, dtype=float), kind="stable")


def cluster_walk(points: np.ndarray, order: np.ndarray, b: int, alpha: float, beta: float) -> List[List[int]]:
    """One pass of the clustering walk; stops as soon as ``b`` clusters exist."""
    clusters: List[List[int]] = [[int(order[0])]]
    sums = [points[order[0]].copy()]
    for idx in order[1:]:
        if len(clusters) == b:
            break
        x = points[idx]
        placed = False
        for c, members in enumerate(clusters):
            if len(members) > 1:
                centroid = sums[c] / len(members)
                mean_dist = np.mean(np.linalg.norm(points[members] - centroid, axis=1))
                if np.linalg.norm(x - centroid) < beta * mean_dist:
                    placed = True
            else:
                xc = points[members[0]]
                lo = np.minimum(xc, x)
                hi = np.maximum(xc, x)
                inside = np.count_nonzero(np.all((points >= lo) & (points <= hi), axis=1))
                placed = inside <= alpha
            if placed:
                members.append(int(idx))
                sums[c] += x
                break
        if not placed:
            clusters.append([int(idx)])
            sums.append(x.copy())
    return clusters


def select_batch(candidates, scores, params: ClusterParams) -> ClusterPartition:
    """Pick ``params.b`` well-separated high-score candidates.

    Raises :class:`ClusteringError` (carrying the last partial partition) if
    even ``alpha = 1`` cannot produce ``b`` clusters.
    """
    pts = np.atleast_2d(as_points(candidates))
    scores = np.asarray(scores, dtype=float)
    if scores.shape[0] != pts.shape[0]:
        raise ValueError("scores and candidates differ in length")
    if pts.shape[0] < params.b:
        raise ValueError(f"need at least b={params.b} candidates, got {pts.shape[0]}")
    order = score_order(scores)
    alpha = params.alpha
    while True:
        clusters = cluster_walk(pts, order, params.b, alpha, params.beta)
        if len(clusters) >= params.b:
            return ClusterPartition(clusters, [c[0] for c in clusters], alpha, scores=scores)
        if alpha <= 1:
            partial = ClusterPartition(clusters, [c[0] for c in clusters], alpha, scores=scores)
            raise ClusteringError(f"only {len(clusters)} of {params.b} clusters formed at alpha=1", partial)
        alpha = max(1, math.floor(alpha * params.alpha_decay))


def naive_top_b(scores, b: int) -> List[int]:
    return [int(i) for i in score_order(scores)[:b]]


def top_b_distinct(candidates, scores, b: int, min_distance: float = None) -> ClusterPartition:
    """Greedy fallback: best scores subject to a minimum pairwise distance.

    The default spacing is half the mean nearest-neighbour distance of the
    candidate set; it is halved until ``b`` points fit.
    """
    pts = np.atleast_2d(as_points(candidates))
    if pts.shape[0] < b:
        raise ValueError(f"need at least b={b} candidates, got {pts.shape[0]}")
    order = score_order(scores)
    if min_distance is None:
        from scipy.spatial import cKDTree

        d, _ = cKDTree(pts).query(pts, k=2)
        min_distance = 0.5 * float(np.mean(d[:, 1]))
    while True:
        chosen: List[int] = []
        for idx in order:
            if all(np.linalg.norm(pts[idx] - pts[j]) >= min_distance for j in chosen):
                chosen.append(int(idx))
                if len(chosen) == b:
                    return ClusterPartition([[i] for i in chosen], chosen, 1, fallback=True, scores=np.asarray(scores))
        min_distance *= 0.5
