"""Point sets in the unit hypercube.

Random Latin hypercubes, the mixture discrepancy (MD) and a threshold-accepting
coordinate-exchange search that produces MD-optimized lattice designs (used both
as initial designs and as the fixed candidate grid).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

DUPLICATE_TOL = 1e-12


class DesignMatrix:
    """Immutable ``n x m`` array of distinct points in ``[0, 1]^m``.

    Rows are experimental points. Two rows count as duplicates when their
    max-coordinate distance is below ``1e-12``.
    """

    __slots__ = ("_points",)

    def __init__(self, points, *, check_duplicates: bool = True):
        arr = np.array(points, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"design must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("design contains non-finite coordinates")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("design coordinates must lie in [0, 1]")
        if check_duplicates and arr.shape[0] > 1:
            dup = find_duplicate_rows(arr)
            if dup is not None:
                raise ValueError(f"duplicate design rows {dup[0]} and {dup[1]}")
        arr.setflags(write=False)
        self._points = arr

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def n(self) -> int:
        return self._points.shape[0]

    @property
    def m(self) -> int:
        return self._points.shape[1]

    def row(self, i: int) -> np.ndarray:
        return self._points[i]

    def __len__(self) -> int:
        return self.n

    def __array__(self, dtype=None, copy=None):
        return self._points if dtype is None else self._points.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, DesignMatrix):
            return NotImplemented
        return self._points.shape == other._points.shape and np.array_equal(self._points, other._points)

    def __hash__(self):
        return hash((self._points.shape, self._points.tobytes()))

    def __repr__(self):
        return f"DesignMatrix(n={self.n}, m={self.m})"

    def append(self, new_points) -> "DesignMatrix":
        new = np.atleast_2d(np.asarray(new_points, dtype=float))
        return DesignMatrix(np.vstack([self._points, new]))

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.any(np.max(np.abs(self._points - x), axis=1) < DUPLICATE_TOL))

    # serialization -------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for row in self._points:
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DesignMatrix":
        rows = [list(map(float, r)) for r in csv.reader(io.StringIO(text)) if r]
        return cls(rows)

    def to_json(self) -> str:
        return json.dumps(self._points.tolist())

    @classmethod
    def from_json(cls, text: str) -> "DesignMatrix":
        return cls(json.loads(text))


def as_points(design) -> np.ndarray:
    """Return the raw ``(n, m)`` array behind a design or array-like."""
    if isinstance(design, DesignMatrix):
        return design.points
    arr = np.asarray(design, dtype=float)
    return arr.reshape(-1, 1) if arr.ndim == 1 else arr


def find_duplicate_rows(points: np.ndarray, tol: float = DUPLICATE_TOL):
    """First pair of rows closer than ``tol`` in max-norm, or ``None``."""
    tree = cKDTree(points)
    pairs = tree.query_pairs(tol, p=np.inf, output_type="ndarray")
    if len(pairs) == 0:
        return None
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    return int(pairs[0, 0]), int(pairs[0, 1])


@dataclass(frozen=True)
class Discrepancy:
    md_squared: float


def latin_hypercube(n: int, m: int, rng_seed: int) -> DesignMatrix:
    """Random Latin hypercube: one point per axis bin ``[i/n, (i+1)/n)``."""
    _check_size(n, m)
    sampler = qmc.LatinHypercube(d=m, seed=np.random.default_rng(rng_seed))
    return DesignMatrix(sampler.random(n))


def _check_size(n, m):
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m!r}")


# mixture discrepancy ------------------------------------------------------


def _single_factors(centered: np.ndarray) -> np.ndarray:
    a = np.abs(centered)
    return 5.0 / 3.0 - 0.25 * a - 0.25 * a * a


def _pair_factor(ci: np.ndarray, ck: np.ndarray) -> np.ndarray:
    """Per-coordinate factor of the MD double sum; broadcasts ``ci`` vs ``ck``."""
    diff = np.abs(ci - ck)
    return 15.0 / 8.0 - 0.25 * np.abs(ci) - 0.25 * np.abs(ck) - 0.75 * diff + 0.5 * diff * diff


def _pair_products(ca: np.ndarray, cb: np.ndarray) -> np.ndarray:
    """``P[i, k] = prod_j pair_factor(ca[i, j], cb[k, j])``."""
    out = np.ones((ca.shape[0], cb.shape[0]))
    for j in range(ca.shape[1]):
        out *= _pair_factor(ca[:, j][:, None], cb[:, j][None, :])
    return out


def mixture_discrepancy(design) -> Discrepancy:
    """Squared mixture discrepancy of a design in ``[0, 1]^m``."""
    pts = as_points(design)
    n, m = pts.shape
    c = pts - 0.5
    term1 = (19.0 / 12.0) ** m
    term2 = 2.0 / n * np.prod(_single_factors(c), axis=1).sum()
    term3 = _pair_products(c, c).sum() / n**2
    return Discrepancy(float(term1 - term2 + term3))


def md_squared_with_point(current, candidates) -> np.ndarray:
    """MD^2 of ``current`` augmented by each candidate row, vectorized."""
    pts = as_points(current)
    cand = np.atleast_2d(as_points(candidates))
    n, m = pts.shape
    c = pts - 0.5
    cc = cand - 0.5
    s_single = np.prod(_single_factors(c), axis=1).sum()
    s_pair = _pair_products(c, c).sum()
    cross = _pair_products(cc, c).sum(axis=1)
    self_pair = np.prod(_pair_factor(cc, cc), axis=1)
    cand_single = np.prod(_single_factors(cc), axis=1)
    n1 = n + 1
    return (19.0 / 12.0) ** m - 2.0 / n1 * (s_single + cand_single) + (s_pair + 2.0 * cross + self_pair) / n1**2


# MD-optimized lattice designs ---------------------------------------------


def lattice_levels_to_points(levels: np.ndarray) -> np.ndarray:
    """Map integer levels ``0..n-1`` to centred coordinates ``(2i+1)/(2n)``."""
    n = levels.shape[0]
    return (2.0 * levels + 1.0) / (2.0 * n)


class _ExchangeState:
    """Incremental MD^2 bookkeeping for column-wise level swaps."""

    def __init__(self, levels: np.ndarray):
        self.levels = levels.copy()
        self.n, self.m = levels.shape
        self.c = lattice_levels_to_points(self.levels) - 0.5
        self.single = np.prod(_single_factors(self.c), axis=1)
        self.pairs = _pair_products(self.c, self.c)
        self.const = (19.0 / 12.0) ** self.m
        self.commits = 0

    def value(self) -> float:
        n = self.n
        return float(self.const - 2.0 / n * self.single.sum() + self.pairs.sum() / n**2)

    def propose(self, j: int, p: int, q: int):
        """Return ``(delta, payload)`` for swapping column ``j`` of rows ``p``, ``q``."""
        rows = np.array([p, q])
        col = self.c[:, j]
        new_col = col.copy()
        new_col[rows] = col[rows[::-1]]
        # only column j's factor changes; all pair factors are >= 1, so the ratio is safe
        ratio = _pair_factor(new_col[rows][:, None], new_col[None, :]) / _pair_factor(col[rows][:, None], col[None, :])
        new_rows = self.pairs[rows] * ratio
        d_rows = new_rows - self.pairs[rows]
        d_pair = 2.0 * d_rows.sum() - d_rows[:, rows].sum()
        a_old = _single_factors(col[rows])
        new_single = self.single[rows] * (a_old[::-1] / a_old)
        d_single = (new_single - self.single[rows]).sum()
        n = self.n
        delta = -2.0 / n * d_single + d_pair / n**2
        return delta, (j, rows, new_col, new_rows, new_single)

    def commit(self, payload):
        j, rows, new_col, new_rows, new_single = payload
        p, q = rows
        self.levels[[p, q], j] = self.levels[[q, p], j]
        self.c[:, j] = new_col
        self.pairs[rows, :] = new_rows
        self.pairs[:, rows] = new_rows.T
        self.single[rows] = new_single
        self.commits += 1
        if self.commits % 500 == 0:
            # bound multiplicative drift
            self.single = np.prod(_single_factors(self.c), axis=1)
            self.pairs = _pair_products(self.c, self.c)


def md_optimized_design(
    n: int,
    m: int,
    rng_seed: int,
    budget: int = 10_000,
    *,
    n_starts: int = 50,
    threshold: float = 0.02,
    trace: Optional[list] = None,
) -> DesignMatrix:
    """Uniform-type design minimizing the mixture discrepancy.

    The search runs over lattice designs with ``n`` levels per factor (each
    column a permutation of the centred levels ``(2i-1)/(2n)``). The best of
    ``n_starts`` random lattice Latin hypercubes is improved by ``budget``
    random within-column swaps under threshold accepting: a swap is accepted
    when it raises MD^2 by less than the current threshold, which decays
    linearly from ``threshold * MD^2(start)`` to zero. The best design seen is
    returned, so the result never has a larger MD^2 than the best start.

    If ``trace`` is a list, the MD^2 value after every accepted swap is
    appended to it.
    """
    _check_size(n, m)
    if n < 2:
        raise ValueError("md_optimized_design needs n >= 2")
    if budget < 0:
        raise ValueError("budget must be non-negative")
    rng = np.random.default_rng(rng_seed)

    best_levels, best_val = None, np.inf
    for _ in range(n_starts):
        levels = np.column_stack([rng.permutation(n) for _ in range(m)])
        val = mixture_discrepancy(lattice_levels_to_points(levels)).md_squared
        if val < best_val:
            best_levels, best_val = levels, val

    if budget > 0:
        state = _ExchangeState(best_levels)
        current = state.value()
        t0 = threshold * current
        for it in range(budget):
            j = int(rng.integers(m))
            p = int(rng.integers(n))
            q = int(rng.integers(n - 1))
            q += q >= p
            delta, payload = state.propose(j, p, q)
            limit = t0 * (1.0 - it / budget)
            if delta <= 0.0 or delta < limit:
                state.commit(payload)
                current = state.value() if state.commits % 500 == 0 else current + delta
                if trace is not None:
                    trace.append(current)
                if current < best_val - 1e-15:
                    best_val = current
                    best_levels = state.levels.copy()

    return DesignMatrix(lattice_levels_to_points(best_levels), check_duplicates=False)


def candidate_grid(n_all: int, m: int, rng_seed: int, method: str = "md", budget: int = 10_000) -> DesignMatrix:
    """Fixed candidate discretization of ``[0, 1]^m``."""
    if method == "md":
        return md_optimized_design(n_all, m, rng_seed, budget)
    if method == "lhs":
        return latin_hypercube(n_all, m, rng_seed)
    raise ValueError(f"unknown candidate method {method!r}; expected 'md' or 'lhs'")


def stack_designs(designs: Iterable) -> DesignMatrix:
    return DesignMatrix(np.vstack([as_points(d) for d in designs]))
