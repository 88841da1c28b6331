"""Zero-mean (simple) Kriging with maximum-likelihood hyperparameters.

Besides the usual predictor and variance the model exposes the predictor
gradient, the diagonal of the posterior gradient covariance and the expected
squared gradient norm, which drive the gradient- and variance-based criteria.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy import linalg, optimize

from .design_space import DesignMatrix, as_points
from .exceptions import NumericalError, UnsupportedKernelError
from .kernels import GAUSSIAN, MATERN, KernelSpec, correlation_matrix, jacobian_batch, second_derivative_diagonal

log = logging.getLogger(__name__)

THETA_BOUNDS = (1e-3, 1e3)
NUGGET_BOUNDS = (1e-8, 1.0)
PHI_BOUNDS = (1e-2, 1e2)
NUGGET_CEILING = 1e-2
NEGATIVE_TOL = 1e-10


def _as_query(x, m: int):
    arr = np.asarray(x, dtype=float)
    single = arr.ndim <= 1
    arr = arr.reshape(1, -1) if single else arr
    if arr.shape[1] != m:
        raise ValueError(f"expected points of dimension {m}, got {arr.shape[1]}")
    return arr, single


def _cholesky(kernel: KernelSpec, pts: np.ndarray):
    k = correlation_matrix(kernel, pts, pts)
    return k, linalg.cholesky(k, lower=True)


@dataclass(frozen=True, eq=False)
class KrigingModel:
    """Fitted Kriging surrogate.

    ``chol`` is the lower Cholesky factor of ``K(X)`` and ``kinv_y`` is
    ``K(X)^-1 (Y - mean)``. ``mean`` is zero unless the model was fitted with
    centring switched on.
    """

    design: DesignMatrix
    observations: np.ndarray
    kernel: KernelSpec
    tau_squared: float
    chol: np.ndarray
    kinv_y: np.ndarray
    log_likelihood: float
    mean: float = 0.0
    nugget_escalations: int = 0

    @classmethod
    def from_hyperparameters(
        cls,
        design,
        observations,
        kernel: KernelSpec,
        tau_squared: Optional[float] = None,
        *,
        mean: float = 0.0,
        escalate: bool = True,
    ) -> "KrigingModel":
        """Build a model for fixed hyperparameters (no likelihood search).

        ``tau_squared`` defaults to its profile estimate ``Y'K^-1 Y / n``.
        If the Cholesky factorization fails the nugget is raised tenfold, up to
        ``1e-2``, before giving up.
        """
        if not isinstance(design, DesignMatrix):
            design = DesignMatrix(design)
        y = np.asarray(observations, dtype=float).ravel()
        if y.shape[0] != design.n:
            raise ValueError(f"{y.shape[0]} observations for {design.n} design points")
        escalations = 0
        while True:
            try:
                _, chol = _cholesky(kernel, design.points)
                break
            except linalg.LinAlgError:
                if not escalate or kernel.nugget >= NUGGET_CEILING:
                    raise NumericalError(f"Cholesky factorization failed with nugget {kernel.nugget:g}") from None
                kernel = kernel.with_nugget(min(max(10.0 * kernel.nugget, NUGGET_BOUNDS[0]), NUGGET_CEILING))
                escalations += 1
                log.warning("Cholesky failed; nugget escalated to %g", kernel.nugget)
        yc = y - mean
        kinv_y = linalg.cho_solve((chol, True), yc)
        n = design.n
        quad = float(yc @ kinv_y)
        if tau_squared is None:
            tau_squared = max(quad / n, np.finfo(float).tiny)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        loglik = -0.5 * (n * np.log(2.0 * np.pi * tau_squared) + logdet + quad / tau_squared)
        y.setflags(write=False)
        return cls(design, y, kernel, float(tau_squared), chol, kinv_y, float(loglik), float(mean), escalations)

    @property
    def m(self) -> int:
        return self.design.m

    @property
    def n(self) -> int:
        return self.design.n

    @property
    def prior_variance(self) -> float:
        """Unscaled ``k(x, x) = 1 + g``."""
        return 1.0 + self.kernel.nugget

    def _solve_lower(self, rhs: np.ndarray) -> np.ndarray:
        return linalg.solve_triangular(self.chol, rhs, lower=True, check_finite=False)

    def cross(self, xs: np.ndarray) -> np.ndarray:
        return correlation_matrix(self.kernel, xs, self.design.points)

    # prediction -----------------------------------------------------------

    def predict(self, x):
        """``r(x)' K^-1 Y`` (plus the mean when centred)."""
        xs, single = _as_query(x, self.m)
        out = self.mean + self.cross(xs) @ self.kinv_y
        return float(out[0]) if single else out

    def correlation_residual(self, x):
        """Unscaled posterior variance ``k(x, x) - r' K^-1 r``, clamped at zero."""
        xs, single = _as_query(x, self.m)
        v = self._solve_lower(self.cross(xs).T)
        s = self.prior_variance - np.sum(v * v, axis=0)
        s = _clamp(s, NEGATIVE_TOL, "prediction variance")
        return float(s[0]) if single else s

    def predict_variance(self, x):
        """``tau^2 (k(x, x) - r' K^-1 r)``."""
        s = self.correlation_residual(x)
        return self.tau_squared * s

    # gradients ------------------------------------------------------------

    def _require_gaussian(self):
        if self.kernel.family != GAUSSIAN:
            raise UnsupportedKernelError("gradient quantities are only available for the gaussian kernel")

    def predict_gradient(self, x):
        """``grad r(x)' K^-1 Y``; shape ``(m,)`` or ``(N, m)``."""
        xs, single = _as_query(x, self.m)
        jac = jacobian_batch(self.kernel, xs, self.design.points)
        g = jac @ self.kinv_y
        return g[0] if single else g

    def gradient_variance_diagonal(self, x):
        """``g_i(x) = 2 theta_i - (J K^-1 J')_ii`` for every coordinate."""
        self._require_gaussian()
        xs, single = _as_query(x, self.m)
        jac = jacobian_batch(self.kernel, xs, self.design.points)  # (N, m, n)
        big_n, m, n = jac.shape
        w = self._solve_lower(jac.reshape(big_n * m, n).T)
        q = np.sum(w * w, axis=0).reshape(big_n, m)
        prior = second_derivative_diagonal(self.kernel)
        g = prior[None, :] - q
        g = _clamp(g, NEGATIVE_TOL * np.maximum(1.0, prior)[None, :], "gradient variance")
        return g[0] if single else g

    def gradient_norm_expectation(self, x):
        """Posterior expectation of ``||grad f(x)||^2``."""
        xs, single = _as_query(x, self.m)
        grad = self.predict_gradient(xs)
        diag = self.gradient_variance_diagonal(xs)
        out = np.sum(grad * grad, axis=1) + self.tau_squared * np.sum(diag, axis=1)
        return float(out[0]) if single else out

    # serialization --------------------------------------------------------

    def summary(self) -> dict:
        return {
            "kernel": self.kernel.to_dict(),
            "tau_squared": self.tau_squared,
            "log_likelihood": self.log_likelihood,
            "mean": self.mean,
            "n": self.n,
            "nugget_escalations": self.nugget_escalations,
        }


def _clamp(values: np.ndarray, tol, what: str) -> np.ndarray:
    if np.any(values < -tol):
        raise NumericalError(f"{what} is negative beyond roundoff (min {np.min(values):.3e})")
    return np.maximum(values, 0.0)


# maximum likelihood ---------------------------------------------------------


class _ProfileLikelihood:
    """Negative profile log-likelihood over log-hyperparameters."""

    def __init__(self, pts: np.ndarray, y: np.ndarray, family: str, nu: float):
        self.pts = pts
        self.y = y
        self.family = family
        self.nu = nu
        self.n, self.m = pts.shape
        diff = pts[:, None, :] - pts[None, :, :]
        self.sq = diff * diff  # (n, n, m)
        self.dist = np.sqrt(self.sq.sum(axis=2))

    def kernel(self, params: np.ndarray) -> KernelSpec:
        if self.family == GAUSSIAN:
            return KernelSpec(GAUSSIAN, theta=tuple(np.exp(params[:-1])), nugget=float(np.exp(params[-1])))
        return KernelSpec(MATERN, nu=self.nu, phi=float(np.exp(params[0])), nugget=float(np.exp(params[-1])))

    def __call__(self, params: np.ndarray):
        n = self.n
        g = np.exp(params[-1])
        if self.family == GAUSSIAN:
            theta = np.exp(params[:-1])
            smooth = np.exp(-self.sq @ theta)
        else:
            smooth = correlation_matrix(self.kernel(params), self.pts, self.pts, include_nugget=False)
        k = smooth + g * np.eye(n)
        try:
            chol = linalg.cholesky(k, lower=True, check_finite=False)
        except (linalg.LinAlgError, ValueError):
            return 1e25, np.zeros_like(params)
        alpha = linalg.cho_solve((chol, True), self.y, check_finite=False)
        quad = float(self.y @ alpha)
        if not quad > 0:
            return 1e25, np.zeros_like(params)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        nll = 0.5 * n * np.log(quad / n) + 0.5 * logdet
        if self.family != GAUSSIAN:
            return nll, None
        kinv = linalg.cho_solve((chol, True), np.eye(n), check_finite=False)
        mmat = (n / (2.0 * quad)) * np.outer(alpha, alpha) - 0.5 * kinv
        grad = np.empty_like(params)
        weighted = mmat * smooth
        grad[:-1] = -theta * np.einsum("ij,ijk->k", weighted, self.sq)
        grad[-1] = g * ((n / (2.0 * quad)) * alpha @ alpha - 0.5 * np.trace(kinv))
        return nll, -grad


def fit(
    design,
    observations,
    family: str = GAUSSIAN,
    rng_seed: int = 0,
    *,
    warm_start: Optional[KernelSpec] = None,
    n_starts: int = 5,
    center: bool = False,
    nu: float = 2.5,
) -> KrigingModel:
    """Fit a Kriging model by maximizing the profile log-likelihood.

    Gaussian kernels search ``theta`` per axis in ``[1e-3, 1e3]`` and the
    nugget in ``[1e-8, 1]``, both in log-space; Matérn kernels search ``phi``
    with ``nu`` held fixed. ``n_starts`` bounded quasi-Newton runs are made;
    the first starts from ``warm_start`` when given. Results are deterministic
    for a given ``rng_seed``.
    """
    if not isinstance(design, DesignMatrix):
        design = DesignMatrix(design)
    y = np.asarray(observations, dtype=float).ravel()
    if design.n < 2:
        raise ValueError("fit needs at least two design points")
    if y.shape[0] != design.n:
        raise ValueError(f"{y.shape[0]} observations for {design.n} design points")
    if not np.all(np.isfinite(y)):
        raise ValueError("observations must be finite")
    if family not in (GAUSSIAN, MATERN):
        raise ValueError(f"unknown kernel family {family!r}")
    mean = float(np.mean(y)) if center else 0.0
    yc = y - mean
    m = design.m

    if family == GAUSSIAN:
        bounds = [tuple(np.log(THETA_BOUNDS))] * m + [tuple(np.log(NUGGET_BOUNDS))]
        default = np.array([np.log(10.0)] * m + [np.log(1e-6)])
    else:
        bounds = [tuple(np.log(PHI_BOUNDS)), tuple(np.log(NUGGET_BOUNDS))]
        default = np.array([np.log(2.0), np.log(1e-6)])
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    starts = [_warm_params(warm_start, family, m, lo, hi) if warm_start is not None else default]
    rng = np.random.default_rng(rng_seed)
    # fresh starts avoid the extreme corners of the box
    inner_lo = lo + 0.15 * (hi - lo)
    inner_hi = hi - 0.15 * (hi - lo)
    for _ in range(max(n_starts - 1, 0)):
        starts.append(rng.uniform(inner_lo, inner_hi))

    objective = _ProfileLikelihood(design.points, yc, family, nu)
    if not np.any(yc != 0.0):
        best = starts[0]
    else:
        best, best_val = starts[0], np.inf
        for x0 in starts:
            if family == GAUSSIAN:
                res = optimize.minimize(objective, x0, jac=True, method="L-BFGS-B", bounds=bounds)
            else:
                res = optimize.minimize(lambda p: objective(p)[0], x0, method="L-BFGS-B", bounds=bounds)
            if res.fun < best_val:
                best, best_val = np.clip(res.x, lo, hi), float(res.fun)
    kernel = objective.kernel(best)
    return KrigingModel.from_hyperparameters(design, y, kernel, mean=mean)


def _warm_params(spec: KernelSpec, family: str, m: int, lo, hi) -> np.ndarray:
    if spec.family != family:
        raise ValueError("warm start kernel family does not match")
    nug = max(spec.nugget, NUGGET_BOUNDS[0])
    if family == GAUSSIAN:
        if len(spec.theta) != m:
            raise ValueError("warm start theta has wrong dimension")
        p = np.log(np.array(list(spec.theta) + [nug]))
    else:
        p = np.log(np.array([spec.phi, nug]))
    return np.clip(p, lo, hi)


def refit_with(model: KrigingModel, design, observations) -> KrigingModel:
    """Same hyperparameters (including tau^2) on a new data set."""
    return KrigingModel.from_hyperparameters(design, observations, model.kernel, model.tau_squared, mean=model.mean)


def with_kernel(model: KrigingModel, **changes) -> KrigingModel:
    return KrigingModel.from_hyperparameters(model.design, model.observations, replace(model.kernel, **changes))
