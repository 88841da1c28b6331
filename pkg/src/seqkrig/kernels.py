"""Correlation functions with the derivatives needed by gradient criteria.

Two families are supported:

* ``gaussian``: separable Gaussian ``exp(-sum_k theta_k |x_k - y_k|^2)``
* ``matern``: isotropic Matérn in the ``2 sqrt(nu) phi r`` parametrization

Both carry a nugget ``g * delta(x, y)`` where ``delta`` is 1 only for
bitwise-identical points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import special

from .design_space import as_points
from .exceptions import UnsupportedKernelError

GAUSSIAN = "gaussian"
MATERN = "matern"
FAMILIES = (GAUSSIAN, MATERN)


@dataclass(frozen=True)
class KernelSpec:
    family: str = GAUSSIAN
    theta: tuple = field(default_factory=tuple)
    nu: float = 2.5
    phi: float = 1.0
    nugget: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        object.__setattr__(self, "theta", tuple(float(t) for t in np.atleast_1d(self.theta)))
        if self.family == GAUSSIAN:
            if not self.theta or any(not t > 0 for t in self.theta):
                raise ValueError("gaussian kernel needs positive theta for every axis")
        else:
            if not (self.nu > 0 and self.phi > 0):
                raise ValueError("matern kernel needs nu > 0 and phi > 0")
        if not self.nugget >= 0:
            raise ValueError("nugget must be non-negative")

    @property
    def dim(self) -> Optional[int]:
        """Input dimension fixed by the length-scales, or ``None`` for isotropic Matérn."""
        return len(self.theta) if self.family == GAUSSIAN else None

    @property
    def differentiable(self) -> bool:
        return self.family == GAUSSIAN or self.nu > 1

    def with_nugget(self, nugget: float) -> "KernelSpec":
        return replace(self, nugget=nugget)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "theta": list(self.theta),
            "nu": self.nu,
            "phi": self.phi,
            "nugget": self.nugget,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(
            family=d["family"],
            theta=tuple(d.get("theta", ())),
            nu=float(d.get("nu", 2.5)),
            phi=float(d.get("phi", 1.0)),
            nugget=float(d.get("nugget", 0.0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "KernelSpec":
        return cls.from_dict(json.loads(text))


def _check_dims(spec: KernelSpec, a: np.ndarray, b: np.ndarray):
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    if spec.dim is not None and a.shape[-1] != spec.dim:
        raise ValueError(f"kernel expects dimension {spec.dim}, got {a.shape[-1]}")


def _matern_profile(spec: KernelSpec, r: np.ndarray) -> np.ndarray:
    nu = spec.nu
    z = 2.0 * np.sqrt(nu) * spec.phi * r
    out = np.ones_like(z)
    pos = z > 0
    zp = z[pos]
    # log form keeps z^nu * K_nu(z) finite for large z
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        logk = (1.0 - nu) * np.log(2.0) - special.gammaln(nu) + nu * np.log(zp) + np.log(special.kve(nu, zp)) - zp
    out[pos] = np.exp(logk)
    return out


def _smooth_matrix(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    if spec.family == GAUSSIAN:
        return np.exp(-np.einsum("ijk,k->ij", diff * diff, np.asarray(spec.theta)))
    r = np.sqrt(np.sum(diff * diff, axis=2))
    return _matern_profile(spec, r)


def _exact_match(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.all(a[:, None, :] == b[None, :, :], axis=2)


def correlation_matrix(spec: KernelSpec, a, b, *, include_nugget: bool = True) -> np.ndarray:
    """``C[i, j] = k(a_i, b_j)`` for two point sets."""
    a = np.atleast_2d(as_points(a))
    b = np.atleast_2d(as_points(b))
    _check_dims(spec, a, b)
    c = _smooth_matrix(spec, a, b)
    if include_nugget and spec.nugget > 0:
        c = c + spec.nugget * _exact_match(a, b)
    return c


def correlation(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=float).reshape(1, -1)
    y = np.asarray(y, dtype=float).reshape(1, -1)
    return float(correlation_matrix(spec, x, y)[0, 0])


def cross_correlations(spec: KernelSpec, x, design) -> np.ndarray:
    """``r_X(x) = (k(x, x_1), ..., k(x, x_n))``."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return correlation_matrix(spec, x, design)[0]


def jacobian_batch(spec: KernelSpec, xs, design) -> np.ndarray:
    """``J[p, i, j] = d k(x_p, x_j) / d x_{p,i}`` for many points, shape ``(N, m, n)``.

    The nugget term has zero derivative.
    """
    if not spec.differentiable:
        raise UnsupportedKernelError(f"Matérn kernel with nu={spec.nu} is not differentiable (needs nu > 1)")
    xs = np.atleast_2d(as_points(xs))
    pts = as_points(design)
    _check_dims(spec, xs, pts)
    diff = xs[:, None, :] - pts[None, :, :]  # (N, n, m)
    if spec.family == GAUSSIAN:
        theta = np.asarray(spec.theta)
        k = np.exp(-np.einsum("ijk,k->ij", diff * diff, theta))
        jac = -2.0 * theta[None, None, :] * diff * k[:, :, None]
    else:
        nu = spec.nu
        r = np.sqrt(np.sum(diff * diff, axis=2))
        s = 2.0 * np.sqrt(nu) * spec.phi
        z = s * r
        dk_over_r = np.zeros_like(r)
        pos = z > 0
        zp = z[pos]
        # dk/dr = -c * s * z^nu K_{nu-1}(z); divide by r = z / s
        logv = (1.0 - nu) * np.log(2.0) - special.gammaln(nu) + (nu - 1.0) * np.log(zp) + np.log(special.kve(nu - 1.0, zp)) - zp
        dk_over_r[pos] = -s * s * np.exp(logv)
        jac = diff * dk_over_r[:, :, None]
    return np.transpose(jac, (0, 2, 1))


def cross_correlation_jacobian(spec: KernelSpec, x, design) -> np.ndarray:
    """``m x n`` matrix of ``d k(x, x_j) / d x_i``."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return jacobian_batch(spec, x, design)[0]


def second_derivative_diagonal(spec: KernelSpec) -> np.ndarray:
    """Diagonal of ``d^2 k / dx_i dy_i`` at ``y = x``; equals ``2 theta_i``."""
    if spec.family != GAUSSIAN:
        raise UnsupportedKernelError("second-derivative diagonal is only implemented for the gaussian kernel")
    return 2.0 * np.asarray(spec.theta)
