"""Independent reference implementations used as test oracles.

These are written from the formulas in plain loops, sharing no code with the
package, so agreement is a meaningful cross-check.
"""

import math

import numpy as np


def naive_md_squared(points):
    """Mixture discrepancy by explicit triple loop."""
    pts = [list(map(float, row)) for row in np.atleast_2d(points)]
    n = len(pts)
    m = len(pts[0])
    first = (19.0 / 12.0) ** m
    second = 0.0
    for row in pts:
        prod = 1.0
        for v in row:
            t = abs(v - 0.5)
            prod *= 5.0 / 3.0 - t / 4.0 - t * t / 4.0
        second += prod
    third = 0.0
    for a in pts:
        for b in pts:
            prod = 1.0
            for u, v in zip(a, b):
                prod *= (
                    15.0 / 8.0
                    - abs(u - 0.5) / 4.0
                    - abs(v - 0.5) / 4.0
                    - 3.0 * abs(u - v) / 4.0
                    + (u - v) ** 2 / 2.0
                )
            third += prod
    return first - 2.0 * second / n + third / (n * n)


def literal_cluster_walk(points, scores, b, alpha, beta, alpha_decay=0.5):
    """Cluster-based top-b selection coded straight from its pseudocode.

    Returns ``(clusters, alpha_used)`` or ``(clusters, None)`` when even
    alpha = 1 leaves fewer than ``b`` clusters.
    """
    pts = [tuple(map(float, p)) for p in points]
    order = sorted(range(len(pts)), key=lambda i: (-float(scores[i]), i))

    def box_count(p, q):
        count = 0
        for r in pts:
            ok = True
            for k in range(len(p)):
                lo, hi = min(p[k], q[k]), max(p[k], q[k])
                if not (lo <= r[k] <= hi):
                    ok = False
                    break
            if ok:
                count += 1
        return count

    def dist(p, q):
        return math.sqrt(sum((u - v) ** 2 for u, v in zip(p, q)))

    a = alpha
    while True:
        clusters = [[order[0]]]
        for i in order[1:]:
            if len(clusters) >= b:
                break
            x = pts[i]
            joined = False
            for members in clusters:
                if len(members) == 1:
                    if box_count(pts[members[0]], x) <= a:
                        members.append(i)
                        joined = True
                        break
                else:
                    dims = len(x)
                    centroid = [sum(pts[j][k] for j in members) / len(members) for k in range(dims)]
                    dbar = sum(dist(pts[j], centroid) for j in members) / len(members)
                    if dist(x, centroid) < beta * dbar:
                        members.append(i)
                        joined = True
                        break
            if not joined:
                clusters.append([i])
        if len(clusters) >= b:
            return clusters, a
        if a <= 1:
            return clusters, None
        a = max(1, math.floor(a * alpha_decay))


def branin_unscaled(u, v):
    """Textbook Branin on its native box."""
    a, b, c, r, s, t = 1.0, 5.1 / (4 * math.pi**2), 5 / math.pi, 6.0, 10.0, 1 / (8 * math.pi)
    return a * (v - b * u * u + c * u - r) ** 2 + s * (1 - t) * math.cos(u) + s


def hartmann3_loops(x):
    c = [1.0, 1.2, 3.0, 3.2]
    a = [[3, 10, 30], [0.1, 10, 35], [3, 10, 30], [0.1, 10, 35]]
    p = [
        [0.3689, 0.1170, 0.2673],
        [0.4699, 0.4387, 0.7470],
        [0.1091, 0.8732, 0.5547],
        [0.03815, 0.5743, 0.8828],
    ]
    total = 0.0
    for i in range(4):
        inner = 0.0
        for j in range(3):
            inner += a[i][j] * (x[j] - p[i][j]) ** 2
        total += c[i] * math.exp(-inner)
    return -total


def matern_closed_form(nu, phi, r):
    """Half-integer Matérn in the ``2 sqrt(nu) phi r`` scaling."""
    z = 2.0 * math.sqrt(nu) * phi * r
    if nu == 0.5:
        return math.exp(-z)
    if nu == 1.5:
        return (1.0 + z) * math.exp(-z)
    if nu == 2.5:
        return (1.0 + z + z * z / 3.0) * math.exp(-z)
    raise ValueError(nu)


def central_difference(fn, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    out = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out.append((fn(x + e) - fn(x - e)) / (2 * h))
    return np.array(out)


def gaussian_gram(theta, a, b):
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2 * np.asarray(theta)).sum(axis=2)
    return np.exp(-d2)


def mc_gradient_norm_squared(design, observations, theta, nugget, tau2, x, n_samples, rng, h=1e-4):
    """Monte-Carlo mean and standard error of ``||grad f(x)||^2`` under the posterior.

    The gradient is the central-difference functional ``G = A f(S)`` on the
    ``2m``-point stencil ``S = {x +/- h e_i}``. ``G`` is Gaussian with mean
    ``A mu_S`` and covariance ``A Sigma_S A'`` computed from plain kernel
    values (no derivative formulas), and is sampled directly.
    """
    x = np.asarray(x, dtype=float)
    X = np.asarray(design, dtype=float)
    y = np.asarray(observations, dtype=float)
    m = x.size
    stencil = []
    for i in range(m):
        e = np.zeros(m)
        e[i] = h
        stencil.extend([x + e, x - e])
    S = np.array(stencil)
    A = np.zeros((m, 2 * m))
    for i in range(m):
        A[i, 2 * i] = 1.0 / (2 * h)
        A[i, 2 * i + 1] = -1.0 / (2 * h)
    K = gaussian_gram(theta, X, X) + nugget * np.eye(len(X))
    R = gaussian_gram(theta, S, X)
    mu = R @ np.linalg.solve(K, y)
    # smooth part only between distinct stencil points
    sigma = tau2 * (gaussian_gram(theta, S, S) - R @ np.linalg.solve(K, R.T))
    g_mean = A @ mu
    g_cov = A @ sigma @ A.T
    g_cov = 0.5 * (g_cov + g_cov.T)
    draws = rng.multivariate_normal(g_mean, g_cov, size=n_samples, method="eigh")
    sq = np.sum(draws * draws, axis=1)
    return float(sq.mean()), float(sq.std(ddof=1) / np.sqrt(n_samples))
