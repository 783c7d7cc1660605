"""Independent reference computations used by several test modules.

They rely on LAPACK through ``numpy.linalg`` rather than the package's
own Jacobi SVD, so agreement is a genuine cross-check.
"""

import numpy as np


def pga_sphere(grad_fn, value_fn, m, epsilon, rng, restarts=8, iters=4000):
    """Multi-restart projected gradient ascent on the sphere of radius epsilon."""
    best, best_val = None, -np.inf
    for _ in range(restarts):
        x = rng.standard_normal(m)
        x *= epsilon / np.linalg.norm(x)
        for _ in range(iters):
            g = grad_fn(x)
            gn = np.linalg.norm(g)
            if gn == 0:
                break
            step = x + (epsilon / gn) * g
            x_new = step * (epsilon / np.linalg.norm(step))
            if np.linalg.norm(x_new - x) <= 1e-15 * epsilon:
                x = x_new
                break
            x = x_new
        val = value_fn(x)
        if val > best_val:
            best, best_val = x, val
    return best, best_val


def da_oracle(d, epsilon, rng):
    """max ||pinv(D) delta|| over ||delta|| = epsilon."""
    p = np.linalg.pinv(d)
    ptp = p.T @ p
    return pga_sphere(lambda x: ptp @ x, lambda x: np.linalg.norm(p @ x), d.shape[0], epsilon, rng)


def da_cls_oracle(d, w_diff, epsilon, rng):
    """max (pinv(D) delta) . w_diff over ||delta|| = epsilon."""
    p = np.linalg.pinv(d)
    g = p.T @ w_diff
    return pga_sphere(lambda x: g, lambda x: float((p @ x) @ w_diff), d.shape[0], epsilon, rng, restarts=4, iters=50)
