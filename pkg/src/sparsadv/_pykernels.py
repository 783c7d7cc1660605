"""NumPy implementations of the hot loops, used when the extension is absent.

The Jacobi sweep here visits column pairs in round-robin tournament order
so that each round rotates ``n/2`` disjoint pairs at once.
"""

import numpy as np

BACKEND = "python"


def _round_robin(n):
    """Pairings for a round-robin tournament on ``n`` (even) players."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        half = n // 2
        p = np.array(players[:half])
        q = np.array(players[half:][::-1])
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_orthogonalize(a, tol, max_sweeps):
    a = np.asarray(a, dtype=float)
    m, n = a.shape
    padded = n + (n % 2)
    w = np.zeros((m, padded))
    w[:, :n] = a
    v = np.eye(padded)
    rounds = _round_robin(padded) if padded > 1 else []
    for sweep in range(max_sweeps):
        rotated = 0
        for p, q in rounds:
            wp, wq = w[:, p], w[:, q]
            alpha = np.einsum("ij,ij->j", wp, wp)
            beta = np.einsum("ij,ij->j", wq, wq)
            gamma = np.einsum("ij,ij->j", wp, wq)
            act = (gamma != 0.0) & (np.abs(gamma) > tol * np.sqrt(alpha * beta))
            if not act.any():
                continue
            rotated += int(act.sum())
            p, q = p[act], q[act]
            wp, wq = wp[:, act], wq[:, act]
            alpha, beta, gamma = alpha[act], beta[act], gamma[act]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            w[:, p], w[:, q] = c * wp - s * wq, s * wp + c * wq
            vp, vq = v[:, p], v[:, q]
            v[:, p], v[:, q] = c * vp - s * vq, s * vp + c * vq
        if rotated == 0:
            return w[:, :n].copy(), v[:n, :n].copy(), sweep + 1
    return w[:, :n].copy(), v[:n, :n].copy(), -1


def omp_batch(d, x, max_atoms, tol):
    d = np.asarray(d, dtype=float)
    x = np.asarray(x, dtype=float)
    m, n = d.shape
    if x.shape[1] != m:
        raise ValueError("signal length does not match dictionary rows")
    max_atoms = min(max_atoms, m)
    codes = np.zeros((x.shape[0], n))
    counts = np.zeros(x.shape[0], dtype=np.intp)
    for j, xj in enumerate(x):
        res = xj.copy()
        rnorm2 = float(xj @ xj)
        floor2 = 1e-28 * rnorm2
        blocked = np.zeros(n, dtype=bool)
        q = np.zeros((max(max_atoms, 1), m))
        r = np.zeros((max(max_atoms, 1), max(max_atoms, 1)))
        qtx = np.zeros(max(max_atoms, 1))
        sel = []
        k = 0
        while k < max_atoms:
            if tol >= 0 and rnorm2 <= tol * tol:
                break
            if rnorm2 <= floor2 or rnorm2 == 0.0:
                break
            corr = np.abs(d.T @ res)
            corr[blocked] = -1.0
            best = int(np.argmax(corr))
            if corr[best] <= 0.0:
                break
            blocked[best] = True
            wv = d[:, best].copy()
            r[:k, k] = 0.0
            for _ in range(2):
                proj = q[:k] @ wv
                r[:k, k] += proj
                wv -= proj @ q[:k]
            rho = np.sqrt(wv @ wv)
            if rho <= 1e-10:
                continue
            r[k, k] = rho
            q[k] = wv / rho
            qtx[k] = q[k] @ xj
            res -= (q[k] @ res) * q[k]
            rnorm2 = float(res @ res)
            sel.append(best)
            k += 1
        coef = np.zeros(k)
        for a in range(k - 1, -1, -1):
            coef[a] = (qtx[a] - r[a, a + 1:k] @ coef[a + 1:k]) / r[a, a]
        codes[j, sel] = coef
        counts[j] = k
    return codes, counts
