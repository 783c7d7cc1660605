"""Measurements: error decompositions, correlation densities, spectra, tests."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coders import LassoParams, lasso
from .core import SeededRng, svd
from .errors import ConfigError, DegenerateSample, DimensionMismatch, EmptyInput
from .synth import ZERO_TOL, Perturbation

# ---------------------------------------------------------------- error split


@dataclass(frozen=True)
class ErrorDecomposition:
    """Squared code error split by the true support (arrays for a batch)."""

    excess: np.ndarray | float
    missing: np.ndarray | float
    in_support: np.ndarray | float

    @property
    def total(self):
        return self.excess + self.missing + self.in_support

    def mean(self) -> "ErrorDecomposition":
        return ErrorDecomposition(
            float(np.mean(self.excess)), float(np.mean(self.missing)), float(np.mean(self.in_support))
        )


def error_decomposition(alpha_true, alpha_hat, zero_tol: float = ZERO_TOL) -> ErrorDecomposition:
    """Excess error off the true support, energy of true atoms lost, and error on kept atoms."""
    t = np.asarray(alpha_true, dtype=float)
    h = np.asarray(alpha_hat, dtype=float)
    if t.shape != h.shape:
        raise DimensionMismatch(f"code shapes differ: {t.shape} vs {h.shape}")
    on_true = np.abs(t) > zero_tol
    on_hat = np.abs(h) > zero_tol
    excess = np.sum(np.where(on_true, 0.0, h * h), axis=-1)
    missing = np.sum(np.where(on_true & ~on_hat, t * t, 0.0), axis=-1)
    diff = h - t
    in_support = np.sum(np.where(on_true & on_hat, diff * diff, 0.0), axis=-1)
    return ErrorDecomposition(excess, missing, in_support)


# ---------------------------------------------------------------- correlations


def _deltas(perturbations) -> np.ndarray:
    if isinstance(perturbations, Perturbation):
        rows = np.atleast_2d(perturbations.delta)
    elif isinstance(perturbations, np.ndarray):
        rows = np.atleast_2d(perturbations)
    else:
        items = list(perturbations)
        if not items:
            raise EmptyInput("no perturbations given")
        rows = np.vstack([np.atleast_2d(getattr(p, "delta", p)) for p in items])
    if rows.size == 0:
        raise EmptyInput("no perturbations given")
    return np.asarray(rows, dtype=float)


def corr_density(perturbations, d: np.ndarray) -> np.ndarray:
    """Share of total absolute correlation picked up by each atom.

    Each perturbation is normalized to unit l2 norm first. The result has
    one entry per atom and sums to one.
    """
    rows = _deltas(perturbations)
    if rows.shape[1] != d.shape[0]:
        raise DimensionMismatch(f"perturbation length {rows.shape[1]} != dictionary rows {d.shape[0]}")
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise EmptyInput("zero perturbation cannot be normalized")
    per_atom = np.abs((rows / norms) @ d).sum(axis=0)
    return per_atom / per_atom.sum()


@dataclass(frozen=True)
class SpectraSample:
    category: str
    atoms: np.ndarray
    singular_values: np.ndarray

    @property
    def sigma_min(self) -> float:
        return float(self.singular_values[-1])


def sample_submatrix_spectra(
    d: np.ndarray,
    density: np.ndarray,
    rng: SeededRng,
    n_samples: int = 50,
    pool: int = 60,
    pick: int = 30,
) -> list[SpectraSample]:
    """Singular values of random column subsets in three categories.

    ``Top`` draws ``pick`` atoms from the ``pool`` highest-density atoms,
    ``Bottom`` from the ``pool`` lowest, ``Random`` from all atoms.
    """
    n = d.shape[1]
    if pool > n:
        raise ConfigError(f"pool {pool} exceeds the {n} atoms")
    if not 1 <= pick <= pool:
        raise ConfigError(f"need 1 <= pick <= pool, got pick={pick}, pool={pool}")
    density = np.asarray(density, dtype=float)
    order = np.argsort(-density, kind="stable")
    pools = {"Top": order[:pool], "Bottom": order[::-1][:pool], "Random": np.arange(n)}
    out = []
    for k, (category, candidates) in enumerate(pools.items()):
        r = rng.derive(k)
        for _ in range(n_samples):
            atoms = np.sort(r.choice(candidates, size=pick, replace=False))
            out.append(SpectraSample(category, atoms, svd(d[:, atoms]).singular_values))
    return out


def spectra_summary(samples: list[SpectraSample]) -> dict:
    summary = {}
    for category in ("Top", "Bottom", "Random"):
        group = [s for s in samples if s.category == category]
        if not group:
            continue
        mins = np.array([s.sigma_min for s in group])
        maxs = np.array([s.singular_values[0] for s in group])
        summary[category] = {
            "count": len(group),
            "mean_sigma_min": float(mins.mean()),
            "mean_sigma_max": float(maxs.mean()),
            "mean_condition": float(np.mean(maxs / mins)),
        }
    return summary


def perturbation_code_stats(d: np.ndarray, deltas, beta: float = 0.05) -> dict:
    """LASSO codes of the perturbations themselves.

    Returns the magnitudes of all nonzero coefficients, the per-perturbation
    nonzero counts and energies (sum of squared coefficients).
    """
    rows = _deltas(deltas)
    codes = np.atleast_2d(lasso(d, rows, LassoParams(beta)))
    nz = codes != 0
    return {
        "nonzero_values": np.abs(codes[nz]),
        "nonzero_counts": nz.sum(axis=1),
        "energies": np.sum(codes * codes, axis=1),
        "codes": codes,
    }


# ---------------------------------------------------------------- statistics


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    dd = 1.0 - qab * x / qap
    if abs(dd) < tiny:
        dd = tiny
    dd = 1.0 / dd
    h = dd
    for m in range(1, 100000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        dd = 1.0 + aa * dd
        if abs(dd) < tiny:
            dd = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        dd = 1.0 / dd
        h *= dd * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        dd = 1.0 + aa * dd
        if abs(dd) < tiny:
            dd = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        dd = 1.0 / dd
        delta = dd * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)``."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, df: float) -> float:
    if not math.isfinite(t):
        return 0.0
    return min(1.0, betainc(df / 2.0, 0.5, df / (df + t * t)))


def f_survival(f: float, d1: float, d2: float) -> float:
    if f <= 0:
        return 1.0
    if not math.isfinite(f):
        return 0.0
    return betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    df: tuple = ()


TestResult.__test__ = False  # not a pytest class


def _sample(values, name) -> np.ndarray:
    v = np.asarray(values, dtype=float).ravel()
    if v.size < 2:
        raise DegenerateSample(f"{name} needs at least two values")
    if not np.all(np.isfinite(v)):
        raise DegenerateSample(f"{name} has non-finite values")
    return v


def welch_t_test(a, b) -> TestResult:
    """Two-sided unequal-variance t-test with Welch-Satterthwaite degrees of freedom."""
    a, b = _sample(a, "a"), _sample(b, "b")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    se2 = va + vb
    if se2 <= 0:
        raise DegenerateSample("both samples have zero variance")
    t = float((a.mean() - b.mean()) / math.sqrt(se2))
    df = se2 * se2 / (va * va / (a.size - 1) + vb * vb / (b.size - 1))
    return TestResult(t, float(t_two_sided_p(t, float(df))), (float(df),))


def levene_test(a, b) -> TestResult:
    """Classic two-group Levene test (deviations from the group means)."""
    groups = [_sample(a, "a"), _sample(b, "b")]
    z = [np.abs(g - g.mean()) for g in groups]
    n_total = sum(g.size for g in groups)
    grand = np.concatenate(z).mean()
    between = sum(zi.size * (zi.mean() - grand) ** 2 for zi in z)
    within = sum(np.sum((zi - zi.mean()) ** 2) for zi in z)
    k = len(groups)
    if within <= 0:
        raise DegenerateSample("absolute deviations have zero spread; variance test undefined")
    f = float((n_total - k) / (k - 1) * between / within)
    return TestResult(f, float(f_survival(f, k - 1, n_total - k)), (k - 1, n_total - k))


def nearest_rank(values, q: float) -> float:
    """Nearest-rank percentile for ``q`` in [0, 1]."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise EmptyInput("no values")
    rank = max(1, math.ceil(q * v.size))
    return float(v[min(rank, v.size) - 1])


def summarize(values) -> dict:
    v = np.asarray(values, dtype=float)
    return {
        "mean": float(v.mean()),
        "q25": nearest_rank(v, 0.25),
        "q75": nearest_rank(v, 0.75),
        "count": int(v.size),
    }
