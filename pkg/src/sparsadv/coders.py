"""Sparse coders: OMP, LASSO and LISTA (with training and input gradients).

Every coder accepts one signal of length ``m`` or a batch ``(N, m)`` and
returns codes of the matching shape.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._backend import kernels
from .core import SeededRng, soft_threshold, svd
from .errors import ConfigError, DimensionMismatch, TrainingDiverged
from .io import read_json, read_matrix, write_json, write_matrix
from .optim import Adam
from .synth import DICTIONARY_STREAM, gen_dictionary, gen_sparse_codes

log = logging.getLogger(__name__)


def _batch(x, m: int):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[1] != m:
        raise DimensionMismatch(f"signal length {x2.shape[1]} != dictionary rows {m}")
    return np.ascontiguousarray(x2), single


# ---------------------------------------------------------------- OMP


@dataclass(frozen=True)
class Sparsity:
    """OMP stops after ``s`` atoms."""

    s: int


@dataclass(frozen=True)
class Tolerance:
    """OMP stops once the residual norm is at most ``tau`` (or ``m`` atoms are used)."""

    tau: float

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tolerance must be non-negative")


OmpStop = Sparsity | Tolerance


def omp(d: np.ndarray, x, stop: OmpStop) -> np.ndarray:
    """Orthogonal matching pursuit with a least-squares refit at every step."""
    m = d.shape[0]
    x2, single = _batch(x, m)
    if isinstance(stop, Sparsity):
        if not 0 <= stop.s <= m:
            raise ValueError(f"sparsity {stop.s} outside [0, {m}]")
        codes, _ = kernels.omp_batch(np.ascontiguousarray(d, dtype=float), x2, int(stop.s), -1.0)
    elif isinstance(stop, Tolerance):
        codes, _ = kernels.omp_batch(np.ascontiguousarray(d, dtype=float), x2, m, float(stop.tau))
    else:
        raise TypeError(f"unknown OMP stopping rule {stop!r}")
    return codes[0] if single else codes


# ---------------------------------------------------------------- LASSO


@dataclass(frozen=True)
class LassoParams:
    """``beta`` weighs the l1 term; iteration stops when the KKT residual is below ``rel_tol * beta``."""

    beta: float
    max_iters: int = 20000
    rel_tol: float = 1e-7

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


def lasso_objective(d, x, a, beta) -> np.ndarray:
    r = np.atleast_2d(x) - np.atleast_2d(a) @ d.T
    return 0.5 * np.sum(r * r, axis=1) + beta * np.sum(np.abs(np.atleast_2d(a)), axis=1)


def kkt_residual(d, x, a, beta) -> np.ndarray:
    """Per-sample worst violation of the LASSO optimality conditions."""
    a = np.atleast_2d(a)
    corr = (np.atleast_2d(x) - a @ d.T) @ d
    on = a != 0
    viol = np.where(on, np.abs(corr - beta * np.sign(a)), np.maximum(np.abs(corr) - beta, 0.0))
    return viol.max(axis=1)


def _polish(d, x, a, beta):
    """Solve exactly on the current support and signs; keep it only if optimal."""
    on = np.flatnonzero(a)
    if on.size == 0 or on.size > d.shape[0]:
        return None
    ds = d[:, on]
    sign = np.sign(a[on])
    try:
        z = np.linalg.solve(ds.T @ ds, ds.T @ x - beta * sign)
    except np.linalg.LinAlgError:
        return None
    if np.any(np.sign(z) != sign):
        return None
    out = np.zeros_like(a)
    out[on] = z
    return out


def lasso(d: np.ndarray, x, params: LassoParams) -> np.ndarray:
    """Minimize ``0.5 ||x - D a||^2 + beta ||a||_1`` by accelerated proximal gradient.

    Step ``1/L`` with ``L = sigma_max(D)^2``. A step that would raise the
    objective is rejected and the momentum restarted, so objective values
    never increase. Every 20 iterations the support is polished with an
    exact solve, which is accepted only when it satisfies the KKT
    conditions.
    """
    m = d.shape[0]
    x2, single = _batch(x, m)
    beta = float(params.beta)
    lip = float(svd(d).singular_values[0]) ** 2
    gram = d.T @ d
    dtx = x2 @ d
    n_sig, n = x2.shape[0], d.shape[1]
    out = np.zeros((n_sig, n))
    tol = params.rel_tol * beta

    idx = np.arange(n_sig)
    a = np.zeros((n_sig, n))
    y = a.copy()
    t = np.ones(n_sig)
    f_a = lasso_objective(d, x2, a, beta)
    for it in range(1, params.max_iters + 1):
        grad = y @ gram - dtx[idx]
        a_new = soft_threshold(y - grad / lip, beta / lip)
        f_new = lasso_objective(d, x2[idx], a_new, beta)
        worse = f_new > f_a
        if worse.any():
            # restart from the last accepted point with a plain proximal step
            yw = a[worse]
            gw = yw @ gram - dtx[idx[worse]]
            a_new[worse] = soft_threshold(yw - gw / lip, beta / lip)
            f_new[worse] = lasso_objective(d, x2[idx[worse]], a_new[worse], beta)
            t[worse] = 1.0
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = a_new + ((t - 1.0) / t_new)[:, None] * (a_new - a)
        a, f_a, t = a_new, f_new, t_new

        if it % 20 == 0 or it == params.max_iters:
            res = kkt_residual(d, x2[idx], a, beta)
            for j in np.flatnonzero(res > tol):
                p = _polish(d, x2[idx[j]], a[j], beta)
                if p is not None and kkt_residual(d, x2[idx[j]], p, beta)[0] <= tol:
                    a[j] = p
                    res[j] = 0.0
            done = res <= tol
            if done.any():
                out[idx[done]] = a[done]
                keep = ~done
                idx, a, y, t, f_a = idx[keep], a[keep], y[keep], t[keep], f_a[keep]
                if idx.size == 0:
                    break
    if idx.size:
        log.warning("lasso: %d of %d signals hit max_iters before the KKT tolerance", idx.size, n_sig)
        out[idx] = a
    return out[0] if single else out


# ---------------------------------------------------------------- LISTA


@dataclass
class ListaModel:
    """Tied-weight LISTA: ``a_0 = st(W x, t_0)``, ``a_{k+1} = st(W x + S a_k, t_{k+1})``."""

    w_e: np.ndarray
    s_mat: np.ndarray
    thetas: np.ndarray
    history: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.w_e = np.asarray(self.w_e, dtype=float)
        self.s_mat = np.asarray(self.s_mat, dtype=float)
        self.thetas = np.asarray(self.thetas, dtype=float).reshape(-1)
        n, _ = self.w_e.shape
        if self.s_mat.shape != (n, n):
            raise DimensionMismatch(f"s_mat must be {n}x{n}, got {self.s_mat.shape}")
        if np.any(self.thetas < 0):
            raise ValueError("thresholds must be non-negative")

    @property
    def m(self) -> int:
        return self.w_e.shape[1]

    @property
    def n(self) -> int:
        return self.w_e.shape[0]

    @property
    def k_layers(self) -> int:
        return self.thetas.size

    @classmethod
    def from_dictionary(cls, d: np.ndarray, k_layers: int = 16, beta0: float = 0.1) -> "ListaModel":
        """The ISTA-equivalent starting point for dictionary ``d``."""
        lip = float(svd(d).singular_values[0]) ** 2
        w_e = d.T / lip
        s_mat = np.eye(d.shape[1]) - w_e @ d
        return cls(w_e, s_mat, np.full(k_layers, beta0 / lip))

    def save(self, directory) -> None:
        directory = Path(directory)
        write_matrix(directory / "w_e.csv", self.w_e, role="w_e")
        write_matrix(directory / "s_mat.csv", self.s_mat, role="s_mat")
        write_matrix(directory / "thetas.csv", self.thetas, role="thetas")
        write_json(directory / "manifest.json", {"m": self.m, "n": self.n, "K": self.k_layers})

    @classmethod
    def load(cls, directory) -> "ListaModel":
        directory = Path(directory)
        meta = read_json(directory / "manifest.json")
        model = cls(
            read_matrix(directory / "w_e.csv"),
            read_matrix(directory / "s_mat.csv"),
            read_matrix(directory / "thetas.csv").reshape(-1),
        )
        if (model.m, model.n, model.k_layers) != (meta["m"], meta["n"], meta["K"]):
            raise DimensionMismatch(f"{directory}: weights disagree with manifest")
        return model


def _lista_trace(model: ListaModel, x2: np.ndarray):
    """Forward pass keeping pre-activations and layer inputs for backprop."""
    b = x2 @ model.w_e.T
    pre, inputs = [], []
    a = None
    for k, theta in enumerate(model.thetas):
        z = b if k == 0 else b + a @ model.s_mat.T
        pre.append(z)
        inputs.append(a)
        a = np.sign(z) * np.maximum(np.abs(z) - theta, 0.0)
    return a, pre, inputs


def lista_forward(model: ListaModel, x) -> np.ndarray:
    x2, single = _batch(x, model.m)
    a, _, _ = _lista_trace(model, x2)
    return a[0] if single else a


def _lista_backward(model, x2, pre, inputs, g_out, want_params: bool):
    """Reverse pass. Returns (grad wrt x, grads wrt (w_e, s_mat, thetas) or None)."""
    g = g_out
    g_b = np.zeros_like(g_out)
    g_s = np.zeros_like(model.s_mat) if want_params else None
    g_t = np.zeros_like(model.thetas) if want_params else None
    for k in range(model.k_layers - 1, -1, -1):
        z = pre[k]
        # subgradient at the kink |z| == theta is taken as 0
        gz = g * (np.abs(z) > model.thetas[k])
        g_b += gz
        if want_params:
            g_t[k] = -np.sum(gz * np.sign(z))
        if k > 0:
            if want_params:
                g_s += gz.T @ inputs[k]
            g = gz @ model.s_mat
    g_x = g_b @ model.w_e
    if want_params:
        return g_x, (g_b.T @ x2, g_s, g_t)
    return g_x, None


def lista_input_grad(model: ListaModel, x, target, scale: float = 1.0) -> np.ndarray:
    """Gradient of ``scale * 0.5 * ||lista_forward(x) - target||^2`` with respect to ``x``.

    For a batch the loss is summed over rows, so each row gets its own gradient.
    """
    x2, single = _batch(x, model.m)
    t2 = np.atleast_2d(np.asarray(target, dtype=float))
    a, pre, inputs = _lista_trace(model, x2)
    g_x, _ = _lista_backward(model, x2, pre, inputs, scale * (a - t2), want_params=False)
    return g_x[0] if single else g_x


def lista_loss(model: ListaModel, x, target) -> np.ndarray:
    """Per-sample ``0.5 * ||lista_forward(x) - target||^2``."""
    a = np.atleast_2d(lista_forward(model, x))
    diff = a - np.atleast_2d(target)
    return 0.5 * np.sum(diff * diff, axis=1)


@dataclass(frozen=True)
class ListaTrainConfig:
    epochs: int = 200
    samples_per_epoch: int = 10000
    batch_size: int = 128
    learning_rate: float = 1e-3
    m: int = 64
    n: int = 128
    s: int = 5
    master_seed: int = 0
    k_layers: int = 16
    beta0: float = 0.1
    heldout: int = 1000

    def __post_init__(self):
        for name in ("epochs", "samples_per_epoch", "batch_size", "m", "n", "s", "k_layers", "heldout"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.s > self.n:
            raise ConfigError("s cannot exceed n")


def relative_code_error(est: np.ndarray, true: np.ndarray) -> float:
    """Mean squared code error divided by mean squared code norm."""
    return float(np.mean(np.sum((est - true) ** 2, axis=1)) / np.mean(np.sum(true**2, axis=1)))


def lista_train(config: ListaTrainConfig, rng: SeededRng, d: np.ndarray | None = None) -> ListaModel:
    """Fit a LISTA model on freshly generated ``(D alpha, alpha)`` pairs.

    ``d`` defaults to the dictionary of ``config.master_seed``. Each epoch
    draws its samples from ``rng.derive(0, epoch)``; the held-out set comes
    from ``rng.derive(1)``. The epoch-average losses and the
    held-out relative error are appended to ``model.history``.

    Raises TrainingDiverged if a batch loss exceeds ten times the
    starting loss.
    """
    if d is None:
        d = gen_dictionary(config.m, config.n, SeededRng(config.master_seed, DICTIONARY_STREAM))
    if d.shape != (config.m, config.n):
        raise DimensionMismatch(f"dictionary is {d.shape}, config says {(config.m, config.n)}")
    model = ListaModel.from_dictionary(d, config.k_layers, config.beta0)
    opt = Adam([model.w_e, model.s_mat, model.thetas], lr=config.learning_rate)

    held_codes = gen_sparse_codes(config.n, config.s, config.heldout, rng.derive(1))
    held_x = held_codes @ d.T
    initial = float(np.mean(lista_loss(model, held_x, held_codes)))
    limit = 10.0 * max(initial, 1e-12)

    epoch_losses = []
    for epoch in range(config.epochs):
        codes = gen_sparse_codes(config.n, config.s, config.samples_per_epoch, rng.derive(0, epoch))
        xs = codes @ d.T
        total = 0.0
        for start in range(0, config.samples_per_epoch, config.batch_size):
            xb = xs[start : start + config.batch_size]
            ab = codes[start : start + config.batch_size]
            nb = xb.shape[0]
            out, pre, inputs = _lista_trace(model, xb)
            diff = out - ab
            loss = 0.5 * float(np.sum(diff * diff)) / nb
            if not np.isfinite(loss) or loss > limit:
                raise TrainingDiverged(
                    f"epoch {epoch}: batch loss {loss:.4g} exceeds 10x the initial {initial:.4g}"
                )
            total += loss * nb
            _, grads = _lista_backward(model, xb, pre, inputs, diff / nb, want_params=True)
            opt.step(grads)
            np.maximum(model.thetas, 0.0, out=model.thetas)
        epoch_losses.append(total / config.samples_per_epoch)
        if epoch % 20 == 0 or epoch == config.epochs - 1:
            log.info("lista epoch %d loss %.6f", epoch, epoch_losses[-1])

    model.history = {
        "epoch_loss": epoch_losses,
        "initial_heldout_loss": initial,
        "heldout_relative_error": relative_code_error(lista_forward(model, held_x), held_codes),
    }
    return model
