"""Perturbation constructors.

PGD ascends a loss through a differentiable model (LISTA for code
reconstruction, the task network for classification). The dictionary
attacks need only the dictionary: ``dict_attack`` returns the unit
direction along which the minimum-norm code ``pinv(D) @ delta`` grows
fastest, and ``dict_attack_cls`` the one that moves that code fastest
from one class score towards another.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coders import ListaModel, lista_forward, lista_input_grad, lista_loss
from .core import SeededRng, pinv, svd
from .errors import ConfigError, IdenticalClasses, RankDeficientDictionary
from .io import write_jsonl, write_matrix
from .synth import NormKind, Perturbation

RANK_TOL = 1e-10


@dataclass(frozen=True)
class PgdConfig:
    norm_kind: NormKind = NormKind.L2
    epsilon: float = 0.3
    iters: int = 40
    step_size: float | None = None
    random_init: bool = False

    def __post_init__(self):
        object.__setattr__(self, "norm_kind", NormKind.parse(self.norm_kind))
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.iters < 1:
            raise ConfigError("iters must be at least 1")
        if self.step_size is not None and self.step_size <= 0:
            raise ConfigError("step_size must be positive")

    @property
    def step(self) -> float:
        return self.step_size if self.step_size is not None else 2.5 * self.epsilon / self.iters


def project(delta: np.ndarray, norm_kind: NormKind, epsilon: float) -> np.ndarray:
    """Row-wise projection onto the epsilon-ball."""
    if norm_kind is NormKind.L2:
        norms = np.linalg.norm(delta, axis=1, keepdims=True)
        scale = np.minimum(1.0, epsilon / np.maximum(norms, np.finfo(float).tiny))
        return delta * scale
    return np.clip(delta, -epsilon, epsilon)


def _random_start(shape, norm_kind: NormKind, epsilon: float, rng: SeededRng) -> np.ndarray:
    """Uniform draws from the ball, one derived stream per row."""
    rows, m = shape
    out = np.empty(shape)
    for i in range(rows):
        r = rng.derive(i)
        if norm_kind is NormKind.L2:
            g = r.standard_normal(m)
            out[i] = g / np.linalg.norm(g) * epsilon * r.random() ** (1.0 / m)
        else:
            out[i] = r.random(m) * 2.0 * epsilon - epsilon
    return out


def projected_ascent(loss_and_grad, x: np.ndarray, cfg: PgdConfig, rng: SeededRng | None = None):
    """Generic batched PGD.

    ``loss_and_grad(x_batch)`` returns per-row losses and input gradients.
    Returns ``(best_delta, best_loss, clean_loss)``; the best iterate is
    kept, so ``best_loss >= clean_loss`` row by row. Rows whose gradient
    vanishes stop moving.
    """
    kind = cfg.norm_kind
    clean_loss, _ = loss_and_grad(x)
    if cfg.random_init:
        if rng is None:
            raise ConfigError("random_init needs an rng")
        delta = _random_start(x.shape, kind, cfg.epsilon, rng)
    else:
        delta = np.zeros_like(x)
    best = np.zeros_like(x)
    best_loss = clean_loss.copy()
    moving = np.ones(x.shape[0], dtype=bool)
    step = cfg.step
    for _ in range(cfg.iters):
        loss, grad = loss_and_grad(x + delta)
        better = loss > best_loss
        best[better] = delta[better]
        best_loss[better] = loss[better]
        if kind is NormKind.L2:
            gnorm = np.linalg.norm(grad, axis=1, keepdims=True)
            moving &= gnorm[:, 0] > 0
            direction = grad / np.where(gnorm > 0, gnorm, 1.0)
        else:
            direction = np.sign(grad)
            moving &= np.any(direction != 0, axis=1)
        if not moving.any():
            return best, best_loss, clean_loss
        delta = np.where(moving[:, None], project(delta + step * direction, kind, cfg.epsilon), delta)
    loss, _ = loss_and_grad(x + delta)
    better = loss > best_loss
    best[better] = delta[better]
    best_loss[better] = loss[better]
    return best, best_loss, clean_loss


def pgd_reconstruction(
    model: ListaModel,
    x,
    alpha_true,
    cfg: PgdConfig,
    rng: SeededRng | None = None,
    target: str = "true",
) -> Perturbation:
    """PGD maximizing ``0.5 ||lista(x + delta) - target||^2``.

    ``target="true"`` aims away from ``alpha_true``; ``target="clean"``
    aims away from the network's own output on ``x`` (which has zero
    gradient at the start, so pair it with ``random_init``).
    """
    x2 = np.atleast_2d(np.asarray(x, dtype=float))
    if target == "true":
        tgt = np.atleast_2d(np.asarray(alpha_true, dtype=float))
    elif target == "clean":
        tgt = np.atleast_2d(lista_forward(model, x2))
    else:
        raise ConfigError(f"unknown PGD target {target!r}")

    def loss_and_grad(xb):
        return lista_loss(model, xb, tgt), lista_input_grad(model, xb, tgt)

    best, _, _ = projected_ascent(loss_and_grad, x2, cfg, rng)
    delta = best[0] if np.ndim(x) == 1 else best
    return Perturbation(delta, cfg.norm_kind, cfg.epsilon)


def pgd_classification(net, x, labels, cfg: PgdConfig, rng: SeededRng | None = None) -> Perturbation:
    """Untargeted PGD on cross-entropy; ``net`` provides ``loss(x, y)`` and ``input_grad(x, y)``."""
    x2 = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(labels))

    def loss_and_grad(xb):
        return net.loss(xb, y), net.input_grad(xb, y)

    best, _, _ = projected_ascent(loss_and_grad, x2, cfg, rng)
    return Perturbation(best[0] if np.ndim(x) == 1 else best, cfg.norm_kind, cfg.epsilon)


def _canonical_sign(u: np.ndarray) -> float:
    """+1 or -1 so that the largest-magnitude entry of ``sign * u`` is positive."""
    k = int(np.argmax(np.abs(u)))
    return 1.0 if u[k] >= 0 else -1.0


@dataclass(frozen=True)
class DictAttackResult:
    delta: Perturbation
    code_direction: np.ndarray
    sigma_min: float


def dict_attack(d: np.ndarray, epsilon: float) -> DictAttackResult:
    """Universal perturbation of norm ``epsilon`` maximizing ``||pinv(D) delta||``.

    That is ``epsilon`` times the left singular vector of the smallest
    singular value; its minimum-norm code is ``(epsilon / sigma_min) v_min``.
    The sign is fixed so the largest-magnitude entry of ``delta`` is positive.

    Raises RankDeficientDictionary when ``sigma_min <= 1e-10``.
    """
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    res = svd(d)
    sigma = float(res.singular_values[-1])
    if sigma <= RANK_TOL:
        raise RankDeficientDictionary(f"smallest singular value {sigma:.3g} <= {RANK_TOL:g}")
    u = res.u[:, -1]
    v = res.v[:, -1]
    sign = _canonical_sign(u)
    delta = Perturbation(sign * epsilon * u, NormKind.L2, epsilon)
    return DictAttackResult(delta=delta, code_direction=sign * (epsilon / sigma) * v, sigma_min=sigma)


def _weights(w) -> np.ndarray:
    return np.asarray(getattr(w, "weights", w), dtype=float)


def _checked_pinv(d: np.ndarray) -> np.ndarray:
    res = svd(d)
    sigma = float(res.singular_values[-1])
    if sigma <= RANK_TOL:
        raise RankDeficientDictionary(f"smallest singular value {sigma:.3g} <= {RANK_TOL:g}")
    return (res.v / res.singular_values) @ res.u.T


def dict_attack_cls(d: np.ndarray, w, true_class: int, target_class: int, epsilon: float) -> Perturbation:
    """Norm-``epsilon`` perturbation maximizing ``(pinv(D) delta) . (w_target - w_true)``.

    Raises IdenticalClasses when the two class columns coincide or their
    difference has no component the dictionary can express.
    """
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    weights = _weights(w)
    w_diff = weights[:, target_class] - weights[:, true_class]
    if np.linalg.norm(w_diff) <= 1e-12:
        raise IdenticalClasses(f"classes {true_class} and {target_class} have identical weights")
    g = _checked_pinv(d).T @ w_diff
    gnorm = np.linalg.norm(g)
    if gnorm <= 1e-12:
        raise IdenticalClasses("class difference lies in the dictionary nullspace; no attack direction")
    return Perturbation(epsilon * g / gnorm, NormKind.L2, epsilon)


def dict_attack_cls_bank(d: np.ndarray, w) -> np.ndarray:
    """Unit directions for every ordered class pair: ``bank[c, i]`` moves class c towards i.

    Diagonal entries are zero. Scale by epsilon to get the perturbation.
    """
    weights = _weights(w)
    n_classes = weights.shape[1]
    p_t = _checked_pinv(d).T
    bank = np.zeros((n_classes, n_classes, d.shape[0]))
    for c in range(n_classes):
        for i in range(n_classes):
            if i == c:
                continue
            g = p_t @ (weights[:, i] - weights[:, c])
            gnorm = np.linalg.norm(g)
            if gnorm > 1e-12:
                bank[c, i] = g / gnorm
    return bank


def min_norm_code(d: np.ndarray, delta) -> np.ndarray:
    """``pinv(D) @ delta`` (row-wise for a batch)."""
    return np.asarray(delta, dtype=float) @ pinv(d).T


def choose_target(w, alpha0, true_class):
    """Closest wrong class: ``argmin_{i != c} alpha0 . (w_c - w_i)``, ties to the smallest index.

    Accepts one code and label or a batch of each.
    """
    weights = _weights(w)
    if weights.shape[1] < 2:
        raise ConfigError("need at least two classes")
    a = np.atleast_2d(np.asarray(alpha0, dtype=float))
    c = np.atleast_1d(np.asarray(true_class, dtype=int))
    scores = a @ weights
    margins = scores[np.arange(len(c)), c][:, None] - scores
    margins[np.arange(len(c)), c] = np.inf
    out = np.argmin(margins, axis=1)
    return int(out[0]) if np.ndim(true_class) == 0 else out


def write_attack_file(
    directory,
    name: str,
    attack: str,
    perturbation: Perturbation,
    loss_before=None,
    loss_after=None,
    sample_ids=None,
) -> Path:
    """Store one CSV row per perturbation and a JSONL index pointing at the rows."""
    if attack not in {"pgd", "da", "da_cls", "noise"}:
        raise ConfigError(f"unknown attack tag {attack!r}")
    directory = Path(directory)
    deltas = np.atleast_2d(perturbation.delta)
    csv_name = f"{name}_deltas.csv"
    write_matrix(directory / csv_name, deltas, role=f"{attack} perturbations")
    ids = range(len(deltas)) if sample_ids is None else sample_ids
    records = []
    for row, sid in enumerate(ids):
        metrics = {}
        if loss_before is not None:
            metrics["loss_before"] = float(np.atleast_1d(loss_before)[row])
        if loss_after is not None:
            metrics["loss_after"] = float(np.atleast_1d(loss_after)[row])
        records.append(
            {
                "sample_id": int(sid),
                "attack": attack,
                "norm_kind": perturbation.norm_kind.value,
                "epsilon": float(perturbation.budget),
                "delta_ref": f"{csv_name}#{row}",
                "metrics": metrics,
            }
        )
    path = directory / f"{name}.jsonl"
    write_jsonl(path, records)
    return path
