"""Classification testbed: class-structured sparse data, a linear classifier on
codes, an MLP task network on raw signals, MOD dictionary learning, IDX
ingestion and robust-accuracy sweeps.

The task network never sees the dictionary or any code; the dictionary
attack only ever sees the dictionary and the linear classifier.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attacks import choose_target, dict_attack_cls_bank
from .coders import LassoParams, lasso
from .core import SeededRng, least_squares
from .errors import ConfigError, DimensionMismatch, EmptyInput, TrainingDiverged
from .idx import read_idx_array
from .io import read_json, read_matrix, write_json, write_matrix
from .optim import Adam
from .synth import NormKind, gen_noise, normalize_columns

log = logging.getLogger(__name__)


@dataclass
class LabeledDataset:
    signals: np.ndarray
    labels: np.ndarray | None
    codes: np.ndarray | None = None
    pools: list | None = None

    def __post_init__(self):
        self.signals = np.asarray(self.signals, dtype=float)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int)
            if len(self.labels) != len(self.signals):
                raise DimensionMismatch(f"{len(self.signals)} signals but {len(self.labels)} labels")
        if self.codes is not None and len(self.codes) != len(self.signals):
            raise DimensionMismatch("codes and signals differ in count")

    def __len__(self):
        return len(self.signals)

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(
            self.signals[idx],
            None if self.labels is None else self.labels[idx],
            None if self.codes is None else self.codes[idx],
            self.pools,
        )


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _cross_entropy(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    return lse - z[np.arange(len(labels)), labels]


# ---------------------------------------------------------------- data


def gen_class_data(
    d: np.ndarray,
    classes: int,
    per_class_pool: int,
    s: int,
    count_per_class: int,
    rng: SeededRng,
    pools=None,
) -> LabeledDataset:
    """Signals whose supports come from a class-specific pool of atoms.

    Pools are independent uniform draws unless given, so two pools share
    ``per_class_pool / n`` of their atoms on average (about 19% for the
    default 24 of 128). Nonzero values are ``|N(0,1)| + 0.5``.
    """
    n = d.shape[1]
    if not 1 <= per_class_pool <= n:
        raise ConfigError(f"pool size {per_class_pool} infeasible for {n} atoms")
    if not 1 <= s <= per_class_pool:
        raise ConfigError(f"sparsity {s} infeasible for pool size {per_class_pool}")
    if classes < 2:
        raise ConfigError("need at least two classes")
    pool_rng, sample_rng = rng.derive(0), rng.derive(1)
    if pools is None:
        pools = [np.sort(pool_rng.choice(n, per_class_pool, replace=False)) for _ in range(classes)]
    pools = [np.asarray(p, dtype=int) for p in pools]
    total = classes * count_per_class
    codes = np.zeros((total, n))
    labels = np.repeat(np.arange(classes), count_per_class)
    for c in range(classes):
        rows = slice(c * count_per_class, (c + 1) * count_per_class)
        keys = sample_rng.random((count_per_class, len(pools[c])))
        pick = np.argpartition(keys, s - 1, axis=1)[:, :s] if count_per_class else np.zeros((0, s), int)
        values = np.abs(sample_rng.standard_normal((count_per_class, s))) + 0.5
        block = np.zeros((count_per_class, n))
        np.put_along_axis(block, pools[c][pick], values, axis=1)
        codes[rows] = block
    order = sample_rng.permutation(total) if total else np.arange(0)
    codes, labels = codes[order], labels[order]
    return LabeledDataset(codes @ d.T, labels, codes, pools)


# ---------------------------------------------------------------- linear classifier


@dataclass
class LinearClassifier:
    """Scores ``codes @ weights``; ``weights`` is ``n x C``."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.ndim != 2 or self.weights.shape[1] < 2:
            raise ConfigError("classifier needs an n x C weight matrix with C >= 2")

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def c(self) -> int:
        return self.weights.shape[1]

    def scores(self, codes) -> np.ndarray:
        return np.atleast_2d(codes) @ self.weights

    def predict(self, codes) -> np.ndarray:
        return np.argmax(self.scores(codes), axis=1)

    def save(self, directory) -> None:
        directory = Path(directory)
        write_matrix(directory / "weights.csv", self.weights, role="linear classifier")
        write_json(directory / "manifest.json", {"kind": "linear", "n": self.n, "C": self.c})

    @classmethod
    def load(cls, directory) -> "LinearClassifier":
        return cls(read_matrix(Path(directory) / "weights.csv"))


def train_linear_classifier(codes, labels, epochs: int = 500, lr: float = 0.5, classes: int | None = None) -> LinearClassifier:
    """Multinomial logistic regression by full-batch gradient descent from zero."""
    codes = np.atleast_2d(np.asarray(codes, dtype=float))
    labels = np.asarray(labels, dtype=int)
    if len(codes) == 0:
        raise EmptyInput("no training codes")
    if len(codes) != len(labels):
        raise DimensionMismatch("codes and labels differ in count")
    n_classes = classes or int(labels.max()) + 1
    n_classes = max(n_classes, 2)
    w = np.zeros((codes.shape[1], n_classes))
    onehot = np.eye(n_classes)[labels]
    initial = None
    for epoch in range(epochs):
        logits = codes @ w
        loss = float(np.mean(_cross_entropy(logits, labels)))
        if initial is None:
            initial = loss
        if not np.isfinite(loss) or loss > 10.0 * initial:
            raise TrainingDiverged(f"linear classifier loss {loss:.4g} at epoch {epoch}")
        w -= lr * codes.T @ (_softmax(logits) - onehot) / len(codes)
    return LinearClassifier(w)


# ---------------------------------------------------------------- task network


@dataclass
class TaskNetwork:
    """ReLU MLP ``m -> h -> h -> C`` acting on raw signals."""

    weights: list
    biases: list
    history: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def init(cls, m: int, h: int, classes: int, rng: SeededRng) -> "TaskNetwork":
        sizes = [m, h, h, classes]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def params(self) -> list:
        return [*self.weights, *self.biases]

    def _forward(self, x):
        acts = [np.atleast_2d(np.asarray(x, dtype=float))]
        pre = []
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ w.T + b
            pre.append(z)
            acts.append(np.maximum(z, 0.0) if k < len(self.weights) - 1 else z)
        return acts, pre

    def logits(self, x) -> np.ndarray:
        return self._forward(x)[0][-1]

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)

    def loss(self, x, labels) -> np.ndarray:
        """Per-sample cross-entropy."""
        return _cross_entropy(self.logits(x), np.asarray(labels, dtype=int))

    def backward(self, x, labels, scale=1.0, want_params=True):
        """Gradients of ``scale * sum(loss)`` with respect to the input rows and the parameters."""
        acts, pre = self._forward(x)
        labels = np.asarray(labels, dtype=int)
        g = _softmax(acts[-1])
        g[np.arange(len(labels)), labels] -= 1.0
        g *= scale
        gw, gb = [None] * len(self.weights), [None] * len(self.biases)
        for k in range(len(self.weights) - 1, -1, -1):
            if k < len(self.weights) - 1:
                g = g * (pre[k] > 0)
            if want_params:
                gw[k] = g.T @ acts[k]
                gb[k] = g.sum(axis=0)
            g = g @ self.weights[k]
        return g, gw + gb

    def input_grad(self, x, labels) -> np.ndarray:
        g, _ = self.backward(x, labels, want_params=False)
        return g

    def accuracy(self, x, labels) -> float:
        return float(np.mean(self.predict(x) == np.asarray(labels)))

    def save(self, directory) -> None:
        directory = Path(directory)
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            write_matrix(directory / f"w{k}.csv", w, role=f"layer {k} weights")
            write_matrix(directory / f"b{k}.csv", b, role=f"layer {k} bias")
        write_json(directory / "manifest.json", {"kind": "mlp", "sizes": [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]})

    @classmethod
    def load(cls, directory) -> "TaskNetwork":
        directory = Path(directory)
        layers = len(read_json(directory / "manifest.json")["sizes"]) - 1
        weights = [read_matrix(directory / f"w{k}.csv") for k in range(layers)]
        biases = [read_matrix(directory / f"b{k}.csv").reshape(-1) for k in range(layers)]
        return cls(weights, biases)


def task_input_grad(net: TaskNetwork, x, label) -> np.ndarray:
    """Input gradient of the cross-entropy at ``(x, label)``; row-wise for a batch."""
    g = net.input_grad(x, np.atleast_1d(label))
    return g[0] if np.ndim(x) == 1 else g


def train_task_network(
    data: LabeledDataset,
    h: int,
    epochs: int,
    lr: float,
    rng: SeededRng,
    batch_size: int = 64,
    classes: int | None = None,
) -> TaskNetwork:
    """Mini-batch Adam on softmax cross-entropy."""
    if len(data) == 0:
        raise EmptyInput("no training data")
    n_classes = classes or max(int(data.labels.max()) + 1, 2)
    net = TaskNetwork.init(data.signals.shape[1], h, n_classes, rng.derive(0))
    opt = Adam(net.params, lr=lr)
    initial = float(np.mean(net.loss(data.signals, data.labels)))
    limit = 10.0 * max(initial, 1e-12)
    losses = []
    for epoch in range(epochs):
        order = rng.derive(1, epoch).permutation(len(data))
        total = 0.0
        for start in range(0, len(data), batch_size):
            idx = order[start : start + batch_size]
            xb, yb = data.signals[idx], data.labels[idx]
            loss = float(np.sum(net.loss(xb, yb)))
            if not np.isfinite(loss) or loss / len(idx) > limit:
                raise TrainingDiverged(f"task network loss {loss / len(idx):.4g} at epoch {epoch}")
            total += loss
            _, grads = net.backward(xb, yb, scale=1.0 / len(idx))
            opt.step(grads)
        losses.append(total / len(data))
    net.history = {"epoch_loss": losses}
    return net


# ---------------------------------------------------------------- MOD


def dict_learn_mod(signals, n: int, beta: float, iters: int, rng: SeededRng, history: list | None = None) -> np.ndarray:
    """Method of optimal directions with LASSO coding.

    Each iteration codes all signals, refits the dictionary by least
    squares, renormalizes the columns, and reseeds atoms no signal used
    with the worst-reconstructed signals. ``history`` (if given) receives
    one dict per iteration with the relative reconstruction error after
    coding and after the least-squares refit.
    """
    x = np.atleast_2d(np.asarray(signals, dtype=float))
    if x.size == 0 or len(x) == 0:
        raise EmptyInput("no signals")
    if iters < 1:
        raise ConfigError("iters must be at least 1")
    n_sig, m = x.shape
    energy = np.maximum(np.sum(x * x, axis=1), 1e-300)
    if n_sig >= n:
        start = x[rng.choice(n_sig, n, replace=False)].T.copy()
        start += 1e-3 * rng.standard_normal(start.shape)
    else:
        start = rng.standard_normal((m, n))
    dic = normalize_columns(start)
    params = LassoParams(beta)
    for it in range(iters):
        codes = np.atleast_2d(lasso(dic, x, params))
        resid = x - codes @ dic.T
        err_coded = float(np.mean(np.sum(resid * resid, axis=1) / energy))
        if codes.shape[0] > 2 * n:
            # normal equations: same minimum-norm solution, much smaller system
            new = least_squares(codes.T @ codes, codes.T @ x).T
        else:
            new = least_squares(codes, x).T
        resid = x - codes @ new.T
        err_refit = float(np.mean(np.sum(resid * resid, axis=1) / energy))
        norms = np.linalg.norm(new, axis=0)
        dead = (norms <= 1e-12) | ~np.any(codes != 0, axis=0)
        new[:, ~dead] /= norms[~dead]
        if dead.any():
            worst = np.argsort(-np.sum(resid * resid, axis=1) / energy, kind="stable")[: int(dead.sum())]
            fresh = x[worst].T + 1e-6 * rng.standard_normal((m, len(worst)))
            new[:, np.flatnonzero(dead)[: len(worst)]] = normalize_columns(fresh)
            still = np.linalg.norm(new, axis=0) == 0
            new[:, still] = normalize_columns(rng.standard_normal((m, int(still.sum()))))
        dic = new
        if history is not None:
            history.append({"iter": it, "rel_error_coded": err_coded, "rel_error_refit": err_refit, "dead_atoms": int(dead.sum())})
        log.info("mod iter %d rel err %.5f (refit %.5f, %d dead)", it, err_coded, err_refit, int(dead.sum()))
    return dic


def mod_relative_error(d, signals, beta: float) -> float:
    x = np.atleast_2d(signals)
    codes = np.atleast_2d(lasso(d, x, LassoParams(beta)))
    resid = x - codes @ d.T
    return float(np.mean(np.sum(resid * resid, axis=1) / np.maximum(np.sum(x * x, axis=1), 1e-300)))


# ---------------------------------------------------------------- IDX


def read_idx(images_path, labels_path=None) -> LabeledDataset:
    """MNIST-style images (scaled to [0, 1], flattened) and optional labels."""
    images = read_idx_array(images_path, expected_ndim=3)
    signals = images.reshape(images.shape[0], int(np.prod(images.shape[1:]))).astype(float) / 255.0
    labels = None
    if labels_path is not None:
        labels = read_idx_array(labels_path, expected_ndim=1).astype(int)
        if len(labels) != len(signals):
            raise DimensionMismatch(f"{len(signals)} images but {len(labels)} labels")
    return LabeledDataset(signals, labels)


# ---------------------------------------------------------------- robust accuracy


@dataclass
class DaClsInputs:
    """What the dictionary attack may use: dictionary, classifier, and the codes of the evaluation signals."""

    dictionary: np.ndarray
    classifier: LinearClassifier
    codes: np.ndarray


def lasso_codes(d, signals, beta: float = 0.05) -> np.ndarray:
    return np.atleast_2d(lasso(d, signals, LassoParams(beta)))


def robust_accuracy_curve(net: TaskNetwork, data: LabeledDataset, attack: str, attack_inputs, epsilons) -> list[tuple[float, float]]:
    """Task-network accuracy under growing perturbation budgets.

    ``attack="da_cls"``: ``attack_inputs`` is a :class:`DaClsInputs`; each
    example gets ``eps`` times the precomputed direction for (its class,
    the closest other class under the linear classifier).
    ``attack="noise"``: ``attack_inputs`` is a SeededRng; each example gets
    a fixed random direction scaled to ``eps``.
    The first entry is always ``(0.0, clean accuracy)``.
    """
    eps = [float(e) for e in epsilons]
    if not eps:
        raise ConfigError("need at least one epsilon")
    if any(b < a for a, b in zip(eps, eps[1:])) or eps[0] < 0:
        raise ConfigError("epsilons must be non-negative and ascending")
    x, y = data.signals, data.labels
    if attack == "da_cls":
        bank = dict_attack_cls_bank(attack_inputs.dictionary, attack_inputs.classifier)
        targets = choose_target(attack_inputs.classifier, attack_inputs.codes, y)
        directions = bank[y, targets]
    elif attack == "noise":
        directions = gen_noise(x.shape[1], NormKind.L2, 1.0, attack_inputs, count=len(x)).delta
    else:
        raise ConfigError(f"unknown attack {attack!r}")
    clean = net.accuracy(x, y)
    curve = [(0.0, clean)]
    for e in eps:
        if e == 0.0:
            continue
        curve.append((e, net.accuracy(x + e * directions, y)))
    return curve
