"""Synthetic sparse data: ``x = D @ alpha`` with a normalized Gaussian ``D``.

Dictionaries, codes and signals are plain NumPy arrays. Batches put one
sample per row, so ``signals = codes @ D.T``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import SeededRng
from .errors import DimensionMismatch
from .io import read_json, read_matrix, write_json, write_matrix

ZERO_TOL = 1e-8

# Named stream ids under one master seed; see SeededRng.
DICTIONARY_STREAM = 1
TRAIN_STREAM = 2
TEST_STREAM = 3
NOISE_STREAM = 4
CONTROL_DICTIONARY_STREAM = 5
SPECTRA_STREAM = 6
PGD_INIT_STREAM = 7
LISTA_INIT_STREAM = 8
CLASS_DATA_STREAM = 9
TASK_NET_STREAM = 10
EVAL_NOISE_STREAM = 11
MOD_STREAM = 12


class NormKind(str, enum.Enum):
    L2 = "L2"
    LINF = "Linf"

    @classmethod
    def parse(cls, value) -> "NormKind":
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        for kind in cls:
            if kind.value.lower() == key:
                return kind
        raise ValueError(f"unknown norm kind {value!r}; expected L2 or Linf")


@dataclass
class Perturbation:
    """An input-space perturbation (or a batch, one per row) and its budget."""

    delta: np.ndarray
    norm_kind: NormKind
    budget: float

    def __post_init__(self):
        self.norm_kind = NormKind.parse(self.norm_kind)
        self.delta = np.asarray(self.delta, dtype=float)
        if self.budget <= 0:
            raise ValueError("budget must be positive")

    def norms(self) -> np.ndarray:
        ord_ = 2 if self.norm_kind is NormKind.L2 else np.inf
        return np.linalg.norm(np.atleast_2d(self.delta), ord=ord_, axis=1)

    def within_budget(self, rtol: float = 1e-9) -> bool:
        return bool(np.all(self.norms() <= self.budget * (1 + rtol)))


def normalize_columns(d: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(d, axis=0)
    if np.any(norms == 0):
        raise ValueError("cannot normalize a zero column")
    return d / norms


def gen_dictionary(m: int, n: int, rng: SeededRng) -> np.ndarray:
    """i.i.d. standard normal ``m x n`` matrix with unit-norm columns."""
    if m < 1 or n < 1:
        raise ValueError("dictionary dimensions must be positive")
    return normalize_columns(rng.standard_normal((m, n)))


def mutual_coherence(d: np.ndarray) -> float:
    g = np.abs(d.T @ d)
    np.fill_diagonal(g, 0.0)
    return float(g.max()) if g.size > 1 else 0.0


def random_supports(n: int, s: int, count: int, rng: SeededRng) -> np.ndarray:
    """``count`` rows of ``s`` distinct indices, each row uniform over s-subsets."""
    if not 1 <= s <= n:
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    keys = rng.random((count, n))
    return np.sort(np.argpartition(keys, s - 1, axis=1)[:, :s], axis=1)


def gen_sparse_codes(n: int, s: int, count: int, rng: SeededRng) -> np.ndarray:
    """Batch of s-sparse codes with standard normal nonzeros at uniform locations."""
    support = random_supports(n, s, count, rng)
    values = rng.standard_normal((count, s))
    codes = np.zeros((count, n))
    np.put_along_axis(codes, support, values, axis=1)
    return codes


def gen_sparse_code(n: int, s: int, rng: SeededRng) -> np.ndarray:
    return gen_sparse_codes(n, s, 1, rng)[0]


def support(code: np.ndarray, zero_tol: float = ZERO_TOL) -> np.ndarray:
    """Boolean mask of entries whose magnitude exceeds ``zero_tol``."""
    return np.abs(np.asarray(code)) > zero_tol


def synthesize(d: np.ndarray, code: np.ndarray) -> np.ndarray:
    """``D @ alpha`` for one code, or ``codes @ D.T`` for a batch."""
    code = np.asarray(code, dtype=float)
    if code.shape[-1] != d.shape[1]:
        raise DimensionMismatch(f"code length {code.shape[-1]} != atoms {d.shape[1]}")
    return code @ d.T


def gen_noise(m: int, norm_kind, epsilon, rng: SeededRng, count: int | None = None) -> Perturbation:
    """Random perturbation(s) of exactly the requested size.

    L2: uniform direction on the sphere scaled to norm ``epsilon``.
    Linf: Rademacher signs times ``epsilon`` (a vertex of the box).
    ``epsilon`` may be an array with one budget per row when ``count`` is set.
    """
    kind = NormKind.parse(norm_kind)
    eps = np.asarray(epsilon, dtype=float)
    if np.any(eps <= 0):
        raise ValueError("epsilon must be positive")
    rows = 1 if count is None else count
    if kind is NormKind.L2:
        g = rng.standard_normal((rows, m))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
        delta = g / norms * eps.reshape(-1, 1)
    else:
        signs = np.where(rng.random((rows, m)) < 0.5, -1.0, 1.0)
        delta = signs * eps.reshape(-1, 1)
    budget = float(eps.max())
    return Perturbation(delta[0] if count is None else delta, kind, budget)


@dataclass
class SyntheticDataset:
    dictionary: np.ndarray
    codes: np.ndarray
    signals: np.ndarray
    s: int
    master_seed: int

    @property
    def m(self) -> int:
        return self.dictionary.shape[0]

    @property
    def n(self) -> int:
        return self.dictionary.shape[1]

    def save(self, directory) -> None:
        directory = Path(directory)
        write_matrix(directory / "dictionary.csv", self.dictionary, role="dictionary")
        write_matrix(directory / "codes.csv", self.codes, role="codes")
        write_matrix(directory / "signals.csv", self.signals, role="signals")
        write_json(
            directory / "manifest.json",
            {"m": self.m, "n": self.n, "s": self.s, "count": len(self.codes), "master_seed": self.master_seed},
        )

    @classmethod
    def load(cls, directory) -> "SyntheticDataset":
        directory = Path(directory)
        meta = read_json(directory / "manifest.json")
        ds = cls(
            dictionary=read_matrix(directory / "dictionary.csv"),
            codes=read_matrix(directory / "codes.csv"),
            signals=read_matrix(directory / "signals.csv"),
            s=int(meta["s"]),
            master_seed=int(meta["master_seed"]),
        )
        if ds.dictionary.shape != (meta["m"], meta["n"]) or len(ds.codes) != meta["count"]:
            raise DimensionMismatch(f"{directory}: files disagree with manifest")
        return ds


def make_dataset(m: int, n: int, s: int, count: int, master_seed: int, stream: int = TEST_STREAM) -> SyntheticDataset:
    """Dictionary from the dictionary stream, ``count`` samples from ``stream``."""
    d = gen_dictionary(m, n, SeededRng(master_seed, DICTIONARY_STREAM))
    codes = gen_sparse_codes(n, s, count, SeededRng(master_seed, stream))
    return SyntheticDataset(d, codes, synthesize(d, codes), s, master_seed)
