import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsadv.core import SeededRng
from sparsadv.errors import DimensionMismatch
from sparsadv.synth import (
    NormKind,
    Perturbation,
    SyntheticDataset,
    gen_dictionary,
    gen_noise,
    gen_sparse_code,
    gen_sparse_codes,
    make_dataset,
    mutual_coherence,
    random_supports,
    support,
    synthesize,
)


def ks_statistic_normal(values):
    """One-sample Kolmogorov-Smirnov distance to N(0, 1)."""
    v = np.sort(values)
    cdf = np.array([0.5 * (1 + math.erf(t / math.sqrt(2))) for t in v])
    k = np.arange(1, v.size + 1)
    return max(np.max(k / v.size - cdf), np.max(cdf - (k - 1) / v.size))


def test_dictionary_unit_columns_and_determinism():
    d = gen_dictionary(64, 128, SeededRng(0, 1))
    assert d.shape == (64, 128)
    assert np.allclose(np.linalg.norm(d, axis=0), 1.0)
    assert np.array_equal(d, gen_dictionary(64, 128, SeededRng(0, 1)))


def test_mutual_coherence_bounds():
    d = gen_dictionary(64, 128, SeededRng(0, 1))
    mu = mutual_coherence(d)
    # Welch bound from below, 1 from above
    assert math.sqrt((128 - 64) / (64 * 127)) <= mu < 1
    assert mutual_coherence(np.eye(5)) == 0.0


def test_sparse_codes_have_exact_sparsity():
    codes = gen_sparse_codes(128, 5, 500, SeededRng(0, 3))
    assert np.all(np.count_nonzero(codes, axis=1) == 5)
    assert np.array_equal(support(codes[0]), codes[0] != 0)
    assert gen_sparse_code(20, 3, SeededRng(1, 1)).shape == (20,)


def test_sparse_code_values_are_standard_normal():
    codes = gen_sparse_codes(128, 5, 4000, SeededRng(0, 3))
    values = codes[codes != 0]
    # critical value for alpha = 0.001 is about 1.95 / sqrt(N)
    assert ks_statistic_normal(values) < 1.95 / math.sqrt(values.size)


def test_supports_are_uniform():
    n, s, count = 16, 3, 16000
    sup = random_supports(n, s, count, SeededRng(0, 3))
    assert np.all(np.diff(sup, axis=1) > 0)
    hits = np.bincount(sup.ravel(), minlength=n)
    expected = count * s / n
    chi2 = float(np.sum((hits - expected) ** 2 / expected))
    assert chi2 < 37.7  # 99.9% quantile of chi-square with 15 dof


def test_random_supports_rejects_bad_sparsity():
    with pytest.raises(ValueError):
        random_supports(4, 5, 1, SeededRng(0))


def test_synthesize_shapes():
    d = gen_dictionary(4, 6, SeededRng(0))
    a = gen_sparse_codes(6, 2, 3, SeededRng(1))
    assert np.allclose(synthesize(d, a), (d @ a.T).T)
    assert np.allclose(synthesize(d, a[0]), d @ a[0])
    with pytest.raises(DimensionMismatch):
        synthesize(d, np.ones(5))


@settings(max_examples=30, deadline=None)
@given(m=st.integers(1, 40), eps=st.floats(1e-3, 10.0), seed=st.integers(0, 1000))
def test_noise_has_exact_size(m, eps, seed):
    l2 = gen_noise(m, "L2", eps, SeededRng(seed, 4))
    assert np.linalg.norm(l2.delta) == pytest.approx(eps, rel=1e-12)
    linf = gen_noise(m, NormKind.LINF, eps, SeededRng(seed, 4), count=3)
    assert np.allclose(np.abs(linf.delta), eps)
    assert linf.within_budget() and l2.within_budget()


def test_noise_per_row_budget():
    eps = np.array([0.1, 0.5, 2.0])
    p = gen_noise(10, "l2", eps, SeededRng(0, 4), count=3)
    assert np.allclose(p.norms(), eps)
    assert p.budget == 2.0


def test_noise_direction_is_isotropic():
    p = gen_noise(8, "L2", 1.0, SeededRng(0, 4), count=20000)
    # every coordinate of a uniform unit vector has mean 0 and second moment 1/m
    assert np.all(np.abs(p.delta.mean(axis=0)) < 0.01)
    assert np.allclose((p.delta**2).mean(axis=0), 1 / 8, atol=0.005)


def test_noise_rejects_bad_budget():
    with pytest.raises(ValueError):
        gen_noise(3, "L2", 0.0, SeededRng(0))
    with pytest.raises(ValueError):
        gen_noise(3, "L1", 1.0, SeededRng(0))


def test_perturbation_budget_check():
    p = Perturbation(np.array([3.0, 4.0]), "L2", 5.0)
    assert p.within_budget()
    assert not Perturbation(np.array([3.0, 4.0]), "Linf", 3.5).within_budget()
    with pytest.raises(ValueError):
        Perturbation(np.zeros(2), "L2", 0.0)


def test_dataset_roundtrip(tmp_path):
    ds = make_dataset(8, 12, 2, 5, master_seed=3)
    assert np.allclose(ds.signals, ds.codes @ ds.dictionary.T)
    ds.save(tmp_path)
    back = SyntheticDataset.load(tmp_path)
    assert np.array_equal(back.dictionary, ds.dictionary)
    assert np.array_equal(back.codes, ds.codes)
    assert np.array_equal(back.signals, ds.signals)
    assert (back.s, back.master_seed) == (2, 3)
