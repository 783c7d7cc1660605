import os
import subprocess
import sys

import numpy as np
import pytest

from sparsadv import _pykernels
from sparsadv._backend import BACKEND, available_backends
from sparsadv.synth import gen_dictionary, gen_sparse_codes
from sparsadv.core import SeededRng

from .conftest import random_matrix


def test_compiled_backend_is_built():
    # the extension is optional at install time but expected in this build
    assert "cython" in available_backends()
    assert BACKEND in ("cython", "python")


@pytest.mark.parametrize("shape", [(64, 64), (50, 20), (7, 7), (3, 1)])
def test_jacobi_orthogonalizes(kernels, shape):
    a = random_matrix(1, *shape)
    w, v, sweeps = kernels.jacobi_orthogonalize(np.ascontiguousarray(a), shape[0] * 2.2e-16, 80)
    assert sweeps > 0
    assert np.allclose(a @ v, w, atol=1e-12)
    assert np.allclose(v.T @ v, np.eye(shape[1]), atol=1e-12)
    g = w.T @ w
    off = g - np.diag(np.diag(g))
    assert np.max(np.abs(off)) <= 1e-10 * np.max(np.diag(g))


def test_jacobi_reports_nonconvergence(kernels):
    a = np.ascontiguousarray(random_matrix(2, 40, 40))
    _, _, sweeps = kernels.jacobi_orthogonalize(a, 1e-300, 1)
    assert sweeps == -1


def test_backends_agree_on_singular_values():
    a = np.ascontiguousarray(random_matrix(3, 64, 40))
    out = {}
    for name, k in available_backends().items():
        w, _, _ = k.jacobi_orthogonalize(a, 64 * 2.2e-16, 80)
        out[name] = np.sort(np.linalg.norm(w, axis=0))
    ref = out.pop("python")
    for vals in out.values():
        assert np.allclose(vals, ref, rtol=1e-12)


def naive_omp(d, x, k):
    """Textbook OMP with a full least-squares solve per step."""
    sel, res = [], x.copy()
    for _ in range(k):
        j = int(np.argmax(np.abs(d.T @ res)))
        sel.append(j)
        coef, *_ = np.linalg.lstsq(d[:, sel], x, rcond=None)
        res = x - d[:, sel] @ coef
    code = np.zeros(d.shape[1])
    code[sel] = coef
    return code


def test_omp_kernels_match_naive(kernels):
    d = gen_dictionary(20, 40, SeededRng(0, 1))
    x = np.random.default_rng(0).standard_normal((25, 20))
    codes, counts = kernels.omp_batch(d, x, 6, -1.0)
    assert np.all(counts == 6)
    for j in range(len(x)):
        assert np.allclose(codes[j], naive_omp(d, x[j], 6), atol=1e-10)


def test_omp_kernels_respect_tolerance(kernels):
    d = gen_dictionary(20, 40, SeededRng(0, 1))
    x = np.random.default_rng(1).standard_normal((10, 20))
    codes, counts = kernels.omp_batch(d, x, 20, 0.5)
    resid = np.linalg.norm(x - codes @ d.T, axis=1)
    assert np.all(resid <= 0.5 + 1e-12)
    # one atom fewer would not have been enough
    for j in range(len(x)):
        if counts[j] > 0:
            shorter = naive_omp(d, x[j], int(counts[j]) - 1) if counts[j] > 1 else np.zeros(40)
            assert np.linalg.norm(x[j] - d @ shorter) > 0.5


def test_omp_stops_on_exact_fit(kernels):
    d = gen_dictionary(16, 32, SeededRng(0, 1))
    codes = gen_sparse_codes(32, 2, 5, SeededRng(0, 3))
    out, counts = kernels.omp_batch(d, codes @ d.T, 10, -1.0)
    assert np.all(counts == 2)
    assert np.allclose(out, codes, atol=1e-10)


def test_omp_zero_signal(kernels):
    d = gen_dictionary(4, 6, SeededRng(0, 1))
    codes, counts = kernels.omp_batch(d, np.zeros((2, 4)), 3, -1.0)
    assert np.all(codes == 0) and np.all(counts == 0)


def test_backend_env_selection():
    code = "from sparsadv._backend import BACKEND; print(BACKEND)"
    env = dict(os.environ, SPARSADV_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    env["SPARSADV_BACKEND"] = "auto"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "cython"


def test_python_kernel_handles_odd_column_count():
    a = np.ascontiguousarray(random_matrix(5, 9, 5))
    w, v, _ = _pykernels.jacobi_orthogonalize(a, 9 * 2.2e-16, 80)
    assert w.shape == (9, 5) and v.shape == (5, 5)
    assert np.allclose(a @ v, w)
