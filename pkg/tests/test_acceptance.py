"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria 1-5 and 8 run the experiments at full scale with the default
configuration (about eight minutes per pass, most of it LISTA training),
so they are marked ``slow``. Deselect them with ``-m "not slow"``.
"""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from sparsadv.attacks import dict_attack, dict_attack_cls
from sparsadv.cli import main as cli_main
from sparsadv.cls import TaskNetwork, task_input_grad
from sparsadv.coders import LassoParams, Sparsity, kkt_residual, lasso, lista_input_grad, lista_loss, omp
from sparsadv.core import SeededRng, svd
from sparsadv.experiments import EXPERIMENTS, ExperimentConfig, clear_cache, sparse_setup
from sparsadv.synth import gen_dictionary, gen_sparse_codes

from .conftest import ACCEPTANCE_LINES
from .oracles import da_cls_oracle, da_oracle
from .test_coders import active_pattern


def record(capsys, number, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    with capsys.disabled():
        print("\n" + line)


@pytest.fixture(scope="module")
def full_runs(tmp_path_factory):
    """Every experiment at default settings, run through the CLI in one process."""
    root = tmp_path_factory.mktemp("acceptance")
    clear_cache()
    reports, elapsed = {}, {}
    for exp_id in EXPERIMENTS:
        assert cli_main(["exp", exp_id, "--out", str(root / exp_id)]) == 0
        reports[exp_id] = json.loads((root / exp_id / "report.json").read_text())
        elapsed[exp_id] = json.loads((root / exp_id / "meta.json").read_text())["elapsed_seconds"]
    return root, reports, elapsed


def _fmt_p(p):
    return f"{p:.2g}"


@pytest.mark.slow
def test_criterion_1_transfer(full_runs, capsys):
    _, reports, elapsed = full_runs
    methods = reports["exp1_transfer"]["results"]["methods"]
    parts, ok = [], True
    for name in ("lista", "lasso_beta_high", "lasso_beta_low", "omp_tolerance"):
        pgd, noise = methods[name]["pgd"]["total"]["mean"], methods[name]["noise"]["total"]["mean"]
        p = methods[name]["pgd_vs_noise"]["p_value"]
        good = pgd > noise and p < 0.01
        ok &= good
        parts.append(f"{name} {pgd:.3g}>{noise:.3g} p={_fmt_p(p)}{'' if good else ' (x)'}")
    p_omp = methods["omp_sparsity"]["pgd_vs_noise"]["p_value"]
    ok &= p_omp > 0.05
    parts.append(f"omp_sparsity p={_fmt_p(p_omp)} (need >0.05){'' if p_omp > 0.05 else ' (x)'}")
    # the first experiment of a fresh process includes LISTA training
    ok &= elapsed["exp1_transfer"] < 1800
    parts.append(f"runtime {elapsed['exp1_transfer']:.0f}s")
    record(capsys, 1, ok, "; ".join(parts))
    assert ok


@pytest.mark.slow
def test_criterion_2_dictionary_attack_transfer(full_runs, capsys):
    _, reports, _ = full_runs
    s = reports["exp4_da_vs_pgd"]["results"]["summary"]
    drop_ok = 0.05 <= s["cross_drop"] <= 0.40
    da_ok = s["da_b"] > s["cross_model_pgd"]
    gap_ok = s["da_relative_gap"] <= 0.15
    ok = drop_ok and da_ok and gap_ok
    record(
        capsys,
        2,
        ok,
        f"cross-model drop {s['cross_drop']:.1%}{'' if drop_ok else ' (x)'}; "
        f"DA on B {s['da_b']:.4g} vs cross-PGD {s['cross_model_pgd']:.4g}{'' if da_ok else ' (x)'}; "
        f"DA A/B gap {s['da_relative_gap']:.1%}{'' if gap_ok else ' (x)'}",
    )
    assert ok


@pytest.mark.slow
def test_criterion_3_code_energy(full_runs, capsys):
    _, reports, _ = full_runs
    r = reports["exp3_delta_codes"]["results"]
    pgd, noise, p = r["energy"]["pgd"]["mean"], r["energy"]["noise"]["mean"], r["energy_test"]["p_value"]
    ok = pgd > noise and p < 0.01
    record(capsys, 3, ok, f"mean LASSO-code energy PGD {pgd:.4g} vs noise {noise:.4g}, p={_fmt_p(p)}")
    assert ok


@pytest.mark.slow
def test_criterion_4_correlation_and_spectra(full_runs, capsys):
    _, reports, _ = full_runs
    r = reports["exp2_corr_spectra"]["results"]
    p_data, p_rand = r["data"]["levene"]["p_value"], r["random"]["levene"]["p_value"]
    spectra = r["data"]["spectra"]
    top, rnd = spectra["Top"]["mean_sigma_min"], spectra["Random"]["mean_sigma_min"]
    levene_ok, spectra_ok, control_ok = p_data < 0.05, top < rnd, p_rand > p_data
    ok = levene_ok and spectra_ok and control_ok and spectra["Top"]["count"] == 50
    record(
        capsys,
        4,
        ok,
        f"Levene data p={_fmt_p(p_data)}{'' if levene_ok else ' (x)'}; "
        f"sigma_min Top {top:.4f} vs Random {rnd:.4f}{'' if spectra_ok else ' (x)'}; "
        f"random-dictionary p={_fmt_p(p_rand)}{'' if control_ok else ' (x)'}",
    )
    assert ok


@pytest.mark.slow
def test_criterion_5_classification(full_runs, capsys):
    _, reports, _ = full_runs
    r = reports["exp5_da_cls"]["results"]
    da, nz = r["da_cls_curve"][1:], r["noise_curve"][1:]
    below = all(a <= b for a, b in zip(da, nz))
    strict = sum(a < b for a, b in zip(da, nz))
    ok = r["clean_accuracy"] >= 0.9 and below and 2 * strict >= len(da)
    record(capsys, 5, ok, f"clean {r['clean_accuracy']:.3f}; DA <= noise at all {len(da)} eps: {below}; strictly below at {strict}")
    assert ok


def test_criterion_6_dictionary_attack_optimality(capsys):
    sizes = np.linspace(8, 64, 100).round().astype(int)
    worst_da = worst_cls = 0.0
    for k, m in enumerate(sizes):
        d = gen_dictionary(int(m), 2 * int(m), SeededRng(k, 1))
        oracle_rng = np.random.default_rng(k)
        p = np.linalg.pinv(d)
        eps = 0.3
        res = dict_attack(d, eps)
        got = np.linalg.norm(p @ res.delta.delta)
        _, want = da_oracle(d, eps, oracle_rng)
        worst_da = max(worst_da, abs(got - want) / want)

        w = oracle_rng.standard_normal((d.shape[1], 4))
        c, i = oracle_rng.choice(4, 2, replace=False)
        delta = dict_attack_cls(d, w, int(c), int(i), eps).delta
        got = float((p @ delta) @ (w[:, i] - w[:, c]))
        _, want = da_cls_oracle(d, w[:, i] - w[:, c], eps, oracle_rng)
        worst_cls = max(worst_cls, abs(got - want) / abs(want))
    ok = worst_da <= 1e-6 and worst_cls <= 1e-6
    record(capsys, 6, ok, f"100 dictionaries 8x16..64x128: worst relative gap DA {worst_da:.1e}, DA-cls {worst_cls:.1e}")
    assert ok


def _fd_max_rel(grad, fd, mask):
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(grad[mask] - fd[mask])) / max(np.max(np.abs(fd[mask])), 1e-300))


@pytest.mark.slow
def test_criterion_7_numerical_foundations(full_runs, capsys):
    r = np.random.default_rng(7)
    svd_worst = 0.0
    for _ in range(40):
        m, n = r.integers(1, 70, size=2)
        a = r.standard_normal((m, n))
        if r.random() < 0.25 and min(m, n) > 1:
            a[:, 0] = a[:, -1]  # rank deficient
        res = svd(a)
        svd_worst = max(svd_worst, np.linalg.norm(res.reconstruct() - a) / np.linalg.norm(a))

    # LISTA input gradient on the trained default model, coordinates whose probes cross no threshold
    st = sparse_setup(ExperimentConfig())
    model, h = st.model, 1e-5
    lista_worst = 0.0
    for j in range(20):
        x, target = st.signals[j], st.codes[j]
        g = lista_input_grad(model, x, target)
        base = active_pattern(model, x)
        fd, mask = np.zeros(x.size), np.zeros(x.size, bool)
        for i, e in enumerate(np.eye(x.size)):
            up, down = x + h * e, x - h * e
            mask[i] = np.array_equal(active_pattern(model, up), base) and np.array_equal(active_pattern(model, down), base)
            fd[i] = (lista_loss(model, up, target)[0] - lista_loss(model, down, target)[0]) / (2 * h)
        lista_worst = max(lista_worst, _fd_max_rel(g, fd, mask))

    # MLP input gradient at the default task-network size
    net = TaskNetwork.init(64, 256, 10, SeededRng(0, 10))
    mlp_worst = 0.0
    for j in range(10):
        x = r.standard_normal(64)
        y = int(r.integers(10))
        g = task_input_grad(net, x, y)
        _, pre = net._forward(x)
        fd, mask = np.zeros(64), np.zeros(64, bool)
        for i, e in enumerate(np.eye(64)):
            fd[i] = (net.loss(x + h * e, [y])[0] - net.loss(x - h * e, [y])[0]) / (2 * h)
            mask[i] = all(
                np.array_equal(q > 0, p > 0) for q, p in zip(net._forward(x + h * e)[1][:-1], pre[:-1])
            ) and all(np.array_equal(q > 0, p > 0) for q, p in zip(net._forward(x - h * e)[1][:-1], pre[:-1]))
        mlp_worst = max(mlp_worst, _fd_max_rel(g, fd, mask))

    d = gen_dictionary(64, 128, SeededRng(0, 1))
    codes = gen_sparse_codes(128, 5, 1000, SeededRng(0, 3))
    x = codes @ d.T
    kkt_worst = 0.0
    for beta in (0.02, 0.05, 0.2):
        est = lasso(d, x[:200], LassoParams(beta))
        kkt_worst = max(kkt_worst, float(np.max(kkt_residual(d, x[:200], est, beta))) / beta)
    est = omp(d, x, Sparsity(5))
    recovered = float(np.mean([np.array_equal(np.flatnonzero(a), np.flatnonzero(c)) for a, c in zip(est, codes)]))

    ok = svd_worst <= 1e-8 and lista_worst < 1e-4 and mlp_worst < 1e-4 and kkt_worst <= 1e-5 and recovered >= 0.95
    record(
        capsys,
        7,
        ok,
        f"SVD rel reconstruction {svd_worst:.1e}; LISTA fd {lista_worst:.1e}; MLP fd {mlp_worst:.1e}; "
        f"KKT/beta {kkt_worst:.1e}; OMP recovery {recovered:.1%}",
    )
    assert ok


RERUN = """
import sys
from sparsadv.cli import main
root = sys.argv[1]
for exp_id in sys.argv[2:]:
    assert main(["exp", exp_id, "--out", root + "/" + exp_id]) == 0
"""


@pytest.mark.slow
def test_criterion_8_determinism(full_runs, capsys):
    root, _, _ = full_runs
    first = {exp_id: (root / exp_id / "report.json").read_bytes() for exp_id in EXPERIMENTS}
    artifacts = {p: p.read_bytes() for p in Path(root).rglob("*") if p.is_file() and p.name != "meta.json"}
    # a fresh interpreter, so nothing cached in this process can leak into the rerun
    proc = subprocess.run([sys.executable, "-c", RERUN, str(root), *EXPERIMENTS], capture_output=True, text=True, timeout=3600)
    assert proc.returncode == 0, proc.stderr[-2000:]
    same = {exp_id: (root / exp_id / "report.json").read_bytes() == first[exp_id] for exp_id in EXPERIMENTS}
    other_same = all(p.read_bytes() == b for p, b in artifacts.items())
    ok = all(same.values())
    record(capsys, 8, ok, f"report.json byte-identical on rerun: {sum(same.values())}/{len(same)}; other artifacts identical: {other_same}")
    assert ok


@pytest.mark.slow
def test_default_lista_heldout_error(full_runs):
    err = full_runs[1]["exp1_transfer"]["results"]["lista_heldout_relative_error"]
    assert err < 0.05
