"""Command-line driver: ``sparsadv <command> ...``.

Commands
  gen          synthetic dictionary, codes and signals
  train-lista  fit a LISTA model on a dictionary
  attack       PGD / noise / dictionary-attack perturbations for a dataset
  analyze      error decomposition of a coder on clean or perturbed signals
  exp <id>     one of the end-to-end experiments
  report       print the checks stored in experiment reports

Exit codes: 0 ok, 1 bad configuration, 2 numerical failure, 3 I/O error.
``SPARSADV_OUTPUT_DIR`` sets the default output directory and
``SPARSADV_THREADS`` caps BLAS threads (read before numpy is imported).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import ConfigError, SparsadvError

THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")
EXPERIMENT_ALIASES = {"1": "exp1_transfer", "2": "exp2_corr_spectra", "3": "exp3_delta_codes", "4": "exp4_da_vs_pgd", "5": "exp5_da_cls"}

log = logging.getLogger("sparsadv")


def _apply_thread_env() -> None:
    threads = os.environ.get("SPARSADV_THREADS")
    if threads:
        for var in THREAD_VARS:
            os.environ[var] = threads


def _out_dir(args, fallback: str | None = None) -> str:
    if args.out:
        return args.out
    env = os.environ.get("SPARSADV_OUTPUT_DIR")
    if env:
        return env
    if fallback is None:
        raise ConfigError("no output directory: pass --out or set SPARSADV_OUTPUT_DIR")
    return fallback


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return data


# ---------------------------------------------------------------- commands


def cmd_gen(args) -> int:
    from .synth import make_dataset

    ds = make_dataset(args.m, args.n, args.s, args.count, args.seed)
    out = _out_dir(args)
    ds.save(out)
    print(f"wrote {len(ds.codes)} signals ({ds.m}x{ds.n}, s={ds.s}) to {out}")
    return 0


def cmd_train_lista(args) -> int:
    import dataclasses

    from .coders import ListaTrainConfig, lista_train
    from .core import SeededRng
    from .synth import TRAIN_STREAM, SyntheticDataset

    data = _load_config(args.config)
    if args.seed is not None:
        data["master_seed"] = args.seed
    if args.smoke:
        data.update(epochs=2, samples_per_epoch=512, heldout=10)
    known = {f.name for f in dataclasses.fields(ListaTrainConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown LISTA config keys {sorted(unknown)}")
    d = None
    if args.data:
        d = SyntheticDataset.load(args.data).dictionary
        data.setdefault("m", d.shape[0])
        data.setdefault("n", d.shape[1])
    cfg = ListaTrainConfig(**data)
    model = lista_train(cfg, SeededRng(cfg.master_seed, TRAIN_STREAM), d)
    out = _out_dir(args)
    model.save(out)
    print(f"held-out relative error {model.history['heldout_relative_error']:.6g}; model in {out}")
    return 0


def cmd_attack(args) -> int:
    import numpy as np

    from .attacks import PgdConfig, dict_attack, pgd_reconstruction, write_attack_file
    from .coders import ListaModel, lista_loss
    from .core import SeededRng
    from .experiments import matched_noise
    from .synth import NOISE_STREAM, PGD_INIT_STREAM, NormKind, Perturbation, SyntheticDataset

    ds = SyntheticDataset.load(args.data)
    signals, codes = ds.signals, ds.codes
    if args.smoke:
        signals, codes = signals[:10], codes[:10]
    seed = ds.master_seed if args.seed is None else args.seed
    out = _out_dir(args)
    model = ListaModel.load(args.model) if args.model else None
    kind = NormKind.parse(args.norm)
    before = after = None
    if args.kind in ("pgd", "noise"):
        if model is None:
            raise ConfigError(f"--kind {args.kind} needs --model")
        cfg = PgdConfig(kind, args.epsilon, args.iters)
        pgd = pgd_reconstruction(model, signals, codes, cfg, SeededRng(seed, PGD_INIT_STREAM))
        delta = np.atleast_2d(pgd.delta)
        if args.kind == "noise":
            delta = matched_noise(delta, kind, SeededRng(seed, NOISE_STREAM))
        pert = Perturbation(delta, kind, args.epsilon)
    else:
        if kind is not NormKind.L2:
            raise ConfigError("the dictionary attack is defined for the l2 ball only")
        da = dict_attack(ds.dictionary, args.epsilon)
        pert = Perturbation(np.tile(da.delta.delta, (len(signals), 1)), kind, args.epsilon)
    if model is not None:
        before = lista_loss(model, signals, codes)
        after = lista_loss(model, signals + pert.delta, codes)
    path = write_attack_file(out, args.name or args.kind, args.kind, pert, before, after)
    print(f"wrote {len(signals)} perturbations to {path}")
    return 0


def cmd_analyze(args) -> int:
    import numpy as np

    from .analysis import error_decomposition, summarize
    from .coders import LassoParams, ListaModel, Sparsity, Tolerance, lasso, lista_forward, omp
    from .io import read_jsonl, read_matrix, write_json
    from .synth import SyntheticDataset

    ds = SyntheticDataset.load(args.data)
    signals, codes = ds.signals, ds.codes
    attack = "clean"
    if args.attack_file:
        records = read_jsonl(args.attack_file)
        if not records:
            raise ConfigError(f"{args.attack_file} has no records")
        csv_name = records[0]["delta_ref"].split("#")[0]
        deltas = read_matrix(os.path.join(os.path.dirname(args.attack_file), csv_name))
        ids = np.array([r["sample_id"] for r in records])
        rows = np.array([int(r["delta_ref"].split("#")[1]) for r in records])
        signals, codes = signals[ids] + deltas[rows], codes[ids]
        attack = records[0]["attack"]
    if args.coder == "lista":
        if not args.model:
            raise ConfigError("--coder lista needs --model")
        est = lista_forward(ListaModel.load(args.model), signals)
    elif args.coder == "omp-sparsity":
        est = omp(ds.dictionary, signals, Sparsity(args.sparsity or ds.s))
    elif args.coder == "omp-tolerance":
        est = omp(ds.dictionary, signals, Tolerance(args.tolerance))
    else:
        est = lasso(ds.dictionary, signals, LassoParams(args.beta))
    dec = error_decomposition(codes, np.atleast_2d(est))
    mean = dec.mean()
    summary = {
        "coder": args.coder,
        "attack": attack,
        "excess": mean.excess,
        "missing": mean.missing,
        "in_support": mean.in_support,
        "total": summarize(dec.total),
    }
    if args.out:
        write_json(os.path.join(args.out, f"analysis_{args.coder}_{attack}.json"), summary)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_exp(args) -> int:
    from .experiments import ExperimentConfig, run

    exp_id = EXPERIMENT_ALIASES.get(args.id, args.id)
    data = _load_config(args.config)
    data["experiment_id"] = exp_id
    if args.seed is not None:
        data["master_seed"] = args.seed
    cfg = ExperimentConfig.from_dict(data)
    cfg.output_dir = _out_dir(args, fallback=os.path.join(cfg.output_dir, exp_id))
    if args.smoke:
        cfg = cfg.smoke_version()
    report = run(cfg)
    for name, ok in report["checks"].items():
        print(f"{'PASS' if ok else 'FAIL'}  {exp_id}: {name}")
    print(f"report: {os.path.join(cfg.output_dir, 'report.json')}")
    return 0


def cmd_report(args) -> int:
    from .io import read_json

    root = _out_dir(args, fallback="runs")
    paths = []
    if os.path.isfile(root):
        paths = [root]
    else:
        for dirpath, _, files in sorted(os.walk(root)):
            if "report.json" in files:
                paths.append(os.path.join(dirpath, "report.json"))
    if not paths:
        raise FileNotFoundError(f"no report.json under {root}")
    failed = 0
    for path in paths:
        rep = read_json(path)
        for name, ok in rep.get("checks", {}).items():
            failed += not ok
            print(f"{'PASS' if ok else 'FAIL'}  {rep['experiment']}: {name}")
    print(f"{len(paths)} report(s), {failed} failing check(s)")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparsadv", description="Adversarial perturbations of sparse coders.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--smoke", action="store_true", help="tiny fast run")

    sp = sub.add_parser("gen", help="generate a synthetic dataset")
    common(sp, config=False)
    sp.add_argument("--m", type=int, default=64, help="signal dimension")
    sp.add_argument("--n", type=int, default=128, help="number of atoms")
    sp.add_argument("--s", type=int, default=5, help="nonzeros per code")
    sp.add_argument("--count", type=int, default=1000, help="number of signals")
    sp.set_defaults(func=cmd_gen, seed=0)

    sp = sub.add_parser("train-lista", help="train a LISTA model")
    common(sp)
    sp.add_argument("--data", help="dataset directory whose dictionary to use")
    sp.set_defaults(func=cmd_train_lista)

    sp = sub.add_parser("attack", help="compute perturbations for a dataset")
    common(sp, config=False)
    sp.add_argument("--data", required=True, help="dataset directory written by gen")
    sp.add_argument("--model", help="LISTA model directory")
    sp.add_argument("--kind", choices=("pgd", "noise", "da"), default="pgd")
    sp.add_argument("--epsilon", type=float, default=0.3, help="perturbation budget")
    sp.add_argument("--norm", default="L2", help="L2 or Linf")
    sp.add_argument("--iters", type=int, default=40, help="PGD iterations")
    sp.add_argument("--name", help="file stem (defaults to the kind)")
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser("analyze", help="error decomposition of a coder")
    sp.add_argument("--data", required=True, help="dataset directory written by gen")
    sp.add_argument("--attack-file", help="JSONL written by the attack command")
    sp.add_argument("--coder", choices=("lista", "omp-sparsity", "omp-tolerance", "lasso"), default="lista")
    sp.add_argument("--model", help="LISTA model directory (coder lista)")
    sp.add_argument("--sparsity", type=int, help="OMP sparsity (defaults to the dataset s)")
    sp.add_argument("--tolerance", type=float, default=0.1, help="OMP residual tolerance")
    sp.add_argument("--beta", type=float, default=0.2, help="LASSO penalty")
    sp.add_argument("--out", help="directory for the summary JSON")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("exp", help="run an experiment")
    sp.add_argument("id", help="exp1_transfer ... exp5_da_cls, or 1-5")
    common(sp)
    sp.set_defaults(func=cmd_exp)

    sp = sub.add_parser("report", help="summarize report.json files")
    sp.add_argument("--out", help="report file or directory to search")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    _apply_thread_env()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SparsadvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, EOFError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
