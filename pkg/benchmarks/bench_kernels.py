"""Compare the compiled and the NumPy kernels on the hot paths.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Times the one-sided Jacobi sweep (64x128 dictionary, as used by every SVD
call) and batched OMP (1000 signals, s=5), and checks the two backends
return the same answers.
"""

import argparse
import json
import platform
import time

import numpy as np

from sparsadv._backend import available_backends
from sparsadv.core import EPS, SeededRng
from sparsadv.synth import gen_dictionary, gen_sparse_codes


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--signals", type=int, default=1000)
    p.add_argument("--json", help="also write the timings here")
    args = p.parse_args(argv)

    d = gen_dictionary(64, 128, SeededRng(0, 1))
    dt = np.ascontiguousarray(d.T)  # tall 128x64, the orientation svd() feeds the sweep
    codes = gen_sparse_codes(128, 5, args.signals, SeededRng(0, 3))
    x = np.ascontiguousarray(codes @ d.T)
    dc = np.ascontiguousarray(d)

    cases = {
        "jacobi_128x64": lambda k: k.jacobi_orthogonalize(dt.copy(), 128 * EPS, 80),
        f"omp_{args.signals}x_s5": lambda k: k.omp_batch(dc, x, 5, -1.0),
    }
    backends = available_backends()
    results = {}
    for case, fn in cases.items():
        outs = {}
        for name, kern in backends.items():
            t, outs[name] = best_of(lambda: fn(kern), args.repeat)
            results.setdefault(case, {})[name] = t
        if len(outs) > 1:
            ref = outs["python"]
            for name, out in outs.items():
                if case.startswith("jacobi"):
                    same = np.allclose(np.sort(np.linalg.norm(out[0], axis=0)), np.sort(np.linalg.norm(ref[0], axis=0)), rtol=1e-10)
                else:
                    same = np.allclose(out[0], ref[0], atol=1e-10)
                results[case][f"{name}_matches_python"] = bool(same)

    print(f"{'case':<20}{'backend':<10}{'seconds':>12}")
    for case, row in results.items():
        for name in backends:
            print(f"{case:<20}{name:<10}{row[name]:>12.5f}")
        if "cython" in row and "python" in row:
            print(f"{'':<20}{'speedup':<10}{row['python'] / row['cython']:>11.1f}x")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump({"python": platform.python_version(), "numpy": np.__version__, "results": results}, fh, indent=2)


if __name__ == "__main__":
    main()
