"""Time the compiled and pure-Python kernel backends side by side.

    python benchmarks/bench_kernels.py [--repeat N] [--solve Z]

Each kernel runs on inputs sized like a production solve (p = 10,
15 elements, or the equivalent dense band), and the best of N runs is
reported together with the speed-up of the compiled backend. ``--solve Z``
also times a full default solve of atom Z under each backend (the backend
is fixed at import, so each solve runs in a fresh interpreter).
"""
import argparse
import os
import subprocess
import sys
import tempfile
import timeit

import numpy as np

from radialks import kernels


def cases(rng, p=10, n_ele=15):
    n = n_ele * p + 1
    ab = rng.standard_normal((2 * p + 1, n))
    ab[p] += 4 * p
    x = rng.standard_normal(n)
    local = rng.standard_normal((n_ele, p + 1, p + 1))
    sub, sup = rng.standard_normal(999), rng.standard_normal(999)
    diag = 4.0 + rng.random(1000)
    rhs = rng.standard_normal(1000)
    return {
        "band_matvec": lambda m: m.band_matvec(ab, p, x),
        "band_rmatvec": lambda m: m.band_rmatvec(ab, p, x),
        "scatter_band": lambda m: m.scatter_band(np.zeros_like(ab), p, local),
        "thomas (n=1000)": lambda m: m.thomas(sub, diag, sup, rhs),
        "bicg (30 its)": lambda m: m.bicg(ab, p, x, np.zeros(n), 1e-30, 30),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--solve", type=int, metavar="Z", help="also time an end-to-end solve")
    args = ap.parse_args(argv)
    backends = kernels.backends()
    if "cython" not in backends:
        print("compiled backend not built; timing the Python kernels only")
    rng = np.random.default_rng(0)
    names = sorted(backends)
    print(f"{'kernel':<18}" + "".join(f"{n + ' [ms]':>16}" for n in names) + f"{'speed-up':>10}")
    for name, fn in cases(rng).items():
        times = {}
        for b in names:
            mod = backends[b]
            t = timeit.Timer(lambda: fn(mod))
            number, _ = t.autorange()
            times[b] = min(t.repeat(args.repeat, number)) / number * 1e3
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{name:<18}" + "".join(f"{times[b]:>16.4f}" for b in names) + f"{speed:>9.1f}x")
    if args.solve:
        solve_times = {b: time_solve(args.solve, b) for b in names}
        speed = solve_times["python"] / solve_times["cython"] if "cython" in solve_times else float("nan")
        print(f"{'solve Z=' + str(args.solve) + ' [s]':<18}" + "".join(f"{solve_times[b]:>16.2f}" for b in names) + f"{speed:>9.1f}x")


def time_solve(Z, backend):
    env = dict(os.environ, RADIALKS_PURE_PYTHON="1" if backend == "python" else "0")
    code = (
        "import sys, time; from radialks.cli import main; t = time.perf_counter(); "
        "code = main(sys.argv[1:]); print(time.perf_counter() - t); sys.exit(code)"
    )
    with tempfile.TemporaryDirectory() as out:
        proc = subprocess.run(
            [sys.executable, "-c", code, "--Z", str(Z), "--out", out], env=env, capture_output=True, text=True
        )
    if proc.returncode != 0:
        raise RuntimeError(proc.stderr or proc.stdout)
    return float(proc.stdout.split()[-1])


if __name__ == "__main__":
    main()
