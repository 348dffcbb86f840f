"""Time the numba kernels against their numpy counterparts.

    python benchmarks/bench_kernels.py [--n 16 64 256] [--repeat 20]

Kernel timings run in-process (both variants of each kernel are importable).
The end-to-end row launches two subprocesses, one with MFG_DISABLE_NUMBA=1,
and times a single-loop run on the shipped instance.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from mfgplay import kernels
from mfgplay._accel import HAVE_NUMBA, jit


def _problem(n, m, seed=0):
    rng = np.random.default_rng(seed)
    R = rng.uniform(0, 1, (n, m))
    P = rng.dirichlet(np.ones(n), size=(n, m))
    pi = rng.dirichlet(np.ones(m), size=n)
    L = rng.dirichlet(np.ones(n))
    q = rng.uniform(0, 10, (n, m))
    return R, P, pi, L, q


def _cases(n, m):
    R, P, pi, L, q = _problem(n, m)
    v0 = np.zeros(n)
    log_pi = np.log(pi)
    return {
        "soft_bellman": ((R, P, 0.9, 0.5, v0, 1e-10, 400), "soft_bellman_loops", "soft_bellman_numpy"),
        "hard_bellman": ((R, P, 0.9, v0, 1e-10, 400), "hard_bellman_loops", "hard_bellman_numpy"),
        "mirror_step": ((log_pi, q, 0.1, 0.5, 0.01), "mirror_step_loops", "mirror_step_numpy"),
        "push_forward": ((P, pi, L), "push_forward_loops", "push_forward_numpy"),
    }


def bench_kernels(sizes, m, repeat):
    rows = []
    for n in sizes:
        for name, (args, loops, vec) in _cases(n, m).items():
            fast = jit(getattr(kernels, loops))
            slow = getattr(kernels, vec)
            fast(*args)  # compile
            a = np.asarray(fast(*args)[0] if name.endswith("bellman") else fast(*args))
            b = np.asarray(slow(*args)[0] if name.endswith("bellman") else slow(*args))
            agree = float(np.max(np.abs(a - b)))
            t_fast = min(timeit.repeat(lambda: fast(*args), number=1, repeat=repeat))
            t_slow = min(timeit.repeat(lambda: slow(*args), number=1, repeat=repeat))
            rows.append((name, n, t_fast, t_slow, agree))
    return rows


_E2E = ("import time; from mfgplay import shipped_instance; from mfgplay.play import Schedule, run;"
        "m = shipped_instance(); G = m.gram(); s = Schedule.default(0.5, {T});"
        "run(m, G, s, None, diagnostics='endpoint');"
        "t = time.perf_counter(); run(m, G, s, None, diagnostics='endpoint');"
        "print(time.perf_counter() - t)")


def bench_end_to_end(T):
    out = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, MFG_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", _E2E.format(T=T)], env=env,
                             capture_output=True, text=True, check=True)
        out[label] = float(res.stdout.strip().splitlines()[-1])
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[16, 64, 256])
    ap.add_argument("--m", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--T", type=int, default=2000)
    ap.add_argument("--skip-e2e", action="store_true")
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba unavailable (or MFG_DISABLE_NUMBA set); 'numba' column is interpreted loops")
    print(f"{'kernel':<14}{'n':>6}{'numba ms':>12}{'numpy ms':>12}{'speedup':>9}{'max diff':>11}")
    for name, n, tf, ts, diff in bench_kernels(args.n, args.m, args.repeat):
        print(f"{name:<14}{n:>6}{tf * 1e3:>12.4f}{ts * 1e3:>12.4f}{ts / tf:>9.2f}{diff:>11.1e}")
    if not args.skip_e2e:
        e2e = bench_end_to_end(args.T)
        print(f"\nsingle-loop run, T={args.T}: numba {e2e['numba']:.3f} s, numpy {e2e['numpy']:.3f} s")


if __name__ == "__main__":
    main()
