"""Compiled vs numpy simplex kernels.

Runs each workload in a fresh interpreter per backend (the backend is fixed
at import, ``BATTDISPATCH_PURE_PYTHON=1`` forces numpy) and prints a table of
best-of-N wall times.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--steps 48]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from battdispatch.optim import BACKEND, kernels, LinearProgram, solve_lp
from battdispatch.dispatch import build_dispatch, make_formulation, solve_dispatch
from battdispatch.electrochem import default_battery
from battdispatch.testcase import make_testcase

repeat, steps = int(sys.argv[1]), int(sys.argv[2])
rng = np.random.default_rng(0)

def best(fn):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter(); out = fn(); times.append(time.perf_counter() - t0)
    return min(times), out

res = {"backend": BACKEND}
# kernel micro-benchmarks at a small and a large problem size
for n in (2000, 20000):
    m = 2 * n // 5
    d = rng.normal(size=n); status = rng.integers(0, 5, n).astype(np.int8)
    x = rng.normal(size=m); lo = x - rng.uniform(0, 1, m); up = x + rng.uniform(0, 1, m)
    alpha = rng.normal(size=m); head = np.arange(m, dtype=np.int64)
    k = 50
    rows = rng.integers(0, m, k).astype(np.int64); piv = rng.normal(size=k)
    starts = (np.arange(k + 1) * 40).astype(np.int64); idx = rng.integers(0, m, 40 * k).astype(np.int64)
    vals = rng.normal(size=40 * k)
    z = rng.normal(size=m)
    res[f"price n={n} x200"] = best(lambda: [kernels.price(d, status, 1e-9, False) for _ in range(200)])[0]
    res[f"ratio_test m={m} x200"] = best(lambda: [kernels.ratio_test(x, lo, up, alpha, 1.0, 1e-9, 1e-11, head,
                                                                     False) for _ in range(200)])[0]
    res[f"ftran m={m} 50 etas x200"] = best(lambda: [kernels.ftran_etas(z.copy(), k, rows, piv, starts, idx,
                                                                        vals) for _ in range(200)])[0]
    res[f"btran m={m} 50 etas x200"] = best(lambda: [kernels.btran_etas(z.copy(), k, rows, piv, starts, idx,
                                                                        vals) for _ in range(200)])[0]

# end-to-end dispatch LPs
params = default_battery()
case = make_testcase(steps=steps)
for kind in ("ideal", "envelope"):
    dm = build_dispatch(case, make_formulation(kind, params))
    t, (sched, sol) = best(lambda: solve_dispatch(dm, verify=False))
    res[f"dispatch {kind} {steps} steps"] = t
    res[f"objective {kind}"] = sol.objective
print(json.dumps(res))
"""


def run(pure: bool, repeat: int, steps: int) -> dict:
    env = dict(os.environ)
    env.pop("BATTDISPATCH_PURE_PYTHON", None)
    if pure:
        env["BATTDISPATCH_PURE_PYTHON"] = "1"
    out = subprocess.run([sys.executable, "-c", WORKER, str(repeat), str(steps)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--steps", type=int, default=48, help="dispatch horizon for the end-to-end rows")
    args = ap.parse_args(argv)
    fast = run(False, args.repeat, args.steps)
    slow = run(True, args.repeat, args.steps)
    if fast["backend"] != "cython":
        print("note: compiled kernels are not built; both columns use numpy")
    width = max(len(k) for k in fast)
    print(f"{'workload':<{width}}  {fast['backend']:>10}  {slow['backend']:>10}  speedup")
    for key in fast:
        if key == "backend" or key.startswith("objective"):
            continue
        print(f"{key:<{width}}  {fast[key]:>9.3f}s  {slow[key]:>9.3f}s  {slow[key] / fast[key]:>6.1f}x")
    for key in (k for k in fast if k.startswith("objective")):
        same = abs(fast[key] - slow[key]) <= 1e-9 * max(1.0, abs(fast[key]))
        print(f"{key}: {fast[key]:.6f} vs {slow[key]:.6f} ({'identical' if same else 'DIFFERENT'})")


if __name__ == "__main__":
    main()
