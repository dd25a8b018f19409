#!/usr/bin/env python3
"""Benchmark the compiled hull-sweep kernel against the pure-Python fallback.

Times the one-dimensional lower convex envelope sweep (the hot loop of the
relaxation engine) for both backends over a range of sample counts, plus an
end-to-end relaxation call per backend (the fallback engine run happens in a
subprocess with ROCONVEX_FORCE_PYTHON=1 since the backend is chosen at
import time). Results go to stdout and a CSV.
"""

import argparse
import csv
import os
import subprocess
import sys
import time

import numpy as np

from roconvex.backend import available_backends

ENGINE_SNIPPET = """
import time
import numpy as np
import roconvex as rc
model = rc.KSDEnergy()
F = np.array([[0.2, 0.1], [0.1, 0.3]])
params = rc.ConvexifyParams(N={N}, r=2.5)
rc.relax(model, F, params, want_tangent=False)
times = []
for _ in range(7):
    t0 = time.perf_counter()
    rc.relax(model, F, params, want_tangent=False)
    times.append(time.perf_counter() - t0)
print(rc.BACKEND, float(np.median(times)))
"""


def double_well_samples(n, rng):
    x = np.cumsum(rng.uniform(0.5 / n, 2.0 / n, n))
    w = (x * x - 1.0) ** 2 + 0.05 * rng.standard_normal(n)
    return x, w


def time_sweep(fn, x, w, reps):
    fn(x, w)
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn(x, w)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def run_engine(n, force_python):
    env = dict(os.environ)
    if force_python:
        env["ROCONVEX_FORCE_PYTHON"] = "1"
    else:
        env.pop("ROCONVEX_FORCE_PYTHON", None)
    out = subprocess.check_output(
        [sys.executable, "-c", ENGINE_SNIPPET.format(N=n)], env=env, text=True)
    backend, seconds = out.split()
    return backend, float(seconds)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="benchmarks/results.csv")
    parser.add_argument("--skip-engine", action="store_true",
                        help="kernel sweep timings only")
    args = parser.parse_args()

    backends = available_backends()
    rng = np.random.default_rng(0)
    rows = []
    print(f"{'task':<24}{'N':>9}" + "".join(f"{b:>14}" for b in backends)
          + f"{'speedup':>10}")
    for n in (10**3, 10**4, 10**5, 10**6):
        x, w = double_well_samples(n, rng)
        reps = max(3, int(2e6 / n))
        times = {name: time_sweep(fn, x, w, reps)
                 for name, fn in backends.items()}
        speedup = (times["python"] / times["compiled"]
                   if "compiled" in times else float("nan"))
        print(f"{'hull sweep':<24}{n:>9}"
              + "".join(f"{times[b] * 1e3:>12.3f}ms" for b in backends)
              + f"{speedup:>9.1f}x")
        rows.append(["hull_sweep", n,
                     *[times.get(b, "") for b in ("python", "compiled")],
                     speedup])

    if not args.skip_engine:
        for n in (1000, 5000):
            per = {}
            for force in (True, False):
                backend, seconds = run_engine(n, force)
                per[backend] = seconds
            speedup = (per["python"] / per["compiled"]
                       if "compiled" in per else float("nan"))
            print(f"{'relaxation (ksd)':<24}{n:>9}"
                  + "".join(f"{per.get(b, float('nan')) * 1e3:>12.3f}ms"
                            for b in ("python", "compiled"))
                  + f"{speedup:>9.1f}x")
            rows.append(["relaxation_ksd", n, per.get("python", ""),
                         per.get("compiled", ""), speedup])

    out = args.out
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task", "N", "python_seconds", "compiled_seconds",
                         "speedup"])
        writer.writerows(rows)
    print(f"\nwrote {out}")


if __name__ == "__main__":
    main()
