"""Compare the compiled binning kernel against the numpy fallback.

Runs the same gradient-binning workload through both implementations,
checks they agree, and reports per-call times and the end-to-end effect on
compute_hog. Run from the repository root:

    python3 benchmarks/bench_kernels.py [--size 512] [--repeats 5]
"""

import argparse
import importlib
import os
import subprocess
import sys
import time

import numpy as np


def time_calls(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=512, help="square image side")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    from hogback import _hogfallback
    from hogback.kernels import HAVE_EXT

    if not HAVE_EXT:
        print("compiled extension not available; nothing to compare")
        return 1
    from hogback import _hogcore

    rng = np.random.default_rng(0)
    img = rng.random((args.size, args.size))
    dy, dx = np.gradient(img)

    ext_hist = _hogcore.bin_cells(dx, dy, 8, 18)
    py_hist = _hogfallback.bin_cells(dx, dy, 8, 18)
    err = float(np.max(np.abs(ext_hist - py_hist)))
    print(f"kernel agreement: max abs diff {err:.3e}")
    if err > 1e-10:
        print("FAIL: implementations disagree")
        return 1

    t_ext = time_calls(_hogcore.bin_cells, (dx, dy, 8, 18), args.repeats)
    t_py = time_calls(_hogfallback.bin_cells, (dx, dy, 8, 18), args.repeats)
    print(f"bin_cells {args.size}x{args.size}:")
    print(f"  compiled  {t_ext * 1e3:8.2f} ms")
    print(f"  fallback  {t_py * 1e3:8.2f} ms   ({t_py / t_ext:.1f}x slower)")

    # End-to-end descriptor timing, each implementation in its own process
    # so the import-time kernel selection is exercised for real.
    for label, env_val in (("compiled", None), ("fallback", "1")):
        env = dict(os.environ)
        env.pop("HOGBACK_NO_EXT", None)
        if env_val:
            env["HOGBACK_NO_EXT"] = env_val
        code = (
            "import time, numpy as np\n"
            "from hogback.hog import compute_hog\n"
            f"img = np.random.default_rng(0).random(({args.size}, {args.size}))\n"
            "compute_hog(img)\n"
            "best = float('inf')\n"
            f"for _ in range({args.repeats}):\n"
            "    t0 = time.perf_counter()\n"
            "    compute_hog(img)\n"
            "    best = min(best, time.perf_counter() - t0)\n"
            "print(f'{best * 1e3:.2f}')\n"
        )
        out = subprocess.run(
            [sys.executable, "-c", code], env=env, capture_output=True, text=True
        )
        if out.returncode != 0:
            print(out.stderr)
            return 1
        print(f"compute_hog end-to-end ({label}): {out.stdout.strip()} ms")
    return 0


if __name__ == "__main__":
    sys.exit(main())
