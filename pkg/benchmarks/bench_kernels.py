"""Compare the compiled and pure-Python sifting kernels.

    python benchmarks/bench_kernels.py [--repeats N]
"""
import argparse
import statistics
import time

import numpy as np

from decompens import _pykernels

try:
    from decompens import _ckernels
except ImportError:  # extension not built
    _ckernels = None

SIFT = (0, 50, 0.05, 12, 1)  # akima, iterations, mean tolerance, max IMFs, residue extrema


def _series(n, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    return np.sin(2 * np.pi * t / 60) + 0.5 * np.sin(2 * np.pi * t / 7) + 0.3 * rng.standard_normal(n)


def _time(fn, repeats):
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args(argv)
    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    else:
        print("compiled kernels not built; timing the Python backend only")

    print(f"{'kernel':<16} {'n':>6} " + " ".join(f"{b:>12}" for b in backends) + "  speedup")
    for n in (130, 512, 2048):
        x = _series(n)
        xk = np.sort(np.random.default_rng(1).choice(n, n // 8, replace=False)).astype(float)
        yk = np.sin(xk)
        xq = np.arange(float(n))
        cases = {
            "extrema": lambda m: m.extrema_indices(x),
            "zero_crossings": lambda m: m.zero_crossings(x),
            "akima_eval": lambda m: m.akima_eval(xk, yk, xq),
            "emd": lambda m: m.emd_imfs(x, *SIFT),
        }
        for name, call in cases.items():
            t = {b: _time(lambda m=m: call(m), args.repeats) for b, m in backends.items()}
            speed = f"{t['python'] / t['cython']:8.1f}x" if "cython" in t else ""
            print(f"{name:<16} {n:>6} " + " ".join(f"{v * 1e3:>10.3f}ms" for v in t.values())
                  + "  " + speed)


if __name__ == "__main__":
    main()
