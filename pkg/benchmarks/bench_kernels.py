"""Timing comparison of the compiled and pure-Python kernel backends.

Run as: python benchmarks/bench_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from streamrca.kernels import pykernels

try:
    from streamrca.kernels import _ckernels
except ImportError:
    _ckernels = None


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_lstm(backend, t_len: int, n: int, repeat: int) -> tuple[float, float]:
    rng = np.random.default_rng(0)
    x = rng.normal(size=(t_len, n))
    h0 = np.zeros(n)
    c0 = np.zeros(n)
    wx = rng.normal(size=(n, 4 * n)) / np.sqrt(n)
    wh = rng.normal(size=(n, 4 * n)) / np.sqrt(n)
    b = np.zeros(4 * n)
    dh = rng.normal(size=n)
    dc = rng.normal(size=n)

    fwd = _time(lambda: backend.lstm_forward(x, h0, c0, wx, wh, b), repeat)
    _, _, cache = backend.lstm_forward(x, h0, c0, wx, wh, b)
    bwd = _time(
        lambda: backend.lstm_backward(x, h0, c0, wx, wh, b, cache, dh, dc), repeat
    )
    return fwd, bwd


def bench_cusum(backend, t_len: int, repeat: int) -> float:
    rng = np.random.default_rng(1)
    scores = rng.normal(size=t_len)
    return _time(lambda: backend.cusum_scan(scores, 0.0, 1e9), repeat)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    backends = [("python", pykernels)]
    if _ckernels is not None:
        backends.append(("compiled", _ckernels))
    else:
        print("compiled backend not built; showing pure-Python numbers only")

    rows = []
    for t_len, n in [(20, 11), (20, 31), (100, 31)]:
        for name, backend in backends:
            fwd, bwd = bench_lstm(backend, t_len, n, args.repeat)
            rows.append((f"lstm T={t_len} n={n}", name, fwd, bwd))
    for t_len in (10_000, 100_000):
        for name, backend in backends:
            scan = bench_cusum(backend, t_len, args.repeat)
            rows.append((f"cusum T={t_len}", name, scan, None))

    print(f"{'case':<22}{'backend':<10}{'forward (s)':>14}{'backward (s)':>14}")
    for case, name, fwd, bwd in rows:
        bwd_txt = f"{bwd:>14.6f}" if bwd is not None else f"{'-':>14}"
        print(f"{case:<22}{name:<10}{fwd:>14.6f}{bwd_txt}")

    if _ckernels is not None:
        py_fwd, py_bwd = bench_lstm(pykernels, 20, 31, args.repeat)
        c_fwd, c_bwd = bench_lstm(_ckernels, 20, 31, args.repeat)
        print(
            f"\nspeedup at T=20 n=31: forward x{py_fwd / c_fwd:.1f}, "
            f"backward x{py_bwd / c_bwd:.1f}"
        )


if __name__ == "__main__":
    main()
