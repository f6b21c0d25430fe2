"""Compare the numba kernels with their numpy fallbacks.

Per-kernel timings run both variants in this process.  The end-to-end
timing trains a small model in two subprocesses, one with
STGA_DISABLE_NUMBA=1, so the whole stack picks up each backend.

    python3 benchmarks/bench_kernels.py [--rows 2000] [--hidden 64] [--repeat 50]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from stga.nn import kernels as K

E2E_SNIPPET = """
import time
from stga import ModelConfig, TrainConfig, make_synthetic, train
from stga.nn import kernels
data = make_synthetic("crossing", 6, seed=0, n_scenes=24)
cfg = ModelConfig(hidden={hidden}, embed=16)
train(data, cfg, TrainConfig(epochs=1, seed=0))          # warm-up / JIT
t0 = time.perf_counter()
train(data, cfg, TrainConfig(epochs={epochs}, seed=0))
print(kernels.backend(), time.perf_counter() - t0)
"""


def _time(fn, args, repeat):
    fn(*args)  # warm-up (compiles the numba variant)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def kernel_cases(rows: int, hidden: int, rng: np.random.Generator):
    z = rng.normal(size=(rows, 4 * hidden))
    c = rng.normal(size=(rows, hidden))
    h, c_new, gates, tc = K.np_lstm_forward(z, c)
    dh, dc = rng.normal(size=h.shape), rng.normal(size=c.shape)
    x = rng.normal(size=(rows, hidden))
    y = K.np_softmax_rows(x)
    seg = np.sort(rng.integers(0, max(rows // 4, 1), size=rows))
    mu = rng.uniform(size=(rows, 2))
    sig = rng.uniform(0.05, 1.0, size=(rows, 2))
    rho = rng.uniform(-0.9, 0.9, size=rows)
    tgt = rng.uniform(size=(rows, 2))
    g = rng.normal(size=rows)
    return {
        "lstm_forward": (z, c),
        "lstm_backward": (dh, dc, c, gates, tc),
        "softmax_rows": (x,),
        "softmax_rows_backward": (y, x),
        "segment_sum": (x, seg, int(seg.max()) + 1),
        "bvn_nll": (mu, sig, rho, tgt),
        "bvn_nll_backward": (mu, sig, rho, tgt, g),
    }


def end_to_end(hidden: int, epochs: int) -> dict[str, float]:
    out = {}
    for disable in ("0", "1"):
        env = dict(os.environ, STGA_DISABLE_NUMBA=disable)
        res = subprocess.run([sys.executable, "-c", E2E_SNIPPET.format(hidden=hidden, epochs=epochs)],
                             env=env, capture_output=True, text=True, check=True)
        name, secs = res.stdout.split()
        out[name] = float(secs)
    return out


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=2000)
    ap.add_argument("--hidden", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--epochs", type=int, default=2)
    ap.add_argument("--skip-e2e", action="store_true")
    args = ap.parse_args(argv)

    if not K.HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    cases = kernel_cases(args.rows, args.hidden, rng)
    print(f"rows={args.rows} hidden={args.hidden} repeat={args.repeat}")
    print(f"{'kernel':<24}{'numpy ms':>11}{'numba ms':>11}{'speedup':>9}")
    for name, call_args in cases.items():
        t_np = _time(getattr(K, "np_" + name), call_args, args.repeat)
        t_nb = _time(getattr(K, "nb_" + name), call_args, args.repeat)
        print(f"{name:<24}{1e3 * t_np:>11.3f}{1e3 * t_nb:>11.3f}{t_np / t_nb:>8.2f}x")

    if not args.skip_e2e:
        e2e = end_to_end(args.hidden, args.epochs)
        print(f"\nend-to-end training, {args.epochs} epochs (24 crossing scenes x 6 peds):")
        for name in ("numba", "numpy"):
            print(f"  {name:<6} {e2e[name]:.2f} s")
        print(f"  speedup {e2e['numpy'] / e2e['numba']:.2f}x")


if __name__ == "__main__":
    main()
