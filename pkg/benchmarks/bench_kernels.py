"""Compare the compiled kernels against the numpy fallback.

Usage:
    python3 benchmarks/bench_kernels.py [--repeats 7]

Times each hot kernel on training-shaped arrays, then a full optimizer
step sequence. The matmuls go through BLAS on both backends, so the
interesting deltas are the elementwise and row-reduction kernels.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from stamp import backend as K
from stamp import kernels_py as P


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    rows, width = 64 * 88, 256            # one training batch of gated tokens
    x = rng.normal(size=(rows, width)).astype(np.float32)
    dy = rng.normal(size=(rows, width)).astype(np.float32)
    gain = rng.normal(size=width).astype(np.float32)
    bias = rng.normal(size=width).astype(np.float32)
    y = P.softmax_fwd(x)
    _, xhat, rstd = P.layernorm_fwd(x, gain, bias, 1e-5)

    p = rng.normal(size=700_000).astype(np.float32)
    g = rng.normal(size=700_000).astype(np.float32)

    def adamw(module):
        pp, mm, vv = p.copy(), np.zeros_like(p), np.zeros_like(p)
        module.adamw_update(pp, g, mm, vv, 1, 1e-3, 0.9, 0.999, 1e-8, 0.05)

    cases = [
        ("gelu_fwd", lambda m: m.gelu_fwd(x)),
        ("gelu_bwd", lambda m: m.gelu_bwd(x, dy)),
        ("softmax_fwd", lambda m: m.softmax_fwd(x)),
        ("softmax_bwd", lambda m: m.softmax_bwd(y, dy)),
        ("layernorm_fwd", lambda m: m.layernorm_fwd(x, gain, bias, 1e-5)),
        ("layernorm_bwd", lambda m: m.layernorm_bwd(xhat, rstd, gain, dy)),
        ("adamw_update", adamw),
    ]
    print(f"array shape {x.shape}, adamw table {p.size} params, "
          f"best of {repeats}")
    print(f"{'kernel':<16}{'ext ms':>10}{'python ms':>12}{'speedup':>9}")
    for name, fn in cases:
        t_py = best_of(lambda: fn(P), repeats) * 1e3
        if K.BACKEND == "ext":
            t_ext = best_of(lambda: fn(K), repeats) * 1e3
            print(f"{name:<16}{t_ext:>10.3f}{t_py:>12.3f}{t_py / t_ext:>9.2f}x")
        else:
            print(f"{name:<16}{'-':>10}{t_py:>12.3f}{'':>9}")


def train_steps_seconds():
    """Seconds for a short seeded training run on the active backend."""
    from stamp.data import generate_interaction_dataset
    from stamp.model import StampConfig, StampModel
    from stamp.training import fit

    dataset, manifest = generate_interaction_dataset(n_samples=600, seed=0)
    train, val, _ = manifest.apply(dataset)
    cfg = StampConfig(S=8, T=4, ell=32, n_classes=4, D=32, L=2, h=64, A=4, Q=8,
                      dropout=0.1)
    model = StampModel(cfg, seed=0)
    start = time.perf_counter()
    fit(model, train, val, seed=654, epochs=5, batch_size=64, max_lr=2e-3)
    return time.perf_counter() - start


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=7)
    parser.add_argument("--train-only", action="store_true",
                        help="print train-run seconds and exit (used internally)")
    args = parser.parse_args()

    if args.train_only:
        print(f"{train_steps_seconds():.3f}")
        return

    print(f"active backend: {K.BACKEND}")
    bench_kernels(args.repeats)

    here = train_steps_seconds()
    print(f"\n5-epoch training run ({K.BACKEND}): {here:.2f}s")
    if K.BACKEND == "ext":
        env = dict(os.environ, STAMP_PURE_PYTHON="1")
        out = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--train-only"],
            env=env, capture_output=True, text=True, check=True,
        )
        other = float(out.stdout.strip())
        print(f"5-epoch training run (python): {other:.2f}s "
              f"({other / here:.2f}x the ext time)")


if __name__ == "__main__":
    main()
