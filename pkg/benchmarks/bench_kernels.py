"""Compare the compiled kernels with the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel runs on the shapes it sees in the pipeline: a 25-frame stack of
80x80 crops for the pyramid step, and the batch-of-20 activations of the
network for depthwise convolution and batch norm.
"""

import argparse
import timeit

import numpy as np

from rppgnet._kernels import _pykernels

try:
    from rppgnet._kernels import _ckernels
except ImportError:
    _ckernels = None


def cases(rng):
    crops = rng.uniform(0, 255, (25, 80, 80, 3))
    act = rng.standard_normal((20, 23, 23, 96)).astype(np.float32)
    w = rng.standard_normal((3, 3, 96)).astype(np.float32)
    dy1 = rng.standard_normal((20, 21, 21, 96)).astype(np.float32)
    bn_in = rng.standard_normal((20, 21, 21, 96)).astype(np.float32)
    g = np.ones(96, np.float32)
    b = np.zeros(96, np.float32)

    def make(k):
        _, xhat, inv_std, _, _ = k.bn_forward_train(bn_in, g, b, 1e-5)
        return {
            "pyr_down 25x80x80x3 f64": lambda: k.pyr_down(crops),
            "dw_conv_forward 20x23x23x96 s1": lambda: k.dw_conv_forward(act, w, 1, 0),
            "dw_conv_backward 20x23x23x96 s1": lambda: k.dw_conv_backward(act, w, dy1, 1, 0),
            "bn_forward_train 20x21x21x96": lambda: k.bn_forward_train(bn_in, g, b, 1e-5),
            "bn_backward 20x21x21x96": lambda: k.bn_backward(dy1, xhat, g, inv_std),
        }
    return make


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    make = cases(np.random.default_rng(0))
    py = make(_pykernels)
    cy = make(_ckernels) if _ckernels is not None else None
    if cy is None:
        print("compiled kernels not built; numpy timings only")
    print(f"{'kernel':36s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in py.items():
        t_py = min(timeit.repeat(fn, number=1, repeat=args.repeat)) * 1e3
        if cy is None:
            print(f"{name:36s} {t_py:10.2f}")
            continue
        t_cy = min(timeit.repeat(cy[name], number=1, repeat=args.repeat)) * 1e3
        print(f"{name:36s} {t_py:10.2f} {t_cy:10.2f} {t_py / t_cy:7.1f}x")


if __name__ == "__main__":
    main()
