"""Compare the compiled and pure-numpy kernel backends.

Times the raw gather/scatter kernels and one GCAE training step per backend::

    python benchmarks/bench_kernels.py --repeat 20
"""

import argparse
import timeit

import numpy as np

from shopformer import numkit as nk
from shopformer.gcae import GCAE, GCAEConfig
from shopformer.numkit import backend


def kernel_cases(batch, channels, frames, nodes, k=3, stride=2):
    rng = np.random.default_rng(0)
    xp = rng.normal(size=(batch, channels, frames + k - 1, nodes))
    t_out = (frames - 1) // stride + 1
    cols = rng.normal(size=(batch, channels, k, t_out, nodes))
    return {
        "im2col_time": lambda: backend.kernels.im2col_time(xp, k, stride, t_out),
        "col2im_time": lambda: backend.kernels.col2im_time(cols, frames + k - 1, stride),
    }


def gcae_step(batch):
    model = GCAE(GCAEConfig(dropout=0.0), np.random.default_rng(0))
    x = nk.Tensor(np.random.default_rng(1).normal(size=(batch, 2, 12, 18)))
    params = model.named_parameters().values()

    def step():
        for p in params:
            p.zero_grad()
        nk.backward(nk.mse(model(x), x))
    return step


def best_ms(fn, repeat):
    return 1e3 * min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--channels", type=int, default=64)
    args = ap.parse_args(argv)

    names = sorted(backend.available())
    cases = dict(kernel_cases(args.batch, args.channels, 12, 18))
    cases["gcae_train_step"] = gcae_step(args.batch)
    results = {}
    for name in names:
        prev = backend.use(name)
        for case, fn in cases.items():
            fn()  # warm up
            results[case, name] = best_ms(fn, args.repeat)
        backend.use(prev)

    header = f"{'case':<18}" + "".join(f"{n + ' ms':>14}" for n in names)
    if "cython" in names:
        header += f"{'speedup':>10}"
    print(f"batch={args.batch} channels={args.channels} V=18 n=12 repeat={args.repeat}")
    print(header)
    for case in cases:
        line = f"{case:<18}" + "".join(f"{results[case, n]:>14.3f}" for n in names)
        if "cython" in names:
            line += f"{results[case, 'python'] / results[case, 'cython']:>9.2f}x"
        print(line)


if __name__ == "__main__":
    main()
