"""Time the numba kernels against their NumPy fallbacks.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from eegworkload._accel import SVML, backend_name
from eegworkload.dsp import filters, ica
from eegworkload.nn import _kernels

from eegworkload.dsp.filters import _sosfilt_numba, _sosfilt_numpy, preprocessing_chain
from eegworkload.dsp.ica import _infomax_pass_numba, _infomax_pass_numpy
from eegworkload.nn._kernels import (_bn_backward_numba, _bn_backward_numpy, _bn_forward_numba, _bn_forward_numpy,
                                     _elu_forward_numba, _elu_forward_numpy)


def cases(rng):
    sos = preprocessing_chain(1000.0)
    sig = rng.normal(size=200_000)
    zi = np.zeros((sos.shape[0], 2))
    ica_x = rng.laplace(size=(31_000, 30))
    perm = rng.permutation(ica_x.shape[0])
    signs = np.where(rng.random(30) < 0.5, -1.0, 1.0)
    bn_x = rng.normal(size=(64 * 25, 64))
    gamma, beta = np.ones(64), np.zeros(64)
    _, xhat, _, _, invstd = _bn_forward_numpy(bn_x, gamma, beta, 1e-5)
    grad = rng.normal(size=bn_x.shape)
    elu_x = rng.normal(size=(64, 25, 12, 64))
    return {
        "sosfilt (200k samples, 6 sections)": (
            lambda: _sosfilt_numba(sos, sig.copy(), zi.copy()),
            lambda: _sosfilt_numpy(sos, sig.copy(), zi.copy())),
        "infomax pass (30 ch, 31k samples)": (
            lambda: _infomax_pass_numba(ica_x, np.eye(30), perm, 101, 1e-4, signs, True),
            lambda: _infomax_pass_numpy(ica_x, np.eye(30), perm, 101, 1e-4, signs, True)),
        "batch-norm forward (1600 x 64)": (
            lambda: _bn_forward_numba(bn_x, gamma, beta, 1e-5),
            lambda: _bn_forward_numpy(bn_x, gamma, beta, 1e-5)),
        "batch-norm backward (1600 x 64)": (
            lambda: _bn_backward_numba(grad, xhat, gamma, invstd),
            lambda: _bn_backward_numpy(grad, xhat, gamma, invstd)),
        "ELU forward (1.2M values)": (
            lambda: _elu_forward_numba(elu_x, 1.0),
            lambda: _elu_forward_numpy(elu_x, 1.0)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    dispatch = [filters.sosfilt_inplace, ica.infomax_pass, _kernels.bn_forward, _kernels.bn_backward,
                _kernels.elu_forward]
    print(f"backend: {backend_name()}, SVML: {SVML}")
    print(f"{'kernel':<36}{'numba ms':>10}{'numpy ms':>10}{'speed-up':>10}  dispatches to")
    for (name, (fast, slow)), used in zip(cases(rng).items(), dispatch):
        fast()  # compile / warm caches
        slow()
        t_fast = min(timeit.repeat(fast, number=1, repeat=args.repeat)) * 1e3
        t_slow = min(timeit.repeat(slow, number=1, repeat=args.repeat)) * 1e3
        chosen = "numba" if used.__name__.endswith("_numba") else "numpy"
        print(f"{name:<36}{t_fast:>10.2f}{t_slow:>10.2f}{t_slow / t_fast:>9.1f}x  {chosen}")


if __name__ == "__main__":
    main()
