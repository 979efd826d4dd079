"""Compiled kernels agree with their NumPy twins; the environment flag switches backends."""

import os
import subprocess
import sys

import numpy as np
import pytest

from eegworkload._accel import NUMBA_ENABLED
from eegworkload.dsp.filters import _sosfilt_numba, _sosfilt_numpy, preprocessing_chain
from eegworkload.dsp.ica import _infomax_pass_numba, _infomax_pass_numpy
from eegworkload.nn._kernels import (_bn_backward_numba, _bn_backward_numpy, _bn_forward_numba, _bn_forward_numpy,
                                     _elu_forward_numba, _elu_forward_numpy)


def test_sosfilt_kernels_agree(rng):
    sos = preprocessing_chain(1000.0)
    x = rng.normal(size=5000)
    zi0 = rng.normal(size=(sos.shape[0], 2))
    a, b = x.copy(), x.copy()
    za, zb = zi0.copy(), zi0.copy()
    _sosfilt_numba(sos, a, za)
    _sosfilt_numpy(sos, b, zb)
    assert np.allclose(a, b, rtol=1e-10, atol=1e-10)
    assert np.allclose(za, zb, rtol=1e-10, atol=1e-10)


@pytest.mark.parametrize("extended", [True, False])
def test_infomax_pass_kernels_agree(rng, extended):
    x = rng.laplace(size=(2000, 6))
    w0 = np.eye(6) + 0.01 * rng.normal(size=(6, 6))
    perm = rng.permutation(2000)
    signs = np.array([1.0, -1.0, 1.0, 1.0, -1.0, 1.0])
    wa, wb = w0.copy(), w0.copy()
    ok_a = _infomax_pass_numba(x, wa, perm, 25, 1e-3, signs, extended)
    ok_b = _infomax_pass_numpy(x, wb, perm, 25, 1e-3, signs, extended)
    assert ok_a == ok_b is True
    assert np.allclose(wa, wb, rtol=1e-9, atol=1e-12)


def test_infomax_blowup_flag_agrees(rng):
    x = 1e3 * rng.normal(size=(400, 4))
    perm = np.arange(400)
    res = [f(x, np.eye(4), perm, 20, 10.0, np.ones(4), True) for f in (_infomax_pass_numba, _infomax_pass_numpy)]
    assert res == [False, False]


def test_batchnorm_kernels_agree(rng):
    x = rng.normal(size=(64, 12)) * 3 + 1
    gamma, beta = rng.normal(size=12), rng.normal(size=12)
    fa, fb = _bn_forward_numba(x, gamma, beta, 1e-5), _bn_forward_numpy(x, gamma, beta, 1e-5)
    for u, v in zip(fa, fb):
        assert np.allclose(u, v, rtol=1e-12, atol=1e-12)
    g = rng.normal(size=x.shape)
    ba = _bn_backward_numba(g, fa[1], gamma, fa[4])
    bb = _bn_backward_numpy(g, fb[1], gamma, fb[4])
    for u, v in zip(ba, bb):
        assert np.allclose(u, v, rtol=1e-10, atol=1e-12)


def test_elu_kernels_agree(rng):
    x = rng.normal(size=(3, 5, 7)) * 4
    for u, v in zip(_elu_forward_numba(x, 1.0), _elu_forward_numpy(x, 1.0)):
        assert u.shape == x.shape
        assert np.allclose(u, v, rtol=1e-14, atol=1e-15)


@pytest.mark.parametrize("flag, expected", [("0", "numpy"), ("1", "numba")])
def test_environment_flag_selects_backend(flag, expected):
    env = dict(os.environ, EEGWORKLOAD_NUMBA=flag)
    code = ("from eegworkload._accel import backend_name\n"
            "from eegworkload.dsp import filters\n"
            "print(backend_name(), filters.sosfilt_inplace.__name__)")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout
    name, kernel = out.split()
    assert name == expected and kernel == f"_sosfilt_{expected}"


def test_default_backend_is_compiled():
    assert NUMBA_ENABLED == (os.environ.get("EEGWORKLOAD_NUMBA", "1") not in ("0", "false", "no", "off"))
