"""
Kernel backend selection.

Hot inner loops (IIR cascades, infomax block updates) are written once as
plain Python/NumPy loops and compiled with numba when it is available and
enabled. Setting ``EEGWORKLOAD_NUMBA=0`` in the environment before import
selects the pure NumPy/SciPy fallback path instead, which is useful for
debugging and for cross-checking the compiled kernels.

Kernels bound by ``tanh``/``exp`` (the infomax update, ELU) dispatch to
their compiled form only when numba has Intel SVML; otherwise NumPy's
vectorized transcendentals are faster and are used instead.
"""

import os

_flag = os.environ.get("EEGWORKLOAD_NUMBA", "1").strip().lower()
_requested = _flag not in ("0", "false", "no", "off")

try:
    if not _requested:
        raise ImportError("disabled by EEGWORKLOAD_NUMBA")
    import numba
    from numba import njit as _numba_njit

    NUMBA_ENABLED = True
    # without Intel SVML, numba's tanh/exp are scalar libm calls and lose to NumPy's SIMD loops
    SVML = bool(getattr(numba.config, "USING_SVML", False))
except ImportError:
    NUMBA_ENABLED = False
    SVML = False
    _numba_njit = None


def njit(func=None, **kwargs):
    """``numba.njit`` when enabled, identity decorator otherwise."""
    if NUMBA_ENABLED:
        kwargs.setdefault("cache", True)
        if func is not None:
            return _numba_njit(**kwargs)(func)
        return _numba_njit(**kwargs)
    if func is not None:
        return func

    def wrapper(f):
        return f

    return wrapper


def use_compiled(transcendental: bool = False) -> bool:
    """Whether a kernel should dispatch to its numba variant.

    Kernels dominated by ``exp``/``tanh`` only compile when SVML is present.
    """
    return NUMBA_ENABLED and (SVML or not transcendental)


def backend_name():
    return "numba" if NUMBA_ENABLED else "numpy"
