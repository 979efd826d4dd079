"""IIR filter design, zero-phase application and decimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.signal

from .._accel import njit, use_compiled


class FilterDesignError(ValueError):
    pass


@dataclass(frozen=True)
class FilterSpec:
    """Either a Butterworth band-pass (``band=(low, high)``, even ``order``)
    or a second-order IIR notch (``center``, ``q``)."""

    kind: str
    order: int = 2
    band: tuple[float, float] | None = None
    center: float | None = None
    q: float | None = None
    zero_phase: bool = True

    @classmethod
    def bandpass(cls, low=1.0, high=50.0, order=4):
        return cls("butterworth_bandpass", order=order, band=(float(low), float(high)))

    @classmethod
    def notch(cls, center=60.0, q=30.0):
        return cls("iir_notch", order=2, center=float(center), q=float(q))


def design_filter(spec: FilterSpec, sample_rate: float) -> np.ndarray:
    """Second-order sections ``(n_sections, 6)`` for ``spec`` at ``sample_rate``."""
    nyq = sample_rate / 2.0
    if spec.kind == "butterworth_bandpass":
        if spec.band is None:
            raise FilterDesignError("band-pass needs band=(low, high)")
        low, high = spec.band
        if not 0 < low < high < nyq:
            raise FilterDesignError(f"band ({low}, {high}) Hz must satisfy 0 < low < high < Nyquist ({nyq} Hz)")
        if spec.order < 2 or spec.order % 2:
            raise FilterDesignError(f"band-pass order must be even and >= 2, got {spec.order}")
        sos = scipy.signal.butter(spec.order // 2, [low, high], btype="bandpass", fs=sample_rate, output="sos")
    elif spec.kind == "iir_notch":
        if spec.center is None or not 0 < spec.center < nyq:
            raise FilterDesignError(f"notch center {spec.center} Hz must lie in (0, {nyq}) Hz")
        if not spec.q or spec.q <= 0:
            raise FilterDesignError("notch quality factor must be > 0")
        b, a = scipy.signal.iirnotch(spec.center, spec.q, fs=sample_rate)
        sos = np.concatenate([b, a])[None, :]
    else:
        raise FilterDesignError(f"unknown filter kind {spec.kind!r}")
    sos = np.ascontiguousarray(sos, dtype=np.float64)
    if not is_stable(sos):
        raise FilterDesignError(f"designed filter {spec} is unstable")
    return sos


def is_stable(sos: np.ndarray) -> bool:
    for sec in np.atleast_2d(sos):
        if np.any(np.abs(np.roots(sec[3:])) >= 1.0):
            return False
    return True


def preprocessing_chain(sample_rate: float, notch=60.0, q=30.0, band=(1.0, 50.0), order=4) -> np.ndarray:
    """Notch followed by band-pass, stacked into one SOS cascade."""
    return np.vstack([design_filter(FilterSpec.notch(notch, q), sample_rate),
                      design_filter(FilterSpec.bandpass(band[0], band[1], order), sample_rate)])


@njit
def _sosfilt_numba(sos, x, zi):
    # direct form II transposed, in place on x (1-D), state zi (n_sections, 2)
    n_sec = sos.shape[0]
    for i in range(x.shape[0]):
        v = x[i]
        for s in range(n_sec):
            b0 = sos[s, 0]
            b1 = sos[s, 1]
            b2 = sos[s, 2]
            a1 = sos[s, 4]
            a2 = sos[s, 5]
            y = b0 * v + zi[s, 0]
            zi[s, 0] = b1 * v - a1 * y + zi[s, 1]
            zi[s, 1] = b2 * v - a2 * y
            v = y
        x[i] = v


def _sosfilt_numpy(sos, x, zi):
    y, zf = scipy.signal.sosfilt(sos, x, zi=zi)
    x[:] = y
    zi[:] = zf


sosfilt_inplace = _sosfilt_numba if use_compiled() else _sosfilt_numpy


def padlen_for(sos: np.ndarray) -> int:
    return 3 * (2 * len(sos) + 1)


def _normalize(sos):
    sos = np.array(sos, dtype=np.float64, copy=True)
    sos[:, :3] /= sos[:, 3:4]
    sos[:, 3:] /= sos[:, 3:4]
    return np.ascontiguousarray(sos)


def _zero_phase_row(sos, zi_unit, x, padlen):
    ext = np.concatenate([2 * x[0] - x[padlen:0:-1], x, 2 * x[-1] - x[-2:-padlen - 2:-1]])
    zi = zi_unit * ext[0]
    sosfilt_inplace(sos, ext, zi)
    ext = ext[::-1].copy()
    zi = zi_unit * ext[0]
    sosfilt_inplace(sos, ext, zi)
    return ext[::-1][padlen:-padlen]


def apply_zero_phase(sos: np.ndarray, signal: np.ndarray) -> np.ndarray:
    """Forward-backward filtering along the last axis.

    Edges are handled with odd reflection of ``3 * (2 * n_sections + 1)``
    samples and steady-state initial conditions, so a constant input maps
    to the filter's DC gain times the constant everywhere.
    """
    sos = _normalize(sos)
    x = np.asarray(signal, dtype=np.float64)
    padlen = padlen_for(sos)
    if x.shape[-1] <= padlen:
        raise ValueError(f"signal length {x.shape[-1]} too short; need more than {padlen} samples")
    zi_unit = np.ascontiguousarray(scipy.signal.sosfilt_zi(sos))
    flat = x.reshape(-1, x.shape[-1])
    out = np.empty_like(flat)
    for r in range(flat.shape[0]):
        out[r] = _zero_phase_row(sos, zi_unit, flat[r], padlen)
    return out.reshape(x.shape)


def decimate(signal: np.ndarray, factor: int = 10) -> np.ndarray:
    """Keep every ``factor``-th sample; output length is ``floor(n / factor)``.

    No anti-alias filter is applied: the caller must band-limit the input
    below the new Nyquist first (the 1-50 Hz band-pass does this for 1000 ->
    100 Hz).
    """
    x = np.asarray(signal)
    n = x.shape[-1] // factor
    return np.ascontiguousarray(x[..., :n * factor:factor])


def filter_and_decimate(signal: np.ndarray, sos: np.ndarray, factor: int) -> np.ndarray:
    """Zero-phase filter then decimate, one row at a time to bound memory."""
    x = np.asarray(signal, dtype=np.float64)
    sos = _normalize(sos)
    padlen = padlen_for(sos)
    if x.shape[-1] <= padlen:
        raise ValueError(f"signal length {x.shape[-1]} too short; need more than {padlen} samples")
    zi_unit = np.ascontiguousarray(scipy.signal.sosfilt_zi(sos))
    n = x.shape[-1] // factor
    out = np.empty(x.shape[:-1] + (n,))
    flat_in = x.reshape(-1, x.shape[-1])
    flat_out = out.reshape(-1, n)
    for r in range(flat_in.shape[0]):
        flat_out[r] = _zero_phase_row(sos, zi_unit, flat_in[r], padlen)[:n * factor:factor]
    return out
