"""Preprocessing chain: notch -> band-pass -> decimate -> ICA -> epoch -> balance."""

from __future__ import annotations

import numpy as np

from ..core import RawSession, ValidationError, validate_session
from .epoching import BalanceError, balance_classes, epoch_segment
from .filters import (FilterDesignError, FilterSpec, apply_zero_phase, decimate, design_filter,
                      filter_and_decimate, preprocessing_chain)
from .ica import (DimensionalityError, IcaModel, amari_distance, fit_ica, reject_eog_components)

TARGET_RATE = 100.0

__all__ = [
    "BalanceError", "DimensionalityError", "FilterDesignError", "FilterSpec", "IcaModel",
    "amari_distance", "apply_zero_phase", "balance_classes", "decimate", "design_filter",
    "epoch_segment", "fit_ica", "preprocess_session", "reject_eog_components",
]


def preprocess_session(session: RawSession, use_ica: bool = True, seed: int = 0,
                       ica_threshold: float = 0.7, balance: bool = True):
    """Run the full chain on one session.

    Returns ``(epochs, log)``; ``log`` records the filters, the ICA outcome
    and epoch counts before and after balancing.
    """
    report = validate_session(session)
    if not report.ok:
        raise ValidationError(f"{session.participant_id}: " + "; ".join(report.violations))
    fs = session.sample_rate
    factor = int(round(fs / TARGET_RATE))
    if abs(factor * TARGET_RATE - fs) > 1e-9 or factor < 1:
        raise ValidationError(f"{session.participant_id}: cannot decimate {fs} Hz to {TARGET_RATE} Hz")
    sos = preprocessing_chain(fs)
    eeg = filter_and_decimate(session.eeg, sos, factor)
    eog = filter_and_decimate(session.eog, sos, factor)
    timeline = session.timeline.resampled(factor)
    log = {
        "participant_id": session.participant_id,
        "filters": ["iir_notch 60 Hz Q=30 (zero-phase)", "butterworth_bandpass 1-50 Hz order 4 (zero-phase)"],
        "decimation": f"{fs:g} Hz -> {TARGET_RATE:g} Hz (factor {factor})",
        "ica": use_ica,
        "rejected_components": [],
    }
    if use_ica:
        model = fit_ica(eeg, seed=seed)
        eeg, model = reject_eog_components(model, eeg, eog, threshold=ica_threshold)
        log["rejected_components"] = sorted(model.rejected_components)
        log["ica_iterations"] = model.convergence_info["iterations"]
        log["ica_converged"] = bool(model.convergence_info["converged"])
    down = session.replace(sample_rate=TARGET_RATE, eeg=eeg, eog=eog, timeline=timeline)
    epochs = epoch_segment(down, provenance={"ica": use_ica, "notch_hz": 60.0, "band_hz": [1.0, 50.0],
                                             "source_rate": fs})
    log["epochs_before_balancing"] = epochs.label_counts() | {"total": len(epochs)}
    if balance:
        epochs = balance_classes(epochs, seed)
        log["epochs_after_balancing"] = epochs.label_counts() | {"total": len(epochs)}
    return epochs, log
