"""Epoch segmentation and class balancing."""

from __future__ import annotations

import logging

import numpy as np

from ..core import EpochSet, Label, RawSession

log = logging.getLogger(__name__)

EPOCH_SECONDS = 1.0


class BalanceError(ValueError):
    pass


def epoch_segment(session: RawSession, provenance=None) -> EpochSet:
    """Cut task and rest phases into non-overlapping 1 s epochs.

    Task phases give LW (level 1) or HW (levels 2-3) epochs, rest phases NS
    epochs; instruction phases are skipped. A trailing partial window is
    dropped with a warning, never padded.
    """
    fs = session.sample_rate
    width = int(round(EPOCH_SECONDS * fs))
    if abs(width - EPOCH_SECONDS * fs) > 1e-9:
        raise ValueError(f"sample rate {fs} Hz does not give an integer epoch length")
    eeg = np.asarray(session.eeg)
    chunks, labels, trials = [], [], []
    for e in session.timeline.events:
        label = Label.for_phase(e.phase, e.level)
        if label is None:
            continue
        n_full, rest = divmod(e.duration, width)
        if rest:
            log.warning("%s: %s phase of trial %d has %d trailing samples; dropped",
                        session.participant_id, e.phase, e.trial, rest)
        if n_full == 0:
            continue
        seg = eeg[:, e.onset:e.onset + n_full * width]
        chunks.append(seg.reshape(eeg.shape[0], n_full, width).transpose(1, 0, 2))
        labels.append(np.full(n_full, int(label)))
        trials.append(np.full(n_full, e.trial))
    if chunks:
        data = np.concatenate(chunks)
        labels = np.concatenate(labels)
        trials = np.concatenate(trials)
    else:
        data = np.zeros((0, eeg.shape[0], width))
        labels = trials = np.zeros(0, dtype=np.int64)
    prov = {"sample_rate": fs, "epoch_samples": width}
    prov.update(provenance or {})
    return EpochSet(data, labels, trials, session.participant_id, prov)


def balance_classes(epochs: EpochSet, seed: int) -> EpochSet:
    """Randomly downsample every class, without replacement, to the smallest class count.

    With the paradigm's counts NS is the smallest class, so NS is kept whole
    and LW/HW are reduced to its size. Kept epochs stay in their original
    order.
    """
    counts = np.bincount(epochs.labels, minlength=3)
    missing = [Label(i).name for i in range(3) if counts[i] == 0]
    if missing:
        raise BalanceError(f"cannot balance: label(s) {', '.join(missing)} absent")
    target = int(counts.min())
    rng = np.random.default_rng(seed)
    keep = []
    for lab in range(3):
        idx = np.flatnonzero(epochs.labels == lab)
        if idx.size > target:
            idx = np.sort(rng.choice(idx, size=target, replace=False))
        keep.append(idx)
    keep = np.sort(np.concatenate(keep))
    out = epochs.subset(keep)
    out.provenance["balanced_to"] = target
    return out
