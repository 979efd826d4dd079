"""On-disk formats: session and epoch-set archives (text manifest + little-endian payloads)."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .core import EpochSet, Event, EventTimeline, RawSession, standard_montage

SESSION_FORMAT = "eegworkload-session"
EPOCHS_FORMAT = "eegworkload-epochs"
FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


def atomic_write(path, payload: bytes | str) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = payload.encode() if isinstance(payload, str) else payload
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(str(x) for x in v)
    return str(v)


def _render_manifest(fields: list[tuple[str, object]]) -> str:
    return "".join(f"{k}: {_format_value(v)}\n" for k, v in fields)


def _parse_manifest(text: str, allowed: set, repeatable: set, source) -> dict:
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise FormatError(f"{source}:{lineno}: expected 'key: value', got {line!r}")
        key, value = key.strip(), value.strip()
        if key not in allowed:
            raise FormatError(f"{source}:{lineno}: unknown manifest field {key!r}")
        if key in repeatable:
            out.setdefault(key, []).append(value)
        elif key in out:
            raise FormatError(f"{source}:{lineno}: duplicate field {key!r}")
        else:
            out[key] = value
    return out


def _require(fields: dict, keys, source):
    missing = [k for k in keys if k not in fields]
    if missing:
        raise FormatError(f"{source}: missing manifest field(s) {', '.join(missing)}")


def _check_header(fields, fmt, source):
    _require(fields, ("format", "format_version"), source)
    if fields["format"] != fmt:
        raise FormatError(f"{source}: format is {fields['format']!r}, expected {fmt!r}")
    if fields["format_version"] != str(FORMAT_VERSION):
        raise FormatError(f"{source}: unsupported format_version {fields['format_version']}")


def _read_payload(path: Path, dtype, count: int):
    raw = path.read_bytes()
    expected = count * np.dtype(dtype).itemsize
    if len(raw) != expected:
        where = min(len(raw), expected)
        raise FormatError(f"{path}: payload has {len(raw)} bytes, expected {expected}; "
                          f"data ends or overruns at byte offset {where}")
    return np.frombuffer(raw, dtype=dtype)


# ---------------------------------------------------------------- sessions

_SESSION_FIELDS = {"format", "format_version", "participant_id", "sample_rate", "units", "n_samples",
                   "eeg_channels", "eog_channels", "event"}


def session_manifest(session: RawSession) -> str:
    fields = [
        ("format", SESSION_FORMAT),
        ("format_version", FORMAT_VERSION),
        ("participant_id", session.participant_id),
        ("sample_rate", float(session.sample_rate)),
        ("units", "uV"),
        ("n_samples", session.n_samples),
        ("eeg_channels", session.montage.eeg_channels),
        ("eog_channels", session.montage.eog_channels),
    ]
    fields += [("event", f"{e.onset} {e.duration} {e.phase} {e.level} {e.trial}") for e in session.timeline]
    return _render_manifest(fields)


def _frames(x: np.ndarray) -> bytes:
    # time-major: each frame holds every channel in manifest order
    return np.ascontiguousarray(np.asarray(x).T, dtype="<f4").tobytes()


def write_session(session: RawSession, directory) -> Path:
    d = Path(directory)
    atomic_write(d / "eeg.f32le", _frames(session.eeg))
    atomic_write(d / "eog.f32le", _frames(session.eog))
    atomic_write(d / "manifest.txt", session_manifest(session))
    return d


def read_session(directory) -> RawSession:
    """Load a session archive; samples are converted to float64 once, here."""
    d = Path(directory)
    source = d / "manifest.txt"
    try:
        text = source.read_text()
    except FileNotFoundError:
        raise
    f = _parse_manifest(text, _SESSION_FIELDS, {"event"}, source)
    _check_header(f, SESSION_FORMAT, source)
    _require(f, ("participant_id", "sample_rate", "n_samples", "eeg_channels", "eog_channels"), source)
    montage = standard_montage()
    eeg_names = tuple(f["eeg_channels"].split(","))
    eog_names = tuple(f["eog_channels"].split(","))
    if eeg_names != montage.eeg_channels or eog_names != montage.eog_channels:
        raise FormatError(f"{source}: channel list does not match the standard 30+4 montage order")
    if f.get("units", "uV") != "uV":
        raise FormatError(f"{source}: unsupported units {f['units']!r}")
    try:
        fs = float(f["sample_rate"])
        n = int(f["n_samples"])
        events = []
        for k, line in enumerate(f.get("event", [])):
            onset, dur, phase, level, trial = line.split()
            events.append(Event(int(onset), int(dur), phase, int(level), int(trial)))
    except ValueError as exc:
        raise FormatError(f"{source}: malformed field ({exc})") from None
    eeg = _read_payload(d / "eeg.f32le", "<f4", n * len(eeg_names)).reshape(n, len(eeg_names)).T
    eog = _read_payload(d / "eog.f32le", "<f4", n * len(eog_names)).reshape(n, len(eog_names)).T
    return RawSession(f["participant_id"], fs, eeg.astype(np.float64), eog.astype(np.float64),
                      EventTimeline(tuple(events), fs), montage)


# ---------------------------------------------------------------- epoch sets

_EPOCH_FIELDS = {"format", "format_version", "participant_id", "sample_rate", "units", "n_epochs",
                 "n_channels", "n_samples", "channels", "provenance"}


def write_epochs(epochs: EpochSet, directory, sample_rate: float = 100.0) -> Path:
    """Epoch archive: ``epochs.f32le`` [epoch, sample, channel], ``labels.u8``, ``trials.i32le``."""
    d = Path(directory)
    pids = set(epochs.participant_ids)
    if len(pids) > 1:
        raise ValueError("an epoch archive holds one participant")
    n, c, t = epochs.data.shape
    fields = [
        ("format", EPOCHS_FORMAT),
        ("format_version", FORMAT_VERSION),
        ("participant_id", pids.pop() if pids else ""),
        ("sample_rate", float(sample_rate)),
        ("units", "uV"),
        ("n_epochs", n),
        ("n_channels", c),
        ("n_samples", t),
        ("channels", standard_montage().eeg_channels[:c]),
        ("provenance", json.dumps(epochs.provenance, sort_keys=True, default=str)),
    ]
    atomic_write(d / "epochs.f32le", np.ascontiguousarray(epochs.data.transpose(0, 2, 1), dtype="<f4").tobytes())
    atomic_write(d / "labels.u8", np.asarray(epochs.labels, dtype="u1").tobytes())
    atomic_write(d / "trials.i32le", np.asarray(epochs.trials, dtype="<i4").tobytes())
    atomic_write(d / "manifest.txt", _render_manifest(fields))
    return d


def read_epochs(directory) -> EpochSet:
    d = Path(directory)
    source = d / "manifest.txt"
    f = _parse_manifest(source.read_text(), _EPOCH_FIELDS, set(), source)
    _check_header(f, EPOCHS_FORMAT, source)
    _require(f, ("participant_id", "n_epochs", "n_channels", "n_samples"), source)
    try:
        n, c, t = int(f["n_epochs"]), int(f["n_channels"]), int(f["n_samples"])
        prov = json.loads(f.get("provenance", "{}"))
    except ValueError as exc:
        raise FormatError(f"{source}: malformed field ({exc})") from None
    data = _read_payload(d / "epochs.f32le", "<f4", n * c * t).reshape(n, t, c).transpose(0, 2, 1)
    labels = _read_payload(d / "labels.u8", "u1", n)
    trials = _read_payload(d / "trials.i32le", "<i4", n)
    if n and labels.max() > 2:
        raise FormatError(f"{d / 'labels.u8'}: label value {int(labels.max())} outside 0..2")
    return EpochSet(data.astype(np.float64), labels.astype(np.int64), trials.astype(np.int64),
                    f["participant_id"], prov)
