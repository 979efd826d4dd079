"""Domain types, montage, event timeline and paradigm arithmetic."""

from __future__ import annotations

import enum
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any

import numpy as np


class ValidationError(ValueError):
    """A domain object violates one of its invariants."""


class ConfigError(ValueError):
    """Invalid configuration values."""


class Label(enum.IntEnum):
    NS = 0
    LW = 1
    HW = 2

    @classmethod
    def for_phase(cls, phase: str, level: int) -> "Label | None":
        """Label of a phase; ``None`` for instruction phases (never epoched)."""
        if phase == "rest":
            return cls.NS
        if phase == "task":
            return cls.LW if level == 1 else cls.HW
        return None


PHASES = ("instruction", "task", "rest")

# level -> (trials, instruction s, task s, rest s)
PARADIGM = {
    1: (15, 10, 60, 10),
    2: (10, 20, 60, 10),
    3: (10, 30, 60, 10),
}

REGIONS = ("frontal", "central", "temporal", "parietal", "occipital")

# name, inclination from Cz (deg), azimuth (deg; 90 = nose, 180 = left ear), region
_CHANNEL_TABLE = (
    ("Fp1", 90, 108, "frontal"),
    ("Fp2", 90, 72, "frontal"),
    ("F7", 90, 144, "frontal"),
    ("F3", 64, 130, "frontal"),
    ("Fz", 45, 90, "frontal"),
    ("F4", 64, 50, "frontal"),
    ("F8", 90, 36, "frontal"),
    ("FC5", 69, 159, "central"),
    ("FC1", 34, 113, "central"),
    ("FC2", 34, 67, "central"),
    ("FC6", 69, 21, "central"),
    ("T7", 90, 180, "temporal"),
    ("C3", 45, 180, "central"),
    ("Cz", 0, 0, "central"),
    ("C4", 45, 0, "central"),
    ("T8", 90, 0, "temporal"),
    ("CP5", 69, 201, "central"),
    ("CP1", 34, 247, "central"),
    ("CP2", 34, 293, "central"),
    ("CP6", 69, 339, "central"),
    ("P7", 90, 216, "parietal"),
    ("P3", 64, 230, "parietal"),
    ("Pz", 45, 270, "parietal"),
    ("P4", 64, 310, "parietal"),
    ("P8", 90, 324, "parietal"),
    ("PO9", 110, 238, "occipital"),
    ("O1", 90, 252, "occipital"),
    ("Oz", 90, 270, "occipital"),
    ("O2", 90, 288, "occipital"),
    ("PO10", 110, 302, "occipital"),
)
_EOG_NAMES = ("vEOG-up", "vEOG-down", "hEOG-left", "hEOG-right")
# inclination mapped to radius so that the lowest electrodes stay inside the disk
_RADIUS_DEG = 125.0

N_EEG = 30
N_EOG = 4


@dataclass(frozen=True)
class Montage:
    eeg_channels: tuple[str, ...]
    eog_channels: tuple[str, ...]
    positions: tuple[tuple[float, float], ...]
    regions: tuple[str, ...]

    def index(self, name: str) -> int:
        return self.eeg_channels.index(name)

    def region(self, name: str) -> str:
        return self.regions[self.index(name)]

    def channels_in(self, *regions: str) -> np.ndarray:
        """Indices of EEG channels tagged with any of ``regions``."""
        return np.array([i for i, r in enumerate(self.regions) if r in regions], dtype=int)

    def position_array(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=float)

    def violations(self) -> list[str]:
        out = []
        if len(self.eeg_channels) != N_EEG:
            out.append(f"montage has {len(self.eeg_channels)} EEG channels, expected {N_EEG}")
        if len(self.eog_channels) != N_EOG:
            out.append(f"montage has {len(self.eog_channels)} EOG channels, expected {N_EOG}")
        names = self.eeg_channels + self.eog_channels
        if len(set(names)) != len(names):
            out.append("montage channel names are not unique")
        for forbidden in ("AFz", "FCz"):
            if forbidden in self.eeg_channels:
                out.append(f"{forbidden} is the ground/reference electrode and cannot be a data channel")
        if len(self.positions) != len(self.eeg_channels) or len(self.regions) != len(self.eeg_channels):
            out.append("positions/regions length differs from EEG channel count")
        for name, (x, y) in zip(self.eeg_channels, self.positions):
            if x * x + y * y >= 1.0:
                out.append(f"position of {name} lies outside the unit disk")
        for name, r in zip(self.eeg_channels, self.regions):
            if r not in REGIONS:
                out.append(f"unknown region {r!r} for {name}")
        return out


@lru_cache(maxsize=None)
def standard_montage() -> Montage:
    """Fixed 30 EEG + 4 EOG montage with azimuthal-equidistant 2D positions."""
    names, positions, regions = [], [], []
    for name, incl, azim, region in _CHANNEL_TABLE:
        r = incl / _RADIUS_DEG
        a = math.radians(azim)
        names.append(name)
        positions.append((round(r * math.cos(a), 6), round(r * math.sin(a), 6)))
        regions.append(region)
    return Montage(tuple(names), _EOG_NAMES, tuple(positions), tuple(regions))


@dataclass(frozen=True)
class Event:
    onset: int
    duration: int
    phase: str
    level: int
    trial: int

    @property
    def end(self) -> int:
        return self.onset + self.duration


@dataclass(frozen=True)
class EventTimeline:
    """Ordered, non-overlapping phase events in samples at ``sample_rate``."""

    events: tuple[Event, ...]
    sample_rate: float

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    @property
    def n_samples(self) -> int:
        return self.events[-1].end if self.events else 0

    @property
    def n_trials(self) -> int:
        return len({e.trial for e in self.events})

    def resampled(self, factor: int) -> "EventTimeline":
        """Timeline for data decimated by an integer ``factor``."""
        events = tuple(
            Event(e.onset // factor, e.end // factor - e.onset // factor, e.phase, e.level, e.trial)
            for e in self.events
        )
        return EventTimeline(events, self.sample_rate / factor)

    def structural_violations(self) -> list[str]:
        out = []
        prev_end = 0
        for i, e in enumerate(self.events):
            if e.phase not in PHASES:
                out.append(f"event {i}: unknown phase {e.phase!r}")
            if e.level not in PARADIGM:
                out.append(f"event {i}: unknown level {e.level}")
            if e.duration < 0 or e.onset < 0:
                out.append(f"event {i}: negative onset or duration")
            if e.onset < prev_end:
                out.append(f"event {i}: overlaps or precedes the previous event (onset {e.onset} < {prev_end})")
            prev_end = max(prev_end, e.end)
        return out


def paradigm_timeline(sample_rate: float = 1000.0, levels: Sequence[int] = (1, 2, 3),
                      trials: dict | None = None) -> EventTimeline:
    """Instruction -> task -> rest trials for each level in ``levels``, back to back.

    ``trials`` optionally overrides the number of trials per level (for
    shortened sessions); phase durations always follow the paradigm.
    """
    events = []
    t = 0
    trial = 0
    for level in levels:
        n_trials, instr, task, rest = PARADIGM[level]
        if trials is not None:
            n_trials = int(trials.get(level, n_trials))
        for _ in range(n_trials):
            for phase, secs in (("instruction", instr), ("task", task), ("rest", rest)):
                n = int(round(secs * sample_rate))
                events.append(Event(t, n, phase, level, trial))
                t += n
            trial += 1
    return EventTimeline(tuple(events), float(sample_rate))


def single_trial_timeline(level: int, sample_rate: float = 1000.0) -> EventTimeline:
    _, instr, task, rest = PARADIGM[level]
    events = []
    t = 0
    for phase, secs in (("instruction", instr), ("task", task), ("rest", rest)):
        n = int(round(secs * sample_rate))
        events.append(Event(t, n, phase, level, 0))
        t += n
    return EventTimeline(tuple(events), float(sample_rate))


def _check_paradigm(timeline: EventTimeline) -> None:
    problems = timeline.structural_violations()
    if problems:
        raise ValidationError(problems[0])
    events = timeline.events
    if len(events) % 3:
        raise ValidationError(f"event {len(events) - len(events) % 3}: incomplete trial (expected instruction, task, rest)")
    fs = timeline.sample_rate
    trials_per_level = {lvl: 0 for lvl in PARADIGM}
    for k in range(0, len(events), 3):
        triple = events[k:k + 3]
        level = triple[0].level
        durations = PARADIGM[level][1:]
        for j, (e, phase, secs) in enumerate(zip(triple, PHASES, durations)):
            if e.phase != phase:
                raise ValidationError(f"event {k + j}: expected {phase} phase, got {e.phase}")
            if e.level != level:
                raise ValidationError(f"event {k + j}: level {e.level} inside a level-{level} trial")
            if e.duration != int(round(secs * fs)):
                raise ValidationError(
                    f"event {k + j}: {phase} lasts {e.duration} samples, expected {secs} s at {fs:g} Hz")
        trials_per_level[level] += 1
    if events:
        for level, (n_trials, *_rest) in PARADIGM.items():
            if trials_per_level[level] != n_trials:
                # name the first event of the first over/under-populated level
                first = next((i for i, e in enumerate(events) if e.level == level), len(events) - 1)
                raise ValidationError(
                    f"event {first}: level {level} has {trials_per_level[level]} trials, expected {n_trials}")


def expected_epoch_counts(timeline: EventTimeline) -> dict[str, int]:
    """Number of 1 s epochs per label that the paradigm timeline yields.

    Task seconds count toward LW (level 1) or HW (levels 2 and 3), rest
    seconds toward NS; instruction periods contribute nothing. An empty
    timeline is accepted and yields zero counts.

    Raises
    ------
    ValidationError
        If events overlap, a trial is not instruction -> task -> rest with the
        level's durations, or the per-level trial counts are not 15/10/10.
    """
    _check_paradigm(timeline)
    counts = {"NS": 0, "LW": 0, "HW": 0}
    fs = timeline.sample_rate
    for e in timeline.events:
        label = Label.for_phase(e.phase, e.level)
        if label is not None:
            counts[label.name] += int(e.duration // fs)
    counts["total"] = counts["NS"] + counts["LW"] + counts["HW"]
    return counts


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.flags.writeable:
        a = a.view()
        a.flags.writeable = False
    return a


@dataclass(frozen=True)
class RawSession:
    participant_id: str
    sample_rate: float
    eeg: np.ndarray
    eog: np.ndarray
    timeline: EventTimeline
    montage: Montage = field(default_factory=standard_montage)

    def __post_init__(self):
        object.__setattr__(self, "eeg", _readonly(self.eeg))
        object.__setattr__(self, "eog", _readonly(self.eog))

    @property
    def n_samples(self) -> int:
        return self.eeg.shape[-1]

    def replace(self, **changes: Any) -> "RawSession":
        kw = dict(participant_id=self.participant_id, sample_rate=self.sample_rate, eeg=self.eeg,
                  eog=self.eog, timeline=self.timeline, montage=self.montage)
        kw.update(changes)
        return RawSession(**kw)


@dataclass
class ValidationReport:
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def _nonfinite_violations(kind: str, names: Sequence[str], x: np.ndarray) -> list[str]:
    out = []
    bad_rows = np.flatnonzero(~np.isfinite(x).all(axis=1))
    for r in bad_rows:
        idx = np.flatnonzero(~np.isfinite(x[r]))
        name = names[r] if r < len(names) else f"#{r}"
        out.append(f"{kind} channel {name}: {idx.size} non-finite sample(s), first at index {idx[0]}")
    return out


def validate_session(s: RawSession) -> ValidationReport:
    """Check shape, timeline and finiteness invariants; collect every violation."""
    v = list(s.montage.violations())
    eeg, eog = np.asarray(s.eeg), np.asarray(s.eog)
    if eeg.ndim != 2 or eog.ndim != 2:
        v.append("eeg and eog must be 2-D [channels x samples]")
        return ValidationReport(v)
    if eeg.shape[0] != N_EEG:
        v.append(f"montage arity: eeg has {eeg.shape[0]} channels, expected {N_EEG}")
    if eog.shape[0] != N_EOG:
        v.append(f"montage arity: eog has {eog.shape[0]} channels, expected {N_EOG}")
    if eeg.shape[1] != eog.shape[1]:
        v.append(f"eeg has {eeg.shape[1]} samples but eog has {eog.shape[1]}")
    if s.timeline.sample_rate != s.sample_rate:
        v.append(f"timeline rate {s.timeline.sample_rate:g} Hz differs from session rate {s.sample_rate:g} Hz")
    v.extend(s.timeline.structural_violations())
    if s.timeline.n_samples != eeg.shape[1]:
        v.append(f"session has {eeg.shape[1]} samples but the timeline spans {s.timeline.n_samples}")
    v.extend(_nonfinite_violations("EEG", s.montage.eeg_channels, eeg))
    v.extend(_nonfinite_violations("EOG", s.montage.eog_channels, eog))
    return ValidationReport(v)


@dataclass(frozen=True)
class Epoch:
    data: np.ndarray
    label: Label
    participant_id: str
    source_trial: int


class EpochSet(Sequence):
    """Homogeneous collection of labeled epochs stored as stacked arrays."""

    def __init__(self, data, labels, trials, participant_ids, provenance=None):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 3:
            raise ValidationError(f"epoch data must be [n, channels, samples], got shape {data.shape}")
        n = data.shape[0]
        labels = np.asarray(labels, dtype=np.int64).reshape(n)
        if n and (labels.min() < 0 or labels.max() > 2):
            raise ValidationError("labels must be in {NS, LW, HW}")
        if isinstance(participant_ids, str):
            participant_ids = [participant_ids] * n
        self.data = _readonly(data)
        self.labels = _readonly(labels)
        self.trials = _readonly(np.asarray(trials, dtype=np.int64).reshape(n))
        self.participant_ids = tuple(participant_ids)
        if len(self.participant_ids) != n:
            raise ValidationError("participant_ids length differs from epoch count")
        self.provenance = dict(provenance or {})

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice) or isinstance(i, (list, np.ndarray)):
            return self.subset(np.arange(len(self))[i])
        return Epoch(self.data[i], Label(int(self.labels[i])), self.participant_ids[i], int(self.trials[i]))

    @property
    def epochs(self) -> list[Epoch]:
        return [self[i] for i in range(len(self))]

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.data.shape[1:])

    @property
    def participant_id(self) -> str:
        """The single participant these epochs come from; raises if mixed."""
        ids = set(self.participant_ids)
        if len(ids) != 1:
            raise ValidationError(f"epoch set spans {len(ids)} participants, expected exactly one")
        return ids.pop()

    def subset(self, idx) -> "EpochSet":
        idx = np.asarray(idx, dtype=np.int64)
        return EpochSet(self.data[idx], self.labels[idx], self.trials[idx],
                        [self.participant_ids[i] for i in idx], self.provenance)

    def label_counts(self) -> dict[str, int]:
        counts = np.bincount(self.labels, minlength=3)
        return {lab.name: int(counts[lab]) for lab in Label}

    @classmethod
    def concatenate(cls, sets: Sequence["EpochSet"]) -> "EpochSet":
        sets = list(sets)
        if not sets:
            raise ValidationError("nothing to concatenate")
        shapes = {s.shape for s in sets if len(s)}
        if len(shapes) > 1:
            raise ValidationError(f"inhomogeneous epoch shapes {sorted(shapes)}")
        return cls(np.concatenate([s.data for s in sets]), np.concatenate([s.labels for s in sets]),
                   np.concatenate([s.trials for s in sets]),
                   [p for s in sets for p in s.participant_ids], sets[0].provenance)
