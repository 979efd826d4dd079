import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eegworkload.core import (EpochSet, Event, EventTimeline, Label, RawSession, ValidationError,
                              expected_epoch_counts, paradigm_timeline, single_trial_timeline,
                              standard_montage, validate_session)


def test_montage_shape_and_membership():
    m = standard_montage()
    assert len(m.eeg_channels) == 30 and len(m.eog_channels) == 4
    assert "AFz" not in m.eeg_channels and "FCz" not in m.eeg_channels
    assert len(set(m.eeg_channels + m.eog_channels)) == 34
    assert m.region("Fz") == "frontal" and m.region("Oz") == "occipital"
    assert np.all(np.hypot(*m.position_array().T) < 1.0)
    assert m.violations() == []


def test_montage_is_constant():
    assert standard_montage() == standard_montage()


def test_paradigm_counts_match_arithmetic():
    counts = expected_epoch_counts(paradigm_timeline())
    assert counts == {"NS": 350, "LW": 900, "HW": 1200, "total": 2450}
    assert counts["total"] == 60 * 15 + 60 * 10 + 60 * 10 + 10 * 35
    assert 10 * counts["total"] == 24500


def test_paradigm_duration_identity():
    tl = paradigm_timeline()
    assert tl.n_samples == 1000 * (15 * 80 + 10 * 90 + 10 * 100) == 3_100_000


def test_empty_timeline_counts_zero():
    assert expected_epoch_counts(EventTimeline((), 1000.0)) == {"NS": 0, "LW": 0, "HW": 0, "total": 0}


def test_overlap_names_offending_event():
    ev = list(paradigm_timeline().events)
    ev[4] = Event(ev[4].onset - 5, ev[4].duration, ev[4].phase, ev[4].level, ev[4].trial)
    with pytest.raises(ValidationError, match="event 4"):
        expected_epoch_counts(EventTimeline(tuple(ev), 1000.0))


def test_wrong_trial_count_rejected():
    with pytest.raises(ValidationError, match="level 1 has 14 trials"):
        expected_epoch_counts(paradigm_timeline(trials={1: 14}))


def test_wrong_phase_duration_rejected():
    ev = list(single_trial_timeline(2).events)
    ev[1] = Event(ev[1].onset, ev[1].duration - 1000, "task", 2, 0)
    with pytest.raises(ValidationError, match="event 1: task lasts"):
        expected_epoch_counts(EventTimeline(tuple(ev), 1000.0))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 15), st.integers(0, 10), st.integers(0, 10))
def test_timeline_structure_matches_trial_sums(n1, n2, n3):
    tl = paradigm_timeline(100.0, trials={1: n1, 2: n2, 3: n3})
    assert tl.structural_violations() == []
    task = [e for e in tl if e.phase == "task"]
    rest = [e for e in tl if e.phase == "rest"]
    assert sum(e.duration for e in task) == 100 * 60 * (n1 + n2 + n3)
    assert sum(e.duration for e in rest) == 100 * 10 * (n1 + n2 + n3)
    assert tl.n_samples == 100 * (80 * n1 + 90 * n2 + 100 * n3)


def test_label_mapping():
    assert Label.for_phase("rest", 3) is Label.NS
    assert Label.for_phase("task", 1) is Label.LW
    assert Label.for_phase("task", 2) is Label.HW and Label.for_phase("task", 3) is Label.HW
    assert Label.for_phase("instruction", 1) is None


def _tiny_session(eeg=None, n_eeg=30):
    tl = single_trial_timeline(1, 100.0)
    n = tl.n_samples
    eeg = np.zeros((n_eeg, n)) if eeg is None else eeg
    return RawSession("P1", 100.0, eeg, np.zeros((4, n)), tl)


def test_validate_clean_session():
    assert validate_session(_tiny_session()).violations == []


def test_validate_reports_nan_location():
    eeg = np.zeros((30, 8000))
    eeg[3, 1234] = np.nan
    v = validate_session(_tiny_session(eeg)).violations
    assert len(v) == 1
    assert "F3" in v[0] and "1234" in v[0]


def test_validate_reports_arity_and_collects_all():
    eeg = np.zeros((29, 8000))
    eeg[0, 5] = np.inf
    v = validate_session(_tiny_session(eeg)).violations
    assert any("montage arity" in s for s in v)
    assert any("non-finite" in s for s in v)


def test_session_arrays_read_only():
    s = _tiny_session()
    with pytest.raises(ValueError):
        s.eeg[0, 0] = 1.0


def test_epochset_basics():
    data = np.arange(6 * 2 * 3, dtype=float).reshape(6, 2, 3)
    es = EpochSet(data, [0, 1, 2, 0, 1, 2], [0, 0, 1, 1, 2, 2], "P3")
    assert len(es) == 6 and es.shape == (2, 3)
    assert es.label_counts() == {"NS": 2, "LW": 2, "HW": 2}
    assert es[1].label is Label.LW and es[1].source_trial == 0
    sub = es.subset([5, 0])
    assert sub.labels.tolist() == [2, 0] and sub.participant_id == "P3"
    both = EpochSet.concatenate([es, EpochSet(data, [0] * 6, [0] * 6, "P4")])
    assert len(both) == 12
    with pytest.raises(ValidationError):
        both.participant_id
    with pytest.raises(ValidationError):
        EpochSet(data, [0, 1, 2, 3, 0, 0], [0] * 6, "P1")
