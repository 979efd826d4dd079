import json
from pathlib import Path

import numpy as np
import pytest

from eegworkload.archive import FormatError, read_epochs, read_session, write_epochs, write_session
from eegworkload.cli import main
from eegworkload.core import EpochSet


def _tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# ------------------------------------------------------------------ archives

def test_session_round_trip_is_byte_identical(short_session, tmp_path):
    write_session(short_session, tmp_path / "a")
    back = read_session(tmp_path / "a")
    write_session(back, tmp_path / "b")
    assert _tree_bytes(tmp_path / "a") == _tree_bytes(tmp_path / "b")
    assert back.eeg.dtype == np.float64
    assert np.allclose(back.eeg, short_session.eeg.astype(np.float32))
    assert back.timeline == short_session.timeline


def test_session_payload_is_time_major(short_session, tmp_path):
    write_session(short_session, tmp_path)
    raw = np.frombuffer((tmp_path / "eeg.f32le").read_bytes(), dtype="<f4")
    assert raw.size == short_session.n_samples * 30
    assert raw[:30] == pytest.approx(short_session.eeg[:, 0].astype(np.float32))


def test_epoch_round_trip(tmp_path, rng):
    es = EpochSet(rng.normal(size=(12, 30, 100)), np.arange(12) % 3, np.arange(12) // 3, "P4", {"ica": False})
    write_epochs(es, tmp_path / "a")
    back = read_epochs(tmp_path / "a")
    write_epochs(back, tmp_path / "b")
    assert _tree_bytes(tmp_path / "a") == _tree_bytes(tmp_path / "b")
    assert back.participant_id == "P4" and back.provenance == {"ica": False}
    assert np.array_equal(back.labels, es.labels)


def test_unknown_manifest_field_rejected(short_session, tmp_path):
    write_session(short_session, tmp_path)
    with open(tmp_path / "manifest.txt", "a") as fh:
        fh.write("colour: blue\n")
    with pytest.raises(FormatError, match="unknown manifest field 'colour'"):
        read_session(tmp_path)


def test_corrupt_payload_names_byte_offset(short_session, tmp_path):
    write_session(short_session, tmp_path)
    p = tmp_path / "eog.f32le"
    p.write_bytes(p.read_bytes()[:-6])
    with pytest.raises(FormatError, match="byte offset"):
        read_session(tmp_path)


def test_version_mismatch_rejected(short_session, tmp_path):
    write_session(short_session, tmp_path)
    m = tmp_path / "manifest.txt"
    m.write_text(m.read_text().replace("format_version: 1", "format_version: 9"))
    with pytest.raises(FormatError, match="format_version"):
        read_session(tmp_path)


# ------------------------------------------------------------------ CLI usage errors

def _exit_code(argv):
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code


@pytest.mark.parametrize("argv", [
    ["synth", "--participants", "0", "--seed", "1"],
    ["synth", "--participants", "2"],  # no seed
    ["topo", "--band", "gamma", "--seed", "1"],
    ["evaluate", "--models", "resnet", "--seed", "1"],
    ["topo", "--contrast", "NS", "--seed", "1"],
    ["synth", "--trials", "1,2", "--seed", "1"],
])
def test_usage_errors_exit_1(argv, tmp_path):
    assert _exit_code(argv + ["--out", str(tmp_path)]) == 1


def test_unknown_model_lists_valid_kinds(tmp_path, capsys):
    main(["evaluate", "--models", "resnet", "--seed", "1", "--out", str(tmp_path)])
    err = capsys.readouterr().err
    assert "resnet" in err and "proposed" in err and "psd_svm" in err


def test_missing_input_exits_2(tmp_path):
    assert _exit_code(["preprocess", "--in", str(tmp_path / "nowhere"), "--seed", "1",
                       "--out", str(tmp_path)]) == 2
    assert _exit_code(["evaluate", "--seed", "1", "--out", str(tmp_path)]) == 2


# ------------------------------------------------------------------ end-to-end on a tiny cohort

SMALL_TRAIN = ["--width", "0.0625", "--epochs1", "2", "--epochs2", "1", "--folds", "2", "--repeats", "1"]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--participants", "2", "--trials", "1,1,1", "--seed", "5", "--out", str(root)]) == 0
    assert main(["preprocess", "--no-ica", "--seed", "5", "--out", str(root)]) == 0
    return root


def test_synth_outputs_and_rerun(pipeline, tmp_path):
    sessions = pipeline / "sessions"
    assert sorted(p.name for p in sessions.iterdir() if p.is_dir()) == ["P1", "P2"]
    cohort = (sessions / "cohort.txt").read_text()
    assert "participants: P1,P2" in cohort and "seed: 5" in cohort
    assert main(["synth", "--participants", "2", "--trials", "1,1,1", "--seed", "5", "--out", str(tmp_path)]) == 0
    assert _tree_bytes(tmp_path / "sessions") == _tree_bytes(sessions)


def test_preprocess_log_without_ica(pipeline):
    log = json.loads((pipeline / "epochs" / "P1" / "preprocess_log.json").read_text())
    assert log["ica"] is False and log["rejected_components"] == []
    assert log["epochs_before_balancing"]["total"] == 210
    assert log["epochs_after_balancing"] == {"NS": 30, "LW": 30, "HW": 30, "total": 90}
    assert len(read_epochs(pipeline / "epochs" / "P1")) == 90


def test_evaluate_report_and_rerender(pipeline, tmp_path, capsys):
    out = tmp_path / "run"
    argv = ["evaluate", "--in", str(pipeline / "epochs"), "--models", "proposed,psd_svm", "--seed", "2",
            "--out", str(out)] + SMALL_TRAIN
    assert main(argv) == 0
    printed = capsys.readouterr().out
    text = (out / "report" / "report.txt").read_text()
    assert printed == text
    lines = text.splitlines()
    assert lines[0].split() == ["PSD-SVM", "Proposed"]
    assert [l.split()[0] for l in lines[-3:]] == ["Avg.", "Std.", "p-value"]
    assert lines[-1].split()[1:] == ["n/a", "-"]  # two participants: too few pairs for the exact test
    payload = json.loads((out / "report" / "cv_results.json").read_text())
    assert len(payload["results"]) == 2 * 2 * 2
    before = _tree_bytes(out / "report")
    assert main(["report", "--seed", "2", "--out", str(out)]) == 0
    assert _tree_bytes(out / "report") == before


def test_evaluate_deterministic_across_thread_counts(pipeline, tmp_path):
    outs = []
    for threads in ("1", "2"):
        out = tmp_path / f"t{threads}"
        assert main(["evaluate", "--in", str(pipeline / "epochs"), "--models", "proposed,psd_svm", "--seed", "9",
                     "--threads", threads, "--out", str(out)] + SMALL_TRAIN) == 0
        outs.append(_tree_bytes(out / "report"))
    assert outs[0] == outs[1]


def test_train_writes_checkpoints(pipeline, tmp_path):
    assert main(["train", "--in", str(pipeline / "epochs"), "--participant", "P2", "--model", "eegnet",
                 "--epochs1", "1", "--epochs2", "0", "--seed", "3", "--out", str(tmp_path)]) == 0
    assert [p.name for p in (tmp_path / "checkpoints").iterdir()] == ["P2_eegnet.ckpt"]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_training_fault_exits_3(pipeline, tmp_path, capsys):
    code = main(["train", "--in", str(pipeline / "epochs"), "--participant", "P1", "--model", "proposed",
                 "--width", "0.0625", "--epochs1", "2", "--epochs2", "0", "--lr1", "inf", "--seed", "3",
                 "--out", str(tmp_path)])
    assert code == 3
    assert "participant P1, model proposed" in capsys.readouterr().err


def test_topo_svg_flag(pipeline, tmp_path):
    assert main(["topo", "--in", str(pipeline / "epochs"), "--band", "alpha", "--seed", "1",
                 "--out", str(tmp_path)]) == 0
    assert sorted(p.name for p in (tmp_path / "topo").iterdir()) == ["alpha_NS-vs-HW.csv"]
    assert main(["topo", "--in", str(pipeline / "epochs"), "--band", "theta", "--svg", "--seed", "1",
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "topo" / "theta_NS-vs-HW.svg").read_text().startswith("<svg")
    rows = (tmp_path / "topo" / "theta_NS-vs-HW.csv").read_text().splitlines()
    assert len(rows) == 31
