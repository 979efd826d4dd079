import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eegworkload.core import EpochSet
from eegworkload.eval import (CompletenessError, CVPlan, DegeneratePairsError, FoldResult, FoldTrainingFault,
                              LeakageError, aggregate, build_report, cv_jobs, job_seed, kfold_split, paired_test,
                              run_cv, wilcoxon_exact)
from eegworkload.nn import TrainingFault

from published_table import COLUMNS, FOOTER, PARTICIPANTS, as_cells


# ------------------------------------------------------------------ splits

def test_kfold_sizes_and_partition():
    folds = kfold_split(1050, CVPlan(), 0)
    assert [f.size for f in folds] == [210] * 5
    allidx = np.concatenate(folds)
    assert np.array_equal(np.sort(allidx), np.arange(1050))


@settings(max_examples=40, deadline=None)
@given(st.integers(5, 400), st.integers(2, 8), st.integers(0, 3), st.integers(0, 2**31))
def test_kfold_partition_property(n, k, r, seed):
    if n < k:
        return
    folds = kfold_split(n, CVPlan(n_folds=k, seed=seed), r)
    sizes = [f.size for f in folds]
    assert max(sizes) - min(sizes) <= 1
    assert np.array_equal(np.sort(np.concatenate(folds)), np.arange(n))


def test_repeats_use_different_permutations():
    a, b = kfold_split(1050, CVPlan(), 0), kfold_split(1050, CVPlan(), 1)
    assert any(not np.array_equal(x, y) for x, y in zip(a, b))
    again = kfold_split(1050, CVPlan(), 0)
    assert all(np.array_equal(x, y) for x, y in zip(a, again))


def test_too_few_epochs():
    with pytest.raises(ValueError):
        kfold_split(4, CVPlan(), 0)


def test_grouped_split_keeps_trials_together():
    groups = np.repeat(np.arange(35), 30)
    folds = kfold_split(groups.size, CVPlan(grouped=True), 2, groups)
    owner = {}
    for k, f in enumerate(folds):
        for g in np.unique(groups[f]):
            assert owner.setdefault(g, k) == k
    assert np.array_equal(np.sort(np.concatenate(folds)), np.arange(groups.size))


def _epochs(n=30, pid="P1"):
    labels = np.arange(n) % 3
    data = np.zeros((n, 2, 4)) + labels[:, None, None]
    return EpochSet(data, labels, np.arange(n) // 3, pid)


def test_cv_jobs_are_disjoint_partitions():
    jobs = list(cv_jobs(_epochs(), CVPlan()))
    assert len(jobs) == 20
    for _, _, tr, te in jobs:
        assert np.intersect1d(tr, te).size == 0 and tr.size + te.size == 30


def test_leakage_is_detected(monkeypatch):
    import eegworkload.eval as ev
    monkeypatch.setattr(ev, "kfold_split", lambda n, plan, r, groups=None: [np.arange(n)] * plan.n_folds)
    with pytest.raises(LeakageError):
        list(ev.cv_jobs(_epochs(), CVPlan()))


class _Constant:
    def fit(self, epochs):
        return self

    def predict(self, epochs):
        return np.zeros(len(epochs), dtype=int)


class _Oracle:
    def fit(self, epochs):
        return self

    def predict(self, epochs):
        return epochs.data[:, 0, 0].astype(int)


def test_constant_and_oracle_models():
    es = _epochs(30)
    const = run_cv(es, "const", CVPlan(), factory=lambda seed: _Constant())
    assert len(const) == 20
    folds = {(r, k): idx for r, k, _, idx in cv_jobs(es, CVPlan())}
    for res in const:
        idx = folds[res.repeat, res.fold]
        assert res.accuracy == pytest.approx(np.mean(es.labels[idx] == 0))
    oracle = run_cv(es, "oracle", CVPlan(), factory=lambda seed: _Oracle())
    assert all(r.accuracy == 1.0 for r in oracle)


def test_training_fault_is_annotated():
    class Faulty:
        def fit(self, epochs):
            raise TrainingFault(7)

    with pytest.raises(FoldTrainingFault, match="participant P1, model faulty, repeat 0, fold 0") as info:
        run_cv(_epochs(), "faulty", CVPlan(), factory=lambda seed: Faulty())
    assert info.value.step == 7


def test_job_seeds_distinct():
    seeds = {job_seed(0, p, r, k) for p in ("P1", "P2") for r in range(4) for k in range(5)}
    assert len(seeds) == 40


# ------------------------------------------------------------------ aggregation

@pytest.mark.parametrize("model", sorted(COLUMNS))
def test_aggregate_reproduces_footer(model):
    mean, std = aggregate(COLUMNS[model])
    assert abs(mean - FOOTER[model][0]) <= 1e-4
    assert abs(std - FOOTER[model][1]) <= 1e-4


def test_population_std_does_not_reproduce_footer():
    assert abs(np.std(COLUMNS["proposed"]) - 0.0263) < 1e-4
    assert abs(np.std(COLUMNS["proposed"]) - FOOTER["proposed"][1]) > 1e-3


def test_aggregate_edge_cases():
    assert aggregate([0.5, 0.5, 0.5]) == (0.5, 0.0)
    with pytest.raises(ValueError):
        aggregate([0.7])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=12), st.randoms())
def test_aggregate_permutation_invariant(values, rnd):
    shuffled = values[:]
    rnd.shuffle(shuffled)
    assert np.allclose(aggregate(values), aggregate(shuffled), atol=1e-12)


# ------------------------------------------------------------------ paired tests

def _brute_force_p(a, b):
    # oracle: enumerate all 2^n sign flips of the nonzero differences
    d = np.asarray(a) - np.asarray(b)
    d = d[d != 0]
    ranks = np.argsort(np.argsort(np.abs(d))) + 1.0  # no ties in these columns
    observed = ranks[d > 0].sum()
    total = ranks.sum()
    count = 0
    n = 0
    for signs in itertools.product((0, 1), repeat=d.size):
        w = float(np.dot(signs, ranks))
        n += 1
        if min(w, total - w) <= min(observed, total - observed) + 1e-9:
            count += 1
    return count / n


@pytest.mark.parametrize("model", ["psd_svm", "deepconvnet", "eegnet", "mfb_cnn"])
def test_wilcoxon_against_enumeration(model):
    res = wilcoxon_exact(COLUMNS["proposed"], COLUMNS[model])
    assert res.p_value == pytest.approx(_brute_force_p(COLUMNS["proposed"], COLUMNS[model]), abs=1e-12)
    assert res.p_value < 0.05


def test_wilcoxon_published_values():
    mfb = wilcoxon_exact(COLUMNS["proposed"], COLUMNS["mfb_cnn"])
    assert mfb.w_minus == 1 and mfb.w_plus == 54
    assert mfb.p_value == pytest.approx(4 / 1024)
    svm = wilcoxon_exact(COLUMNS["proposed"], COLUMNS["psd_svm"])
    assert svm.p_value == pytest.approx(2 / 1024)


def test_wilcoxon_matches_scipy_exact(rng):
    import scipy.stats
    for _ in range(10):
        a, b = rng.random(9), rng.random(9)
        assert wilcoxon_exact(a, b).p_value == pytest.approx(
            scipy.stats.wilcoxon(a, b, method="exact").pvalue, rel=1e-9)


def test_paired_t_also_significant():
    for m in ("psd_svm", "deepconvnet", "eegnet", "mfb_cnn"):
        assert paired_test(COLUMNS["proposed"], COLUMNS[m], "paired_t").p_value < 0.05


def test_degenerate_and_antisymmetric():
    x = COLUMNS["eegnet"]
    with pytest.raises(DegeneratePairsError):
        paired_test(x, x)
    ab = paired_test(COLUMNS["proposed"], x)
    ba = paired_test(x, COLUMNS["proposed"])
    assert ab.statistic == -ba.statistic and ab.p_value == ba.p_value
    with pytest.raises(ValueError):
        paired_test(x[:4], x[1:5])


# ------------------------------------------------------------------ report

def test_report_layout_from_published_table():
    rep = build_report(as_cells())
    text = rep.render().splitlines()
    body = [l for l in text if l.startswith("P")]
    assert len(body) == 10
    assert [l.split()[0] for l in text[-3:]] == ["Avg.", "Std.", "p-value"]
    assert text[0].split() == ["PSD-SVM", "DeepConvNet", "EEGNet", "MFB-CNN", "Proposed"]
    avg = text[-3].split()[1:]
    assert avg == ["0.6869", "0.7610", "0.7712", "0.8016", "0.8613"]
    assert text[-2].split()[1:] == ["0.0485", "0.0329", "0.0318", "0.0354", "0.0278"]
    assert text[-1].split()[1:] == ["<0.05"] * 4 + ["-"]


def test_report_single_participant_marks_unavailable():
    rep = build_report({("P1", "proposed"): [0.9, 0.8], ("P1", "psd_svm"): [0.6, 0.7]})
    text = rep.render().splitlines()
    assert text[-2].split()[1:] == ["n/a", "n/a"]
    assert text[-1].split()[1:] == ["n/a", "-"]


def test_report_completeness_error():
    cells = as_cells()
    del cells["P4", "eegnet"]
    with pytest.raises(CompletenessError, match="P4, model eegnet"):
        build_report(cells)


def test_report_machine_readable_forms():
    rep = build_report(as_cells())
    d = rep.to_dict()
    assert d["summary"]["proposed"]["avg"] == pytest.approx(0.86127)
    csv_lines = rep.to_csv().splitlines()
    assert csv_lines[0] == "participant,PSD-SVM,DeepConvNet,EEGNet,MFB-CNN,Proposed"
    assert len(csv_lines) == 1 + 10 + 3
    assert rep.to_json() == build_report(as_cells()).to_json()


def test_report_from_fold_results_sorted_naturally():
    res = [FoldResult(p, "proposed", r, k, 0.5 + 0.01 * k, 8, 2) for p in ("P10", "P2", "P1")
           for r in range(2) for k in range(3)]
    rep = build_report(res)
    assert rep.participants == ["P1", "P2", "P10"]
    assert rep.mean("P2", "proposed") == pytest.approx(0.51)
    assert math.isclose(rep.summary("proposed")["std"], 0.0, abs_tol=1e-12)
