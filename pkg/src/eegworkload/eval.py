"""Repeated k-fold cross-validation, accuracy aggregation, paired tests and the results table."""

from __future__ import annotations

import csv
import io
import json
import math
import zlib
from decimal import ROUND_HALF_UP, Decimal
from dataclasses import asdict, dataclass, field
from typing import Protocol

import numpy as np
import scipy.stats

from .core import EpochSet
from .nn import (MODEL_KINDS, ProposedModelSpec, PsdSvm, TrainHyper, TrainingFault, build_network,
                 predict, train)

DISPLAY_NAMES = {
    "psd_svm": "PSD-SVM",
    "deepconvnet": "DeepConvNet",
    "eegnet": "EEGNet",
    "mfb_cnn": "MFB-CNN",
    "proposed": "Proposed",
}
# column order of the published comparison table
TABLE_ORDER = ("psd_svm", "deepconvnet", "eegnet", "mfb_cnn", "proposed")


class LeakageError(AssertionError):
    pass


class CompletenessError(ValueError):
    pass


class DegeneratePairsError(ValueError):
    pass


class FoldTrainingFault(RuntimeError):
    def __init__(self, participant, model, repeat, fold, cause: TrainingFault):
        self.participant, self.model, self.repeat, self.fold = participant, model, repeat, fold
        self.step = cause.step
        super().__init__(f"training fault for participant {participant}, model {model}, repeat {repeat}, "
                         f"fold {fold}: {cause}")


@dataclass(frozen=True)
class CVPlan:
    """``n_repeats`` reshuffles of a ``n_folds``-way split of one participant's epochs."""

    n_folds: int = 5
    n_repeats: int = 4
    seed: int = 0
    grouped: bool = False  # keep all epochs of a trial in one fold

    def __post_init__(self):
        if self.n_folds < 2 or self.n_repeats < 1:
            raise ValueError("need n_folds >= 2 and n_repeats >= 1")


def _stream(*keys) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def job_seed(plan_seed: int, participant: str, repeat: int, fold: int) -> int:
    """Seed of one training job, derived from the plan seed and the job coordinates."""
    ss = np.random.SeedSequence([plan_seed, zlib.crc32(participant.encode()), repeat, fold])
    return int(ss.generate_state(1)[0])


def kfold_split(n_epochs: int, plan: CVPlan, repeat_index: int, groups=None) -> list[np.ndarray]:
    """Partition ``range(n_epochs)`` into ``plan.n_folds`` sorted index folds.

    The shuffle depends only on ``(plan.seed, repeat_index)``. Fold sizes
    differ by at most one. With ``groups`` (one trial id per epoch) whole
    groups are dealt to the currently smallest fold instead.
    """
    if n_epochs < plan.n_folds:
        raise ValueError(f"need at least {plan.n_folds} epochs for {plan.n_folds}-fold CV, got {n_epochs}")
    rng = _stream(plan.seed, repeat_index)
    if groups is None:
        perm = rng.permutation(n_epochs)
        return [np.sort(f) for f in np.array_split(perm, plan.n_folds)]
    groups = np.asarray(groups)
    uniq = np.unique(groups)
    if len(uniq) < plan.n_folds:
        raise ValueError(f"need at least {plan.n_folds} groups for grouped CV, got {len(uniq)}")
    folds = [[] for _ in range(plan.n_folds)]
    sizes = np.zeros(plan.n_folds, dtype=int)
    for gid in uniq[rng.permutation(len(uniq))]:
        members = np.flatnonzero(groups == gid)
        k = int(np.argmin(sizes))
        folds[k].append(members)
        sizes[k] += len(members)
    return [np.sort(np.concatenate(f)) if f else np.zeros(0, dtype=int) for f in folds]


class Classifier(Protocol):
    def fit(self, epochs: EpochSet): ...

    def predict(self, epochs: EpochSet) -> np.ndarray: ...


@dataclass
class NetworkClassifier:
    """Adapter giving a CNN the fit/predict interface used by the harness."""

    kind: str
    seed: int
    hyper: TrainHyper = field(default_factory=TrainHyper)
    spec: ProposedModelSpec | None = None
    model: object = None

    def fit(self, epochs: EpochSet):
        self.model = train(build_network(self.kind, self.seed, self.spec), epochs, hyper=self.hyper)
        return self

    def predict(self, epochs: EpochSet) -> np.ndarray:
        return predict(self.model, epochs)[0]


def make_classifier(kind: str, seed: int, hyper: TrainHyper | None = None,
                    spec: ProposedModelSpec | None = None) -> Classifier:
    if kind == "psd_svm":
        return PsdSvm(seed=seed)
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; valid kinds: {', '.join(MODEL_KINDS)}")
    return NetworkClassifier(kind, seed, hyper or TrainHyper(), spec if kind == "proposed" else None)


@dataclass(frozen=True)
class FoldResult:
    participant: str
    model: str
    repeat: int
    fold: int
    accuracy: float
    n_train: int
    n_test: int


def cv_jobs(epochs: EpochSet, plan: CVPlan):
    """Yield ``(repeat, fold, train_idx, test_idx)`` after checking for leakage."""
    groups = epochs.trials if plan.grouped else None
    for r in range(plan.n_repeats):
        folds = kfold_split(len(epochs), plan, r, groups)
        for k, test_idx in enumerate(folds):
            train_idx = np.sort(np.concatenate([f for j, f in enumerate(folds) if j != k]))
            if np.intersect1d(train_idx, test_idx).size:
                raise LeakageError(f"repeat {r} fold {k}: training and validation indices overlap")
            if train_idx.size + test_idx.size != len(epochs):
                raise LeakageError(f"repeat {r} fold {k}: folds do not partition the epoch set")
            yield r, k, train_idx, test_idx


def run_fold(epochs: EpochSet, kind, plan: CVPlan, repeat: int, fold: int, train_idx, test_idx,
             factory=None) -> FoldResult:
    pid = epochs.participant_id
    seed = job_seed(plan.seed, pid, repeat, fold)
    clf = factory(seed) if factory else make_classifier(kind, seed)
    try:
        clf.fit(epochs.subset(train_idx))
    except TrainingFault as exc:
        raise FoldTrainingFault(pid, kind, repeat, fold, exc) from exc
    test = epochs.subset(test_idx)
    pred = np.asarray(clf.predict(test))
    acc = float(np.mean(pred == test.labels))
    return FoldResult(pid, kind, repeat, fold, acc, int(train_idx.size), int(test_idx.size))


def run_cv(epochs: EpochSet, kind: str, plan: CVPlan, factory=None) -> list[FoldResult]:
    """Train and score one model on every (repeat, fold) of one participant.

    ``factory(seed)`` overrides how the classifier is built (it must return
    an object with ``fit`` and ``predict``); by default
    :func:`make_classifier` is used with the model kind.
    """
    return [run_fold(epochs, kind, plan, r, k, tr, te, factory) for r, k, tr, te in cv_jobs(epochs, plan)]


def aggregate(values) -> tuple[float, float]:
    """Arithmetic mean and sample standard deviation (``n - 1`` denominator)."""
    v = np.asarray(list(values), dtype=np.float64)
    if v.size < 2:
        raise ValueError(f"standard deviation needs at least 2 values, got {v.size}")
    return float(np.mean(v)), float(np.std(v, ddof=1))


# ---------------------------------------------------------------- paired tests

@dataclass(frozen=True)
class PairedTestResult:
    method: str
    statistic: float
    p_value: float
    n: int
    w_plus: float | None = None
    w_minus: float | None = None


def _signed_rank_null(doubled_ranks: np.ndarray) -> np.ndarray:
    """Exact null distribution of the (doubled) positive-rank sum: counts indexed by sum."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in doubled_ranks.astype(int):
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    return counts


def wilcoxon_exact(a, b) -> PairedTestResult:
    """Two-sided exact Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped; tied magnitudes get average ranks and the
    exact null distribution is built for those ranks by dynamic programming
    over all ``2**n`` sign assignments.
    """
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1-D and of equal length")
    if a.size < 5:
        raise ValueError(f"paired test needs at least 5 pairs, got {a.size}")
    d = a - b
    # differences within a few ulps of zero count as ties with zero
    scale = np.maximum(np.abs(a), np.abs(b))
    d[np.abs(d) <= 8 * np.finfo(float).eps * scale] = 0.0
    d = d[d != 0]
    if d.size == 0:
        raise DegeneratePairsError("all paired differences are zero; the test is undefined")
    ranks = scipy.stats.rankdata(np.abs(d))
    doubled = np.rint(2 * ranks).astype(int)
    w_plus2 = int(doubled[d > 0].sum())
    counts = _signed_rank_null(doubled)
    total = counts.sum()
    lower = counts[:w_plus2 + 1].sum() / total
    upper = counts[w_plus2:].sum() / total
    p = min(1.0, 2 * float(min(lower, upper)))
    w_plus, w_minus = w_plus2 / 2, float(ranks.sum()) - w_plus2 / 2
    return PairedTestResult("wilcoxon", w_plus - w_minus, p, int(d.size), w_plus, w_minus)


def paired_t(a, b) -> PairedTestResult:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.size < 5:
        raise ValueError(f"paired test needs at least 5 pairs, got {a.size}")
    if np.all(a == b):
        raise DegeneratePairsError("all paired differences are zero; the test is undefined")
    t, p = scipy.stats.ttest_rel(a, b)
    return PairedTestResult("paired_t", float(t), float(p), int(a.size))


def paired_test(a, b, method: str = "wilcoxon") -> PairedTestResult:
    """Per-participant paired comparison; ``method`` is ``wilcoxon`` (default) or ``paired_t``."""
    if method == "wilcoxon":
        return wilcoxon_exact(a, b)
    if method == "paired_t":
        return paired_t(a, b)
    raise ValueError(f"unknown paired test {method!r}")


# ---------------------------------------------------------------- report

@dataclass
class CVReport:
    participants: list
    models: list
    fold_accuracies: dict  # (participant, model) -> list of accuracies
    reference: str = "proposed"
    test: str = "wilcoxon"

    def mean(self, participant, model) -> float:
        return float(np.mean(self.fold_accuracies[participant, model]))

    def column(self, model) -> list:
        return [self.mean(p, model) for p in self.participants]

    def summary(self, model) -> dict:
        col = self.column(model)
        out = {"avg": float(np.mean(col)), "std": None, "p_value": None}
        if len(col) >= 2:
            out["std"] = aggregate(col)[1]
        if model != self.reference and self.reference in self.models:
            try:
                out["p_value"] = paired_test(self.column(self.reference), col, self.test).p_value
            except ValueError:
                out["p_value"] = None
        return out

    def to_dict(self) -> dict:
        return {
            "participants": list(self.participants),
            "models": list(self.models),
            "reference": self.reference,
            "test": self.test,
            "cells": [{"participant": p, "model": m, "fold_accuracies": list(self.fold_accuracies[p, m]),
                       "mean": self.mean(p, m)} for p in self.participants for m in self.models],
            "summary": {m: self.summary(m) for m in self.models},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["participant"] + [DISPLAY_NAMES.get(m, m) for m in self.models])
        for p in self.participants:
            w.writerow([p] + [f"{self.mean(p, m):.6f}" for m in self.models])
        sums = [self.summary(m) for m in self.models]
        for key, label in (("avg", "Avg."), ("std", "Std."), ("p_value", "p-value")):
            w.writerow([label] + ["" if s[key] is None else f"{s[key]:.6g}" for s in sums])
        return buf.getvalue()

    def render(self) -> str:
        """Fixed-width table: one row per participant, Avg./Std./p-value footer."""
        names = [DISPLAY_NAMES.get(m, m) for m in self.models]
        widths = [max(11, len(n) + 2) for n in names]
        head = f"{'':<12}" + "".join(f"{n:>{w}}" for n, w in zip(names, widths))
        rule = "-" * len(head)
        lines = [head, rule]
        for p in self.participants:
            lines.append(f"{p:<12}" + "".join(f"{_four(self.mean(p, m)):>{w}}" for m, w in zip(self.models, widths)))
        lines.append(rule)
        sums = [self.summary(m) for m in self.models]

        def cell(s, key, w, model):
            if key == "p_value" and model == self.reference:
                return f"{'-':>{w}}"
            if s[key] is None:
                return f"{'n/a':>{w}}"
            if key == "p_value" and s[key] < 0.05:
                return f"{'<0.05':>{w}}" if s[key] >= 0.001 else f"{'<0.001':>{w}}"
            return f"{_four(s[key]):>{w}}"
        for key, label in (("avg", "Avg."), ("std", "Std."), ("p_value", "p-value")):
            lines.append(f"{label:<12}" + "".join(cell(s, key, w, m) for s, w, m in zip(sums, widths, self.models)))
        return "\n".join(lines) + "\n"


def build_report(results, models=None, participants=None, reference="proposed", test="wilcoxon") -> CVReport:
    """Collect fold results (iterable of :class:`FoldResult` or a ``{(participant, model): accs}`` map).

    Every (participant, model) cell must be present.
    """
    if isinstance(results, dict):
        cells = {k: list(v) for k, v in results.items()}
    else:
        cells = {}
        for r in sorted(results, key=lambda r: (r.participant, r.model, r.repeat, r.fold)):
            cells.setdefault((r.participant, r.model), []).append(r.accuracy)
    participants = list(participants) if participants else sorted({p for p, _ in cells}, key=_natural)
    models = list(models) if models else [m for m in TABLE_ORDER if any(mm == m for _, mm in cells)] + sorted(
        {m for _, m in cells} - set(TABLE_ORDER))
    for p in participants:
        for m in models:
            if (p, m) not in cells or not cells[p, m]:
                raise CompletenessError(f"missing cross-validation results for participant {p}, model {m}")
    for v in cells.values():
        if any(not (0.0 <= a <= 1.0) or math.isnan(a) for a in v):
            raise ValueError("accuracies must lie in [0, 1]")
    return CVReport(participants, models, cells, reference, test)


def _four(x: float) -> str:
    # half-up on the shortest decimal repr, so 0.68685 prints as 0.6869
    return str(Decimal(repr(float(x))).quantize(Decimal("0.0001"), rounding=ROUND_HALF_UP))


def _natural(s: str):
    digits = "".join(ch for ch in s if ch.isdigit())
    return (s.rstrip("0123456789"), int(digits) if digits else -1, s)


def fold_results_from_dict(d) -> list[FoldResult]:
    return [FoldResult(**x) for x in d]


def fold_results_to_dicts(results) -> list[dict]:
    return [asdict(r) for r in results]
