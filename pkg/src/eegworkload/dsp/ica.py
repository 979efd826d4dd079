"""Extended infomax ICA with PCA sphering and EOG-correlation rejection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .._accel import njit, use_compiled


class DimensionalityError(ValueError):
    pass


@dataclass(frozen=True)
class IcaModel:
    """Fitted decomposition: ``sources = unmixing @ (x - mean)``."""

    unmixing: np.ndarray
    mixing: np.ndarray
    whitener: np.ndarray
    mean: np.ndarray
    rejected_components: frozenset = frozenset()
    convergence_info: dict = field(default_factory=dict)

    @property
    def n_components(self) -> int:
        return self.unmixing.shape[0]

    def sources(self, x: np.ndarray) -> np.ndarray:
        return self.unmixing @ (np.asarray(x, dtype=np.float64) - self.mean[:, None])


@njit
def _infomax_pass_numba(x, w, perm, block, lrate, signs, extended):
    n_samples, n = x.shape
    eye_b = np.eye(n) * block
    for b in range(n_samples // block):
        u = x[perm[b * block:(b + 1) * block]] @ w
        if extended:
            w += lrate * (w @ (eye_b - (u.T @ np.tanh(u)) * signs - u.T @ u))
        else:
            y = 1.0 / (1.0 + np.exp(-u))
            w += lrate * (w @ (eye_b + u.T @ (1.0 - 2.0 * y)))
        if np.abs(w).max() > 1e8:
            return False
    return True


def _infomax_pass_numpy(x, w, perm, block, lrate, signs, extended):
    n = x.shape[1]
    eye_b = np.eye(n) * block
    for b in range(x.shape[0] // block):
        u = x[perm[b * block:(b + 1) * block]] @ w
        if extended:
            w += lrate * (w @ (eye_b - signs[None, :] * (u.T @ np.tanh(u)) - u.T @ u))
        else:
            y = 1.0 / (1.0 + np.exp(-u))
            w += lrate * (w @ (eye_b + u.T @ (1.0 - 2.0 * y)))
        if np.abs(w).max() > 1e8:
            return False
    return True


infomax_pass = _infomax_pass_numba if use_compiled(transcendental=True) else _infomax_pass_numpy


def _kurtosis(u):
    u = u - u.mean(axis=0)
    m2 = np.mean(u ** 2, axis=0)
    m4 = np.mean(u ** 4, axis=0)
    return m4 / np.maximum(m2 ** 2, 1e-300) - 3.0


def sphering(x: np.ndarray, rank_tol: float = 1e-10):
    """Mean and symmetric whitening matrix of ``x`` [channels x samples]."""
    mean = x.mean(axis=1)
    xc = x - mean[:, None]
    cov = xc @ xc.T / x.shape[1]
    evals, evecs = np.linalg.eigh(cov)
    rank = int(np.sum(evals > rank_tol * max(evals.max(), 1e-300)))
    if rank < x.shape[0]:
        raise DimensionalityError(
            f"covariance of {x.shape[0]} channels has rank {rank}; retain {rank} PCA components "
            "(or drop dependent channels) before ICA")
    whitener = (evecs / np.sqrt(evals)) @ evecs.T
    return mean, whitener


def fit_ica(eeg: np.ndarray, seed: int = 0, max_iter: int = 500, tol: float = 1e-7,
            extended: bool = True, lrate: float | None = None, block: int | None = None,
            anneal_deg: float = 60.0, anneal_step: float = 0.9, checkpoint_every: int | None = None,
            kurt_size: int = 6000) -> IcaModel:
    """Extended infomax ICA after PCA sphering (all components retained).

    The unmixing matrix starts at identity; each iteration is one pass over
    the data in blocks of ``floor(sqrt(N / 3))`` shuffled samples. Source
    nonlinearity signs (sub/super-Gaussian) are re-estimated from kurtosis at
    the start of every pass. The learning rate shrinks by ``anneal_step``
    whenever the weight update has turned by more than ``anneal_deg``
    degrees from the direction recorded at the last annealing. Iteration stops when the largest absolute weight change of a
    pass drops below ``tol`` or after ``max_iter`` passes.
    """
    x = np.asarray(eeg, dtype=np.float64)
    n, n_samples = x.shape
    if n_samples < 50 * n:
        raise DimensionalityError(f"ICA on {n} channels needs at least {50 * n} samples, got {n_samples}")
    if not np.all(np.isfinite(x)):
        raise ValueError("ICA input contains non-finite values")
    mean, whitener = sphering(x)
    data = np.ascontiguousarray((whitener @ (x - mean[:, None])).T)

    rng = np.random.default_rng(seed)
    block = block or int(math.floor(math.sqrt(n_samples / 3.0)))
    lrate = lrate if lrate is not None else 0.01 / math.log(n ** 2.0)
    w = np.eye(n)
    signs = np.ones(n)
    old_w = w.copy()
    old_delta = None
    checkpoints = []
    restarts = 0
    step = 0
    change = np.inf
    while step < max_iter:
        if extended:
            sub = data[rng.choice(n_samples, kurt_size, replace=False)] if kurt_size < n_samples else data
            k = _kurtosis(sub @ w)
            signs = np.sign(k + 0.02)
            signs[signs == 0] = 1.0
        perm = rng.permutation(n_samples)
        ok = infomax_pass(data, w, perm, block, lrate, signs, extended)
        if not ok or not np.all(np.isfinite(w)):
            # weights blew up: restart from identity with a smaller rate
            restarts += 1
            lrate *= 0.5
            w = np.eye(n)
            old_w = w.copy()
            old_delta = None
            step = 0
            if restarts > 20:
                raise RuntimeError("infomax diverged repeatedly")
            continue
        step += 1
        delta = (w - old_w).ravel()
        change = float(np.abs(delta).max())
        if old_delta is not None:
            denom = math.sqrt(float(delta @ delta) * float(old_delta @ old_delta))
            angle = math.degrees(math.acos(np.clip(delta @ old_delta / denom, -1, 1))) if denom > 0 else 0.0
            if angle > anneal_deg:
                lrate *= anneal_step
                old_delta = delta
        else:
            old_delta = delta
        old_w = w.copy()
        if checkpoint_every and step % checkpoint_every == 0:
            checkpoints.append((w.T @ whitener).copy())
        if change < tol:
            break

    unmixing = w.T @ whitener
    mixing = np.linalg.inv(unmixing)
    # order components by back-projected variance, largest first
    sources_var = np.var(unmixing @ (x - mean[:, None]), axis=1)
    order = np.argsort(-(np.sum(mixing ** 2, axis=0) * sources_var), kind="stable")
    unmixing = unmixing[order]
    mixing = np.linalg.inv(unmixing)
    info = {"iterations": step, "final_change": change, "converged": change < tol,
            "learning_rate": lrate, "restarts": restarts, "block": block,
            "checkpoints": [c[order] for c in checkpoints]}
    return IcaModel(unmixing, mixing, whitener, mean, frozenset(), info)


def eog_correlations(model: IcaModel, eeg: np.ndarray, eog: np.ndarray) -> np.ndarray:
    """|Pearson r| between each component activation and each EOG channel."""
    s = model.sources(eeg)
    e = np.asarray(eog, dtype=np.float64)
    s = s - s.mean(axis=1, keepdims=True)
    e = e - e.mean(axis=1, keepdims=True)
    num = s @ e.T
    den = np.sqrt(np.sum(s ** 2, axis=1))[:, None] * np.sqrt(np.sum(e ** 2, axis=1))[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(den > 0, num / den, 0.0)
    return np.abs(r)


def reject_eog_components(model: IcaModel, eeg: np.ndarray, eog: np.ndarray, threshold: float = 0.7,
                          components=None):
    """Zero EOG-correlated components and reconstruct the EEG.

    A component is rejected when its activation correlates with any EOG
    channel at ``|r| > threshold``; pass ``components`` to choose the set
    explicitly. Returns ``(cleaned_eeg, model)`` where the returned model
    records the rejected set.
    """
    x = np.asarray(eeg, dtype=np.float64)
    if components is None:
        r = eog_correlations(model, x, eog)
        rejected = frozenset(int(i) for i in np.flatnonzero(r.max(axis=1) > threshold))
    else:
        rejected = frozenset(int(i) for i in components)
        if any(not 0 <= i < model.n_components for i in rejected):
            raise ValueError(f"component indices must lie in [0, {model.n_components})")
    keep = np.array([i for i in range(model.n_components) if i not in rejected], dtype=int)
    s = model.sources(x)
    cleaned = model.mixing[:, keep] @ s[keep] + model.mean[:, None]
    return cleaned, replace(model, rejected_components=rejected)


def amari_distance(w: np.ndarray, a: np.ndarray) -> float:
    """Amari index of ``w @ a``; zero iff it is a scaled permutation."""
    p = np.abs(w @ a)
    n = p.shape[0]
    rows = np.sum(p / p.max(axis=1, keepdims=True), axis=1) - 1
    cols = np.sum(p / p.max(axis=0, keepdims=True), axis=0) - 1
    return float((rows.sum() + cols.sum()) / (2 * n * (n - 1)))
