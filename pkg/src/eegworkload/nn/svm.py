"""Band-power features with a linear one-vs-rest SVM trained by stochastic subgradient descent."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..features import band_power_features


@dataclass
class PsdSvm:
    """Pegasos-style linear SVM on standardised log band powers (120 inputs for 30 channels).

    Each one-vs-rest problem minimises ``lam/2 |w|^2 + mean(hinge)``; the
    step size is ``1 / (lam * t)`` and the returned weights are the average
    of the iterates over the second half of training.
    """

    seed: int = 0
    lam: float = 1e-3
    epochs: int = 30
    n_classes: int = 3
    weights: np.ndarray | None = None
    bias: np.ndarray | None = None
    mean_: np.ndarray | None = None
    scale_: np.ndarray | None = None
    objective_log: list = field(default_factory=list)
    kind = "psd_svm"

    @property
    def input_dim(self) -> int:
        return 120 if self.weights is None else self.weights.shape[1]

    def features(self, data) -> np.ndarray:
        return band_power_features(data)

    def objective(self, x, y) -> np.ndarray:
        """Per-class primal objective on standardised features ``x``."""
        out = []
        for k in range(self.n_classes):
            t = np.where(y == k, 1.0, -1.0)
            margin = t * (x @ self.weights[k] + self.bias[k])
            reg = self.weights[k] @ self.weights[k] + self.bias[k] ** 2
            out.append(0.5 * self.lam * reg + np.maximum(0, 1 - margin).mean())
        return np.array(out)

    def fit(self, data, labels=None):
        if labels is None:
            data, labels = data.data, data.labels
        x = self.features(data)
        y = np.asarray(labels, dtype=np.int64)
        self.mean_ = x.mean(axis=0)
        sd = x.std(axis=0)
        self.scale_ = np.where(sd > 0, sd, 1.0)
        x = (x - self.mean_) / self.scale_
        # constant column: the bias is learned (and regularised) as an ordinary weight
        x = np.hstack([x, np.ones((x.shape[0], 1))])
        n, d = x.shape
        rng = np.random.default_rng([self.seed, 3])
        w = np.zeros((self.n_classes, d))
        w_avg, n_avg = np.zeros_like(w), 0
        targets = np.where(y[None, :] == np.arange(self.n_classes)[:, None], 1.0, -1.0)
        self.objective_log = []
        t = 0
        for epoch in range(self.epochs):
            for i in rng.permutation(n):
                t += 1
                eta = 1.0 / (self.lam * t)
                active = targets[:, i] * (w @ x[i]) < 1
                w *= 1 - eta * self.lam
                w[active] += eta * targets[active, i, None] * x[i]
                if epoch >= self.epochs // 2:
                    n_avg += 1
                    w_avg += (w - w_avg) / n_avg
            final = w_avg if n_avg else w
            self.weights, self.bias = final[:, :-1].copy(), final[:, -1].copy()
            self.objective_log.append(float(self.objective(x[:, :-1], y).sum()))
        return self

    def decision_function(self, data) -> np.ndarray:
        x = (self.features(data) - self.mean_) / self.scale_
        return x @ self.weights.T + self.bias

    def predict(self, data) -> np.ndarray:
        data = data.data if hasattr(data, "labels") else data
        return np.argmax(self.decision_function(data), axis=1)
