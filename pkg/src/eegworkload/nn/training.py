"""Two-step training, prediction and checkpoint persistence for the CNN models."""

from __future__ import annotations

import hashlib
import io
import json
import zipfile
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor, no_grad
from .models import CNN_BASELINES, Network, ProposedModelSpec, ProposedNetwork


class TrainingFault(RuntimeError):
    """Non-finite loss; ``step`` is the zero-based global minibatch index."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite training loss at minibatch step {step}")


@dataclass(frozen=True)
class TrainHyper:
    """Step 1 trains from scratch at ``lr1``; Step 2 continues at the smaller ``lr2``."""

    epochs1: int = 50
    lr1: float = 1e-3
    epochs2: int = 10
    lr2: float = 1e-4
    batch_size: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    probe_size: int = 8

    def __post_init__(self):
        if self.epochs1 < 0 or self.epochs2 < 0 or self.batch_size < 1:
            raise ValueError("epoch counts must be >= 0 and batch size >= 1")
        if self.lr1 < 0 or self.lr2 < 0:
            raise ValueError("learning rates must be non-negative")
        if self.epochs2 and self.lr2 >= self.lr1 > 0:
            raise ValueError(f"fine-tuning rate lr2={self.lr2} must be below lr1={self.lr1}")


@dataclass
class TrainedModel:
    kind: str
    network: Network
    seed: int
    spec: ProposedModelSpec | None = None
    training_log: list = field(default_factory=list)
    feature_maps: np.ndarray | None = None

    def named_parameters(self):
        return list(self.network.named_parameters())


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def step(self):
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            m *= self.beta1
            m += (1 - self.beta1) * p.grad
            v *= self.beta2
            v += (1 - self.beta2) * p.grad ** 2
            if self.lr:
                p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.grad = None


def build_network(kind: str, seed: int, spec: ProposedModelSpec | None = None) -> TrainedModel:
    """Untrained model of ``kind`` with parameters drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    if kind == "proposed":
        spec = spec or ProposedModelSpec()
        return TrainedModel("proposed", ProposedNetwork(spec, rng), seed, spec)
    if kind not in CNN_BASELINES:
        raise ValueError(f"unknown network kind {kind!r}; choose from proposed, {', '.join(CNN_BASELINES)}")
    return TrainedModel(kind, CNN_BASELINES[kind](rng), seed)


def build_proposed(spec: ProposedModelSpec | None = None, seed: int = 0) -> TrainedModel:
    return build_network("proposed", seed, spec)


def canonical_order(data: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Sort key independent of the caller's ordering: a digest of each sample's content."""
    keys = [hashlib.blake2b(np.ascontiguousarray(d).tobytes() + int(l).to_bytes(2, "little"),
                            digest_size=16).digest() for d, l in zip(data, labels)]
    return np.array(sorted(range(len(keys)), key=keys.__getitem__), dtype=np.int64)


def _loss_and_acc(net, data, labels, batch_size):
    losses, correct = 0.0, 0
    with no_grad():
        for s in range(0, len(data), batch_size):
            logits = net(data[s:s + batch_size])
            losses += float(ad.softmax_cross_entropy(logits, labels[s:s + batch_size]).data) * len(logits.data)
            correct += int(np.sum(np.argmax(logits.data, axis=1) == labels[s:s + batch_size]))
    return losses / len(data), correct / len(data)


def train(model: TrainedModel, data, labels=None, hyper: TrainHyper | None = None,
          progress=None) -> TrainedModel:
    """Fit ``model`` in place with softmax cross-entropy and Adam; returns it.

    ``data`` is an :class:`~eegworkload.core.EpochSet` or an array of epochs
    with ``labels``. Samples are put into a content-derived canonical order
    and reshuffled every epoch from the model seed, so the caller's ordering
    has no effect. At the end of Step 1 the block-5 feature maps of a probe
    batch are stored on the model.
    """
    hyper = hyper or TrainHyper()
    if labels is None:
        data, labels = data.data, data.labels
    data = np.asarray(data, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if data.ndim != 3 or len(data) != len(labels):
        raise DimensionError(f"expected [N, channels, time] epochs with N labels, got {list(data.shape)} and "
                             f"{len(labels)} labels")
    if len(data) == 0:
        raise ValueError("cannot train on an empty epoch set")
    if labels.min() < 0 or labels.max() > 2:
        raise ValueError("labels must be encoded 0 (NS), 1 (LW), 2 (HW)")
    order = canonical_order(data, labels)
    data, labels = data[order], labels[order]
    net = model.network
    rng = np.random.default_rng([model.seed, 1])
    net.set_rng(np.random.default_rng([model.seed, 2]))
    params = net.parameters()
    step = 0
    for phase, (n_epochs, lr) in enumerate(((hyper.epochs1, hyper.lr1), (hyper.epochs2, hyper.lr2)), start=1):
        opt = Adam(params, lr, hyper.beta1, hyper.beta2, hyper.eps)
        for epoch in range(n_epochs):
            net.train()
            perm = rng.permutation(len(data))
            total, seen = 0.0, 0
            for s in range(0, len(data), hyper.batch_size):
                idx = perm[s:s + hyper.batch_size]
                loss = ad.softmax_cross_entropy(net(data[idx]), labels[idx])
                value = float(loss.data)
                if not np.isfinite(value):
                    raise TrainingFault(step)
                loss.backward()
                opt.step()
                total += value * len(idx)
                seen += len(idx)
                step += 1
            net.eval()
            entry = {"step": phase, "epoch": epoch + 1, "lr": lr, "batch_loss": total / seen}
            if epoch == n_epochs - 1:
                entry["train_loss"], entry["train_accuracy"] = _loss_and_acc(net, data, labels, 256)
            model.training_log.append(entry)
            if progress:
                progress(entry)
        if phase == 1 and isinstance(net, ProposedNetwork):
            net.eval()
            with no_grad():
                model.feature_maps = net.conv_features(data[:hyper.probe_size]).data.copy()  # [B, 15, 12, maps]
    net.eval()
    return model


def predict(model: TrainedModel, data, batch_size: int = 256):
    """``(labels, probabilities)``; argmax with exact ties going to the lowest class index."""
    data = data.data if hasattr(data, "labels") else np.asarray(data, dtype=np.float64)
    single = data.ndim == 2
    if single:
        data = data[None]
    net = model.network
    net.eval()
    probs = []
    with no_grad():
        for s in range(0, len(data), batch_size):
            probs.append(ad.softmax(net(data[s:s + batch_size]).data))
    p = np.concatenate(probs) if probs else np.zeros((0, 3))
    labels = np.argmax(p, axis=1)
    return (labels[0], p[0]) if single else (labels, p)


# ---------------------------------------------------------------- checkpoints

CHECKPOINT_VERSION = 1
_FIXED_TIME = (1980, 1, 1, 0, 0, 0)


def _zip_write(zf, name, payload: bytes):
    info = zipfile.ZipInfo(name, date_time=_FIXED_TIME)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, payload)


def checkpoint_bytes(model: TrainedModel) -> bytes:
    """Self-describing zip: ``manifest.json`` plus one ``<f8`` blob per tensor."""
    tensors = [("param/" + k, p.data) for k, p in model.network.named_parameters()]
    tensors += [("buffer/" + k, b) for k, b in model.network.named_buffers()]
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "seed": model.seed,
        "spec": model.spec.to_dict() if model.spec else None,
        "training_log": model.training_log,
        "tensors": [{"name": n, "shape": list(a.shape), "dtype": "<f8"} for n, a in tensors],
    }
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        _zip_write(zf, "manifest.json", json.dumps(manifest, indent=2, sort_keys=True).encode())
        for name, a in tensors:
            _zip_write(zf, f"tensors/{name}.f64le", np.ascontiguousarray(a, dtype="<f8").tobytes())
    return buf.getvalue()


def load_checkpoint(payload: bytes) -> TrainedModel:
    with zipfile.ZipFile(io.BytesIO(payload)) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {manifest.get('format_version')}")
        spec = ProposedModelSpec.from_dict(manifest["spec"]) if manifest["spec"] else None
        model = build_network(manifest["kind"], manifest["seed"], spec)
        params = dict(model.network.named_parameters())
        buffers = dict(model.network.named_buffers())
        for entry in manifest["tensors"]:
            kind, name = entry["name"].split("/", 1)
            arr = np.frombuffer(zf.read(f"tensors/{entry['name']}.f64le"), dtype="<f8").reshape(entry["shape"])
            target = params[name].data if kind == "param" else buffers[name]
            if target.shape != arr.shape:
                raise ValueError(f"checkpoint tensor {entry['name']} has shape {arr.shape}, model expects {target.shape}")
            target[...] = arr
        model.training_log = manifest["training_log"]
    model.network.eval()
    return model
