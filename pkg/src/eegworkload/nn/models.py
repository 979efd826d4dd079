"""The convolutional-recurrent workload classifier and the CNN comparison models."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor
from .layers import LSTM, BatchNorm2d, Conv2d, ConvBNAct, Dense, Module

N_CLASSES = 3
INPUT_SHAPE = (30, 100)


@dataclass(frozen=True)
class ConvBlockSpec:
    n_layers: int
    kernel: tuple[int, int]
    maps: int
    pool: tuple[int, int] | None = None
    pool_kind: str | None = None  # "max" or "avg"


def _default_blocks():
    return (
        ConvBlockSpec(2, (1, 5), 32, (1, 2), "max"),
        ConvBlockSpec(2, (1, 5), 64, (1, 2), "max"),
        ConvBlockSpec(2, (1, 5), 128, (1, 2), "max"),
        ConvBlockSpec(3, (5, 1), 128, (2, 1), "avg"),
        ConvBlockSpec(3, (3, 1), 256, None, None),
    )


@dataclass(frozen=True)
class ProposedModelSpec:
    """Five conv blocks, two LSTM layers and a three-layer classifier.

    Blocks 1-3 are temporal (1x5 kernels) followed by 1x2 max pooling;
    blocks 4-5 are spatial (5x1, 3x1). Block 4 ends with a 2x1 average pool.
    All convolutions use same padding, batch norm and ELU.
    """

    conv_blocks: tuple = field(default_factory=_default_blocks)
    lstm_hidden: tuple[int, int] = (256, 128)
    fc: tuple[int, int, int] = (128, 64, N_CLASSES)
    input_shape: tuple[int, int] = INPUT_SHAPE

    def __post_init__(self):
        if len(self.conv_blocks) != 5:
            raise ValueError(f"the model has exactly 5 conv blocks, got {len(self.conv_blocks)}")
        if len(self.lstm_hidden) != 2:
            raise ValueError("the model has exactly 2 LSTM layers")
        if len(self.fc) != 3 or self.fc[-1] != N_CLASSES:
            raise ValueError(f"classifier must be 3 dense layers ending in {N_CLASSES} outputs")

    def scaled(self, factor: float) -> "ProposedModelSpec":
        """Same topology with feature maps, LSTM and hidden dense widths multiplied by ``factor``."""
        w = lambda n: max(1, int(round(n * factor)))  # noqa: E731
        blocks = tuple(replace(b, maps=w(b.maps)) for b in self.conv_blocks)
        return replace(self, conv_blocks=blocks, lstm_hidden=tuple(w(h) for h in self.lstm_hidden),
                       fc=(w(self.fc[0]), w(self.fc[1]), N_CLASSES))

    def feature_shape(self) -> tuple[int, int, int]:
        """(maps, channels, time) leaving block 5."""
        h, t = self.input_shape
        for b in self.conv_blocks:
            if b.pool:
                h, t = h // b.pool[0], t // b.pool[1]
        return self.conv_blocks[-1].maps, h, t

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        blocks = tuple(ConvBlockSpec(b["n_layers"], tuple(b["kernel"]), b["maps"],
                                     tuple(b["pool"]) if b["pool"] else None, b["pool_kind"])
                       for b in d["conv_blocks"])
        return cls(blocks, tuple(d["lstm_hidden"]), tuple(d["fc"]), tuple(d["input_shape"]))


def _as_input(x, shape) -> Tensor:
    a = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if a.shape[-2:] != tuple(shape):
        raise DimensionError(f"expected epochs of shape {list(shape)}, got {list(a.shape[-2:])}")
    if a.ndim == 2:
        a = a[None]
    return Tensor(a[..., None])  # channels-last: [B, electrodes, time, 1]


class Dropout(Module):
    def __init__(self, p):
        super().__init__()
        self.p = p
        self.rng = np.random.default_rng(0)

    def forward(self, x):
        return ad.dropout(x, self.p, self.rng, self.training)


class Network(Module):
    """Epoch classifier: ``forward`` maps ``[B, 30, 100]`` epochs to ``[B, 3]`` logits.

    Feature maps are channels-last, ``[B, electrodes, time, maps]``.
    """

    kind = "network"

    def set_rng(self, rng: np.random.Generator):
        for m in self.modules():
            if isinstance(m, Dropout):
                m.rng = rng


class _ConvBlock(Module):
    def __init__(self, rng, c_in, spec: ConvBlockSpec):
        super().__init__()
        self.layers = []
        for k in range(spec.n_layers):
            self.layers.append(self.add_module(f"conv{k}", ConvBNAct(rng, c_in if k == 0 else spec.maps,
                                                                     spec.maps, spec.kernel)))
        self.spec = spec

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        if self.spec.pool_kind == "max":
            x = ad.max_pool2d(x, self.spec.pool)
        elif self.spec.pool_kind == "avg":
            x = ad.avg_pool2d(x, self.spec.pool)
        return x


class ProposedNetwork(Network):
    kind = "proposed"

    def __init__(self, spec: ProposedModelSpec, rng: np.random.Generator):
        super().__init__()
        self.spec = spec
        self.blocks = []
        c_in = 1
        for k, b in enumerate(spec.conv_blocks):
            self.blocks.append(self.add_module(f"block{k + 1}", _ConvBlock(rng, c_in, b)))
            c_in = b.maps
        maps, h, t = spec.feature_shape()
        if h < 1 or t < 1:
            raise ValueError(f"pooling plan leaves no data for input {spec.input_shape}")
        self.lstm1 = LSTM(rng, maps * h, spec.lstm_hidden[0])
        self.lstm2 = LSTM(rng, spec.lstm_hidden[0], spec.lstm_hidden[1])
        self.fc1 = Dense(rng, spec.lstm_hidden[1], spec.fc[0])
        self.fc2 = Dense(rng, spec.fc[0], spec.fc[1])
        self.fc3 = Dense(rng, spec.fc[1], spec.fc[2])

    def conv_features(self, x) -> Tensor:
        x = _as_input(x, self.spec.input_shape)
        for block in self.blocks:
            x = block(x)
        return x

    def forward(self, x) -> Tensor:
        f = self.conv_features(x)
        B, H, T, M = f.shape
        # time becomes the sequence axis; each step sees all maps x electrodes
        seq = ad.reshape(ad.transpose(f, (0, 2, 3, 1)), (B, T, M * H))
        steps = [seq[:, t] for t in range(T)]
        h = self.lstm2(self.lstm1(steps))[-1]
        h = ad.elu(self.fc1(h))
        h = ad.elu(self.fc2(h))
        return self.fc3(h)


class DeepConvNet(Network):
    """Four conv-pool blocks; the first splits into temporal and 30x1 spatial convolutions."""

    kind = "deepconvnet"
    maps = (25, 50, 100, 200)

    def __init__(self, rng, input_shape=INPUT_SHAPE, kernel=10, pool=3, dropout=0.5):
        super().__init__()
        n_ch, n_t = input_shape
        self.input_shape = input_shape
        self.temporal = self.add_module("temporal", Conv2d(rng, 1, self.maps[0], (1, kernel)))
        self.blocks = [self.add_module("block1", ConvBNAct(rng, self.maps[0], self.maps[0], (n_ch, 1), padding="valid"))]
        self.drops = []
        for k in range(1, 4):
            self.drops.append(self.add_module(f"drop{k + 1}", Dropout(dropout)))
            self.blocks.append(self.add_module(f"block{k + 1}", ConvBNAct(rng, self.maps[k - 1], self.maps[k],
                                                                         (1, kernel))))
        self.pool = pool
        t = n_t
        for _ in range(4):
            t //= pool
        self.fc = Dense(rng, self.maps[-1] * t, N_CLASSES)

    @property
    def n_conv_blocks(self):
        return len(self.blocks)

    def forward(self, x):
        x = _as_input(x, self.input_shape)
        x = self.blocks[0](self.temporal(x))
        x = ad.max_pool2d(x, (1, self.pool))
        for drop, block in zip(self.drops, self.blocks[1:]):
            x = ad.max_pool2d(block(drop(x)), (1, self.pool))
        return self.fc(ad.reshape(x, (x.shape[0], -1)))


class EEGNet(Network):
    """EEGNet-8,2: temporal conv + depthwise spatial conv, then a separable conv block."""

    kind = "eegnet"

    def __init__(self, rng, input_shape=INPUT_SHAPE, f1=8, depth=2, kernel=50, dropout=0.25):
        super().__init__()
        n_ch, n_t = input_shape
        f2 = f1 * depth
        self.input_shape = input_shape
        self.temporal = Conv2d(rng, 1, f1, (1, kernel))
        self.bn1 = BatchNorm2d(f1)
        self.depthwise = Conv2d(rng, f1, f2, (n_ch, 1), groups=f1, padding="valid")
        self.bn2 = BatchNorm2d(f2)
        self.drop1 = Dropout(dropout)
        self.separable_depth = Conv2d(rng, f2, f2, (1, 16), groups=f2)
        self.separable_point = Conv2d(rng, f2, f2, (1, 1))
        self.bn3 = BatchNorm2d(f2)
        self.drop2 = Dropout(dropout)
        self.fc = Dense(rng, f2 * ((n_t // 4) // 8), N_CLASSES)

    n_blocks = 2

    def forward(self, x):
        x = _as_input(x, self.input_shape)
        # block 1: temporal filters, depthwise spatial filters
        x = self.bn1(self.temporal(x))
        x = ad.elu(self.bn2(self.depthwise(x)))
        x = self.drop1(ad.avg_pool2d(x, (1, 4)))
        # block 2: separable convolution
        x = ad.elu(self.bn3(self.separable_point(self.separable_depth(x))))
        x = self.drop2(ad.avg_pool2d(x, (1, 8)))
        return self.fc(ad.reshape(x, (x.shape[0], -1)))


class MFBCNN(Network):
    """Three parallel temporal filter banks (1x5, 1x10, 1x20), each with a 30x1 spatial conv."""

    kind = "mfb_cnn"
    kernels = (5, 10, 20)

    def __init__(self, rng, input_shape=INPUT_SHAPE, temporal_maps=8, spatial_maps=16, pool=10):
        super().__init__()
        n_ch, n_t = input_shape
        self.input_shape = input_shape
        self.branches = []
        for k in self.kernels:
            t = self.add_module(f"temporal{k}", ConvBNAct(rng, 1, temporal_maps, (1, k)))
            s = self.add_module(f"spatial{k}", ConvBNAct(rng, temporal_maps, spatial_maps, (n_ch, 1),
                                                          padding="valid"))
            self.branches.append((t, s))
        self.pool = pool
        self.fc = Dense(rng, len(self.kernels) * spatial_maps * (n_t // pool), N_CLASSES)

    def forward(self, x):
        x = _as_input(x, self.input_shape)
        feats = []
        for t, s in self.branches:
            y = ad.avg_pool2d(s(t(x)), (1, self.pool))
            feats.append(ad.reshape(y, (y.shape[0], -1)))
        return self.fc(ad.concat(feats, axis=1))


CNN_BASELINES = {"deepconvnet": DeepConvNet, "eegnet": EEGNet, "mfb_cnn": MFBCNN}
BASELINE_KINDS = ("psd_svm", "deepconvnet", "eegnet", "mfb_cnn")
