"""Autodiff core, the convolutional-recurrent classifier and comparison models."""

from .autodiff import DimensionError, ModeError, Tensor, no_grad, softmax
from .models import (BASELINE_KINDS, CNN_BASELINES, ConvBlockSpec, DeepConvNet, EEGNet, MFBCNN,
                     ProposedModelSpec, ProposedNetwork)
from .svm import PsdSvm
from .training import (TrainedModel, TrainHyper, TrainingFault, build_network, build_proposed,
                       checkpoint_bytes, load_checkpoint, predict, train)

MODEL_KINDS = ("proposed",) + BASELINE_KINDS


def build_baseline(kind: str, seed: int = 0):
    """Fixed comparison architecture: a :class:`PsdSvm` or an untrained CNN :class:`TrainedModel`."""
    if kind == "psd_svm":
        return PsdSvm(seed=seed)
    if kind not in CNN_BASELINES:
        raise ValueError(f"unknown baseline {kind!r}; choose from {', '.join(BASELINE_KINDS)}")
    return build_network(kind, seed)


__all__ = [
    "BASELINE_KINDS", "MODEL_KINDS", "ConvBlockSpec", "DeepConvNet", "DimensionError", "EEGNet", "MFBCNN",
    "ModeError", "ProposedModelSpec", "ProposedNetwork", "PsdSvm", "Tensor", "TrainHyper", "TrainedModel",
    "TrainingFault", "build_baseline", "build_network", "build_proposed", "checkpoint_bytes",
    "load_checkpoint", "no_grad", "predict", "softmax", "train",
]
