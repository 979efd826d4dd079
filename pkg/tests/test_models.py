import numpy as np
import pytest

from eegworkload.core import EpochSet
from eegworkload.nn import (BASELINE_KINDS, DeepConvNet, EEGNet, MFBCNN, ProposedModelSpec, PsdSvm, TrainHyper,
                            TrainingFault, build_baseline, build_network, build_proposed, checkpoint_bytes,
                            load_checkpoint, predict, train)
from eegworkload.nn.autodiff import DimensionError
from eegworkload.nn.models import ConvBlockSpec

SMALL = ProposedModelSpec().scaled(1 / 16)


def closed_form_parameter_count(spec: ProposedModelSpec) -> int:
    """Independent count from layer shapes: bias-free convs + BN affine, 1-bias LSTMs, biased dense layers."""
    total, c_in = 0, 1
    for b in spec.conv_blocks:
        kh, kw = b.kernel
        for k in range(b.n_layers):
            total += kh * kw * (c_in if k == 0 else b.maps) * b.maps + 2 * b.maps
        c_in = b.maps
    h, t = spec.input_shape
    for b in spec.conv_blocks:
        if b.pool:
            h, t = h // b.pool[0], t // b.pool[1]
    n_in = c_in * h
    for hidden in spec.lstm_hidden:
        total += 4 * hidden * (n_in + hidden) + 4 * hidden
        n_in = hidden
    for n_out in spec.fc:
        total += n_in * n_out + n_out
        n_in = n_out
    return total


def test_full_size_parameter_count():
    spec = ProposedModelSpec()
    assert spec.feature_shape() == (256, 15, 12)
    model = build_proposed(spec, seed=0)
    assert model.network.n_parameters() == closed_form_parameter_count(spec) == 5_316_771


def test_scaled_parameter_count():
    assert build_proposed(SMALL, 0).network.n_parameters() == closed_form_parameter_count(SMALL)


def test_spec_structure_invariants():
    with pytest.raises(ValueError):
        ProposedModelSpec(conv_blocks=ProposedModelSpec().conv_blocks[:4])
    with pytest.raises(ValueError):
        ProposedModelSpec(fc=(128, 64, 4))
    spec = ProposedModelSpec()
    assert ProposedModelSpec.from_dict(spec.to_dict()) == spec
    assert [b.kernel for b in spec.conv_blocks] == [(1, 5)] * 3 + [(5, 1), (3, 1)]
    assert [b.maps for b in spec.conv_blocks] == [32, 64, 128, 128, 256]


def test_forward_shapes_and_probabilities(rng):
    model = build_proposed(SMALL, seed=1)
    labels, probs = predict(model, rng.normal(size=(30, 100)))
    assert probs.shape == (3,) and abs(probs.sum() - 1) < 1e-6 and labels in (0, 1, 2)
    labels, probs = predict(model, rng.normal(size=(5, 30, 100)))
    assert probs.shape == (5, 3) and labels.shape == (5,)
    assert np.allclose(probs.sum(axis=1), 1, atol=1e-6)
    with pytest.raises(DimensionError):
        predict(model, rng.normal(size=(2, 29, 100)))


def _zero_head(model):
    for name, p in model.network.named_parameters():
        if name.startswith("fc3."):
            p.data[...] = 0.0


def test_argmax_tie_goes_to_ns(rng):
    model = build_proposed(SMALL, seed=2)
    _zero_head(model)
    labels, probs = predict(model, rng.normal(size=(3, 30, 100)))
    assert np.allclose(probs, 1 / 3) and labels.tolist() == [0, 0, 0]


def test_argmax_picks_largest():
    model = build_proposed(SMALL, seed=2)
    _zero_head(model)
    params = dict(model.network.named_parameters())
    bias = next(v for k, v in params.items() if k.startswith("fc3.") and v.data.ndim == 1)
    bias.data[:] = np.log([0.2, 0.5, 0.3])
    label, probs = predict(model, np.zeros((30, 100)))
    assert label == 1 and np.allclose(probs, [0.2, 0.5, 0.3])


def test_baseline_structures(rng):
    assert DeepConvNet(rng).n_conv_blocks == 4
    assert EEGNet.n_blocks == 2
    assert PsdSvm().input_dim == 120
    assert BASELINE_KINDS == ("psd_svm", "deepconvnet", "eegnet", "mfb_cnn")
    assert isinstance(build_baseline("psd_svm", 0), PsdSvm)
    for kind in ("deepconvnet", "eegnet", "mfb_cnn"):
        m = build_baseline(kind, 0)
        _, p = predict(m, rng.normal(size=(2, 30, 100)))
        assert p.shape == (2, 3)
    assert len(MFBCNN(rng).branches) == 3
    with pytest.raises(ValueError):
        build_baseline("shallowconvnet", 0)


# ------------------------------------------------------------------ training

def toy_epochs(n=200, seed=0):
    """Linearly separable by construction: each class adds its own fixed spatial-temporal template."""
    rng = np.random.default_rng(seed)
    templates = rng.normal(size=(3, 30, 100))
    labels = np.arange(n) % 3
    data = 0.5 * rng.normal(size=(n, 30, 100)) + 2.0 * templates[labels]
    return EpochSet(data, labels, np.arange(n), "P1")


@pytest.fixture(scope="module")
def trained_toy():
    return train(build_proposed(SMALL, seed=3), toy_epochs(), hyper=TrainHyper())


def test_toy_training_reaches_high_accuracy(trained_toy):
    es = toy_epochs()
    acc = np.mean(predict(trained_toy, es)[0] == es.labels)
    assert acc >= 0.95
    ends = [e for e in trained_toy.training_log if "train_loss" in e]
    assert [e["step"] for e in ends] == [1, 2]
    assert ends[1]["train_loss"] <= ends[0]["train_loss"]
    assert len(trained_toy.training_log) == 60
    assert trained_toy.feature_maps.shape == (8, 15, 12, SMALL.conv_blocks[-1].maps)


def test_zero_learning_rate_leaves_parameters():
    model = build_proposed(SMALL, seed=4)
    before = [p.data.copy() for p in model.network.parameters()]
    train(model, toy_epochs(60), hyper=TrainHyper(epochs1=1, lr1=0.0, epochs2=0))
    assert all(np.array_equal(a, p.data) for a, p in zip(before, model.network.parameters()))


def test_training_deterministic_and_order_invariant():
    es = toy_epochs(64)
    hyper = TrainHyper(epochs1=2, epochs2=1, batch_size=16)
    a = train(build_proposed(SMALL, seed=5), es, hyper=hyper)
    b = train(build_proposed(SMALL, seed=5), es, hyper=hyper)
    perm = np.random.default_rng(9).permutation(len(es))
    c = train(build_proposed(SMALL, seed=5), es.subset(perm), hyper=hyper)
    for x, y, z in zip(a.network.parameters(), b.network.parameters(), c.network.parameters()):
        assert np.array_equal(x.data, y.data) and np.array_equal(x.data, z.data)


def test_nan_loss_raises_training_fault():
    es = toy_epochs(32)
    bad = EpochSet(np.where(np.arange(32)[:, None, None] == 20, np.nan, es.data), es.labels, es.trials, "P1")
    with pytest.raises(TrainingFault) as info:
        train(build_proposed(SMALL, seed=6), bad, hyper=TrainHyper(epochs1=1, epochs2=0, batch_size=8))
    assert 0 <= info.value.step < 4


def test_hyper_validation():
    with pytest.raises(ValueError):
        TrainHyper(lr1=1e-4, lr2=1e-3)
    with pytest.raises(ValueError):
        TrainHyper(batch_size=0)


def test_baselines_train_one_epoch():
    es = toy_epochs(48)
    for kind in ("deepconvnet", "eegnet", "mfb_cnn"):
        m = train(build_network(kind, 0), es, hyper=TrainHyper(epochs1=1, epochs2=0, batch_size=16))
        assert np.isfinite(m.training_log[-1]["train_loss"])


def test_checkpoint_round_trip(trained_toy, rng):
    blob = checkpoint_bytes(trained_toy)
    assert blob == checkpoint_bytes(trained_toy)
    restored = load_checkpoint(blob)
    x = rng.normal(size=(4, 30, 100))
    assert np.array_equal(predict(restored, x)[1], predict(trained_toy, x)[1])
    assert restored.training_log == trained_toy.training_log
    assert checkpoint_bytes(restored) == blob


# ------------------------------------------------------------------ SVM

def test_svm_separates_band_power_classes(rng):
    t = np.arange(100) / 100.0
    labels = np.arange(150) % 3
    freqs = np.array([2.5, 6.0, 10.0])[labels]
    data = rng.normal(size=(150, 30, 100)) + 3 * np.sin(2 * np.pi * freqs[:, None, None] * t)
    svm = PsdSvm(seed=0).fit(data, labels)
    assert np.mean(svm.predict(data) == labels) > 0.95
    assert svm.weights.shape == (3, 120)


def test_svm_objective_trend_and_determinism(rng):
    labels = np.arange(90) % 3
    data = rng.normal(size=(90, 30, 100)) * (1 + labels)[:, None, None]
    a = PsdSvm(seed=1, epochs=20).fit(data, labels)
    b = PsdSvm(seed=1, epochs=20).fit(data, labels)
    assert np.array_equal(a.weights, b.weights)
    log = np.array(a.objective_log)
    # averaged iterates: the second-half objective does not rise above its start
    half = log[len(log) // 2:]
    assert half[-1] <= half[0] + 1e-9
    assert log[-1] <= log[0]
