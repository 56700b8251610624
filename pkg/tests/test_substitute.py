import time

import numpy as np
import pytest

from mtattack.errors import ConfigError, InvalidDataset
from mtattack.substitute import OOV, SubstituteModel, TrainingConfig, build_vocab, fit, train
from mtattack.text import normalize_and_tokenize as T
from synthetic import gradient_check


def test_separable_fixture_trains(corpus, marker_model):
    acc = np.mean([marker_model.predict(t) == y for t, y in corpus])
    assert acc >= 0.95


def test_marker_text_confident(confident_model):
    assert confident_model.predict_proba("the zebra was very good") > 0.9
    assert confident_model.predict_proba("the giraffe was very good") < 0.1


def test_training_is_fast(corpus):
    t0 = time.perf_counter()
    train(corpus, TrainingConfig(seed=1))
    assert time.perf_counter() - t0 < 60


def test_single_label_rejected(corpus):
    with pytest.raises(InvalidDataset):
        train([(t, 0) for t, _ in corpus])


def test_small_dataset_rejected(corpus):
    with pytest.raises(InvalidDataset):
        train(corpus[:9])
    fit(corpus[:9])


def test_zero_output_layer_gives_half():
    cfg = TrainingConfig()
    m = SubstituteModel.initialize(build_vocab([T("a b")]), cfg, np.random.default_rng(0))
    assert m.predict_proba("a b") == 0.5
    assert m.predict_proba("a b") + (1 - m.predict_proba("a b")) == 1.0


def test_oov_row_starts_at_zero():
    m = SubstituteModel.initialize(build_vocab([T("a b")]), TrainingConfig(), np.random.default_rng(0))
    assert m.vocab[OOV] == 0
    assert not m.E[0].any()
    assert m.ids("never seen").tolist() == [0, 0]


def test_gradient_matches_finite_differences(corpus, marker_model):
    errors = gradient_check(marker_model, [t for t, _ in corpus], n_probes=100, seed=0)
    assert errors.max() < 1e-3


def test_gradient_is_per_position(marker_model):
    g = marker_model.input_gradient("zebra zebra movie")
    assert g.shape == (3, marker_model.E.shape[1])
    # identical tokens at two positions get identical rows, not one summed row
    assert np.allclose(g[0], g[1])


def test_all_oov_gradient(marker_model):
    g = marker_model.input_gradient("qqq www")
    assert g.shape == (2, marker_model.E.shape[1])
    assert np.isfinite(g).all()


def test_loss_delta_same_token(marker_model):
    assert marker_model.loss_delta_estimate("the zebra was good", 1, "zebra") == 0.0


def test_loss_delta_oov_uses_oov_row(marker_model):
    text = "the zebra was good"
    g = marker_model.input_gradient(text)
    expected = g[1] @ (marker_model.E[0] - marker_model.E[marker_model.token_id("zebra")])
    assert marker_model.loss_delta_estimate(text, 1, "unseenword") == pytest.approx(expected)


def test_loss_delta_sign_agreement(corpus, marker_model):
    rng = np.random.default_rng(1)
    vocab = marker_model.words
    agree = total = 0
    for _ in range(300):
        text, _ = corpus[int(rng.integers(len(corpus)))]
        t = T(text)
        pos = int(rng.integers(len(t)))
        rep = vocab[int(rng.integers(len(vocab)))]
        est = marker_model.loss_delta_estimate(t, pos, rep)
        target = marker_model.predict(t)
        words = list(t.words)
        words[pos] = rep
        exact = marker_model.loss(" ".join(words), target) - marker_model.loss(t, target)
        if est == 0 or abs(exact) < 1e-12:
            continue
        total += 1
        agree += np.sign(est) == np.sign(exact)
    assert total > 100
    assert agree / total >= 0.8


def test_serialization_roundtrip(tmp_path, marker_model):
    path = tmp_path / "m.json"
    marker_model.save(path)
    back = SubstituteModel.load(path)
    for k in SubstituteModel.PARAMS:
        assert np.array_equal(getattr(back, k), getattr(marker_model, k))
    assert back.predict_proba("the zebra") == marker_model.predict_proba("the zebra")


def test_tampered_config_rejected(marker_model):
    d = marker_model.to_dict()
    d["training_config"]["lr"] = 1.0
    with pytest.raises(ConfigError):
        SubstituteModel.from_dict(d)


def test_training_is_deterministic(corpus):
    a = train(corpus, TrainingConfig(seed=3, epochs=1))
    b = train(corpus, TrainingConfig(seed=3, epochs=1))
    assert all(np.array_equal(getattr(a, k), getattr(b, k)) for k in SubstituteModel.PARAMS)


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainingConfig(dropout=1.0)
    with pytest.raises(ConfigError):
        TrainingConfig(lr=0)
