import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepseenet.models import (
    DeepSeeNet,
    EyePrediction,
    decode_features,
    embed,
    predict_eye,
    predict_eyes,
    predict_patient,
)
from deepseenet.nnet import checkpoint
from deepseenet.nnet.network import default_network
from deepseenet.scale import DrusenClass, EyeFeatures, simplified_score

from helpers import flat_image, rule_model


def test_decision_rules():
    assert decode_features((0.1, 0.2, 0.7), 0.0, 0.0).drusen == DrusenClass.LARGE
    assert decode_features((0.4, 0.4, 0.2), 0.0, 0.0).drusen == DrusenClass.SMALL_NONE
    assert decode_features((0.2, 0.4, 0.4), 0.0, 0.0).drusen == DrusenClass.MEDIUM
    f = decode_features((1.0, 0.0, 0.0), 0.5, 0.4999999)
    assert f.pigment and not f.late_amd


def test_eye_prediction_features():
    p = EyePrediction((0.1, 0.2, 0.7), 0.5, 0.1)
    assert p.features == EyeFeatures(DrusenClass.LARGE, True, False)
    assert p.to_dict()["features"] == {"drusen": "large", "pigment": True, "late_amd": False}


def test_rule_model_probabilities_valid():
    model = rule_model()
    imgs = np.random.default_rng(0).random((10, 8, 8, 3))
    for p in predict_eyes(model, imgs):
        assert abs(sum(p.drusen_probs) - 1.0) < 1e-6
        assert all(0.0 <= v <= 1.0 for v in (*p.drusen_probs, p.pigment_prob, p.late_amd_prob))


def test_late_amd_in_one_eye_scores_five():
    model = rule_model()
    late = flat_image(rgb=(0.9, 0.0, 0.0))
    for other in (flat_image(), flat_image(rgb=(0.0, 0.9, 0.9))):
        score, left, _ = predict_patient(model, late, other)
        assert left.features.late_amd
        assert score == 5


def test_all_clear_pair_scores_zero():
    score, left, right = predict_patient(rule_model(), flat_image(), flat_image())
    assert score == 0
    assert left.features == right.features == EyeFeatures()


def test_predict_patient_deterministic():
    rng = np.random.default_rng(1)
    a, b = rng.random((2, 8, 8, 3))
    model = rule_model()
    assert predict_patient(model, a, b) == predict_patient(model, a, b)


def test_missing_image_and_resolution():
    model = rule_model()
    with pytest.raises(ValueError):
        predict_patient(model, flat_image(), None)
    with pytest.raises(ValueError, match="resolution|shape"):
        predict_eye(model, flat_image(side=9))


channel = st.floats(0.0, 1.0)
colours = st.tuples(channel, channel, channel)


@settings(max_examples=200, deadline=None)
@given(colours, colours)
def test_consistency_and_symmetry(c1, c2):
    model = rule_model()
    a, b = flat_image(rgb=c1), flat_image(rgb=c2)
    score, left, right = predict_patient(model, a, b)
    assert score == simplified_score(left.features, right.features)
    assert predict_patient(model, b, a)[0] == score


def test_consistency_with_random_default_heads():
    nets = [default_network(c, side=32).initialize(s) for c, s in ((3, 0), (2, 1), (2, 2))]
    model = DeepSeeNet(*nets)
    imgs = np.random.default_rng(2).random((12, 32, 32, 3))
    for i in range(0, 12, 2):
        score, left, right = predict_patient(model, imgs[i], imgs[i + 1])
        assert score == simplified_score(left.features, right.features)
        assert predict_patient(model, imgs[i + 1], imgs[i])[0] == score


def test_heads_must_agree():
    with pytest.raises(ValueError):
        DeepSeeNet(default_network(3, side=32), default_network(2, side=40),
                   default_network(2, side=32))
    with pytest.raises(ValueError):
        DeepSeeNet(default_network(2, side=32), default_network(2, side=32),
                   default_network(2, side=32))


# -- embeddings ------------------------------------------------------------------

def test_embed_length_and_identity():
    model = DeepSeeNet(*[default_network(c, side=32).initialize(s)
                         for c, s in ((3, 0), (2, 1), (2, 2))])
    img = np.random.default_rng(3).random((32, 32, 3))
    for head in ("d", "p", "la"):
        v = embed(model, img, head)
        assert v.shape == (128,)
        assert np.all(v >= 0)
        assert np.array_equal(v, embed(model, img.copy(), head))
    batch = embed(model, np.stack([img, img]), "drusen")
    assert batch.shape == (2, 128) and np.array_equal(batch[0], batch[1])
    zero = embed(model, np.zeros((32, 32, 3)), "pigment")
    assert np.all(np.isfinite(zero))


def test_embed_rule_model_copies_channel_means():
    v = embed(rule_model(), flat_image(rgb=(0.2, 0.3, 0.4)), "la")
    assert np.allclose(v[:3], [0.2, 0.3, 0.4])
    assert not v[3:].any()


def test_embed_wrong_width():
    nets = [default_network(c, side=32, hidden=64).initialize(0) for c in (3, 2, 2)]
    with pytest.raises(ValueError, match="128"):
        embed(DeepSeeNet(*nets), np.zeros((32, 32, 3)))
    with pytest.raises(ValueError):
        rule_model().head("x")


def test_save_load_round_trip(tmp_path):
    model = DeepSeeNet(*[default_network(c, side=32, dtype=np.float32).initialize(s)
                         for c, s in ((3, 4), (2, 5), (2, 6))])
    model.save(tmp_path / "m")
    back = DeepSeeNet.load(tmp_path / "m")
    for name in model.heads:
        assert checkpoint.to_bytes(back.heads[name]) == checkpoint.to_bytes(model.heads[name])
    imgs = np.random.default_rng(4).random((3, 32, 32, 3)).astype(np.float32)
    assert predict_eyes(back, imgs) == predict_eyes(model, imgs)
