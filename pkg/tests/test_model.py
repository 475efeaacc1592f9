import numpy as np
import pytest

from tspe.model import (ModelConfig, TransformerModel, aggregate, init_params, param_shapes,
                        predict_logit, probability, score_columns)
from tspe.training import build_batch

SMALL = ModelConfig(num_layers=2, num_heads=2, d_model=8, dropout=0.0, input_width=5,
                    dtype="float64")


def _batch(seed=0, pad=0):
    rng = np.random.default_rng(seed)
    enc = rng.normal(size=(12, 5))
    members = [((0, 1, 2), (3, 4)), ((5,), (6, 7, 8, 9)), ((10, 11), (0,))]
    return build_batch(members, [1, 0, 1], enc, "float64", extra_pad=pad), enc, members


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(d_model=10, num_heads=3)
    with pytest.raises(ValueError):
        ModelConfig(dropout=1.0)
    assert ModelConfig().ffn_hidden == 128


def test_param_layout_and_init():
    shapes = param_shapes(SMALL)
    assert shapes["proj.w"] == (5, 8) and shapes["head.w"] == (1, 8)
    assert sum(name.startswith("enc.") for name in shapes) > 0
    a, b = init_params(SMALL, 3), init_params(SMALL, 3)
    assert all(np.array_equal(a[n], b[n]) for n in a)
    assert not np.array_equal(a["proj.w"], init_params(SMALL, 4)["proj.w"])
    bound = 1 / np.sqrt(5)
    assert np.abs(a["proj.w"]).max() <= bound
    assert np.all(a["enc.0.norm1.g"] == 1) and np.all(a["enc.0.norm1.b"] == 0)


def test_params_must_match_config():
    params = init_params(SMALL, 0)
    params["proj.w"] = np.zeros((4, 8))
    with pytest.raises(ValueError):
        TransformerModel(SMALL, params)


def test_score_columns_example():
    x = np.array([[1.0, 0.0], [0.0, 2.0]])
    s = score_columns(x).data
    assert np.allclose(s, np.exp([1, 4]) / np.exp([1, 4]).sum())
    masked = score_columns(x, np.array([True, False])).data
    assert masked.tolist() == [1.0, 0.0]
    with pytest.raises(ValueError):
        score_columns(x, np.array([False, False]))


def test_aggregate_and_logit():
    x = np.arange(6.0).reshape(2, 3)
    s = np.array([0.2, 0.3, 0.5])
    assert np.allclose(aggregate(x, s).data, x @ s)
    y = np.array([[1.0, 2.0]])
    assert np.allclose(predict_logit(y, np.array([[0.5, -1.0]]), np.array([0.25])).data, [-1.25])
    with pytest.raises(ValueError):
        aggregate(x, s[:2])


def test_probability_is_stable():
    p = probability(np.array([-1000.0, 0.0, 1000.0]))
    assert p.tolist() == [0.0, 0.5, 1.0]


def test_forward_shapes_and_determinism():
    model = TransformerModel(SMALL, seed=1)
    batch, _, _ = _batch()
    trace = []
    logits = model.forward(batch, trace=trace).data
    assert logits.shape == (3,)
    assert np.array_equal(logits, model.forward(batch).data)
    names = [name for name, _ in trace]
    assert names[0] == "enc.0.attn" and "dec.1.xattn" in names
    for _, probs in trace:
        assert np.allclose(probs.sum(-1), 1.0)


def test_padding_and_member_order_do_not_change_output():
    model = TransformerModel(SMALL, seed=2)
    batch, enc, members = _batch()
    base = model.predict_proba(batch)
    padded, _, _ = _batch(pad=3)
    assert np.allclose(model.predict_proba(padded), base, atol=1e-12)
    shuffled = [(a[::-1], b[::-1]) for a, b in members]
    perm = build_batch(shuffled, [1, 0, 1], enc, "float64")
    assert np.allclose(model.predict_proba(perm), base, atol=1e-12)


def test_pair_order_matters():
    # encoder and decoder roles differ, so swapping A and B changes the logit
    model = TransformerModel(SMALL, seed=3)
    _, enc, members = _batch()
    ab = build_batch(members[:1], [1], enc, "float64")
    ba = build_batch([members[0][::-1]], [1], enc, "float64")
    assert not np.allclose(model.predict_proba(ab), model.predict_proba(ba))


def test_dropout_only_with_generator():
    cfg = ModelConfig(**{**SMALL.to_dict(), "dropout": 0.5})
    model = TransformerModel(cfg, seed=4)
    batch, _, _ = _batch()
    plain = model.forward(batch).data
    a = model.forward(batch, generator=np.random.default_rng(0)).data
    b = model.forward(batch, generator=np.random.default_rng(0)).data
    assert np.array_equal(a, b) and not np.allclose(a, plain)


def test_fully_padded_side_rejected():
    model = TransformerModel(SMALL, seed=0)
    batch, _, _ = _batch()
    batch.dec_mask[1] = False
    with pytest.raises(ValueError):
        model.forward(batch)


def test_astype_round_trip():
    model = TransformerModel(SMALL, seed=5)
    f32 = model.astype("float32")
    assert f32.cfg.dtype == "float32"
    assert all(a.dtype == np.float32 for a in f32.params.values())
