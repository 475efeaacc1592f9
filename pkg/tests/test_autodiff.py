import numpy as np
import pytest

from tspe.numerics import autodiff as ad
from oracles import central_difference, stable_bce

rng = np.random.default_rng(0)


def _check(build, arrays, tol=1e-6):
    """Compare tape gradients of ``build(*tensors)`` with central differences."""
    params = [ad.Parameter(a) for a in arrays]
    with ad.Tape() as tape:
        loss = build(*params)
    grads = ad.backward(tape, loss, params)

    def value():
        return float(build(*[ad.Tensor(p.data) for p in params]).data)

    numeric = central_difference(value, [p.data for p in params], h=1e-6)
    for got, want in zip(grads.values(), numeric):
        assert np.allclose(got, want, atol=tol, rtol=1e-5)


def _weighted(t, seed=1):
    w = np.random.default_rng(seed).normal(size=t.shape)
    return ad.tsum(ad.mul(t, w))


def test_elementwise_ops():
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4,))
    _check(lambda x, y: _weighted(ad.add(x, y) * ad.sub(x, y)), [a, b])
    _check(lambda x: _weighted(ad.sigmoid(x) + ad.square(x)), [a])
    _check(lambda x: _weighted(ad.relu(x)), [a + 0.05 * np.sign(a)])


def test_shape_ops():
    a = rng.normal(size=(2, 3, 4))
    _check(lambda x: _weighted(ad.swapaxes(ad.reshape(x, (3, 2, 4)), 0, 2)), [a])
    _check(lambda x: _weighted(ad.mean(x, axis=1)), [a])
    _check(lambda x: _weighted(ad.tsum(x, axis=(0, 2), keepdims=True)), [a])


def test_matmul_and_linear_agree():
    x, w, b = rng.normal(size=(2, 5, 3)), rng.normal(size=(3, 4)), rng.normal(size=(4,))
    _check(lambda x_, w_, b_: _weighted(ad.linear(x_, w_, b_)), [x, w, b])
    _check(lambda x_, w_: _weighted(ad.matmul(x_, w_)), [x, w])
    assert np.allclose(ad.linear(x, w, b).data, x @ w + b)


def test_layer_norm():
    x = rng.normal(size=(2, 3, 6))
    _check(lambda x_, g, b: _weighted(ad.layer_norm(x_, g, b)),
           [x, rng.normal(size=6), rng.normal(size=6)])
    out = ad.layer_norm(x, np.ones(6), np.zeros(6)).data
    assert np.allclose(out.mean(-1), 0, atol=1e-12)


def test_masked_softmax_zeros_and_gradient():
    x = rng.normal(size=(3, 5))
    mask = np.array([[1, 1, 0, 1, 0], [1, 0, 0, 0, 0], [1, 1, 1, 1, 1]], dtype=bool)
    out = ad.masked_softmax(x, mask).data
    assert np.all(out[~mask] == 0.0)
    assert np.allclose(out.sum(-1), 1.0)
    _check(lambda x_: _weighted(ad.masked_softmax(x_, mask)), [x])
    with pytest.raises(ValueError):
        ad.masked_softmax(x, np.zeros_like(mask))


def _reference_attention(q, k, v, mask, h):
    bsz, nq, d = q.shape
    dh = d // h
    out = np.zeros_like(q)
    for b in range(bsz):
        for head in range(h):
            sl = slice(head * dh, (head + 1) * dh)
            s = q[b, :, sl] @ k[b, :, sl].T / np.sqrt(dh)
            s = np.where(mask[b][None, :], s, -np.inf)
            p = np.exp(s - s.max(axis=1, keepdims=True))
            p /= p.sum(axis=1, keepdims=True)
            out[b, :, sl] = p @ v[b, :, sl]
    return out


def test_attention_matches_loop_reference():
    q, k, v = rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 5, 4)), rng.normal(size=(2, 5, 4))
    mask = np.array([[1, 1, 1, 0, 0], [1, 0, 1, 1, 1]], dtype=bool)
    trace = []
    out = ad.attention(q, k, v, mask, 2, trace=trace).data
    assert np.allclose(out, _reference_attention(q, k, v, mask, 2))
    assert trace[0].shape == (2, 2, 3, 5)
    assert np.all(trace[0][0, :, :, 3:] == 0.0)
    _check(lambda a, b, c: _weighted(ad.attention(a, b, c, mask, 2)), [q, k, v])


def test_attention_survives_large_score_spread():
    q = np.zeros((2, 1, 2))
    q[0] = 400.0
    k = np.ones((2, 3, 2))
    k[1, 0] = -400.0
    out = ad.attention(q, k, np.ones((2, 3, 2)), np.ones((2, 3), bool), 1).data
    assert np.all(np.isfinite(out)) and np.allclose(out, 1.0)


def test_attention_dropout_gradient_uses_same_mask():
    q, k, v = rng.normal(size=(1, 2, 4)), rng.normal(size=(1, 3, 4)), rng.normal(size=(1, 3, 4))
    mask = np.ones((1, 3), bool)
    _check(lambda a, b, c: _weighted(ad.attention(a, b, c, mask, 2, 0.5,
                                                  np.random.default_rng(5))), [q, k, v])


def test_dropout_is_inverted_and_identity_without_generator():
    x = np.ones((200, 50))
    assert np.array_equal(ad.dropout(x, 0.3, None).data, x)
    out = ad.dropout(x, 0.25, np.random.default_rng(0)).data
    assert set(np.unique(out)) <= {0.0, 1.0 / 0.75}
    assert abs(out.mean() - 1.0) < 0.02
    _check(lambda x_: _weighted(ad.dropout(x_, 0.5, np.random.default_rng(3))),
           [rng.normal(size=(3, 3))])


@pytest.mark.parametrize("z", [-800.0, -30.0, 0.0, 1e-3, 30.0, 800.0])
@pytest.mark.parametrize("y", [0, 1])
def test_bce_extremes(z, y):
    loss = ad.bce_with_logits(np.array([z]), np.array([y]))
    assert np.isfinite(loss.data)
    assert np.isclose(float(loss.data), stable_bce(z, y), rtol=1e-12, atol=1e-300)


def test_bce_gradient_and_validation():
    z = rng.normal(size=5)
    y = np.array([0, 1, 1, 0, 1])
    _check(lambda z_: ad.bce_with_logits(z_, y), [z])
    with pytest.raises(ValueError):
        ad.bce_with_logits(z, np.full(5, 0.5))
    with pytest.raises(ValueError):
        ad.bce_with_logits(np.zeros(0), np.zeros(0))


def test_unused_parameter_gets_zero_gradient():
    a, unused = ad.Parameter(np.ones(3), "a"), ad.Parameter(np.ones(2), "u")
    with ad.Tape() as tape:
        loss = ad.tsum(ad.square(a))
    grads = ad.backward(tape, loss, [a, unused])
    assert np.array_equal(grads["a"], 2 * np.ones(3))
    assert np.array_equal(grads["u"], np.zeros(2))


def test_nan_is_reported_with_op_name():
    a = ad.Parameter(np.array([-1.0, 4.0]))
    with ad.Tape() as tape, np.errstate(invalid="ignore"):
        loss = ad.tsum(ad.mul(a, np.array([np.nan, 1.0])))
    with pytest.raises(FloatingPointError, match="mul"):
        ad.backward(tape, loss, [a])


def test_non_scalar_loss_rejected():
    a = ad.Parameter(np.ones(3))
    with ad.Tape() as tape:
        out = ad.square(a)
    with pytest.raises(ValueError):
        ad.backward(tape, out)


def test_nothing_recorded_outside_tape():
    a = ad.Parameter(np.ones(2))
    out = ad.square(a)
    assert out.parents == () and not out.requires_grad
