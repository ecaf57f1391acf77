import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from benns import nn
from benns.errors import DegenerateColumnError, EmptyDatasetError, InvalidArgumentError, ModelFormatError


def numeric_grads(model, x, y, h=1e-7):
    out = []
    for i, p in enumerate(model.params):
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            up = nn.mse(model, x, y)
            p[idx] = orig - h
            down = nn.mse(model, x, y)
            p[idx] = orig
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return out


def max_relative_error(analytic, numeric, floor=1e-9):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float((np.abs(a - n) / denom)[np.maximum(np.abs(a), np.abs(n)) > floor].max(initial=0.0)))
    return worst


def test_param_count_and_layers():
    assert nn.init_mlp([1, 16, 16, 1]).n_params == 321
    assert nn.init_mlp([1, 32, 32, 1]).layer_sizes == (1, 32, 32, 1)


def test_init_deterministic_and_bias_zero():
    a = nn.init_mlp([2, 8, 1], nn.SIGMOID, nn.GLOROT_NORMAL, 3)
    b = nn.init_mlp([2, 8, 1], nn.SIGMOID, nn.GLOROT_NORMAL, 3)
    assert all(np.array_equal(p, q) for p, q in zip(a.params, b.params))
    assert all(not bias.any() for bias in a.biases)


@pytest.mark.parametrize("scheme,target", [(nn.HE_NORMAL, 2 / 400), (nn.GLOROT_NORMAL, 2 / (400 + 300))])
def test_init_variance(scheme, target):
    w = nn.init_mlp([400, 300], nn.RELU, scheme, 0).weights[0]
    assert w.size >= 1e5
    assert abs(w.var() / target - 1) < 0.05


@pytest.mark.parametrize("bad", [[], [3], [2, 0, 1]])
def test_init_rejects_bad_sizes(bad):
    with pytest.raises(InvalidArgumentError):
        nn.init_mlp(bad)


def test_init_rejects_unknown_names():
    with pytest.raises(InvalidArgumentError):
        nn.init_mlp([1, 1], "tanh")
    with pytest.raises(InvalidArgumentError):
        nn.init_mlp([1, 1], nn.RELU, "uniform")


def test_forward_hand_cases():
    m = nn.init_mlp([1, 1])
    m.weights[0][:] = 2.0
    m.biases[0][:] = 1.0
    assert nn.forward(m, [3.0])[0] == 7.0
    z = nn.init_mlp([3, 4, 2], nn.SIGMOID)
    for p in z.params:
        p[...] = 0.0
    assert not nn.forward(z, np.ones((5, 3))).any()
    r = nn.init_mlp([1, 2, 1], nn.RELU)
    r.weights[0][:] = [[1.0, -1.0]]
    r.weights[1][:] = [[1.0], [100.0]]
    assert nn.forward(r, [2.0])[0] == 2.0  # second unit has negative pre-activation


def test_forward_dimension_mismatch():
    with pytest.raises(InvalidArgumentError):
        nn.forward(nn.init_mlp([2, 1]), np.ones((4, 3)))


def test_backward_hand_cases():
    m = nn.init_mlp([1, 1])
    m.weights[0][:] = 2.0
    m.biases[0][:] = 1.0
    gw, gb = nn.backward(m, [[3.0]], [[4.0]])
    assert gw[0, 0] == 2 * (7 - 4) * 3 and gb[0] == 2 * (7 - 4)
    zero = nn.backward(m, [[3.0]], [[7.0]])
    assert not any(g.any() for g in zero)
    with pytest.raises(EmptyDatasetError):
        nn.backward(m, np.zeros((0, 1)), np.zeros((0, 1)))


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.integers(1, 8), min_size=0, max_size=2),
    st.integers(1, 2),
    st.sampled_from([nn.RELU, nn.SIGMOID]),
    st.integers(0, 10_000),
)
def test_gradient_check(hidden, n_in, act, seed):
    sizes = [n_in, *hidden, 1]
    model = nn.init_mlp(sizes, act, nn.GLOROT_NORMAL, seed)
    rng = np.random.default_rng(seed)
    for b in model.biases:
        b[:] = rng.normal(0, 0.1, b.shape)
    x = rng.random((6, n_in))
    y = rng.random((6, 1))
    assert max_relative_error(nn.backward(model, x, y), numeric_grads(model, x, y)) < 1e-4


def test_adamax_hand_step():
    m = nn.init_mlp([1, 1])
    m.weights[0][:] = 0.0
    m.biases[0][:] = 0.0
    state = nn.AdamaxState.fresh(m)
    grads = [np.ones((1, 1)), np.zeros(1)]
    new, st_ = nn.adamax_step(m, grads, state, 0.05)
    assert st_.t == 1 and st_.m[0][0, 0] == pytest.approx(0.1, abs=1e-15) and st_.u[0][0, 0] == 1.0
    assert abs(new.weights[0][0, 0] - (-(0.05 / (1 - 0.9)) * 0.1 / (1 + 1e-8))) < 1e-12
    assert abs(new.weights[0][0, 0] + 0.05) < 1e-8
    # inputs untouched and zero gradients leave parameters alone
    assert m.weights[0][0, 0] == 0.0 and state.t == 0
    assert new.biases[0][0] == 0.0


def test_adamax_shape_mismatch():
    m = nn.init_mlp([1, 1])
    with pytest.raises(InvalidArgumentError):
        nn.adamax_step(m, [np.ones((2, 2))], nn.AdamaxState.fresh(m), 0.1)


def test_normalizer_examples():
    n = nn.fit_normalizer([[0.0], [10.0]])
    assert n.apply([[5.0]])[0, 0] == 0.5
    assert nn.fit_normalizer([2.0, 4.0, 6.0]).apply([4.0])[0] == 0.5
    with pytest.raises(DegenerateColumnError):
        nn.fit_normalizer([[1.0, 2.0], [1.0, 3.0]])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6)), min_size=2, max_size=30))
def test_normalizer_round_trip(rows):
    x = np.array(rows)
    if (np.ptp(x, axis=0) < 1e-3).any():
        return
    n = nn.fit_normalizer(x)
    z = n.apply(x)
    assert z.min() >= -1e-12 and z.max() <= 1 + 1e-12
    assert np.allclose(n.invert(z), x, rtol=0, atol=1e-12 * max(1.0, np.abs(x).max()))


def _linear_task(seed=0):
    rng = np.random.default_rng(seed)
    x = rng.random((200, 1))
    return x, 0.3 + 0.5 * x


def test_train_descends_and_is_deterministic():
    x, y = _linear_task()
    model = nn.init_mlp([1, 8, 1], nn.RELU, nn.HE_NORMAL, 1)
    cfg = nn.TrainConfig(epochs=30, seed=2)
    a, hist = nn.train(model, x[:160], y[:160], x[160:], y[160:], cfg)
    b, _ = nn.train(model, x[:160], y[:160], x[160:], y[160:], cfg)
    assert hist.val_loss[-1] < hist.val_loss[0]
    assert len(hist.train_loss) == 31
    assert all(np.array_equal(p, q) for p, q in zip(a.params, b.params))
    assert all(np.array_equal(p, q) for p, q in zip(model.params, nn.init_mlp([1, 8, 1], nn.RELU, nn.HE_NORMAL, 1).params))


def test_train_returns_best_validation_epoch():
    x, y = _linear_task(1)
    model = nn.init_mlp([1, 8, 1], nn.SIGMOID, nn.GLOROT_NORMAL, 0)
    trained, hist = nn.train(model, x[:160], y[:160], x[160:], y[160:], nn.TrainConfig(epochs=20))
    assert hist.best_epoch == int(np.argmin(hist.val_loss))
    assert nn.mse(trained, x[160:], y[160:]) == pytest.approx(min(hist.val_loss), rel=1e-12)
    last, hist2 = nn.train(model, x[:160], y[:160], x[160:], y[160:], nn.TrainConfig(epochs=20, keep_best_val=False))
    assert hist2.best_epoch is None
    assert nn.mse(last, x[160:], y[160:]) == pytest.approx(hist2.val_loss[-1], rel=1e-12)


def test_train_config_validation():
    with pytest.raises(InvalidArgumentError):
        nn.TrainConfig(epochs=0)
    with pytest.raises(InvalidArgumentError):
        nn.TrainConfig(learning_rate=0)
    with pytest.raises(EmptyDatasetError):
        nn.train(nn.init_mlp([1, 1]), np.zeros((0, 1)), np.zeros((0, 1)))


def test_full_batch_training():
    x, y = _linear_task()
    _, hist = nn.train(nn.init_mlp([1, 4, 1]), x, y, config=nn.TrainConfig(epochs=5, batch_size=None))
    assert len(hist.train_loss) == 6 and hist.val_loss == []


def test_model_round_trip_and_version_check(tmp_path):
    m = nn.init_mlp([2, 5, 1], nn.SIGMOID, nn.GLOROT_NORMAL, 4)
    m.x_norm = nn.fit_normalizer([[0, 0], [1, 2]])
    m.y_norm = nn.fit_normalizer([[0], [3]])
    path = tmp_path / "m.model"
    nn.save_model(m, path)
    back = nn.load_model(path)
    x = np.random.default_rng(0).random((7, 2))
    assert np.array_equal(back.predict(x), m.predict(x))
    doc = json.loads(path.read_text())
    assert doc["layer_sizes"] == [2, 5, 1] and doc["hidden_activation"] == nn.SIGMOID
    doc["version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError):
        nn.load_model(path)
    path.write_text("garbage")
    with pytest.raises(ModelFormatError):
        nn.load_model(path)


def test_predict_requires_normalizers():
    with pytest.raises(InvalidArgumentError):
        nn.init_mlp([1, 1]).predict([[1.0]])
