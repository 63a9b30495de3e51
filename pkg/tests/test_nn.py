import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ktpfl.errors import DataError, DimensionError, ParameterError
from ktpfl.gradcheck import model_fd_gradient, relative_error
from ktpfl.nn import (
    Layer,
    Model,
    ce_loss,
    cross_entropy,
    flatten_grads,
    flatten_params,
    forward,
    grad_ce,
    grad_kl_student,
    init_model,
    kl_divergence,
    kl_loss,
    param_bytes,
    param_count,
    sgd_step,
    softmax_t,
    unflatten_params,
)


def random_model(rng, sizes):
    m = init_model(sizes, rng)
    # non-zero biases so the bias paths are exercised
    layers = tuple(Layer(l.weights, rng.normal(0, 0.1, l.bias.shape), l.activation) for l in m.layers)
    return Model(layers)


def hand_forward(model, batch):
    """Triple-loop matrix multiply; shares nothing with nn.forward."""
    rows = [list(map(float, r)) for r in batch]
    for layer in model.layers:
        w, b = layer.weights, layer.bias
        out = []
        for r in rows:
            o = []
            for j in range(w.shape[1]):
                s = float(b[j])
                for i in range(w.shape[0]):
                    s += r[i] * float(w[i, j])
                if layer.activation == "relu":
                    s = max(s, 0.0)
                o.append(s)
            out.append(o)
        rows = out
    return np.array(rows)


def entropy(p):
    return -(p * np.log(np.maximum(p, 1e-300))).sum(axis=-1)


# ---- forward ----

def test_zero_model_gives_zero_logits():
    model = Model((Layer(np.zeros((3, 4)), np.zeros(4), "relu"), Layer(np.zeros((4, 2)), np.zeros(2))))
    x = np.random.default_rng(0).normal(size=(5, 3))
    assert np.array_equal(forward(model, x), np.zeros((5, 2)))


def test_identity_layer():
    model = Model((Layer(np.eye(2), np.zeros(2)),))
    assert np.array_equal(forward(model, np.array([[1.0, 2.0]])), np.array([[1.0, 2.0]]))


def test_forward_matches_hand_oracle():
    rng = np.random.default_rng(1)
    model = random_model(rng, [5, 7, 3])
    x = rng.normal(size=(6, 5))
    np.testing.assert_allclose(forward(model, x), hand_forward(model, x), rtol=0, atol=1e-12)


def test_forward_dimension_error_names_layer():
    model = init_model([4, 3], np.random.default_rng(0))
    with pytest.raises(DimensionError, match="layer 0"):
        forward(model, np.zeros((2, 5)))


def test_model_rejects_broken_chain():
    with pytest.raises(DimensionError, match="layer 1"):
        Model((Layer(np.zeros((2, 3)), np.zeros(3), "relu"), Layer(np.zeros((4, 2)), np.zeros(2))))


# ---- softmax_t ----

def test_softmax_symmetric():
    np.testing.assert_allclose(softmax_t(np.array([[0.0, 0.0]]), 1.0), [[0.5, 0.5]])


def test_softmax_closed_form():
    # e/(e+1) at 30 digits: 0.731058578630004879...
    np.testing.assert_allclose(softmax_t(np.array([[1.0, 0.0]]), 1.0), [[0.731058578630005, 0.268941421369995]], atol=1e-6)


def test_softmax_high_temperature_flattens():
    p1 = softmax_t(np.array([[1.0, 0.0]]), 1.0)
    p10 = softmax_t(np.array([[1.0, 0.0]]), 10.0)
    p1e6 = softmax_t(np.array([[1.0, 0.0]]), 1e6)
    np.testing.assert_allclose(p1e6, [[0.5, 0.5]], atol=1e-6)
    # 0.6918987413 (T=10) vs 0.5822031089 (T=1), evaluated with mpmath
    assert entropy(p10)[0] == pytest.approx(0.691898741325677, abs=1e-12)
    assert entropy(p1)[0] == pytest.approx(0.582203108888218, abs=1e-12)
    assert entropy(p10)[0] > entropy(p1)[0]


@pytest.mark.parametrize("T", [0.0, -1.0])
def test_softmax_rejects_nonpositive_temperature(T):
    with pytest.raises(ParameterError):
        softmax_t(np.zeros((1, 2)), T)


# ---- cross entropy ----

def test_cross_entropy_uniform_logits():
    assert cross_entropy(np.array([[0.0, 0.0]]), [0]) == pytest.approx(np.log(2), abs=1e-12)


def test_cross_entropy_peaked_goes_to_zero():
    assert cross_entropy(np.array([[1e3, 0.0, 0.0]]), [0]) < 1e-12


def test_cross_entropy_matches_per_sample_sum():
    rng = np.random.default_rng(2)
    z = rng.normal(size=(4, 3))
    y = rng.integers(0, 3, size=4)
    expected = 0.0
    for i in range(4):
        expected += -(z[i, y[i]] - np.log(sum(np.exp(z[i, j]) for j in range(3))))
    assert cross_entropy(z, y) == pytest.approx(expected / 4, abs=1e-12)


def test_cross_entropy_label_out_of_range():
    with pytest.raises(DataError, match="sample 1"):
        cross_entropy(np.zeros((2, 3)), [0, 3])


# ---- KL ----

def test_kl_identity_is_zero():
    p = softmax_t(np.random.default_rng(3).normal(size=(5, 4)))
    assert abs(kl_divergence(p, p)) < 1e-9


def test_kl_closed_form():
    eps = 1e-12
    assert kl_divergence(np.array([[1 - eps, eps]]), np.array([[0.5, 0.5]])) == pytest.approx(0.6931471805313143, abs=1e-3)


def test_kl_matches_elementwise_sum():
    rng = np.random.default_rng(4)
    p = rng.dirichlet(np.ones(5), size=3)
    q = rng.dirichlet(np.ones(5), size=3)
    expected = sum(p[b, c] * (np.log(p[b, c]) - np.log(q[b, c])) for b in range(3) for c in range(5)) / 3
    assert kl_divergence(p, q) == pytest.approx(expected, abs=1e-12)


def test_kl_rejects_non_stochastic():
    with pytest.raises(DataError):
        kl_divergence(np.array([[0.7, 0.7]]), np.array([[0.5, 0.5]]))


# ---- gradients ----

def assert_matches_fd(analytic, numeric, tol=1e-4):
    err = relative_error(analytic, numeric)
    assert err.max() < tol, f"max rel err {err.max():.3g}"


@pytest.mark.parametrize("sizes", [[4, 3], [5, 6, 3], [3, 8, 5, 2]])
def test_grad_ce_matches_fd(sizes):
    rng = np.random.default_rng(sum(sizes))
    model = random_model(rng, sizes)
    x = rng.normal(size=(7, sizes[0]))
    y = rng.integers(0, sizes[-1], size=7)
    numeric = model_fd_gradient(lambda m: ce_loss(m, x, y), model)
    assert_matches_fd(flatten_grads(grad_ce(model, x, y)), numeric)


def test_grad_ce_zero_input():
    rng = np.random.default_rng(5)
    model = random_model(rng, [4, 5, 3])
    x = np.zeros((6, 4))
    y = np.array([0, 1, 2, 0, 1, 1])
    grads = grad_ce(model, x, y)
    assert np.array_equal(grads[0][0], np.zeros((4, 5)))
    p = softmax_t(forward(model, x))
    onehot = np.eye(3)[y]
    np.testing.assert_allclose(grads[-1][1], (p - onehot).mean(axis=0), atol=1e-15)


def test_grad_ce_duplicate_batch_invariant():
    rng = np.random.default_rng(6)
    model = random_model(rng, [4, 5, 3])
    x = rng.normal(size=(5, 4))
    y = rng.integers(0, 3, size=5)
    g1 = flatten_grads(grad_ce(model, x, y))
    g2 = flatten_grads(grad_ce(model, np.vstack([x, x]), np.concatenate([y, y])))
    np.testing.assert_allclose(g1, g2, rtol=1e-12, atol=1e-15)


def test_grad_kl_vanishes_at_own_prediction():
    rng = np.random.default_rng(7)
    model = random_model(rng, [4, 6, 3])
    x = rng.normal(size=(8, 4))
    own = softmax_t(forward(model, x), 2.0)
    assert np.linalg.norm(flatten_grads(grad_kl_student(model, x, own, 2.0))) < 1e-8


@pytest.mark.parametrize("T", [1.0, 2.0])
def test_grad_kl_matches_fd(T):
    rng = np.random.default_rng(8)
    model = random_model(rng, [4, 6, 3])
    x = rng.normal(size=(5, 4))
    teacher = rng.dirichlet(np.ones(3), size=5)
    numeric = model_fd_gradient(lambda m: kl_loss(m, x, teacher, T), model)
    assert_matches_fd(flatten_grads(grad_kl_student(model, x, teacher, T)), numeric)


def test_grad_kl_depends_on_temperature():
    rng = np.random.default_rng(8)
    model = random_model(rng, [4, 6, 3])
    x = rng.normal(size=(5, 4))
    teacher = rng.dirichlet(np.ones(3), size=5)
    g1 = flatten_grads(grad_kl_student(model, x, teacher, 1.0))
    g2 = flatten_grads(grad_kl_student(model, x, teacher, 2.0))
    assert not np.allclose(g1, g2)


def test_grad_kl_unnormalised_teacher_matches_fd():
    rng = np.random.default_rng(9)
    model = random_model(rng, [3, 4, 3])
    x = rng.normal(size=(4, 3))
    teacher = rng.uniform(0.1, 0.6, size=(4, 3))
    numeric = model_fd_gradient(lambda m: kl_loss(m, x, teacher, 1.5, check=False), model)
    assert_matches_fd(flatten_grads(grad_kl_student(model, x, teacher, 1.5, check=False)), numeric)


# ---- sgd ----

def test_sgd_zero_lr_is_identity():
    rng = np.random.default_rng(10)
    model = random_model(rng, [3, 4, 2])
    grads = grad_ce(model, rng.normal(size=(3, 3)), [0, 1, 0])
    out = sgd_step(model, grads, 0.0)
    assert flatten_params(out).tobytes() == flatten_params(model).tobytes()


def test_sgd_scalar_arithmetic():
    model = Model((Layer(np.array([[1.0]]), np.array([0.0])),))
    out = sgd_step(model, ((np.array([[2.0]]), np.array([0.0])),), 0.1)
    assert out.layers[0].weights[0, 0] == pytest.approx(0.8)


def test_sgd_two_half_steps_differ_on_quadratic():
    # f(w) = a/2 * w^2, grad = a*w: one step gives w(1 - lr a), two half steps w(1 - lr a / 2)^2
    a, lr, w0 = 3.0, 0.1, 1.0

    def quad_grad(m):
        return tuple((a * l.weights, a * l.bias) for l in m.layers)

    model = Model((Layer(np.array([[w0]]), np.array([w0])),))
    one = sgd_step(model, quad_grad(model), lr)
    half = sgd_step(model, quad_grad(model), lr / 2)
    half = sgd_step(half, quad_grad(half), lr / 2)
    assert one.layers[0].weights[0, 0] == pytest.approx(w0 * (1 - lr * a))
    assert half.layers[0].weights[0, 0] == pytest.approx(w0 * (1 - lr * a / 2) ** 2)
    assert one.layers[0].weights[0, 0] != half.layers[0].weights[0, 0]


def test_sgd_shape_mismatch():
    model = Model((Layer(np.zeros((2, 2)), np.zeros(2)),))
    with pytest.raises(DimensionError):
        sgd_step(model, ((np.zeros((2, 3)), np.zeros(2)),), 0.1)


# ---- flatten / bytes ----

def test_param_count_and_bytes():
    model = Model((Layer(np.zeros((2, 2)), np.zeros(2), "relu"), Layer(np.zeros((2, 1)), np.zeros(1))))
    assert param_count(model) == 9
    assert param_bytes(model) == 36


@pytest.mark.parametrize("sizes", [[784, 10], [784, 64, 10], [20, 32, 32, 10], [3, 1]])
def test_param_bytes_independent_arithmetic(sizes):
    model = init_model(sizes, np.random.default_rng(0))
    expected = sum(i * o + o for i, o in zip(sizes[:-1], sizes[1:])) * 4
    assert param_bytes(model) == expected


def test_flatten_roundtrip_bit_exact():
    model = random_model(np.random.default_rng(11), [5, 4, 3])
    back = unflatten_params(model, flatten_params(model))
    for a, b in zip(model.layers, back.layers):
        assert a.weights.tobytes() == b.weights.tobytes()
        assert a.bias.tobytes() == b.bias.tobytes()
        assert a.activation == b.activation


# ---- properties ----

logit_rows = arrays(np.float64, (3, 5), elements=st.floats(-1e4, 1e4))


@given(logit_rows, st.sampled_from([0.5, 1.0, 2.0, 10.0]))
def test_prop_softmax_rows_sum_to_one(z, T):
    p = softmax_t(z, T)
    assert np.all(np.isfinite(p))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


@given(arrays(np.float64, (4, 6), elements=st.floats(-20, 20)))
def test_prop_entropy_non_decreasing_in_temperature(z):
    temps = [0.5, 1.0, 2.0, 10.0]
    ent = [entropy(softmax_t(z, T)) for T in temps]
    for lo, hi in zip(ent[:-1], ent[1:]):
        assert np.all(hi >= lo - 1e-12)


stochastic = arrays(np.float64, (3, 4), elements=st.floats(1e-3, 1.0)).map(lambda a: a / a.sum(axis=1, keepdims=True))


@given(stochastic, stochastic)
def test_prop_kl_nonnegative(p, q):
    kl = kl_divergence(p, q)
    assert kl >= -1e-9
    if np.allclose(p, q, atol=0, rtol=0):
        assert abs(kl) < 1e-9
    else:
        assert kl > 0


@given(stochastic)
def test_prop_kl_zero_on_identity(p):
    assert abs(kl_divergence(p, p)) < 1e-9


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.lists(st.integers(1, 12), min_size=1, max_size=3), st.integers(2, 6))
def test_prop_gradients_match_fd(seed, hidden, C):
    rng = np.random.default_rng(seed)
    d_in = int(rng.integers(2, 7))
    model = random_model(rng, [d_in, *hidden, C])
    x = rng.normal(size=(4, d_in))
    y = rng.integers(0, C, size=4)
    assert_matches_fd(flatten_grads(grad_ce(model, x, y)), model_fd_gradient(lambda m: ce_loss(m, x, y), model))
    teacher = rng.dirichlet(np.ones(C), size=4)
    T = float(rng.choice([0.5, 1.0, 3.0]))
    assert_matches_fd(
        flatten_grads(grad_kl_student(model, x, teacher, T)),
        model_fd_gradient(lambda m: kl_loss(m, x, teacher, T), model),
    )


@given(st.integers(0, 2**32 - 1))
def test_prop_flatten_roundtrip(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, [int(rng.integers(1, 6)), int(rng.integers(1, 6)), int(rng.integers(1, 6))])
    back = unflatten_params(model, flatten_params(model))
    assert flatten_params(back).tobytes() == flatten_params(model).tobytes()
    x = rng.normal(size=(3, model.in_dim))
    assert forward(back, x).tobytes() == forward(model, x).tobytes()
