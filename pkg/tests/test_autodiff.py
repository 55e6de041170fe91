import numpy as np
import pytest

from app.core.autodiff import Adam, AdamState, ParameterStore, Tensor, adam_step, grad_check, lr_schedule, no_grad
from app.core.autodiff import ops
from app.core.errors import NonFiniteError, ParameterDomainError, ShapeMismatchError

TOLERANCE = 1e-4


def away_from_zero(rng, shape):
    return rng.uniform(0.1, 1.0, size=shape) * rng.choice([-1.0, 1.0], size=shape)


@pytest.mark.parametrize("padding", ["zero", "reflect"])
@pytest.mark.parametrize("k,stride", [(1, 1), (3, 1), (3, 2), (5, 1)])
def test_conv2d_gradients(padding, k, stride, rng):
    inputs = [rng.standard_normal((2, 3, 6, 7)), rng.standard_normal((4, 3, k, k)), rng.standard_normal(4)]
    op = lambda x, w, b: ops.conv2d(x, w, b, stride=stride, padding=padding)
    assert grad_check(op, inputs, rng=rng) <= TOLERANCE


@pytest.mark.parametrize(
    "name,op,factory",
    [
        ("fully_connected", ops.fully_connected, lambda r: [r.standard_normal((3, 5)), r.standard_normal((4, 5)), r.standard_normal(4)]),
        ("leaky_relu", lambda x: ops.leaky_relu(x, 0.2), lambda r: [away_from_zero(r, (2, 3, 4, 4))]),
        ("relu", ops.relu, lambda r: [away_from_zero(r, (2, 3, 4, 4))]),
        ("add", ops.add, lambda r: [r.standard_normal((3, 4)), r.standard_normal((3, 4))]),
        ("scale", lambda x: ops.scale(x, -2.5), lambda r: [r.standard_normal((3, 4))]),
        ("concat_channels", ops.concat_channels, lambda r: [r.standard_normal((2, 2, 3, 3)), r.standard_normal((2, 3, 3, 3))]),
        ("broadcast_spatial", lambda x: ops.broadcast_spatial(x, 4, 3), lambda r: [r.standard_normal((2, 5))]),
        ("broadcast_batch", lambda x: ops.broadcast_batch(x, 3), lambda r: [r.standard_normal(6)]),
        ("pixel_shuffle", lambda x: ops.pixel_shuffle(x, 2), lambda r: [r.standard_normal((2, 8, 3, 2))]),
        ("avg_pool", lambda x: ops.avg_pool(x, 2), lambda r: [r.standard_normal((2, 3, 5, 4))]),
        ("global_avg_pool", ops.global_avg_pool, lambda r: [r.standard_normal((2, 3, 4, 5))]),
        ("select_features", lambda x: ops.select_features(x, [3, 0, 0, 2]), lambda r: [r.standard_normal((3, 4))]),
    ],
)
def test_op_gradients(name, op, factory, rng):
    assert grad_check(op, factory(rng), rng=rng) <= TOLERANCE, name


def test_loss_gradients(rng):
    target = rng.standard_normal((3, 5))
    pred = target + away_from_zero(rng, (3, 5))
    assert grad_check(lambda x: ops.l1_loss(x, target), [pred], rng=rng) <= TOLERANCE
    assert grad_check(lambda x: ops.l2_loss(x, target), [pred], rng=rng) <= TOLERANCE
    labels = rng.integers(0, 2, size=(3, 5)).astype(np.float64)
    assert grad_check(lambda x: ops.sigmoid_bce_loss(x, labels), [rng.standard_normal((3, 5))], rng=rng) <= TOLERANCE


def test_grad_check_catches_wrong_backward(rng):
    def doubled_but_claims_identity(x):
        return Tensor.from_op("bad", x.data * 2.0, (x,), lambda grad: (grad,))

    assert grad_check(doubled_but_claims_identity, [rng.standard_normal((4, 4))], rng=rng) > 1e-2


@pytest.mark.parametrize(
    "factor,wrong_factor,expected_error",
    [(1e-3, 5e-4, 0.5), (1e-6, 0.0, 1.0)],
)
def test_grad_check_catches_wrong_small_gradients(factor, wrong_factor, expected_error, rng):
    def wrong_backward(x):
        return Tensor.from_op("bad", x.data * factor, (x,), lambda grad: (grad * wrong_factor,))

    error = grad_check(wrong_backward, [rng.standard_normal((4, 4))], rng=rng)
    assert error > 1e-2
    assert error == pytest.approx(expected_error, rel=1e-3)


@pytest.mark.parametrize("factor", [1e-3, 1e-6])
def test_grad_check_accepts_correct_small_gradients(factor, rng):
    assert grad_check(lambda x: ops.scale(x, factor), [rng.standard_normal((4, 4))], rng=rng) <= TOLERANCE


def test_loss_values():
    pred = Tensor(np.array([[0.5, 0.0]]))
    target = np.array([[0.0, 0.5]])
    assert ops.l2_loss(pred, target).item() == pytest.approx(0.25)
    assert ops.l1_loss(pred, target).item() == pytest.approx(0.5)
    assert ops.sigmoid_bce_loss(Tensor(np.zeros((1, 2))), np.array([[0.0, 1.0]])).item() == pytest.approx(np.log(2.0))
    with pytest.raises(ShapeMismatchError):
        ops.l1_loss(pred, np.zeros((2, 1)))


def test_conv2d_zero_padding_counts_taps():
    out = ops.conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))))
    np.testing.assert_allclose(out.data[0, 0], [[4, 6, 4], [6, 9, 6], [4, 6, 4]])
    reflect = ops.conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))), padding="reflect")
    np.testing.assert_allclose(reflect.data, 9.0)


def test_conv2d_shapes_and_errors():
    x = Tensor(np.zeros((2, 3, 7, 5)))
    assert ops.conv2d(x, Tensor(np.zeros((4, 3, 3, 3))), stride=2).shape == (2, 4, 4, 3)
    with pytest.raises(ShapeMismatchError):
        ops.conv2d(x, Tensor(np.zeros((4, 2, 3, 3))))
    with pytest.raises(ParameterDomainError):
        ops.conv2d(x, Tensor(np.zeros((4, 3, 2, 2))))
    with pytest.raises(ShapeMismatchError):
        ops.conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 5, 5))), padding="reflect")


def test_reflect_pad_adjoint_is_transpose(rng):
    x = rng.standard_normal((2, 3, 5, 6))
    y = rng.standard_normal((2, 3, 9, 10))
    lhs = np.sum(ops.pad2d(x, 2, "reflect") * y)
    rhs = np.sum(x * ops.pad2d_adjoint(y, 2, "reflect", 5, 6))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_pixel_shuffle_layout():
    x = Tensor(np.arange(4, dtype=np.float64).reshape(1, 4, 1, 1))
    np.testing.assert_array_equal(ops.pixel_shuffle(x, 2).data[0, 0], [[0, 1], [2, 3]])
    with pytest.raises(ShapeMismatchError):
        ops.pixel_shuffle(Tensor(np.zeros((1, 3, 2, 2))), 2)


def test_avg_pool_drops_trailing_rows():
    x = Tensor(np.arange(15, dtype=np.float64).reshape(1, 1, 3, 5))
    np.testing.assert_allclose(ops.avg_pool(x, 2).data[0, 0], [[3.0, 5.0]])


def test_backward_accumulates_shared_inputs():
    x = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    loss = ops.l2_loss(ops.add(x, x), np.zeros(2))
    loss.backward()
    # d/dx mean((2x)^2) = 8x / 2
    np.testing.assert_allclose(x.grad, [4.0, -8.0])


def test_backward_requires_scalar_or_gradient():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ShapeMismatchError):
        ops.scale(x, 2.0).backward()
    with pytest.raises(RuntimeError):
        Tensor(np.ones(1)).backward()


def test_no_grad_skips_recording():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = ops.scale(x, 3.0)
    assert not y.requires_grad
    assert ops.scale(x, 3.0).requires_grad


def test_non_finite_results_raise():
    with pytest.raises(NonFiniteError):
        ops.scale(Tensor(np.array([1e308])), 1e10)


def test_parameter_store_state_and_trainability():
    store = ParameterStore(np.float64)
    store.add("a.weight", np.ones((2, 3)))
    store.add("b.bias", np.zeros(4), trainable=False)
    assert store.num_parameters() == 10 and store.num_parameters(trainable_only=True) == 6
    assert store.trainable_names() == ["a.weight"]
    assert list(store.grads()) == ["a.weight"]
    with pytest.raises(KeyError):
        store.add("a.weight", np.ones(1))

    clone = store.clone()
    clone["a.weight"].data[0, 0] = 5.0
    assert store["a.weight"].data[0, 0] == 1.0
    assert not clone.is_trainable("b.bias")

    with pytest.raises(KeyError):
        store.load_state_dict({"a.weight": np.ones((2, 3))})
    with pytest.raises(ShapeMismatchError):
        store.load_state_dict({"a.weight": np.ones((3, 2)), "b.bias": np.zeros(4)})
    store.load_state_dict({"a.weight": np.full((2, 3), 2.0)}, strict=False)
    assert store["a.weight"].data.sum() == 12.0


def test_first_adam_step_moves_by_learning_rate():
    store = ParameterStore(np.float64)
    store.add("w", np.array([1.0, -3.0]))
    state = AdamState(lr=0.1)
    adam_step(store, {"w": np.array([2.0, -0.5])}, state)
    np.testing.assert_allclose(store["w"].data, [0.9, -2.9], atol=1e-7)
    assert state.step == 1


def test_adam_minimizes_quadratic():
    store = ParameterStore(np.float64)
    store.add("w", np.zeros(3))
    optimizer = Adam(store, lr=0.05)
    target = np.array([3.0, -1.0, 0.5])
    for step in range(1000):
        optimizer.zero_grad()
        ops.l2_loss(store["w"], target).backward()
        optimizer.step(lr=lr_schedule(step, 0.05, 200))
    np.testing.assert_allclose(store["w"].data, target, atol=0.05)


def test_adam_rejects_mismatched_gradient():
    store = ParameterStore(np.float64)
    store.add("w", np.zeros(3))
    with pytest.raises(ShapeMismatchError):
        adam_step(store, {"w": np.zeros(2)}, AdamState())


def test_lr_schedule_halves():
    assert lr_schedule(0, 1e-3, 100) == 1e-3
    assert lr_schedule(99, 1e-3, 100) == 1e-3
    assert lr_schedule(100, 1e-3, 100) == 5e-4
    assert lr_schedule(250, 1e-3, 100) == 2.5e-4
    with pytest.raises(ParameterDomainError):
        lr_schedule(1, 1e-3, 0)
