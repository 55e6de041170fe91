import numpy as np
import pytest

from app.core.autodiff import Tensor, grad_check, no_grad
from app.core.autodiff import ops
from app.core.dan.complexity import count_multiply_adds, model_complexity
from app.core.dan.config import DanConfig
from app.core.dan.network import (
    PARAMETER_GROUPS,
    DanNetwork,
    dan_forward,
    group_grad_norms,
    init_parameters,
    parameter_group,
)
from app.core.degradation.theta_codec import null_theta
from app.core.errors import ShapeMismatchError


def small(**overrides):
    values = dict(
        sr_scale=2, iterations=2, feature_channels=4, restorer_blocks=1, estimator_blocks=2,
        theta_feature_dim=8, tail_theta_hidden=8,
    )
    values.update(overrides)
    return DanConfig(**values)


def test_named_configs():
    desk = DanConfig.desk()
    assert (desk.sr_scale, desk.feature_channels, desk.restorer_blocks) == (2, 32, 4)
    full = DanConfig.paper(iterations=4)
    assert (full.sr_scale, full.feature_channels, full.restorer_blocks, full.iterations) == (4, 64, 16, 4)
    assert desk.config_hash() == DanConfig.desk().config_hash()
    assert desk.config_hash() != DanConfig.desk(iterations=4).config_hash()
    with pytest.raises(ValueError):
        DanConfig(sr_scale=3)


@pytest.mark.parametrize("sr_scale", [2, 4])
@pytest.mark.parametrize("iterations", [1, 2, 3, 4])
@pytest.mark.parametrize("channels", [4, 8])
def test_output_shapes(sr_scale, iterations, channels, rng):
    config = small(sr_scale=sr_scale, iterations=iterations, feature_channels=channels)
    network = DanNetwork.build(config, seed=1)
    with no_grad():
        out = network.forward(rng.random((2, 3, 16, 16)))
    assert out.sr.shape == (2, 3, 16 * sr_scale, 16 * sr_scale)
    assert out.theta.shape == (2, 36)
    assert [entry.iteration for entry in out.trace] == list(range(1, iterations + 1))
    assert out.iteration_outputs == []


def test_parameter_count_depends_on_config_only():
    config = small()
    assert init_parameters(config, 0).num_parameters() == init_parameters(config, 99).num_parameters()
    groups = {parameter_group(name) for name in init_parameters(config).names()}
    assert groups == set(PARAMETER_GROUPS)


def test_initialization_is_seeded():
    a = init_parameters(small(), 3).state_dict()
    b = init_parameters(small(), 3).state_dict()
    c = init_parameters(small(), 4).state_dict()
    assert all(np.array_equal(a[name], b[name]) for name in a)
    assert not np.array_equal(a["head_image.weight"], c["head_image.weight"])


def test_forward_matches_manual_unfolding(rng):
    network = DanNetwork.build(small(), seed=2)
    y = rng.random((1, 3, 8, 8)).astype(np.float32)
    with no_grad():
        out = network.forward(y)
        f_x0 = network.head_image(Tensor(y))
        f_t0 = network.head_theta(network.initial_theta(1))
        f_x1 = network.restorer(f_x0, f_t0)
        f_t1 = network.estimator(f_x0, f_x0)
        f_x2 = network.restorer(f_x0, f_t1)
        f_t2 = network.estimator(f_x0, f_x1)
        sr, theta = network.tail_image(f_x2), network.tail_theta(f_t2)
    np.testing.assert_array_equal(out.sr.data, sr.data)
    np.testing.assert_array_equal(out.theta.data, theta.data)


def test_sequential_update_estimates_before_restoring(rng):
    network = DanNetwork.build(small(iterations=1, jacobi_update=False), seed=2)
    y = rng.random((1, 3, 8, 8)).astype(np.float32)
    with no_grad():
        out = network.forward(y)
        f_x0 = network.head_image(Tensor(y))
        f_t1 = network.estimator(f_x0, f_x0)
        sr = network.tail_image(network.restorer(f_x0, f_t1))
    np.testing.assert_array_equal(out.sr.data, sr.data)


def test_ground_truth_theta_bypasses_estimator(rng):
    config = small(iterations=3)
    network = DanNetwork.build(config, seed=4)
    y = rng.random((2, 3, 8, 8))
    gt = null_theta()
    with no_grad():
        before = network.forward(y, gt_theta=gt).sr.data.copy()
        for name in network.params.names():
            if parameter_group(name) == "estimator":
                network.params[name].data = network.params[name].data + 0.5
        after = network.forward(y, gt_theta=gt).sr.data
        blind = network.forward(y).sr.data
    np.testing.assert_array_equal(before, after)
    assert not np.array_equal(after, blind)


def test_every_group_receives_gradient(rng):
    network = DanNetwork.build(small(iterations=2), seed=5)
    y = rng.random((2, 3, 8, 8))
    out = network.forward(y)
    loss = ops.add(ops.l1_loss(out.sr, rng.random(out.sr.shape)), ops.l2_loss(out.theta, rng.random((2, 36))))
    loss.backward()
    norms = group_grad_norms(network.params.grads())
    for group in PARAMETER_GROUPS:
        assert norms[group] > 0.0, group


def test_tail_gradients_in_double_precision(rng):
    network = DanNetwork.build(small(sr_scale=4), seed=6, dtype=np.float64)
    assert grad_check(network.tail_image, [rng.standard_normal((1, 4, 3, 3))], rng=rng) <= 1e-4
    assert grad_check(network.tail_theta, [rng.standard_normal((2, 8))], rng=rng) <= 1e-4
    assert grad_check(network.head_theta, [rng.standard_normal((2, 36))], rng=rng) <= 1e-4


def test_zero_init_tails_start_from_zero(rng):
    network = DanNetwork.build(small(zero_init_tails=True), seed=7)
    with no_grad():
        out = network.forward(rng.random((1, 3, 8, 8)))
    assert not out.sr.data.any()
    assert not out.theta.data.any()


def test_frozen_initial_theta():
    store = init_parameters(small(learnable_init=False))
    assert not store.is_trainable("theta0")
    assert not store["theta0"].data.any()


def test_decode_every_iteration_and_calibrated_tails(rng):
    network = DanNetwork.build(small(iterations=3, calibrated_tails=True), seed=8)
    assert network.has_calibrated_tails(3) and not network.has_calibrated_tails(4)
    with no_grad():
        out = network.forward(rng.random((1, 3, 8, 8)), decode_every_iteration=True)
        shared = network.forward(rng.random((1, 3, 8, 8)), decode_every_iteration=True, use_calibrated_tails=False)
    assert len(out.iteration_outputs) == 3 and len(shared.iteration_outputs) == 3
    assert all(entry.sr is not None and entry.theta.shape == (1, 36) for entry in out.trace)
    np.testing.assert_array_equal(out.iteration_outputs[-1][0].data, out.sr.data)


def test_image_space_iteration_runs_tails_every_step(rng):
    network = DanNetwork.build(small(sr_scale=4, iterations=3, feature_space_iteration=False), seed=9)
    with no_grad():
        out = network.forward(rng.random((1, 3, 8, 8)))
    assert out.sr.shape == (1, 3, 32, 32)


def test_functional_forward_and_shorter_depth(rng):
    config = small(iterations=3)
    params = init_parameters(config, 10)
    y = rng.random((1, 3, 8, 8))
    with no_grad():
        functional = dan_forward(y, config, params, iterations=1)
        method = DanNetwork(config, params).forward(y, iterations=1)
    np.testing.assert_array_equal(functional.sr.data, method.sr.data)
    assert len(method.trace) == 1


def test_input_validation(rng):
    network = DanNetwork.build(small(), seed=0)
    with pytest.raises(ShapeMismatchError):
        network.forward(rng.random((1, 3, 3, 3)))
    with pytest.raises(ShapeMismatchError):
        network.forward(rng.random((1, 1, 8, 8)))
    with pytest.raises(ShapeMismatchError):
        network.forward(rng.random((1, 3, 8, 8)), iterations=0)


def test_group_norms_and_names():
    assert parameter_group("tail_image@it2.out.weight") == "tail_image"
    assert parameter_group("restorer.block0.conv1.bias") == "restorer"
    assert group_grad_norms({"a.x": np.array([3.0]), "a.y": np.array([4.0])}) == {"a": 5.0}


def test_complexity_report():
    config = small()
    report = model_complexity(config, 16, 16, runs=2)
    assert report.parameters == init_parameters(config).num_parameters()
    assert report.latency_runs == 2 and report.mean_latency_s > 0
    ratio = count_multiply_adds(config, 32, 32) / count_multiply_adds(config, 16, 16)
    assert 3.9 < ratio <= 4.0
    deeper = count_multiply_adds(small(iterations=4), 16, 16)
    assert deeper > report.multiply_adds
    assert model_complexity(config, 16, 16).mean_latency_s is None
