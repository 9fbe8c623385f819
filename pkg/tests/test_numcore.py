import logging

import numpy as np
import pytest

from rff_distill.core.errors import ShapeError
from rff_distill.numcore import (
    Adam,
    AdamState,
    GradTape,
    Tensor,
    adam_step,
    backward,
    clip_grad_norm,
    finite_difference_check,
    no_grad,
    parameter_check,
)
from rff_distill.numcore import ops

WEIGHTS = np.arange(12.0).reshape(3, 4)
SEEDS = range(20)

# kinks of relu, clip and minimum below; draws are pushed this far away from them
KINKS = np.array([-1.0, 0.0, 0.25, 1.0])
KINK_MARGIN = 1e-3
MASK = np.array([[1.0, 0.0, 2.0, 1.0], [0.0, 2.0, 2.0, 0.0], [1.0, 1.0, 0.0, 2.0]])
RIGHT = np.cos(np.arange(20.0)).reshape(4, 5)
LEFT = np.sin(np.arange(6.0)).reshape(2, 3)
KERNEL = 0.5 * np.cos(np.arange(36.0)).reshape(2, 2, 3, 3)


def test_softmax_of_equal_logits_is_uniform():
    assert np.allclose(ops.softmax(np.array([0.0, 0.0])).data, [0.5, 0.5])


def test_matmul_with_zero_matrix_is_zero():
    out = ops.matmul(np.zeros((2, 3)), np.ones((3, 4)))
    assert out.shape == (2, 4)
    assert np.all(out.data == 0.0)


def test_logsumexp_direct_evaluation():
    assert ops.logsumexp(np.array([2.0, 0.0])).item() == pytest.approx(2.126928, abs=1e-6)


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError) as excinfo:
        ops.matmul(np.zeros((2, 3)), np.zeros((4, 5)))
    assert "(2, 3)" in str(excinfo.value)
    assert "(4, 5)" in str(excinfo.value)
    with pytest.raises(ShapeError):
        ops.add(np.zeros(3), np.zeros(4))


def test_backward_of_sum_is_all_ones():
    x = Tensor(np.random.default_rng(0).normal(size=(3, 2, 4)), requires_grad=True)
    (grad,) = backward(ops.sum(x), [x])
    assert grad.shape == (3, 2, 4)
    assert np.all(grad == 1.0)


def test_backward_of_sum_of_squares():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    backward(ops.square_sum(x))
    assert np.allclose(x.grad, [2.0, 4.0, 6.0])


def test_cross_entropy_gradient_with_uniform_logits():
    classes, target = 5, 2
    logits = Tensor(np.zeros((1, classes)), requires_grad=True)
    backward(ops.cross_entropy(logits, np.array([target])))
    expected = np.full(classes, 1.0 / classes)
    expected[target] -= 1.0
    assert np.allclose(logits.grad[0], expected)


def test_backward_rejects_non_scalar_loss():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        backward(ops.mul(x, 2.0))


def test_shared_subexpression_accumulates_and_each_node_runs_once():
    x = Tensor([3.0], requires_grad=True)
    y = ops.mul(x, x)
    loss = ops.sum(ops.add(y, y))
    tape = GradTape.from_output(loss)
    assert tape.ops() == ["mul", "add", "sum"]
    assert len({id(node) for node in tape.nodes}) == len(tape.nodes)
    backward(loss)
    assert np.allclose(x.grad, [12.0])


def test_no_grad_skips_recording():
    x = Tensor([1.0], requires_grad=True)
    with no_grad():
        y = ops.mul(x, x)
    assert y.node is None
    assert y.requires_grad is False


def test_finite_difference_check_on_sum_of_squares():
    x = Tensor(np.random.default_rng(3).normal(size=(4, 3)))
    assert finite_difference_check(ops.square_sum, x, eps=1e-5) < 1e-6


def test_finite_difference_check_on_constant_function_is_zero():
    x = Tensor(np.ones(4))
    assert finite_difference_check(lambda _: Tensor(7.0), x) == 0.0



def _uniform(seed, shape):
    x = np.random.default_rng(seed).uniform(-2.0, 2.0, size=shape)
    for kink in KINKS:
        near = np.abs(x - kink) < KINK_MARGIN
        x[near] = kink + np.where(x[near] >= kink, KINK_MARGIN, -KINK_MARGIN)
    return x


def _readout(t: Tensor) -> Tensor:
    weights = 1.5 + np.cos(np.arange(t.data.size, dtype=float)).reshape(t.shape)
    return ops.sum(ops.mul(t, weights))


MATRIX_CASES = {
    "tanh": lambda x: ops.sum(ops.tanh(x)),
    "sigmoid": lambda x: ops.sum(ops.sigmoid(x)),
    "softmax": lambda x: ops.sum(ops.mul(ops.softmax(x), WEIGHTS)),
    "log_softmax": lambda x: ops.sum(ops.mul(ops.log_softmax(x), WEIGHTS)),
    "logsumexp": lambda x: ops.sum(ops.logsumexp(x, axis=0)),
    "layer_norm": lambda x: _readout(ops.layer_norm(x, np.full(4, 1.5), np.zeros(4))),
    "cross_entropy": lambda x: ops.cross_entropy(x, np.array([0, 3, 1])),
    "softmax_kl": lambda x: ops.softmax_kl(WEIGHTS / 5.0, x),
    "div_exp": lambda x: ops.sum(ops.div(x, ops.add(ops.exp(x), 1.0))),
    "transpose": lambda x: _readout(ops.transpose(x)),
    "matmul_left": lambda x: _readout(ops.matmul(x, RIGHT)),
    "matmul_right": lambda x: _readout(ops.matmul(LEFT, x)),
    "log": lambda x: _readout(ops.log(ops.add(x, 3.0))),
    "minimum": lambda x: _readout(ops.minimum(x, 0.25)),
    "clip": lambda x: _readout(ops.clip(x, -1.0, 1.0)),
    "relu": lambda x: _readout(ops.relu(x)),
    "concat": lambda x: _readout(ops.concat([x, ops.mul(x, x)], axis=0)),
    "stack": lambda x: _readout(ops.stack([x, ops.tanh(x)], axis=1)),
    "index_slice": lambda x: _readout(ops.index(x, (slice(None), slice(1, 3)))),
    "index_gather": lambda x: _readout(ops.index(x, np.array([0, 2, 2]))),
    "mean_axis": lambda x: _readout(ops.mean(x, axis=1)),
    "reshape": lambda x: _readout(ops.reshape(x, (2, 6))),
    "apply_mask": lambda x: _readout(ops.apply_mask(x, MASK)),
    "dropout": lambda x: _readout(ops.dropout(x, 0.5, np.random.default_rng(0), True)),
}

IMAGE_CASES = {
    "max_pool2d": lambda x: _readout(ops.max_pool2d(x, 2)),
    "avg_pool2d": lambda x: _readout(ops.avg_pool2d(x, 2)),
    "conv2d": lambda x: _readout(ops.conv2d(x, KERNEL, stride=1)),
}


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("name", sorted(MATRIX_CASES))
def test_primitive_gradients_match_central_differences(name, seed):
    x = Tensor(_uniform(seed, (3, 4)))
    assert finite_difference_check(MATRIX_CASES[name], x) < 1e-5


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("name", sorted(IMAGE_CASES))
def test_image_primitive_gradients_match_central_differences(name, seed):
    x = Tensor(_uniform(seed, (1, 2, 4, 4)))
    assert finite_difference_check(IMAGE_CASES[name], x) < 1e-5


@pytest.mark.parametrize("seed", SEEDS)
def test_conv_kernel_and_bias_gradients_match_central_differences(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-2.0, 2.0, size=(2, 2, 5, 5))
    weight = Tensor(rng.uniform(-2.0, 2.0, size=(3, 2, 3, 3)), requires_grad=True)
    bias = Tensor(rng.uniform(-2.0, 2.0, size=3), requires_grad=True)

    def loss() -> Tensor:
        return _readout(ops.conv2d(x, weight, bias, stride=2))

    assert parameter_check(loss, [weight, bias]) < 1e-5


def test_conv_and_pool_gradients_match_central_differences():
    rng = np.random.default_rng(5)
    weight = rng.normal(size=(3, 2, 3, 3))
    readout = np.arange(3 * 2 * 2 * 2, dtype=float).reshape(1, 3, 2, 2) / 10.0

    def loss(x: Tensor) -> Tensor:
        feature = ops.relu(ops.conv2d(x, weight, np.zeros(3), stride=2))
        return ops.sum(ops.mul(ops.avg_pool2d(feature, 2), readout))

    x = Tensor(rng.normal(size=(1, 2, 8, 8)))
    assert finite_difference_check(loss, x) < 1e-5


def test_adam_zero_gradient_leaves_params_and_decays_moments():
    param = Tensor([1.5, -2.0])
    state = AdamState(step=0, m=[np.array([1.0, 1.0])], v=[np.array([1.0, 1.0])])
    adam_step([param], [np.zeros(2)], state, lr=0.1)
    assert np.allclose(state.m[0], [0.9, 0.9])
    assert np.allclose(state.v[0], [0.999, 0.999])
    fresh = Tensor([1.5, -2.0])
    fresh_state = AdamState.for_params([fresh])
    adam_step([fresh], [np.zeros(2)], fresh_state, lr=0.1)
    assert np.array_equal(fresh.data, [1.5, -2.0])


def test_adam_first_step_moves_by_learning_rate():
    param = Tensor([1.0])
    state = AdamState.for_params([param])
    adam_step([param], [np.array([1.0])], state, lr=0.1)
    assert param.data[0] == pytest.approx(0.9, abs=1e-6)
    assert state.step == 1


def test_adam_skips_non_finite_gradient_and_logs(caplog):
    good, bad = Tensor([1.0]), Tensor([2.0], name="bad")
    state = AdamState.for_params([good, bad])
    with caplog.at_level(logging.WARNING):
        adam_step([good, bad], [np.array([1.0]), np.array([np.nan])], state, lr=0.1)
    assert bad.data[0] == 2.0
    assert good.data[0] != 1.0
    assert "non-finite gradient" in caplog.text


def test_adam_runs_are_bit_identical_for_same_seed():
    def run() -> np.ndarray:
        rng = np.random.default_rng(42)
        param = Tensor(rng.normal(size=5), requires_grad=True)
        opt = Adam([param], lr=0.01)
        for _ in range(20):
            opt.zero_grad()
            backward(ops.square_sum(ops.sub(param, rng.normal(size=5))))
            opt.step()
        return param.data

    assert np.array_equal(run(), run())


def test_clip_grad_norm_scales_to_max_norm():
    grads, total = clip_grad_norm([np.array([3.0]), np.array([4.0])], 1.0)
    assert total == pytest.approx(5.0)
    assert np.sqrt(sum(float(g @ g) for g in grads)) == pytest.approx(1.0)
