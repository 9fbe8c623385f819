import math

import numpy as np
import pytest
from pydantic import ValidationError

from rff_distill.core.errors import NonFiniteLossError, ShapeError, exit_code_for
from rff_distill.distill import (
    DistillConfig,
    DistillTrace,
    EpochRecord,
    TrainConfig,
    TrainingSession,
    distill_epoch,
    distill_fixed,
    evaluate,
    evaluate_predictions,
    kl_divergence,
    kl_loss,
    softened_probs,
    total_loss,
    train_supervised,
)
from rff_distill.distill.trace import TRACE_COLUMNS, first_epoch_above, tau_quartile_stats
from rff_distill.features.dataset import DatasetArrays
from rff_distill.networks import StudentConfig, build_student
from rff_distill.numcore import Tensor, backward

TOY_STUDENT = StudentConfig(widths=[6], strides=[1], num_classes=2)


def _toy_split(rng, count):
    labels = np.arange(count) % 2
    signs = np.where(labels == 0, 1.0, -1.0)[:, None, None]
    x = signs + 0.1 * rng.normal(size=(count, 8, 4))
    return x, labels


def _toy_data(seed=0, per_split=(40, 20, 20)):
    rng = np.random.default_rng(seed)
    (x_train, y_train), (x_val, y_val), (x_test, y_test) = (
        _toy_split(rng, count) for count in per_split
    )
    return DatasetArrays(x_train, y_train, x_val, y_val, x_test, y_test, num_classes=2)


def _state_equal(first, second):
    a, b = first.state_dict(), second.state_dict()
    return a.keys() == b.keys() and all(np.array_equal(a[name], b[name]) for name in a)


def test_softened_probs_examples():
    assert np.allclose(softened_probs(np.array([2.0, 0.0]), 2.0).data, [0.731059, 0.268941])
    assert np.allclose(softened_probs(np.array([2.0, 0.0]), 1e6).data, [0.5, 0.5], atol=1e-5)
    plain = softened_probs(np.array([[1.0, 3.0, -2.0]]), 1.0).data
    expected = np.exp([1.0, 3.0, -2.0]) / np.exp([1.0, 3.0, -2.0]).sum()
    assert np.allclose(plain[0], expected)


@pytest.mark.parametrize("tau", [0.0, -1.0])
def test_non_positive_temperature_is_rejected(tau):
    with pytest.raises(ValueError):
        softened_probs(np.zeros(2), tau)
    with pytest.raises(ValueError):
        kl_loss(np.zeros((1, 2)), Tensor(np.zeros((1, 2))), tau)


def test_kl_direct_evaluation():
    # p = softmax([1, 0]), q uniform
    assert kl_divergence(np.array([[1.0, 0.0]]), np.zeros((1, 2)), 1.0) == pytest.approx(
        0.110944, abs=1e-6
    )
    loss = kl_loss(np.array([[1.0, 0.0]]), Tensor(np.zeros((1, 2))), 1.0)
    assert loss.item() == pytest.approx(0.110944, abs=1e-6)


def test_reverse_kl_swaps_the_arguments():
    loss = kl_loss(
        np.array([[1.0, 0.0]]),
        Tensor(np.zeros((1, 2))),
        1.0,
        scale_by_tau_sq=False,
        direction="reverse",
    )
    assert loss.item() == pytest.approx(0.120115, abs=1e-6)


def test_kl_is_zero_for_equal_logits_and_nonnegative_otherwise(rng):
    logits = rng.normal(size=(5, 4))
    assert kl_divergence(logits, logits, 3.0) == pytest.approx(0.0, abs=1e-12)
    for _ in range(10):
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
        assert kl_divergence(a, b, rng.uniform(0.5, 8.0)) >= 0.0


def test_kl_gradient_reaches_student_only_and_vanishes_for_a_clone(rng):
    logits = rng.normal(size=(4, 3))
    teacher = Tensor(logits.copy(), requires_grad=True)
    student = Tensor(logits.copy(), requires_grad=True)
    backward(kl_loss(teacher, student, 1.0))
    assert np.allclose(student.grad, 0.0, atol=1e-15)
    assert teacher.grad is None or not np.any(teacher.grad)


def test_tau_squared_scaling_keeps_gradient_magnitude(rng):
    teacher_logits, student_logits = rng.normal(size=(8, 5)), rng.normal(size=(8, 5))
    norms = []
    for tau in (1.0, 8.0):
        student = Tensor(student_logits.copy(), requires_grad=True)
        backward(kl_loss(teacher_logits, student, tau))
        norms.append(np.linalg.norm(student.grad))
    assert 0.1 <= norms[0] / norms[1] <= 10.0


def test_kl_loss_rejects_mismatched_shapes():
    with pytest.raises(ShapeError):
        kl_loss(np.zeros((2, 3)), Tensor(np.zeros((2, 4))), 1.0)


def test_total_loss_is_a_convex_combination():
    assert total_loss(1.0, 0.5, 0.3).item() == pytest.approx(0.85)
    assert total_loss(1.0, 0.5, 0.0).item() == 1.0
    assert total_loss(1.0, 0.5, 1.0).item() == 0.5
    with pytest.raises(ValueError):
        total_loss(1.0, 0.5, 1.5)


def test_distill_config_keeps_tau_above_floor():
    with pytest.raises(ValidationError):
        DistillConfig(tau=0.01, tau_min=0.05)


def test_zero_epochs_return_initial_weights():
    data = _toy_data()
    model = build_student(TOY_STUDENT, seed=1)
    untouched = build_student(TOY_STUDENT, seed=1)
    trained, trace = train_supervised(model, data, TrainConfig(epochs=0), seed=4)
    assert len(trace) == 0
    assert _state_equal(trained, untouched)


def test_supervised_training_separates_the_toy_task():
    data = _toy_data()
    model = build_student(TOY_STUDENT, seed=2)
    trained, trace = train_supervised(model, data, TrainConfig(epochs=30, lr=0.05), seed=5)
    assert evaluate(trained, data.x_train, data.y_train).accuracy >= 0.99
    assert [record.epoch for record in trace.records] == list(range(1, 31))


def test_same_seed_gives_identical_trace():
    data = _toy_data()
    frames = []
    for _ in range(2):
        model = build_student(TOY_STUDENT, seed=3)
        _, trace = train_supervised(model, data, TrainConfig(epochs=3, batch_size=8), seed=9)
        frames.append(trace.to_frame()[TRACE_COLUMNS[:-1]])
    assert frames[0].equals(frames[1])


def test_beta_zero_epoch_is_bit_identical_to_supervised_epoch():
    data = _toy_data()
    teacher = build_student(TOY_STUDENT, seed=11)
    plain = build_student(TOY_STUDENT, seed=12)
    distilled = build_student(TOY_STUDENT, seed=12)
    cfg = TrainConfig(batch_size=16)
    supervised = TrainingSession(plain, data, cfg, seed=7)
    kd = TrainingSession(distilled, data, cfg, seed=7, teacher=teacher)
    for _ in range(2):
        supervised.run_epoch()
        distill_epoch(kd, tau=4.0, beta=0.0)
    assert _state_equal(plain, distilled)


def test_teacher_clone_at_unit_temperature_keeps_kl_at_zero():
    data = _toy_data()
    teacher = build_student(TOY_STUDENT, seed=13)
    student = build_student(TOY_STUDENT, seed=13)
    cfg = DistillConfig(epochs=2, beta=1.0, tau=1.0, tau_min=0.05)
    _, trace = distill_fixed(student, teacher, data, cfg, seed=1)
    assert np.allclose(trace.column("kl"), 0.0, atol=1e-12)
    assert trace.mode == "fixed_tau_1"


def test_positive_beta_needs_a_teacher():
    session = TrainingSession(build_student(TOY_STUDENT, seed=0), _toy_data(), TrainConfig(), 0)
    with pytest.raises(ValueError):
        session.run_epoch(tau=2.0, beta=0.5)


def test_non_finite_loss_aborts_with_last_good_weights():
    data = _toy_data()
    data.x_train[3, 0, 0] = np.nan
    model = build_student(TOY_STUDENT, seed=6)
    before = model.state_dict()
    session = TrainingSession(model, data, TrainConfig(batch_size=len(data.y_train)), seed=0)
    with pytest.raises(NonFiniteLossError) as excinfo:
        session.run_epoch()
    assert excinfo.value.epoch == 1
    assert all(np.array_equal(excinfo.value.last_good[name], before[name]) for name in before)
    assert exit_code_for(excinfo.value) == 4


def test_training_needs_nonempty_splits():
    data = _toy_data(per_split=(10, 0, 10))
    with pytest.raises(ValueError):
        TrainingSession(build_student(TOY_STUDENT, seed=0), data, TrainConfig(), 0)


def test_perfect_and_constant_predictors():
    labels = np.repeat(np.arange(4), 5)
    perfect = evaluate_predictions(labels, labels, 4)
    assert perfect.accuracy == 1.0
    assert np.array_equal(perfect.confusion, np.eye(4))
    constant = evaluate_predictions(labels, np.zeros_like(labels), 4)
    assert constant.accuracy == pytest.approx(0.25)


def test_confusion_matrix_matches_counting_oracle(rng):
    labels = rng.integers(0, 3, size=60)
    predictions = rng.integers(0, 3, size=60)
    result = evaluate_predictions(labels, predictions, 3)
    tally = np.zeros((3, 3))
    for true, predicted in zip(labels, predictions):
        tally[true, predicted] += 1
    assert np.array_equal(result.counts, tally)
    assert np.allclose(result.confusion.sum(axis=1), 1.0, atol=1e-12)
    assert result.accuracy == np.sum(labels == predictions) / 60


def test_absent_class_keeps_zero_row_and_is_weakest():
    result = evaluate_predictions(np.array([0, 0, 1, 1]), np.array([0, 1, 1, 1]), 3)
    assert not result.confusion[2].any()
    assert result.weakest_classes(2) == [2, 0]
    with pytest.raises(ValueError):
        evaluate_predictions(np.array([]), np.array([]), 3)


def test_confusion_csv_has_labelled_rows(tmp_path):
    result = evaluate_predictions(np.array([0, 1]), np.array([0, 0]), 2)
    path = tmp_path / "confusion.csv"
    result.write_confusion_csv(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "true_label,0,1"
    assert lines[2] == "1,1,0"


def _record(epoch, tau, val_acc=0.5, reward=None):
    return EpochRecord(
        epoch=epoch,
        tau=tau,
        train_acc=0.5,
        val_acc=val_acc,
        ce=1.0,
        kl=0.1,
        reward=reward,
        wall_time=0.3,
    )


def test_trace_rejects_non_increasing_epochs():
    trace = DistillTrace(mode="nkd")
    trace.append(_record(1, 1.0))
    with pytest.raises(ValueError):
        trace.append(_record(1, 1.0))


def test_trace_csv_round_trip_without_wall_time(tmp_path):
    trace = DistillTrace(mode="dynamic")
    trace.append(_record(1, 2.0, reward=0.25))
    trace.append(EpochRecord(2, 3.0, 0.6, 0.7, 0.9, 0.2, None, 0.1, {"sigma": 0.05}))
    path = tmp_path / "trace.csv"
    trace.write_csv(path)
    header = path.read_text(encoding="utf-8").splitlines()[0].split(",")
    assert header[: len(TRACE_COLUMNS)] == TRACE_COLUMNS
    assert "wall_time" not in header
    loaded = DistillTrace.read_csv(path, mode="dynamic")
    assert loaded.records[0].reward == 0.25
    assert loaded.records[1].reward is None
    assert loaded.records[1].controller["sigma"] == 0.05
    assert np.array_equal(loaded.column("tau"), [2.0, 3.0])


def test_tau_quartile_statistics():
    tau = np.array([1.0, 3.0, 5.0, 5.0, 4.0, 4.0, 4.0, 4.0])
    stats = tau_quartile_stats(tau)
    assert stats["tau_first_q_mean"] == 2.0
    assert stats["tau_first_q_std"] == 1.0
    assert stats["tau_last_q_mean"] == 4.0
    assert stats["tau_last_q_std"] == 0.0
    assert tau_quartile_stats(np.array([1.0, 2.0]))["tau_last_q_mean"] is None


def test_summary_reports_first_epoch_above_threshold():
    trace = DistillTrace(mode="fixed_tau_4")
    for epoch, val in enumerate([0.5, 0.8, 0.95, 0.92], start=1):
        trace.append(_record(epoch, 4.0, val_acc=val))
    assert first_epoch_above(trace, 0.9) == 3
    summary = trace.summary(a_base=0.99)
    assert summary["first_epoch_above_a_base"] is None
    assert summary["best_val_acc"] == 0.95
    assert summary["wall_time_total"] == pytest.approx(1.2)
    assert math.isfinite(summary["tau_first_q_mean"])
