"""Fused classification: softmax numerics, reduction, weight invariances."""

import math

import numpy as np
import pytest

from spikeshot import (
    EmbeddingMatrix,
    FusionConfig,
    Prediction,
    classify_fused,
    classify_single,
    evaluate,
)
from spikeshot.errors import (
    AllZeroWeights,
    DimensionMismatch,
    EmptyEvaluation,
    LengthMismatch,
)


def test_identity_weights_strong_logit():
    pred = classify_single(np.eye(2), np.array([10.0, 0.0]), logit_scale=1.0)
    # Scalar softmax of (10, 0) computed independently.
    expected0 = 1.0 / (1.0 + math.exp(-10.0))
    assert abs(pred.probabilities[0] - expected0) < 1e-12
    assert abs(pred.probabilities[1] - (1.0 - expected0)) < 1e-12
    assert pred.argmax == 0


def test_zero_logits_give_uniform():
    w = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    pred = classify_single(w, np.zeros(2))
    assert np.allclose(pred.probabilities, 1 / 3)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        classify_single(np.ones((2, 3)), np.ones(2))
    with pytest.raises(DimensionMismatch):
        classify_fused(np.ones((2, 3)), np.ones((2, 2)), FusionConfig.uniform(2))
    with pytest.raises(DimensionMismatch):
        classify_fused(np.ones((2, 3)), np.ones((3, 3)), FusionConfig.uniform(2))


def test_large_logits_stable():
    pred = classify_single(np.eye(2), np.array([1e4, -1e4]), logit_scale=100.0)
    assert np.isfinite(pred.probabilities).all()
    assert pred.probabilities[0] == 1.0


def test_reduction_to_single_is_bit_exact():
    rng = np.random.default_rng(0)
    for _ in range(100):
        k = int(rng.integers(2, 8))
        c = int(rng.integers(2, 16))
        w = rng.standard_normal((k, c))
        f = rng.standard_normal(c)
        scale = float(rng.uniform(0.5, 150))
        single = classify_single(w, f, scale)
        fused = classify_fused(w, f[None, :], FusionConfig(np.array([1.0]), scale))
        assert single.probabilities.tobytes() == fused.probabilities.tobytes()
        assert single.argmax == fused.argmax


def test_identical_rows_half_weights_match_single():
    rng = np.random.default_rng(1)
    w = rng.standard_normal((4, 6))
    f = rng.standard_normal(6)
    fused = classify_fused(w, np.stack([f, f]), FusionConfig(np.array([0.5, 0.5])))
    single = classify_single(w, f)
    assert np.array_equal(fused.probabilities, single.probabilities)


def test_masking_weights_select_one_timestep():
    rng = np.random.default_rng(2)
    w = rng.standard_normal((3, 5))
    stack = rng.standard_normal((2, 5))
    first = classify_fused(w, stack, FusionConfig(np.array([1.0, 0.0])))
    second = classify_fused(w, stack, FusionConfig(np.array([0.0, 1.0])))
    assert np.allclose(first.probabilities, classify_single(w, stack[0]).probabilities)
    assert np.allclose(second.probabilities, classify_single(w, stack[1]).probabilities)


def test_probabilities_sum_to_one():
    rng = np.random.default_rng(3)
    for _ in range(50):
        w = rng.standard_normal((5, 4))
        stack = rng.standard_normal((3, 4))
        pred = classify_fused(w, stack, FusionConfig.uniform(3))
        assert abs(pred.probabilities.sum() - 1.0) < 1e-6


def test_argmax_invariant_under_uniform_alpha_scaling():
    rng = np.random.default_rng(4)
    for _ in range(50):
        w = rng.standard_normal((4, 6))
        stack = rng.standard_normal((3, 6))
        alphas = rng.uniform(0.1, 1.0, size=3)
        factor = float(rng.uniform(0.25, 10.0))
        base = classify_fused(w, stack, FusionConfig(alphas))
        scaled = classify_fused(w, stack, FusionConfig(alphas * factor))
        assert base.argmax == scaled.argmax


def test_softmax_shift_invariance():
    # Adding the same vector to every class row shifts all logits by a
    # constant, which must not change the probabilities beyond 1e-6.
    rng = np.random.default_rng(5)
    w = rng.standard_normal((4, 6))
    f = rng.standard_normal(6)
    shift = rng.standard_normal(6)
    base = classify_single(w, f, logit_scale=1.0)
    shifted = classify_single(w + shift[None, :], f, logit_scale=1.0)
    assert np.abs(base.probabilities - shifted.probabilities).max() < 1e-6


def test_linearity_of_evaluation_orders():
    rng = np.random.default_rng(6)
    for _ in range(30):
        w = rng.standard_normal((5, 8))
        stack = rng.standard_normal((4, 8))
        cfg = FusionConfig(rng.uniform(0, 1, size=4) + 0.01)
        per_step = classify_fused(w, stack, cfg)
        pooled = classify_fused(w, stack, cfg, pooled=True)
        sum_contrib = per_step.contributions.sum(axis=0)
        pooled_logits = w @ (cfg.alphas @ stack)
        assert np.abs(sum_contrib - pooled_logits).max() < 1e-5
        assert np.abs(per_step.probabilities - pooled.probabilities).max() < 1e-6
        assert pooled.contributions is None


def test_all_zero_weights_rejected():
    with pytest.raises(AllZeroWeights):
        FusionConfig(np.zeros(3))


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        FusionConfig(np.array([0.5, -0.1]))


def test_normalize_flag_normalizes_rows():
    w = np.eye(2)
    stack = np.array([[10.0, 0.0]])
    cfg = FusionConfig(np.array([1.0]), logit_scale=1.0, normalize=True)
    pred = classify_fused(w, stack, cfg)
    expected = classify_single(w, np.array([1.0, 0.0]), 1.0)
    assert np.allclose(pred.probabilities, expected.probabilities)


def test_prediction_consistency_enforced():
    with pytest.raises(ValueError):
        Prediction(np.array([0.7, 0.3]), argmax=1)
    with pytest.raises(ValueError):
        Prediction(np.array([0.7, 0.7]), argmax=0)


def test_top_k():
    pred = Prediction(np.array([0.1, 0.5, 0.4]), argmax=1)
    assert pred.top_k(2) == [1, 2]


class TestEvaluate:
    def test_all_correct(self):
        result = evaluate([0, 1, 2], [0, 1, 2], num_classes=3)
        assert result.accuracy == 1.0
        assert np.trace(result.confusion) == 3

    def test_empty_rejected(self):
        with pytest.raises(EmptyEvaluation):
            evaluate([], [])

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            evaluate([0, 1], [0])

    def test_two_of_three_correct(self):
        result = evaluate([0, 1, 1], [0, 1, 0], num_classes=2)
        assert abs(result.accuracy - 2 / 3) < 1e-9

    def test_confusion_rows_are_per_class_counts(self):
        labels = [0, 0, 1, 2, 2, 2]
        preds = [0, 1, 1, 0, 2, 2]
        result = evaluate(preds, labels, num_classes=3)
        assert result.confusion.sum(axis=1).tolist() == [2, 1, 3]
        assert result.confusion[2, 0] == 1
        assert np.isclose(result.per_class_accuracy[2], 2 / 3)

    def test_accepts_prediction_objects(self):
        preds = [
            Prediction(np.array([0.9, 0.1]), 0),
            Prediction(np.array([0.2, 0.8]), 1),
        ]
        result = evaluate(preds, [0, 0])
        assert result.accuracy == 0.5

    def test_absent_class_has_nan_accuracy(self):
        result = evaluate([0], [0], num_classes=2)
        assert np.isnan(result.per_class_accuracy[1])
        assert result.to_dict()["per_class_accuracy"][1] is None
