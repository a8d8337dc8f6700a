"""Classification from embedding dot products.

Single-frame scoring is ``p = softmax(scale * W @ f)`` over the K class rows
of the text matrix W; a multi-timestep stack is fused by the weighted sum
``p = softmax(scale * sum_i alpha_i * W @ f_i)``. Softmax is always computed
with max-subtraction, and all products run in float64 so that the T=1,
alpha=[1] case reduces to the single-frame path bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embeddings import EmbeddingMatrix
from .errors import AllZeroWeights, DimensionMismatch, EmptyEvaluation, LengthMismatch


@dataclass(frozen=True)
class FusionConfig:
    """Per-timestep weights, softmax temperature, and a normalization switch.

    ``normalize`` re-normalizes visual rows right before fusing; it defaults
    off because the embedding gateway already normalizes at load time.
    """

    alphas: np.ndarray
    logit_scale: float = 100.0
    normalize: bool = False

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=np.float64)
        if alphas.ndim != 1 or alphas.size == 0:
            raise ValueError("alphas must be a non-empty 1-D sequence")
        if (alphas < 0).any():
            raise ValueError("alphas must be non-negative")
        if not (alphas > 0).any():
            raise AllZeroWeights("at least one fusion weight must be positive")
        if not self.logit_scale > 0:
            raise ValueError("logit_scale must be positive")
        object.__setattr__(self, "alphas", alphas)

    @classmethod
    def uniform(cls, timesteps: int, logit_scale: float = 100.0, normalize: bool = False):
        return cls(np.full(timesteps, 1.0 / timesteps), logit_scale, normalize)

    @property
    def timesteps(self) -> int:
        return int(self.alphas.size)


@dataclass(frozen=True)
class Prediction:
    """Class probabilities plus per-timestep logit contributions.

    ``contributions[i] = alpha_i * (W @ f_i)`` before the temperature is
    applied; it is None when the pooled evaluation order was used.
    """

    probabilities: np.ndarray
    argmax: int
    contributions: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        if abs(p.sum() - 1.0) > 1e-6 or (p < 0).any():
            raise ValueError("probabilities must be non-negative and sum to 1")
        if self.argmax != int(np.argmax(p)):
            raise ValueError("argmax inconsistent with probabilities")
        object.__setattr__(self, "probabilities", p)

    def top_k(self, k: int) -> list[int]:
        order = np.argsort(-self.probabilities, kind="stable")
        return [int(i) for i in order[:k]]


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def _as_weight_matrix(weights: EmbeddingMatrix | np.ndarray) -> np.ndarray:
    values = weights.values if isinstance(weights, EmbeddingMatrix) else np.asarray(weights)
    if values.ndim != 2:
        raise DimensionMismatch("class-weight matrix must be 2-D")
    return values.astype(np.float64)


def classify_single(
    weights: EmbeddingMatrix | np.ndarray,
    feature: np.ndarray,
    logit_scale: float = 100.0,
) -> Prediction:
    """Score one feature vector against K class rows: softmax(scale * W @ f)."""
    w = _as_weight_matrix(weights)
    f = np.asarray(feature, dtype=np.float64).reshape(-1)
    if f.size != w.shape[1]:
        raise DimensionMismatch(f"feature length {f.size} != embedding dim {w.shape[1]}")
    contributions = (w @ f)[None, :]
    logits = logit_scale * contributions.sum(axis=0)
    probabilities = _softmax(logits)
    return Prediction(probabilities, int(np.argmax(probabilities)), contributions)


def classify_fused(
    weights: EmbeddingMatrix | np.ndarray,
    features: EmbeddingMatrix | np.ndarray,
    cfg: FusionConfig,
    *,
    pooled: bool = False,
) -> Prediction:
    """Fuse a T x C feature stack: softmax(scale * sum_i alpha_i * W @ f_i).

    ``pooled=True`` evaluates the algebraically equal order
    ``W @ (sum_i alpha_i f_i)`` (one matrix product; no per-timestep
    diagnostics). With T=1 and alpha=[1] the default order reproduces
    :func:`classify_single` bit-for-bit.
    """
    w = _as_weight_matrix(weights)
    f = features.values if isinstance(features, EmbeddingMatrix) else np.asarray(features)
    if f.ndim != 2:
        raise DimensionMismatch("features must be a T x C matrix")
    f = f.astype(np.float64)
    if f.shape[0] != cfg.timesteps:
        raise DimensionMismatch(
            f"{f.shape[0]} feature rows but {cfg.timesteps} fusion weights"
        )
    if f.shape[1] != w.shape[1]:
        raise DimensionMismatch(
            f"feature dim {f.shape[1]} != embedding dim {w.shape[1]}"
        )
    if not (cfg.alphas > 0).any():
        raise AllZeroWeights("at least one fusion weight must be positive")

    if cfg.normalize:
        norms = np.linalg.norm(f, axis=1, keepdims=True)
        if (norms == 0).any():
            raise DimensionMismatch("cannot normalize an all-zero feature row")
        f = f / norms

    if pooled:
        logits = cfg.logit_scale * (w @ (cfg.alphas @ f))
        probabilities = _softmax(logits)
        return Prediction(probabilities, int(np.argmax(probabilities)), None)

    # Row-by-row gemv, not one gemm: keeps the T=1 path bit-identical to
    # classify_single (summation order inside BLAS differs between the two).
    contributions = np.stack([cfg.alphas[i] * (w @ f[i]) for i in range(cfg.timesteps)])
    logits = cfg.logit_scale * contributions.sum(axis=0)
    probabilities = _softmax(logits)
    return Prediction(probabilities, int(np.argmax(probabilities)), contributions)


@dataclass
class EvaluationResult:
    """Accuracy plus a K x K confusion matrix (rows: true, cols: predicted)."""

    accuracy: float
    confusion: np.ndarray
    per_class_accuracy: np.ndarray

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class_accuracy": [
                None if np.isnan(a) else float(a) for a in self.per_class_accuracy
            ],
            "confusion": self.confusion.tolist(),
        }


def evaluate(
    predictions: Sequence[Prediction] | Sequence[int],
    labels: Sequence[int],
    num_classes: int | None = None,
) -> EvaluationResult:
    """Accuracy and per-class confusion counts for paired predictions/labels."""
    if len(predictions) != len(labels):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(labels)} labels")
    if len(predictions) == 0:
        raise EmptyEvaluation("accuracy is undefined with no samples")

    chosen = [p.argmax if isinstance(p, Prediction) else int(p) for p in predictions]
    if num_classes is None:
        sizes = [
            p.probabilities.size for p in predictions if isinstance(p, Prediction)
        ]
        num_classes = sizes[0] if sizes else max(max(chosen), max(labels)) + 1
    k = int(num_classes)

    confusion = np.zeros((k, k), dtype=np.int64)
    for pred, true in zip(chosen, labels):
        if not (0 <= true < k and 0 <= pred < k):
            raise LengthMismatch(f"label or prediction outside 0..{k - 1}")
        confusion[true, pred] += 1

    totals = confusion.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(totals > 0, np.diag(confusion) / totals, np.nan)
    accuracy = float(np.trace(confusion) / confusion.sum())
    return EvaluationResult(accuracy, confusion, per_class)
