"""Spiking inter-timestep adapter and its surrogate-gradient trainer.

A frozen T x C feature stack is refined one timestep at a time by a
leaky integrate-and-fire bottleneck whose membrane state carries information
across timesteps:

    h_i   = W_down @ f_i + b_down
    u'_i  = leak * u_{i-1} + h_i            (pre-reset membrane)
    s_i   = 1 where u'_i >= threshold       (binary spikes)
    u_i   = u'_i - threshold * s_i          (soft reset; hard: u'_i * (1 - s_i))
    f^_i  = (1 - beta) * f_i + beta * (W_up @ s_i + b_up)

Training backpropagates through time with the rectangular surrogate
d s / d u' = 1/a on |u' - threshold| <= a/2, zero elsewhere. A relaxed
forward mode replaces the step with clip((u' - threshold)/a + 0.5, 0, 1)
so the analytic gradients can be checked against finite differences.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .embeddings import EmbeddingMatrix, EmbeddingSetManifest
from .errors import (
    BadMagic,
    DimensionMismatch,
    InsufficientSamples,
    MissingForwardRecord,
    NonFiniteLoss,
    NonFiniteState,
)
from .fusion import FusionConfig, classify_fused

logger = logging.getLogger(__name__)

RESET_SOFT = "soft"
RESET_HARD = "hard"

NCAD_MAGIC = b"NCAD"
NCAD_VERSION = 1
_NCAD_HEADER = struct.Struct("<4sIIIffffB")


@dataclass(frozen=True)
class LifParams:
    """Leaky integrate-and-fire constants."""

    leak: float = 0.5
    threshold: float = 1.0
    surrogate_width: float = 1.0
    reset: str = RESET_SOFT

    def __post_init__(self):
        if not 0 < self.leak <= 1:
            raise ValueError("leak must be in (0, 1]")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        if not self.surrogate_width > 0:
            raise ValueError("surrogate_width must be positive")
        if self.reset not in (RESET_SOFT, RESET_HARD):
            raise ValueError(f"reset must be '{RESET_SOFT}' or '{RESET_HARD}'")


@dataclass
class LifState:
    """Membrane potentials and the spikes emitted at the previous step."""

    membrane: np.ndarray
    last_spikes: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "LifState":
        return cls(np.zeros(n), np.zeros(n))


def lif_step(
    state: LifState, input_current: np.ndarray, params: LifParams
) -> tuple[LifState, np.ndarray]:
    """Advance the neuron layer one step; returns (new state, binary spikes)."""
    u = params.leak * state.membrane + np.asarray(input_current, dtype=np.float64)
    if not np.isfinite(u).all():
        raise NonFiniteState("membrane potential is NaN or Inf")
    spikes = (u >= params.threshold).astype(np.float64)
    if params.reset == RESET_SOFT:
        u_post = u - params.threshold * spikes
    else:
        u_post = u * (1.0 - spikes)
    return LifState(u_post, spikes), spikes


@dataclass
class AdapterParams:
    """Bottleneck weights, residual mix, and neuron constants.

    Shapes: ``w_down`` is H_b x C, ``w_up`` is C x H_b with biases to match;
    ``residual_ratio`` (beta) blends the refined features into the originals.
    """

    w_down: np.ndarray
    b_down: np.ndarray
    w_up: np.ndarray
    b_up: np.ndarray
    residual_ratio: float = 0.2
    lif: LifParams = field(default_factory=LifParams)

    def __post_init__(self):
        self.w_down = np.asarray(self.w_down, dtype=np.float64)
        self.b_down = np.asarray(self.b_down, dtype=np.float64)
        self.w_up = np.asarray(self.w_up, dtype=np.float64)
        self.b_up = np.asarray(self.b_up, dtype=np.float64)
        hb, c = self.w_down.shape
        if self.w_up.shape != (c, hb):
            raise DimensionMismatch(
                f"w_up shape {self.w_up.shape} does not mirror w_down {self.w_down.shape}"
            )
        if self.b_down.shape != (hb,) or self.b_up.shape != (c,):
            raise DimensionMismatch("bias shapes do not match the weight matrices")
        if not 0 <= self.residual_ratio <= 1:
            raise ValueError("residual_ratio must be in [0, 1]")

    @property
    def dim(self) -> int:
        return self.w_down.shape[1]

    @property
    def bottleneck(self) -> int:
        return self.w_down.shape[0]

    def copy(self) -> "AdapterParams":
        return AdapterParams(
            self.w_down.copy(),
            self.b_down.copy(),
            self.w_up.copy(),
            self.b_up.copy(),
            self.residual_ratio,
            self.lif,
        )

    @classmethod
    def initialize(
        cls,
        dim: int,
        bottleneck: int | None = None,
        residual_ratio: float = 0.2,
        lif: LifParams | None = None,
        seed: int = 0,
    ) -> "AdapterParams":
        """Uniform +-1/sqrt(fan_in) weights, zero biases, seeded."""
        hb = max(1, dim // 4) if bottleneck is None else bottleneck
        rng = np.random.default_rng(seed)
        bound_down = 1.0 / np.sqrt(dim)
        bound_up = 1.0 / np.sqrt(hb)
        return cls(
            rng.uniform(-bound_down, bound_down, size=(hb, dim)),
            np.zeros(hb),
            rng.uniform(-bound_up, bound_up, size=(dim, hb)),
            np.zeros(dim),
            residual_ratio,
            lif if lif is not None else LifParams(),
        )


@dataclass
class ForwardRecord:
    """Per-timestep tape retained for backpropagation through time."""

    inputs: np.ndarray  # T x C
    pre_reset: np.ndarray  # T x H_b membrane before reset
    spikes: np.ndarray  # T x H_b (binary or pseudo)
    relaxed: bool


def _pseudo_spike(u: np.ndarray, params: LifParams) -> np.ndarray:
    return np.clip((u - params.threshold) / params.surrogate_width + 0.5, 0.0, 1.0)


def _forward(features: np.ndarray, params: AdapterParams, relaxed: bool):
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or f.shape[1] != params.dim:
        raise DimensionMismatch(
            f"features must be T x {params.dim}, got {f.shape}"
        )
    T = f.shape[0]
    beta = params.residual_ratio
    lif = params.lif

    out = np.empty_like(f)
    pre_reset = np.empty((T, params.bottleneck))
    spikes = np.empty((T, params.bottleneck))
    u = np.zeros(params.bottleneck)
    for i in range(T):
        h = params.w_down @ f[i] + params.b_down
        u = lif.leak * u + h
        if not np.isfinite(u).all():
            raise NonFiniteState("membrane potential is NaN or Inf")
        pre_reset[i] = u
        if relaxed:
            s = _pseudo_spike(u, lif)
        else:
            s = (u >= lif.threshold).astype(np.float64)
        spikes[i] = s
        u = u - lif.threshold * s if lif.reset == RESET_SOFT else u * (1.0 - s)
        out[i] = (1.0 - beta) * f[i] + beta * (params.w_up @ s + params.b_up)

    record = ForwardRecord(f.copy(), pre_reset, spikes, relaxed)
    return out, record


def adapter_forward(
    features: np.ndarray, params: AdapterParams, *, return_record: bool = False
):
    """Refine a T x C stack in timestep order with binary spikes."""
    out, record = _forward(features, params, relaxed=False)
    return (out, record) if return_record else out


def adapter_forward_relaxed(
    features: np.ndarray, params: AdapterParams, *, return_record: bool = False
):
    """Differentiable relaxation: continuous pseudo-spikes replace the step."""
    out, record = _forward(features, params, relaxed=True)
    return (out, record) if return_record else out


@dataclass
class AdapterGrads:
    """Loss gradients for the four trainable weight blocks."""

    w_down: np.ndarray
    b_down: np.ndarray
    w_up: np.ndarray
    b_up: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [self.w_down, self.b_down, self.w_up, self.b_up]


def adapter_backward(
    record: ForwardRecord | None,
    params: AdapterParams,
    upstream: np.ndarray,
    *,
    detach_reset: bool = False,
) -> AdapterGrads:
    """Backpropagate dL/dF^ through time over the recorded forward pass.

    The spike derivative is the rectangular surrogate 1/a on
    |u' - threshold| <= a/2 (in relaxed mode this is the exact clip
    derivative away from the kinks). Reset-path gradients flow through
    unless ``detach_reset`` is set.
    """
    if record is None:
        raise MissingForwardRecord("run adapter_forward(..., return_record=True) first")
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != record.inputs.shape:
        raise DimensionMismatch(
            f"upstream gradient shape {g.shape} != features shape {record.inputs.shape}"
        )
    T = record.inputs.shape[0]
    beta = params.residual_ratio
    lif = params.lif

    gw_down = np.zeros_like(params.w_down)
    gb_down = np.zeros_like(params.b_down)
    gw_up = np.zeros_like(params.w_up)
    gb_up = np.zeros_like(params.b_up)

    du_post = np.zeros(params.bottleneck)  # dL/du_i via the recurrence
    for i in reversed(range(T)):
        u_pre = record.pre_reset[i]
        s = record.spikes[i]
        dg = beta * g[i]
        gw_up += np.outer(dg, s)
        gb_up += dg
        ds = params.w_up.T @ dg
        if lif.reset == RESET_SOFT:
            du_direct = du_post
            ds_reset = -lif.threshold * du_post
        else:
            du_direct = du_post * (1.0 - s)
            ds_reset = -u_pre * du_post
        if not detach_reset:
            ds = ds + ds_reset
        surrogate = (
            np.abs(u_pre - lif.threshold) <= lif.surrogate_width / 2
        ) / lif.surrogate_width
        du_pre = du_direct + ds * surrogate
        gw_down += np.outer(du_pre, record.inputs[i])
        gb_down += du_pre
        du_post = lif.leak * du_pre

    return AdapterGrads(gw_down, gb_down, gw_up, gb_up)


def write_ncad(params: AdapterParams) -> bytes:
    """Encode a checkpoint: NCAD header then W_down, b_down, W_up, b_up as f32."""
    lif = params.lif
    header = _NCAD_HEADER.pack(
        NCAD_MAGIC,
        NCAD_VERSION,
        params.dim,
        params.bottleneck,
        params.residual_ratio,
        lif.leak,
        lif.threshold,
        lif.surrogate_width,
        0 if lif.reset == RESET_SOFT else 1,
    )
    blocks = b"".join(
        np.asarray(a, dtype="<f4").tobytes()
        for a in (params.w_down, params.b_down, params.w_up, params.b_up)
    )
    return header + blocks


def read_ncad(data: bytes) -> AdapterParams:
    """Decode an NCAD checkpoint; inverse of :func:`write_ncad`."""
    if len(data) < _NCAD_HEADER.size:
        raise BadMagic("shorter than an NCAD header")
    magic, version, c, hb, beta, leak, threshold, width, reset_code = _NCAD_HEADER.unpack_from(
        data
    )
    if magic != NCAD_MAGIC:
        raise BadMagic(f"expected magic {NCAD_MAGIC!r}, got {magic!r}")
    if version != NCAD_VERSION:
        raise BadMagic(f"unsupported NCAD version {version}")
    if reset_code not in (0, 1):
        raise BadMagic(f"unknown reset code {reset_code}")
    n_values = hb * c + hb + c * hb + c
    expected = _NCAD_HEADER.size + 4 * n_values
    if len(data) != expected:
        raise DimensionMismatch(
            f"NCAD declares {expected} bytes for C={c} H_b={hb}, file has {len(data)}"
        )
    flat = np.frombuffer(data, dtype="<f4", count=n_values, offset=_NCAD_HEADER.size)
    flat = flat.astype(np.float64)
    o1 = hb * c
    o2 = o1 + hb
    o3 = o2 + c * hb
    return AdapterParams(
        flat[:o1].reshape(hb, c),
        flat[o1:o2],
        flat[o2:o3].reshape(c, hb),
        flat[o3:],
        float(np.float32(beta)),
        LifParams(
            float(np.float32(leak)),
            float(np.float32(threshold)),
            float(np.float32(width)),
            RESET_SOFT if reset_code == 0 else RESET_HARD,
        ),
    )


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters for the few-shot adapter trainer."""

    learning_rate: float = 1e-3
    epochs: int = 200
    patience: int = 20
    seed: int = 0
    bottleneck: int | None = None
    residual_ratio: float = 0.2
    lif: LifParams = field(default_factory=LifParams)
    detach_reset: bool = False
    logit_scale: float = 100.0
    alphas: tuple[float, ...] | None = None  # None -> uniform 1/T
    val_per_class: int | None = None  # None -> up to `shots` leftover samples per class

    def fusion_config(self, timesteps: int) -> FusionConfig:
        if self.alphas is None:
            return FusionConfig.uniform(timesteps, self.logit_scale)
        return FusionConfig(np.asarray(self.alphas), self.logit_scale)


class _Adam:
    """Adam with bias correction, matched to the parameter array list."""

    def __init__(self, arrays: Sequence[np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]

    def step(self, arrays: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1**self.t)
            v_hat = v / (1 - self.beta2**self.t)
            a -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _predict_logits(features: np.ndarray, weights: np.ndarray, cfg: FusionConfig) -> np.ndarray:
    return cfg.logit_scale * (weights @ (cfg.alphas @ features))


def _accuracy(
    stacks: np.ndarray, labels: np.ndarray, weights: np.ndarray, params: AdapterParams | None,
    cfg: FusionConfig,
) -> float:
    correct = 0
    for f, y in zip(stacks, labels):
        if params is not None:
            f = adapter_forward(f, params)
        correct += int(np.argmax(_predict_logits(f, weights, cfg)) == int(y))
    return correct / len(labels)


def train_adapter(
    train_stacks: np.ndarray,
    train_labels: np.ndarray,
    val_stacks: np.ndarray,
    val_labels: np.ndarray,
    weights: EmbeddingMatrix | np.ndarray,
    hyper: TrainingConfig,
    on_epoch: Callable[[dict], None] | None = None,
) -> AdapterParams:
    """Fit the adapter on (N, T, C) stacks by full-batch cross-entropy descent.

    Text weights and input features stay frozen; only the bottleneck moves.
    Returns the parameters with the best validation accuracy seen.
    """
    w = weights.values.astype(np.float64) if isinstance(weights, EmbeddingMatrix) else np.asarray(weights, dtype=np.float64)
    stacks = np.asarray(train_stacks, dtype=np.float64)
    labels = np.asarray(train_labels, dtype=np.int64)
    n, T, c = stacks.shape
    cfg = hyper.fusion_config(T)

    params = AdapterParams.initialize(
        c,
        bottleneck=hyper.bottleneck,
        residual_ratio=hyper.residual_ratio,
        lif=hyper.lif,
        seed=hyper.seed,
    )
    arrays = [params.w_down, params.b_down, params.w_up, params.b_up]
    optimizer = _Adam(arrays, hyper.learning_rate)

    best = params.copy()
    best_val = _accuracy(val_stacks, val_labels, w, params, cfg)
    stale = 0
    for epoch in range(hyper.epochs):
        total_loss = 0.0
        grad_sum = [np.zeros_like(a) for a in arrays]
        for f, y in zip(stacks, labels):
            refined, record = adapter_forward(f, params, return_record=True)
            logits = _predict_logits(refined, w, cfg)
            # Overflow here surfaces as the NonFiniteLoss below, not a warning.
            with np.errstate(invalid="ignore", over="ignore"):
                z = logits - logits.max()
                log_probs = z - np.log(np.exp(z).sum())
            total_loss -= log_probs[y]
            dlogits = np.exp(log_probs)
            dlogits[y] -= 1.0
            dlogits /= n
            upstream = cfg.logit_scale * np.outer(cfg.alphas, w.T @ dlogits)
            grads = adapter_backward(
                record, params, upstream, detach_reset=hyper.detach_reset
            )
            for acc, g in zip(grad_sum, grads.arrays()):
                acc += g
        loss = total_loss / n
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"loss became {loss} at epoch {epoch}")
        optimizer.step(arrays, grad_sum)

        val_acc = _accuracy(val_stacks, val_labels, w, params, cfg)
        if on_epoch is not None:
            on_epoch({"epoch": epoch, "loss": float(loss), "val_accuracy": val_acc})
        logger.debug("epoch %d loss %.6f val_acc %.4f", epoch, loss, val_acc)
        if val_acc > best_val:
            best_val = val_acc
            best = params.copy()
            stale = 0
        else:
            stale += 1
            if stale >= hyper.patience:
                logger.info("validation plateau after %d epochs, stopping", epoch + 1)
                break
    return best


def select_few_shot(
    labels: Sequence[int], shots: int, rng: np.random.Generator
) -> tuple[list[int], list[int]]:
    """Pick `shots` sample indices per class; returns (chosen, leftover)."""
    labels = np.asarray(labels, dtype=np.int64)
    chosen: list[int] = []
    leftover: list[int] = []
    for k in np.unique(labels):
        idx = np.flatnonzero(labels == k)
        if idx.size < shots:
            raise InsufficientSamples(
                f"class {int(k)} has {idx.size} samples, fewer than {shots} shots"
            )
        picked = rng.choice(idx, size=shots, replace=False)
        picked_set = set(int(i) for i in picked)
        chosen.extend(sorted(picked_set))
        leftover.extend(int(i) for i in idx if int(i) not in picked_set)
    return chosen, leftover


def train_few_shot(
    manifest: EmbeddingSetManifest,
    weights: EmbeddingMatrix,
    shots: int,
    hyper: TrainingConfig,
    *,
    root: str = ".",
    normalize: bool = True,
    on_epoch: Callable[[dict], None] | None = None,
) -> AdapterParams:
    """Sample `shots` training examples per class from the manifest and fit.

    Validation uses leftover training samples (up to ``val_per_class`` per
    class, default ``shots``); when nothing is left over, the few-shot set
    itself is used. The test split is never touched here.
    """
    if shots < 1:
        raise InsufficientSamples("shots must be >= 1 to train")
    rng = np.random.default_rng(hyper.seed)
    labels = [rec.label for rec in manifest.samples]
    chosen, leftover = select_few_shot(labels, shots, rng)

    val_cap = shots if hyper.val_per_class is None else hyper.val_per_class
    val_idx: list[int] = []
    if val_cap > 0 and leftover:
        leftover_labels = np.asarray([labels[i] for i in leftover])
        for k in np.unique(leftover_labels):
            pool = [i for i, lab in zip(leftover, leftover_labels) if lab == k]
            take = min(val_cap, len(pool))
            val_idx.extend(rng.choice(pool, size=take, replace=False).tolist())
    if not val_idx:
        val_idx = list(chosen)

    def load(indices: list[int]) -> tuple[np.ndarray, np.ndarray]:
        mats = [
            manifest.load_sample(root, manifest.samples[i], normalize=normalize).values
            for i in indices
        ]
        return np.stack(mats).astype(np.float64), np.asarray(
            [labels[i] for i in indices], dtype=np.int64
        )

    train_f, train_y = load(chosen)
    val_f, val_y = load(sorted(val_idx))
    return train_adapter(train_f, train_y, val_f, val_y, weights, hyper, on_epoch=on_epoch)


def classify_adapted(
    weights: EmbeddingMatrix | np.ndarray,
    features: np.ndarray,
    params: AdapterParams,
    cfg: FusionConfig,
):
    """Fused classification of one T x C stack after adapter refinement."""
    refined = adapter_forward(np.asarray(features, dtype=np.float64), params)
    return classify_fused(weights, refined, cfg)
