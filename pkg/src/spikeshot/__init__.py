"""Zero-shot and few-shot classification of event-camera recordings.

Pipeline: parse event streams, project them onto tri-level frame stacks,
score per-frame embeddings against class text embeddings with weighted
fusion, and optionally refine the per-timestep features with a trainable
spiking bottleneck adapter.
"""

from . import errors
from .adapter import (
    AdapterGrads,
    AdapterParams,
    ForwardRecord,
    LifParams,
    LifState,
    TrainingConfig,
    adapter_backward,
    adapter_forward,
    adapter_forward_relaxed,
    classify_adapted,
    lif_step,
    read_ncad,
    select_few_shot,
    train_adapter,
    train_few_shot,
    write_ncad,
)
from .embeddings import (
    EmbeddingMatrix,
    EmbeddingSetManifest,
    SampleRecord,
    l2_normalize_rows,
    load_matrix,
    read_ncem,
    write_ncem,
)
from .events import (
    Event,
    EventStream,
    parse_aedat2,
    parse_csv_events,
    parse_nmnist_bin,
    write_csv_events,
)
from .fusion import (
    EvaluationResult,
    FusionConfig,
    Prediction,
    classify_fused,
    classify_single,
    evaluate,
)
from .projection import (
    FrameStack,
    OverwritePolicy,
    ProjectionConfig,
    WindowPolicy,
    project,
    project_oracle,
    read_framestack,
    write_framestack,
)

__version__ = "0.1.0"

__all__ = [
    "AdapterGrads",
    "AdapterParams",
    "EmbeddingMatrix",
    "EmbeddingSetManifest",
    "EvaluationResult",
    "Event",
    "EventStream",
    "ForwardRecord",
    "FrameStack",
    "FusionConfig",
    "LifParams",
    "LifState",
    "OverwritePolicy",
    "Prediction",
    "ProjectionConfig",
    "SampleRecord",
    "TrainingConfig",
    "WindowPolicy",
    "adapter_backward",
    "adapter_forward",
    "adapter_forward_relaxed",
    "classify_adapted",
    "classify_fused",
    "classify_single",
    "errors",
    "evaluate",
    "l2_normalize_rows",
    "lif_step",
    "load_matrix",
    "parse_aedat2",
    "parse_csv_events",
    "parse_nmnist_bin",
    "project",
    "project_oracle",
    "read_framestack",
    "read_ncad",
    "read_ncem",
    "select_few_shot",
    "train_adapter",
    "train_few_shot",
    "write_csv_events",
    "write_framestack",
    "write_ncad",
    "write_ncem",
]
