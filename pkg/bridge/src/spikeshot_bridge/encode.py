"""Embedding export: class prompts to text rows, frame stacks to visual rows."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .formats import ROLE_TEXT, ROLE_VISUAL, read_ncfs, write_ncem
from .model import IMAGE_MEAN, IMAGE_RESOLUTION, IMAGE_STD, ContrastiveBackbone
from .tokenizer import tokenize

PLACEHOLDER = "{class}"
DEFAULT_TEMPLATES = {
    "nmnist": ["a photo of the number {class}"],
    "cifar10dvs": ["a photo of a {class}"],
}


@dataclass
class EncodeSettings:
    """Preprocessing knobs recorded alongside every output."""

    interpolation: str = "bilinear"  # or "nearest"
    batch_size: int = 16


def validate_templates(templates: list[str]) -> None:
    if not templates:
        raise ValueError("at least one prompt template is required")
    for template in templates:
        if template.count(PLACEHOLDER) != 1:
            raise ValueError(
                f"template {template!r} must contain exactly one {PLACEHOLDER!r}"
            )


def encode_text(
    model: ContrastiveBackbone,
    tokenizer,
    class_names: list[str],
    templates: list[str],
) -> np.ndarray:
    """One L2-normalized row per class: embed each filled template, average."""
    if not class_names:
        raise ValueError("class list is empty")
    validate_templates(templates)
    rows = []
    with torch.no_grad():
        for name in class_names:
            prompts = [t.replace(PLACEHOLDER, name.replace("_", " ")) for t in templates]
            features = model.encode_text(tokenize(prompts, tokenizer))
            mean = features.mean(dim=0)
            rows.append(F.normalize(mean, dim=0))
    return torch.stack(rows).cpu().numpy().astype(np.float32)


def frames_to_batch(pixels: np.ndarray, interpolation: str) -> torch.Tensor:
    """Tri-level frames -> replicated 3-channel, resized, normalized batch."""
    frames = torch.from_numpy(pixels.astype(np.float32) / 255.0)
    batch = frames[:, None, :, :].repeat(1, 3, 1, 1)
    if batch.shape[-2:] != (IMAGE_RESOLUTION, IMAGE_RESOLUTION):
        kwargs = {"align_corners": False} if interpolation == "bilinear" else {}
        batch = F.interpolate(
            batch, size=(IMAGE_RESOLUTION, IMAGE_RESOLUTION), mode=interpolation, **kwargs
        )
    mean = torch.tensor(IMAGE_MEAN).view(1, 3, 1, 1)
    std = torch.tensor(IMAGE_STD).view(1, 3, 1, 1)
    return (batch - mean) / std


def encode_frames(
    model: ContrastiveBackbone,
    ncfs_bytes: bytes,
    settings: EncodeSettings | None = None,
) -> np.ndarray:
    """One embedding row per frame, in timestep order."""
    settings = settings or EncodeSettings()
    pixels, _ = read_ncfs(ncfs_bytes)
    batch = frames_to_batch(pixels, settings.interpolation)
    rows = []
    with torch.no_grad():
        for start in range(0, batch.shape[0], settings.batch_size):
            rows.append(model.encode_image(batch[start : start + settings.batch_size]))
    return torch.cat(rows).cpu().numpy().astype(np.float32)


def write_output(
    path: Path,
    values: np.ndarray,
    role: int,
    labels: list[str] | None,
    metadata: dict,
) -> None:
    """Write the NCEM file plus a sidecar JSON recording how it was made."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(write_ncem(values, role, labels))
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n")


def text_metadata(provenance: str, tokenizer_name: str, templates: list[str]) -> dict:
    return {
        "backbone": "RN50",
        "embedding_dim": 1024,
        "weights": provenance,
        "tokenizer": tokenizer_name,
        "templates": templates,
        "kind": "text",
    }


def visual_metadata(provenance: str, settings: EncodeSettings, source: str) -> dict:
    return {
        "backbone": "RN50",
        "embedding_dim": 1024,
        "weights": provenance,
        "kind": "visual",
        "source": source,
        "resize": IMAGE_RESOLUTION,
        "interpolation": settings.interpolation,
        "channel_mean": list(IMAGE_MEAN),
        "channel_std": list(IMAGE_STD),
    }


__all__ = [
    "DEFAULT_TEMPLATES",
    "EncodeSettings",
    "ROLE_TEXT",
    "ROLE_VISUAL",
    "encode_frames",
    "encode_text",
    "frames_to_batch",
    "text_metadata",
    "validate_templates",
    "visual_metadata",
    "write_output",
]
