"""Embedding export bridge: NCFS frame stacks in, NCEM embedding matrices out."""

from .encode import (
    DEFAULT_TEMPLATES,
    EncodeSettings,
    encode_frames,
    encode_text,
    frames_to_batch,
    validate_templates,
)
from .formats import FormatError, read_ncfs, write_ncem
from .model import EMBED_DIM, ContrastiveBackbone, build_model
from .tokenizer import load_tokenizer, tokenize

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_TEMPLATES",
    "EMBED_DIM",
    "ContrastiveBackbone",
    "EncodeSettings",
    "FormatError",
    "build_model",
    "encode_frames",
    "encode_text",
    "frames_to_batch",
    "load_tokenizer",
    "read_ncfs",
    "tokenize",
    "validate_templates",
    "write_ncem",
]
