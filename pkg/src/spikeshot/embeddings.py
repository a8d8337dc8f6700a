"""Load, validate, and serve embedding matrices exchanged with the encoder bridge.

The NCEM interchange format carries either text-class embeddings (one row per
class) or per-timestep visual embeddings (one row per frame) as little-endian
float32. The bridge is never invoked in-process; hand-off is strictly bytes.
Row normalization is this gateway's job (flag-controlled, default on at load),
so downstream fusion can assume comparable feature scales.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadMagic, DimensionMismatch, NonFiniteValue, ZeroRow

NCEM_MAGIC = b"NCEM"
NCEM_VERSION = 1
_NCEM_HEADER = struct.Struct("<4sIBIII")

ROLE_TEXT = "text"
ROLE_VISUAL = "visual"
_ROLE_CODES = {ROLE_TEXT: 0, ROLE_VISUAL: 1}
_ROLE_NAMES = {v: k for k, v in _ROLE_CODES.items()}


@dataclass
class EmbeddingMatrix:
    """Row-major float32 matrix with a role tag and optional row labels."""

    values: np.ndarray
    role: str = ROLE_VISUAL
    labels: list[str] | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise ValueError("values must be a 2-D array")
        if not np.isfinite(values).all():
            raise NonFiniteValue("embedding matrix contains NaN or Inf")
        self.values = values
        if self.role not in _ROLE_CODES:
            raise ValueError(f"role must be one of {sorted(_ROLE_CODES)}")
        if self.labels is not None and not self.labels:
            self.labels = None
        if self.labels is not None:
            if len(self.labels) != self.rows:
                raise DimensionMismatch(
                    f"{len(self.labels)} labels for {self.rows} rows"
                )
            for lab in self.labels:
                if "\n" in lab:
                    raise ValueError("row labels must not contain newlines")
                if not lab:
                    raise ValueError("row labels must be non-empty")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def row(self, i: int) -> np.ndarray:
        return self.values[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingMatrix):
            return NotImplemented
        return (
            self.role == other.role
            and self.labels == other.labels
            and self.values.shape == other.values.shape
            and self.values.tobytes() == other.values.tobytes()
        )


def write_ncem(matrix: EmbeddingMatrix) -> bytes:
    """Encode to NCEM bytes; decoding gives back the matrix bit-exactly."""
    label_block = "\n".join(matrix.labels).encode("utf-8") if matrix.labels else b""
    header = _NCEM_HEADER.pack(
        NCEM_MAGIC,
        NCEM_VERSION,
        _ROLE_CODES[matrix.role],
        matrix.rows,
        matrix.cols,
        len(label_block),
    )
    return header + label_block + matrix.values.astype("<f4", copy=False).tobytes()


def read_ncem(data: bytes) -> EmbeddingMatrix:
    """Decode NCEM bytes, validating framing, shape, and finiteness."""
    if len(data) < _NCEM_HEADER.size:
        raise BadMagic("shorter than an NCEM header")
    magic, version, role_code, rows, cols, label_len = _NCEM_HEADER.unpack_from(data)
    if magic != NCEM_MAGIC:
        raise BadMagic(f"expected magic {NCEM_MAGIC!r}, got {magic!r}")
    if version != NCEM_VERSION:
        raise BadMagic(f"unsupported NCEM version {version}")
    if role_code not in _ROLE_NAMES:
        raise BadMagic(f"unknown role code {role_code}")
    expected = _NCEM_HEADER.size + label_len + rows * cols * 4
    if len(data) != expected:
        raise DimensionMismatch(
            f"NCEM declares {expected} bytes for {rows}x{cols} plus {label_len} label bytes, "
            f"file has {len(data)}"
        )
    off = _NCEM_HEADER.size
    labels: list[str] | None = None
    if label_len:
        labels = data[off : off + label_len].decode("utf-8").split("\n")
        if len(labels) != rows:
            raise DimensionMismatch(f"{len(labels)} labels for {rows} rows")
    values = (
        np.frombuffer(data, dtype="<f4", count=rows * cols, offset=off + label_len)
        .reshape(rows, cols)
        .copy()
    )
    if not np.isfinite(values).all():
        raise NonFiniteValue("NCEM payload contains NaN or Inf")
    return EmbeddingMatrix(values, role=_ROLE_NAMES[role_code], labels=labels)


def l2_normalize_rows(matrix: EmbeddingMatrix) -> EmbeddingMatrix:
    """Scale each row to unit Euclidean norm; rejects all-zero rows."""
    norms = np.linalg.norm(matrix.values.astype(np.float64), axis=1)
    if (norms == 0).any():
        raise ZeroRow(f"row {int(np.argmax(norms == 0))} has zero norm")
    values = (matrix.values.astype(np.float64) / norms[:, None]).astype(np.float32)
    return EmbeddingMatrix(values, role=matrix.role, labels=matrix.labels)


def load_matrix(
    path: str | Path, *, normalize: bool = True, expect_role: str | None = None
) -> EmbeddingMatrix:
    """Read an NCEM file, optionally normalizing rows at load time."""
    matrix = read_ncem(Path(path).read_bytes())
    if expect_role is not None and matrix.role != expect_role:
        raise DimensionMismatch(f"expected a {expect_role} matrix, got {matrix.role}")
    return l2_normalize_rows(matrix) if normalize else matrix


@dataclass
class SampleRecord:
    """Locator for one recording's visual embedding matrix."""

    sample_id: str
    path: str
    label: int


@dataclass
class EmbeddingSetManifest:
    """Index of a dataset's per-sample embeddings plus its class vocabulary."""

    dataset: str
    class_names: list[str]
    cols: int
    timesteps: int
    samples: list[SampleRecord] = field(default_factory=list)

    def __post_init__(self):
        k = len(self.class_names)
        for rec in self.samples:
            if not 0 <= rec.label < k:
                raise ValueError(
                    f"sample {rec.sample_id!r} has label {rec.label} outside 0..{k - 1}"
                )

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "class_names": list(self.class_names),
            "cols": self.cols,
            "timesteps": self.timesteps,
            "samples": [
                {"id": r.sample_id, "file": r.path, "label": r.label} for r in self.samples
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EmbeddingSetManifest":
        return cls(
            dataset=d["dataset"],
            class_names=list(d["class_names"]),
            cols=int(d["cols"]),
            timesteps=int(d["timesteps"]),
            samples=[
                SampleRecord(s["id"], s["file"], int(s["label"])) for s in d["samples"]
            ],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingSetManifest":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def load_sample(
        self, root: str | Path, record: SampleRecord, *, normalize: bool = True
    ) -> EmbeddingMatrix:
        """Load one sample's T x C visual matrix, enforcing manifest consistency."""
        matrix = load_matrix(Path(root) / record.path, normalize=normalize)
        if matrix.rows != self.timesteps or matrix.cols != self.cols:
            raise DimensionMismatch(
                f"sample {record.sample_id!r} is {matrix.rows}x{matrix.cols}, "
                f"manifest declares {self.timesteps}x{self.cols}"
            )
        return matrix
