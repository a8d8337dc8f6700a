"""Project an event stream onto a stack of T tri-level frames.

Each frame starts as uniform background 127; events in its time window set
the touched pixel to 255 (ON) or 0 (OFF). The recording is split into T
windows either by equal duration or by equal event count. A deliberately
naive reference implementation (:func:`project_oracle`) and the NCFS
interchange format round out the module.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import BadMagic, DimensionMismatch
from .events import EventStream

BACKGROUND = 127
ON_PIXEL = 255
OFF_PIXEL = 0
PIXEL_ALPHABET = (OFF_PIXEL, BACKGROUND, ON_PIXEL)

NCFS_MAGIC = b"NCFS"
NCFS_VERSION = 1
_NCFS_HEADER = struct.Struct("<4sIIII")


class WindowPolicy(str, Enum):
    """How the recording is split into T windows."""

    EQUAL_DURATION = "equal-duration"
    EQUAL_COUNT = "equal-count"


class OverwritePolicy(str, Enum):
    """Conflict resolution when ON and OFF hit one pixel in one window."""

    LAST_EVENT_WINS = "last-event-wins"
    ON_DOMINATES = "on-dominates"


@dataclass(frozen=True)
class ProjectionConfig:
    timesteps: int = 1
    window_policy: WindowPolicy = WindowPolicy.EQUAL_DURATION
    overwrite_policy: OverwritePolicy = OverwritePolicy.LAST_EVENT_WINS

    def __post_init__(self):
        if self.timesteps < 1:
            raise ValueError("timesteps must be >= 1")
        object.__setattr__(self, "window_policy", WindowPolicy(self.window_policy))
        object.__setattr__(self, "overwrite_policy", OverwritePolicy(self.overwrite_policy))


@dataclass
class FrameStack:
    """T frames of 8-bit pixels in {0, 127, 255} plus their time windows.

    ``window_bounds[i] = (t_start, t_end)`` in microseconds, half-open
    ``[t_start, t_end)``; consecutive windows are contiguous and together
    cover the recording span.
    """

    pixels: np.ndarray
    window_bounds: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 3:
            raise ValueError("pixels must be a T x H x W array")
        if not np.isin(pixels, PIXEL_ALPHABET).all():
            raise ValueError("pixel values must be in {0, 127, 255}")
        self.pixels = pixels.astype(np.uint8)

        bounds = np.asarray(self.window_bounds, dtype=np.int64)
        if bounds.shape != (self.timesteps, 2):
            raise DimensionMismatch(
                f"window_bounds shape {bounds.shape} does not match T={self.timesteps}"
            )
        if bounds.size:
            if bounds.min() < 0:
                raise ValueError("window bounds must be non-negative")
            if (bounds[:, 1] < bounds[:, 0]).any():
                raise ValueError("window end must be >= window start")
            if (bounds[1:, 0] != bounds[:-1, 1]).any():
                raise ValueError("windows must be contiguous")
        self.window_bounds = bounds

    @property
    def timesteps(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    def __eq__(self, other) -> bool:
        if not isinstance(other, FrameStack):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels) and np.array_equal(
            self.window_bounds, other.window_bounds
        )


def _window_starts(t_min: int, t_max: int, n_events: int, timestamps, cfg: ProjectionConfig):
    """T+1 window boundaries (Python ints); window i is [b[i], b[i+1])."""
    T = cfg.timesteps
    if cfg.window_policy is WindowPolicy.EQUAL_DURATION:
        if t_min == t_max:
            # Degenerate span: everything lands in frame 0.
            return [t_min] + [t_max + 1] * T
        span = t_max - t_min + 1
        return [t_min + (i * span) // T for i in range(T)] + [t_max + 1]
    run = -(-n_events // T)  # ceil(N / T)
    bounds = []
    for i in range(T):
        k = i * run
        bounds.append(int(timestamps[k]) if k < n_events else t_max + 1)
    bounds.append(t_max + 1)
    return bounds


def project(stream: EventStream, cfg: ProjectionConfig) -> FrameStack:
    """Accumulate ``stream`` into T tri-level frames.

    An empty stream is not an error: it yields all-background frames with
    degenerate (0, 0) windows.
    """
    T = cfg.timesteps
    frames = np.full((T, stream.sensor_height, stream.sensor_width), BACKGROUND, dtype=np.uint8)
    n = len(stream)
    if n == 0:
        return FrameStack(frames, np.zeros((T, 2), dtype=np.int64))

    t_min = int(stream.t[0])
    t_max = int(stream.t[-1])
    starts = _window_starts(t_min, t_max, n, stream.t, cfg)

    if cfg.window_policy is WindowPolicy.EQUAL_DURATION:
        # side='right' skips empty windows that share a start with a later one.
        win = np.searchsorted(np.asarray(starts, dtype=np.int64), stream.t, side="right") - 1
    else:
        run = -(-n // T)
        win = np.arange(n, dtype=np.int64) // run

    values = np.where(stream.polarity == 1, ON_PIXEL, OFF_PIXEL).astype(np.uint8)
    if cfg.overwrite_policy is OverwritePolicy.LAST_EVENT_WINS:
        # Events are in timestamp order; later assignments overwrite earlier ones.
        frames[win, stream.y, stream.x] = values
    else:
        off = stream.polarity == 0
        on = ~off
        frames[win[off], stream.y[off], stream.x[off]] = OFF_PIXEL
        frames[win[on], stream.y[on], stream.x[on]] = ON_PIXEL

    bounds = np.asarray([(starts[i], starts[i + 1]) for i in range(T)], dtype=np.int64)
    return FrameStack(frames, bounds)


def project_oracle(stream: EventStream, cfg: ProjectionConfig) -> FrameStack:
    """Brute-force reference for :func:`project`: per-frame scalar event scan."""
    T = cfg.timesteps
    frames = np.full((T, stream.sensor_height, stream.sensor_width), BACKGROUND, dtype=np.uint8)
    n = len(stream)
    if n == 0:
        return FrameStack(frames, np.zeros((T, 2), dtype=np.int64))

    t_min = int(stream.t[0])
    t_max = int(stream.t[-1])
    starts = _window_starts(t_min, t_max, n, stream.t, cfg)
    run = -(-n // T)
    events = list(stream)

    for i in range(T):
        def in_window(k: int, t: int) -> bool:
            if cfg.window_policy is WindowPolicy.EQUAL_COUNT:
                return i * run <= k < (i + 1) * run
            if t_min == t_max:
                return i == 0
            span = t_max - t_min + 1
            return t_min + (i * span) // T <= t < t_min + ((i + 1) * span) // T

        if cfg.overwrite_policy is OverwritePolicy.LAST_EVENT_WINS:
            for k, ev in enumerate(events):
                if in_window(k, ev.t):
                    frames[i, ev.y, ev.x] = ON_PIXEL if ev.polarity == 1 else OFF_PIXEL
        else:
            for k, ev in enumerate(events):
                if ev.polarity == 0 and in_window(k, ev.t):
                    frames[i, ev.y, ev.x] = OFF_PIXEL
            for k, ev in enumerate(events):
                if ev.polarity == 1 and in_window(k, ev.t):
                    frames[i, ev.y, ev.x] = ON_PIXEL

    bounds = np.asarray([(starts[i], starts[i + 1]) for i in range(T)], dtype=np.int64)
    return FrameStack(frames, bounds)


def write_framestack(fs: FrameStack) -> bytes:
    """Encode to NCFS: header, T*H*W pixel bytes, then T (t_start, t_end) u64 pairs."""
    header = _NCFS_HEADER.pack(NCFS_MAGIC, NCFS_VERSION, fs.timesteps, fs.height, fs.width)
    bounds = struct.pack(f"<{2 * fs.timesteps}Q", *fs.window_bounds.reshape(-1).tolist())
    return header + fs.pixels.tobytes() + bounds


def read_framestack(data: bytes) -> FrameStack:
    """Decode NCFS bytes; exact inverse of :func:`write_framestack`."""
    if len(data) < _NCFS_HEADER.size:
        raise BadMagic("shorter than an NCFS header")
    magic, version, T, H, W = _NCFS_HEADER.unpack_from(data)
    if magic != NCFS_MAGIC:
        raise BadMagic(f"expected magic {NCFS_MAGIC!r}, got {magic!r}")
    if version != NCFS_VERSION:
        raise BadMagic(f"unsupported NCFS version {version}")
    n_pixels = T * H * W
    expected = _NCFS_HEADER.size + n_pixels + 16 * T
    if len(data) != expected:
        raise DimensionMismatch(
            f"NCFS declares {expected} bytes for T={T} H={H} W={W}, file has {len(data)}"
        )
    off = _NCFS_HEADER.size
    pixels = np.frombuffer(data, dtype=np.uint8, count=n_pixels, offset=off).reshape(T, H, W)
    bounds = np.asarray(
        struct.unpack_from(f"<{2 * T}Q", data, off + n_pixels), dtype=np.int64
    ).reshape(T, 2)
    return FrameStack(pixels.copy(), bounds)
