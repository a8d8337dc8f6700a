"""Parsers for neuromorphic event recordings and a canonical in-memory stream.

Supported inputs:
  - ATIS-style ``.bin`` (5 bytes per event, 34x34 sensor):
      byte 0        x
      byte 1        y
      byte 2 bit 7  polarity
      bytes 2..4    23-bit big-endian timestamp in microseconds
  - AEDAT 2.0 ``.aedat`` (DVS128 addressing, 128x128 sensor):
      '#'-prefixed ASCII header lines, then 8-byte records of a big-endian
      32-bit address word followed by a big-endian 32-bit timestamp (us);
      x = (addr >> 1) & 0x7F, y = (addr >> 8) & 0x7F, polarity from bit 0
      (bit value 0 means ON by default; recorders disagree, so it is a flag).
  - Debug CSV, one ``t,x,y,p`` event per line.

All parsers return an :class:`EventStream` sorted non-decreasing by timestamp
(stable, so same-timestamp events keep file order) with bounds-checked
coordinates. Out-of-range events raise; nothing is clamped silently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import CoordinateOutOfRange, MalformedHeader, ParseError, TruncatedRecord

OFF = 0
ON = 1

NMNIST_WIDTH = 34
NMNIST_HEIGHT = 34
DVS128_WIDTH = 128
DVS128_HEIGHT = 128

_NMNIST_RECORD_BYTES = 5
_AEDAT2_RECORD_BYTES = 8


@dataclass(frozen=True)
class Event:
    """One asynchronous pixel report: timestamp (us), position, polarity."""

    t: int
    x: int
    y: int
    polarity: int


class EventStream:
    """A bounds-checked event sequence sorted non-decreasing by timestamp.

    Timestamps are stored as int64 microseconds so concatenated recordings
    survive. ``label`` is optional class-index metadata; it is ignored by the
    parsers and attached by dataset loaders.
    """

    __slots__ = ("sensor_width", "sensor_height", "t", "x", "y", "polarity", "label")

    def __init__(
        self,
        sensor_width: int,
        sensor_height: int,
        t=(),
        x=(),
        y=(),
        polarity=(),
        label: int | None = None,
    ):
        if sensor_width <= 0 or sensor_height <= 0:
            raise ValueError("sensor dimensions must be positive")
        self.sensor_width = int(sensor_width)
        self.sensor_height = int(sensor_height)

        t = np.asarray(t, dtype=np.int64)
        x = np.asarray(x, dtype=np.int64)
        y = np.asarray(y, dtype=np.int64)
        polarity = np.asarray(polarity, dtype=np.int64)
        if not (t.shape == x.shape == y.shape == polarity.shape) or t.ndim != 1:
            raise ValueError("t, x, y, polarity must be 1-D arrays of equal length")

        if t.size:
            if t.min() < 0:
                raise ValueError("timestamps must be non-negative")
            if x.min() < 0 or x.max() >= self.sensor_width:
                raise CoordinateOutOfRange(
                    f"x outside [0, {self.sensor_width}) for {self.sensor_width}x{self.sensor_height} sensor"
                )
            if y.min() < 0 or y.max() >= self.sensor_height:
                raise CoordinateOutOfRange(
                    f"y outside [0, {self.sensor_height}) for {self.sensor_width}x{self.sensor_height} sensor"
                )
            bad = ~np.isin(polarity, (OFF, ON))
            if bad.any():
                raise ValueError(f"polarity must be 0 or 1, got {polarity[bad][0]}")
            # Stable sort: equal timestamps keep their input order.
            order = np.argsort(t, kind="stable")
            t, x, y, polarity = t[order], x[order], y[order], polarity[order]

        self.t = t
        self.x = x
        self.y = y
        self.polarity = polarity.astype(np.uint8)
        self.label = label

    @classmethod
    def from_events(
        cls,
        sensor_width: int,
        sensor_height: int,
        events: Iterable[Event],
        label: int | None = None,
    ) -> "EventStream":
        evs = list(events)
        return cls(
            sensor_width,
            sensor_height,
            [e.t for e in evs],
            [e.x for e in evs],
            [e.y for e in evs],
            [e.polarity for e in evs],
            label=label,
        )

    @property
    def events(self) -> list[Event]:
        return list(self)

    def __len__(self) -> int:
        return int(self.t.size)

    def __getitem__(self, i: int) -> Event:
        return Event(int(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.polarity[i]))

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.sensor_width == other.sensor_width
            and self.sensor_height == other.sensor_height
            and self.label == other.label
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.polarity, other.polarity)
        )

    def __repr__(self) -> str:
        return (
            f"EventStream({self.sensor_width}x{self.sensor_height}, "
            f"{len(self)} events, label={self.label})"
        )


def parse_nmnist_bin(data: bytes) -> EventStream:
    """Decode ATIS 5-byte records into a 34x34 event stream.

    The 23-bit timestamp wraps after ~8.3 s; recordings in this format are a
    few hundred ms, so wraparound is not handled.
    """
    if len(data) % _NMNIST_RECORD_BYTES != 0:
        raise TruncatedRecord(
            f"payload of {len(data)} bytes is not a multiple of {_NMNIST_RECORD_BYTES}"
        )
    raw = np.frombuffer(data, dtype=np.uint8)
    x = raw[0::5].astype(np.int64)
    y = raw[1::5].astype(np.int64)
    b2 = raw[2::5].astype(np.int64)
    polarity = (b2 >> 7) & 1
    t = ((b2 & 0x7F) << 16) | (raw[3::5].astype(np.int64) << 8) | raw[4::5]
    return EventStream(NMNIST_WIDTH, NMNIST_HEIGHT, t, x, y, polarity)


def parse_aedat2(data: bytes, *, on_bit_value: int = 0) -> EventStream:
    """Decode an AEDAT 2.0 byte stream into a 128x128 event stream.

    ``on_bit_value`` selects the polarity convention: an event is ON when
    ``addr & 1`` equals it. The default 0 matches common DVS128 dumps.
    """
    if on_bit_value not in (0, 1):
        raise ValueError("on_bit_value must be 0 or 1")
    pos = 0
    while pos < len(data) and data[pos : pos + 1] == b"#":
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise MalformedHeader("header line without newline terminator")
        pos = nl + 1
    payload = data[pos:]
    if len(payload) % _AEDAT2_RECORD_BYTES != 0:
        raise TruncatedRecord(
            f"payload of {len(payload)} bytes is not a multiple of {_AEDAT2_RECORD_BYTES}"
        )
    words = np.frombuffer(payload, dtype=">u4").reshape(-1, 2)
    addr = words[:, 0].astype(np.int64)
    t = words[:, 1].astype(np.int64)
    x = (addr >> 1) & 0x7F
    y = (addr >> 8) & 0x7F
    polarity = ((addr & 1) == on_bit_value).astype(np.int64)
    return EventStream(DVS128_WIDTH, DVS128_HEIGHT, t, x, y, polarity)


def parse_csv_events(text: str, sensor_width: int, sensor_height: int) -> EventStream:
    """Parse ``t,x,y,p`` lines (decimal, one event per line; blank lines skipped)."""
    ts: list[int] = []
    xs: list[int] = []
    ys: list[int] = []
    ps: list[int] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != 4:
            raise ParseError(f"expected 4 comma-separated fields, got {len(fields)}", lineno)
        try:
            t, x, y, p = (int(f) for f in fields)
        except ValueError:
            raise ParseError(f"non-integer field in {line!r}", lineno) from None
        if t < 0:
            raise ParseError("negative timestamp", lineno)
        if p not in (OFF, ON):
            raise ParseError(f"polarity must be 0 or 1, got {p}", lineno)
        if not (0 <= x < sensor_width and 0 <= y < sensor_height):
            raise CoordinateOutOfRange(
                f"line {lineno}: ({x},{y}) outside {sensor_width}x{sensor_height} sensor"
            )
        ts.append(t)
        xs.append(x)
        ys.append(y)
        ps.append(p)
    return EventStream(sensor_width, sensor_height, ts, xs, ys, ps)


def write_csv_events(stream: EventStream) -> str:
    """Serialize to the debug CSV format; inverse of :func:`parse_csv_events`."""
    return "".join(
        f"{t},{x},{y},{p}\n"
        for t, x, y, p in zip(
            stream.t.tolist(), stream.x.tolist(), stream.y.tolist(), stream.polarity.tolist()
        )
    )
