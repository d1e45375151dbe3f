"""Time-tag streams and their on-disk formats.

Binary layout (little-endian, no padding)::

    magic "TTAG0001" | version u16 | rep_period_ps u64 | channel_count u8
    | duration_ps u64 | record_count u64
    then record_count x (channel u8, time_ps u64)

The CSV form is ``channel,time_ps`` with the header fields as leading
``# key: value`` comment lines.
"""
from dataclasses import dataclass, replace
import io
import logging
import os
import struct
from typing import BinaryIO, Iterator, Optional, Tuple, Union

import numpy as np
import pandas as pd

from photonstats.errors import (
    MagicMismatchError,
    NonMonotonicError,
    TagFormatError,
    TruncatedPayloadError,
)

logger = logging.getLogger(__name__)

MAGIC = b"TTAG0001"
VERSION = 1
HEADER = struct.Struct("<8sHQBQQ")
RECORD = np.dtype([("channel", "<u1"), ("time", "<u8")])
CHUNK_RECORDS = 1 << 20
CSV_COLUMNS = ("channel", "time_ps")

PathOrFile = Union[str, os.PathLike, BinaryIO]


@dataclass(frozen=True)
class LiveMask:
    """Which fixed-width time bins of an acquisition a (sub)stream covers."""

    bin_ps: int
    mask: np.ndarray
    origin_ps: int = 0

    @property
    def live_ps(self) -> int:
        return int(np.count_nonzero(self.mask)) * self.bin_ps


@dataclass(eq=False)
class TimeTagStream:
    channels: np.ndarray
    times: np.ndarray
    rep_period_ps: int
    duration_ps: int
    source: str = ""
    live: Optional[LiveMask] = None
    truth: Optional[np.ndarray] = None  # simulator state per tag, debug only

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.uint8)
        self.times = np.asarray(self.times, dtype=np.int64)
        if self.channels.shape != self.times.shape:
            raise TagFormatError("channels and times differ in length")

    def __len__(self) -> int:
        return int(self.times.size)

    @classmethod
    def empty(cls, rep_period_ps: int, duration_ps: int, source: str = "") -> "TimeTagStream":
        return cls(np.empty(0, np.uint8), np.empty(0, np.int64), rep_period_ps, duration_ps, source)

    def channel(self, number: int) -> np.ndarray:
        return self.times[self.channels == number]

    def channel_stream(self, number: int) -> "TimeTagStream":
        return self.subset(self.channels == number)

    def subset(self, selector: np.ndarray, live: Optional[LiveMask] = None) -> "TimeTagStream":
        truth = None if self.truth is None else self.truth[selector]
        return replace(self, channels=self.channels[selector], times=self.times[selector],
                       truth=truth, live=live if live is not None else self.live)

    @property
    def live_ps(self) -> int:
        return self.live.live_ps if self.live is not None else self.duration_ps

    def mean_rate(self) -> float:
        """Detected counts per ms over the live time."""
        return len(self) / (self.live_ps * 1e-9) if self.live_ps else 0.0

    def validate(self) -> "TimeTagStream":
        if self.times.size:
            if np.any(np.diff(self.times) < 0):
                raise NonMonotonicError("tag times decrease")
            if self.times[0] < 0 or self.times[-1] > self.duration_ps:
                raise TagFormatError(f"tag times outside [0, {self.duration_ps}] ps")
        return self

    def sorted(self) -> "TimeTagStream":
        order = np.lexsort((self.channels, self.times))
        return self.subset(order)

    def equals(self, other: "TimeTagStream") -> bool:
        return (self.rep_period_ps == other.rep_period_ps
                and self.duration_ps == other.duration_ps
                and np.array_equal(self.channels, other.channels)
                and np.array_equal(self.times, other.times))


def merge_streams(*streams: TimeTagStream, source: str = "merged") -> TimeTagStream:
    if not streams:
        raise TagFormatError("nothing to merge")
    merged = TimeTagStream(
        np.concatenate([s.channels for s in streams]),
        np.concatenate([s.times for s in streams]),
        rep_period_ps=streams[0].rep_period_ps,
        duration_ps=max(s.duration_ps for s in streams),
        source=source,
    )
    return merged.sorted()


def slice_time(stream: TimeTagStream, start_ps: int, stop_ps: int) -> TimeTagStream:
    """Tags in [start_ps, stop_ps), re-based to start at 0."""
    lo, hi = np.searchsorted(stream.times, [start_ps, stop_ps], side="left")
    truth = None if stream.truth is None else stream.truth[lo:hi]
    return TimeTagStream(stream.channels[lo:hi], stream.times[lo:hi] - start_ps, stream.rep_period_ps,
                         stop_ps - start_ps, source=stream.source, truth=truth)


def _open(target: PathOrFile, mode: str):
    if hasattr(target, "read") or hasattr(target, "write"):
        return target, False
    return open(target, mode), True


def write_tags(stream: TimeTagStream, destination: PathOrFile) -> int:
    """Write the binary format; returns the number of bytes written."""
    stream = stream.sorted()
    header = HEADER.pack(MAGIC, VERSION, stream.rep_period_ps,
                         int(stream.channels.max()) if len(stream) else 0,
                         stream.duration_ps, len(stream))
    handle, owned = _open(destination, "wb")
    try:
        written = handle.write(header)
        for start in range(0, len(stream), CHUNK_RECORDS):
            block = np.empty(min(CHUNK_RECORDS, len(stream) - start), dtype=RECORD)
            block["channel"] = stream.channels[start:start + block.size]
            block["time"] = stream.times[start:start + block.size]
            written += handle.write(block.tobytes())
    finally:
        if owned:
            handle.close()
    logger.debug("wrote %d tags (%d bytes)", len(stream), written)
    return written


def write_tags_csv(stream: TimeTagStream, destination: Union[str, os.PathLike]) -> None:
    stream = stream.sorted()
    with open(destination, "w", newline="") as f:
        f.write(f"# rep_period_ps: {stream.rep_period_ps}\n")
        f.write(f"# duration_ps: {stream.duration_ps}\n")
        pd.DataFrame({"channel": stream.channels, "time_ps": stream.times}).to_csv(f, index=False)


def _read_exact(handle: BinaryIO, size: int) -> bytes:
    return handle.read(size) or b""


def _binary_chunks(handle: BinaryIO, chunk_records: int) -> Iterator[Tuple[dict, np.ndarray]]:
    raw = _read_exact(handle, HEADER.size)
    if len(raw) < HEADER.size:
        raise TruncatedPayloadError("file shorter than the header")
    magic, version, rep_period, channel_count, duration, count = HEADER.unpack(raw)
    if magic != MAGIC:
        raise MagicMismatchError(f"bad magic {magic!r}")
    meta = {"rep_period_ps": rep_period, "duration_ps": duration, "version": version,
            "channel_count": channel_count, "record_count": count}
    remaining = count
    while remaining:
        n = min(chunk_records, remaining)
        data = _read_exact(handle, n * RECORD.itemsize)
        if len(data) < n * RECORD.itemsize:
            raise TruncatedPayloadError(
                f"expected {count} records, payload ends after {count - remaining + len(data) // RECORD.itemsize}")
        remaining -= n
        yield meta, np.frombuffer(data, dtype=RECORD)
    if handle.read(1):
        raise TagFormatError(f"trailing bytes after {count} records")
    if count == 0:
        yield meta, np.empty(0, dtype=RECORD)


def _csv_chunks(handle: BinaryIO, chunk_records: int) -> Iterator[Tuple[dict, np.ndarray]]:
    text = io.TextIOWrapper(handle, encoding="utf-8", newline="")
    try:
        meta = {"rep_period_ps": 0, "duration_ps": None}
        line = text.readline()
        while line.startswith("#"):
            key, _, value = line[1:].partition(":")
            if key.strip() in meta:
                meta[key.strip()] = int(value)
            line = text.readline()
        if [c.strip() for c in line.strip().split(",")] != list(CSV_COLUMNS):
            raise TagFormatError(f"CSV header must be '{','.join(CSV_COLUMNS)}', got {line.strip()!r}")
        empty = True
        try:
            reader = pd.read_csv(text, names=list(CSV_COLUMNS), dtype={"channel": "uint8", "time_ps": "int64"},
                                 chunksize=chunk_records)
            for frame in reader:
                block = np.empty(len(frame), dtype=RECORD)
                block["channel"] = frame["channel"].to_numpy()
                block["time"] = frame["time_ps"].to_numpy()
                empty = False
                yield meta, block
        except pd.errors.EmptyDataError:
            pass
        except (ValueError, pd.errors.ParserError) as e:
            raise TagFormatError(f"malformed CSV tag file: {e}") from e
        if empty:
            yield meta, np.empty(0, dtype=RECORD)
    finally:
        # leave the caller's handle open
        text.detach()


def iter_tag_chunks(source: PathOrFile,
                    chunk_records: int = CHUNK_RECORDS) -> Iterator[Tuple[dict, np.ndarray]]:
    """Yield (metadata, record block) pairs; memory stays bounded by the chunk size.

    Monotonicity is checked across chunk boundaries.
    """
    handle, owned = _open(source, "rb")
    try:
        lead = handle.read(len(MAGIC))
        handle.seek(-len(lead), io.SEEK_CUR)
        is_csv = lead[:1] == b"#" or lead.startswith(b"channel")
        chunks = _csv_chunks(handle, chunk_records) if is_csv else _binary_chunks(handle, chunk_records)
        last = None
        for meta, block in chunks:
            times = block["time"]
            if times.size:
                if np.any(np.diff(times.astype(np.int64)) < 0) or (last is not None and times[0] < last):
                    raise NonMonotonicError("tag times decrease")
                last = times[-1]
            yield meta, block
    finally:
        if owned:
            handle.close()


def read_tags(source: PathOrFile, chunk_records: int = CHUNK_RECORDS) -> TimeTagStream:
    """Read a binary or CSV tag file (format detected from the leading bytes)."""
    blocks, meta = [], {}
    for meta, block in iter_tag_chunks(source, chunk_records):
        blocks.append(block)
    records = np.concatenate(blocks) if blocks else np.empty(0, dtype=RECORD)
    times = records["time"].astype(np.int64)
    duration = meta.get("duration_ps")
    if duration is None:
        duration = int(times[-1]) if times.size else 0
    name = str(source) if not hasattr(source, "read") else getattr(source, "name", "")
    stream = TimeTagStream(records["channel"].copy(), times, int(meta.get("rep_period_ps", 0)),
                           int(duration), source=str(name))
    return stream.validate()
