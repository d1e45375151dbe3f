import io

import numpy as np
import pytest

from photonstats.errors import (
    MagicMismatchError,
    NonMonotonicError,
    TagFormatError,
    TruncatedPayloadError,
)
from photonstats.timetags import (
    HEADER,
    MAGIC,
    RECORD,
    TimeTagStream,
    iter_tag_chunks,
    merge_streams,
    read_tags,
    slice_time,
    write_tags,
    write_tags_csv,
)

from conftest import make_stream, random_stream


def to_bytes(stream):
    buffer = io.BytesIO()
    write_tags(stream, buffer)
    return buffer.getvalue()


def test_empty_stream_is_header_only():
    raw = to_bytes(TimeTagStream.empty(400_000, 10 ** 9))
    assert len(raw) == HEADER.size
    assert HEADER.unpack(raw)[-1] == 0
    back = read_tags(io.BytesIO(raw))
    assert len(back) == 0
    assert back.duration_ps == 10 ** 9


def test_three_tags_round_trip():
    stream = make_stream([1, 2, 1], [100, 250, 900], duration_ps=1000)
    raw = to_bytes(stream)
    assert len(raw) == HEADER.size + 3 * RECORD.itemsize
    assert read_tags(io.BytesIO(raw)).equals(stream)


def test_records_sorted_by_time_then_channel():
    stream = make_stream([2, 1, 1], [500, 500, 100], duration_ps=1000)
    back = read_tags(io.BytesIO(to_bytes(stream)))
    assert back.times.tolist() == [100, 500, 500]
    assert back.channels.tolist() == [1, 1, 2]


def test_large_binary_round_trip_is_byte_exact(rng):
    stream = random_stream(rng, 1_000_000, 15 * 10 ** 12)
    raw = to_bytes(stream)
    back = read_tags(io.BytesIO(raw), chunk_records=100_000)
    assert back.equals(stream)
    assert to_bytes(back) == raw


def test_csv_round_trip(tmp_path, rng):
    stream = random_stream(rng, 100_000, 10 ** 12)
    path = tmp_path / "tags.csv"
    write_tags_csv(stream, path)
    assert read_tags(path, chunk_records=7_000).equals(stream)


@pytest.mark.slow
@pytest.mark.parametrize("suffix", [".ttag", ".csv"])
def test_million_tags_stream_through_chunks(tmp_path, rng, suffix):
    stream = random_stream(rng, 1_000_000, 15 * 10 ** 12)
    path = tmp_path / f"tags{suffix}"
    (write_tags_csv if suffix == ".csv" else write_tags)(stream, path)
    # 300 000 does not divide the record count: the last block is short
    blocks = [block for _, block in iter_tag_chunks(path, chunk_records=300_000)]
    assert [len(b) for b in blocks] == [300_000, 300_000, 300_000, 100_000]
    times = np.concatenate([b["time"] for b in blocks]).astype(np.int64)
    assert np.array_equal(times, stream.times)
    assert np.array_equal(np.concatenate([b["channel"] for b in blocks]), stream.channels)
    back = read_tags(path, chunk_records=300_000)
    assert back.equals(stream)
    assert to_bytes(back) == to_bytes(stream)


def test_binary_and_csv_read_identically(tmp_path, rng):
    stream = random_stream(rng, 5_000, 10 ** 10)
    write_tags(stream, tmp_path / "tags.ttag")
    write_tags_csv(stream, tmp_path / "tags.csv")
    assert read_tags(tmp_path / "tags.ttag").equals(read_tags(tmp_path / "tags.csv"))


def test_plain_csv_with_two_rows(tmp_path):
    path = tmp_path / "two.csv"
    path.write_text("channel,time_ps\n1,100\n2,250\n")
    stream = read_tags(path)
    assert len(stream) == 2
    assert stream.channels.tolist() == [1, 2]
    assert stream.duration_ps == 250


def test_csv_with_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# rep_period_ps: 400000\nchan,t\n1,100\n")
    with pytest.raises(TagFormatError):
        read_tags(path)


def test_corrupted_magic():
    raw = bytearray(to_bytes(make_stream([1], [5], duration_ps=10)))
    raw[:4] = b"XXXX"
    with pytest.raises(MagicMismatchError):
        read_tags(io.BytesIO(bytes(raw)))


def test_truncated_payload():
    raw = to_bytes(make_stream([1, 2, 1], [1, 2, 3], duration_ps=10))
    with pytest.raises(TruncatedPayloadError):
        read_tags(io.BytesIO(raw[:-4]))
    with pytest.raises(TruncatedPayloadError):
        read_tags(io.BytesIO(raw[:10]))


def test_trailing_bytes():
    raw = to_bytes(make_stream([1], [1], duration_ps=10))
    with pytest.raises(TagFormatError):
        read_tags(io.BytesIO(raw + b"\x00"))


def test_non_monotonic_times():
    records = np.zeros(3, dtype=RECORD)
    records["channel"] = [1, 2, 1]
    records["time"] = [10, 30, 20]
    raw = HEADER.pack(MAGIC, 1, 400_000, 2, 100, 3) + records.tobytes()
    with pytest.raises(NonMonotonicError):
        read_tags(io.BytesIO(raw))


def test_monotonicity_checked_across_chunks():
    records = np.zeros(4, dtype=RECORD)
    records["channel"] = 1
    records["time"] = [10, 20, 15, 30]
    raw = HEADER.pack(MAGIC, 1, 400_000, 1, 100, 4) + records.tobytes()
    with pytest.raises(NonMonotonicError):
        list(iter_tag_chunks(io.BytesIO(raw), chunk_records=2))


def test_times_beyond_duration_rejected():
    records = np.zeros(1, dtype=RECORD)
    records["channel"] = 1
    records["time"] = 500
    raw = HEADER.pack(MAGIC, 1, 400_000, 1, 100, 1) + records.tobytes()
    with pytest.raises(TagFormatError):
        read_tags(io.BytesIO(raw))


def test_merge_and_slice():
    first = make_stream([1, 1], [10, 40], duration_ps=100)
    second = make_stream([2, 2], [20, 40], duration_ps=120)
    merged = merge_streams(first, second)
    assert merged.times.tolist() == [10, 20, 40, 40]
    assert merged.channels.tolist() == [1, 2, 1, 2]
    assert merged.duration_ps == 120

    window = slice_time(merged, 15, 45)
    assert window.times.tolist() == [5, 25, 25]
    assert window.duration_ps == 30


def test_mismatched_lengths_rejected():
    with pytest.raises(TagFormatError):
        TimeTagStream(np.array([1, 2], np.uint8), np.array([1]), 400_000, 10)
