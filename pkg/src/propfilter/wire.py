"""Byte-exact encoding of the exchange message.

Layout::

    PF1,<sender>,<x>,<y>,<t>,<n_sim>,<n_nbhd>\\n
    <record line> * (n_sim + n_nbhd)

Every record line is ``user_id,item_id,value,weight`` right-padded with spaces
to 99 bytes and terminated by ``\\n``, so each rating costs exactly 100 bytes.
Similarity records come first. Neighborhood records carry the all-zeros user id:
aggregated entries have no origin.

The decoder is strict. Anything it accepts re-encodes to the same bytes.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .prefs import (
    ContextData,
    NeighborhoodEntry,
    NeighborhoodPreferenceList,
    SimilarityData,
)

VERSION = 1
MAGIC = f"PF{VERSION}"
RECORD_SIZE = 100
ANONYMOUS_USER = "00000000-0000-0000-0000-000000000000"

_UUID = r"[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}"
_UUID_RE = re.compile(_UUID)
_ITEM_RE = re.compile(r"[!-+\--~]+")  # printable ASCII minus space and comma
_VALUE_RE = re.compile(r"[1-5](?:\.[0-9])?")
_WEIGHT_RE = re.compile(r"[1-9][0-9]{0,17}")
_COUNT_RE = re.compile(r"0|[1-9][0-9]{0,8}")
_VERSION_RE = re.compile(r"PF[0-9]+")
MAX_HEADER = 256


class WireError(Exception):
    pass


class EncodeError(WireError):
    pass


class DecodeError(WireError):
    """Decoding failed at ``offset`` bytes into the input."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class Truncated(DecodeError):
    pass


class BadVersion(DecodeError):
    pass


class MalformedHeader(DecodeError):
    pass


class MalformedRecord(DecodeError):
    pass


class TrailingData(DecodeError):
    pass


@dataclass(frozen=True)
class RatingRecord:
    user_id: str
    item_id: str
    value: int | float
    weight: int = 1

    def line(self) -> str:
        if not _UUID_RE.fullmatch(self.user_id):
            raise EncodeError(f"user_id {self.user_id!r} is not a 36-character pseudo-id")
        if not _ITEM_RE.fullmatch(self.item_id):
            raise EncodeError(f"item_id {self.item_id!r} must be printable ASCII without ',' or spaces")
        text = f"{self.user_id},{self.item_id},{_format_value(self.value)},{_format_weight(self.weight)}"
        if len(text) > RECORD_SIZE - 1:
            raise EncodeError(f"record for {self.item_id!r} is {len(text)} bytes, layout allows {RECORD_SIZE - 1}")
        return text.ljust(RECORD_SIZE - 1) + "\n"


@dataclass(frozen=True)
class ExchangeMessage:
    sender: str
    context: ContextData
    similarity_payload: tuple[RatingRecord, ...] = ()
    neighborhood_payload: tuple[RatingRecord, ...] = ()
    version: int = VERSION

    def __post_init__(self) -> None:
        object.__setattr__(self, "similarity_payload", tuple(self.similarity_payload))
        object.__setattr__(self, "neighborhood_payload", tuple(self.neighborhood_payload))


def _format_value(value) -> str:
    if isinstance(value, bool):
        raise EncodeError("rating value must be numeric")
    if isinstance(value, int):
        if not 1 <= value <= 5:
            raise EncodeError(f"rating value {value} outside [1, 5]")
        return str(value)
    if not isinstance(value, float) or not 1.0 <= value <= 5.0:
        raise EncodeError(f"rating value {value!r} outside [1.0, 5.0]")
    text = f"{value:.1f}"
    if float(text) != value:
        raise EncodeError(f"aggregated value {value!r} needs more than one decimal")
    return text


def _format_weight(weight) -> str:
    if isinstance(weight, bool) or not isinstance(weight, int) or weight < 1:
        raise EncodeError(f"weight must be a positive int, got {weight!r}")
    text = str(weight)
    if not _WEIGHT_RE.fullmatch(text):
        raise EncodeError(f"weight {weight} too large")
    return text


def _format_float(x: float, name: str) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise EncodeError(f"{name} must be finite")
    return repr(x)


def _header(m: ExchangeMessage) -> str:
    if m.version != VERSION:
        raise EncodeError(f"cannot encode version {m.version}")
    if not _UUID_RE.fullmatch(m.sender):
        raise EncodeError(f"sender {m.sender!r} is not a 36-character pseudo-id")
    if m.context.tags:
        raise EncodeError("context tags are receiver-local and not transmitted")
    x, y = m.context.position
    return (
        f"{MAGIC},{m.sender},{_format_float(x, 'x')},{_format_float(y, 'y')},"
        f"{_format_float(m.context.timestamp, 't')},"
        f"{len(m.similarity_payload)},{len(m.neighborhood_payload)}\n"
    )


def encode(m: ExchangeMessage) -> bytes:
    parts = [_header(m)]
    parts.extend(r.line() for r in m.similarity_payload)
    parts.extend(r.line() for r in m.neighborhood_payload)
    return "".join(parts).encode("ascii")


def payload_size(m: ExchangeMessage) -> int:
    """Length of ``encode(m)`` without encoding the records."""
    n = len(m.similarity_payload) + len(m.neighborhood_payload)
    return len(_header(m)) + RECORD_SIZE * n


def _parse_float(text: str, name: str, offset: int) -> float:
    try:
        x = float(text)
    except ValueError:
        raise MalformedHeader(f"{name} {text!r} is not a number", offset) from None
    if not math.isfinite(x) or repr(x) != text:
        raise MalformedHeader(f"{name} {text!r} is not canonical", offset)
    return x


def _parse_header(data: bytes) -> tuple[str, float, float, float, int, int, int]:
    if not data:
        raise Truncated("empty input", 0)
    end = data.find(b"\n", 0, MAX_HEADER)
    if end < 0:
        if len(data) < MAX_HEADER:
            raise Truncated("header line not terminated", len(data))
        raise MalformedHeader("header line too long", 0)
    try:
        line = data[:end].decode("ascii")
    except UnicodeDecodeError as exc:
        raise MalformedHeader("non-ASCII byte in header", exc.start) from None
    fields = line.split(",")
    if not _VERSION_RE.fullmatch(fields[0]):
        raise MalformedHeader(f"bad magic {fields[0][:8]!r}", 0)
    if fields[0] != MAGIC:
        raise BadVersion(f"unsupported protocol version {fields[0][2:]}", 2)
    if len(fields) != 7:
        raise MalformedHeader(f"header has {len(fields)} fields, expected 7", 0)
    offsets = [0]
    for f in fields[:-1]:
        offsets.append(offsets[-1] + len(f) + 1)
    _, sender, xs, ys, ts, n_sim, n_nbhd = fields
    if not _UUID_RE.fullmatch(sender):
        raise MalformedHeader(f"bad sender id {sender[:40]!r}", offsets[1])
    x = _parse_float(xs, "x", offsets[2])
    y = _parse_float(ys, "y", offsets[3])
    t = _parse_float(ts, "t", offsets[4])
    if t < 0:
        raise MalformedHeader("negative timestamp", offsets[4])
    for text, off in ((n_sim, offsets[5]), (n_nbhd, offsets[6])):
        if not _COUNT_RE.fullmatch(text):
            raise MalformedHeader(f"bad record count {text!r}", off)
    return sender, x, y, t, int(n_sim), int(n_nbhd), end + 1


def _parse_record(chunk: bytes, offset: int) -> RatingRecord:
    if chunk[-1:] != b"\n":
        raise MalformedRecord("record not terminated by newline", offset + RECORD_SIZE - 1)
    body = chunk[:-1]
    try:
        text = body.decode("ascii")
    except UnicodeDecodeError as exc:
        raise MalformedRecord("non-ASCII byte in record", offset + exc.start) from None
    content = text.rstrip(" ")
    if not content:
        raise MalformedRecord("blank record", offset)
    fields = content.split(",")
    if len(fields) != 4:
        raise MalformedRecord(f"record has {len(fields)} fields, expected 4", offset)
    user_id, item_id, value_s, weight_s = fields
    pos = offset
    if not _UUID_RE.fullmatch(user_id):
        raise MalformedRecord("bad user_id", pos)
    pos += len(user_id) + 1
    if not _ITEM_RE.fullmatch(item_id):
        raise MalformedRecord("bad item_id", pos)
    pos += len(item_id) + 1
    if not _VALUE_RE.fullmatch(value_s) or float(value_s) > 5.0:
        raise MalformedRecord(f"bad rating value {value_s!r}", pos)
    value: int | float = float(value_s) if "." in value_s else int(value_s)
    pos += len(value_s) + 1
    if not _WEIGHT_RE.fullmatch(weight_s):
        raise MalformedRecord(f"bad weight {weight_s!r}", pos)
    return RatingRecord(user_id, item_id, value, int(weight_s))


def decode(data: bytes) -> ExchangeMessage:
    data = bytes(data)
    sender, x, y, t, n_sim, n_nbhd, offset = _parse_header(data)
    n = n_sim + n_nbhd
    expected = offset + RECORD_SIZE * n
    if len(data) < expected:
        raise Truncated(f"expected {n} records, input ends early", len(data))
    if len(data) > expected:
        raise TrailingData("bytes after the last record", expected)
    records = []
    for i in range(n):
        start = offset + i * RECORD_SIZE
        records.append(_parse_record(data[start:start + RECORD_SIZE], start))
    return ExchangeMessage(
        sender=sender,
        context=ContextData((x, y), t),
        similarity_payload=tuple(records[:n_sim]),
        neighborhood_payload=tuple(records[n_sim:]),
    )


def similarity_records(sender: str, data: SimilarityData) -> tuple[RatingRecord, ...]:
    return tuple(RatingRecord(sender, i, v, 1) for i, v in sorted(data.vector.items()))


def neighborhood_records(nbhd: NeighborhoodPreferenceList) -> tuple[RatingRecord, ...]:
    return tuple(
        RatingRecord(ANONYMOUS_USER, e.item_id, float(e.value), e.weight)
        for e in nbhd.sorted_entries()
    )


def records_to_similarity(records) -> SimilarityData:
    return SimilarityData({r.item_id: int(r.value) for r in records})


def records_to_neighborhood(records, capacity: int) -> NeighborhoodPreferenceList:
    """Rebuild a received neighborhood list, keeping at most ``capacity`` entries."""
    nbhd = NeighborhoodPreferenceList.from_entries(
        (NeighborhoodEntry(r.item_id, float(r.value), r.weight) for r in records),
        capacity=max(capacity, len(records)) or 1,
    )
    if len(nbhd) <= capacity:
        return NeighborhoodPreferenceList(nbhd.entries, capacity)
    keep = sorted(nbhd.entries.values(), key=lambda e: (-e.weight, e.item_id))[:capacity]
    return NeighborhoodPreferenceList({e.item_id: e for e in keep}, capacity)


def build_message(
    sender: str,
    context: ContextData,
    shared: SimilarityData,
    nbhd: NeighborhoodPreferenceList,
) -> ExchangeMessage:
    return ExchangeMessage(
        sender=sender,
        context=ContextData(context.position, context.timestamp),
        similarity_payload=similarity_records(sender, shared),
        neighborhood_payload=neighborhood_records(nbhd),
    )
