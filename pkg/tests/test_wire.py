import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from propfilter.prefs import ContextData, NeighborhoodEntry, NeighborhoodPreferenceList, SimilarityData
from propfilter.wire import (
    ANONYMOUS_USER,
    RECORD_SIZE,
    BadVersion,
    DecodeError,
    EncodeError,
    ExchangeMessage,
    MalformedHeader,
    MalformedRecord,
    RatingRecord,
    TrailingData,
    Truncated,
    build_message,
    decode,
    encode,
    payload_size,
    records_to_neighborhood,
    records_to_similarity,
)

from conftest import pseudo

SENDER = pseudo(1)

uuid_st = st.integers(0, 2**32 - 1).map(pseudo)
item_st = st.text(st.characters(min_codepoint=33, max_codepoint=126, exclude_characters=","), min_size=1, max_size=40)
value_st = st.one_of(st.integers(1, 5), st.integers(10, 50).map(lambda n: n / 10))
record_st = st.builds(RatingRecord, uuid_st, item_st, value_st, st.integers(1, 10**17))
coord_st = st.floats(allow_nan=False, allow_infinity=False, width=64)
message_st = st.builds(
    ExchangeMessage,
    uuid_st,
    st.builds(ContextData, st.tuples(coord_st, coord_st), st.floats(0, 1e9)),
    st.lists(record_st, max_size=6),
    st.lists(record_st, max_size=6),
)


def simple(n_sim=2, n_nbhd=1):
    return ExchangeMessage(
        SENDER,
        ContextData((1.5, -2.0), 30.0),
        [RatingRecord(SENDER, f"tt{i:07d}", 1 + i % 5, 1) for i in range(n_sim)],
        [RatingRecord(ANONYMOUS_USER, f"tt{i:07d}", 3.5, 2 + i) for i in range(n_nbhd)],
    )


@settings(max_examples=300)
@given(message_st)
def test_round_trip(m):
    data = encode(m)
    assert decode(data) == m
    assert encode(decode(data)) == data
    assert payload_size(m) == len(data)


@settings(max_examples=200)
@given(message_st, message_st)
def test_encoding_is_injective(a, b):
    if a != b:
        assert encode(a) != encode(b)


def test_record_layout():
    data = encode(simple())
    header_end = data.index(b"\n") + 1
    body = data[header_end:]
    assert len(body) == 3 * RECORD_SIZE
    for i in range(3):
        rec = body[i * RECORD_SIZE:(i + 1) * RECORD_SIZE]
        assert rec.endswith(b"\n") and b"\n" not in rec[:-1]


def test_thousand_records_size():
    m = ExchangeMessage(
        SENDER,
        ContextData((0.0, 0.0), 0.0),
        [RatingRecord(SENDER, f"tt{i:07d}", 3, 1) for i in range(1000)],
    )
    header = len(f"PF1,{SENDER},0.0,0.0,0.0,1000,0\n")
    assert len(encode(m)) == 100_000 + header
    assert payload_size(m) == 100_000 + header


def test_empty_payload_is_header_only():
    m = ExchangeMessage(SENDER, ContextData((0.0, 0.0), 0.0))
    data = encode(m)
    assert data == f"PF1,{SENDER},0.0,0.0,0.0,0,0\n".encode()
    assert decode(data) == m


def test_empty_input_is_truncated():
    with pytest.raises(Truncated) as info:
        decode(b"")
    assert info.value.offset == 0


def test_cut_short_is_truncated():
    data = encode(simple())
    with pytest.raises(Truncated):
        decode(data[:-1])
    with pytest.raises(Truncated):
        decode(data[:10])


def test_trailing_bytes_rejected():
    data = encode(simple())
    with pytest.raises(TrailingData) as info:
        decode(data + b"x")
    assert info.value.offset == len(data)


def test_flipped_delimiter_reports_offset():
    data = bytearray(encode(simple()))
    header_end = data.index(b"\n") + 1
    second = header_end + RECORD_SIZE
    comma = data.index(b",", second)
    data[comma] = ord(";")
    with pytest.raises(MalformedRecord) as info:
        decode(bytes(data))
    assert info.value.offset == second
    assert str(second) in str(info.value)


def test_bad_value_reports_field_offset():
    data = bytearray(encode(simple(1, 0)))
    header_end = data.index(b"\n") + 1
    value_at = header_end + 36 + 1 + len("tt0000000") + 1
    data[value_at] = ord("7")
    with pytest.raises(MalformedRecord) as info:
        decode(bytes(data))
    assert info.value.offset == value_at


def test_bad_version():
    data = encode(simple()).replace(b"PF1", b"PF2", 1)
    with pytest.raises(BadVersion):
        decode(data)


def test_bad_magic_and_header_fields():
    with pytest.raises(MalformedHeader):
        decode(b"XX1,a\n")
    with pytest.raises(MalformedHeader):
        decode(f"PF1,{SENDER},0.0,0.0,0.0,1\n".encode())
    with pytest.raises(MalformedHeader):
        decode(f"PF1,{SENDER},nan,0.0,0.0,0,0\n".encode())
    with pytest.raises(MalformedHeader):
        decode(f"PF1,{SENDER},1.50,0.0,0.0,0,0\n".encode())


def test_encode_rejects_out_of_layout_values():
    ctx = ContextData((0.0, 0.0), 0.0)
    for bad in (
        RatingRecord(SENDER, "a", 6, 1),
        RatingRecord(SENDER, "a", 3.25, 1),
        RatingRecord(SENDER, "a,b", 3, 1),
        RatingRecord(SENDER, "a", 3, 0),
        RatingRecord("short", "a", 3, 1),
        RatingRecord(SENDER, "x" * 70, 3, 1),
    ):
        with pytest.raises(EncodeError):
            encode(ExchangeMessage(SENDER, ctx, [bad]))


def test_context_tags_never_transmitted():
    m = ExchangeMessage(SENDER, ContextData((0.0, 0.0), 0.0, tags={"place": "cafe"}))
    with pytest.raises(EncodeError):
        encode(m)
    built = build_message(SENDER, ContextData((0.0, 0.0), 0.0, tags={"place": "cafe"}),
                          SimilarityData({}), NeighborhoodPreferenceList({}, 5))
    assert b"cafe" not in encode(built)


def test_neighborhood_records_are_anonymous():
    nb = NeighborhoodPreferenceList({"x": NeighborhoodEntry("x", 4.5, 3)}, 5)
    m = build_message(SENDER, ContextData((0.0, 0.0), 0.0), SimilarityData({"y": 2}), nb)
    assert all(r.user_id == ANONYMOUS_USER for r in m.neighborhood_payload)
    back = decode(encode(m))
    assert records_to_similarity(back.similarity_payload).vector == {"y": 2}
    assert records_to_neighborhood(back.neighborhood_payload, 5) == nb


def test_received_neighborhood_capped_to_capacity():
    records = [RatingRecord(ANONYMOUS_USER, f"i{n}", 3.0, 10 - n) for n in range(5)]
    nb = records_to_neighborhood(records, 2)
    assert set(nb.entries) == {"i0", "i1"}


def _mutations(base: bytes, rng: np.random.Generator, n: int):
    for _ in range(n):
        data = bytearray(base)
        kind = rng.integers(4)
        if kind == 0 and data:
            data[rng.integers(len(data))] = rng.integers(256)
        elif kind == 1 and data:
            del data[rng.integers(len(data))]
        elif kind == 2:
            data.insert(rng.integers(len(data) + 1), rng.integers(256))
        else:
            cut = rng.integers(len(data) + 1)
            data = data[:cut]
        yield bytes(data)


def fuzz_decode(n_inputs: int, seed: int) -> tuple[int, int]:
    """Feed random and mutated inputs to the decoder. Returns (accepted, rejected).

    Any exception other than DecodeError, or an accepted input that does not
    re-encode to the same bytes, fails the assertion."""
    rng = np.random.default_rng(seed)
    base = encode(simple(3, 2))
    accepted = rejected = 0
    half = n_inputs // 2
    inputs = [rng.bytes(int(rng.integers(0, 400))) for _ in range(half)]
    inputs += list(_mutations(base, rng, n_inputs - half))
    for data in inputs:
        try:
            m = decode(data)
        except DecodeError as exc:
            assert 0 <= exc.offset <= len(data)
            rejected += 1
        else:
            assert encode(m) == data
            accepted += 1
    return accepted, rejected


def test_fuzz_small():
    accepted, rejected = fuzz_decode(5_000, 99)
    assert accepted + rejected == 5_000
    assert rejected > 0


@settings(max_examples=300)
@given(st.binary(max_size=300))
def test_decode_never_crashes(data):
    try:
        m = decode(data)
    except DecodeError:
        return
    assert encode(m) == data
