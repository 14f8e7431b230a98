import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binseal.bincodes import (
    BinString,
    BitReader,
    DecodeError,
    RegionKind,
    RemainderKind,
    RemainderParams,
    decode_code,
    decode_egk,
    decode_fl,
    decode_limited_egk,
    decode_remainder,
    decode_tb,
    decode_trp,
    decode_tu,
    decode_unary,
    encode_egk,
    encode_fl,
    encode_limited_egk,
    encode_remainder,
    encode_tb,
    encode_trp,
    encode_tu,
    encode_unary,
    remainder_layout,
)


def bits(s: str) -> list[int]:
    return [int(c) for c in s]


class TestUnary:
    def test_zero(self):
        assert encode_unary(0).to01() == "0"

    def test_two(self):
        assert encode_unary(2).to01() == "110"

    def test_five(self):
        # five 1-bins then the 0 terminator: length B + 1
        assert encode_unary(5).to01() == "111110"

    def test_decode(self):
        assert decode_code(bits("110"), "unary") == (2, 3)

    def test_truncated_input_fails(self):
        with pytest.raises(DecodeError):
            decode_code([], "unary")


class TestTruncatedUnary:
    def test_below_cap(self):
        assert encode_tu(0, 3).to01() == "0"
        assert encode_tu(2, 5).to01() == "110"

    def test_at_cap_has_no_terminator(self):
        assert encode_tu(3, 3).to01() == "111"

    def test_above_cap_rejected(self):
        with pytest.raises(ValueError):
            encode_tu(4, 3)

    @pytest.mark.parametrize("cmax", [0, 1, 3, 7])
    def test_round_trip(self, cmax):
        for v in range(cmax + 1):
            out, used = decode_code(encode_tu(v, cmax), "tu", cmax=cmax)
            assert (out, used) == (v, len(encode_tu(v, cmax)))


class TestFixedLength:
    def test_examples(self):
        assert encode_fl(5, 7).to01() == "101"
        assert encode_fl(0, 1).to01() == "0"
        assert encode_fl(0, 0).to01() == ""

    @pytest.mark.parametrize("cmax", [0, 1, 6, 7, 31])
    def test_round_trip(self, cmax):
        for v in range(cmax + 1):
            assert decode_code(encode_fl(v, cmax), "fl", cmax=cmax)[0] == v


class TestTruncatedBinary:
    def test_short_codewords(self):
        assert encode_tb(0, 5).to01() == "00"
        assert encode_tb(1, 5).to01() == "01"

    def test_long_codeword(self):
        assert encode_tb(5, 5).to01() == "111"

    def test_power_of_two_matches_fl(self):
        for v in range(64):
            assert encode_tb(v, 63).bits == encode_fl(v, 63).bits

    @pytest.mark.parametrize("cmax", [0, 1, 2, 5, 10, 62, 63])
    def test_round_trip(self, cmax):
        for v in range(cmax + 1):
            assert decode_code(encode_tb(v, cmax), "tb", cmax=cmax)[0] == v


class TestTruncatedRice:
    def test_zero(self):
        assert encode_trp(0, 2, 5).to01() == "000"

    def test_mid(self):
        assert encode_trp(7, 2, 5).to01() == "1011"

    def test_largest_rice_path_value(self):
        # 19 is the top of the rice path for shift 2 before the escape kicks in
        out = encode_trp(19, 2, 5)
        assert out.to01() == "1111011"
        assert len(out) == 7

    def test_quotient_overflow_rejected(self):
        with pytest.raises(ValueError):
            encode_trp(24, 2, 5)

    @pytest.mark.parametrize("p", [0, 1, 2, 3])
    def test_round_trip(self, p):
        for v in range(6 << p):
            reader = BitReader(encode_trp(v, p, 5))
            assert decode_trp(reader, p, 5) == v


class TestExpGolomb:
    def test_examples(self):
        assert encode_egk(0, 0).to01() == "0"
        assert encode_egk(2, 0).to01() == "101"
        assert encode_egk(1, 1).to01() == "01"

    @pytest.mark.parametrize("k", [0, 1, 2, 3])
    def test_round_trip(self, k):
        for v in range(1 << 12):
            reader = BitReader(encode_egk(v, k))
            assert decode_egk(reader, k) == v


class TestLimitedEgk:
    def test_nine_bin_escape(self):
        p = RemainderParams(2, 15)
        out = encode_limited_egk(20, p)
        assert out.to01() == "111110" + "000"
        assert len(out) == 9

    def test_rice_zero_threshold_value(self):
        p = RemainderParams(0, 15)
        assert encode_limited_egk(5, p).to01() == "111110" + "0"

    def test_below_threshold_rejected(self):
        with pytest.raises(ValueError):
            encode_limited_egk(19, RemainderParams(2, 15))

    @pytest.mark.parametrize("rice", [0, 1, 2, 3])
    def test_round_trip_through_threshold_band(self, rice):
        p = RemainderParams(rice, 15)
        for rem in range(p.beta, p.beta + (1 << 14) + 1):
            reader = BitReader(encode_limited_egk(rem, p))
            assert decode_limited_egk(reader, p) == rem

    @pytest.mark.parametrize("rice", [0, 1, 2, 3])
    def test_codeword_cap(self, rice):
        p = RemainderParams(rice, 15)
        for rem in range(p.beta, 1 << 15):
            assert len(encode_limited_egk(rem, p)) <= 32
        assert len(encode_limited_egk(1 << 15, p)) <= 32


class TestRemainder:
    def test_rice_path(self):
        out = encode_remainder(19, RemainderParams(2, 15))
        assert len(out) == 7
        assert remainder_layout(19, RemainderParams(2, 15))[0] is RemainderKind.TRP

    def test_escape_path(self):
        assert remainder_layout(20, RemainderParams(2, 15))[0] is RemainderKind.EGK

    def test_zero(self):
        assert encode_remainder(0, RemainderParams(0, 15)).to01() == "0"

    @pytest.mark.parametrize("rice", [0, 1, 2, 3])
    def test_threshold_continuity(self, rice):
        p = RemainderParams(rice, 15)
        below = encode_remainder(p.beta - 1, p)
        above = encode_remainder(p.beta, p)
        assert remainder_layout(p.beta - 1, p)[0] is RemainderKind.TRP
        assert remainder_layout(p.beta, p)[0] is RemainderKind.EGK
        assert decode_remainder(BitReader(below), p) == p.beta - 1
        assert decode_remainder(BitReader(above), p) == p.beta

    def test_layout_matches_emitted_bins(self):
        for rice in range(4):
            p = RemainderParams(rice, 15)
            for rem in list(range(0, 80)) + [500, 5000, 1 << 14]:
                kind, prefix_len, suffix_len = remainder_layout(rem, p)
                assert prefix_len + suffix_len == len(encode_remainder(rem, p))

    @given(rem=st.integers(0, 1 << 15), rice=st.integers(0, 3))
    @settings(max_examples=300, deadline=None)
    def test_round_trip_property(self, rem, rice):
        p = RemainderParams(rice, 15)
        value, used = decode_code(encode_remainder(rem, p), "remainder", params=p)
        assert value == rem
        assert used == len(encode_remainder(rem, p))


def _assert_prefix_free(codewords: list[str]):
    codewords = sorted(codewords)
    for a, b in zip(codewords, codewords[1:]):
        assert not b.startswith(a), f"{a!r} prefixes {b!r}"


class TestPrefixFreeness:
    def test_unary(self):
        _assert_prefix_free([encode_unary(v).to01() for v in range(1 << 12)])

    def test_tu(self):
        for cmax in (3, 7, 20):
            _assert_prefix_free([encode_tu(v, cmax).to01() for v in range(cmax + 1)])

    def test_tb(self):
        for cmax in (1, 2, 5, 10, 63, 100):
            _assert_prefix_free([encode_tb(v, cmax).to01() for v in range(cmax + 1)])

    def test_trp(self):
        for p in range(4):
            _assert_prefix_free([encode_trp(v, p, 5).to01() for v in range(6 << p)])

    def test_egk(self):
        for k in range(3):
            _assert_prefix_free([encode_egk(v, k).to01() for v in range(1 << 12)])

    def test_remainder_mixed_paths(self):
        for rice in range(4):
            p = RemainderParams(rice, 15)
            _assert_prefix_free([encode_remainder(v, p).to01() for v in range(1 << 12)])


class TestLengthMonotonicity:
    def test_unary(self):
        lens = [len(encode_unary(v)) for v in range(200)]
        assert lens == sorted(lens)

    def test_tu(self):
        lens = [len(encode_tu(v, 50)) for v in range(51)]
        assert lens == sorted(lens)

    def test_egk(self):
        for k in range(3):
            lens = [len(encode_egk(v, k)) for v in range(1 << 12)]
            assert lens == sorted(lens)


class TestBinString:
    def test_regions_merge_and_cover(self):
        s = BinString()
        s.append_bits([1, 0, 1], RegionKind.CONTEXT)
        s.append_bits([1, 1], RegionKind.BYPASS_CLEAR)
        s.append_bits([0], RegionKind.BYPASS_CLEAR)
        s.check_regions()
        assert [(r.start, r.length, r.kind) for r in s.regions] == [
            (0, 3, RegionKind.CONTEXT), (3, 3, RegionKind.BYPASS_CLEAR)]

    def test_relabel_splits(self):
        s = BinString([1, 0, 1, 1, 0, 1], RegionKind.BYPASS_CLEAR)
        s.relabel(2, 2, RegionKind.BYPASS_ENCRYPTABLE)
        s.check_regions()
        kinds = [r.kind for r in s.regions]
        assert kinds == [RegionKind.BYPASS_CLEAR, RegionKind.BYPASS_ENCRYPTABLE,
                         RegionKind.BYPASS_CLEAR]
        assert s.kind_at(3) is RegionKind.BYPASS_ENCRYPTABLE

    def test_extend_keeps_region_offsets(self):
        a = BinString([1, 1], RegionKind.CONTEXT)
        b = BinString([0, 0, 1], RegionKind.BYPASS_CLEAR)
        a.extend(b)
        a.check_regions()
        assert a.to01() == "11001"

    @given(st.lists(st.integers(0, 1), max_size=40),
           st.sampled_from(list(RegionKind)))
    @settings(max_examples=100, deadline=None)
    def test_append_preserves_invariants(self, values, kind):
        s = BinString()
        s.append_bits(values, kind)
        s.append_bits(values, RegionKind.CONTEXT)
        s.check_regions()
        assert len(s) == 2 * len(values)


class TestRemainderParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            RemainderParams(4, 15)
        with pytest.raises(ValueError):
            RemainderParams(2, 0)

    def test_threshold(self):
        assert RemainderParams(2, 15).beta == 20
        assert RemainderParams(0, 15).beta == 5
