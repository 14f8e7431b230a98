"""Binarization codes and the bin-string container.

Syntax-element values become ordered sequences of binary symbols (bins).
A :class:`BinString` keeps, next to the bins themselves, a region map that
classifies every span as context-modelled, bypass-clear, or
bypass-encryptable.  Only bypass spans may ever be touched by encryption,
and the encryptable label is applied exclusively by the crypto layer.

Six codeword families are provided (unary, truncated unary, fixed length,
truncated binary, truncated rice, k-th order exp-Golomb) plus the
length-capped exp-Golomb escape used for large residual remainders.  Every
encoder has an exact inverse; suffix bits are written most-significant
first throughout.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

# Quotient cutoff separating the rice path from the capped exp-Golomb
# escape, and the hard cap on any remainder codeword.
BIN_REDUC = 5
MAX_CODEWORD_BITS = 32


class RegionKind(enum.Enum):
    CONTEXT = "context"
    BYPASS_CLEAR = "bypass"
    BYPASS_ENCRYPTABLE = "encryptable"


@dataclass(frozen=True)
class Region:
    start: int
    length: int
    kind: RegionKind


class DecodeError(ValueError):
    """Raised when bins cannot be parsed; carries the offending bit offset."""

    def __init__(self, offset: int, message: str):
        super().__init__(f"bit {offset}: {message}")
        self.offset = offset


class BinString:
    """Ordered bin sequence plus a contiguous, non-overlapping region map."""

    __slots__ = ("bits", "_regions")

    def __init__(self, bits: Iterable[int] = (), kind: RegionKind = RegionKind.BYPASS_CLEAR):
        self.bits: list[int] = []
        # internal region rows are mutable [start, length, kind] triples
        self._regions: list[list] = []
        bits = list(bits)
        if bits:
            self.append_bits(bits, kind)

    def __len__(self) -> int:
        return len(self.bits)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, BinString):
            return self.bits == other.bits
        return NotImplemented

    def __repr__(self) -> str:
        s = self.to01()
        if len(s) > 64:
            s = s[:61] + "..."
        return f"BinString({s!r}, {len(self.bits)} bins)"

    def to01(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    @property
    def regions(self) -> list[Region]:
        return [Region(s, n, k) for s, n, k in self._regions]

    def append_bit(self, value: int, kind: RegionKind) -> None:
        self.bits.append(1 if value else 0)
        regs = self._regions
        if regs and regs[-1][2] is kind:
            regs[-1][1] += 1
        else:
            regs.append([len(self.bits) - 1, 1, kind])

    def append_bits(self, values: Iterable[int], kind: RegionKind) -> None:
        values = [1 if v else 0 for v in values]
        if not values:
            return
        start = len(self.bits)
        self.bits.extend(values)
        regs = self._regions
        if regs and regs[-1][2] is kind:
            regs[-1][1] += len(values)
        else:
            regs.append([start, len(values), kind])

    def append_uint(self, value: int, width: int, kind: RegionKind) -> None:
        """Append ``width`` bits of ``value``, most-significant bit first."""
        if width:
            self.append_bits(((value >> (width - 1 - i)) & 1 for i in range(width)), kind)

    def extend(self, other: "BinString") -> None:
        base = len(self.bits)
        self.bits.extend(other.bits)
        for s, n, k in other._regions:
            regs = self._regions
            if regs and regs[-1][2] is k and regs[-1][0] + regs[-1][1] == base + s:
                regs[-1][1] += n
            else:
                regs.append([base + s, n, k])

    def copy(self) -> "BinString":
        dup = BinString()
        dup.bits = self.bits.copy()
        dup._regions = [row.copy() for row in self._regions]
        return dup

    def flip(self, index: int) -> None:
        self.bits[index] ^= 1

    def relabel(self, start: int, length: int, kind: RegionKind) -> None:
        """Re-classify ``[start, start+length)``; splits regions as needed."""
        if length <= 0:
            return
        end = start + length
        if start < 0 or end > len(self.bits):
            raise IndexError("relabel span outside bin string")
        rebuilt: list[list] = []
        for s, n, k in self._regions:
            r_end = s + n
            if r_end <= start or s >= end:
                rebuilt.append([s, n, k])
                continue
            if s < start:
                rebuilt.append([s, start - s, k])
            lo, hi = max(s, start), min(r_end, end)
            rebuilt.append([lo, hi - lo, kind])
            if r_end > end:
                rebuilt.append([end, r_end - end, k])
        merged: list[list] = []
        for row in rebuilt:
            if merged and merged[-1][2] is row[2] and merged[-1][0] + merged[-1][1] == row[0]:
                merged[-1][1] += row[1]
            else:
                merged.append(row)
        self._regions = merged

    def kind_at(self, index: int) -> RegionKind:
        for s, n, k in self._regions:
            if s <= index < s + n:
                return k
        raise IndexError(index)

    def check_regions(self) -> None:
        """Assert the region-map invariants (test helper)."""
        pos = 0
        for s, n, k in self._regions:
            if s != pos or n <= 0 or not isinstance(k, RegionKind):
                raise AssertionError(f"bad region map at {s}")
            pos += n
        if pos != len(self.bits):
            raise AssertionError("region map does not cover the bin string")


@dataclass(frozen=True)
class RemainderParams:
    """Parameters of the residual-remainder binarization."""

    c_rice_param: int
    log2_tr_range: int = 15
    bin_reduc: int = BIN_REDUC

    def __post_init__(self):
        if not 0 <= self.c_rice_param <= 3:
            raise ValueError("rice parameter must be in 0..3")
        if self.log2_tr_range < 1:
            raise ValueError("log2_tr_range must be >= 1")
        if self.bin_reduc != BIN_REDUC:
            raise ValueError("bin_reduc is fixed at 5")

    @property
    def beta(self) -> int:
        """Rice/exp-Golomb selection threshold."""
        return self.bin_reduc << self.c_rice_param


# ---------------------------------------------------------------------------
# encoders


def encode_unary(value: int) -> BinString:
    if value < 0:
        raise ValueError("unary code needs a non-negative value")
    out = BinString()
    out.append_bits([1] * value + [0], RegionKind.BYPASS_CLEAR)
    return out


def encode_tu(value: int, cmax: int) -> BinString:
    if not 0 <= value <= cmax:
        raise ValueError(f"truncated unary needs 0 <= value <= {cmax}")
    out = BinString()
    if value < cmax:
        out.append_bits([1] * value + [0], RegionKind.BYPASS_CLEAR)
    else:
        out.append_bits([1] * cmax, RegionKind.BYPASS_CLEAR)
    return out


def fl_width(cmax: int) -> int:
    """Codeword width of the fixed-length code for alphabet 0..cmax."""
    return cmax.bit_length()


def encode_fl(value: int, cmax: int) -> BinString:
    if not 0 <= value <= cmax:
        raise ValueError(f"fixed-length code needs 0 <= value <= {cmax}")
    out = BinString()
    out.append_uint(value, fl_width(cmax), RegionKind.BYPASS_CLEAR)
    return out


def tb_layout(cmax: int) -> tuple[int, int]:
    """Return (short width k, count of short codewords u) for truncated binary."""
    n = cmax + 1
    k = n.bit_length() - 1
    u = (1 << (k + 1)) - n
    return k, u


def encode_tb(value: int, cmax: int) -> BinString:
    if not 0 <= value <= cmax:
        raise ValueError(f"truncated binary needs 0 <= value <= {cmax}")
    k, u = tb_layout(cmax)
    out = BinString()
    if value < u:
        out.append_uint(value, k, RegionKind.BYPASS_CLEAR)
    else:
        out.append_uint(value + u, k + 1, RegionKind.BYPASS_CLEAR)
    return out


def encode_trp(value: int, p: int, prefix_cmax: int) -> BinString:
    """Truncated rice: truncated-unary quotient, p-bit fixed-length suffix."""
    if value < 0 or p < 0:
        raise ValueError("rice code needs non-negative value and shift")
    q = value >> p
    if q > prefix_cmax:
        raise ValueError(f"rice quotient {q} above prefix cap {prefix_cmax}")
    out = encode_tu(q, prefix_cmax)
    out.append_uint(value & ((1 << p) - 1), p, RegionKind.BYPASS_CLEAR)
    return out


def egk_layout(value: int, k: int) -> tuple[int, int]:
    """Return (prefix length incl. terminator, suffix length) of the EGk code."""
    order = (value + (1 << k)).bit_length() - 1 - k
    return order + 1, k + order


def encode_egk(value: int, k: int) -> BinString:
    if value < 0:
        raise ValueError("exp-Golomb code needs a non-negative value")
    order = (value + (1 << k)).bit_length() - 1 - k
    out = encode_unary(order)
    suffix = value + (1 << k) - (1 << (k + order))
    out.append_uint(suffix, k + order, RegionKind.BYPASS_CLEAR)
    return out


def _limited_egk_layout(rem: int, params: RemainderParams) -> tuple[int, int, int]:
    """Return (prefix_len, suffix_len, suffix_value) of the capped escape code.

    ``prefix_len`` counts the variable part only; the emitted run of 1-bins is
    ``prefix_len + bin_reduc`` long and is closed by a 0 terminator unless the
    prefix is saturated.  The suffix carries the quotient residue above the
    terminator in its high bits and the rice residue in its low bits; its top
    bit doubles as headroom so the codeword never exceeds 32 bins.
    """
    rice = params.c_rice_param
    max_prefix_len = MAX_CODEWORD_BITS - params.bin_reduc - params.log2_tr_range
    code_value = (rem >> rice) - params.bin_reduc
    prefix_len = 0
    while prefix_len < max_prefix_len and code_value > (1 << (prefix_len + 1)) - 2:
        prefix_len += 1
    if prefix_len == max_prefix_len:
        suffix_len = params.log2_tr_range
    else:
        suffix_len = prefix_len + rice + 1
    suffix = ((code_value - ((1 << prefix_len) - 1)) << rice) | (rem & ((1 << rice) - 1))
    return prefix_len, suffix_len, suffix


def encode_limited_egk(rem: int, params: RemainderParams) -> BinString:
    """Length-capped exp-Golomb escape for remainders at or above the threshold."""
    if rem < params.beta:
        raise ValueError(f"escape code needs rem >= {params.beta}")
    max_prefix_len = MAX_CODEWORD_BITS - params.bin_reduc - params.log2_tr_range
    prefix_len, suffix_len, suffix = _limited_egk_layout(rem, params)
    out = BinString()
    out.append_bits([1] * (prefix_len + params.bin_reduc), RegionKind.BYPASS_CLEAR)
    if prefix_len < max_prefix_len:
        out.append_bit(0, RegionKind.BYPASS_CLEAR)
    out.append_uint(suffix, suffix_len, RegionKind.BYPASS_CLEAR)
    return out


class RemainderKind(enum.Enum):
    TRP = "trp"
    EGK = "egk"


def remainder_layout(rem: int, params: RemainderParams) -> tuple[RemainderKind, int, int]:
    """Return (kind, prefix length incl. terminator, suffix length) for ``rem``."""
    rice = params.c_rice_param
    if rem < params.beta:
        return RemainderKind.TRP, (rem >> rice) + 1, rice
    max_prefix_len = MAX_CODEWORD_BITS - params.bin_reduc - params.log2_tr_range
    prefix_len, suffix_len, _ = _limited_egk_layout(rem, params)
    total = prefix_len + params.bin_reduc
    if prefix_len < max_prefix_len:
        total += 1
    return RemainderKind.EGK, total, suffix_len


def encode_remainder(rem: int, params: RemainderParams) -> BinString:
    """Binarize a residual remainder: rice below the threshold, escape above."""
    if rem < 0:
        raise ValueError("remainder must be non-negative")
    if rem < params.beta:
        return encode_trp(rem, params.c_rice_param, params.bin_reduc)
    return encode_limited_egk(rem, params)


# ---------------------------------------------------------------------------
# decoders


class BitReader:
    """Sequential cursor over a bin sequence."""

    __slots__ = ("bits", "pos")

    def __init__(self, bits: "BinString | Sequence[int]", pos: int = 0):
        self.bits = bits.bits if isinstance(bits, BinString) else bits
        self.pos = pos

    def remaining(self) -> int:
        return len(self.bits) - self.pos

    def read_bit(self) -> int:
        if self.pos >= len(self.bits):
            raise DecodeError(self.pos, "bin string exhausted")
        b = self.bits[self.pos]
        self.pos += 1
        return b

    def read_uint(self, width: int) -> int:
        if self.pos + width > len(self.bits):
            raise DecodeError(len(self.bits), f"needed {width} suffix bins")
        v = 0
        for _ in range(width):
            v = (v << 1) | self.bits[self.pos]
            self.pos += 1
        return v

    def read_ones(self, cap: int | None = None) -> int:
        """Count 1-bins up to ``cap``; consumes the 0 terminator if one stops the run."""
        count = 0
        while cap is None or count < cap:
            if self.read_bit() == 0:
                return count
            count += 1
        return count


def decode_unary(reader: BitReader) -> int:
    return reader.read_ones()


def decode_tu(reader: BitReader, cmax: int) -> int:
    return reader.read_ones(cap=cmax)


def decode_fl(reader: BitReader, cmax: int) -> int:
    return reader.read_uint(fl_width(cmax))


def decode_tb(reader: BitReader, cmax: int) -> int:
    k, u = tb_layout(cmax)
    value = reader.read_uint(k)
    if value < u:
        return value
    value = (value << 1) | reader.read_bit()
    return value - u


def decode_trp(reader: BitReader, p: int, prefix_cmax: int) -> int:
    q = reader.read_ones(cap=prefix_cmax)
    return (q << p) | reader.read_uint(p)


def decode_egk(reader: BitReader, k: int) -> int:
    order = reader.read_ones()
    suffix = reader.read_uint(k + order)
    return suffix + (1 << (k + order)) - (1 << k)


def decode_remainder(reader: BitReader, params: RemainderParams) -> int:
    """Inverse of :func:`encode_remainder`; discriminates on the run of 1-bins."""
    rice = params.c_rice_param
    max_prefix_len = MAX_CODEWORD_BITS - params.bin_reduc - params.log2_tr_range
    ones = reader.read_ones(cap=params.bin_reduc + max_prefix_len)
    if ones < params.bin_reduc:
        return (ones << rice) | reader.read_uint(rice)
    return _decode_limited_suffix(reader, ones - params.bin_reduc, params)


def decode_limited_egk(reader: BitReader, params: RemainderParams) -> int:
    max_prefix_len = MAX_CODEWORD_BITS - params.bin_reduc - params.log2_tr_range
    start = reader.pos
    ones = reader.read_ones(cap=params.bin_reduc + max_prefix_len)
    if ones < params.bin_reduc:
        raise DecodeError(start, "escape codeword must open with at least 5 one-bins")
    return _decode_limited_suffix(reader, ones - params.bin_reduc, params)


def _decode_limited_suffix(reader: BitReader, prefix_len: int, params: RemainderParams) -> int:
    rice = params.c_rice_param
    max_prefix_len = MAX_CODEWORD_BITS - params.bin_reduc - params.log2_tr_range
    if prefix_len == max_prefix_len:
        suffix_len = params.log2_tr_range
    else:
        suffix_len = prefix_len + rice + 1
    suffix = reader.read_uint(suffix_len)
    code_value = (suffix >> rice) + (1 << prefix_len) - 1
    return ((code_value + params.bin_reduc) << rice) | (suffix & ((1 << rice) - 1))


def decode_code(bits: "BinString | Sequence[int]", code: str, offset: int = 0, **params) -> tuple[int, int]:
    """Decode one codeword of the named family; returns (value, bins consumed)."""
    reader = BitReader(bits, offset)
    if code == "unary":
        value = decode_unary(reader)
    elif code == "tu":
        value = decode_tu(reader, params["cmax"])
    elif code == "fl":
        value = decode_fl(reader, params["cmax"])
    elif code == "tb":
        value = decode_tb(reader, params["cmax"])
    elif code == "trp":
        value = decode_trp(reader, params["p"], params["prefix_cmax"])
    elif code == "egk":
        value = decode_egk(reader, params["k"])
    elif code == "limited_egk":
        value = decode_limited_egk(reader, params["params"])
    elif code == "remainder":
        value = decode_remainder(reader, params["params"])
    else:
        raise ValueError(f"unknown code kind {code!r}")
    return value, reader.pos - offset
