"""Sub-block residual model: scan orders, neighbour sums, LUT-driven coding
parameters, and the full coefficient-grid <-> bin-string mapping.

Two modes are supported.  Transform-coefficient (TC) blocks are walked in
reverse diagonal order and coded in three passes: a context-bin flag pass
capped by a bin budget, a bypass remainder pass for the flagged positions,
a fully bypassed level pass for everything after the budget cutoff, and a
bypass sign pass.  Transform-skip (TS) blocks are walked in forward diagonal
order; flags (including signs) come first, greater-than flags second, and
remainders of large levels last.

Flag bins are modelled as uncompressed context bins: one bin is one bit, but
the context/bypass split and the bin budget are tracked exactly, because the
encryption layer must never touch context bins and must prove it leaves every
derived coding parameter unchanged.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache

from .bincodes import (
    BinString,
    BitReader,
    DecodeError,
    RegionKind,
    RemainderKind,
    RemainderParams,
    decode_remainder,
    encode_remainder,
    remainder_layout,
)
from .tables import CodingTables

DEFAULT_LOG2_TR_RANGE = 15

# Remainder coding starts at these absolute levels; smaller levels are fully
# described by the flag passes.
TC_REMAINDER_BASE = 4
TS_REMAINDER_BASE = 10

# Worst-case context bins in one flag group, used for the budget cutoff test
# (the cutoff must be decidable before any of the group's bins are parsed).
_TC_GROUP_CTX = 4   # sig, gt1, par, gt3
_TS_P1_GROUP_CTX = 3  # sig, gt1, par (the sign bin is always bypass)
_TS_P2_GROUP_CTX = 4  # gt3, gt5, gt7, gt9


class CodingMode(enum.Enum):
    TC = "tc"
    TS = "ts"


class Pass(enum.Enum):
    P1 = "p1"
    P2_1 = "p2_1"
    P2_2 = "p2_2"
    P3 = "p3"


@dataclass
class SubBlock:
    """W x H grid of signed coefficients; ``coeffs[x][y]`` indexing."""

    width: int
    height: int
    mode: CodingMode
    coeffs: list[list[int]]

    def __post_init__(self):
        for n in (self.width, self.height):
            if n < 1 or n & (n - 1):
                raise ValueError("block dimensions must be powers of two")
        if len(self.coeffs) != self.width or any(len(col) != self.height for col in self.coeffs):
            raise ValueError("coefficient grid does not match the block dimensions")

    @classmethod
    def from_rows(cls, rows: list[list[int]], mode: CodingMode) -> "SubBlock":
        height, width = len(rows), len(rows[0])
        cols = [[rows[y][x] for y in range(height)] for x in range(width)]
        return cls(width, height, mode, cols)

    @classmethod
    def from_flat(cls, flat: list[int], width: int, height: int, mode: CodingMode) -> "SubBlock":
        if len(flat) != width * height:
            raise ValueError("flat coefficient list has the wrong length")
        cols = [[flat[y * width + x] for y in range(height)] for x in range(width)]
        return cls(width, height, mode, cols)

    def to_flat(self) -> list[int]:
        return [self.coeffs[x][y] for y in range(self.height) for x in range(self.width)]

    def copy_coeffs(self) -> list[list[int]]:
        return [col.copy() for col in self.coeffs]

    def __eq__(self, other: object) -> bool:
        if isinstance(other, SubBlock):
            return (self.width, self.height, self.mode, self.coeffs) == (
                other.width, other.height, other.mode, other.coeffs)
        return NotImplemented


class PosInfo:
    """Per-scan-position annotation produced by both coding directions."""

    __slots__ = (
        "scan_idx", "x", "y", "significant", "parity", "pass_id", "ctx_flags",
        "rice", "state", "v", "rem_kind", "rem_value", "rem_offset",
        "rem_prefix_len", "suffix_offset", "suffix_len", "sign_offset",
    )

    def __init__(self, scan_idx: int, x: int, y: int):
        self.scan_idx = scan_idx
        self.x = x
        self.y = y
        self.significant = False
        self.parity = 0
        self.pass_id = Pass.P1
        self.ctx_flags = True
        self.rice: int | None = None
        self.state: int | None = None
        self.v: int | None = None
        self.rem_kind: RemainderKind | None = None
        self.rem_value: int | None = None
        self.rem_offset: int | None = None
        self.rem_prefix_len: int | None = None
        self.suffix_offset: int | None = None
        self.suffix_len: int | None = None
        self.sign_offset: int | None = None

    def key(self, with_rem_value: bool = True) -> tuple:
        """Comparison key; the coded remainder value is maskable because a
        substitution probe legitimately changes it at the probed position."""
        return (
            self.scan_idx, self.x, self.y, self.significant, self.parity,
            self.pass_id, self.ctx_flags, self.rice, self.state, self.v,
            self.rem_kind, self.rem_value if with_rem_value else None,
            self.rem_offset, self.rem_prefix_len, self.suffix_offset,
            self.suffix_len, self.sign_offset,
        )


@dataclass
class PassAnnotation:
    positions: list[PosInfo]
    context_bins: int = 0
    cutoff: int | None = None
    total_bits: int = 0

    def keys(self, mask_rem_at: int | None = None) -> list[tuple]:
        return [p.key(with_rem_value=(i != mask_rem_at)) for i, p in enumerate(self.positions)]


# ---------------------------------------------------------------------------
# scans, budgets, neighbour sums


@lru_cache(maxsize=None)
def scan_positions(width: int, height: int, mode: CodingMode) -> tuple[tuple[int, int], ...]:
    """Diagonal scan: forward for TS, exact reverse (last position first) for TC."""
    forward: list[tuple[int, int]] = []
    for d in range(width + height - 1):
        y = min(d, height - 1)
        while y >= 0 and d - y < width:
            forward.append((d - y, y))
            y -= 1
    if mode is CodingMode.TS:
        return tuple(forward)
    return tuple(reversed(forward))


def pass1_bin_budget(width: int, height: int) -> int:
    """Cap on context bins spent by the flag pass of one sub-block."""
    return ((1 << (width.bit_length() - 1 + height.bit_length() - 1)) * 7) // 4


def tc_template(x: int, y: int, width: int, height: int) -> list[tuple[int, int]]:
    """Five already-coded neighbours feeding a TC position's local sums."""
    cells = []
    if x + 1 < width:
        cells.append((x + 1, y))
        if x + 2 < width:
            cells.append((x + 2, y))
        if y + 1 < height:
            cells.append((x + 1, y + 1))
    if y + 1 < height:
        cells.append((x, y + 1))
        if y + 2 < height:
            cells.append((x, y + 2))
    return cells


def tc_affected(x: int, y: int, width: int, height: int) -> list[tuple[int, int]]:
    """Positions whose TC template contains (x, y): the mirror of the template."""
    cells = []
    if x - 1 >= 0:
        cells.append((x - 1, y))
        if x - 2 >= 0:
            cells.append((x - 2, y))
        if y - 1 >= 0:
            cells.append((x - 1, y - 1))
    if y - 1 >= 0:
        cells.append((x, y - 1))
        if y - 2 >= 0:
            cells.append((x, y - 2))
    return cells


def _clamp_sum(value: int) -> int:
    if value < 0:
        return 0
    if value > 31:
        return 31
    return value


def raw_template_sum(coeffs: list[list[int]], width: int, height: int, x: int, y: int) -> int:
    """Unsaturated sum of neighbour magnitudes over the TC template."""
    total = 0
    for nx, ny in tc_template(x, y, width, height):
        total += abs(coeffs[nx][ny])
    return total


def local_abs_sum(block: SubBlock, pos: tuple[int, int], base_lvl: int) -> int:
    """Saturated neighbourhood sum driving rice/zero-swap derivation (TC)."""
    x, y = pos
    return _clamp_sum(raw_template_sum(block.coeffs, block.width, block.height, x, y) - 5 * base_lvl)


def raw_ts_sum(coeffs: list[list[int]], x: int, y: int) -> int:
    """Unsaturated |left| + |top| sum (TS)."""
    total = 0
    if x > 0:
        total += abs(coeffs[x - 1][y])
    if y > 0:
        total += abs(coeffs[x][y - 1])
    return total


def local_abs_sum_ts(block: SubBlock, pos: tuple[int, int]) -> int:
    x, y = pos
    return _clamp_sum(raw_ts_sum(block.coeffs, x, y))


def derive_rice(tables: CodingTables, local_sum: int) -> int:
    return tables.rice_arr[local_sum]


def derive_v(tables: CodingTables, state: int, local_sum: int) -> int:
    return tables.v_arr[tables.state_row_map[state]][local_sum]


def state_update(tables: CodingTables, state: int, parity: int) -> int:
    return tables.state_trans[state][parity]


# ---------------------------------------------------------------------------
# value <-> syntax-element mappings


def abs_remainder(c: int) -> int:
    a = abs(c)
    if a < TC_REMAINDER_BASE:
        raise ValueError("levels below 4 carry no remainder")
    return (a - TC_REMAINDER_BASE) >> 1


def abs_remainder_ts(c: int) -> int:
    a = abs(c)
    if a < TS_REMAINDER_BASE:
        raise ValueError("levels below 10 carry no skip-mode remainder")
    return (a - TS_REMAINDER_BASE) >> 1


def map_dec_abs_level(c: int, v: int) -> int:
    """Zero-swap level mapping: 0 trades places with the levels up to ``v``."""
    a = abs(c)
    if a == 0:
        return v
    if a <= v:
        return a - 1
    return a


def unmap_dec_abs_level(coded: int, v: int) -> int:
    if coded == v:
        return 0
    if coded < v:
        return coded + 1
    return coded


# ---------------------------------------------------------------------------
# encoding


def encode_subblock(block: SubBlock, tables: CodingTables,
                    log2_tr_range: int = DEFAULT_LOG2_TR_RANGE) -> tuple[BinString, PassAnnotation]:
    limit = 1 << log2_tr_range
    for col in block.coeffs:
        for c in col:
            if abs(c) >= limit:
                raise ValueError(f"coefficient {c} outside +-2^{log2_tr_range}")
    if block.mode is CodingMode.TC:
        return _encode_tc(block, tables, log2_tr_range)
    return _encode_ts(block, tables, log2_tr_range)


def _encode_tc(block: SubBlock, tables: CodingTables, log2_tr_range: int):
    width, height, coeffs = block.width, block.height, block.coeffs
    scan = scan_positions(width, height, CodingMode.TC)
    n = len(scan)
    budget = pass1_bin_budget(width, height)
    out = BinString()
    infos = [PosInfo(i, x, y) for i, (x, y) in enumerate(scan)]

    state = 0
    for info in infos:
        a = abs(coeffs[info.x][info.y])
        info.significant = a != 0
        info.parity = a & 1
        info.state = state
        state = tables.state_trans[state][a & 1]

    # flag pass: sig / gt1 / par / gt3, cut off when a worst-case group no
    # longer fits the budget
    used = 0
    cutoff = n
    for i, info in enumerate(infos):
        if used + _TC_GROUP_CTX > budget:
            cutoff = i
            break
        a = abs(coeffs[info.x][info.y])
        out.append_bit(a != 0, RegionKind.CONTEXT)
        used += 1
        if a != 0:
            out.append_bit(a > 1, RegionKind.CONTEXT)
            used += 1
        if a > 1:
            out.append_bit(a & 1, RegionKind.CONTEXT)
            out.append_bit(a > 3, RegionKind.CONTEXT)
            used += 2

    # remainder pass for flagged positions
    for info in infos[:cutoff]:
        a = abs(coeffs[info.x][info.y])
        if a == 0:
            info.pass_id = Pass.P1
            continue
        s = _clamp_sum(raw_template_sum(coeffs, width, height, info.x, info.y) - 20)
        info.rice = tables.rice_arr[s]
        if a < TC_REMAINDER_BASE:
            info.pass_id = Pass.P1
            continue
        info.pass_id = Pass.P2_1
        _emit_remainder(out, info, (a - TC_REMAINDER_BASE) >> 1, log2_tr_range)

    # fully bypassed level pass for everything past the cutoff
    for info in infos[cutoff:]:
        info.pass_id = Pass.P2_2
        info.ctx_flags = False
        s = _clamp_sum(raw_template_sum(coeffs, width, height, info.x, info.y))
        info.rice = tables.rice_arr[s]
        info.v = tables.v_arr[tables.state_row_map[info.state]][s]
        _emit_remainder(out, info, map_dec_abs_level(coeffs[info.x][info.y], info.v), log2_tr_range)

    # sign pass
    for info in infos:
        c = coeffs[info.x][info.y]
        if c != 0:
            info.sign_offset = len(out)
            out.append_bit(c < 0, RegionKind.BYPASS_CLEAR)

    ann = PassAnnotation(infos, used, cutoff if cutoff < n else None, len(out))
    return out, ann


def _emit_remainder(out: BinString, info: PosInfo, rem: int, log2_tr_range: int) -> None:
    params = RemainderParams(info.rice, log2_tr_range)
    kind, prefix_len, suffix_len = remainder_layout(rem, params)
    info.rem_kind = kind
    info.rem_value = rem
    info.rem_offset = len(out)
    info.rem_prefix_len = prefix_len
    info.suffix_offset = len(out) + prefix_len
    info.suffix_len = suffix_len
    out.extend(encode_remainder(rem, params))


def _encode_ts(block: SubBlock, tables: CodingTables, log2_tr_range: int):
    width, height, coeffs = block.width, block.height, block.coeffs
    scan = scan_positions(width, height, CodingMode.TS)
    budget = pass1_bin_budget(width, height)
    out = BinString()
    infos = [PosInfo(i, x, y) for i, (x, y) in enumerate(scan)]

    # flag pass: sig / sign / gt1 / par; signs are always bypass bins
    used = 0
    ctx_on = True
    for info in infos:
        if ctx_on and used + _TS_P1_GROUP_CTX > budget:
            ctx_on = False
        info.ctx_flags = ctx_on
        kind = RegionKind.CONTEXT if ctx_on else RegionKind.BYPASS_CLEAR
        c = coeffs[info.x][info.y]
        a = abs(c)
        info.significant = a != 0
        info.parity = a & 1
        out.append_bit(a != 0, kind)
        group = 1
        if a != 0:
            info.sign_offset = len(out)
            out.append_bit(c < 0, RegionKind.BYPASS_CLEAR)
            out.append_bit(a > 1, kind)
            group += 1
        if a > 1:
            out.append_bit(a & 1, kind)
            group += 1
        if ctx_on:
            used += group

    # greater-than pass: gt3 / gt5 / gt7 / gt9 for levels past the first flags
    gt_ctx_on = ctx_on
    for info in infos:
        a = abs(coeffs[info.x][info.y])
        if a <= 1:
            continue
        if gt_ctx_on and used + _TS_P2_GROUP_CTX > budget:
            gt_ctx_on = False
        kind = RegionKind.CONTEXT if gt_ctx_on else RegionKind.BYPASS_CLEAR
        group = 0
        for threshold in (3, 5, 7, 9):
            out.append_bit(a > threshold, kind)
            group += 1
            if a <= threshold:
                break
        if gt_ctx_on:
            used += group

    # remainder pass for levels above 9
    for info in infos:
        a = abs(coeffs[info.x][info.y])
        if a == 0:
            continue
        info.rice = tables.rice_arr[_clamp_sum(raw_ts_sum(coeffs, info.x, info.y))]
        if a <= 9:
            info.pass_id = Pass.P1 if info.ctx_flags else Pass.P2_2
            continue
        info.pass_id = Pass.P2_1
        _emit_remainder(out, info, (a - TS_REMAINDER_BASE) >> 1, log2_tr_range)

    for info in infos:
        if not info.significant and not info.ctx_flags:
            info.pass_id = Pass.P2_2

    ann = PassAnnotation(infos, used, None, len(out))
    return out, ann


# ---------------------------------------------------------------------------
# decoding


def decode_subblock(bits, width: int, height: int, mode: CodingMode, tables: CodingTables,
                    log2_tr_range: int = DEFAULT_LOG2_TR_RANGE,
                    reader: BitReader | None = None) -> tuple[SubBlock, PassAnnotation]:
    """Exact inverse of :func:`encode_subblock`, including the annotation."""
    if reader is None:
        reader = BitReader(bits)
    if mode is CodingMode.TC:
        return _decode_tc(reader, width, height, tables, log2_tr_range)
    return _decode_ts(reader, width, height, tables, log2_tr_range)


def _decode_tc(reader: BitReader, width: int, height: int, tables: CodingTables, log2_tr_range: int):
    scan = scan_positions(width, height, CodingMode.TC)
    n = len(scan)
    budget = pass1_bin_budget(width, height)
    base = reader.pos
    coeffs = [[0] * height for _ in range(width)]
    infos = [PosInfo(i, x, y) for i, (x, y) in enumerate(scan)]
    pending: dict[int, int] = {}  # scan idx -> parity, for levels above 3

    used = 0
    cutoff = n
    for i, info in enumerate(infos):
        if used + _TC_GROUP_CTX > budget:
            cutoff = i
            break
        sig = reader.read_bit()
        used += 1
        a = 0
        if sig:
            gt1 = reader.read_bit()
            used += 1
            if gt1:
                par = reader.read_bit()
                gt3 = reader.read_bit()
                used += 2
                if gt3:
                    pending[i] = par
                    a = -1  # filled by the remainder pass
                else:
                    a = 2 + par
            else:
                a = 1
        if a >= 0:
            coeffs[info.x][info.y] = a

    for i in range(cutoff):
        info = infos[i]
        if i in pending:
            s = _clamp_sum(raw_template_sum(coeffs, width, height, info.x, info.y) - 20)
            info.rice = tables.rice_arr[s]
            info.pass_id = Pass.P2_1
            rem = _read_remainder(reader, info, log2_tr_range, base)
            coeffs[info.x][info.y] = TC_REMAINDER_BASE + 2 * rem + pending[i]
        else:
            a = coeffs[info.x][info.y]
            if a:
                s = _clamp_sum(raw_template_sum(coeffs, width, height, info.x, info.y) - 20)
                info.rice = tables.rice_arr[s]

    # replay the state machine over the decoded flag-pass parities
    state = 0
    for i in range(cutoff):
        info = infos[i]
        a = coeffs[info.x][info.y]
        info.state = state
        info.significant = a != 0
        info.parity = a & 1
        state = tables.state_trans[state][a & 1]

    for i in range(cutoff, n):
        info = infos[i]
        info.pass_id = Pass.P2_2
        info.ctx_flags = False
        info.state = state
        s = _clamp_sum(raw_template_sum(coeffs, width, height, info.x, info.y))
        info.rice = tables.rice_arr[s]
        info.v = tables.v_arr[tables.state_row_map[state]][s]
        coded = _read_remainder(reader, info, log2_tr_range, base)
        a = unmap_dec_abs_level(coded, info.v)
        coeffs[info.x][info.y] = a
        info.significant = a != 0
        info.parity = a & 1
        state = tables.state_trans[state][a & 1]

    for info in infos:
        if coeffs[info.x][info.y] != 0:
            info.sign_offset = reader.pos - base
            if reader.read_bit():
                coeffs[info.x][info.y] = -coeffs[info.x][info.y]

    ann = PassAnnotation(infos, used, cutoff if cutoff < n else None, reader.pos - base)
    return SubBlock(width, height, CodingMode.TC, coeffs), ann


def _read_remainder(reader: BitReader, info: PosInfo, log2_tr_range: int, base: int) -> int:
    params = RemainderParams(info.rice, log2_tr_range)
    info.rem_offset = reader.pos - base
    rem = decode_remainder(reader, params)
    kind, prefix_len, suffix_len = remainder_layout(rem, params)
    info.rem_kind = kind
    info.rem_value = rem
    info.rem_prefix_len = prefix_len
    info.suffix_offset = info.rem_offset + prefix_len
    info.suffix_len = suffix_len
    return rem


def _decode_ts(reader: BitReader, width: int, height: int, tables: CodingTables, log2_tr_range: int):
    scan = scan_positions(width, height, CodingMode.TS)
    budget = pass1_bin_budget(width, height)
    base = reader.pos
    coeffs = [[0] * height for _ in range(width)]
    infos = [PosInfo(i, x, y) for i, (x, y) in enumerate(scan)]
    signs: dict[int, int] = {}

    used = 0
    ctx_on = True
    for info in infos:
        if ctx_on and used + _TS_P1_GROUP_CTX > budget:
            ctx_on = False
        info.ctx_flags = ctx_on
        sig = reader.read_bit()
        group = 1
        a = 0
        if sig:
            info.sign_offset = reader.pos - base
            signs[info.scan_idx] = reader.read_bit()
            gt1 = reader.read_bit()
            group += 1
            a = 1
            if gt1:
                par = reader.read_bit()
                group += 1
                a = 2 + par
        coeffs[info.x][info.y] = a
        if ctx_on:
            used += group

    gt_ctx_on = ctx_on
    for info in infos:
        a = coeffs[info.x][info.y]
        if a <= 1:
            continue
        if gt_ctx_on and used + _TS_P2_GROUP_CTX > budget:
            gt_ctx_on = False
        par = a & 1
        group = 0
        level = a
        for threshold in (3, 5, 7, 9):
            gt = reader.read_bit()
            group += 1
            if gt:
                level = threshold + 1 + par
            else:
                break
        coeffs[info.x][info.y] = level
        if gt_ctx_on:
            used += group

    for info in infos:
        a = coeffs[info.x][info.y]
        if a == 0:
            continue
        info.rice = tables.rice_arr[_clamp_sum(raw_ts_sum(coeffs, info.x, info.y))]
        if a > 9:
            info.pass_id = Pass.P2_1
            rem = _read_remainder(reader, info, log2_tr_range, base)
            coeffs[info.x][info.y] = TS_REMAINDER_BASE + 2 * rem + (a & 1)
        else:
            info.pass_id = Pass.P1 if info.ctx_flags else Pass.P2_2

    for info in infos:
        a = coeffs[info.x][info.y]
        info.significant = a != 0
        info.parity = a & 1
        if not info.significant and not info.ctx_flags:
            info.pass_id = Pass.P2_2
        if signs.get(info.scan_idx):
            coeffs[info.x][info.y] = -a

    ann = PassAnnotation(infos, used, None, reader.pos - base)
    return SubBlock(width, height, CodingMode.TS, coeffs), ann
