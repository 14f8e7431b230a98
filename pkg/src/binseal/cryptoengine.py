"""Selective encryption of bypass bins under two hard constraints: the
encrypted stream must stay parseable by a keyless decoder, and not a single
bit of length may change anywhere.

Only fixed-length bypass spans qualify: rice-path remainder suffixes, sign
bins, and whole fixed-length codewords.  Remainder suffixes additionally
need every neighbouring position's derived coding parameters (flag context
saturation, rice parameter, zero-swap level, state parity) to be provably
unchanged under every value the encrypted bits could take; that proof is the
job of :func:`is_encryptable` / :func:`check_sum_change`.

Keystream discipline: one fixed-width sample per significant coefficient
(width = its rice parameter, drawn whether or not anything is encrypted)
followed by one single-bit sample per sign, so encoder and decoder stay
aligned no matter how many bits were actually used.  Unused sample bits are
discarded.

Ordering matters for exactness: the encoder walks the scan forward,
replacing each coefficient by its ciphered value as it goes; the decoder
walks the scan backward, restoring plain values as it goes.  At every
position both sides then see identical neighbour values (earlier-scan
positions ciphered, later-scan positions plain), which makes the
encryptable-width decision reproducible without any side channel.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .bincodes import BinString, BitReader, RegionKind, RemainderKind
from .coeffmodel import (
    DEFAULT_LOG2_TR_RANGE,
    CodingMode,
    Pass,
    PassAnnotation,
    SubBlock,
    TC_REMAINDER_BASE,
    TS_REMAINDER_BASE,
    decode_subblock,
    encode_subblock,
    map_dec_abs_level,
    tc_affected,
    tc_template,
    unmap_dec_abs_level,
)
from .tables import CodingTables

P21_CLAMP_OFFSET = 20  # 5 * base level of the remainder pass


class KeystreamError(RuntimeError):
    pass


class AesCtrGenerator:
    """128-bit block cipher in counter mode, used as the keystream source."""

    block_size = 16

    def __init__(self, key: bytes, counter_block: bytes, max_blocks: int = 2 ** 64):
        if len(key) != 16:
            raise ValueError("key must be 16 bytes")
        if len(counter_block) != 16:
            raise ValueError("counter block must be 16 bytes")
        self._enc = Cipher(algorithms.AES(key), modes.CTR(counter_block)).encryptor()
        self._zero = bytes(4096)
        self._max_blocks = max_blocks
        self._blocks = 0

    def read(self, nbytes: int) -> bytes:
        out = bytearray()
        while len(out) < nbytes:
            take = min(len(self._zero), nbytes - len(out))
            self._blocks += (take + self.block_size - 1) // self.block_size
            if self._blocks > self._max_blocks:
                raise KeystreamError("counter space exhausted; rekey required")
            out.extend(self._enc.update(self._zero[:take]))
        return bytes(out)


class ZeroGenerator:
    """All-zero keystream; XOR with it is the identity (test aid)."""

    def read(self, nbytes: int) -> bytes:
        return bytes(nbytes)


class KeystreamState:
    """Sample-oriented view of a keystream with consumption accounting."""

    def __init__(self, generator):
        self._gen = generator
        self._pool: list[int] = []
        self._pos = 0
        self.samples_drawn = 0
        self.bits_drawn = 0

    @classmethod
    def from_hex(cls, key_hex: str, nonce_hex: str) -> "KeystreamState":
        return cls(AesCtrGenerator(bytes.fromhex(key_hex), bytes.fromhex(nonce_hex)))

    def sample(self, nbits: int) -> list[int]:
        """Draw the next sample; zero-width samples still count for sync."""
        if nbits < 0:
            raise ValueError("sample width must be non-negative")
        self.samples_drawn += 1
        self.bits_drawn += nbits
        while len(self._pool) - self._pos < nbits:
            chunk = self._gen.read(256)
            self._pool.extend((byte >> (7 - i)) & 1 for byte in chunk for i in range(8))
        if self._pos > 1 << 16:
            del self._pool[:self._pos]
            self._pos = 0
        bits = self._pool[self._pos:self._pos + nbits]
        self._pos += nbits
        return bits


class EncryptedSource(enum.Enum):
    TC_SUFFIX = "tc_suffix"
    TS_SUFFIX = "ts_suffix"
    SIGN = "sign"
    FL_ELEMENT = "fl_element"
    EGK_SUFFIX_MVD = "egk_suffix_mvd"


@dataclass(frozen=True)
class EncryptedRegion:
    offset: int
    length: int
    source: EncryptedSource


# ---------------------------------------------------------------------------
# encryptability analysis


def compute_min_max(abs_level: int, nb_encryptable: int, bypass: bool, v: int,
                    c_rice_param: int, base: int = TC_REMAINDER_BASE) -> tuple[int, int, int, int]:
    """Extremes reachable by toggling the top ``nb_encryptable`` suffix bits.

    Returns (abs_c_min, rem_min, abs_c_max, rem_max).  The suffix LSB is never
    part of the toggled span, so the coefficient parity is invariant across
    the whole range (taking the zero-swap rejection in the caller for the
    bypassed path).
    """
    if bypass:
        rem = map_dec_abs_level(abs_level, v)
    else:
        rem = (abs_level - base) >> 1
    if nb_encryptable <= 0:
        return abs_level, rem, abs_level, rem
    mask = ((1 << nb_encryptable) - 1) << (c_rice_param - nb_encryptable)
    rem_min = rem & ~mask
    rem_max = rem | mask
    if bypass:
        abs_min = unmap_dec_abs_level(rem_min, v)
        abs_max = unmap_dec_abs_level(rem_max, v)
    else:
        par = abs_level & 1
        abs_min = base + 2 * rem_min + par
        abs_max = base + 2 * rem_max + par
    return abs_min, rem_min, abs_max, rem_max


def _clamp_sum(value: int) -> int:
    if value < 0:
        return 0
    if value > 31:
        return 31
    return value


def check_sum_change(coeffs: list[list[int]], width: int, height: int,
                     pos_p: tuple[int, int], abs_level: int,
                     abs_c_min: int, abs_c_max: int, tables: CodingTables,
                     p21_offset: int = P21_CLAMP_OFFSET) -> bool:
    """True when ciphering the candidate cannot disturb position ``pos_p``.

    ``pos_p`` must have the candidate in its neighbour template.  Three
    families of derived values are guarded: the saturation thresholds feeding
    the flag-pass contexts, the rice parameter for both remainder passes, and
    the zero-swap level for every state row.
    """
    px, py = pos_p
    abs_sum_p1 = 0
    num_pos = 0
    sum21 = 0
    for nx, ny in tc_template(px, py, width, height):
        a = abs(coeffs[nx][ny])
        sum21 += a
        if a:
            num_pos += 1
        abs_sum_p1 += min(4 + (a & 1), a)

    def p1_term(a: int) -> int:
        return min(4 + (a & 1), a)

    abs_sum_p1_min = abs_sum_p1 - p1_term(abs_level) + p1_term(abs_c_min)
    no_ctx_change = (
        (abs_sum_p1 + 1) // 2 >= 3
        and abs_sum_p1 - num_pos >= 4
        and (abs_sum_p1_min + 1) // 2 >= 3
        and abs_sum_p1_min - num_pos >= 4
    )
    if not no_ctx_change:
        return False

    sum21_min = sum21 - abs_level + abs_c_min
    sum21_max = sum21 - abs_level + abs_c_max

    tr21 = _clamp_sum(sum21 - p21_offset)
    tr21_min = _clamp_sum(sum21_min - p21_offset)
    tr21_max = _clamp_sum(sum21_max - p21_offset)
    tr22 = _clamp_sum(sum21)
    tr22_min = _clamp_sum(sum21_min)
    tr22_max = _clamp_sum(sum21_max)

    lo, hi = tables.i_r[tables.rice_arr[tr21]]
    if not (lo <= tr21_min <= hi and lo <= tr21_max <= hi):
        return False
    lo, hi = tables.i_r[tables.rice_arr[tr22]]
    if not (lo <= tr22_min <= hi and lo <= tr22_max <= hi):
        return False

    for row in range(3):
        lo, hi = tables.i_p[row][tables.v_arr[row][tr22]]
        if not (lo <= tr22_min <= hi and lo <= tr22_max <= hi):
            return False
    return True


def is_encryptable(coeffs: list[list[int]], width: int, height: int, pos: tuple[int, int],
                   tables: CodingTables, c_rice_param: int, nb_encryptable: int,
                   bypass: bool, v: int, p21_offset: int = P21_CLAMP_OFFSET,
                   reasons: dict | None = None) -> int:
    """Widest safe suffix span (in bins) at ``pos``, or 0 when none is safe.

    Tries ``nb_encryptable`` bits first and narrows one bit at a time; the
    bypassed path additionally rejects any span whose value range would cross
    the zero-swap level, which would flip significance or parity.
    """
    x, y = pos
    abs_level = abs(coeffs[x][y])
    if abs_level == 0 or c_rice_param <= 1:
        if reasons is not None:
            reasons["guard"] = reasons.get("guard", 0) + 1
        return 0
    abs_min, rem_min, abs_max, rem_max = compute_min_max(
        abs_level, nb_encryptable, bypass, v, c_rice_param)
    encryptable = not (bypass and rem_min <= v <= rem_max)
    blocked = "zero_swap_hit" if not encryptable else None
    if encryptable:
        for pos_p in tc_affected(x, y, width, height):
            if not check_sum_change(coeffs, width, height, pos_p, abs_level,
                                    abs_min, abs_max, tables, p21_offset):
                encryptable = False
                blocked = "neighbour_change"
                break
    if not encryptable and nb_encryptable > 1:
        return is_encryptable(coeffs, width, height, pos, tables, c_rice_param,
                              nb_encryptable - 1, bypass, v, p21_offset, reasons)
    if encryptable:
        return nb_encryptable
    if reasons is not None:
        reasons[blocked] = reasons.get(blocked, 0) + 1
    return 0


def ts_affected(x: int, y: int, width: int, height: int) -> list[tuple[tuple[int, int], tuple[int, int] | None]]:
    """Skip-mode positions fed by (x, y), each with its co-predictor cell.

    The right neighbour is predicted from the candidate and the cell above
    it; the lower neighbour from the candidate and the cell to its left.
    The co-predictor bounds how large a ciphered candidate may get.
    """
    cells = []
    if x + 1 < width:
        cells.append(((x + 1, y), (x + 1, y - 1) if y > 0 else None))
    if y + 1 < height:
        cells.append(((x, y + 1), (x - 1, y + 1) if x > 0 else None))
    return cells


def is_encryptable_ts(coeffs: list[list[int]], width: int, height: int, pos: tuple[int, int],
                      tables: CodingTables, c_rice_param: int, nb_encryptable: int,
                      reasons: dict | None = None) -> int:
    """Skip-mode analogue of :func:`is_encryptable`.

    Guards the rice parameter of the two positions whose left/top sums
    contain the candidate, and additionally caps the ciphered magnitude at
    each co-predictor value so downstream level prediction cannot flip.
    """
    x, y = pos
    abs_level = abs(coeffs[x][y])
    if abs_level == 0 or c_rice_param <= 1:
        if reasons is not None:
            reasons["guard"] = reasons.get("guard", 0) + 1
        return 0
    abs_min, _, abs_max, _ = compute_min_max(
        abs_level, nb_encryptable, False, 0, c_rice_param, base=TS_REMAINDER_BASE)
    encryptable = True
    blocked = None
    for (gx, gy), red in ts_affected(x, y, width, height):
        bound = abs(coeffs[red[0]][red[1]]) if red is not None else 0
        if abs_max > bound:
            encryptable = False
            blocked = "prediction_bound"
            break
        base_sum = 0
        if gx > 0:
            base_sum += abs(coeffs[gx - 1][gy])
        if gy > 0:
            base_sum += abs(coeffs[gx][gy - 1])
        tr = _clamp_sum(base_sum)
        tr_min = _clamp_sum(base_sum - abs_level + abs_min)
        tr_max = _clamp_sum(base_sum - abs_level + abs_max)
        lo, hi = tables.i_r[tables.rice_arr[tr]]
        if not (lo <= tr_min <= hi and lo <= tr_max <= hi):
            encryptable = False
            blocked = "neighbour_change"
            break
    if not encryptable and nb_encryptable > 1:
        return is_encryptable_ts(coeffs, width, height, pos, tables,
                                 c_rice_param, nb_encryptable - 1, reasons)
    if encryptable:
        return nb_encryptable
    if reasons is not None:
        reasons[blocked] = reasons.get(blocked, 0) + 1
    return 0


def encryptable_width(coeffs: list[list[int]], width: int, height: int, info,
                      mode: CodingMode, tables: CodingTables,
                      p21_offset: int = P21_CLAMP_OFFSET,
                      reasons: dict | None = None) -> int:
    """Production gate: safe bit count for one coded position's suffix.

    Only rice-path remainder suffixes qualify; the escape code's suffix
    length feeds back into prefix discrimination, so it is never touched.
    """
    if not info.significant:
        return 0
    if info.rem_kind is not RemainderKind.TRP:
        if reasons is not None and info.rice is not None and info.rice > 1:
            key = "no_remainder" if info.rem_kind is None else "escape_code"
            reasons[key] = reasons.get(key, 0) + 1
        elif reasons is not None:
            reasons["guard"] = reasons.get("guard", 0) + 1
        return 0
    rice = info.rice
    if rice <= 1:
        if reasons is not None:
            reasons["guard"] = reasons.get("guard", 0) + 1
        return 0
    pos = (info.x, info.y)
    if mode is CodingMode.TS:
        return is_encryptable_ts(coeffs, width, height, pos, tables, rice,
                                 rice - 1, reasons)
    bypass = info.pass_id is Pass.P2_2
    return is_encryptable(coeffs, width, height, pos, tables, rice, rice - 1,
                          bypass, info.v if bypass else 0, p21_offset, reasons)


# ---------------------------------------------------------------------------
# block encryption / decryption


def _rem_of_value(info, abs_level: int, mode: CodingMode) -> int:
    if mode is CodingMode.TS:
        return (abs_level - TS_REMAINDER_BASE) >> 1
    if info.pass_id is Pass.P2_2:
        return map_dec_abs_level(abs_level, info.v)
    return (abs_level - TC_REMAINDER_BASE) >> 1


def _value_of_rem(info, rem: int, parity: int, mode: CodingMode) -> int:
    if mode is CodingMode.TS:
        return TS_REMAINDER_BASE + 2 * rem + parity
    if info.pass_id is Pass.P2_2:
        return unmap_dec_abs_level(rem, info.v)
    return TC_REMAINDER_BASE + 2 * rem + parity


def encrypt_subblock(block: SubBlock, tables: CodingTables, ks: KeystreamState,
                     log2_tr_range: int = DEFAULT_LOG2_TR_RANGE,
                     bit_policy: str = "xor",
                     p21_offset: int = P21_CLAMP_OFFSET) -> tuple[BinString, list[EncryptedRegion]]:
    """Encode ``block`` and cipher its encryptable bins in place.

    ``bit_policy`` "xor" applies the keystream; "zero" forces every
    encryptable bin to zero instead (the replacement-attack harness), with
    identical sample accounting.
    """
    bins, ann = encode_subblock(block, tables, log2_tr_range)
    out = bins.copy()
    work = block.copy_coeffs()
    width, height, mode = block.width, block.height, block.mode
    regions: list[EncryptedRegion] = []
    suffix_source = EncryptedSource.TS_SUFFIX if mode is CodingMode.TS else EncryptedSource.TC_SUFFIX

    for info in ann.positions:
        if not info.significant:
            continue
        sample = ks.sample(info.rice)
        n = encryptable_width(work, width, height, info, mode, tables, p21_offset)
        if n <= 0:
            continue
        rice = info.rice
        if bit_policy == "zero":
            key_bits = [out.bits[info.suffix_offset + j] for j in range(n)]
        else:
            key_bits = sample[:n]
        delta = 0
        for j, kb in enumerate(key_bits):
            if kb:
                out.flip(info.suffix_offset + j)
                delta |= 1 << (rice - 1 - j)
        out.relabel(info.suffix_offset, n, RegionKind.BYPASS_ENCRYPTABLE)
        regions.append(EncryptedRegion(info.suffix_offset, n, suffix_source))
        if delta:
            x, y = info.x, info.y
            abs_level = abs(work[x][y])
            rem = _rem_of_value(info, abs_level, mode) ^ delta
            new_abs = _value_of_rem(info, rem, abs_level & 1, mode)
            work[x][y] = -new_abs if work[x][y] < 0 else new_abs

    for info in ann.positions:
        if not info.significant:
            continue
        bit = ks.sample(1)[0]
        if bit_policy == "zero":
            if out.bits[info.sign_offset]:
                out.flip(info.sign_offset)
        elif bit:
            out.flip(info.sign_offset)
        out.relabel(info.sign_offset, 1, RegionKind.BYPASS_ENCRYPTABLE)
        regions.append(EncryptedRegion(info.sign_offset, 1, EncryptedSource.SIGN))

    return out, regions


def decrypt_subblock(bits, width: int, height: int, mode: CodingMode,
                     tables: CodingTables, ks: KeystreamState,
                     log2_tr_range: int = DEFAULT_LOG2_TR_RANGE,
                     reader: BitReader | None = None) -> SubBlock:
    """Decode a ciphered block and undo the keystream.

    Samples are drawn in the encoder's order up front, then applied walking
    the scan in reverse so the neighbour state at every position mirrors the
    encoder's (see module docstring).
    """
    block, ann = decode_subblock(bits, width, height, mode, tables, log2_tr_range, reader)
    work = block.coeffs
    rem_samples: dict[int, list[int]] = {}
    for info in ann.positions:
        if info.significant:
            rem_samples[info.scan_idx] = ks.sample(info.rice)
    sign_samples: dict[int, int] = {}
    for info in ann.positions:
        if info.significant:
            sign_samples[info.scan_idx] = ks.sample(1)[0]

    for info in reversed(ann.positions):
        if not info.significant or info.rem_kind is not RemainderKind.TRP:
            continue
        rice = info.rice
        if rice <= 1:
            continue
        n = encryptable_width(work, width, height, info, mode, tables)
        if n <= 0:
            continue
        delta = 0
        for j, kb in enumerate(rem_samples[info.scan_idx][:n]):
            if kb:
                delta |= 1 << (rice - 1 - j)
        if delta:
            x, y = info.x, info.y
            abs_level = abs(work[x][y])
            rem = _rem_of_value(info, abs_level, mode) ^ delta
            new_abs = _value_of_rem(info, rem, abs_level & 1, mode)
            work[x][y] = -new_abs if work[x][y] < 0 else new_abs

    for info in ann.positions:
        if info.significant and sign_samples[info.scan_idx]:
            x, y = info.x, info.y
            work[x][y] = -work[x][y]

    return block


# ---------------------------------------------------------------------------
# standalone bypass codewords (non-residual syntax elements)


def encrypt_fl_element(bits: BinString, ks: KeystreamState,
                       width_policy: tuple[int, int]) -> tuple[BinString, EncryptedRegion | None]:
    """XOR a bypass codeword span of fixed width with one keystream sample.

    ``width_policy`` is (offset, length) inside the codeword: the whole
    codeword for fixed-length elements, the suffix for exp-Golomb magnitudes.
    One sample of exactly that width is drawn even when the span is empty.
    """
    offset, length = width_policy
    if offset < 0 or offset + length > len(bits):
        raise ValueError("encryptable span outside the codeword")
    for i in range(offset, offset + length):
        if bits.kind_at(i) is RegionKind.CONTEXT:
            raise ValueError("refusing to cipher a context bin")
    sample = ks.sample(length)
    out = bits.copy()
    for j, kb in enumerate(sample):
        if kb:
            out.flip(offset + j)
    if length == 0:
        return out, None
    out.relabel(offset, length, RegionKind.BYPASS_ENCRYPTABLE)
    source = EncryptedSource.EGK_SUFFIX_MVD if offset > 0 else EncryptedSource.FL_ELEMENT
    return out, EncryptedRegion(offset, length, source)
