"""Brute-force validation of the encryptable-bin analysis.

For every bin span the analysis declares safe, substitute every value the
encrypted bits could take, re-encode the whole block, and demand an
identical bit count and identical derived parameters at every position.
Zero violations is the contract; the analysis is conservative, so spans it
rejects are merely tallied by blocking reason.

A deliberately damaged analysis (remainder-pass clamp offset 19 instead of
20) must produce violations on the same corpus, which demonstrates that the
harness has the power to catch a broken rule, not just rubber-stamp one.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field

from .coeffmodel import CodingMode, SubBlock, decode_subblock, encode_subblock
from .corpus import random_block
from .cryptoengine import (
    P21_CLAMP_OFFSET,
    KeystreamState,
    ZeroGenerator,
    encrypt_subblock,
    encryptable_width,
    _rem_of_value,
    _value_of_rem,
)
from .tables import CodingTables


@dataclass
class Violation:
    block_index: int
    scan_idx: int
    pattern: int
    what: str


@dataclass
class OracleReport:
    blocks: int = 0
    positions: int = 0
    candidates: int = 0
    encryptable_bits: int = 0
    substitutions: int = 0
    violations: list[Violation] = field(default_factory=list)
    blocked: dict[str, int] = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations

    def lines(self) -> list[str]:
        out = [
            f"blocks tested:       {self.blocks}",
            f"positions examined:  {self.positions}",
            f"encryptable spans:   {self.candidates} ({self.encryptable_bits} bits)",
            f"substitutions tried: {self.substitutions}",
            f"violations:          {len(self.violations)}",
        ]
        for what, count in sorted(self.blocked.items()):
            out.append(f"  blocked by {what}: {count}")
        for v in self.violations[:20]:
            out.append(f"  VIOLATION block {v.block_index} scan {v.scan_idx} "
                       f"pattern {v.pattern:#x}: {v.what}")
        out.append(f"elapsed: {self.seconds:.1f}s")
        out.append(f"verdict: {'PASS' if self.ok else 'FAIL'}")
        return out


def _substituted_block(block: SubBlock, info, pattern: int, n: int,
                       mode: CodingMode) -> SubBlock:
    """Clone the block with the targeted suffix bits forced to ``pattern``."""
    rice = info.rice
    mask = ((1 << n) - 1) << (rice - n)
    x, y = info.x, info.y
    coeffs = block.copy_coeffs()
    abs_level = abs(coeffs[x][y])
    rem = _rem_of_value(info, abs_level, mode)
    rem2 = (rem & ~mask) | (pattern << (rice - n))
    new_abs = _value_of_rem(info, rem2, abs_level & 1, mode)
    coeffs[x][y] = -new_abs if coeffs[x][y] < 0 else new_abs
    return SubBlock(block.width, block.height, mode, coeffs)


def check_block(block: SubBlock, tables: CodingTables, log2_tr_range: int,
                report: OracleReport, block_index: int,
                p21_offset: int = P21_CLAMP_OFFSET) -> None:
    bins, ann = encode_subblock(block, tables, log2_tr_range)
    mode = block.mode
    base_keys = ann.keys()
    for info in ann.positions:
        report.positions += 1
        n = encryptable_width(block.coeffs, block.width, block.height, info,
                              mode, tables, p21_offset, report.blocked)
        if n <= 0:
            continue
        report.candidates += 1
        report.encryptable_bits += n
        rice = info.rice
        shift = rice - n
        rem = info.rem_value
        current = (rem >> shift) & ((1 << n) - 1)
        expect_keys = ann.keys(mask_rem_at=info.scan_idx)
        for pattern in range(1 << n):
            if pattern == current:
                continue
            report.substitutions += 1
            probe = _substituted_block(block, info, pattern, n, mode)
            bins2, ann2 = encode_subblock(probe, tables, log2_tr_range)
            what = None
            if len(bins2) != len(bins):
                what = f"bit count {len(bins)} -> {len(bins2)}"
            elif ann2.keys(mask_rem_at=info.scan_idx) != expect_keys:
                what = "derived parameters changed"
            elif ann2.context_bins != ann.context_bins or ann2.cutoff != ann.cutoff:
                what = "budget bookkeeping changed"
            else:
                lo, hi = info.suffix_offset, info.suffix_offset + n
                if bins2.bits[:lo] != bins.bits[:lo] or bins2.bits[hi:] != bins.bits[hi:]:
                    what = "bits outside the encrypted span changed"
            if what is not None:
                report.violations.append(Violation(block_index, info.scan_idx, pattern, what))


def run_oracle(tables: CodingTables, blocks: int = 10000, seed: int = 1,
               width: int = 4, height: int = 4, mode: str = "both",
               max_mag: int = 32, log2_tr_range: int = 15,
               p21_offset: int = P21_CLAMP_OFFSET,
               max_violations: int = 50) -> OracleReport:
    """Exhaustive per-position substitution audit over a random corpus.

    The magnitude profile is deliberately heavy so neighbour sums sit near
    the LUT breakpoints where a wrong rule actually bites.
    """
    rng = random.Random(seed)
    report = OracleReport()
    started = time.perf_counter()
    modes = {"both": [CodingMode.TC, CodingMode.TS],
             "tc": [CodingMode.TC], "ts": [CodingMode.TS]}[mode]
    for i in range(blocks):
        m = modes[i % len(modes)]
        block = random_block(rng, width, height, m, max_mag,
                             p_zero=0.20, geo_p=0.10)
        check_block(block, tables, log2_tr_range, report, i, p21_offset)
        if len(report.violations) >= max_violations:
            break
        report.blocks += 1
    report.seconds = time.perf_counter() - started
    return report


@dataclass
class ReplacementReport:
    blocks: int = 0
    failures: list[str] = field(default_factory=list)
    zeroed_bits: int = 0
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.failures

    def lines(self) -> list[str]:
        out = [
            f"blocks attacked: {self.blocks}",
            f"bits zeroed:     {self.zeroed_bits}",
            f"failures:        {len(self.failures)}",
        ]
        out.extend(f"  {f}" for f in self.failures[:20])
        out.append(f"elapsed: {self.seconds:.1f}s")
        out.append(f"verdict: {'PASS' if self.ok else 'FAIL'}")
        return out


def run_replacement(tables: CodingTables, blocks: int = 2000, seed: int = 7,
                    width: int = 4, height: int = 4, mode: str = "both",
                    max_mag: int = 32, log2_tr_range: int = 15) -> ReplacementReport:
    """Force every encryptable bin to zero; the stream must survive intact."""
    rng = random.Random(seed)
    report = ReplacementReport()
    started = time.perf_counter()
    modes = {"both": [CodingMode.TC, CodingMode.TS],
             "tc": [CodingMode.TC], "ts": [CodingMode.TS]}[mode]
    for i in range(blocks):
        m = modes[i % len(modes)]
        block = random_block(rng, width, height, m, max_mag,
                             p_zero=0.20, geo_p=0.10)
        plain_bins, _ = encode_subblock(block, tables, log2_tr_range)
        ks = KeystreamState(ZeroGenerator())
        attacked, regions = encrypt_subblock(block, tables, ks, log2_tr_range,
                                             bit_policy="zero")
        report.zeroed_bits += sum(r.length for r in regions)
        if len(attacked) != len(plain_bins):
            report.failures.append(f"block {i}: bit count changed")
            continue
        try:
            decoded, _ = decode_subblock(attacked, width, height, m, tables, log2_tr_range)
        except Exception as exc:  # noqa: BLE001 - any parse failure is the finding
            report.failures.append(f"block {i}: keyless decode failed: {exc}")
            continue
        rebuilt, _ = encode_subblock(decoded, tables, log2_tr_range)
        if rebuilt.bits != attacked.bits:
            report.failures.append(f"block {i}: re-encode diverged")
        report.blocks += 1
    report.seconds = time.perf_counter() - started
    return report
