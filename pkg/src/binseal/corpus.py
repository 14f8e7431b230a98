"""Deterministic synthetic streams for testing and validation.

Coefficient magnitudes follow a two-sided geometric profile, the usual shape
of quantized residuals: plenty of zeros, a fat band of small levels, rare
large ones.  Everything is reproducible from the seed alone.
"""

from __future__ import annotations

import random

from .coeffmodel import DEFAULT_LOG2_TR_RANGE, CodingMode, SubBlock
from .streams import (
    ELEMENT_SPECS,
    BlockRecord,
    CoefficientStream,
    ElementRecord,
    StreamHeader,
)

AUX_KINDS = [k for k in ELEMENT_SPECS if not k.startswith("coeff_sign")]


def random_coeff(rng: random.Random, p_zero: float, geo_p: float, max_mag: int) -> int:
    if rng.random() < p_zero:
        return 0
    mag = 1
    while mag < max_mag and rng.random() > geo_p:
        mag += 1
    return mag if rng.random() < 0.5 else -mag


def random_block(rng: random.Random, width: int, height: int, mode: CodingMode,
                 max_mag: int, p_zero: float = 0.35, geo_p: float = 0.30) -> SubBlock:
    cols = [[random_coeff(rng, p_zero, geo_p, max_mag) for _ in range(height)]
            for _ in range(width)]
    return SubBlock(width, height, mode, cols)


def random_element(rng: random.Random) -> ElementRecord:
    kind = rng.choice(AUX_KINDS)
    spec = ELEMENT_SPECS[kind]
    if spec["code"] == "egk":
        value = 0
        while value < 4096 and rng.random() > 0.4:
            value += 1
    else:
        value = rng.randrange(spec["cmax"] + 1)
    return ElementRecord(kind, value, {})


def generate_stream(seed: int, count: int, sizes: list[tuple[int, int]],
                    mode: str, max_mag: int, aux: int = 0,
                    log2_tr_range: int = DEFAULT_LOG2_TR_RANGE,
                    tables_digest: str = "",
                    p_zero: float = 0.35, geo_p: float = 0.30) -> CoefficientStream:
    """Build a stream of ``count`` blocks plus ``aux`` standalone elements."""
    rng = random.Random(seed)
    records: list = []
    for i in range(count):
        w, h = sizes[i % len(sizes)]
        if mode == "mixed":
            m = CodingMode.TC if rng.random() < 0.5 else CodingMode.TS
        else:
            m = CodingMode(mode)
        block = random_block(rng, w, h, m, max_mag, p_zero, geo_p)
        records.append(BlockRecord(m, w, h, block.to_flat()))
    for _ in range(aux):
        records.append(random_element(rng))
    return CoefficientStream(StreamHeader(log2_tr_range, tables_digest), records)
