"""Container formats and stream-level sealing.

A coefficient stream is a line-oriented JSON text file: one header object,
then one record per sub-block or standalone syntax element.  A sealed stream
is its binary twin: fixed 64-byte header, a JSON metadata section carrying
the record structure (so the file is decodable on its own), and the packed
bins, most-significant bit first with zero padding in the final byte.

Sealing never changes a single bit length anywhere; the bins of a sealed
stream parse with no key at all, which is what lets verification run
keyless.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

from .bincodes import (
    BinString,
    BitReader,
    DecodeError,
    RegionKind,
    decode_egk,
    decode_fl,
    decode_tb,
    egk_layout,
    encode_egk,
    encode_fl,
    encode_tb,
    fl_width,
)
from .coeffmodel import (
    DEFAULT_LOG2_TR_RANGE,
    CodingMode,
    SubBlock,
    decode_subblock,
    encode_subblock,
)
from .cryptoengine import (
    AesCtrGenerator,
    EncryptedRegion,
    EncryptedSource,
    KeystreamState,
    decrypt_subblock,
    encrypt_fl_element,
    encrypt_subblock,
)
from .tables import CodingTables

MAGIC = b"BINSEAL\x00"
SEALED_VERSION = 1
STREAM_VERSION = 1


class StreamError(ValueError):
    pass


# binarization of the standalone bypass-coded syntax elements; params give
# the default alphabet, policy names the encryptable span rule
ELEMENT_SPECS: dict[str, dict] = {
    "coeff_sign_flag": {"code": "fl", "cmax": 1, "policy": "full"},
    "coeff_sign_flag_ts": {"code": "fl", "cmax": 1, "policy": "full"},
    "mvd_sign_flag": {"code": "fl", "cmax": 1, "policy": "full"},
    "abs_mvd_minus2": {"code": "egk", "k": 1, "policy": "egk_suffix"},
    "alf_luma_fixed_filter_idx": {"code": "tb", "cmax": 63, "policy": "tb"},
    "mmvd_direction_idx": {"code": "fl", "cmax": 3, "policy": "full"},
    "merge_triangle_split_dir": {"code": "fl", "cmax": 1, "policy": "full"},
    "sao_offset_sign": {"code": "fl", "cmax": 1, "policy": "full"},
    "sao_band_position": {"code": "fl", "cmax": 31, "policy": "full"},
    "sao_eo_class": {"code": "fl", "cmax": 3, "policy": "full"},
    "intra_chroma_pred_cand": {"code": "fl", "cmax": 3, "policy": "full"},
}


@dataclass
class StreamHeader:
    log2_tr_range: int = DEFAULT_LOG2_TR_RANGE
    tables_digest: str = ""
    version: int = STREAM_VERSION


@dataclass
class BlockRecord:
    mode: CodingMode
    width: int
    height: int
    coeffs: list[int]  # row-major

    def to_subblock(self) -> SubBlock:
        return SubBlock.from_flat(self.coeffs, self.width, self.height, self.mode)


@dataclass
class ElementRecord:
    element: str
    value: int
    params: dict = field(default_factory=dict)


@dataclass
class CoefficientStream:
    header: StreamHeader
    records: list  # BlockRecord | ElementRecord


@dataclass
class SealedStream:
    header: StreamHeader
    nonce: bytes
    bit_count: int
    structure: list[dict]
    bits: list[int]
    regions: list[tuple[int, int, str]] | None = None


# ---------------------------------------------------------------------------
# text container


def write_stream(stream: CoefficientStream, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(stream_to_text(stream))


def stream_to_text(stream: CoefficientStream) -> str:
    lines = [json.dumps({
        "format": "coeffstream",
        "version": stream.header.version,
        "log2_tr_range": stream.header.log2_tr_range,
        "tables_digest": stream.header.tables_digest,
    })]
    for rec in stream.records:
        if isinstance(rec, BlockRecord):
            lines.append(json.dumps({
                "kind": "block",
                "mode": rec.mode.value,
                "width": rec.width,
                "height": rec.height,
                "coeffs": rec.coeffs,
            }))
        else:
            lines.append(json.dumps({
                "kind": "element",
                "element": rec.element,
                "value": rec.value,
                "params": rec.params,
            }))
    return "\n".join(lines) + "\n"


def read_stream(path) -> CoefficientStream:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return stream_from_text(text, where=str(path))


def stream_from_text(text: str, where: str = "<stream>") -> CoefficientStream:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise StreamError(f"{where}: empty stream file")
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise StreamError(f"{where}: bad header line: {exc}") from exc
    if head.get("format") != "coeffstream":
        raise StreamError(f"{where}: not a coefficient stream")
    header = StreamHeader(head["log2_tr_range"], head.get("tables_digest", ""),
                          head.get("version", STREAM_VERSION))
    records = []
    for i, line in enumerate(lines[1:], start=2):
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise StreamError(f"{where}:{i}: bad record: {exc}") from exc
        if doc.get("kind") == "block":
            records.append(BlockRecord(CodingMode(doc["mode"]), doc["width"],
                                       doc["height"], list(doc["coeffs"])))
        elif doc.get("kind") == "element":
            if doc["element"] not in ELEMENT_SPECS:
                raise StreamError(f"{where}:{i}: unknown element {doc['element']!r}")
            records.append(ElementRecord(doc["element"], doc["value"], dict(doc.get("params", {}))))
        else:
            raise StreamError(f"{where}:{i}: unknown record kind")
    return CoefficientStream(header, records)


# ---------------------------------------------------------------------------
# element codewords


def element_params(rec: ElementRecord) -> dict:
    spec = dict(ELEMENT_SPECS[rec.element])
    spec.update(rec.params)
    return spec


def encode_element(rec: ElementRecord) -> tuple[BinString, tuple[int, int]]:
    """Binarize one element; returns its bins and the encryptable (offset, len)."""
    spec = element_params(rec)
    if spec["code"] == "fl":
        bins = encode_fl(rec.value, spec["cmax"])
        span = (0, fl_width(spec["cmax"]))
    elif spec["code"] == "tb":
        bins = encode_tb(rec.value, spec["cmax"])
        # only a power-of-two alphabet degenerates to a pure fixed-length
        # code; anything else has length-discriminating bits, left alone
        if (spec["cmax"] + 1) & spec["cmax"] == 0:
            span = (0, len(bins))
        else:
            span = (0, 0)
    elif spec["code"] == "egk":
        bins = encode_egk(rec.value, spec["k"])
        prefix_len, suffix_len = egk_layout(rec.value, spec["k"])
        span = (prefix_len, suffix_len)
    else:
        raise StreamError(f"element {rec.element!r} has no binarization")
    return bins, span


def decode_element(reader: BitReader, element: str, params: dict) -> tuple[int, tuple[int, int]]:
    spec = dict(ELEMENT_SPECS[element])
    spec.update(params)
    start = reader.pos
    if spec["code"] == "fl":
        value = decode_fl(reader, spec["cmax"])
        span = (0, fl_width(spec["cmax"]))
    elif spec["code"] == "tb":
        value = decode_tb(reader, spec["cmax"])
        span = (0, reader.pos - start) if (spec["cmax"] + 1) & spec["cmax"] == 0 else (0, 0)
    else:
        value = decode_egk(reader, spec["k"])
        prefix_len, suffix_len = egk_layout(value, spec["k"])
        span = (prefix_len, suffix_len)
    return value, span


# ---------------------------------------------------------------------------
# sealing


def _keystream(key: bytes, nonce: bytes) -> KeystreamState:
    return KeystreamState(AesCtrGenerator(key, nonce))


def encrypt_stream(stream: CoefficientStream, tables: CodingTables, key: bytes,
                   nonce: bytes, bit_policy: str = "xor",
                   with_regions: bool = False) -> SealedStream:
    if stream.header.tables_digest and stream.header.tables_digest != tables.digest:
        raise StreamError("stream was generated against different coding tables")
    ks = _keystream(key, nonce)
    log2 = stream.header.log2_tr_range
    out = BinString()
    structure: list[dict] = []
    regions: list[tuple[int, int, str]] = []
    for rec in stream.records:
        base = len(out)
        if isinstance(rec, BlockRecord):
            bins, recs = encrypt_subblock(rec.to_subblock(), tables, ks, log2,
                                          bit_policy=bit_policy)
            out.extend(bins)
            structure.append({"kind": "block", "mode": rec.mode.value,
                              "width": rec.width, "height": rec.height})
            regions.extend((base + r.offset, r.length, r.source.value) for r in recs)
        else:
            bins, span = encode_element(rec)
            if bit_policy == "zero":
                enc = bins.copy()
                ks.sample(span[1])
                for i in range(span[0], span[0] + span[1]):
                    if enc.bits[i]:
                        enc.flip(i)
                if span[1]:
                    enc.relabel(span[0], span[1], RegionKind.BYPASS_ENCRYPTABLE)
                    region = EncryptedRegion(span[0], span[1], EncryptedSource.FL_ELEMENT)
                else:
                    region = None
            else:
                enc, region = encrypt_fl_element(bins, ks, span)
            out.extend(enc)
            structure.append({"kind": "element", "element": rec.element,
                              "params": rec.params})
            if region is not None:
                regions.append((base + region.offset, region.length, region.source.value))
    return SealedStream(stream.header, nonce, len(out), structure, out.bits,
                        regions if with_regions else None)


def pack_bits(bits: list[int]) -> bytes:
    out = bytearray((len(bits) + 7) // 8)
    for i, b in enumerate(bits):
        if b:
            out[i >> 3] |= 0x80 >> (i & 7)
    return bytes(out)


def unpack_bits(data: bytes, bit_count: int) -> list[int]:
    if len(data) * 8 < bit_count:
        raise StreamError("sealed payload shorter than its declared bit count")
    return [(data[i >> 3] >> (7 - (i & 7))) & 1 for i in range(bit_count)]


def write_sealed(sealed: SealedStream, path) -> None:
    with open(path, "wb") as fh:
        fh.write(sealed_to_bytes(sealed))


def sealed_to_bytes(sealed: SealedStream) -> bytes:
    meta = {
        "version": sealed.header.version,
        "log2_tr_range": sealed.header.log2_tr_range,
        "tables_digest": sealed.header.tables_digest,
        "records": sealed.structure,
    }
    if sealed.regions is not None:
        meta["regions"] = [list(r) for r in sealed.regions]
    meta_bytes = json.dumps(meta).encode()
    digest16 = bytes.fromhex(sealed.header.tables_digest)[:16] if sealed.header.tables_digest else bytes(16)
    head = struct.pack(">8sI16sQ16sQ4x", MAGIC, SEALED_VERSION, sealed.nonce,
                       sealed.bit_count, digest16, len(meta_bytes))
    assert len(head) == 64
    return head + meta_bytes + pack_bits(sealed.bits)


def read_sealed(path) -> SealedStream:
    with open(path, "rb") as fh:
        return sealed_from_bytes(fh.read(), where=str(path))


def sealed_from_bytes(data: bytes, where: str = "<sealed>") -> SealedStream:
    if len(data) < 64:
        raise StreamError(f"{where}: truncated sealed header")
    magic, version, nonce, bit_count, digest16, meta_len = struct.unpack(">8sI16sQ16sQ4x", data[:64])
    if magic != MAGIC:
        raise StreamError(f"{where}: not a sealed stream")
    if version != SEALED_VERSION:
        raise StreamError(f"{where}: unsupported sealed version {version}")
    meta_end = 64 + meta_len
    if len(data) < meta_end:
        raise StreamError(f"{where}: truncated metadata section")
    meta = json.loads(data[64:meta_end].decode())
    bits = unpack_bits(data[meta_end:], bit_count)
    header = StreamHeader(meta["log2_tr_range"], meta.get("tables_digest", ""),
                          meta.get("version", STREAM_VERSION))
    if header.tables_digest and bytes.fromhex(header.tables_digest)[:16] != digest16:
        raise StreamError(f"{where}: header digest does not match metadata")
    regions = [tuple(r) for r in meta["regions"]] if "regions" in meta else None
    return SealedStream(header, nonce, bit_count, meta["records"], bits, regions)


def decrypt_stream(sealed: SealedStream, tables: CodingTables,
                   key: bytes | None) -> CoefficientStream:
    """Invert sealing; with ``key=None`` decode structurally, leaving bins as-is."""
    if sealed.header.tables_digest and sealed.header.tables_digest != tables.digest:
        raise StreamError("sealed stream needs different coding tables")
    log2 = sealed.header.log2_tr_range
    ks = _keystream(key, sealed.nonce) if key is not None else None
    reader = BitReader(sealed.bits)
    records = []
    for entry in sealed.structure:
        if entry["kind"] == "block":
            mode = CodingMode(entry["mode"])
            w, h = entry["width"], entry["height"]
            if ks is None:
                block, _ = decode_subblock(None, w, h, mode, tables, log2, reader=reader)
            else:
                block = decrypt_subblock(None, w, h, mode, tables, ks, log2, reader=reader)
            records.append(BlockRecord(mode, w, h, block.to_flat()))
        else:
            element, params = entry["element"], dict(entry.get("params", {}))
            value, span = decode_element(reader, element, params)
            if ks is not None:
                sample = ks.sample(span[1])
                if span[1]:
                    spec = dict(ELEMENT_SPECS[element])
                    spec.update(params)
                    coded = _element_bits(value, spec)
                    for j, kb in enumerate(sample):
                        if kb:
                            coded[span[0] + j] ^= 1
                    value = _element_value(coded, spec)
            records.append(ElementRecord(element, value, params))
    if reader.pos != sealed.bit_count:
        raise StreamError(f"sealed payload has {sealed.bit_count} bins, parsed {reader.pos}")
    return CoefficientStream(sealed.header, records)


def _element_bits(value: int, spec: dict) -> list[int]:
    if spec["code"] == "fl":
        return encode_fl(value, spec["cmax"]).bits
    if spec["code"] == "tb":
        return encode_tb(value, spec["cmax"]).bits
    return encode_egk(value, spec["k"]).bits


def _element_value(bits: list[int], spec: dict) -> int:
    reader = BitReader(bits)
    if spec["code"] == "fl":
        return decode_fl(reader, spec["cmax"])
    if spec["code"] == "tb":
        return decode_tb(reader, spec["cmax"])
    return decode_egk(reader, spec["k"])


# ---------------------------------------------------------------------------
# verification


@dataclass
class VerifyCheck:
    name: str
    ok: bool
    detail: str


@dataclass
class VerifyReport:
    checks: list[VerifyCheck]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            out.append(f"[{'PASS' if c.ok else 'FAIL'}] {c.name}: {c.detail}")
        out.append(f"verdict: {'PASS' if self.ok else 'FAIL'}")
        return out


def _coarse_regions(bins: BinString) -> list[tuple[int, int, bool]]:
    """Region map reduced to the context/bypass split (encryption keeps it)."""
    out: list[tuple[int, int, bool]] = []
    for r in bins.regions:
        is_ctx = r.kind is RegionKind.CONTEXT
        if out and out[-1][2] == is_ctx:
            s, n, k = out[-1]
            out[-1] = (s, n + r.length, k)
        else:
            out.append((r.start, r.length, is_ctx))
    return out


def verify_streams(plain: CoefficientStream, sealed: SealedStream,
                   tables: CodingTables) -> VerifyReport:
    """Keyless audit: bitrate, structure, annotations, and decodability."""
    checks: list[VerifyCheck] = []
    log2 = plain.header.log2_tr_range

    plain_bins = BinString()
    plain_anns = []
    block_recs = [r for r in plain.records if isinstance(r, BlockRecord)]
    for rec in plain.records:
        if isinstance(rec, BlockRecord):
            bins, ann = encode_subblock(rec.to_subblock(), tables, log2)
            plain_anns.append(ann)
            plain_bins.extend(bins)
        else:
            plain_bins.extend(encode_element(rec)[0])

    checks.append(VerifyCheck(
        "bit-length equality", len(plain_bins) == sealed.bit_count,
        f"plain {len(plain_bins)} bins, sealed {sealed.bit_count} bins"))

    decoded = None
    try:
        decoded = decrypt_stream(sealed, tables, key=None)
        checks.append(VerifyCheck("keyless decode", True,
                                  f"{len(decoded.records)} records parsed"))
    except (DecodeError, StreamError) as exc:
        checks.append(VerifyCheck("keyless decode", False, str(exc)))

    if decoded is not None:
        in_range = True
        limit = 1 << log2
        for rec in decoded.records:
            if isinstance(rec, BlockRecord) and any(abs(c) >= limit for c in rec.coeffs):
                in_range = False
        checks.append(VerifyCheck("decoded coefficients in range", in_range,
                                  f"bound 2^{log2}"))

        sealed_bins = BinString()
        sealed_anns = []
        ok = True
        for rec in decoded.records:
            if isinstance(rec, BlockRecord):
                bins, ann = encode_subblock(rec.to_subblock(), tables, log2)
                sealed_anns.append(ann)
                sealed_bins.extend(bins)
            else:
                sealed_bins.extend(encode_element(rec)[0])
        ok = sealed_bins.bits == sealed.bits
        checks.append(VerifyCheck("re-encode reproduces sealed bins", ok,
                                  f"{len(sealed_bins)} bins compared"))

        boundaries_ok = _coarse_regions(plain_bins) == _coarse_regions(sealed_bins)
        checks.append(VerifyCheck("region boundaries", boundaries_ok,
                                  "context/bypass split identical"))

        ann_ok = len(plain_anns) == len(sealed_anns)
        mism = ""
        if ann_ok:
            for bi, (pa, sa) in enumerate(zip(plain_anns, sealed_anns)):
                # coded remainder values are the encrypted content and differ;
                # every derived parameter and layout field must not
                pk = [p.key(with_rem_value=False) for p in pa.positions]
                sk = [p.key(with_rem_value=False) for p in sa.positions]
                if pk != sk or pa.context_bins != sa.context_bins or pa.cutoff != sa.cutoff:
                    ann_ok = False
                    mism = f"block {bi}"
                    break
        checks.append(VerifyCheck("annotation invariance", ann_ok,
                                  mism or f"{len(block_recs)} blocks match"))
    return VerifyReport(checks)
