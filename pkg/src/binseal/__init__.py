"""Format-compliant, constant-bitrate selective encryption for VVC-style
entropy-coded residual bins, plus the security-metric suite used to judge it."""

from .bincodes import (
    BinString,
    BitReader,
    DecodeError,
    Region,
    RegionKind,
    RemainderKind,
    RemainderParams,
    decode_code,
    encode_egk,
    encode_fl,
    encode_limited_egk,
    encode_remainder,
    encode_tb,
    encode_trp,
    encode_tu,
    encode_unary,
)
from .coeffmodel import (
    CodingMode,
    Pass,
    PassAnnotation,
    SubBlock,
    abs_remainder,
    abs_remainder_ts,
    decode_subblock,
    derive_rice,
    derive_v,
    encode_subblock,
    local_abs_sum,
    local_abs_sum_ts,
    map_dec_abs_level,
    pass1_bin_budget,
    scan_positions,
    state_update,
    unmap_dec_abs_level,
)
from .cryptoengine import (
    AesCtrGenerator,
    EncryptedRegion,
    EncryptedSource,
    KeystreamState,
    ZeroGenerator,
    check_sum_change,
    compute_min_max,
    decrypt_subblock,
    encrypt_fl_element,
    encrypt_subblock,
    is_encryptable,
    is_encryptable_ts,
)
from .metrics import (
    FrameBuffer,
    edge_map,
    edr,
    encryption_quality,
    eq_max,
    histogram,
    load_pgm,
    npcr,
    psnr,
    save_pgm,
    uaci,
)
from .tables import CodingTables, build_tables, load_tables, save_tables

__version__ = "0.1.0"
