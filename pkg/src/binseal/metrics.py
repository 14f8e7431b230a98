"""Security metrics over frame pairs: histogram divergence, edge hiding,
pixel-change rates, and PSNR.

Frames are 8- or 10-bit grayscale rasters; multi-plane material is handled
as separate frames per plane.  The edge detector (4-neighbour Laplacian,
relative threshold) is a configurable default and is recorded in every
report, since different detectors move the edge-difference ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_EDGE_TAU = 0.1


@dataclass
class FrameBuffer:
    width: int
    height: int
    bit_depth: int
    pixels: np.ndarray  # shape (height, width), unsigned

    def __post_init__(self):
        if self.bit_depth not in (8, 10):
            raise ValueError("bit depth must be 8 or 10")
        if self.pixels.shape != (self.height, self.width):
            raise ValueError("pixel raster does not match the declared size")
        if self.pixels.min(initial=0) < 0 or self.pixels.max(initial=0) >= 1 << self.bit_depth:
            raise ValueError("pixel outside the declared bit depth")

    @classmethod
    def from_list(cls, rows: list[list[int]], bit_depth: int) -> "FrameBuffer":
        arr = np.asarray(rows, dtype=np.int64)
        return cls(arr.shape[1], arr.shape[0], bit_depth, arr)

    @property
    def levels(self) -> int:
        return 1 << self.bit_depth


def _check_pair(a: FrameBuffer, b: FrameBuffer, depth_too: bool = True) -> None:
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError("frame dimensions differ")
    if depth_too and a.bit_depth != b.bit_depth:
        raise ValueError("frame bit depths differ")


def histogram(frame: FrameBuffer) -> np.ndarray:
    counts = np.bincount(frame.pixels.astype(np.int64).ravel(), minlength=frame.levels)
    return counts[: frame.levels]


def encryption_quality(plain: FrameBuffer, cipher: FrameBuffer) -> float:
    """Summed absolute histogram displacement, normalized by the level count."""
    _check_pair(plain, cipher)
    hp = histogram(plain).astype(np.int64)
    hc = histogram(cipher).astype(np.int64)
    return float(np.abs(hc - hp).sum()) / plain.levels


def eq_max(width: int, height: int, bit_depth: int) -> float:
    """Upper bound of the histogram metric, reached by disjoint histograms."""
    return 2.0 * width * height / (1 << bit_depth)


def edge_map(frame: FrameBuffer, tau: float = DEFAULT_EDGE_TAU) -> np.ndarray:
    """Binary Laplacian edges: |4-neighbour response| above tau * peak value."""
    img = frame.pixels.astype(np.int64)
    padded = np.pad(img, 1, mode="edge")
    response = (
        padded[:-2, 1:-1] + padded[2:, 1:-1] + padded[1:-1, :-2] + padded[1:-1, 2:]
        - 4 * img
    )
    threshold = tau * (frame.levels - 1)
    return (np.abs(response) > threshold).astype(np.uint8)


def edr(plain: FrameBuffer, cipher: FrameBuffer, tau: float = DEFAULT_EDGE_TAU) -> float:
    """Edge differential ratio in [0, 1]; 0 when both edge maps are empty."""
    _check_pair(plain, cipher, depth_too=False)
    pe = edge_map(plain, tau).astype(np.int64)
    ce = edge_map(cipher, tau).astype(np.int64)
    denom = int((pe + ce).sum())
    if denom == 0:
        return 0.0
    return float(np.abs(pe - ce).sum()) / denom


def npcr(c1: FrameBuffer, c2: FrameBuffer) -> float:
    """Percentage of pixel positions that differ."""
    _check_pair(c1, c2, depth_too=False)
    return float((c1.pixels != c2.pixels).mean()) * 100.0


def uaci(c1: FrameBuffer, c2: FrameBuffer) -> float:
    """Mean absolute intensity change, normalized by the level count, in %."""
    _check_pair(c1, c2)
    diff = np.abs(c1.pixels.astype(np.int64) - c2.pixels.astype(np.int64))
    return float(diff.mean()) / c1.levels * 100.0


def psnr(plain: FrameBuffer, cipher: FrameBuffer) -> float:
    """Peak signal-to-noise ratio in dB; infinite for identical frames."""
    _check_pair(plain, cipher)
    diff = plain.pixels.astype(np.int64) - cipher.pixels.astype(np.int64)
    mse = float((diff * diff).mean())
    if mse == 0.0:
        return math.inf
    peak = (1 << plain.bit_depth) - 1
    return 10.0 * math.log10(peak * peak / mse)


def weighted_psnr(planes_ref: list[FrameBuffer], planes_test: list[FrameBuffer],
                  weights: tuple[float, ...]) -> float:
    if len(planes_ref) != len(planes_test) or len(planes_ref) != len(weights):
        raise ValueError("plane lists and weights must align")
    total = sum(weights)
    return sum(w * psnr(r, t) for w, r, t in zip(weights, planes_ref, planes_test)) / total


# ---------------------------------------------------------------------------
# PGM (P5) frame files


def load_pgm(path) -> FrameBuffer:
    """Binary PGM reader: maxval 255 -> 8-bit, maxval 1023 -> 10-bit frames."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    tokens: list[int] = []
    idx = 2
    while len(tokens) < 3:
        while idx < len(data) and data[idx] in b" \t\r\n":
            idx += 1
        if idx < len(data) and data[idx:idx + 1] == b"#":
            while idx < len(data) and data[idx] not in b"\r\n":
                idx += 1
            continue
        start = idx
        while idx < len(data) and data[idx] not in b" \t\r\n":
            idx += 1
        if start == idx:
            raise ValueError(f"{path}: truncated PGM header")
        tokens.append(int(data[start:idx]))
    idx += 1  # single whitespace after maxval
    width, height, maxval = tokens
    if maxval == 255:
        depth, dtype, stride = 8, np.uint8, 1
    elif maxval == 1023:
        depth, dtype, stride = 10, ">u2", 2
    else:
        raise ValueError(f"{path}: unsupported maxval {maxval} (need 255 or 1023)")
    expected = width * height * stride
    payload = data[idx:idx + expected]
    if len(payload) != expected:
        raise ValueError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    pixels = np.frombuffer(payload, dtype=dtype).astype(np.int64).reshape(height, width)
    return FrameBuffer(width, height, depth, pixels)


def save_pgm(frame: FrameBuffer, path) -> None:
    maxval = frame.levels - 1
    header = f"P5\n{frame.width} {frame.height}\n{maxval}\n".encode()
    if frame.bit_depth == 8:
        payload = frame.pixels.astype(np.uint8).tobytes()
    else:
        payload = frame.pixels.astype(">u2").tobytes()
    with open(path, "wb") as fh:
        fh.write(header + payload)
