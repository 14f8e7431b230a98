"""Coding-table bundle: rice LUT, zero-swap LUT, state machine, and the
derived stability intervals used by the encryptable-bin checks.

The shipped default mirrors the reference codec's residual-coding LUTs and is
treated as versioned configuration: tests inject toy tables through the same
loader.  The stability intervals are always derived at load time by scanning
LUT preimages, never stored, so they cannot drift from the tables themselves.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

SUM_RANGE = 32  # saturated local sums live in 0..31


class TableError(ValueError):
    pass


@dataclass(frozen=True)
class CodingTables:
    rice_arr: tuple[int, ...]                       # saturated sum -> rice parameter
    v_arr: tuple[tuple[int, ...], ...]              # 3 state rows x saturated sum -> zero-swap level
    state_trans: tuple[tuple[int, int], ...]        # (state, parity) -> next state
    state_row_map: tuple[int, ...]                  # 4 states -> zero-swap table row
    digest: str = ""
    # preimage intervals, derived: rice value -> (lo, hi); row -> {v: (lo, hi)}
    i_r: dict[int, tuple[int, int]] = field(default_factory=dict, compare=False)
    i_p: tuple[dict[int, tuple[int, int]], ...] = field(default=(), compare=False)

    def rice_interval(self, rice: int) -> tuple[int, int]:
        return self.i_r[rice]

    def v_interval(self, row: int, v: int) -> tuple[int, int]:
        return self.i_p[row][v]


def _preimage_intervals(values: tuple[int, ...], what: str) -> dict[int, tuple[int, int]]:
    """Map each LUT output to its (lo, hi) preimage; reject split preimages."""
    intervals: dict[int, tuple[int, int]] = {}
    for s, v in enumerate(values):
        if v not in intervals:
            intervals[v] = (s, s)
        else:
            lo, hi = intervals[v]
            if s != hi + 1:
                raise TableError(f"{what} preimage of {v} is not one interval")
            intervals[v] = (lo, s)
    return intervals


def _canonical_payload(rice_arr, v_arr, state_trans, state_row_map) -> bytes:
    doc = {
        "rice_arr": list(rice_arr),
        "v_arr": [list(r) for r in v_arr],
        "state_trans": [list(r) for r in state_trans],
        "state_row_map": list(state_row_map),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def table_digest(rice_arr, v_arr, state_trans, state_row_map) -> str:
    return hashlib.sha256(_canonical_payload(rice_arr, v_arr, state_trans, state_row_map)).hexdigest()


def build_tables(rice_arr, v_arr, state_trans, state_row_map=(0, 0, 1, 2)) -> CodingTables:
    rice_arr = tuple(int(x) for x in rice_arr)
    v_arr = tuple(tuple(int(x) for x in row) for row in v_arr)
    state_trans = tuple(tuple(int(x) for x in row) for row in state_trans)
    state_row_map = tuple(int(x) for x in state_row_map)

    if len(rice_arr) != SUM_RANGE:
        raise TableError("rice LUT must have 32 entries")
    if any(not 0 <= r <= 3 for r in rice_arr):
        raise TableError("rice parameters must be in 0..3")
    if any(a > b for a, b in zip(rice_arr, rice_arr[1:])):
        raise TableError("rice LUT must be non-decreasing")
    if len(v_arr) != 3 or any(len(row) != SUM_RANGE for row in v_arr):
        raise TableError("zero-swap LUT must be 3 x 32")
    if any(v < 0 for row in v_arr for v in row):
        raise TableError("zero-swap levels must be non-negative")
    if len(state_trans) != 4 or any(len(row) != 2 for row in state_trans):
        raise TableError("state table must be 4 x 2")
    if any(not 0 <= s <= 3 for row in state_trans for s in row):
        raise TableError("state table entries must be states 0..3")
    if len(state_row_map) != 4 or any(not 0 <= r <= 2 for r in state_row_map):
        raise TableError("state row map must send 4 states onto rows 0..2")

    i_r = _preimage_intervals(rice_arr, "rice LUT")
    i_p = tuple(_preimage_intervals(row, f"zero-swap row {i}") for i, row in enumerate(v_arr))
    digest = table_digest(rice_arr, v_arr, state_trans, state_row_map)
    return CodingTables(rice_arr, v_arr, state_trans, state_row_map, digest, i_r, i_p)


def load_tables(path=None) -> CodingTables:
    """Load a table file, or the packaged default when no path is given."""
    if path is None:
        text = resources.files("binseal.data").joinpath("default_tables.json").read_text()
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TableError(f"table file is not valid JSON: {exc}") from exc
    if doc.get("format") != "coding-tables":
        raise TableError("not a coding-table file")
    try:
        tables = build_tables(
            doc["rice_arr"], doc["v_arr"], doc["state_trans"],
            doc.get("state_row_map", (0, 0, 1, 2)),
        )
    except KeyError as exc:
        raise TableError(f"table file misses field {exc}") from exc
    stored = doc.get("digest")
    if stored is not None and stored != tables.digest:
        raise TableError("table digest mismatch: file content was altered")
    return tables


def save_tables(tables: CodingTables, path) -> None:
    doc = {
        "format": "coding-tables",
        "version": 1,
        "rice_arr": list(tables.rice_arr),
        "v_arr": [list(r) for r in tables.v_arr],
        "state_trans": [list(r) for r in tables.state_trans],
        "state_row_map": list(tables.state_row_map),
        "digest": tables.digest,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
