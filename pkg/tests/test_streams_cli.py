import json

import numpy as np
import pytest

from binseal.cli import main
from binseal.corpus import generate_stream
from binseal.metrics import FrameBuffer, save_pgm
from binseal.streams import (
    BlockRecord,
    ElementRecord,
    StreamError,
    decrypt_stream,
    encrypt_stream,
    read_sealed,
    read_stream,
    sealed_from_bytes,
    sealed_to_bytes,
    stream_from_text,
    stream_to_text,
    verify_streams,
    write_sealed,
    write_stream,
)
from binseal.tables import build_tables, load_tables, save_tables

KEY = bytes.fromhex("000102030405060708090a0b0c0d0e0f")
KEY_HEX = KEY.hex()
NONCE = bytes.fromhex("f0f1f2f3f4f5f6f7f8f9fafbfcfdfeff")
NONCE_HEX = NONCE.hex()


@pytest.fixture()
def small_stream(tables):
    return generate_stream(seed=5, count=24, sizes=[(4, 4), (2, 8), (8, 2)],
                           mode="mixed", max_mag=700, aux=9,
                           tables_digest=tables.digest)


class TestTables:
    def test_default_loads(self, tables):
        assert len(tables.rice_arr) == 32
        assert tables.rice_arr[0] == 0 and tables.rice_arr[31] == 3

    def test_save_and_reload(self, tables, tmp_path):
        path = tmp_path / "t.json"
        save_tables(tables, path)
        again = load_tables(path)
        assert again.digest == tables.digest
        assert again.i_r == tables.i_r

    def test_toy_table_with_two_rice_levels(self):
        t = build_tables([0] * 16 + [1] * 16,
                         [[0] * 32, [1] * 32, [2] * 32],
                         [[0, 2], [2, 0], [1, 3], [3, 1]])
        assert t.i_r == {0: (0, 15), 1: (16, 31)}

    def test_non_monotone_rice_rejected(self):
        with pytest.raises(Exception):
            build_tables([1] + [0] * 31, [[0] * 32] * 3,
                         [[0, 2], [2, 0], [1, 3], [3, 1]])

    def test_corrupted_digest_rejected(self, tables, tmp_path):
        path = tmp_path / "bad.json"
        save_tables(tables, path)
        doc = json.loads(path.read_text())
        doc["rice_arr"][5] = 1
        path.write_text(json.dumps(doc))
        with pytest.raises(Exception):
            load_tables(path)


class TestTextContainer:
    def test_round_trip(self, small_stream, tmp_path):
        path = tmp_path / "s.jsonl"
        write_stream(small_stream, path)
        again = read_stream(path)
        assert stream_to_text(again) == stream_to_text(small_stream)

    def test_rejects_garbage(self):
        with pytest.raises(StreamError):
            stream_from_text("not json")

    def test_rejects_unknown_element(self):
        head = json.dumps({"format": "coeffstream", "version": 1,
                           "log2_tr_range": 15, "tables_digest": ""})
        rec = json.dumps({"kind": "element", "element": "nope", "value": 1})
        with pytest.raises(StreamError):
            stream_from_text(head + "\n" + rec)


class TestSealedContainer:
    def test_binary_round_trip(self, small_stream, tables, tmp_path):
        sealed = encrypt_stream(small_stream, tables, KEY, NONCE, with_regions=True)
        path = tmp_path / "s.seal"
        write_sealed(sealed, path)
        again = read_sealed(path)
        assert again.bits == sealed.bits
        assert again.nonce == NONCE
        assert again.regions == [tuple(r) for r in sealed.regions]
        assert again.structure == json.loads(json.dumps(sealed.structure))

    def test_header_is_64_bytes(self, small_stream, tables):
        sealed = encrypt_stream(small_stream, tables, KEY, NONCE)
        blob = sealed_to_bytes(sealed)
        assert blob[:8] == b"BINSEAL\x00"
        meta_len = int.from_bytes(blob[52:60], "big")
        assert json.loads(blob[64:64 + meta_len].decode())

    def test_truncated_file_rejected(self, small_stream, tables):
        blob = sealed_to_bytes(encrypt_stream(small_stream, tables, KEY, NONCE))
        with pytest.raises(StreamError):
            sealed_from_bytes(blob[:40])
        with pytest.raises(Exception):
            decrypt_stream(sealed_from_bytes(blob[:-8]), tables, KEY)

    def test_digest_mismatch_rejected(self, small_stream, tables):
        other = build_tables([0] * 16 + [1] * 16, [[0] * 32, [1] * 32, [2] * 32],
                             [[0, 2], [2, 0], [1, 3], [3, 1]])
        sealed = encrypt_stream(small_stream, tables, KEY, NONCE)
        with pytest.raises(StreamError):
            decrypt_stream(sealed, other, KEY)


class TestStreamCrypto:
    def test_round_trip_restores_text_exactly(self, small_stream, tables):
        sealed = encrypt_stream(small_stream, tables, KEY, NONCE)
        back = decrypt_stream(sealed, tables, KEY)
        assert stream_to_text(back) == stream_to_text(small_stream)

    def test_keyless_decode_is_structurally_valid(self, small_stream, tables):
        sealed = encrypt_stream(small_stream, tables, KEY, NONCE)
        keyless = decrypt_stream(sealed, tables, None)
        assert len(keyless.records) == len(small_stream.records)
        limit = 1 << small_stream.header.log2_tr_range
        for rec in keyless.records:
            if isinstance(rec, BlockRecord):
                assert all(abs(c) < limit for c in rec.coeffs)

    def test_one_key_bit_changes_output_inside_regions_only(self, small_stream, tables):
        key2 = bytearray(KEY)
        key2[0] ^= 0x80
        a = encrypt_stream(small_stream, tables, KEY, NONCE, with_regions=True)
        b = encrypt_stream(small_stream, tables, bytes(key2), NONCE, with_regions=True)
        assert len(a.bits) == len(b.bits)
        allowed = set()
        for off, length, _ in a.regions + b.regions:
            allowed.update(range(off, off + length))
        diffs = {i for i, (x, y) in enumerate(zip(a.bits, b.bits)) if x != y}
        assert diffs
        assert diffs <= allowed

    def test_verify_passes_on_honest_encryption(self, small_stream, tables):
        sealed = encrypt_stream(small_stream, tables, KEY, NONCE)
        report = verify_streams(small_stream, sealed, tables)
        assert report.ok, "\n".join(report.lines())

    def test_verify_fails_on_prefix_corruption(self, small_stream, tables):
        sealed = encrypt_stream(small_stream, tables, KEY, NONCE)
        # flip a context bin: the decoded structure must diverge
        sealed.bits[0] ^= 1
        report = verify_streams(small_stream, sealed, tables)
        assert not report.ok

    def test_verify_fails_on_truncation(self, small_stream, tables):
        sealed = encrypt_stream(small_stream, tables, KEY, NONCE)
        sealed.bits = sealed.bits[:-40]
        sealed.bit_count -= 40
        report = verify_streams(small_stream, sealed, tables)
        assert not report.ok

    def test_zero_fill_keeps_structure(self, small_stream, tables):
        sealed = encrypt_stream(small_stream, tables, KEY, NONCE, bit_policy="zero")
        plain = encrypt_stream(small_stream, tables, KEY, NONCE,
                               bit_policy="zero")  # deterministic: no keystream used
        assert sealed.bits == plain.bits
        keyless = decrypt_stream(sealed, tables, None)
        assert len(keyless.records) == len(small_stream.records)


class TestCli:
    def run(self, *argv):
        return main(list(argv))

    def test_gen_is_deterministic(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert self.run("gen", "--out", str(a), "--seed", "9", "--count", "12") == 0
        assert self.run("gen", "--out", str(b), "--seed", "9", "--count", "12") == 0
        assert a.read_bytes() == b.read_bytes()

    def test_gen_zero_blocks(self, tmp_path):
        out = tmp_path / "empty.jsonl"
        assert self.run("gen", "--out", str(out), "--count", "0") == 0
        stream = read_stream(out)
        assert stream.records == []

    def test_gen_respects_magnitude_cap(self, tmp_path):
        out = tmp_path / "cap.jsonl"
        assert self.run("gen", "--out", str(out), "--count", "30",
                        "--max-mag", "17", "--seed", "3") == 0
        for rec in read_stream(out).records:
            if isinstance(rec, BlockRecord):
                assert all(abs(c) <= 17 for c in rec.coeffs)

    def test_encrypt_decrypt_verify_pipeline(self, tmp_path):
        s = tmp_path / "s.jsonl"
        sealed = tmp_path / "s.seal"
        back = tmp_path / "back.jsonl"
        assert self.run("gen", "--out", str(s), "--seed", "1", "--count", "18",
                        "--aux", "6") == 0
        assert self.run("encrypt", str(s), "--out", str(sealed),
                        "--key", KEY_HEX, "--nonce", NONCE_HEX) == 0
        assert self.run("verify", str(s), str(sealed)) == 0
        assert self.run("decrypt", str(sealed), "--out", str(back),
                        "--key", KEY_HEX) == 0
        assert s.read_bytes() == back.read_bytes()

    def test_keyless_decrypt(self, tmp_path):
        s, sealed, out = tmp_path / "s.jsonl", tmp_path / "s.seal", tmp_path / "o.jsonl"
        self.run("gen", "--out", str(s), "--seed", "2", "--count", "8")
        self.run("encrypt", str(s), "--out", str(sealed),
                 "--key", KEY_HEX, "--nonce", NONCE_HEX)
        assert self.run("decrypt", str(sealed), "--out", str(out)) == 0
        assert read_stream(out).records

    def test_bad_key_hex_is_usage_error(self, tmp_path):
        s = tmp_path / "s.jsonl"
        self.run("gen", "--out", str(s), "--count", "2")
        assert self.run("encrypt", str(s), "--out", str(tmp_path / "x"),
                        "--key", "abc", "--nonce", NONCE_HEX) == 2

    def test_verify_exit_code_on_corruption(self, tmp_path):
        s, sealed = tmp_path / "s.jsonl", tmp_path / "s.seal"
        self.run("gen", "--out", str(s), "--seed", "4", "--count", "10")
        self.run("encrypt", str(s), "--out", str(sealed),
                 "--key", KEY_HEX, "--nonce", NONCE_HEX)
        blob = bytearray(sealed.read_bytes())
        meta_len = int.from_bytes(blob[52:60], "big")
        blob[64 + meta_len] ^= 0x80  # first payload bin: a context flag
        sealed.write_bytes(bytes(blob))
        assert self.run("verify", str(s), str(sealed)) == 1

    def test_oracle_small_run(self, tmp_path, capsys):
        out = tmp_path / "oracle.txt"
        assert self.run("oracle", "--blocks", "60", "--seed", "3",
                        "--out", str(out)) == 0
        assert "verdict: PASS" in out.read_text()

    def test_oracle_replacement_mode(self):
        assert self.run("oracle", "--replacement", "--blocks", "40",
                        "--seed", "3") == 0

    def test_metrics_command_writes_csv_and_figures(self, tmp_path):
        rng = np.random.default_rng(12)
        paths = []
        for name in ("r0", "r1", "t0", "t1"):
            f = FrameBuffer(32, 24, 8, rng.integers(0, 256, (24, 32)))
            p = tmp_path / f"{name}.pgm"
            save_pgm(f, p)
            paths.append(str(p))
        out = tmp_path / "report.csv"
        figs = tmp_path / "figs"
        assert self.run("metrics", "--ref", paths[0], paths[1],
                        "--test", paths[2], paths[3],
                        "--out", str(out), "--figures", str(figs)) == 0
        text = out.read_text()
        assert text.startswith("# tau=0.1")
        assert "average" in text
        assert (figs / "summary.png").exists()
        assert len(list(figs.glob("*_hist.png"))) == 2

    def test_metrics_identical_frames_zero_scores(self, tmp_path):
        rng = np.random.default_rng(13)
        f = FrameBuffer(16, 16, 8, rng.integers(0, 256, (16, 16)))
        p = tmp_path / "same.pgm"
        save_pgm(f, p)
        out = tmp_path / "zero.csv"
        assert self.run("metrics", "--ref", str(p), "--test", str(p),
                        "--out", str(out), "--no-figures") == 0
        row = out.read_text().splitlines()[2].split(",")
        assert float(row[6]) == 0.0      # histogram displacement
        assert float(row[8]) == 0.0      # edge ratio
        assert float(row[9]) == 0.0      # pixel change rate
        assert float(row[10]) == 0.0     # intensity change
        assert row[11] == "inf"

    def test_metrics_dimension_mismatch_is_usage_error(self, tmp_path):
        rng = np.random.default_rng(14)
        a = FrameBuffer(16, 16, 8, rng.integers(0, 256, (16, 16)))
        b = FrameBuffer(8, 8, 8, rng.integers(0, 256, (8, 8)))
        pa, pb = tmp_path / "a.pgm", tmp_path / "b.pgm"
        save_pgm(a, pa)
        save_pgm(b, pb)
        assert self.run("metrics", "--ref", str(pa), "--test", str(pb),
                        "--out", str(tmp_path / "x.csv"), "--no-figures") == 2

    def test_metrics_three_plane_weighting(self, tmp_path):
        rng = np.random.default_rng(15)
        paths = []
        for i in range(6):
            f = FrameBuffer(16, 16, 8, rng.integers(0, 256, (16, 16)))
            p = tmp_path / f"p{i}.pgm"
            save_pgm(f, p)
            paths.append(str(p))
        out = tmp_path / "w.csv"
        assert self.run("metrics", "--ref", *paths[:3], "--test", *paths[3:],
                        "--out", str(out), "--planes", "3",
                        "--psnr-weights", "6:1:1", "--no-figures") == 0
        assert "psnr_weights=6:1:1" in out.read_text()
