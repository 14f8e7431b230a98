"""Command-line surface: gen | encrypt | decrypt | verify | oracle | metrics.

Exit codes: 0 success, 1 verification failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys

from . import corpus, figures, metrics, oracle
from .streams import (
    StreamError,
    decrypt_stream,
    encrypt_stream,
    read_sealed,
    read_stream,
    stream_to_text,
    verify_streams,
    write_sealed,
    write_stream,
)
from .tables import TableError, load_tables

USAGE_ERROR = 2
VERIFY_ERROR = 1


class CliError(Exception):
    pass


def _parse_hex(name: str, value: str) -> bytes:
    if len(value) != 32:
        raise CliError(f"--{name} must be 32 hex characters (128 bits)")
    try:
        return bytes.fromhex(value)
    except ValueError as exc:
        raise CliError(f"--{name} is not valid hex: {exc}") from exc


def _parse_size(value: str) -> tuple[int, int]:
    try:
        w, h = value.lower().split("x")
        return int(w), int(h)
    except ValueError as exc:
        raise CliError(f"--size must look like 4x4, got {value!r}") from exc


def _load_tables(path):
    try:
        return load_tables(path)
    except (TableError, OSError) as exc:
        raise CliError(f"cannot load coding tables: {exc}") from exc


def cmd_gen(args) -> int:
    tables = _load_tables(args.tables)
    sizes = [_parse_size(s) for s in args.size.split(",")]
    stream = corpus.generate_stream(
        seed=args.seed, count=args.count, sizes=sizes, mode=args.mode,
        max_mag=args.max_mag, aux=args.aux, log2_tr_range=args.log2_tr_range,
        tables_digest=tables.digest)
    write_stream(stream, args.out)
    print(f"wrote {args.count} blocks + {args.aux} elements to {args.out}")
    return 0


def cmd_encrypt(args) -> int:
    tables = _load_tables(args.tables)
    key = _parse_hex("key", args.key)
    nonce = _parse_hex("nonce", args.nonce)
    try:
        stream = read_stream(args.stream)
        sealed = encrypt_stream(stream, tables, key, nonce,
                                bit_policy="zero" if args.zero_fill else "xor",
                                with_regions=args.with_regions)
    except (StreamError, OSError) as exc:
        raise CliError(str(exc)) from exc
    write_sealed(sealed, args.out)
    print(f"sealed {sealed.bit_count} bins to {args.out}")
    return 0


def cmd_decrypt(args) -> int:
    tables = _load_tables(args.tables)
    key = _parse_hex("key", args.key) if args.key else None
    try:
        sealed = read_sealed(args.sealed)
        stream = decrypt_stream(sealed, tables, key)
    except (StreamError, OSError) as exc:
        raise CliError(str(exc)) from exc
    write_stream(stream, args.out)
    note = "" if key is not None else " (keyless structural decode; values stay ciphered)"
    print(f"recovered {len(stream.records)} records to {args.out}{note}")
    return 0


def cmd_verify(args) -> int:
    tables = _load_tables(args.tables)
    try:
        plain = read_stream(args.plain)
        sealed = read_sealed(args.sealed)
    except (StreamError, OSError) as exc:
        raise CliError(str(exc)) from exc
    report = verify_streams(plain, sealed, tables)
    text = "\n".join(report.lines())
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return 0 if report.ok else VERIFY_ERROR


def cmd_oracle(args) -> int:
    tables = _load_tables(args.tables)
    w, h = _parse_size(args.size)
    parts: list[str] = []
    ok = True
    if args.replacement:
        rep = oracle.run_replacement(tables, blocks=args.blocks, seed=args.seed,
                                     width=w, height=h, mode=args.mode,
                                     max_mag=args.max_mag)
        parts.append("replacement attack\n" + "\n".join(rep.lines()))
        ok = ok and rep.ok
    else:
        rep = oracle.run_oracle(tables, blocks=args.blocks, seed=args.seed,
                                width=w, height=h, mode=args.mode,
                                max_mag=args.max_mag,
                                p21_offset=args.p21_offset)
        parts.append("\n".join(rep.lines()))
        ok = ok and rep.ok
    text = "\n\n".join(parts)
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return 0 if ok else VERIFY_ERROR


def _load_frames(paths: list[str]) -> list[metrics.FrameBuffer]:
    frames = []
    for p in paths:
        try:
            frames.append(metrics.load_pgm(p))
        except (OSError, ValueError) as exc:
            raise CliError(str(exc)) from exc
    return frames


def _psnr_for(ref_group, test_group, weights: str) -> float:
    if len(ref_group) == 1:
        return metrics.psnr(ref_group[0], test_group[0])
    w = tuple(float(x) for x in weights.split(":"))
    return metrics.weighted_psnr(ref_group, test_group, w)


def cmd_metrics(args) -> int:
    if len(args.ref) != len(args.test):
        raise CliError("--ref and --test need the same number of frames")
    if args.planes not in (1, 3):
        raise CliError("--planes must be 1 or 3")
    if len(args.ref) % args.planes:
        raise CliError("frame count must be a multiple of --planes")
    refs = _load_frames(args.ref)
    tests = _load_frames(args.test)

    rows = []
    pairs = []
    n_groups = len(refs) // args.planes
    for g in range(n_groups):
        ref_group = refs[g * args.planes:(g + 1) * args.planes]
        test_group = tests[g * args.planes:(g + 1) * args.planes]
        ref, test = ref_group[0], test_group[0]  # metrics run on the first plane
        try:
            row = {
                "frame": g,
                "ref": args.ref[g * args.planes],
                "test": args.test[g * args.planes],
                "width": ref.width,
                "height": ref.height,
                "bit_depth": ref.bit_depth,
                "eq": metrics.encryption_quality(ref, test),
                "eq_max": metrics.eq_max(ref.width, ref.height, ref.bit_depth),
                "edr": metrics.edr(ref, test, args.tau),
                "npcr": metrics.npcr(ref, test),
                "uaci": metrics.uaci(ref, test),
                "psnr_db": _psnr_for(ref_group, test_group,
                                     args.psnr_weights if args.planes == 3 else "1"),
            }
        except ValueError as exc:
            raise CliError(f"frame {g}: {exc}") from exc
        rows.append(row)
        name = os.path.splitext(os.path.basename(row["ref"]))[0]
        pairs.append((ref, test, f"{g:03d}_{name}"))

    fieldnames = ["frame", "ref", "test", "width", "height", "bit_depth",
                  "eq", "eq_max", "edr", "npcr", "uaci", "psnr_db"]
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# tau={args.tau} kernel=laplacian4 "
                 f"psnr_weights={args.psnr_weights if args.planes == 3 else 'luma'}\n")
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            out_row = dict(row)
            out_row["psnr_db"] = "inf" if math.isinf(row["psnr_db"]) else f"{row['psnr_db']:.4f}"
            for k in ("eq", "eq_max", "edr", "npcr", "uaci"):
                out_row[k] = f"{row[k]:.6f}"
            writer.writerow(out_row)
        if rows:
            avg = {k: sum(r[k] for r in rows) / len(rows)
                   for k in ("eq", "eq_max", "edr", "npcr", "uaci")}
            psnrs = [r["psnr_db"] for r in rows]
            avg_psnr = math.inf if any(math.isinf(p) for p in psnrs) else sum(psnrs) / len(psnrs)
            writer.writerow({
                "frame": "average", "ref": "", "test": "",
                "width": "", "height": "", "bit_depth": "",
                "eq": f"{avg['eq']:.6f}", "eq_max": f"{avg['eq_max']:.6f}",
                "edr": f"{avg['edr']:.6f}", "npcr": f"{avg['npcr']:.6f}",
                "uaci": f"{avg['uaci']:.6f}",
                "psnr_db": "inf" if math.isinf(avg_psnr) else f"{avg_psnr:.4f}",
            })
    print(f"wrote metrics for {len(rows)} frame pairs to {args.out}")

    if not args.no_figures:
        fig_dir = args.figures or os.path.splitext(args.out)[0] + "_figs"
        written = figures.render_report_figures(pairs, rows, fig_dir)
        print(f"rendered {len(written)} figures to {fig_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="binseal",
        description="Constant-bitrate selective encryption for entropy-coded residual bins")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a deterministic synthetic coefficient stream")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=64)
    p.add_argument("--size", default="4x4", help="comma-separated block sizes, e.g. 4x4,2x8")
    p.add_argument("--mode", choices=["tc", "ts", "mixed"], default="mixed")
    p.add_argument("--max-mag", type=int, default=512)
    p.add_argument("--aux", type=int, default=0, help="standalone syntax elements to add")
    p.add_argument("--log2-tr-range", type=int, default=15)
    p.add_argument("--tables", default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("encrypt", help="seal a coefficient stream")
    p.add_argument("stream")
    p.add_argument("--out", required=True)
    p.add_argument("--key", required=True, help="128-bit key, 32 hex chars")
    p.add_argument("--nonce", required=True, help="128-bit counter block, 32 hex chars")
    p.add_argument("--tables", default=None)
    p.add_argument("--zero-fill", action="store_true",
                   help="force encryptable bins to zero (replacement-attack output)")
    p.add_argument("--with-regions", action="store_true",
                   help="embed the encrypted-region sidecar for test tooling")
    p.set_defaults(func=cmd_encrypt)

    p = sub.add_parser("decrypt", help="recover a coefficient stream from a sealed file")
    p.add_argument("sealed")
    p.add_argument("--out", required=True)
    p.add_argument("--key", default=None,
                   help="128-bit key; omit for a keyless structural decode")
    p.add_argument("--tables", default=None)
    p.set_defaults(func=cmd_decrypt)

    p = sub.add_parser("verify", help="audit a sealed stream against its plain source")
    p.add_argument("plain")
    p.add_argument("sealed")
    p.add_argument("--tables", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("oracle", help="brute-force audit of the encryptable-bin analysis")
    p.add_argument("--blocks", type=int, default=10000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--size", default="4x4")
    p.add_argument("--mode", choices=["tc", "ts", "both"], default="both")
    p.add_argument("--max-mag", type=int, default=32)
    p.add_argument("--p21-offset", type=int, default=oracle.P21_CLAMP_OFFSET,
                   help="remainder-pass clamp offset (use 19 for the mutation check)")
    p.add_argument("--replacement", action="store_true",
                   help="run the replacement attack instead of the substitution audit")
    p.add_argument("--tables", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("metrics", help="security metrics over PGM frame pairs")
    p.add_argument("--ref", nargs="+", required=True)
    p.add_argument("--test", nargs="+", required=True)
    p.add_argument("--out", required=True, help="CSV report path")
    p.add_argument("--tau", type=float, default=metrics.DEFAULT_EDGE_TAU)
    p.add_argument("--psnr-weights", default="6:1:1",
                   help="plane weights for --planes 3, e.g. 6:1:1")
    p.add_argument("--planes", type=int, default=1)
    p.add_argument("--figures", default=None, help="figure output directory")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
