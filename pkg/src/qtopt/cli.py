"""``qtopt`` command line: optimize, select, encode, compare.

Exit codes: 0 success, 1 usage, 2 validation, 3 runtime.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, apply_overrides, dump_config, load_config
from .errors import (ConfigError, CorruptJpegError, InvalidInputError, InvalidParamsError,
                     InvalidPlanError, InvalidTableError, MustConvertError, QtoptError,
                     UnsupportedJpegError)
from .jpeg import ColorSpace, ImagePlanes, QuantTableSet, decode_jpeg, encode_jpeg, load_image
from .jpeg.image import save_png, to_codec_space
from .jpeg.jfif import to_display
from .loss import MsSsimParams, ms_ssim_np
from .qnet import save_checkpoint

log = logging.getLogger("qtopt")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3
REPORT_FIELDS = ["image_id", "method", "size_bytes", "ms_ssim", "bpp"]
SUMMARY_FIELDS = ["bin", "low", "high", "epoch", "ms_ssim", "size_bytes", "rate_bits", "jpeg",
                  "tables", "preview"]
BASELINE_QUALITIES = (50, 75, 90)

_VALIDATION_ERRORS = (ConfigError, InvalidInputError, InvalidParamsError, InvalidPlanError,
                      InvalidTableError, MustConvertError)


class CommandError(Exception):
    def __init__(self, message, code=EXIT_RUNTIME):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args):
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = load_config(args.config, cfg)
    flags = {
        "samples": args.samples, "top_frac": args.top_frac, "epochs": args.epochs,
        "seed": args.seed, "bin_width": args.bins_width, "tau": args.tau,
    }
    cfg = cfg.replace(**{k: v for k, v in flags.items() if v is not None})
    cfg = apply_overrides(cfg, args.set or [])
    return cfg.validate()


def _mp(cfg):
    return MsSsimParams(cfg.msssim_scales, tuple(cfg.msssim_weights), cfg.c1, cfg.c2,
                        cfg.msssim_window)


def _read_image(path):
    if not Path(path).is_file():
        raise CommandError(f"cannot read input {path}", EXIT_VALIDATION)
    return load_image(path)


def _out_dir(path):
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise CommandError(f"output directory {out} is not writable: {exc}") from exc
    return out


# ------------------------------------------------------------------ optimize


def cmd_optimize(args):
    from .train import train_image

    cfg = _config(args)
    img = _read_image(args.input)
    out = _out_dir(args.out)
    log.info("optimizing %s (%dx%d, %d ch), %d epochs", args.input, img.width, img.height,
             img.channels, cfg.epochs)
    rec = train_image(img, cfg)

    cand_dir = out / "candidates"
    cand_dir.mkdir(exist_ok=True)
    for old in cand_dir.glob("bin*"):
        old.unlink()
    rows = []
    for entry, cand in zip(rec.bins, [c for c in rec.best if c is not None]):
        stem = f"bin{entry['bin']:02d}_{cand.size_bytes}B"
        jpg, tab, png = (cand_dir / f"{stem}{ext}" for ext in (".jpg", ".json", ".png"))
        jpg.write_bytes(cand.data)
        cand.tables.save(tab)
        save_png(png, decode_jpeg(cand.data).to_display())
        rows.append({
            "bin": entry["bin"], "low": f"{entry['low']:.4f}", "high": f"{entry['high']:.4f}",
            "epoch": cand.epoch, "ms_ssim": f"{cand.msssim:.6f}", "size_bytes": cand.size_bytes,
            "rate_bits": int(cand.rate_bits), "jpeg": f"candidates/{jpg.name}",
            "tables": f"candidates/{tab.name}", "preview": f"candidates/{png.name}",
        })

    (out / "run_record.json").write_text(rec.to_json())
    (out / "config.txt").write_text(dump_config(cfg))
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, SUMMARY_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    (out / "timing.json").write_text(json.dumps({"wall_clock_s": rec.wall_clock_s}) + "\n")
    if rec.net is not None:
        save_checkpoint(out / "checkpoint", rec.net.cfg, rec.net.params)

    print(f"{len(rows)} bins populated, {rec.dropped} candidates below range")
    for r in rows:
        print(f"  bin {r['bin']:>2}  ms-ssim {r['ms_ssim']}  {r['size_bytes']:>8} B  {r['jpeg']}")
    if rec.status != "ok":
        raise CommandError(rec.status)
    return EXIT_OK


# ------------------------------------------------------------------ select


def _load_summary(run_dir):
    path = Path(run_dir) / "summary.csv"
    if not path.is_file():
        raise CommandError(f"{run_dir}: no summary.csv, not an optimize run directory",
                           EXIT_VALIDATION)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["size_bytes"] = int(r["size_bytes"])
        r["ms_ssim"] = float(r["ms_ssim"])
    rows.sort(key=lambda r: (r["size_bytes"], -r["ms_ssim"]))
    return rows


def pick_smallest(rows, threshold):
    """Smallest candidate whose MS-SSIM reaches ``threshold``, or None."""
    ok = [r for r in rows if r["ms_ssim"] >= threshold]
    return min(ok, key=lambda r: r["size_bytes"]) if ok else None


def cmd_select(args):
    run_dir = Path(args.run_dir)
    rows = _load_summary(run_dir)
    if not rows:
        raise CommandError("run has no candidates")
    for i, r in enumerate(rows):
        print(f"[{i}] {r['size_bytes']:>8} B  ms-ssim {r['ms_ssim']:.6f}  {r['preview']}")
    if args.non_interactive:
        chosen = pick_smallest(rows, args.threshold)
        if chosen is None:
            raise CommandError(f"no candidate reaches MS-SSIM {args.threshold}")
    else:
        print("choose a candidate number: ", end="", flush=True)
        line = sys.stdin.readline().strip()
        try:
            chosen = rows[int(line)]
        except (ValueError, IndexError):
            raise CommandError(f"invalid choice {line!r}", EXIT_VALIDATION) from None
    target = Path(args.out) if args.out else run_dir / "final.jpg"
    try:
        shutil.copyfile(run_dir / chosen["jpeg"], target)
    except OSError as exc:
        raise CommandError(f"cannot write {target}: {exc}") from exc
    print(f"selected {chosen['jpeg']} -> {target}")
    return EXIT_OK


# ------------------------------------------------------------------ encode


def cmd_encode(args):
    img = _read_image(args.input)
    try:
        tables = QuantTableSet.load(args.tables)
    except OSError as exc:
        raise CommandError(f"cannot read tables {args.tables}: {exc}", EXIT_VALIDATION) from exc
    codec = to_codec_space(img)
    if max(tables.assignment, default=0) >= len(tables.tables) or \
            len(tables.assignment) != codec.channels:
        raise CommandError(f"table assignment {tables.assignment} does not fit a "
                           f"{codec.channels}-channel image", EXIT_VALIDATION)
    enc = encode_jpeg(codec, tables)
    try:
        enc.save(args.out)
    except OSError as exc:
        raise CommandError(f"cannot write {args.out}: {exc}") from exc
    print(f"wrote {args.out} ({enc.size_bytes} bytes)")
    return EXIT_OK


# ------------------------------------------------------------------ compare


def _decode_any(data, channels):
    """Display-space planes of a candidate file, whatever its format."""
    if data[:2] == b"\xff\xd8":
        try:
            return decode_jpeg(data).to_display()
        except UnsupportedJpegError:
            pass  # progressive and friends: let Pillow handle them
    from PIL import Image

    with Image.open(io.BytesIO(data)) as im:
        im.load()
        arr = np.asarray(im.convert("L" if channels == 1 else "RGB"))
    return ImagePlanes.from_uint8(arr)


def _report_row(image_id, method, ref, data, mp):
    npx = ref.width * ref.height
    row = {"image_id": image_id, "method": method, "size_bytes": len(data),
           "bpp": f"{8.0 * len(data) / npx:.6f}"}
    try:
        shown = _decode_any(data, ref.channels)
        if shown.planes.shape != ref.planes.shape:
            raise InvalidInputError(f"decoded shape {shown.planes.shape} != {ref.planes.shape}")
        ms = ms_ssim_np(ref.planes / 255.0, shown.planes / 255.0, mp)
        row["ms_ssim"] = f"{ms:.6f}"
    except (QtoptError, OSError, ValueError) as exc:
        log.warning("%s: %s", method, exc)
        row["ms_ssim"] = "failed"
    return row


def cmd_compare(args):
    cfg = _config(args)
    mp = _mp(cfg)
    img = _read_image(args.input)
    ref = img
    if img.colorspace is ColorSpace.YCBCR:
        ref = ImagePlanes(np.clip(to_display(img.planes, ColorSpace.YCBCR, "float").planes,
                                  0, 255), ColorSpace.RGB)
    image_id = args.image_id or Path(args.input).stem
    rows = []
    for path in args.candidates:
        try:
            data = Path(path).read_bytes()
        except OSError as exc:
            log.warning("%s: %s", path, exc)
            rows.append({"image_id": image_id, "method": Path(path).name, "size_bytes": 0,
                         "ms_ssim": "failed", "bpp": "0.000000"})
            continue
        rows.append(_report_row(image_id, Path(path).name, ref, data, mp))
    codec = to_codec_space(img)
    ntab = 1 if codec.channels == 1 else 2
    for q in BASELINE_QUALITIES:
        enc = encode_jpeg(codec, QuantTableSet.standard(q, codec.channels, ntab))
        rows.append(_report_row(image_id, f"annexk_q{q}", ref, enc.data, mp))
    try:
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, REPORT_FIELDS, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    except OSError as exc:
        raise CommandError(f"cannot write {args.out}: {exc}") from exc
    for r in rows:
        print(f"{r['method']:<32} {r['size_bytes']:>9} B  ms-ssim {r['ms_ssim']}  "
              f"bpp {r['bpp']}")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _add_run_flags(p):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config field (repeatable)")
    p.add_argument("--samples", type=int)
    p.add_argument("--top-frac", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--bins-width", type=float)
    p.add_argument("--tau", type=float)


def build_parser():
    ap = _Parser(prog="qtopt", description="Per-image JPEG quantization table optimizer.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("optimize", help="train tables for one image, export per-bin JPEGs")
    p.add_argument("input")
    p.add_argument("--out", default="qtopt_run", help="output directory")
    _add_run_flags(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("select", help="pick the final candidate of a run")
    p.add_argument("run_dir")
    p.add_argument("--non-interactive", action="store_true")
    p.add_argument("--threshold", type=float, default=0.0,
                   help="minimum MS-SSIM for --non-interactive")
    p.add_argument("--out", help="destination file (default RUN_DIR/final.jpg)")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("encode", help="encode an image with tables from JSON")
    p.add_argument("input")
    p.add_argument("tables")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("compare", help="size / MS-SSIM report against Annex K baselines")
    p.add_argument("input")
    p.add_argument("candidates", nargs="*")
    p.add_argument("--out", required=True, help="CSV report path")
    p.add_argument("--image-id")
    _add_run_flags(p)
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"qtopt: {exc}", file=sys.stderr)
        return exc.code
    except _VALIDATION_ERRORS as exc:
        print(f"qtopt: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (QtoptError, CorruptJpegError, OSError) as exc:
        print(f"qtopt: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
