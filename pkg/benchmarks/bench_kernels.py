"""Time the numba kernels against the numpy / interpreted fallbacks.

    python3 benchmarks/bench_kernels.py [image.png] [--repeat N]

Each kernel runs once to warm the JIT, then ``repeat`` times per path. The
outputs of both paths are compared before any timing is reported.
"""
import argparse
import time
from pathlib import Path

import numpy as np

from qtopt._accel import HAVE_NUMBA
from qtopt.jpeg import QuantTableSet, decode_jpeg, encode_jpeg, estimate_size_bits, load_image
from qtopt.jpeg.image import to_codec_space
from qtopt.jpeg.jfif import quantize_image
from qtopt.jpeg.tables import ZIGZAG

HERE = Path(__file__).resolve().parent
DEFAULT_IMAGE = HERE.parent / "tests" / "data" / "astronaut.png"


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("image", nargs="?", default=str(DEFAULT_IMAGE))
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    codec = to_codec_space(load_image(args.image))
    tables = QuantTableSet.standard(75, codec.channels, 1 if codec.channels == 1 else 2)
    q = quantize_image(codec, tables)
    zz = q.reshape(q.shape[0], -1, 64)[..., ZIGZAG]
    data = encode_jpeg(codec, tables).data

    kernels = {
        "estimate_size_bits": lambda nb: estimate_size_bits(zz, use_numba=nb),
        "encode_jpeg": lambda nb: encode_jpeg(codec, tables, use_numba=nb).data,
        "decode_jpeg": lambda nb: decode_jpeg(data, use_numba=nb).planes.planes,
    }
    print(f"{args.image}: {codec.width}x{codec.height}, {codec.channels} channels")
    print(f"{'kernel':<20}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, fn in kernels.items():
        a, b = fn(True), fn(False)
        same = a == b if isinstance(a, (float, bytes)) else np.array_equal(a, b)
        if not same:
            raise SystemExit(f"{name}: numba and numpy paths disagree")
        t_nb = best_of(lambda: fn(True), args.repeat)
        t_np = best_of(lambda: fn(False), 1 if name == "decode_jpeg" else args.repeat)
        print(f"{name:<20}{t_nb * 1e3:>12.2f}{t_np * 1e3:>12.2f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
