"""Synthetic printed-digit corpus and IDX image-file I/O.

The generated images follow the grayscale regime of the classic 28x28
machine-printed digit sets: dark glyphs on a light background with a
small random rotation, shift and size per sample. They give the trainer
and the end-to-end experiments a self-contained dataset; any IDX image
file (e.g. the standard handwritten-digit files) loads the same way.

Run ``python -m anlink.datasets --out DIR`` to write train/test IDX files.
"""

import argparse
import functools
import gzip
import os
import struct

import numpy as np
from PIL import Image, ImageDraw, ImageFilter, ImageFont

from .errors import MalformedIdxError, MissingPathError

IDX_IMAGE_MAGIC = 0x00000803

TRAIN_IDX_NAMES = ("train-images-idx3-ubyte", "train-images.idx3-ubyte")
TEST_IDX_NAMES = ("t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte",
                  "test-images-idx3-ubyte")


@functools.lru_cache(maxsize=16)
def _font(pixels):
    import matplotlib
    path = os.path.join(matplotlib.get_data_path(), "fonts", "ttf", "DejaVuSans.ttf")
    return ImageFont.truetype(path, pixels)


def make_digit_images(count, rng, size=28):
    """Render ``count`` digit images, values in [0, 1], shape (count, size, size)."""
    out = np.empty((count, size, size), dtype=np.float64)
    margin = size // 2
    canvas_size = size + 2 * margin
    for i in range(count):
        digit = str(rng.integers(0, 10))
        background = int(rng.integers(235, 256))
        ink = int(rng.integers(0, 56))
        font = _font(int(rng.integers((2 * size) // 3, size - 3)))
        canvas = Image.new("L", (canvas_size, canvas_size), color=background)
        draw = ImageDraw.Draw(canvas)
        left, top, right, bottom = draw.textbbox((0, 0), digit, font=font)
        cx = (canvas_size - (right - left)) / 2 - left + rng.uniform(-2.0, 2.0)
        cy = (canvas_size - (bottom - top)) / 2 - top + rng.uniform(-2.0, 2.0)
        draw.text((cx, cy), digit, fill=ink, font=font)
        canvas = canvas.rotate(
            rng.uniform(-12.0, 12.0), resample=Image.BILINEAR, fillcolor=background
        )
        canvas = canvas.filter(ImageFilter.GaussianBlur(radius=rng.uniform(0.0, 0.6)))
        crop = canvas.crop((margin, margin, margin + size, margin + size))
        out[i] = np.asarray(crop, dtype=np.float64) / 255.0
    return out


def write_idx_images(images, path):
    """Write an image stack to an IDX ubyte file (gzipped when path ends .gz)."""
    arr = np.asarray(images)
    if arr.ndim == 4 and arr.shape[3] == 1:
        arr = arr[:, :, :, 0]
    if arr.ndim != 3:
        raise ValueError(f"expected (n, rows, cols) images, got shape {arr.shape}")
    data = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    n, rows, cols = data.shape
    header = struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols)
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def read_idx_images(path):
    """Read an IDX ubyte image file into a (n, rows, cols) float array in [0, 1].

    Gzip compression is detected from the file's magic bytes. Raises
    MalformedIdxError on a wrong magic number or truncated payload.
    """
    if not os.path.exists(path):
        raise MissingPathError(f"no such file: {path}")
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    if len(raw) < 16:
        raise MalformedIdxError(f"{path}: too short for an IDX image header")
    magic, n, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise MalformedIdxError(
            f"{path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}"
        )
    if len(raw) - 16 != n * rows * cols:
        raise MalformedIdxError(
            f"{path}: payload holds {len(raw) - 16} bytes, header promises {n * rows * cols}"
        )
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=16)
    return pixels.reshape(n, rows, cols).astype(np.float64) / 255.0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="python -m anlink.datasets",
        description="Generate a synthetic digit corpus as IDX files.",
    )
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--train", type=int, default=5003, help="training images")
    parser.add_argument("--test", type=int, default=4997, help="test images")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--size", type=int, default=28)
    args = parser.parse_args(argv)

    os.makedirs(args.out, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    train_path = os.path.join(args.out, TRAIN_IDX_NAMES[0])
    test_path = os.path.join(args.out, TEST_IDX_NAMES[0])
    write_idx_images(make_digit_images(args.train, rng, args.size), train_path)
    write_idx_images(make_digit_images(args.test, rng, args.size), test_path)
    print(f"wrote {args.train} images to {train_path}")
    print(f"wrote {args.test} images to {test_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
