"""8-bit image reading/writing.

Binary PGM (P5) is handled natively since the synthetic corpus uses it;
JPEG/PNG decoding is delegated to Pillow when installed.
"""

from pathlib import Path

import numpy as np

from .errors import DataError

_PGM_MAGIC = b"P5"


def write_pgm(path, image):
    """Write a uint8 [H, W] array as binary PGM."""
    image = np.asarray(image)
    if image.ndim != 2 or image.dtype != np.uint8:
        raise DataError(f"PGM writer expects a uint8 [H, W] array, got {image.dtype} {image.shape}")
    h, w = image.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(image.tobytes())


def read_pgm(path):
    """Read a binary PGM into a uint8 [H, W] array."""
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(_PGM_MAGIC):
        raise DataError(f"{path}: not a binary PGM file")
    # header = magic, width, height, maxval as whitespace-separated tokens,
    # with optional '#' comment lines
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError(f"{path}: truncated PGM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        w, h, maxval = (int(t) for t in fields)
    except ValueError as exc:
        raise DataError(f"{path}: malformed PGM header") from exc
    if maxval != 255:
        raise DataError(f"{path}: only 8-bit PGM supported, maxval={maxval}")
    if len(data) - pos < w * h:
        raise DataError(f"{path}: pixel payload shorter than {w}x{h}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
    return pixels.reshape(h, w).copy()


def load_image(path):
    """Decode an 8-bit image file to uint8 [H, W] or [H, W, 3]."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    try:
        from PIL import Image
    except ImportError as exc:
        raise DataError(f"{path}: decoding {path.suffix} requires Pillow") from exc
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            return np.asarray(im, dtype=np.uint8)
    except DataError:
        raise
    except Exception as exc:
        raise DataError(f"{path}: cannot decode image: {exc}") from exc
