"""PNG/JPEG image loading and deterministic PNG output.

Images are numpy uint8 RGB arrays of shape (height, width, 3) throughout
the toolkit. PNG is used for anything we write (lossless fixtures and
composites); JPEG is accepted read-only.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image


def load_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_png(path: str | Path, img: np.ndarray) -> None:
    Path(path).write_bytes(png_bytes(img))


def png_bytes(img: np.ndarray) -> bytes:
    """Encode an RGB or RGBA uint8 array as PNG. Deterministic for equal input."""
    arr = np.ascontiguousarray(img, dtype=np.uint8)
    mode = "RGBA" if arr.ndim == 3 and arr.shape[2] == 4 else "RGB"
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return buf.getvalue()
