"""Segmentation geometry kernels.

Rasterization (polygons and uncompressed RLE), the RLE codec, mask IoU,
an exact Euclidean distance transform, soft (feathered) masks, and
alpha blending. Binary masks are numpy bool arrays of shape
(height, width), row-major; soft masks and distance fields are float64
arrays of the same shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MaskError(ValueError):
    """Raised for malformed segmentations or incompatible mask shapes."""


@dataclass(frozen=True)
class Rle:
    """Uncompressed run-length encoding, column-major run order.

    ``counts`` alternates background/foreground run lengths and starts
    with the background run (0 if the first pixel is foreground).
    """

    height: int
    width: int
    counts: tuple[int, ...]

    def to_json(self) -> dict:
        return {"size": [self.height, self.width], "counts": list(self.counts)}

    @classmethod
    def from_json(cls, obj: dict) -> "Rle":
        size = obj["size"]
        return cls(height=int(size[0]), width=int(size[1]), counts=tuple(int(c) for c in obj["counts"]))


@dataclass(frozen=True)
class Polygons:
    """One object as a union of even-odd filled polygons.

    Each ring is a flat (x1, y1, x2, y2, ...) vertex tuple in pixels.
    """

    rings: tuple[tuple[float, ...], ...]

    def to_json(self) -> list:
        return [list(ring) for ring in self.rings]

    @classmethod
    def from_json(cls, obj: list) -> "Polygons":
        return cls(rings=tuple(tuple(v for v in ring) for ring in obj))


Segmentation = Polygons | Rle


def decode_rle(rle: Rle) -> np.ndarray:
    total = sum(rle.counts)
    if total != rle.width * rle.height:
        raise MaskError(
            f"RLE runs sum to {total}, expected {rle.width * rle.height} "
            f"for a {rle.height}x{rle.width} mask"
        )
    if any(c < 0 for c in rle.counts):
        raise MaskError("RLE run lengths must be non-negative")
    flat = np.zeros(total, dtype=bool)
    pos = 0
    value = False
    for count in rle.counts:
        if value:
            flat[pos : pos + count] = True
        pos += count
        value = not value
    return flat.reshape((rle.height, rle.width), order="F")


def encode_rle(mask: np.ndarray) -> Rle:
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    flat = mask.flatten(order="F")
    if flat.size == 0:
        return Rle(height=h, width=w, counts=())
    boundaries = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    edges = np.concatenate(([0], boundaries, [flat.size]))
    counts = np.diff(edges).tolist()
    if flat[0]:
        counts = [0] + counts
    return Rle(height=h, width=w, counts=tuple(int(c) for c in counts))


def _fill_polygon(ring: tuple[float, ...], width: int, height: int) -> np.ndarray:
    """Even-odd fill of one ring: a pixel is set iff its center lies inside.

    Equivalent to casting a ray toward +x from each pixel center and
    counting strict edge crossings.
    """
    mask = np.zeros((height, width), dtype=bool)
    n = len(ring) // 2
    if n < 3:
        return mask
    xs = np.asarray(ring[0::2], dtype=np.float64)
    ys = np.asarray(ring[1::2], dtype=np.float64)
    if not (np.isfinite(xs).all() and np.isfinite(ys).all()):
        raise MaskError("polygon vertices must be finite")
    xs2 = np.roll(xs, -1)
    ys2 = np.roll(ys, -1)

    row_crossings: list[list[np.ndarray]] = [[] for _ in range(height)]
    for x1, y1, x2, y2 in zip(xs, ys, xs2, ys2):
        if y1 == y2:
            continue
        y_lo, y_hi = (y1, y2) if y1 < y2 else (y2, y1)
        # rows whose center y + 0.5 lies in the half-open span [y_lo, y_hi)
        r0 = max(0, int(np.ceil(y_lo - 0.5)))
        r1 = min(height - 1, int(np.ceil(y_hi - 0.5)) - 1)
        if r1 < r0:
            continue
        rows = np.arange(r0, r1 + 1)
        cy = rows + 0.5
        cross_x = x1 + (cy - y1) * (x2 - x1) / (y2 - y1)
        for row, cx in zip(rows, cross_x):
            row_crossings[row].append(cx)

    centers = np.arange(width) + 0.5
    for row, crossings in enumerate(row_crossings):
        if not crossings:
            continue
        cs = np.sort(np.asarray(crossings, dtype=np.float64))
        greater = cs.size - np.searchsorted(cs, centers, side="right")
        mask[row] = (greater % 2) == 1
    return mask


def rasterize(seg: Segmentation, width: int, height: int) -> np.ndarray:
    """Rasterize a segmentation to a (height, width) bool mask.

    Polygons are filled by the even-odd rule with a pixel-center test and
    unioned; RLE is decoded exactly and must match the requested size.
    """
    if isinstance(seg, Rle):
        if (seg.height, seg.width) != (height, width):
            raise MaskError(
                f"RLE size ({seg.height}, {seg.width}) does not match requested "
                f"({height}, {width})"
            )
        return decode_rle(seg)
    mask = np.zeros((height, width), dtype=bool)
    for ring in seg.rings:
        mask |= _fill_polygon(ring, width, height)
    return mask


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise MaskError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


def _edt_1d_squared(f: np.ndarray) -> np.ndarray:
    """Exact 1-D squared distance transform of a sampled function (lower envelope)."""
    n = f.shape[0]
    d = np.empty(n, dtype=np.float64)
    v = np.zeros(n, dtype=np.intp)
    z = np.empty(n + 1, dtype=np.float64)
    k = 0
    z[0] = -np.inf
    z[1] = np.inf
    for q in range(1, n):
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2 * q - 2 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2 * q - 2 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = (q - v[k]) ** 2 + f[v[k]]
    return d


def distance_transform(mask: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance to the nearest background pixel center.

    Background pixels get 0. A mask with no background at all gets the
    cap value width + height everywhere (distance to a virtual border
    treated as unbounded).
    """
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    if not mask.any():
        return np.zeros((h, w), dtype=np.float64)
    if mask.all():
        return np.full((h, w), float(w + h), dtype=np.float64)

    # vertical pass: per-column distance (in rows) to the nearest background
    big = float(h + w)
    g = np.where(mask, big, 0.0)
    for i in range(1, h):
        np.minimum(g[i], g[i - 1] + 1.0, out=g[i])
    for i in range(h - 2, -1, -1):
        np.minimum(g[i], g[i + 1] + 1.0, out=g[i])
    g *= g

    # horizontal pass: exact squared transform per row over the column results
    out = np.empty((h, w), dtype=np.float64)
    for i in range(h):
        out[i] = _edt_1d_squared(g[i])
    np.sqrt(out, out=out)
    out[~mask] = 0.0
    return out


def soft_mask(mask: np.ndarray, radius: float) -> np.ndarray:
    """Feathered opacity: distance transform normalized by ``radius``, clamped to 1.

    radius=1 reproduces the binary mask (every foreground pixel is at
    distance >= 1 from background); larger radii widen the soft rim.
    """
    if radius <= 0:
        raise MaskError(f"soft mask radius must be > 0, got {radius}")
    mask = np.asarray(mask, dtype=bool)
    alpha = np.minimum(distance_transform(mask) / float(radius), 1.0)
    alpha[~mask] = 0.0
    return alpha


def blend(src: np.ndarray, alpha: np.ndarray, dst: np.ndarray, offset: tuple[int, int]) -> np.ndarray:
    """Alpha-composite ``src`` over ``dst`` with its top-left corner at ``offset``.

    out = alpha * src + (1 - alpha) * dst per channel, computed in float
    and rounded half-up to 8 bit. Source pixels falling outside ``dst``
    are silently clipped; pixels outside the pasted region are unchanged.
    """
    src = np.asarray(src, dtype=np.uint8)
    dst = np.asarray(dst, dtype=np.uint8)
    if src.shape[:2] != alpha.shape:
        raise MaskError(f"source {src.shape[:2]} and soft mask {alpha.shape} dimensions differ")
    out = dst.copy()
    hs, ws = alpha.shape
    hd, wd = dst.shape[:2]
    x, y = offset
    sx0, sy0 = max(0, -x), max(0, -y)
    sx1, sy1 = min(ws, wd - x), min(hs, hd - y)
    if sx1 <= sx0 or sy1 <= sy0:
        return out
    dx0, dy0 = x + sx0, y + sy0
    dx1, dy1 = x + sx1, y + sy1
    a = alpha[sy0:sy1, sx0:sx1, np.newaxis]
    mixed = a * src[sy0:sy1, sx0:sx1].astype(np.float64) + (1.0 - a) * out[dy0:dy1, dx0:dx1].astype(np.float64)
    out[dy0:dy1, dx0:dx1] = np.floor(mixed + 0.5).astype(np.uint8)
    return out


def mask_bbox(mask: np.ndarray) -> tuple[int, int, int, int] | None:
    """Tight (x, y, w, h) bounds of the foreground, or None for an empty mask."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        return None
    y0, y1 = int(rows[0]), int(rows[-1])
    x0, x1 = int(cols[0]), int(cols[-1])
    return (x0, y0, x1 - x0 + 1, y1 - y0 + 1)


def mask_area(mask: np.ndarray) -> int:
    return int(np.count_nonzero(mask))


def affine_resample(
    img: np.ndarray,
    inverse: np.ndarray,
    out_shape: tuple[int, int],
    *,
    nearest: bool = False,
) -> np.ndarray:
    """Resample ``img`` through a 2x3 inverse pixel-center map.

    ``inverse`` maps output pixel-center coordinates (x, y) to source
    coordinates. Bilinear by default (float output), nearest-neighbor
    when ``nearest``. Samples outside the source read as 0.
    """
    oh, ow = out_shape
    h, w = img.shape[:2]
    xs_out, ys_out = np.meshgrid(np.arange(ow) + 0.5, np.arange(oh) + 0.5)
    sx = inverse[0, 0] * xs_out + inverse[0, 1] * ys_out + inverse[0, 2] - 0.5
    sy = inverse[1, 0] * xs_out + inverse[1, 1] * ys_out + inverse[1, 2] - 0.5

    if nearest:
        xi = np.rint(sx).astype(np.intp)
        yi = np.rint(sy).astype(np.intp)
        valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        out_dtype = img.dtype
        out = np.zeros(out_shape + img.shape[2:], dtype=out_dtype)
        out[valid] = img[yi[valid], xi[valid]]
        return out

    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    tx = sx - x0
    ty = sy - y0

    def gather(yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
        inside = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
        vals = img[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)].astype(np.float64)
        if img.ndim == 3:
            vals[~inside] = 0.0
        else:
            vals = np.where(inside, vals, 0.0)
        return vals

    if img.ndim == 3:
        tx = tx[..., np.newaxis]
        ty = ty[..., np.newaxis]
    top = gather(y0, x0) * (1 - tx) + gather(y0, x0 + 1) * tx
    bot = gather(y0 + 1, x0) * (1 - tx) + gather(y0 + 1, x0 + 1) * tx
    return top * (1 - ty) + bot * ty


def rotation_scale_inverse(
    src_shape: tuple[int, int], degrees: float, scale: float
) -> tuple[np.ndarray, tuple[int, int]]:
    """Inverse map and output shape for rotate-about-center + uniform scale.

    The output canvas is expanded to hold the whole transformed source.
    """
    h, w = src_shape
    theta = np.deg2rad(degrees)
    c, s = np.cos(theta), np.sin(theta)
    ow = max(1, int(np.ceil(scale * (w * abs(c) + h * abs(s)) - 1e-9)))
    oh = max(1, int(np.ceil(scale * (w * abs(s) + h * abs(c)) - 1e-9)))
    # inverse: translate to output center, rotate by -theta, unscale, back to source center
    cx_out, cy_out = ow / 2.0, oh / 2.0
    cx_src, cy_src = w / 2.0, h / 2.0
    inv = np.array(
        [
            [c / scale, s / scale, cx_src - (c * cx_out + s * cy_out) / scale],
            [-s / scale, c / scale, cy_src - (-s * cx_out + c * cy_out) / scale],
        ],
        dtype=np.float64,
    )
    return inv, (oh, ow)
