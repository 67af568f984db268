"""Annotation-consistent training-time augmentations.

Photometric ops (blur, additive Gaussian noise, exposure/contrast) never
touch annotations; geometric ops (rotation, bbox-anchored cropping)
transform image and masks with the same matrix, masks by nearest
neighbor, and recompute bbox and area so outputs still validate.
"""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Sequence

import numpy as np

from .dataset import Annotation
from .masks import affine_resample, encode_rle, mask_area, mask_bbox, rasterize, rotation_scale_inverse
from .rng import rng_for


class AugmentError(ValueError):
    pass


def _round_u8(arr: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(arr, 0, 255) + 0.5).astype(np.uint8)


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = max(1, int(math.ceil(3.0 * sigma)))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian convolution with reflect padding; sigma=0 is identity."""
    if sigma < 0:
        raise AugmentError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return img.copy()
    kernel = gaussian_kernel(sigma)
    radius = len(kernel) // 2
    padded = np.pad(img.astype(np.float64), ((radius, radius), (radius, radius), (0, 0)), mode="reflect")
    rows = np.zeros_like(padded)
    for i, k in enumerate(kernel):
        rows += k * np.roll(padded, radius - i, axis=1)
    cols = np.zeros_like(rows)
    for i, k in enumerate(kernel):
        cols += k * np.roll(rows, radius - i, axis=0)
    return _round_u8(cols[radius:-radius, radius:-radius])


def awgn(img: np.ndarray, stddev: float, seed: int) -> np.ndarray:
    """Additive white Gaussian noise in float, clamped to [0, 255]; seeded."""
    if stddev < 0:
        raise AugmentError(f"stddev must be >= 0, got {stddev}")
    if stddev == 0:
        return img.copy()
    noise = rng_for(seed).normal(0.0, stddev, size=img.shape)
    return _round_u8(img.astype(np.float64) + noise)


def exposure_contrast(img: np.ndarray, gain: float, bias: float) -> np.ndarray:
    """out = clamp(gain * in + bias)."""
    if gain <= 0:
        raise AugmentError(f"gain must be > 0, got {gain}")
    return _round_u8(gain * img.astype(np.float64) + bias)


def rotate_with_annotations(
    img: np.ndarray, anns: Sequence[Annotation], degrees: float
) -> tuple[np.ndarray, tuple[Annotation, ...]]:
    """Rotate about the image center on an expanded canvas.

    Image pixels are bilinear, masks nearest-neighbor under the identical
    transform; annotations whose rotated mask is empty are dropped.
    """
    h, w = img.shape[:2]
    inverse, out_shape = rotation_scale_inverse((h, w), degrees, 1.0)
    out_img = _round_u8(affine_resample(img, inverse, out_shape))
    out_anns = []
    for ann in anns:
        mask = rasterize(ann.segmentation, w, h)
        rotated = affine_resample(mask.astype(np.uint8), inverse, out_shape, nearest=True).astype(bool)
        bbox = mask_bbox(rotated)
        if bbox is None:
            continue
        out_anns.append(
            replace(
                ann,
                segmentation=encode_rle(rotated),
                bbox=tuple(float(v) for v in bbox),
                area=float(mask_area(rotated)),
            )
        )
    return out_img, tuple(out_anns)


def _window_positions(span: int, window: int) -> int:
    return max(1, span - window + 1)


def _overlap(a0: float, a1: float, b0: float, b1: float) -> float:
    return max(0.0, min(a1, b1) - max(a0, b0))


PIPELINE_OPS = ("blur", "noise", "exposure", "rotate", "crop")


def run_pipeline(
    img: np.ndarray,
    anns: Sequence[Annotation],
    ops: Sequence[str],
    seed: int,
    image_id: int,
    *,
    sigma: float = 1.5,
    stddev: float = 8.0,
    gain: float = 1.1,
    bias: float = 10.0,
    degrees: float = 45.0,
    crop_size: tuple[int, int] | None = None,
) -> tuple[np.ndarray, tuple[Annotation, ...]]:
    """Apply an op chain to one image; randomness streams off (seed, image_id).

    Photometric ops leave annotations alone; rotate draws its angle
    uniformly from [-degrees, degrees]; crop needs crop_size and is
    skipped when no annotations remain to anchor it.
    """
    unknown = [op for op in ops if op not in PIPELINE_OPS]
    if unknown:
        raise AugmentError(f"unknown ops: {', '.join(unknown)}")
    if "crop" in ops and crop_size is None:
        raise AugmentError("crop_size is required when the pipeline includes crop")
    out_anns = tuple(anns)
    for op_index, op in enumerate(ops):
        stream = rng_for(seed, image_id, op_index)
        if op == "blur":
            img = gaussian_blur(img, sigma)
        elif op == "noise":
            img = awgn(img, stddev, int(stream.integers(2**62)))
        elif op == "exposure":
            img = exposure_contrast(img, gain, bias)
        elif op == "rotate":
            angle = float(stream.uniform(-degrees, degrees))
            img, out_anns = rotate_with_annotations(img, out_anns, angle)
        elif op == "crop":
            if not out_anns:
                break
            img, out_anns = crop_around_bbox(img, out_anns, crop_size, int(stream.integers(2**62)))
    return img, out_anns


def crop_around_bbox(
    img: np.ndarray,
    anns: Sequence[Annotation],
    target_size: tuple[int, int],
    seed: int,
) -> tuple[np.ndarray, tuple[Annotation, ...]]:
    """Seeded crop that keeps a litter object visible.

    Picks an anchor annotation, then a window position uniform among
    those retaining at least 50% of the anchor's bbox area (or the best
    achievable fraction when the window is too small for 50%). A window
    larger than the image yields the whole image padded at the
    bottom/right. Annotations are clipped to the window; empties drop.
    """
    if not anns:
        raise AugmentError("crop_around_bbox needs at least one annotation")
    tw, th = target_size
    if tw < 1 or th < 1:
        raise AugmentError(f"target size must be positive, got {target_size}")
    h, w = img.shape[:2]
    rng = rng_for(seed)
    ordered = sorted(anns, key=lambda a: a.id)
    anchor = ordered[int(rng.integers(len(ordered)))]

    win_w, win_h = min(tw, w), min(th, h)
    bx, by, bw, bh = anchor.bbox
    max_fraction = (min(win_w, bw) * min(win_h, bh)) / (bw * bh)
    needed = min(0.5, max_fraction) * bw * bh

    nx = _window_positions(w, win_w)
    ny = _window_positions(h, win_h)
    xs = np.arange(nx, dtype=np.float64)
    ys = np.arange(ny, dtype=np.float64)
    ox = np.minimum(xs + win_w, bx + bw) - np.maximum(xs, bx)
    oy = np.minimum(ys + win_h, by + bh) - np.maximum(ys, by)
    overlap = np.maximum(ox, 0.0)[np.newaxis, :] * np.maximum(oy, 0.0)[:, np.newaxis]
    valid_y, valid_x = np.nonzero(overlap >= needed - 1e-9)
    if valid_y.size == 0:
        x0 = int(np.clip(round(bx + bw / 2 - win_w / 2), 0, nx - 1))
        y0 = int(np.clip(round(by + bh / 2 - win_h / 2), 0, ny - 1))
    else:
        pick = int(rng.integers(valid_y.size))
        x0, y0 = int(valid_x[pick]), int(valid_y[pick])

    crop = img[y0 : y0 + win_h, x0 : x0 + win_w]
    if (win_h, win_w) != (th, tw):
        padded = np.zeros((th, tw) + img.shape[2:], dtype=img.dtype)
        padded[:win_h, :win_w] = crop
        crop = padded

    out_anns = []
    for ann in ordered:
        mask = rasterize(ann.segmentation, w, h)
        clipped = np.zeros((th, tw), dtype=bool)
        clipped[:win_h, :win_w] = mask[y0 : y0 + win_h, x0 : x0 + win_w]
        bbox = mask_bbox(clipped)
        if bbox is None:
            continue
        out_anns.append(
            replace(
                ann,
                segmentation=encode_rle(clipped),
                bbox=tuple(float(v) for v in bbox),
                area=float(mask_area(clipped)),
            )
        )
    return crop, tuple(out_anns)
