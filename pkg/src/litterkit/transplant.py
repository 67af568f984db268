"""Copy-paste augmentation: move annotated objects into target images.

An object crop is rotated and scaled with bilinear resampling, its mask
transformed identically, then alpha-blended into the target, either hard
(binary mask) or soft (feathered by the truncated distance transform).
The synthesized annotation carries the RLE of the transformed mask with
recomputed bbox and area, so outputs always validate.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .dataset import Annotation, Dataset, ImageRecord
from .masks import (
    affine_resample,
    blend,
    encode_rle,
    mask_area,
    mask_bbox,
    rasterize,
    rotation_scale_inverse,
    soft_mask,
)
from .rng import rng_for

logger = logging.getLogger(__name__)

DEFAULT_SCALE_RANGE = (0.5, 1.5)
DEFAULT_ROTATION_RANGE = (-45.0, 45.0)
DEFAULT_SOFT_RADIUS = 3.0


class TransplantError(ValueError):
    pass


@dataclass(frozen=True)
class Placement:
    """Where and how an object lands in the target image.

    x, y give the target-pixel offset of the transformed object's
    top-left corner; rotation is in degrees.
    """

    x: int
    y: int
    scale: float = 1.0
    rotation: float = 0.0
    soft: bool = True
    radius: float = DEFAULT_SOFT_RADIUS

    def __post_init__(self) -> None:
        if self.scale <= 0:
            raise TransplantError(f"scale must be > 0, got {self.scale}")
        if self.soft and self.radius <= 0:
            raise TransplantError(f"soft radius must be > 0, got {self.radius}")


def _crop_box(ann: Annotation, width: int, height: int) -> tuple[int, int, int, int]:
    x, y, w, h = ann.bbox
    x0 = max(0, int(math.floor(x)))
    y0 = max(0, int(math.floor(y)))
    x1 = min(width, int(math.ceil(x + w)))
    y1 = min(height, int(math.ceil(y + h)))
    if x1 <= x0 or y1 <= y0:
        raise TransplantError(f"annotation {ann.id} bbox {ann.bbox} is empty after clipping")
    return x0, y0, x1, y1


def transform_object(
    src_img: np.ndarray, ann: Annotation, scale: float, rotation: float
) -> tuple[np.ndarray, np.ndarray]:
    """Rotate+scale the annotated object crop; returns (pixels, binary mask)."""
    h, w = src_img.shape[:2]
    full_mask = rasterize(ann.segmentation, w, h)
    x0, y0, x1, y1 = _crop_box(ann, w, h)
    crop = src_img[y0:y1, x0:x1]
    mask_crop = full_mask[y0:y1, x0:x1].astype(np.float64)

    inverse, out_shape = rotation_scale_inverse(crop.shape[:2], rotation, scale)
    pixels = np.floor(affine_resample(crop, inverse, out_shape) + 0.5).astype(np.uint8)
    mask = affine_resample(mask_crop, inverse, out_shape) >= 0.5
    if not mask.any():
        raise TransplantError(f"annotation {ann.id} mask vanished under the transform")
    return pixels, mask


def transplant_one(
    src_img: np.ndarray,
    ann: Annotation,
    dst_img: np.ndarray,
    placement: Placement,
) -> tuple[np.ndarray, Annotation]:
    """Composite one annotated object into a target image.

    Returns the composited image and a new annotation (same category,
    RLE segmentation in target coordinates, recomputed bbox and area).
    The caller assigns ids and the target image id.
    """
    pixels, mask = transform_object(src_img, ann, placement.scale, placement.rotation)
    alpha = soft_mask(mask, placement.radius) if placement.soft else mask.astype(np.float64)
    out = blend(pixels, alpha, dst_img, (placement.x, placement.y))

    dst_h, dst_w = dst_img.shape[:2]
    placed = np.zeros((dst_h, dst_w), dtype=bool)
    sx0, sy0 = max(0, -placement.x), max(0, -placement.y)
    sx1 = min(mask.shape[1], dst_w - placement.x)
    sy1 = min(mask.shape[0], dst_h - placement.y)
    if sx1 > sx0 and sy1 > sy0:
        placed[placement.y + sy0 : placement.y + sy1, placement.x + sx0 : placement.x + sx1] = mask[
            sy0:sy1, sx0:sx1
        ]
    bbox = mask_bbox(placed)
    if bbox is None:
        raise TransplantError("transformed object lies fully outside the target image")
    new_ann = replace(
        ann,
        segmentation=encode_rle(placed),
        bbox=tuple(float(v) for v in bbox),
        area=float(mask_area(placed)),
        extra={},
    )
    return out, new_ann


@dataclass(frozen=True)
class BatchResult:
    dataset: Dataset
    images: Mapping[int, np.ndarray]
    skipped: int


def _thread_count() -> int:
    raw = os.environ.get("LITTERKIT_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def transplant_batch(
    src: Dataset,
    src_images: Mapping[int, np.ndarray],
    targets: Sequence[np.ndarray],
    count: int,
    seed: int,
    *,
    scale_range: tuple[float, float] = DEFAULT_SCALE_RANGE,
    rotation_range: tuple[float, float] = DEFAULT_ROTATION_RANGE,
    soft: bool = True,
    radius: float = DEFAULT_SOFT_RADIUS,
) -> BatchResult:
    """Seeded batch of random transplants, one composited image per draw.

    Each draw takes a uniform annotation, a uniform target, uniform
    position keeping the whole transformed box in bounds, scale and
    rotation uniform over their ranges. Draw i uses the RNG stream
    (seed, i), so results are order- and thread-count-independent.
    Placements that cannot fit are resampled up to 10 times, then the
    draw is skipped with a warning.
    """
    if count < 0:
        raise TransplantError(f"count must be >= 0, got {count}")
    if count > 0 and not targets:
        raise TransplantError("no target images given")
    if count > 0 and not src.annotations:
        raise TransplantError("source dataset has no annotations")
    anns = sorted(src.annotations, key=lambda a: a.id)

    def run_one(i: int) -> tuple[np.ndarray, Annotation] | None:
        rng = rng_for(seed, i)
        ann = anns[int(rng.integers(len(anns)))]
        target = targets[int(rng.integers(len(targets)))]
        th, tw = target.shape[:2]
        src_img = src_images[ann.image_id]
        for _attempt in range(10):
            scale = float(rng.uniform(*scale_range))
            rotation = float(rng.uniform(*rotation_range))
            try:
                pixels, mask = transform_object(src_img, ann, scale, rotation)
            except TransplantError:
                continue
            oh, ow = mask.shape
            if ow > tw or oh > th:
                continue
            x = int(rng.integers(0, tw - ow + 1))
            y = int(rng.integers(0, th - oh + 1))
            placement = Placement(x=x, y=y, scale=scale, rotation=rotation, soft=soft, radius=radius)
            return transplant_one(src_img, ann, target.copy(), placement)
        logger.warning("skipping transplant draw %d: object does not fit any sampled placement", i)
        return None

    workers = _thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, range(count)))
    else:
        results = [run_one(i) for i in range(count)]

    images: dict[int, np.ndarray] = {}
    image_records = []
    annotations = []
    next_id = 1
    skipped = 0
    for outcome in results:
        if outcome is None:
            skipped += 1
            continue
        out_img, new_ann = outcome
        h, w = out_img.shape[:2]
        image_records.append(
            ImageRecord(id=next_id, file_name=f"transplant_{next_id:06d}.png", width=w, height=h)
        )
        annotations.append(replace(new_ann, id=next_id, image_id=next_id))
        images[next_id] = out_img
        next_id += 1

    dataset = Dataset(
        images=tuple(image_records),
        annotations=tuple(annotations),
        categories=src.categories,
    )
    return BatchResult(dataset=dataset, images=images, skipped=skipped)
