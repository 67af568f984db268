from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from litterkit.dataset import Annotation, Category, Dataset, ImageRecord, SceneTag
from litterkit.imageio import save_png
from litterkit.masks import Polygons, encode_rle, mask_area, mask_bbox, rasterize
from litterkit.rng import rng_for


def rect_ring(x0: float, y0: float, x1: float, y1: float) -> tuple[float, ...]:
    return (x0, y0, x1, y0, x1, y1, x0, y1)


def make_annotation(ann_id, image_id, category_id, segmentation, width, height) -> Annotation:
    """Annotation whose bbox and area exactly match its rasterized mask."""
    mask = rasterize(segmentation, width, height)
    bbox = mask_bbox(mask)
    assert bbox is not None, "fixture segmentation must not be empty"
    return Annotation(
        id=ann_id,
        image_id=image_id,
        category_id=category_id,
        segmentation=segmentation,
        bbox=tuple(float(v) for v in bbox),
        area=float(mask_area(mask)),
    )


def random_image(width: int, height: int, seed: int) -> np.ndarray:
    return rng_for(seed).integers(0, 256, size=(height, width, 3), dtype=np.int64).astype(np.uint8)


@pytest.fixture
def small_dataset() -> Dataset:
    """2 images, 3 annotations (polygons and RLE mixed), 4 categories, scene tags."""
    rle_mask = np.zeros((32, 32), dtype=bool)
    rle_mask[6:14, 20:28] = True
    ann2 = make_annotation(2, 1, 2, encode_rle(rle_mask), 32, 32)
    return Dataset(
        images=(
            ImageRecord(id=1, file_name="img_000001.png", width=32, height=32, extra={"license": 1}),
            ImageRecord(id=2, file_name="img_000002.png", width=48, height=32),
        ),
        annotations=(
            make_annotation(1, 1, 1, Polygons((rect_ring(4, 4, 12, 14),)), 32, 32),
            ann2,
            make_annotation(
                3, 2, 3,
                Polygons((rect_ring(2, 2, 10, 8), rect_ring(30, 10, 44, 24))),
                48, 32,
            ),
        ),
        categories=(
            Category(id=1, name="Clear plastic bottle", supercategory="Bottle"),
            Category(id=2, name="Drink can", supercategory="Can"),
            Category(id=3, name="Cigarette", supercategory="Cigarette"),
            Category(id=4, name="Unlabeled litter", supercategory="Unlabeled litter"),
        ),
        scene_tags=(SceneTag(id=1, name="beach"), SceneTag(id=2, name="street")),
        scene_assignments=((1, 1), (2, 1), (2, 2)),
        extra={"info": {"description": "fixture"}},
    )


# annotation counts per supercategory; strictly distinct so the ranking is unambiguous
SUPERCATEGORY_COUNTS = {
    "Cigarette": 65,
    "Plastic bag & wrapper": 61,
    "Bottle": 56,
    "Bottle cap": 40,
    "Can": 35,
    "Other plastic": 34,
    "Carton": 30,
    "Cup": 28,
    "Straw": 24,
    "Paper": 20,
    "Plastic container": 18,
    "Lid": 17,
    "Plastic film": 16,
    "Pop tab": 15,
    "Styrofoam piece": 14,
    "Broken glass": 13,
    "Paper bag": 12,
    "Aluminium foil": 11,
    "Plastic utensils": 10,
    "Rope & strings": 9,
    "Unlabeled litter": 8,
    "Scrap metal": 7,
    "Six pack rings": 6,
    "Shoe": 5,
    "Food waste": 4,
    "Glass jar": 3,
    "Blister pack": 2,
    "Battery": 1,
}

TOP9_SUPERCATEGORIES = (
    "Cigarette",
    "Plastic bag & wrapper",
    "Bottle",
    "Bottle cap",
    "Can",
    "Other plastic",
    "Carton",
    "Cup",
    "Straw",
)


def build_taco_like_dataset() -> Dataset:
    """60 categories under 28 supercategories with the counts above."""
    supers = sorted(SUPERCATEGORY_COUNTS)
    categories = []
    cat_id = 0
    cats_per_super: dict[str, list[int]] = {}
    for i, name in enumerate(supers):
        n_cats = 3 if i < 4 else 2  # 4*3 + 24*2 = 60
        cats_per_super[name] = []
        for j in range(n_cats):
            cat_id += 1
            categories.append(Category(id=cat_id, name=f"{name} #{j + 1}", supercategory=name))
            cats_per_super[name].append(cat_id)

    images = tuple(
        ImageRecord(id=i + 1, file_name=f"img_{i + 1:06d}.png", width=400, height=300)
        for i in range(40)
    )
    annotations = []
    ann_id = 0
    rng = rng_for(20260613)
    for name in supers:
        ids = cats_per_super[name]
        for k in range(SUPERCATEGORY_COUNTS[name]):
            ann_id += 1
            side = float(rng.integers(4, 120))
            x = float(rng.integers(0, 200))
            y = float(rng.integers(0, 150))
            annotations.append(
                Annotation(
                    id=ann_id,
                    image_id=int(rng.integers(1, 41)),
                    category_id=ids[k % len(ids)],
                    segmentation=Polygons((rect_ring(x, y, x + side, y + side),)),
                    bbox=(x, y, side, side),
                    area=side * side,
                )
            )
    return Dataset(images=images, annotations=tuple(annotations), categories=tuple(categories))


@pytest.fixture(scope="session")
def taco_like_dataset() -> Dataset:
    return build_taco_like_dataset()


@pytest.fixture
def hundred_image_dataset() -> Dataset:
    return Dataset(
        images=tuple(
            ImageRecord(id=i + 1, file_name=f"img_{i + 1:06d}.png", width=64, height=64)
            for i in range(100)
        )
    )


def write_dataset_with_images(dataset: Dataset, root: Path, seed: int = 7) -> Path:
    """Write image files plus annotations.json under root; returns the json path."""
    from litterkit.dataset import serialize_dataset

    root.mkdir(parents=True, exist_ok=True)
    for i, record in enumerate(dataset.images):
        save_png(root / record.file_name, random_image(record.width, record.height, seed + i))
    path = root / "annotations.json"
    path.write_bytes(serialize_dataset(dataset))
    return path
