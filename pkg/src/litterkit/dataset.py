"""Annotation dataset model: parse, validate, serialize.

The on-disk format is COCO-style JSON extended with top-level
``scene_tags`` and ``scene_assignments`` collections. Unknown fields are
preserved opaquely so files round-trip as the dataset schema grows.
Datasets are immutable values after parsing; "mutation" means building a
new Dataset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Mapping

from .masks import MaskError, Polygons, Rle, Segmentation, mask_bbox, mask_area, rasterize


class DatasetError(Exception):
    """Base class for dataset loading failures."""


class ParseError(DatasetError):
    """Malformed annotation file (syntax or schema)."""


class IntegrityError(DatasetError):
    """Dangling id reference or duplicate id."""


@dataclass(frozen=True)
class ImageRecord:
    id: int
    file_name: str
    width: int
    height: int
    extra: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Category:
    id: int
    name: str
    supercategory: str
    extra: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class SceneTag:
    id: int
    name: str
    extra: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Annotation:
    id: int
    image_id: int
    category_id: int
    segmentation: Segmentation
    bbox: tuple[float, float, float, float]
    area: float
    extra: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Dataset:
    images: tuple[ImageRecord, ...] = ()
    annotations: tuple[Annotation, ...] = ()
    categories: tuple[Category, ...] = ()
    scene_tags: tuple[SceneTag, ...] = ()
    scene_assignments: tuple[tuple[int, int], ...] = ()
    extra: Mapping[str, Any] = field(default_factory=dict)

    @cached_property
    def images_by_id(self) -> dict[int, ImageRecord]:
        return {img.id: img for img in self.images}

    @cached_property
    def categories_by_id(self) -> dict[int, Category]:
        return {cat.id: cat for cat in self.categories}

    @cached_property
    def annotations_by_image(self) -> dict[int, tuple[Annotation, ...]]:
        grouped: dict[int, list[Annotation]] = {img.id: [] for img in self.images}
        for ann in self.annotations:
            grouped.setdefault(ann.image_id, []).append(ann)
        return {k: tuple(v) for k, v in grouped.items()}

    def replace(self, **kwargs) -> "Dataset":
        return replace(self, **kwargs)


_IMAGE_KEYS = ("id", "file_name", "width", "height")
_CATEGORY_KEYS = ("id", "name", "supercategory")
_SCENE_TAG_KEYS = ("id", "name")
_ANNOTATION_KEYS = ("id", "image_id", "category_id", "segmentation", "bbox", "area")


def _extras(obj: Mapping[str, Any], known: tuple[str, ...]) -> dict[str, Any]:
    return {k: v for k, v in obj.items() if k not in known}


def _require(obj: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in obj:
        raise ParseError(f"{where} is missing required field '{key}'")
    return obj[key]


def _parse_segmentation(raw: Any, ann_id: Any) -> Segmentation:
    if isinstance(raw, list):
        return Polygons.from_json(raw)
    if isinstance(raw, dict) and "counts" in raw and "size" in raw:
        try:
            return Rle.from_json(raw)
        except (TypeError, ValueError) as exc:
            raise ParseError(
                f"annotation {ann_id} RLE must use integer counts (compressed RLE is unsupported): {exc}"
            ) from exc
    raise ParseError(f"annotation {ann_id} has unrecognized segmentation format")


def parse_dataset(data: bytes | str) -> Dataset:
    """Parse an annotation file into a fully linked Dataset.

    Raises ParseError (with byte offset) on malformed syntax and
    IntegrityError on duplicate ids or dangling references.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        root = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed annotation file at byte {exc.pos}: {exc.msg}") from exc
    if not isinstance(root, dict):
        raise ParseError("annotation file root must be an object")

    images = []
    for obj in root.get("images", ()):
        images.append(
            ImageRecord(
                id=int(_require(obj, "id", "image")),
                file_name=str(_require(obj, "file_name", "image")),
                width=int(_require(obj, "width", "image")),
                height=int(_require(obj, "height", "image")),
                extra=_extras(obj, _IMAGE_KEYS),
            )
        )
    categories = []
    for obj in root.get("categories", ()):
        categories.append(
            Category(
                id=int(_require(obj, "id", "category")),
                name=str(_require(obj, "name", "category")),
                supercategory=str(obj.get("supercategory", "")),
                extra=_extras(obj, _CATEGORY_KEYS),
            )
        )
    scene_tags = []
    for obj in root.get("scene_tags", ()):
        scene_tags.append(
            SceneTag(
                id=int(_require(obj, "id", "scene_tag")),
                name=str(_require(obj, "name", "scene_tag")),
                extra=_extras(obj, _SCENE_TAG_KEYS),
            )
        )
    annotations = []
    for obj in root.get("annotations", ()):
        ann_id = _require(obj, "id", "annotation")
        bbox = _require(obj, "bbox", "annotation")
        if not isinstance(bbox, list) or len(bbox) != 4:
            raise ParseError(f"annotation {ann_id} bbox must be [x, y, w, h]")
        annotations.append(
            Annotation(
                id=int(ann_id),
                image_id=int(_require(obj, "image_id", "annotation")),
                category_id=int(_require(obj, "category_id", "annotation")),
                segmentation=_parse_segmentation(_require(obj, "segmentation", "annotation"), ann_id),
                bbox=tuple(bbox),
                area=obj.get("area", 0),
                extra=_extras(obj, _ANNOTATION_KEYS),
            )
        )
    assignments = []
    for obj in root.get("scene_assignments", ()):
        if isinstance(obj, dict):
            assignments.append((int(obj["image_id"]), int(obj["scene_tag_id"])))
        else:
            assignments.append((int(obj[0]), int(obj[1])))

    dataset = Dataset(
        images=tuple(images),
        annotations=tuple(annotations),
        categories=tuple(categories),
        scene_tags=tuple(scene_tags),
        scene_assignments=tuple(assignments),
        extra=_extras(root, ("images", "annotations", "categories", "scene_tags", "scene_assignments")),
    )
    _check_links(dataset)
    return dataset


def _check_links(d: Dataset) -> None:
    for kind, records in (("image", d.images), ("annotation", d.annotations),
                          ("category", d.categories), ("scene_tag", d.scene_tags)):
        seen: set[int] = set()
        for rec in records:
            if rec.id in seen:
                raise IntegrityError(f"duplicate {kind} id {rec.id}")
            seen.add(rec.id)
    image_ids = {img.id for img in d.images}
    category_ids = {cat.id for cat in d.categories}
    tag_ids = {tag.id for tag in d.scene_tags}
    for ann in d.annotations:
        if ann.image_id not in image_ids:
            raise IntegrityError(f"annotation {ann.id} references missing image id {ann.image_id}")
        if ann.category_id not in category_ids:
            raise IntegrityError(f"annotation {ann.id} references missing category id {ann.category_id}")
    for image_id, tag_id in d.scene_assignments:
        if image_id not in image_ids:
            raise IntegrityError(f"scene assignment references missing image id {image_id}")
        if tag_id not in tag_ids:
            raise IntegrityError(f"scene assignment references missing scene tag id {tag_id}")


def serialize_dataset(d: Dataset) -> bytes:
    """Serialize to UTF-8 JSON with stable ordering; inverse of parse_dataset."""

    def record(obj: Mapping[str, Any], extra: Mapping[str, Any]) -> dict:
        out = dict(obj)
        for key in sorted(extra):
            out[key] = extra[key]
        return out

    root: dict[str, Any] = {
        "images": [
            record({"id": i.id, "file_name": i.file_name, "width": i.width, "height": i.height}, i.extra)
            for i in sorted(d.images, key=lambda r: r.id)
        ],
        "annotations": [
            record(
                {
                    "id": a.id,
                    "image_id": a.image_id,
                    "category_id": a.category_id,
                    "segmentation": a.segmentation.to_json(),
                    "bbox": list(a.bbox),
                    "area": a.area,
                },
                a.extra,
            )
            for a in sorted(d.annotations, key=lambda r: r.id)
        ],
        "categories": [
            record({"id": c.id, "name": c.name, "supercategory": c.supercategory}, c.extra)
            for c in sorted(d.categories, key=lambda r: r.id)
        ],
        "scene_tags": [
            record({"id": t.id, "name": t.name}, t.extra)
            for t in sorted(d.scene_tags, key=lambda r: r.id)
        ],
        "scene_assignments": [
            {"image_id": i, "scene_tag_id": t} for i, t in sorted(d.scene_assignments)
        ],
    }
    for key in sorted(d.extra):
        root[key] = d.extra[key]
    return (json.dumps(root, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


@dataclass(frozen=True)
class Violation:
    kind: str
    entity_id: int | None
    rule: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        lines = [f"{len(self.violations)} violations"]
        for v in self.violations:
            lines.append(f"  {v.kind} {v.entity_id}: {v.rule}: {v.message}")
        return "\n".join(lines)


def validate(d: Dataset) -> ValidationReport:
    """Check every dataset invariant; violations are data, not errors."""
    out: list[Violation] = []

    def bad(kind: str, entity_id: int | None, rule: str, message: str) -> None:
        out.append(Violation(kind, entity_id, rule, message))

    for kind, records in (("image", d.images), ("annotation", d.annotations),
                          ("category", d.categories), ("scene_tag", d.scene_tags)):
        seen: set[int] = set()
        for rec in records:
            if rec.id in seen:
                bad(kind, rec.id, "duplicate-id", f"{kind} id {rec.id} appears more than once")
            seen.add(rec.id)

    for img in d.images:
        if img.width <= 0 or img.height <= 0:
            bad("image", img.id, "image-dims", f"dimensions {img.width}x{img.height} must be positive")

    for cat in d.categories:
        if not cat.name:
            bad("category", cat.id, "category-name", "name must be nonempty")

    tag_names: set[str] = set()
    for tag in d.scene_tags:
        if tag.name in tag_names:
            bad("scene_tag", tag.id, "scene-tag-name", f"name '{tag.name}' is not unique")
        tag_names.add(tag.name)

    images = d.images_by_id
    categories = d.categories_by_id
    tag_ids = {t.id for t in d.scene_tags}
    for image_id, tag_id in d.scene_assignments:
        if image_id not in images:
            bad("scene_assignment", image_id, "dangling-image-ref", f"image id {image_id} does not exist")
        if tag_id not in tag_ids:
            bad("scene_assignment", tag_id, "dangling-tag-ref", f"scene tag id {tag_id} does not exist")

    for ann in d.annotations:
        if ann.image_id not in images:
            bad("annotation", ann.id, "dangling-image-ref", f"image id {ann.image_id} does not exist")
            continue
        if ann.category_id not in categories:
            bad("annotation", ann.id, "dangling-category-ref", f"category id {ann.category_id} does not exist")
        img = images[ann.image_id]
        x, y, w, h = ann.bbox
        if w <= 0 or h <= 0:
            bad("annotation", ann.id, "bbox-degenerate", f"bbox {ann.bbox} has non-positive extent")
            continue
        if x < 0 or y < 0 or x + w > img.width or y + h > img.height:
            bad("annotation", ann.id, "bbox-out-of-bounds",
                f"bbox {ann.bbox} exceeds image bounds {img.width}x{img.height}")
        try:
            mask = rasterize(ann.segmentation, img.width, img.height)
        except MaskError as exc:
            bad("annotation", ann.id, "segmentation-invalid", str(exc))
            continue
        count = mask_area(mask)
        if count == 0:
            bad("annotation", ann.id, "mask-empty", "segmentation rasterizes to an empty mask")
            continue
        if abs(ann.area - count) > 0.05 * count:
            bad("annotation", ann.id, "area-mismatch",
                f"area field {ann.area} vs rasterized {count} px exceeds 5% tolerance")
        tight = mask_bbox(mask)
        tx, ty, tw, th = tight
        edges = (abs(x - tx), abs(y - ty), abs((x + w) - (tx + tw)), abs((y + h) - (ty + th)))
        if max(edges) > 1.0:
            bad("annotation", ann.id, "bbox-mismatch",
                f"bbox {ann.bbox} differs from mask bounds {tight} by more than 1 px")

    return ValidationReport(violations=tuple(out))
