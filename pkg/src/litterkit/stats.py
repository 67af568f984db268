"""Dataset statistics as machine-readable tables.

Annotation counts per (super)category, the image resolution
distribution, scene tag proportions, and per-class bounding box size
histograms. Tables serialize to RFC-4180 CSV with a header row.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass

from .dataset import Dataset
from .taxonomy import TaxonomyMapping

# side-length bin edges in pixels for sqrt(w*h)
SIZE_BIN_EDGES = (0, 16, 32, 64, 128, 256)
SIZE_BIN_LABELS = ("[0,16)", "[16,32)", "[32,64)", "[64,128)", "[128,256)", "[256,inf)")


@dataclass(frozen=True)
class Table:
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(self.columns)
        writer.writerows(self.rows)
        return buf.getvalue()


def category_counts(d: Dataset, level: str = "supercategory") -> Table:
    """Annotation counts per category or supercategory, descending."""
    if level not in ("category", "supercategory"):
        raise ValueError(f"level must be 'category' or 'supercategory', got {level!r}")
    categories = d.categories_by_id
    counts: Counter[str] = Counter()
    for ann in d.annotations:
        cat = categories[ann.category_id]
        counts[cat.name if level == "category" else cat.supercategory] += 1
    rows = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Table(columns=(level, "annotations"), rows=tuple(rows))


def resolution_distribution(d: Dataset) -> Table:
    """Image counts per distinct (width, height) resolution."""
    counts: Counter[tuple[int, int]] = Counter((img.width, img.height) for img in d.images)
    rows = [
        (w, h, n, round(w * h / 1e6, 3))
        for (w, h), n in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    ]
    return Table(columns=("width", "height", "images", "megapixels"), rows=tuple(rows))


def scene_tag_proportions(d: Dataset) -> Table:
    """Fraction of images carrying each scene tag.

    Tags are not mutually exclusive, so proportions may sum above 1;
    untagged images count only in the denominator.
    """
    n_images = len(d.images)
    tagged: Counter[int] = Counter()
    for image_id, tag_id in set(d.scene_assignments):
        tagged[tag_id] += 1
    rows = []
    for tag in sorted(d.scene_tags, key=lambda t: (-tagged[t.id], t.name)):
        count = tagged[tag.id]
        rows.append((tag.name, count, count / n_images if n_images else 0.0))
    return Table(columns=("scene_tag", "images", "proportion"), rows=tuple(rows))


def bbox_size_histogram(d: Dataset, m: TaxonomyMapping) -> Table:
    """Per target class, annotation counts binned by side length sqrt(w*h)."""
    categories = d.categories_by_id
    hist = {name: [0] * len(SIZE_BIN_LABELS) for name in m.target_classes}
    for ann in d.annotations:
        target = m.class_of(ann.category_id)
        side = math.sqrt(ann.bbox[2] * ann.bbox[3])
        bin_index = len(SIZE_BIN_EDGES) - 1
        for i in range(len(SIZE_BIN_EDGES) - 1):
            if side < SIZE_BIN_EDGES[i + 1]:
                bin_index = i
                break
        hist.setdefault(target, [0] * len(SIZE_BIN_LABELS))[bin_index] += 1
    rows = tuple((name, *hist[name]) for name in m.target_classes)
    return Table(columns=("class", *SIZE_BIN_LABELS), rows=rows)
