"""Remapping the hierarchical category taxonomy into task taxonomies.

The dataset's two-level hierarchy (categories under supercategories) can
be collapsed for a given task: the top-k supercategories by instance
count plus a catch-all class, or the single-class "Litter" taxonomy.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, replace
from typing import Mapping

from .dataset import Category, Dataset


LITTER_CLASS = "Litter"


class TaxonomyError(ValueError):
    pass


@dataclass(frozen=True)
class TaxonomyMapping:
    """Maps every source category id to a target class name."""

    entries: Mapping[int, str]
    target_classes: tuple[str, ...]

    def class_of(self, category_id: int) -> str:
        try:
            return self.entries[category_id]
        except KeyError:
            raise TaxonomyError(f"category id {category_id} is not covered by the mapping") from None


def build_top_k_mapping(d: Dataset, k: int, other_name: str = "Other Litter") -> TaxonomyMapping:
    """Keep the k most-annotated supercategories as classes, merge the rest.

    Supercategories are ranked by total annotation count descending, ties
    broken by ascending name, so the result is deterministic and
    independent of input ordering.
    """
    if k < 1:
        raise TaxonomyError(f"k must be >= 1, got {k}")
    if not d.annotations:
        raise TaxonomyError("dataset has no annotations to rank supercategories by")
    supers = sorted({c.supercategory for c in d.categories})
    if k > len(supers):
        raise TaxonomyError(f"k={k} exceeds the {len(supers)} supercategories present")

    categories = d.categories_by_id
    counts: Counter[str] = Counter({s: 0 for s in supers})
    for ann in d.annotations:
        counts[categories[ann.category_id].supercategory] += 1

    ranked = sorted(supers, key=lambda s: (-counts[s], s))
    top = ranked[:k]
    top_set = set(top)
    entries = {
        c.id: (c.supercategory if c.supercategory in top_set else other_name)
        for c in d.categories
    }
    target_classes = tuple(top)
    if any(name == other_name for name in entries.values()):
        target_classes += (other_name,)
    return TaxonomyMapping(entries=entries, target_classes=target_classes)


def classless_mapping(d: Dataset) -> TaxonomyMapping:
    """Collapse every category into the single class "Litter"."""
    return TaxonomyMapping(
        entries={c.id: LITTER_CLASS for c in d.categories},
        target_classes=(LITTER_CLASS,),
    )


def remap(d: Dataset, m: TaxonomyMapping) -> Dataset:
    """Rewrite the dataset onto the mapping's target classes.

    Target classes get ids 1..N in list order; annotation geometry,
    images and scene tags are untouched.
    """
    class_ids = {name: i + 1 for i, name in enumerate(m.target_classes)}
    new_categories = tuple(
        Category(id=i + 1, name=name, supercategory=name)
        for i, name in enumerate(m.target_classes)
    )
    new_annotations = []
    for ann in d.annotations:
        if ann.category_id not in m.entries:
            raise TaxonomyError(f"category id {ann.category_id} is not covered by the mapping")
        target = m.entries[ann.category_id]
        if target not in class_ids:
            raise TaxonomyError(f"mapping target '{target}' missing from target_classes")
        new_annotations.append(replace(ann, category_id=class_ids[target]))
    return d.replace(categories=new_categories, annotations=tuple(new_annotations))


def dump_mapping(m: TaxonomyMapping, d: Dataset) -> str:
    """Two-column text: source category name, target class name (tab separated)."""
    categories = d.categories_by_id
    lines = []
    for cat_id in sorted(m.entries):
        name = categories[cat_id].name if cat_id in categories else str(cat_id)
        lines.append(f"{name}\t{m.entries[cat_id]}")
    return "\n".join(lines) + "\n"


def load_mapping(text: str, d: Dataset) -> TaxonomyMapping:
    """Parse the two-column mapping format against a dataset's category names."""
    by_name = {c.name: c.id for c in d.categories}
    entries: dict[int, str] = {}
    targets: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise TaxonomyError(f"mapping line {lineno} must be 'source<TAB>target': {raw!r}")
        source, target = parts[0].strip(), parts[1].strip()
        if source not in by_name:
            raise TaxonomyError(f"mapping line {lineno} names unknown category '{source}'")
        entries[by_name[source]] = target
        if target not in targets:
            targets.append(target)
    return TaxonomyMapping(entries=entries, target_classes=tuple(targets))
