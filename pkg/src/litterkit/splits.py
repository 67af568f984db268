"""Seeded k-fold train/val/test split generation.

Each fold is an independent random split of the image ids by the given
fractions (floor-sized val and test, remainder to train). Splitting is
always by image so annotations of one image never leak across parts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .dataset import Dataset
from .rng import rng_for

PARTS = ("train", "val", "test")


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class Split:
    fold_index: int
    train: frozenset[int]
    val: frozenset[int]
    test: frozenset[int]

    def part_of(self, image_id: int) -> str:
        for part in PARTS:
            if image_id in getattr(self, part):
                return part
        raise KeyError(image_id)


def kfold_splits(
    d: Dataset,
    k: int,
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> list[Split]:
    if k < 1:
        raise SplitError(f"k must be >= 1, got {k}")
    if any(f <= 0 for f in fractions):
        raise SplitError(f"fractions must be positive, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise SplitError(f"fractions must sum to 1, got {fractions}")
    n = len(d.images)
    if n < 3 * k:
        raise SplitError(f"{n} images cannot support {k} folds (need at least {3 * k})")

    ids = sorted(img.id for img in d.images)
    n_val = math.floor(n * fractions[1])
    n_test = math.floor(n * fractions[2])
    n_train = n - n_val - n_test

    folds = []
    for fold in range(k):
        perm = rng_for(seed, fold).permutation(ids)
        folds.append(
            Split(
                fold_index=fold,
                train=frozenset(int(i) for i in perm[:n_train]),
                val=frozenset(int(i) for i in perm[n_train : n_train + n_val]),
                test=frozenset(int(i) for i in perm[n_train + n_val :]),
            )
        )
    return folds


def dump_split(split: Split) -> str:
    """One line per image: `<image_id> <train|val|test>`, sorted by id."""
    lines = []
    for part in PARTS:
        for image_id in getattr(split, part):
            lines.append((image_id, part))
    return "\n".join(f"{image_id} {part}" for image_id, part in sorted(lines)) + "\n"


def load_split(text: str, fold_index: int = 0) -> Split:
    parts: dict[str, set[int]] = {part: set() for part in PARTS}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            id_str, part = line.split()
            parts[part].add(int(id_str))
        except (ValueError, KeyError) as exc:
            raise SplitError(f"split line {lineno} is not '<image_id> <part>': {raw!r}") from exc
    return Split(
        fold_index=fold_index,
        train=frozenset(parts["train"]),
        val=frozenset(parts["val"]),
        test=frozenset(parts["test"]),
    )
