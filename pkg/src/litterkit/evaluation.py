"""Instance-segmentation evaluation.

Prediction scoring from class-probability vectors, greedy IoU matching,
mask AP averaged over IoU thresholds (101-point interpolated), confusion
matrices with explicit background row/column, scatter exports, and
cross-fold summaries.

Every detection carries a probability vector of length N+1 whose last
entry is the background probability; ranking scores are derived from it
and never from geometry, so AP depends only on score order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dataset import Annotation, Dataset, IntegrityError, ParseError
from .masks import Polygons, Rle, Segmentation, mask_iou, rasterize
from .stats import Table

DEFAULT_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
AGNOSTIC_CLASS = "litter"
_RECALL_LEVELS = np.linspace(0.0, 1.0, 101)


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class Detection:
    """One predicted instance with its class-probability vector."""

    id: int
    image_id: int
    segmentation: Segmentation
    probs: tuple[float, ...]


@dataclass(frozen=True)
class ScoreKind:
    kind: str
    epsilon: float = 1e-6

    def __post_init__(self) -> None:
        if self.kind not in ("class", "litter", "ratio"):
            raise EvalError(f"unknown score kind {self.kind!r}")
        if self.epsilon <= 0:
            raise EvalError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: tuple[float, ...] = DEFAULT_IOU_THRESHOLDS
    class_agnostic: bool = False
    score_kind: ScoreKind = ScoreKind("class")

    def __post_init__(self) -> None:
        ts = self.iou_thresholds
        if not ts or any(t <= 0 or t > 1 for t in ts):
            raise EvalError(f"IoU thresholds must lie in (0, 1], got {ts}")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise EvalError(f"IoU thresholds must be strictly increasing, got {ts}")


@dataclass(frozen=True)
class MatchRecord:
    """One ledger row: a match, a false positive (gt_id None), or a false negative (det_id None)."""

    threshold: float
    class_name: str
    image_id: int
    det_id: int | None
    gt_id: int | None
    iou: float
    score: float | None


@dataclass(frozen=True)
class EvalReport:
    per_class: Mapping[str, float]
    mean_ap: float
    per_threshold: Mapping[float, float]
    matches: tuple[MatchRecord, ...] = ()

    def to_json(self) -> dict:
        return {
            "mean_ap": self.mean_ap,
            "per_class": dict(self.per_class),
            "per_threshold": {f"{t:.2f}": v for t, v in self.per_threshold.items()},
        }


def validate_probs(probs: Sequence[float]) -> None:
    if len(probs) < 2:
        raise EvalError(f"probability vector needs at least 2 entries, got {len(probs)}")
    if any(p < 0 for p in probs):
        raise EvalError(f"probabilities must be non-negative: {probs}")
    total = sum(probs)
    if abs(total - 1.0) > 1e-6:
        raise EvalError(f"probabilities must sum to 1 (got {total})")


def score(probs: Sequence[float], kind: ScoreKind) -> float:
    """Ranking score from a probability vector whose last entry is background."""
    foreground = max(probs[:-1])
    if kind.kind == "class":
        return float(foreground)
    if kind.kind == "litter":
        return float(1.0 - probs[-1])
    return float(foreground / (probs[-1] + kind.epsilon))


def predicted_class(probs: Sequence[float]) -> int:
    """1-based argmax over the foreground entries; ties go to the lowest index."""
    best = 0
    for i in range(1, len(probs) - 1):
        if probs[i] > probs[best]:
            best = i
    return best + 1


class _SceneIndex:
    """Rasterized masks and pairwise IoUs, computed lazily and cached."""

    def __init__(self, dataset: Dataset, detections: Sequence[Detection]):
        images = dataset.images_by_id
        for det in detections:
            if det.image_id not in images:
                raise IntegrityError(f"detection {det.id} references unknown image id {det.image_id}")
        self._images = images
        self._gt_masks: dict[int, np.ndarray] = {}
        self._det_masks: dict[int, np.ndarray] = {}
        self._ious: dict[tuple[int, int], float] = {}
        self.gts_by_image: dict[int, list[Annotation]] = {}
        for ann in sorted(dataset.annotations, key=lambda a: a.id):
            self.gts_by_image.setdefault(ann.image_id, []).append(ann)
        self.dets_by_image: dict[int, list[Detection]] = {}
        for det in sorted(detections, key=lambda d: d.id):
            self.dets_by_image.setdefault(det.image_id, []).append(det)

    def _mask(self, cache: dict, entity, image_id: int) -> np.ndarray:
        if entity.id not in cache:
            img = self._images[image_id]
            cache[entity.id] = rasterize(entity.segmentation, img.width, img.height)
        return cache[entity.id]

    def iou(self, det: Detection, gt: Annotation) -> float:
        key = (det.id, gt.id)
        if key not in self._ious:
            self._ious[key] = mask_iou(
                self._mask(self._det_masks, det, det.image_id),
                self._mask(self._gt_masks, gt, gt.image_id),
            )
        return self._ious[key]


@dataclass(frozen=True)
class MatchResult:
    matches: tuple[tuple[Detection, Annotation, float], ...]
    unmatched_detections: tuple[Detection, ...]
    unmatched_gts: tuple[Annotation, ...]


def match_detections(
    dataset: Dataset,
    detections: Sequence[Detection],
    iou_threshold: float,
    class_agnostic: bool,
    score_kind: ScoreKind = ScoreKind("class"),
) -> MatchResult:
    """Greedy score-ordered matching of detections to ground truths.

    Detections claim, in descending score order (ties by id), the
    unmatched ground truth of highest IoU >= threshold; class-aware
    matching restricts candidates to the detection's predicted class.
    """
    index = _SceneIndex(dataset, detections)
    cat_order = _category_order(dataset)
    ranked = sorted(detections, key=lambda det: (-score(det.probs, score_kind), det.id))
    matched_gt_ids: set[int] = set()
    matches = []
    unmatched_dets = []
    for det in ranked:
        candidates = index.gts_by_image.get(det.image_id, ())
        if not class_agnostic:
            det_class = predicted_class(det.probs)
            candidates = [gt for gt in candidates if cat_order.get(gt.category_id) == det_class]
        best, best_iou = None, 0.0
        for gt in candidates:
            if gt.id in matched_gt_ids:
                continue
            iou = index.iou(det, gt)
            if iou >= iou_threshold and (best is None or iou > best_iou):
                best, best_iou = gt, iou
        if best is None:
            unmatched_dets.append(det)
        else:
            matched_gt_ids.add(best.id)
            matches.append((det, best, best_iou))
    unmatched_gts = tuple(
        ann for ann in sorted(dataset.annotations, key=lambda a: a.id) if ann.id not in matched_gt_ids
    )
    return MatchResult(
        matches=tuple(matches),
        unmatched_detections=tuple(unmatched_dets),
        unmatched_gts=unmatched_gts,
    )


def _category_order(dataset: Dataset) -> dict[int, int]:
    """Category id -> 1-based position in id order (the probs vector layout)."""
    return {cat.id: i + 1 for i, cat in enumerate(sorted(dataset.categories, key=lambda c: c.id))}


def _ap_from_flags(flags: Sequence[bool], n_gt: int) -> float:
    """101-point interpolated AP from ranked TP/FP flags."""
    n = len(flags)
    if n == 0:
        return 0.0
    tp = np.cumsum(np.asarray(flags, dtype=np.float64))
    precision = tp / np.arange(1, n + 1)
    recall = tp / n_gt
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, _RECALL_LEVELS, side="left")
    vals = np.where(idx < n, envelope[np.minimum(idx, n - 1)], 0.0)
    return float(vals.mean())


def _greedy_flags(
    ranked: Sequence[Detection],
    gts_by_image: Mapping[int, Sequence[Annotation]],
    index: _SceneIndex,
    threshold: float,
    class_name: str,
    det_score,
) -> tuple[list[bool], list[MatchRecord]]:
    matched: set[int] = set()
    flags: list[bool] = []
    records: list[MatchRecord] = []
    for det in ranked:
        best, best_iou = None, 0.0
        for gt in gts_by_image.get(det.image_id, ()):
            if gt.id in matched:
                continue
            iou = index.iou(det, gt)
            if iou >= threshold and (best is None or iou > best_iou):
                best, best_iou = gt, iou
        if best is None:
            flags.append(False)
            records.append(MatchRecord(threshold, class_name, det.image_id, det.id, None, 0.0, det_score(det)))
        else:
            matched.add(best.id)
            flags.append(True)
            records.append(
                MatchRecord(threshold, class_name, det.image_id, det.id, best.id, best_iou, det_score(det))
            )
    for gts in gts_by_image.values():
        for gt in gts:
            if gt.id not in matched:
                records.append(MatchRecord(threshold, class_name, gt.image_id, None, gt.id, 0.0, None))
    return flags, records


def average_precision(
    dataset: Dataset,
    detections: Sequence[Detection],
    config: EvalConfig,
    score_overrides: Mapping[int, float] | None = None,
) -> EvalReport:
    """Mask AP per class, averaged over IoU thresholds, reported x100.

    Classes with no ground truth are excluded from the mean rather than
    scored zero. ``score_overrides`` (detection id -> ranking score)
    replaces the probability-derived score for ranking; AP depends only
    on the ranking order, so any strictly increasing rescoring leaves
    every value unchanged.
    """
    index = _SceneIndex(dataset, detections)
    cat_order = _category_order(dataset)

    if score_overrides is None:
        def det_score(det: Detection) -> float:
            return score(det.probs, config.score_kind)
    else:
        def det_score(det: Detection) -> float:
            return score_overrides[det.id]

    if config.class_agnostic:
        groups = {AGNOSTIC_CLASS: (list(detections), dict(index.gts_by_image))}
    else:
        names = {i: cat.name for i, cat in enumerate(sorted(dataset.categories, key=lambda c: c.id), start=1)}
        groups = {}
        for position, name in names.items():
            dets_c = [det for det in detections if predicted_class(det.probs) == position]
            gts_c: dict[int, list[Annotation]] = {}
            for image_id, gts in index.gts_by_image.items():
                keep = [gt for gt in gts if cat_order[gt.category_id] == position]
                if keep:
                    gts_c[image_id] = keep
            groups[name] = (dets_c, gts_c)

    per_class: dict[str, float] = {}
    per_threshold_acc: dict[float, list[float]] = {t: [] for t in config.iou_thresholds}
    ledger: list[MatchRecord] = []
    for name, (dets_c, gts_c) in groups.items():
        n_gt = sum(len(v) for v in gts_c.values())
        if n_gt == 0:
            continue
        ranked = sorted(dets_c, key=lambda det: (-det_score(det), det.id))
        aps = []
        for t in config.iou_thresholds:
            flags, records = _greedy_flags(ranked, gts_c, index, t, name, det_score)
            ap = _ap_from_flags(flags, n_gt)
            aps.append(ap)
            per_threshold_acc[t].append(ap)
            ledger.extend(records)
        per_class[name] = 100.0 * float(np.mean(aps))

    mean_ap = float(np.mean(list(per_class.values()))) if per_class else 0.0
    per_threshold = {
        t: (100.0 * float(np.mean(v)) if v else 0.0) for t, v in per_threshold_acc.items()
    }
    return EvalReport(
        per_class=per_class,
        mean_ap=mean_ap,
        per_threshold=per_threshold,
        matches=tuple(ledger),
    )


@dataclass(eq=False)
class ConfusionMatrix:
    """Counts with background as row/column 0: rows = predicted, columns = ground truth."""

    class_names: tuple[str, ...]
    counts: np.ndarray

    def normalized(self) -> np.ndarray:
        """Columns scaled to sum to 1 (per ground-truth class); empty columns left 0."""
        totals = self.counts.sum(axis=0, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(totals > 0, self.counts / totals, 0.0)
        return out

    def to_table(self) -> Table:
        labels = ("BG", *self.class_names)
        rows = tuple((labels[i], *self.counts[i].tolist()) for i in range(len(labels)))
        return Table(columns=("predicted", *labels), rows=rows)


def confusion_matrix(
    dataset: Dataset,
    detections: Sequence[Detection],
    score_threshold: float,
    kind: ScoreKind,
    iou_threshold: float = 0.5,
) -> ConfusionMatrix:
    """Class-agnostic matching at the IoU threshold, bucketed by class labels.

    Matched pairs land at [predicted][gt]; unmatched detections in the
    first column (predicted vs background) and unmatched ground truths in
    the first row (background vs gt). Only detections scoring strictly
    above the threshold participate.
    """
    cats = sorted(dataset.categories, key=lambda c: c.id)
    n = len(cats)
    for det in detections:
        if len(det.probs) != n + 1:
            raise EvalError(
                f"detection {det.id} has {len(det.probs)} probabilities, expected {n + 1}"
            )
    cat_order = _category_order(dataset)
    kept = [det for det in detections if score(det.probs, kind) > score_threshold]
    result = match_detections(dataset, kept, iou_threshold, class_agnostic=True, score_kind=kind)

    counts = np.zeros((n + 1, n + 1), dtype=np.int64)
    for det, gt, _iou in result.matches:
        counts[predicted_class(det.probs), cat_order[gt.category_id]] += 1
    for det in result.unmatched_detections:
        counts[predicted_class(det.probs), 0] += 1
    for gt in result.unmatched_gts:
        counts[0, cat_order[gt.category_id]] += 1
    return ConfusionMatrix(class_names=tuple(c.name for c in cats), counts=counts)


def iou_score_scatter(
    dataset: Dataset, detections: Sequence[Detection], config: EvalConfig
) -> Table:
    """One row per detection: its score and the best IoU against any ground truth."""
    index = _SceneIndex(dataset, detections)
    cat_order = _category_order(dataset)
    rows = []
    for det in sorted(detections, key=lambda d: d.id):
        candidates = index.gts_by_image.get(det.image_id, ())
        if not config.class_agnostic:
            det_class = predicted_class(det.probs)
            candidates = [gt for gt in candidates if cat_order.get(gt.category_id) == det_class]
        best = max((index.iou(det, gt) for gt in candidates), default=0.0)
        rows.append((det.id, score(det.probs, config.score_kind), best))
    return Table(columns=("detection_id", "score", "best_iou"), rows=tuple(rows))


def area_iou_scatter(dataset: Dataset, detections: Sequence[Detection]) -> Table:
    """One row per ground truth: bbox area and the best IoU any detection achieves."""
    index = _SceneIndex(dataset, detections)
    rows = []
    for gt in sorted(dataset.annotations, key=lambda a: a.id):
        dets = index.dets_by_image.get(gt.image_id, ())
        best = max((index.iou(det, gt) for det in dets), default=0.0)
        rows.append((gt.id, gt.bbox[2] * gt.bbox[3], best))
    return Table(columns=("gt_id", "bbox_area", "best_iou"), rows=tuple(rows))


@dataclass(frozen=True)
class CrossValSummary:
    mean_ap: tuple[float, float]
    per_class: Mapping[str, tuple[float, float]]


def cross_validation_summary(reports: Sequence[EvalReport]) -> CrossValSummary:
    """Mean and sample standard deviation of AP across folds."""
    if len(reports) < 2:
        raise EvalError(f"need at least 2 reports, got {len(reports)}")
    keys = set(reports[0].per_class)
    for rep in reports[1:]:
        if set(rep.per_class) != keys:
            raise EvalError(
                f"report shapes differ: {sorted(keys)} vs {sorted(rep.per_class)}"
            )

    def stat(values: list[float]) -> tuple[float, float]:
        arr = np.asarray(values, dtype=np.float64)
        return float(arr.mean()), float(arr.std(ddof=1))

    return CrossValSummary(
        mean_ap=stat([r.mean_ap for r in reports]),
        per_class={name: stat([r.per_class[name] for r in reports]) for name in sorted(keys)},
    )


def format_summary_table(
    rows: Sequence[tuple[str, Sequence[tuple[float, float]]]],
    score_names: Sequence[str],
    label: str = "Dataset",
) -> str:
    """Fixed-width mean ± std table, one row per task and one column per score."""
    header = [label, *score_names]
    body = [[name, *(f"{m:.1f} ± {s:.1f}" for m, s in cells)] for name, cells in rows]
    widths = [max(len(line[i]) for line in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip() for line in [header, *body]]
    return "\n".join(lines) + "\n"


def parse_detections(data: bytes | str) -> tuple[Detection, ...]:
    """Parse a detections file: a JSON array of {image_id, segmentation, probs}."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        raw = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed detections file at byte {exc.pos}: {exc.msg}") from exc
    if not isinstance(raw, list):
        raise ParseError("detections file must be a JSON array")
    out = []
    for i, obj in enumerate(raw):
        if "image_id" not in obj or "segmentation" not in obj or "probs" not in obj:
            raise ParseError(f"detection #{i} must have image_id, segmentation and probs")
        seg_raw = obj["segmentation"]
        seg: Segmentation
        try:
            if isinstance(seg_raw, list):
                seg = Polygons.from_json(seg_raw)
            elif isinstance(seg_raw, dict):
                seg = Rle.from_json(seg_raw)
            else:
                raise TypeError(type(seg_raw).__name__)
        except (TypeError, ValueError, KeyError) as exc:
            raise ParseError(f"detection #{i} has unrecognized segmentation format: {exc}") from exc
        probs = tuple(float(p) for p in obj["probs"])
        try:
            validate_probs(probs)
        except EvalError as exc:
            raise ParseError(f"detection #{i}: {exc}") from exc
        out.append(
            Detection(id=int(obj.get("id", i + 1)), image_id=int(obj["image_id"]), segmentation=seg, probs=probs)
        )
    return tuple(out)


def serialize_detections(detections: Sequence[Detection]) -> bytes:
    rows = [
        {
            "id": det.id,
            "image_id": det.image_id,
            "segmentation": det.segmentation.to_json(),
            "probs": list(det.probs),
        }
        for det in detections
    ]
    return (json.dumps(rows, indent=2) + "\n").encode("utf-8")
