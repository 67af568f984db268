"""Command-line entry point: one thin subcommand per toolkit operation.

Exit codes: 0 on success, 1 on data violations or data-level errors,
2 on usage errors. Results go to stdout or files; diagnostics to stderr.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import augment as aug
from . import evaluation as ev
from . import stats as st
from .dataset import DatasetError, parse_dataset, serialize_dataset, validate
from .imageio import load_image, save_png
from .masks import MaskError
from .splits import SplitError, dump_split, kfold_splits
from .taxonomy import (
    TaxonomyError,
    build_top_k_mapping,
    classless_mapping,
    dump_mapping,
    load_mapping,
    remap,
)
from .transplant import TransplantError, transplant_batch

_DATA_ERRORS = (
    DatasetError,
    MaskError,
    TaxonomyError,
    SplitError,
    ev.EvalError,
    TransplantError,
    aug.AugmentError,
    OSError,
)


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _load_dataset(path: str):
    try:
        return parse_dataset(Path(path).read_bytes())
    except _DATA_ERRORS as exc:
        _fail(str(exc))


@click.group()
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for all stochastic subcommands.")
@click.pass_context
def main(ctx: click.Context, seed: int) -> None:
    """Litter-detection dataset engineering and evaluation toolkit."""
    ctx.ensure_object(dict)
    ctx.obj["seed"] = seed


def _seed_of(ctx: click.Context, override: int | None) -> int:
    return ctx.obj["seed"] if override is None else override


@main.command("validate")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
def validate_cmd(dataset_path: str) -> None:
    """Check dataset invariants; exit 1 when violations exist."""
    d = _load_dataset(dataset_path)
    report = validate(d)
    click.echo(report.summary())
    if not report.ok:
        sys.exit(1)


@main.command("stats")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--top-k", type=int, default=None, help="Build the bbox size histogram over a top-k taxonomy.")
@click.option("--other", default="Other Litter", show_default=True)
@click.option("--mapping", "mapping_path", type=click.Path(exists=True), default=None)
def stats_cmd(dataset_path: str, out_dir: str, top_k: int | None, other: str, mapping_path: str | None) -> None:
    """Write dataset statistics as CSV tables."""
    d = _load_dataset(dataset_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        (out / "category_counts.csv").write_text(st.category_counts(d, "category").to_csv())
        (out / "supercategory_counts.csv").write_text(st.category_counts(d, "supercategory").to_csv())
        (out / "resolutions.csv").write_text(st.resolution_distribution(d).to_csv())
        (out / "scene_tags.csv").write_text(st.scene_tag_proportions(d).to_csv())
        mapping = None
        if mapping_path is not None:
            mapping = load_mapping(Path(mapping_path).read_text(), d)
        elif top_k is not None:
            mapping = build_top_k_mapping(d, top_k, other)
        if mapping is not None:
            (out / "bbox_sizes.csv").write_text(st.bbox_size_histogram(d, mapping).to_csv())
    except _DATA_ERRORS as exc:
        _fail(str(exc))
    click.echo(f"wrote statistics to {out}")


@main.command("remap")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--top-k", type=int, default=None)
@click.option("--other", default="Other Litter", show_default=True)
@click.option("--classless", is_flag=True, default=False)
@click.option("--mapping", "mapping_path", type=click.Path(exists=True), default=None)
@click.option("--export-mapping", "export_mapping_path", type=click.Path(), default=None)
def remap_cmd(
    dataset_path: str,
    out_path: str,
    top_k: int | None,
    other: str,
    classless: bool,
    mapping_path: str | None,
    export_mapping_path: str | None,
) -> None:
    """Rewrite the dataset onto a task taxonomy."""
    chosen = [x is not None for x in (top_k, mapping_path)] + [classless]
    if sum(chosen) != 1:
        raise click.UsageError("choose exactly one of --top-k, --classless, --mapping")
    d = _load_dataset(dataset_path)
    try:
        if classless:
            mapping = classless_mapping(d)
        elif top_k is not None:
            mapping = build_top_k_mapping(d, top_k, other)
        else:
            mapping = load_mapping(Path(mapping_path).read_text(), d)
        if export_mapping_path is not None:
            Path(export_mapping_path).write_text(dump_mapping(mapping, d))
        remapped = remap(d, mapping)
        Path(out_path).write_bytes(serialize_dataset(remapped))
    except _DATA_ERRORS as exc:
        _fail(str(exc))
    click.echo(f"wrote {out_path} with {len(mapping.target_classes)} classes")


@main.command("split")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--k", type=int, default=4, show_default=True)
@click.option("--fractions", default="0.8,0.1,0.1", show_default=True)
@click.option("--seed", type=int, default=None, help="Overrides the global --seed.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.pass_context
def split_cmd(ctx: click.Context, dataset_path: str, k: int, fractions: str, seed: int | None, out_dir: str) -> None:
    """Write one `<image_id> <part>` file per fold."""
    try:
        fracs = tuple(float(f) for f in fractions.split(","))
        if len(fracs) != 3:
            raise ValueError
    except ValueError:
        raise click.UsageError("--fractions must be three comma-separated numbers")
    d = _load_dataset(dataset_path)
    try:
        splits = kfold_splits(d, k, fracs, _seed_of(ctx, seed))
    except _DATA_ERRORS as exc:
        _fail(str(exc))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for split in splits:
        (out / f"fold_{split.fold_index}.txt").write_text(dump_split(split))
    click.echo(f"wrote {k} folds to {out}")


@main.command("transplant")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--image-root", "image_root", required=True, type=click.Path(exists=True))
@click.option("--targets", "targets_dir", required=True, type=click.Path(exists=True))
@click.option("--count", type=int, required=True)
@click.option("--seed", type=int, default=None, help="Overrides the global --seed.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--hard", is_flag=True, default=False, help="Hard-edge paste instead of soft blending.")
@click.option("--radius", type=float, default=3.0, show_default=True)
@click.pass_context
def transplant_cmd(
    ctx: click.Context,
    dataset_path: str,
    image_root: str,
    targets_dir: str,
    count: int,
    seed: int | None,
    out_dir: str,
    hard: bool,
    radius: float,
) -> None:
    """Composite random annotated objects onto target images."""
    d = _load_dataset(dataset_path)
    try:
        src_images = {
            img.id: load_image(Path(image_root) / img.file_name) for img in d.images
        }
        target_paths = sorted(
            p for p in Path(targets_dir).iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg")
        )
        targets = [load_image(p) for p in target_paths]
        result = transplant_batch(
            d, src_images, targets, count, _seed_of(ctx, seed), soft=not hard, radius=radius
        )
    except _DATA_ERRORS as exc:
        _fail(str(exc))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for record in result.dataset.images:
        save_png(out / record.file_name, result.images[record.id])
    (out / "annotations.json").write_bytes(serialize_dataset(result.dataset))
    if result.skipped:
        click.echo(f"skipped {result.skipped} draws that never fit", err=True)
    click.echo(f"wrote {len(result.dataset.images)} transplants to {out}")


@main.command("augment")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--image-root", "image_root", required=True, type=click.Path(exists=True))
@click.option("--ops", required=True, help="Comma-separated: blur,noise,exposure,rotate,crop")
@click.option("--seed", type=int, default=None, help="Overrides the global --seed.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--sigma", type=float, default=1.5, show_default=True)
@click.option("--stddev", type=float, default=8.0, show_default=True)
@click.option("--gain", type=float, default=1.1, show_default=True)
@click.option("--bias", type=float, default=10.0, show_default=True)
@click.option("--degrees", type=float, default=45.0, show_default=True)
@click.option("--crop-size", default=None, help="WxH window for the crop op.")
@click.pass_context
def augment_cmd(
    ctx: click.Context,
    dataset_path: str,
    image_root: str,
    ops: str,
    seed: int | None,
    out_dir: str,
    sigma: float,
    stddev: float,
    gain: float,
    bias: float,
    degrees: float,
    crop_size: str | None,
) -> None:
    """Apply an augmentation pipeline to every image, annotations included."""
    op_list = [o.strip() for o in ops.split(",") if o.strip()]
    unknown = [o for o in op_list if o not in aug.PIPELINE_OPS]
    if unknown:
        raise click.UsageError(f"unknown ops: {', '.join(unknown)}")
    crop_wh = None
    if crop_size is not None:
        try:
            cw, ch = crop_size.lower().split("x")
            crop_wh = (int(cw), int(ch))
        except ValueError:
            raise click.UsageError("--crop-size must look like 320x240")
    if "crop" in op_list and crop_wh is None:
        raise click.UsageError("--crop-size is required with the crop op")

    d = _load_dataset(dataset_path)
    base_seed = _seed_of(ctx, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    from dataclasses import replace

    new_images = []
    new_annotations = []
    try:
        for record in d.images:
            img = load_image(Path(image_root) / record.file_name)
            img, anns = aug.run_pipeline(
                img,
                d.annotations_by_image.get(record.id, ()),
                op_list,
                base_seed,
                record.id,
                sigma=sigma,
                stddev=stddev,
                gain=gain,
                bias=bias,
                degrees=degrees,
                crop_size=crop_wh,
            )
            file_name = f"aug_{record.id:06d}.png"
            save_png(out / file_name, img)
            new_images.append(
                replace(record, file_name=file_name, width=img.shape[1], height=img.shape[0], extra={})
            )
            new_annotations.extend(anns)
    except _DATA_ERRORS as exc:
        _fail(str(exc))

    augmented = d.replace(
        images=tuple(new_images),
        annotations=tuple(new_annotations),
        scene_assignments=tuple(
            (i, t) for i, t in d.scene_assignments if i in {im.id for im in new_images}
        ),
    )
    (out / "annotations.json").write_bytes(serialize_dataset(augmented))
    click.echo(f"wrote {len(new_images)} augmented images to {out}")


@main.command("evaluate")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--dets", "dets_path", required=True, type=click.Path(exists=True))
@click.option("--task", type=click.Choice(["taco1", "taco10"]), default="taco10", show_default=True)
@click.option("--score", "score_name", type=click.Choice(["class", "litter", "ratio"]), default="class", show_default=True)
@click.option("--eps", type=float, default=1e-6, show_default=True)
@click.option("--iou-thresholds", default=None, help="Comma-separated override of the 0.50:0.05:0.95 default.")
@click.option("--confusion-thresholds", default=None, help="Comma-separated score thresholds for confusion matrices.")
@click.option("--out", "out_dir", required=True, type=click.Path())
def evaluate_cmd(
    dataset_path: str,
    dets_path: str,
    task: str,
    score_name: str,
    eps: float,
    iou_thresholds: str | None,
    confusion_thresholds: str | None,
    out_dir: str,
) -> None:
    """Evaluate a detections file: AP report plus scatter and confusion CSVs."""
    d = _load_dataset(dataset_path)
    try:
        dets = ev.parse_detections(Path(dets_path).read_bytes())
        kind = ev.ScoreKind(score_name, epsilon=eps)
        thresholds = ev.DEFAULT_IOU_THRESHOLDS
        if iou_thresholds is not None:
            thresholds = tuple(float(t) for t in iou_thresholds.split(","))
        config = ev.EvalConfig(
            iou_thresholds=thresholds, class_agnostic=(task == "taco1"), score_kind=kind
        )
        report = ev.average_precision(d, dets, config)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        import json as _json

        (out / "report.json").write_text(_json.dumps(report.to_json(), indent=2) + "\n")
        (out / "iou_score_scatter.csv").write_text(ev.iou_score_scatter(d, dets, config).to_csv())
        (out / "area_iou_scatter.csv").write_text(ev.area_iou_scatter(d, dets).to_csv())
        if confusion_thresholds is not None:
            for raw in confusion_thresholds.split(","):
                t = float(raw)
                matrix = ev.confusion_matrix(d, dets, t, kind)
                label = f"{t:g}".replace(".", "_")
                (out / f"confusion_{score_name}_gt{label}.csv").write_text(matrix.to_table().to_csv())
    except _DATA_ERRORS as exc:
        _fail(str(exc))
    click.echo(f"mean AP ({task}, {score_name} score): {report.mean_ap:.2f}")


@main.command("serve")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--image-root", "image_root", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8731, show_default=True)
@click.option("--top-k", type=int, default=None, help="Expose a top-k class filter to the UI.")
@click.option("--export-dir", "export_dir", type=click.Path(), default=None)
def serve_cmd(
    dataset_path: str, image_root: str, host: str, port: int, top_k: int | None, export_dir: str | None
) -> None:
    """Run the interactive transplanter service."""
    from .service import serve

    d = _load_dataset(dataset_path)
    mapping = None
    if top_k is not None:
        try:
            mapping = build_top_k_mapping(d, top_k)
        except _DATA_ERRORS as exc:
            _fail(str(exc))
    try:
        serve(dataset_path, image_root, port=port, host=host, mapping=mapping, export_dir=export_dir)
    except _DATA_ERRORS as exc:
        _fail(str(exc))


if __name__ == "__main__":
    main()
