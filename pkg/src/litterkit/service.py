"""Local HTTP service for interactive transplanting.

Serves the dataset's images and annotations, previews and commits
transplant placements, and exports the accumulated working set as an
annotation file. Previews are pure: they never mutate state, and the
blend output is exactly the library blend for the same inputs.
"""

from __future__ import annotations

import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .dataset import Annotation, Dataset, serialize_dataset
from .imageio import load_image, png_bytes, save_png
from .masks import rasterize
from .taxonomy import TaxonomyMapping
from .transplant import Placement, TransplantError, _crop_box, transplant_one


class PlacementModel(BaseModel):
    x: int
    y: int
    scale: float = 1.0
    rotation: float = 0.0
    soft: bool = True
    radius: float = 3.0


class TransplantRequest(BaseModel):
    annotation_id: int
    target_image_id: int
    placement: PlacementModel


class _Workspace:
    """Mutable working set: lazily loaded pixels plus committed annotations."""

    def __init__(self, dataset: Dataset, image_root: Path):
        self.dataset = dataset
        self.image_root = Path(image_root)
        self.pixels: dict[int, np.ndarray] = {}
        self.committed: list[Annotation] = []
        ids = [a.id for a in dataset.annotations]
        self.next_ann_id = max(ids, default=0) + 1
        self.lock = threading.Lock()

    def image(self, image_id: int) -> np.ndarray:
        record = self.dataset.images_by_id.get(image_id)
        if record is None:
            raise HTTPException(status_code=404, detail=f"unknown image id {image_id}")
        if image_id not in self.pixels:
            self.pixels[image_id] = load_image(self.image_root / record.file_name)
        return self.pixels[image_id]

    def annotation(self, ann_id: int) -> Annotation:
        for ann in self.dataset.annotations:
            if ann.id == ann_id:
                return ann
        for ann in self.committed:
            if ann.id == ann_id:
                return ann
        raise HTTPException(status_code=404, detail=f"unknown annotation id {ann_id}")

    def current_dataset(self) -> Dataset:
        return self.dataset.replace(annotations=self.dataset.annotations + tuple(self.committed))


def create_app(
    dataset: Dataset,
    image_root: str | Path,
    mapping: TaxonomyMapping | None = None,
    export_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="litterkit transplanter")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    ws = _Workspace(dataset, Path(image_root))
    app.state.workspace = ws

    def matches_category(ann: Annotation, wanted: str) -> bool:
        cat = dataset.categories_by_id.get(ann.category_id)
        if cat is None:
            return False
        if wanted in (cat.name, cat.supercategory):
            return True
        return mapping is not None and mapping.entries.get(ann.category_id) == wanted

    def ann_row(ann: Annotation) -> dict:
        cat = dataset.categories_by_id.get(ann.category_id)
        return {
            "id": ann.id,
            "image_id": ann.image_id,
            "category_id": ann.category_id,
            "category": cat.name if cat else "",
            "supercategory": cat.supercategory if cat else "",
            "class": mapping.entries.get(ann.category_id) if mapping else None,
            "bbox": list(ann.bbox),
            "area": ann.area,
        }

    def run_transplant(req: TransplantRequest) -> tuple[np.ndarray, Annotation]:
        ann = ws.annotation(req.annotation_id)
        with ws.lock:
            src = ws.image(ann.image_id).copy()
            dst = ws.image(req.target_image_id).copy()
        try:
            placement = Placement(**req.placement.model_dump())
            return transplant_one(src, ann, dst, placement)
        except TransplantError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.get("/images")
    def list_images() -> list[dict]:
        return [
            {"id": i.id, "file_name": i.file_name, "width": i.width, "height": i.height}
            for i in dataset.images
        ]

    @app.get("/images/{image_id}/file")
    def image_file(image_id: int) -> Response:
        with ws.lock:
            pixels = ws.image(image_id).copy()
        return Response(content=png_bytes(pixels), media_type="image/png")

    @app.get("/annotations")
    def list_annotations(category: str | None = None) -> list[dict]:
        anns = list(dataset.annotations) + ws.committed
        if category:
            anns = [a for a in anns if matches_category(a, category)]
        return [ann_row(a) for a in anns]

    @app.get("/annotations/{ann_id}/crop")
    def annotation_crop(ann_id: int) -> Response:
        ann = ws.annotation(ann_id)
        with ws.lock:
            img = ws.image(ann.image_id).copy()
        h, w = img.shape[:2]
        mask = rasterize(ann.segmentation, w, h)
        x0, y0, x1, y1 = _crop_box(ann, w, h)
        rgba = np.dstack(
            [img[y0:y1, x0:x1], (mask[y0:y1, x0:x1] * 255).astype(np.uint8)]
        )
        return Response(content=png_bytes(rgba), media_type="image/png")

    @app.post("/preview")
    def preview(req: TransplantRequest) -> Response:
        out, _ann = run_transplant(req)
        return Response(content=png_bytes(out), media_type="image/png")

    @app.post("/commit")
    def commit(req: TransplantRequest) -> dict:
        out, new_ann = run_transplant(req)
        with ws.lock:
            ann_id = ws.next_ann_id
            ws.next_ann_id += 1
            stored = Annotation(
                id=ann_id,
                image_id=req.target_image_id,
                category_id=new_ann.category_id,
                segmentation=new_ann.segmentation,
                bbox=new_ann.bbox,
                area=new_ann.area,
            )
            ws.committed.append(stored)
            ws.pixels[req.target_image_id] = out
        return {"annotation_id": ann_id}

    @app.get("/export")
    def export() -> Response:
        with ws.lock:
            payload = serialize_dataset(ws.current_dataset())
            if export_dir is not None:
                out_dir = Path(export_dir)
                out_dir.mkdir(parents=True, exist_ok=True)
                (out_dir / "annotations.json").write_bytes(payload)
                for image_id, pixels in ws.pixels.items():
                    record = ws.dataset.images_by_id[image_id]
                    target = out_dir / record.file_name
                    target.parent.mkdir(parents=True, exist_ok=True)
                    save_png(target.with_suffix(".png"), pixels)
        return Response(
            content=payload,
            media_type="application/json",
            headers={"Content-Disposition": "attachment; filename=annotations.json"},
        )

    return app


def serve(
    dataset_path: str | Path,
    image_root: str | Path,
    port: int = 8731,
    host: str = "127.0.0.1",
    mapping: TaxonomyMapping | None = None,
    export_dir: str | Path | None = None,
) -> None:
    """Parse, validate and serve a dataset until interrupted."""
    import uvicorn

    from .dataset import parse_dataset, validate

    dataset = parse_dataset(Path(dataset_path).read_bytes())
    report = validate(dataset)
    if not report.ok:
        raise SystemExit(f"dataset does not validate:\n{report.summary()}")
    app = create_app(dataset, image_root, mapping=mapping, export_dir=export_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
