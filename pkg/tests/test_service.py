from __future__ import annotations

import io

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from litterkit.dataset import parse_dataset, validate
from litterkit.imageio import load_image
from litterkit.masks import Rle
from litterkit.service import create_app
from litterkit.taxonomy import build_top_k_mapping
from litterkit.transplant import Placement, transplant_one

from .conftest import write_dataset_with_images


@pytest.fixture
def served(small_dataset, tmp_path):
    root = tmp_path / "data"
    write_dataset_with_images(small_dataset, root)
    mapping = build_top_k_mapping(small_dataset, 2, "Other")
    app = create_app(small_dataset, root, mapping=mapping)
    return small_dataset, root, TestClient(app)


def png_to_array(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


IDENTITY_REQUEST = {
    "annotation_id": 1,
    "target_image_id": 1,
    "placement": {"x": 4, "y": 4, "scale": 1.0, "rotation": 0.0, "soft": False, "radius": 3.0},
}


class TestReads:
    def test_list_images(self, served):
        dataset, _, client = served
        rows = client.get("/images").json()
        assert [r["id"] for r in rows] == [img.id for img in dataset.images]

    def test_image_file_roundtrip(self, served):
        _, root, client = served
        resp = client.get("/images/1/file")
        assert resp.status_code == 200
        assert np.array_equal(png_to_array(resp.content), load_image(root / "img_000001.png"))

    def test_unknown_image_404(self, served):
        _, _, client = served
        assert client.get("/images/99/file").status_code == 404

    def test_annotation_filter_by_class(self, served):
        _, _, client = served
        rows = client.get("/annotations", params={"category": "Can"}).json()
        assert [r["id"] for r in rows] == [2]
        all_rows = client.get("/annotations").json()
        assert len(all_rows) == 3

    def test_unknown_class_empty(self, served):
        _, _, client = served
        assert client.get("/annotations", params={"category": "Spaceship"}).json() == []

    def test_crop_has_alpha_mask(self, served):
        _, _, client = served
        resp = client.get("/annotations/1/crop")
        assert resp.status_code == 200
        with Image.open(io.BytesIO(resp.content)) as im:
            assert im.mode == "RGBA"
            alpha = np.asarray(im)[:, :, 3]
        assert set(np.unique(alpha)) == {0, 255} or set(np.unique(alpha)) == {255}


class TestPreview:
    def test_identity_hard_preview_equals_source_crop(self, served, small_dataset):
        _, root, client = served
        resp = client.post("/preview", json=IDENTITY_REQUEST)
        assert resp.status_code == 200
        out = png_to_array(resp.content)
        src = load_image(root / "img_000001.png")
        x, y, w, h = (int(v) for v in small_dataset.annotations[0].bbox)
        assert np.array_equal(out[y : y + h, x : x + w], src[y : y + h, x : x + w])

    def test_preview_is_pure_and_stateless(self, served):
        _, _, client = served
        first = client.post("/preview", json=IDENTITY_REQUEST).content
        for _ in range(9):
            assert client.post("/preview", json=IDENTITY_REQUEST).content == first
        exported = parse_dataset(client.get("/export").content)
        assert len(exported.annotations) == 3  # previews never commit

    def test_preview_matches_library_blend(self, served, small_dataset):
        _, root, client = served
        request = {
            "annotation_id": 1,
            "target_image_id": 2,
            "placement": {"x": 10, "y": 6, "scale": 1.25, "rotation": 20.0, "soft": True, "radius": 3.0},
        }
        resp = client.post("/preview", json=request)
        assert resp.status_code == 200
        src = load_image(root / "img_000001.png")
        dst = load_image(root / "img_000002.png")
        expected, _ = transplant_one(
            src, small_dataset.annotations[0], dst,
            Placement(x=10, y=6, scale=1.25, rotation=20.0, soft=True, radius=3.0),
        )
        assert np.array_equal(png_to_array(resp.content), expected)

    def test_off_target_placement_rejected(self, served):
        _, _, client = served
        bad = dict(IDENTITY_REQUEST, placement=dict(IDENTITY_REQUEST["placement"], x=-500))
        assert client.post("/preview", json=bad).status_code == 400

    def test_soft_toggle_differs_only_in_boundary_band(self, served, small_dataset):
        # the soft/hard previews may differ only where the feathered alpha
        # is below 1: the ring within `radius` of the mask boundary.
        # annotation 3 has background inside its bbox, so a real silhouette
        # exists (a bbox-filling rectangle would feather nowhere)
        _, root, client = served
        radius = 3.0
        soft_req = {
            "annotation_id": 3,
            "target_image_id": 2,
            "placement": {"x": 2, "y": 4, "scale": 1.0, "rotation": 0.0, "soft": True, "radius": radius},
        }
        hard_req = dict(soft_req, placement=dict(soft_req["placement"], soft=False))
        soft_img = png_to_array(client.post("/preview", json=soft_req).content)
        hard_img = png_to_array(client.post("/preview", json=hard_req).content)
        differs = (soft_img != hard_img).any(axis=2)

        from litterkit.masks import distance_transform
        from litterkit.transplant import transform_object

        src = load_image(root / "img_000002.png")
        _, mask = transform_object(src, small_dataset.annotations[2], 1.0, 0.0)
        band = np.zeros(soft_img.shape[:2], dtype=bool)
        dt = distance_transform(mask)
        ring = (dt > 0) & (dt < radius)
        band[4 : 4 + ring.shape[0], 2 : 2 + ring.shape[1]] = ring
        assert differs.any()
        assert not (differs & ~band).any()


class TestCommitExport:
    def test_commit_then_export_validates(self, served, small_dataset):
        _, root, client = served
        resp = client.post("/commit", json=IDENTITY_REQUEST)
        assert resp.status_code == 200
        new_id = resp.json()["annotation_id"]
        assert new_id == 4

        exported = parse_dataset(client.get("/export").content)
        assert len(exported.annotations) == 4
        assert validate(exported).ok

        # committed RLE must equal the library transplant output bit-exactly
        src = load_image(root / "img_000001.png")
        _, expected_ann = transplant_one(
            src, small_dataset.annotations[0], src.copy(),
            Placement(x=4, y=4, scale=1.0, rotation=0.0, soft=False),
        )
        committed = next(a for a in exported.annotations if a.id == new_id)
        assert isinstance(committed.segmentation, Rle)
        assert committed.segmentation == expected_ann.segmentation
        assert committed.bbox == expected_ann.bbox

    def test_two_commits_distinct_ids(self, served):
        _, _, client = served
        first = client.post("/commit", json=IDENTITY_REQUEST).json()["annotation_id"]
        second = client.post("/commit", json=IDENTITY_REQUEST).json()["annotation_id"]
        assert second == first + 1

    def test_commit_updates_working_image(self, served):
        _, _, client = served
        request = {
            "annotation_id": 1,
            "target_image_id": 2,
            "placement": {"x": 5, "y": 5, "scale": 1.0, "rotation": 0.0, "soft": False, "radius": 3.0},
        }
        before = client.get("/images/2/file").content
        client.post("/commit", json=request)
        after = client.get("/images/2/file").content
        assert before != after

    def test_export_without_commits_equals_original(self, served, small_dataset):
        _, _, client = served
        exported = parse_dataset(client.get("/export").content)
        assert exported == small_dataset
