import numpy as np
import pytest

from carvepipe import (
    CameraPose,
    DepthMap,
    MaskImage,
    NormalMap,
    RgbImage,
    ViewRecord,
    append,
    init_dataset,
    load,
    save,
)
from carvepipe.errors import DatasetError
from carvepipe import imgio


def make_record(index, azimuth, size=24, rng=None):
    rng = rng or np.random.default_rng(index)
    mask = (rng.random((size, size)) < 0.5).astype(np.uint8)
    depth = rng.uniform(1.0, 4.0, (size, size)).astype(np.float32)
    depth[mask == 0] = np.inf
    normal = rng.normal(size=(size, size, 3))
    normal /= np.linalg.norm(normal, axis=2, keepdims=True)
    normal[mask == 0] = 0.0
    color = rng.integers(0, 256, (size, size, 3), dtype=np.uint8)
    pose = CameraPose(90, azimuth) if index else CameraPose(90, 0)
    return ViewRecord(
        color=RgbImage(color),
        depth=DepthMap(depth),
        normal=NormalMap(normal.astype(np.float32)),
        mask=MaskImage(mask),
        pose=pose,
        view_index=index,
    )


class TestViewRecord:
    def test_mismatched_raster_sizes_rejected(self):
        rec = make_record(0, 0)
        with pytest.raises(ValueError):
            ViewRecord(color=rec.color, depth=rec.depth, normal=rec.normal,
                       mask=MaskImage(np.zeros((12, 12), np.uint8)),
                       pose=rec.pose, view_index=0)

    def test_depth_sentinel_enforced_outside_mask(self):
        rec = make_record(0, 0)
        bad_depth = np.array(rec.depth.data)
        bg = np.nonzero(rec.mask.data == 0)
        bad_depth[bg[0][0], bg[1][0]] = 2.0
        with pytest.raises(ValueError):
            ViewRecord(color=rec.color, depth=DepthMap(bad_depth),
                       normal=rec.normal, mask=rec.mask,
                       pose=rec.pose, view_index=0)


class TestInitDataset:
    def test_valid(self):
        ds = init_dataset(make_record(0, 0), "sks", "sphere")
        assert len(ds) == 1 and ds[0].view_index == 0

    def test_wrong_initial_pose_rejected(self):
        rec = make_record(0, 0)
        tilted = ViewRecord(color=rec.color, depth=rec.depth, normal=rec.normal,
                            mask=rec.mask, pose=CameraPose(45, 0), view_index=0)
        with pytest.raises(ValueError):
            init_dataset(tilted, "sks", "sphere")

    def test_nonzero_index_rejected(self):
        rec = make_record(1, 45)
        with pytest.raises(ValueError):
            init_dataset(rec, "sks", "sphere")


class TestAppend:
    def test_grows_by_one(self):
        ds = init_dataset(make_record(0, 0), "sks", "sphere")
        ds2 = append(ds, make_record(1, 45))
        assert len(ds2) == 2
        assert len(ds) == 1  # original untouched

    def test_index_gap_rejected(self):
        ds = init_dataset(make_record(0, 0), "sks", "sphere")
        with pytest.raises(ValueError):
            append(ds, make_record(2, 45))

    def test_duplicate_pose_rejected(self):
        ds = init_dataset(make_record(0, 0), "sks", "sphere")
        rec = make_record(1, 45)
        dup = ViewRecord(color=rec.color, depth=rec.depth, normal=rec.normal,
                         mask=rec.mask, pose=CameraPose(90, 0), view_index=1)
        with pytest.raises(ValueError):
            append(ds, dup)

    def test_full_schedule_run_gives_eight(self):
        from carvepipe import default_schedule
        ds = init_dataset(make_record(0, 0), "sks", "sphere")
        for i, pose in enumerate(default_schedule().poses[1:], start=1):
            ds = append(ds, make_record(i, pose.azimuth_deg))
        assert len(ds) == 8
        assert ds.poses == default_schedule().poses


class TestSaveLoad:
    def test_round_trip_bit_exact(self, tmp_path):
        ds = init_dataset(make_record(0, 0), "sks", "sphere")
        ds = append(ds, make_record(1, 45))
        ds = append(ds, make_record(2, -45))
        save(ds, tmp_path)
        back = load(tmp_path)
        assert back.object_tag == "sks" and back.class_word == "sphere"
        assert len(back) == 3
        for a, b in zip(ds.records, back.records):
            assert a.pose == b.pose
            np.testing.assert_array_equal(a.color.data, b.color.data)
            np.testing.assert_array_equal(a.depth.data, b.depth.data)
            np.testing.assert_array_equal(a.normal.data, b.normal.data)
            np.testing.assert_array_equal(a.mask.data, b.mask.data)

    def test_random_rasters_round_trip(self, tmp_path, rng):
        for trial in range(3):
            ds = init_dataset(make_record(0, 0, size=8 + 4 * trial, rng=rng),
                              f"tag{trial}", "thing")
            d = tmp_path / f"t{trial}"
            save(ds, d)
            back = load(d)
            np.testing.assert_array_equal(ds[0].depth.data, back[0].depth.data)
            np.testing.assert_array_equal(ds[0].normal.data, back[0].normal.data)

    def test_corrupted_depth_names_view(self, tmp_path):
        ds = init_dataset(make_record(0, 0), "sks", "sphere")
        ds = append(ds, make_record(1, 45))
        save(ds, tmp_path)
        target = tmp_path / "view_001" / "depth.cpd"
        raw = bytearray(target.read_bytes())
        raw[20] ^= 0xFF
        target.write_bytes(bytes(raw))
        with pytest.raises(DatasetError, match="view 1"):
            load(tmp_path)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DatasetError, match="manifest"):
            load(tmp_path / "nope")

    def test_manifest_lists_views(self, tmp_path):
        import json
        ds = init_dataset(make_record(0, 0), "sks", "sphere")
        save(ds, tmp_path)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert len(manifest["views"]) == 1
        assert manifest["views"][0]["pose"]["polar_deg"] == 90.0


class TestImgIo:
    def test_depth_format_round_trip(self, tmp_path):
        d = np.full((5, 7), np.inf, np.float32)
        d[2, 3] = 2.25
        path = tmp_path / "d.cpd"
        imgio.write_depth_cpd(DepthMap(d), path)
        assert path.read_bytes()[:4] == b"CPD1"
        back = imgio.read_depth_cpd(path)
        np.testing.assert_array_equal(back.data, d)

    def test_normal_format_round_trip(self, tmp_path):
        n = np.zeros((4, 6, 3), np.float32)
        n[1, 2] = [0, 0, 1]
        path = tmp_path / "n.cpn"
        imgio.write_normal_cpn(NormalMap(n), path)
        np.testing.assert_array_equal(imgio.read_normal_cpn(path).data, n)

    def test_mask_png_strictness(self, tmp_path):
        from PIL import Image
        path = tmp_path / "grey.png"
        Image.fromarray(np.full((4, 4), 128, np.uint8), mode="L").save(path)
        with pytest.raises(ValueError, match="0 and 255"):
            imgio.read_mask_png(path)

    def test_scene_json_round_trip(self, tmp_path):
        from carvepipe import Box, SdfScene, Sphere
        from carvepipe.imgio import load_scene, save_scene
        scene = SdfScene([Sphere((0.1, 0, 0), 0.3, (10, 20, 30)),
                          Box((0, -0.2, 0), (0.1, 0.2, 0.3), (7, 8, 9))])
        path = tmp_path / "scene.json"
        save_scene(scene, path)
        back = load_scene(path)
        assert back.primitives == scene.primitives
