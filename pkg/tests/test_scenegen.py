import numpy as np
import pytest

from panosynth.scenegen import (BACKGROUND_ID, Billboard, CameraPose, SceneSpec,
                                build_scene, default_locations, emit_dataset,
                                project_point, render_view)


class TestBuildScene:
    def test_deterministic_from_seed(self):
        assert build_scene(7, 2) == build_scene(7, 2)
        assert build_scene(7, 2) != build_scene(8, 2)

    def test_complexity_one_gives_six_billboards(self):
        assert len(build_scene(0, 1).billboards) == 6

    def test_complexity_scales_count(self):
        assert len(build_scene(0, 3).billboards) == 18

    def test_depth_range(self):
        for bb in build_scene(123, 4).billboards:
            d = np.hypot(bb.center[0], bb.center[2])
            assert 5.0 <= d <= 30.0

    def test_every_sector_occupied(self):
        scene = build_scene(5, 1)
        sectors = set()
        for bb in scene.billboards:
            az = np.degrees(np.arctan2(bb.center[0], bb.center[2])) % 360
            sectors.add(int(az // 60))
        assert sectors == set(range(6))

    def test_unique_positive_ids(self):
        scene = build_scene(9, 2)
        ids = [bb.object_id for bb in scene.billboards]
        assert len(set(ids)) == len(ids)
        assert min(ids) > 0

    def test_invalid_complexity(self):
        with pytest.raises(ValueError):
            build_scene(0, 0)


class TestRenderView:
    def test_empty_scene_is_background_and_ground(self):
        scene = SceneSpec(seed=0, billboards=())
        rgb, seg = render_view(scene, CameraPose(), 32, 24)
        assert rgb.shape == (3, 24, 32)
        assert seg.shape == (1, 24, 32)
        np.testing.assert_array_equal(np.unique(seg), [BACKGROUND_ID])
        # top rows are sky, bottom rows are ground
        np.testing.assert_allclose(rgb[:, 0, 0], scene.background_color)
        np.testing.assert_allclose(rgb[:, -1, 0], scene.ground_color)

    def test_center_projection_oracle(self):
        # pinhole algebra: a point straight ahead lands on the image center
        u, v, depth = project_point(CameraPose(position=(0, 0, 0), yaw_deg=0),
                                    (0, 0, 10), 64, 48)
        assert (int(u), int(v)) == (32, 24)
        assert depth == 10.0
        bb = Billboard(center=(0.0, 0.0, 10.0), width=2.0, height=2.0,
                       object_id=1, color=(1.0, 0.0, 0.0), pattern="solid")
        scene = SceneSpec(seed=0, billboards=(bb,))
        rgb, seg = render_view(scene, CameraPose(position=(0, 0, 0)), 64, 48)
        assert seg[0, 24, 32] == 1
        cols = np.where(seg[0, 24] == 1)[0]
        assert cols.min() < 32 < cols.max()
        assert np.array_equal(cols, np.arange(cols.min(), cols.max() + 1))

    def test_zbuffer_occlusion(self):
        near = Billboard(center=(0.0, 0.0, 8.0), width=4.0, height=4.0,
                         object_id=1, color=(1.0, 0, 0), pattern="solid")
        far = Billboard(center=(0.0, 0.0, 20.0), width=4.0, height=4.0,
                        object_id=2, color=(0, 1.0, 0), pattern="solid")
        scene = SceneSpec(seed=0, billboards=(near, far))
        _, seg = render_view(scene, CameraPose(position=(0, 0, 0)), 64, 48)
        # the far board subtends a subset of the near board's pixels: hidden
        assert 1 in seg
        assert 2 not in seg

    def test_seg_ids_subset_of_scene_ids(self):
        scene = build_scene(3, 2)
        ids = {bb.object_id for bb in scene.billboards} | {BACKGROUND_ID}
        for yaw in (0, 90, 200):
            _, seg = render_view(scene, CameraPose(yaw_deg=yaw), 64, 48)
            assert set(np.unique(seg)).issubset(ids)

    def test_rotation_consistency_pixel_shift(self):
        # pure rotation shifts image content by ~fx*tan(step) in the center band
        scene = build_scene(21, 3)
        w, h = 64, 48
        pose0 = CameraPose(position=(0, 1.6, 0), yaw_deg=40)
        pose5 = CameraPose(position=(0, 1.6, 0), yaw_deg=45)
        a, _ = render_view(scene, pose0, w, h)
        b, _ = render_view(scene, pose5, w, h)
        band_a = a[:, 18:30, :].mean(axis=(0, 1))
        band_b = b[:, 18:30, :].mean(axis=(0, 1))
        band_a -= band_a.mean()
        band_b -= band_b.mean()
        fx = (w / 2) / np.tan(np.deg2rad(30))
        expected = fx * np.tan(np.deg2rad(5))
        best, best_score = None, -np.inf
        for shift in range(0, 12):
            # content moves left when the camera turns right
            ov_a, ov_b = band_a[shift:], band_b[:len(band_b) - shift]
            score = np.dot(ov_a, ov_b) / (np.linalg.norm(ov_a) * np.linalg.norm(ov_b) + 1e-9)
            if score > best_score:
                best, best_score = shift, score
        assert abs(best - expected) <= 1.0

    def test_camera_move_produces_parallax(self):
        near = Billboard(center=(0.0, 1.0, 6.0), width=2.0, height=2.0,
                         object_id=1, color=(1, 0, 0), pattern="solid")
        far = Billboard(center=(7.0, 1.0, 25.0), width=3.0, height=3.0,
                        object_id=2, color=(0, 1, 0), pattern="solid")
        scene = SceneSpec(seed=0, billboards=(near, far))

        def centroid_col(seg, oid):
            ys, xs = np.where(seg[0] == oid)
            return xs.mean()

        _, seg_a = render_view(scene, CameraPose(position=(-0.5, 1.0, 0)), 96, 64)
        _, seg_b = render_view(scene, CameraPose(position=(0.5, 1.0, 0)), 96, 64)
        shift_near = centroid_col(seg_a, 1) - centroid_col(seg_b, 1)
        shift_far = centroid_col(seg_a, 2) - centroid_col(seg_b, 2)
        assert abs(shift_near) > abs(shift_far)


class TestEmitDataset:
    def test_lab_layout_file_count(self, tmp_path):
        scene = build_scene(0, 1)
        manifest = emit_dataset(scene, default_locations(4), 5, 32, 24, tmp_path / "d")
        rgbs = list((tmp_path / "d").glob("loc*/yaw[0-9][0-9][0-9].png"))
        segs = list((tmp_path / "d").glob("loc*/yaw[0-9][0-9][0-9]_seg.png"))
        assert len(rgbs) == 288
        assert len(segs) == 288
        assert len(manifest.records) == 288
        assert manifest.views_per_location() == 72

    def test_single_location_coarse_step(self, tmp_path):
        scene = build_scene(1, 1)
        manifest = emit_dataset(scene, [(0, 1.6, 0)], 60, 32, 24, tmp_path / "d")
        assert len(manifest.records) == 6

    def test_reemission_bytewise_identical(self, tmp_path):
        scene = build_scene(2, 1)
        locs = default_locations(2)
        emit_dataset(scene, locs, 30, 32, 24, tmp_path / "a")
        emit_dataset(scene, locs, 30, 32, 24, tmp_path / "b")
        files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel

    def test_manifest_paths_exist(self, tmp_path):
        scene = build_scene(3, 1)
        manifest = emit_dataset(scene, default_locations(1), 45, 32, 24, tmp_path / "d")
        for rec in manifest.records:
            assert (tmp_path / "d" / rec["rgb"]).is_file()
            assert (tmp_path / "d" / rec["seg"]).is_file()

    def test_bad_step_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_dataset(build_scene(0, 1), [(0, 1.6, 0)], 7, 32, 24, tmp_path / "d")
