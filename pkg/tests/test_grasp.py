import math

import numpy as np
import pytest

from affground.gateway import BackendConfig, BackendUnreachableError
from affground.grasp import (
    CameraIntrinsics,
    DepthHoleError,
    GraspPose,
    InvalidDepthError,
    canonical_yaw,
    pixel_to_camera,
    plan_topdown_grasp,
    plan_via_external,
)
from affground.mockserver import MockScript
from affground.model import BinaryMask, DepthImage, EmptyMaskError

from conftest import angle_distance_mod_pi, rotated_rect_mask

K = CameraIntrinsics(fx=525.0, fy=525.0, cx=319.5, cy=239.5)


def flat_depth(meters=0.8, w=640, h=480) -> DepthImage:
    return DepthImage.from_array(np.full((h, w), meters))


def rect_mask(angle_deg: float, center=(319.5, 239.5)) -> BinaryMask:
    bits = rotated_rect_mask(
        40, 10, math.radians(angle_deg), canvas_w=640, canvas_h=480, center=center
    )
    return BinaryMask.from_array(bits)


def centroid_oracle(mask: BinaryMask) -> tuple[float, float]:
    us, vs = [], []
    for v in range(mask.height):
        for u in range(mask.width):
            if mask.bits[v, u]:
                us.append(u)
                vs.append(v)
    return sum(us) / len(us), sum(vs) / len(vs)


class TestPixelToCamera:
    def test_principal_point(self):
        assert pixel_to_camera(319.5, 239.5, 1.0, K) == (0.0, 0.0, 1.0)

    def test_plug_in_arithmetic(self):
        k = CameraIntrinsics(fx=500.0, fy=500.0, cx=0.0, cy=0.0)
        assert pixel_to_camera(500.0, 0.0, 2.0, k) == (2.0, 0.0, 2.0)

    def test_projection_roundtrip(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            u = float(rng.uniform(0, 640))
            v = float(rng.uniform(0, 480))
            z = float(rng.uniform(0.2, 3.0))
            x, y, depth = pixel_to_camera(u, v, z, K)
            assert K.fx * x / depth + K.cx == pytest.approx(u, abs=1e-9)
            assert K.fy * y / depth + K.cy == pytest.approx(v, abs=1e-9)

    def test_nonpositive_depth_rejected(self):
        with pytest.raises(InvalidDepthError):
            pixel_to_camera(1, 1, 0.0, K)


class TestCanonicalYaw:
    def test_half_pi_maps_to_negative_half_pi(self):
        assert canonical_yaw(math.pi / 2) == pytest.approx(-math.pi / 2)

    def test_range(self):
        for angle in np.linspace(-7, 7, 200):
            wrapped = canonical_yaw(float(angle))
            assert -math.pi / 2 <= wrapped < math.pi / 2
            # same undirected axis
            assert angle_distance_mod_pi(wrapped, float(angle)) < 1e-9


class TestPlanTopdownGrasp:
    @pytest.mark.parametrize("angle_deg", [0.0, 30.0, 75.0])
    def test_rectangle_yaw_and_position(self, angle_deg):
        mask = rect_mask(angle_deg)
        pose = plan_topdown_grasp(mask, flat_depth(), K)
        expected_yaw = canonical_yaw(math.radians(angle_deg) + math.pi / 2)
        assert angle_distance_mod_pi(pose.yaw, expected_yaw) < math.radians(2)
        cu, cv = centroid_oracle(mask)
        ex = (cu - K.cx) * 0.8 / K.fx
        ey = (cv - K.cy) * 0.8 / K.fy
        assert pose.position[0] == pytest.approx(ex, abs=1e-3)
        assert pose.position[1] == pytest.approx(ey, abs=1e-3)
        assert pose.position[2] == pytest.approx(0.8)
        assert pose.approach == (0.0, 0.0, -1.0)

    def test_axis_aligned_hits_boundary_convention(self):
        pose = plan_topdown_grasp(rect_mask(0.0), flat_depth(), K)
        assert pose.yaw == pytest.approx(-math.pi / 2)

    def test_degenerate_disk_yaw_zero(self):
        us, vs = np.meshgrid(np.arange(640), np.arange(480))
        bits = (us - 320.0) ** 2 + (vs - 240.0) ** 2 <= 15**2
        pose = plan_topdown_grasp(BinaryMask.from_array(bits), flat_depth(), K)
        assert pose.yaw == 0.0
        assert pose.degenerate

    def test_translation_equivariance(self):
        base = rect_mask(30.0, center=(200.0, 200.0))
        shifted = rect_mask(30.0, center=(260.0, 170.0))
        pose_a = plan_topdown_grasp(base, flat_depth(), K)
        pose_b = plan_topdown_grasp(shifted, flat_depth(), K)
        dx = pose_b.position[0] - pose_a.position[0]
        dy = pose_b.position[1] - pose_a.position[1]
        assert dx == pytest.approx(60 * 0.8 / K.fx, abs=1e-6)
        assert dy == pytest.approx(-30 * 0.8 / K.fy, abs=1e-6)
        assert pose_a.yaw == pytest.approx(pose_b.yaw, abs=math.radians(0.5))

    def test_yaw_invariant_under_uniform_scaling(self):
        small = BinaryMask.from_array(
            rotated_rect_mask(30, 8, math.radians(40), 640, 480)
        )
        large = BinaryMask.from_array(
            rotated_rect_mask(90, 24, math.radians(40), 640, 480)
        )
        pose_s = plan_topdown_grasp(small, flat_depth(), K)
        pose_l = plan_topdown_grasp(large, flat_depth(), K)
        assert angle_distance_mod_pi(pose_s.yaw, pose_l.yaw) < math.radians(2)

    def test_grasp_point_inside_mask_bbox(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            angle = float(rng.uniform(0, math.pi))
            center = (float(rng.uniform(100, 540)), float(rng.uniform(100, 380)))
            mask = BinaryMask.from_array(
                rotated_rect_mask(50, 14, angle, 640, 480, center=center)
            )
            pose = plan_topdown_grasp(mask, flat_depth(), K)
            vs, us = np.nonzero(mask.bits)
            u = pose.position[0] * K.fx / pose.position[2] + K.cx
            v = pose.position[1] * K.fy / pose.position[2] + K.cy
            assert us.min() <= u <= us.max()
            assert vs.min() <= v <= vs.max()

    def test_median_depth_resists_holes(self):
        mask = rect_mask(0.0)
        depth_arr = np.full((480, 640), 0.8)
        depth_arr[238:241, 318:321] = 0.0  # dropout right at the centroid
        pose = plan_topdown_grasp(mask, DepthImage.from_array(depth_arr), K)
        assert pose.position[2] == pytest.approx(0.8)

    def test_depth_hole_error(self):
        mask = rect_mask(0.0)
        depth_arr = np.full((480, 640), 0.8)
        depth_arr[236:244, 316:324] = 0.0  # hole swallows the 5x5 window
        with pytest.raises(DepthHoleError):
            plan_topdown_grasp(mask, DepthImage.from_array(depth_arr), K)

    def test_tiny_mask_rejected(self):
        bits = np.zeros((480, 640), bool)
        bits[0, :5] = True
        with pytest.raises(EmptyMaskError):
            plan_topdown_grasp(BinaryMask.from_array(bits), flat_depth(), K)


class TestPlanViaExternal:
    def planner_script(self, approach=(0.3, 0.1, -0.9), axis_angle=math.radians(45)):
        return MockScript(
            images={},
            plan_grasp={
                "position": [0.05, -0.02, 0.6],
                "approach": list(approach),
                "axis_angle": axis_angle,
                "quality": 0.83,
            },
        )

    def test_tilted_approach_forced_topdown(self, serve_script):
        handle = serve_script(self.planner_script())
        pose = plan_via_external(
            rect_mask(0.0), flat_depth(), K, handle.url + "/v1/plan_grasp",
            config=BackendConfig(detect_url="", segment_url="", chat_url="",
                                 retry_backoff_base=0.01),
        )
        assert pose.approach == (0.0, 0.0, -1.0)
        assert pose.position == (0.05, -0.02, 0.6)
        assert pose.quality == pytest.approx(0.83)

    def test_in_plane_axis_passthrough(self, serve_script):
        handle = serve_script(self.planner_script(axis_angle=math.radians(45)))
        pose = plan_via_external(
            rect_mask(0.0), flat_depth(), K, handle.url + "/v1/plan_grasp",
            config=BackendConfig(detect_url="", segment_url="", chat_url="",
                                 retry_backoff_base=0.01),
        )
        assert pose.yaw == pytest.approx(math.radians(45))

    def test_unreachable_falls_back_when_enabled(self):
        cfg = BackendConfig(detect_url="", segment_url="", chat_url="",
                            max_retries=0, retry_backoff_base=0.01, request_timeout=0.5)
        pose = plan_via_external(
            rect_mask(0.0), flat_depth(), K, "http://127.0.0.1:1/v1/plan_grasp",
            config=cfg, fallback=True,
        )
        assert pose.yaw == pytest.approx(-math.pi / 2)  # built-in planner result

    def test_unreachable_raises_without_fallback(self):
        cfg = BackendConfig(detect_url="", segment_url="", chat_url="",
                            max_retries=0, retry_backoff_base=0.01, request_timeout=0.5)
        with pytest.raises(BackendUnreachableError):
            plan_via_external(
                rect_mask(0.0), flat_depth(), K, "http://127.0.0.1:1/v1/plan_grasp",
                config=cfg,
            )


class TestGraspPoseInvariants:
    def test_nonpositive_z_rejected(self):
        with pytest.raises(ValueError):
            GraspPose(position=(0, 0, 0.0), yaw=0.0)

    def test_yaw_range_enforced(self):
        with pytest.raises(ValueError):
            GraspPose(position=(0, 0, 1.0), yaw=math.pi / 2)
