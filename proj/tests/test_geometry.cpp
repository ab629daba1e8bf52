// Copyright (C) 2026 Orthovox Contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "orthovox/geometry.hpp"
#include "orthovox/synth.hpp"

namespace {

using namespace ovx;

TEST(Vec3, Arithmetic) {
    Vec3 a{1, 2, 3}, b{4, -1, 0.5};
    EXPECT_DOUBLE_EQ((a + b).x, 5.0);
    EXPECT_DOUBLE_EQ((a - b).y, 3.0);
    EXPECT_DOUBLE_EQ((a * 2.0).z, 6.0);
    EXPECT_DOUBLE_EQ(a.dot(b), 3.5);
    const Vec3 c = a.cross(b);
    EXPECT_NEAR(c.dot(a), 0.0, 1e-12);
    EXPECT_NEAR(c.dot(b), 0.0, 1e-12);
    EXPECT_NEAR((Vec3{3, 4, 0}.norm()), 5.0, 1e-12);
}

TEST(Mat3, Multiply) {
    Mat3 r = Mat3::from_rows({0, 1, 0}, {-1, 0, 0}, {0, 0, 1});
    EXPECT_TRUE(is_orthonormal(r));
    const Vec3 v = r * Vec3{1, 0, 0};
    EXPECT_DOUBLE_EQ(v.x, 0.0);
    EXPECT_DOUBLE_EQ(v.y, -1.0);
    const Mat3 rt = r.transposed() * r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) EXPECT_NEAR(rt(i, j), i == j ? 1.0 : 0.0, 1e-15);
}

TEST(Camera, ValidateRejectsBadFocal) {
    Camera cam;
    cam.id = "c0";
    cam.fx = -1.0;
    cam.fy = 1.0;
    cam.width = 10;
    cam.height = 10;
    EXPECT_THROW(cam.validate(), std::invalid_argument);
}

TEST(Camera, BehindCameraFlagged) {
    SceneConfig cfg;
    const auto cams = make_camera_ring(cfg);
    ASSERT_FALSE(cams.empty());
    // A point far behind the first camera: mirror the scene center through it.
    const Camera& cam = cams[0];
    const Vec3 center{cfg.space.origin.x + cfg.space.extent.x / 2, cfg.space.origin.y + cfg.space.extent.y / 2,
                      1000.0};
    const Vec3 cam_pos = cam.R.transposed() * (cam.t * -1.0);
    const Vec3 behind = cam_pos + (cam_pos - center);
    EXPECT_TRUE(project_point(cam, behind).behind);
    EXPECT_FALSE(project_point(cam, center).behind);
}

TEST(CameraRing, LooksAtSceneCenter) {
    SceneConfig cfg;
    const auto cams = make_camera_ring(cfg);
    EXPECT_EQ(static_cast<int>(cams.size()), cfg.camera_count);
    const Vec3 target{cfg.space.origin.x + cfg.space.extent.x / 2, cfg.space.origin.y + cfg.space.extent.y / 2,
                      cfg.lookat_height_mm};
    for (const auto& cam : cams) {
        cam.validate();
        const Projection pr = project_point(cam, target);
        ASSERT_FALSE(pr.behind);
        EXPECT_NEAR(pr.pixel.x, cam.cx, 1e-6);
        EXPECT_NEAR(pr.pixel.y, cam.cy, 1e-6);
    }
}

// Criterion-style property: project, then invert through the stored pose, and
// recover the world point. 200 random cases across random ring geometries.
TEST(ProjectionProperty, RoundTripRecoversWorldPoint) {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    int checked = 0;
    for (int rep = 0; rep < 40; ++rep) {
        SceneConfig cfg;
        cfg.camera_count = 3 + static_cast<int>(u01(rng) * 9);
        cfg.ring_radius_mm = 3000.0 + u01(rng) * 4000.0;
        cfg.ring_height_mm = 1500.0 + u01(rng) * 2000.0;
        const auto cams = make_camera_ring(cfg);
        for (int pt = 0; pt < 5; ++pt) {
            const Vec3 world{cfg.space.origin.x + u01(rng) * cfg.space.extent.x,
                             cfg.space.origin.y + u01(rng) * cfg.space.extent.y, u01(rng) * cfg.space.extent.z};
            for (const auto& cam : cams) {
                const Projection pr = project_point(cam, world);
                if (pr.behind) continue;
                // Invert: pixel + depth -> camera frame -> world frame.
                const Vec3 pc{(pr.pixel.x - cam.cx) / cam.fx * pr.depth, (pr.pixel.y - cam.cy) / cam.fy * pr.depth,
                              pr.depth};
                const Vec3 back = cam.R.transposed() * (pc - cam.t);
                EXPECT_NEAR(back.x, world.x, 1e-6);
                EXPECT_NEAR(back.y, world.y, 1e-6);
                EXPECT_NEAR(back.z, world.z, 1e-6);
                ++checked;
            }
        }
    }
    EXPECT_GE(checked, 100);
}

TEST(VoxelSpace, CellCentersAndGridTransform) {
    VoxelSpace s;
    s.origin = {100, -200, 0};
    s.extent = {800, 400, 200};
    s.res = {8, 4, 2};
    s.validate();
    const Vec3 cell = s.cell_size();
    EXPECT_DOUBLE_EQ(cell.x, 100.0);
    EXPECT_DOUBLE_EQ(cell.y, 100.0);
    EXPECT_DOUBLE_EQ(cell.z, 100.0);
    const Vec3 c = s.voxel_center(0, 0, 0);
    EXPECT_DOUBLE_EQ(c.x, 150.0);
    EXPECT_DOUBLE_EQ(c.y, -150.0);
    EXPECT_DOUBLE_EQ(c.z, 50.0);
    // world_to_grid is the exact inverse of voxel_center up to the +0.5.
    const Vec3 g = s.world_to_grid(c);
    EXPECT_DOUBLE_EQ(g.x, 0.5);
    EXPECT_DOUBLE_EQ(g.y, 0.5);
    EXPECT_DOUBLE_EQ(g.z, 0.5);
    EXPECT_TRUE(s.contains({500, -100, 100}));
    EXPECT_FALSE(s.contains({1000, -100, 100}));
    EXPECT_TRUE(s.index_in_range(7, 3, 1));
    EXPECT_FALSE(s.index_in_range(8, 0, 0));
}

TEST(VoxelSpace, GridRoundTripProperty) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    VoxelSpace s = default_motion_space();
    for (int i = 0; i < 200; ++i) {
        const Vec3 p{s.origin.x + u01(rng) * s.extent.x, s.origin.y + u01(rng) * s.extent.y,
                     s.origin.z + u01(rng) * s.extent.z};
        const Vec3 g = s.world_to_grid(p);
        const Vec3 cell = s.cell_size();
        EXPECT_NEAR(s.origin.x + g.x * cell.x, p.x, 1e-9);
        EXPECT_NEAR(s.origin.y + g.y * cell.y, p.y, 1e-9);
        EXPECT_NEAR(s.origin.z + g.z * cell.z, p.z, 1e-9);
    }
}

TEST(Skeleton, Cmu15Definition) {
    const SkeletonDef& sk = cmu15();
    EXPECT_EQ(sk.joint_count, 15);
    EXPECT_EQ(static_cast<int>(sk.joint_names.size()), 15);
    EXPECT_EQ(static_cast<int>(sk.limbs.size()), 14);
    sk.validate();
    for (const auto& [a, b] : sk.limbs) {
        EXPECT_GE(a, 0);
        EXPECT_LT(a, 15);
        EXPECT_GE(b, 0);
        EXPECT_LT(b, 15);
        EXPECT_NE(a, b);
    }
}

TEST(RectXY, IouAndContain) {
    const RectXY a = RectXY::from_center_size({0, 0}, {2, 2});
    const RectXY b = RectXY::from_center_size({1, 0}, {2, 2});
    EXPECT_NEAR(rect_iou(a, b), 2.0 / 6.0, 1e-12);
    EXPECT_NEAR(rect_iou(a, a), 1.0, 1e-12);
    const RectXY far = RectXY::from_center_size({10, 10}, {1, 1});
    EXPECT_DOUBLE_EQ(rect_iou(a, far), 0.0);
    EXPECT_TRUE(a.contains(0.9, -0.9));
    EXPECT_FALSE(a.contains(1.1, 0.0));
    EXPECT_TRUE(a.intersects(b));
    EXPECT_FALSE(a.intersects(far));
}

TEST(PoseBbox, MarginAndValidity) {
    PoseSkeleton pose(3);
    pose.joints = {{0, 0, 100}, {200, 400, 100}, {100, 100, 100}};
    const RectXY r = pose_bbox_xy(pose, 50.0);
    EXPECT_DOUBLE_EQ(r.x0, -50.0);
    EXPECT_DOUBLE_EQ(r.x1, 250.0);
    EXPECT_DOUBLE_EQ(r.y0, -50.0);
    EXPECT_DOUBLE_EQ(r.y1, 450.0);
    pose.valid = {1, 0, 1};
    const RectXY r2 = pose_bbox_xy(pose, 0.0);
    EXPECT_DOUBLE_EQ(r2.x1, 100.0);
    PoseSkeleton none(2);
    none.valid = {0, 0};
    EXPECT_THROW(pose_bbox_xy(none, 0.0), std::invalid_argument);
}

}  // namespace
