// Copyright (C) 2026 Orthovox Contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "orthovox/synth.hpp"
#include "testlib.hpp"

namespace {

using namespace ovx;

double dist(const Vec3& a, const Vec3& b) {
    const Vec3 d = a - b;
    return std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z);
}

TEST(SampleScene, SameSeedIsBitExact) {
    SceneConfig cfg;
    cfg.joint_dropout = 0.3;  // exercise the stochastic path too
    cfg.pixel_jitter_px = 0.5;
    const auto cameras = make_camera_ring(cfg);
    const Frame a = sample_scene(cfg, cameras, 123, 7);
    const Frame b = sample_scene(cfg, cameras, 123, 7);
    ASSERT_EQ(a.poses.size(), b.poses.size());
    for (std::size_t p = 0; p < a.poses.size(); ++p)
        for (int k = 0; k < 15; ++k) {
            EXPECT_EQ(a.poses[p].joints[k].x, b.poses[p].joints[k].x);
            EXPECT_EQ(a.poses[p].joints[k].y, b.poses[p].joints[k].y);
            EXPECT_EQ(a.poses[p].joints[k].z, b.poses[p].joints[k].z);
        }
    ASSERT_EQ(a.heatmaps.size(), b.heatmaps.size());
    for (std::size_t c = 0; c < a.heatmaps.size(); ++c) EXPECT_EQ(a.heatmaps[c].data, b.heatmaps[c].data);

    const Frame other = sample_scene(cfg, cameras, 124, 7);
    bool same = other.poses.size() == a.poses.size();
    if (same)
        for (std::size_t p = 0; p < a.poses.size(); ++p)
            if (dist(other.poses[p].joints[2], a.poses[p].joints[2]) > 1e-9) same = false;
    EXPECT_FALSE(same);
}

TEST(SampleScene, FrameIdChangesContentButNotOrder) {
    SceneConfig cfg;
    const auto cameras = make_camera_ring(cfg);
    // Frame 5 sampled directly equals frame 5 sampled after other frames.
    const Frame direct = sample_scene(cfg, cameras, 9, 5);
    sample_scene(cfg, cameras, 9, 0);
    sample_scene(cfg, cameras, 9, 1);
    const Frame again = sample_scene(cfg, cameras, 9, 5);
    ASSERT_EQ(direct.poses.size(), again.poses.size());
    for (std::size_t p = 0; p < direct.poses.size(); ++p)
        EXPECT_EQ(dist(direct.poses[p].joints[0], again.poses[p].joints[0]), 0.0);
}

TEST(SamplePose, LimbLengthsMatchParameters) {
    SceneConfig cfg;
    const PoseParams& pp = cfg.pose;
    std::mt19937_64 rng(77);
    for (int rep = 0; rep < 50; ++rep) {
        const PoseSkeleton p = sample_pose({2000.0, 3000.0, 0.0}, pp, rng);
        ASSERT_EQ(p.joint_count(), 15);
        EXPECT_NEAR(dist(p.joints[0], p.joints[2]), pp.torso_len, 1e-9);
        EXPECT_NEAR(dist(p.joints[0], p.joints[1]), pp.nose_len, 1e-9);
        EXPECT_NEAR(dist(p.joints[2], p.joints[6]), pp.hip_half_width, 1e-9);
        EXPECT_NEAR(dist(p.joints[2], p.joints[12]), pp.hip_half_width, 1e-9);
        EXPECT_NEAR(dist(p.joints[3], p.joints[4]), pp.upper_arm, 1e-9);
        EXPECT_NEAR(dist(p.joints[4], p.joints[5]), pp.forearm, 1e-9);
        EXPECT_NEAR(dist(p.joints[9], p.joints[10]), pp.upper_arm, 1e-9);
        EXPECT_NEAR(dist(p.joints[6], p.joints[7]), pp.thigh, 1e-9);
        EXPECT_NEAR(dist(p.joints[13], p.joints[14]), pp.shin, 1e-9);
        // Pelvis anchored at the requested center, height within bounds.
        EXPECT_DOUBLE_EQ(p.joints[2].x, 2000.0);
        EXPECT_DOUBLE_EQ(p.joints[2].y, 3000.0);
        EXPECT_GE(p.joints[2].z, pp.pelvis_z_min);
        EXPECT_LE(p.joints[2].z, pp.pelvis_z_max);
        // Feet never below the floor clamp.
        EXPECT_GE(p.joints[8].z, 20.0);
        EXPECT_GE(p.joints[14].z, 20.0);
    }
}

TEST(SampleScene, RespectsPlacementConstraints) {
    SceneConfig cfg;
    cfg.min_persons = 3;
    cfg.max_persons = 4;
    const auto cameras = make_camera_ring(cfg);
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const Frame f = sample_scene(cfg, cameras, seed, 0);
        ASSERT_GE(f.poses.size(), 3u);
        ASSERT_LE(f.poses.size(), 4u);
        for (std::size_t a = 0; a < f.poses.size(); ++a) {
            const Vec3& pa = f.poses[a].joints[2];
            EXPECT_GE(pa.x, cfg.space.origin.x + cfg.placement_margin_mm - 1e-9);
            EXPECT_LE(pa.x, cfg.space.origin.x + cfg.space.extent.x - cfg.placement_margin_mm + 1e-9);
            EXPECT_GE(pa.y, cfg.space.origin.y + cfg.placement_margin_mm - 1e-9);
            for (std::size_t b = a + 1; b < f.poses.size(); ++b) {
                const Vec3& pb = f.poses[b].joints[2];
                const double dx = pa.x - pb.x, dy = pa.y - pb.y;
                EXPECT_GE(std::sqrt(dx * dx + dy * dy), cfg.min_center_distance_mm - 1e-9);
            }
        }
    }
}

TEST(RenderHeatmaps, PeakSitsAtProjectedJoint) {
    SceneConfig cfg;
    cfg.min_persons = 1;
    cfg.max_persons = 1;
    const auto cameras = make_camera_ring(cfg);
    const Frame f = sample_scene(cfg, cameras, 3, 0);
    const PoseSkeleton& pose = f.poses[0];
    int checked = 0;
    for (std::size_t c = 0; c < cameras.size(); ++c) {
        const Camera& cam = cameras[c];
        for (int k = 0; k < 15; ++k) {
            const Projection pr = project_point(cam, pose.joints[k]);
            if (pr.behind) continue;
            const double u = pr.pixel.x, v = pr.pixel.y;
            if (u < 3 || v < 3 || u >= cam.width - 3 || v >= cam.height - 3) continue;
            const auto& heat = f.heatmaps[c];
            int by = 0, bx = 0;
            float best = -1.0f;
            for (int y = 0; y < cam.height; ++y)
                for (int x = 0; x < cam.width; ++x)
                    if (heat.at3(k, y, x) > best) {
                        best = heat.at3(k, y, x);
                        by = y;
                        bx = x;
                    }
            EXPECT_LE(std::abs(bx - u), 0.5 + 1e-9) << "cam " << c << " joint " << k;
            EXPECT_LE(std::abs(by - v), 0.5 + 1e-9);
            EXPECT_GT(best, 0.85f);  // peak pixel at most half a cell away
            ++checked;
        }
    }
    EXPECT_GT(checked, 20);
}

TEST(RenderHeatmaps, DropoutRemovesWholeBlobs) {
    SceneConfig cfg;
    cfg.min_persons = 2;
    cfg.max_persons = 2;
    const auto cameras = make_camera_ring(cfg);
    cfg.joint_dropout = 1.0;  // every blob dropped
    const Frame f = sample_scene(cfg, cameras, 15, 0);
    for (const auto& h : f.heatmaps)
        for (float v : h.data) EXPECT_EQ(v, 0.0f);
}

TEST(SceneIO, WriteReadRewriteIsByteIdentical) {
    ovxtest::TempDir tmp;
    SceneConfig cfg;
    cfg.image_width = 64;
    cfg.image_height = 48;
    const std::string dir_a = tmp.sub("scene_a");
    write_scene(dir_a, cfg, 42, 3);

    SceneReader reader(dir_a);
    EXPECT_EQ(reader.frame_count(), 3u);
    EXPECT_EQ(reader.seed(), 42u);
    EXPECT_EQ(reader.cameras().size(), static_cast<std::size_t>(cfg.camera_count));
    EXPECT_EQ(reader.skeleton().joint_count, 15);

    // Re-write from what the reader loaded, then compare every byte.
    const std::string dir_b = tmp.sub("scene_b");
    SceneWriter writer(dir_b, reader.config(), reader.cameras(), reader.skeleton(), reader.seed());
    for (std::size_t i = 0; i < reader.frame_count(); ++i) writer.add_frame(reader.frame(i));
    writer.finalize();

    EXPECT_EQ(ovxtest::read_bytes(dir_a + "/scene.json"), ovxtest::read_bytes(dir_b + "/scene.json"));
    for (int i = 0; i < 3; ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "/frames/frame_%06d.ovxt", i);
        EXPECT_EQ(ovxtest::read_bytes(dir_a + name), ovxtest::read_bytes(dir_b + name)) << name;
    }
}

TEST(SceneIO, ReaderValidates) {
    ovxtest::TempDir tmp;
    EXPECT_THROW(SceneReader(tmp.sub("missing")), std::runtime_error);

    const std::string dir = tmp.sub("bad");
    std::filesystem::create_directories(dir);
    std::ofstream(dir + "/scene.json") << "{\"format\":\"something-else\",\"version\":1}";
    EXPECT_THROW(SceneReader{dir}, std::runtime_error);
}

TEST(SceneIO, PosesMatchLazyFrames) {
    ovxtest::TempDir tmp;
    SceneConfig cfg;
    cfg.image_width = 32;
    cfg.image_height = 24;
    cfg.min_persons = 2;
    cfg.max_persons = 3;
    const std::string dir = tmp.sub("scene");
    write_scene(dir, cfg, 5, 2);
    SceneReader reader(dir);
    for (std::size_t i = 0; i < reader.frame_count(); ++i) {
        const Frame f = reader.frame(i);
        ASSERT_EQ(f.poses.size(), reader.poses(i).size());
        EXPECT_EQ(f.id, reader.frame_id(i));
        EXPECT_EQ(f.heatmaps.size(), reader.cameras().size());
        for (std::size_t p = 0; p < f.poses.size(); ++p)
            EXPECT_EQ(dist(f.poses[p].joints[4], reader.poses(i)[p].joints[4]), 0.0);
    }
}

TEST(SceneConfigJson, RoundTripPreservesEverything) {
    SceneConfig cfg;
    cfg.min_persons = 2;
    cfg.max_persons = 7;
    cfg.space.origin = {-100.0, 50.0, 0.0};
    cfg.space.res = {40, 40, 10};
    cfg.focal_px = 123.5;
    cfg.joint_dropout = 0.125;
    cfg.pose.thigh = 411.0;
    nlohmann::json j = cfg;
    const SceneConfig back = j.get<SceneConfig>();
    nlohmann::json j2 = back;
    EXPECT_EQ(j, j2);
    EXPECT_EQ(back.min_persons, 2);
    EXPECT_EQ(back.max_persons, 7);
    EXPECT_DOUBLE_EQ(back.space.origin.x, -100.0);
    EXPECT_EQ(back.space.res[0], 40);
    EXPECT_DOUBLE_EQ(back.focal_px, 123.5);
    EXPECT_DOUBLE_EQ(back.pose.thigh, 411.0);
}

TEST(CameraJson, RoundTripPreservesExtrinsics) {
    SceneConfig cfg;
    const auto cameras = make_camera_ring(cfg);
    for (const Camera& cam : cameras) {
        const Camera back = camera_from_json(camera_to_json(cam));
        EXPECT_EQ(back.id, cam.id);
        EXPECT_DOUBLE_EQ(back.fx, cam.fx);
        EXPECT_DOUBLE_EQ(back.cx, cam.cx);
        for (int i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(back.R.m[i], cam.R.m[i]);
        EXPECT_DOUBLE_EQ(back.t.z, cam.t.z);
    }
}

}  // namespace
