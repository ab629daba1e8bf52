// Copyright (C) 2026 Orthovox Contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "orthovox/bench.hpp"
#include "orthovox/pipeline.hpp"
#include "testlib.hpp"

namespace {

using namespace ovx;

TEST(Median, OddEvenEmpty) {
    EXPECT_EQ(median({}), 0.0);
    EXPECT_EQ(median({3.0}), 3.0);
    EXPECT_EQ(median({5.0, 1.0, 3.0}), 3.0);
    EXPECT_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
}

TEST(MacCounts, HandCheckedPerLayer) {
    std::mt19937_64 rng(1);
    // Convolution: output elements x cin x kernel volume.
    Conv2d<float> c2(2, 3, 3, rng);
    EXPECT_EQ(c2.macs({1, 2, 8, 8}), static_cast<std::int64_t>(3 * 8 * 8 * 2 * 9));
    Conv2d<float> c7(1, 4, 7, rng);
    EXPECT_EQ(c7.macs({2, 1, 10, 10}), static_cast<std::int64_t>(2 * 4 * 10 * 10 * 1 * 49));
    Conv1d<float> c1(3, 4, 3, rng);
    EXPECT_EQ(c1.macs({2, 3, 10}), static_cast<std::int64_t>(2 * 4 * 10 * 3 * 3));
    // Transposed convolution: input elements x cout x kernel volume.
    Deconv2d<float> d2(2, 3, rng);
    EXPECT_EQ(d2.macs({1, 2, 5, 5}), static_cast<std::int64_t>(1 * 2 * 5 * 5 * 3 * 16));
    Deconv1d<float> d1(2, 2, rng);
    EXPECT_EQ(d1.macs({3, 2, 6}), static_cast<std::int64_t>(3 * 2 * 6 * 2 * 4));
    Linear<float> fc(7, 3, rng);
    EXPECT_EQ(fc.macs({4, 7}), static_cast<std::int64_t>(4 * 7 * 3));
    // Normalization, activations and pooling count as free.
    BatchNorm<float> bn(4);
    EXPECT_EQ(bn.macs({2, 4, 5, 5}), 0);
    ReLU<float> relu;
    EXPECT_EQ(relu.macs({2, 4, 5, 5}), 0);
    MaxPool2d<float> pool;
    EXPECT_EQ(pool.macs({2, 4, 8, 8}), 0);
    GlobalAvgPool2d<float> gap;
    EXPECT_EQ(gap.macs({2, 4, 8, 8}), 0);
}

TEST(MacCounts, QuarterRatioBetweenGranularities) {
    NetConfig net{16, 16, 16, 16, 3, 2};
    PoseModel m = make_model(net, 15, 3);
    const std::int64_t jln64 = m.pose2d.macs({3, 15, 64, 64}) + m.conf.macs({3, 15, 64, 64});
    const std::int64_t jln32 = m.pose2d.macs({3, 15, 32, 32}) + m.conf.macs({3, 15, 32, 32});
    const std::int64_t jln48 = m.pose2d.macs({3, 15, 48, 48}) + m.conf.macs({3, 15, 48, 48});
    const double ratio = static_cast<double>(jln32) / static_cast<double>(jln64);
    EXPECT_NEAR(ratio, 0.25, 0.025);
    EXPECT_LT(jln32, jln48);
    EXPECT_LT(jln48, jln64);
}

TEST(MacCounts, BreakdownMatchesNetworkQueries) {
    NetConfig net{8, 8, 8, 8, 2, 2};
    PoseModel m = make_model(net, 15, 3);
    VoxelSpace space = default_motion_space();
    const MacBreakdown b = count_model_macs(m, space, 32, 4, 3);
    EXPECT_EQ(b.hdn2d, m.hdn2d.macs({1, 15, 80, 80}));
    EXPECT_EQ(b.hdn1d, m.hdn1d.macs({4, 15, 20}));
    EXPECT_EQ(b.pose2d, 3 * m.pose2d.macs({3, 15, 32, 32}));
    EXPECT_EQ(b.conf, 3 * m.conf.macs({3, 15, 32, 32}));
    EXPECT_EQ(b.total(), b.hdn2d + b.hdn1d + b.pose2d + b.conf);
    // Zero proposals skip the column net.
    EXPECT_EQ(count_model_macs(m, space, 32, 0, 0).hdn1d, 0);
}

TEST(GtDetection, DerivedFromPose) {
    SceneConfig cfg;
    cfg.min_persons = cfg.max_persons = 1;
    const auto cams = make_camera_ring(cfg);
    const Frame f = sample_scene(cfg, cams, 3, 0);
    const Detection3D d = gt_detection(f.poses[0], cmu15(), 200.0, 2000.0);
    const Vec3 rc = f.poses[0].root_center(cmu15());
    EXPECT_DOUBLE_EQ(d.center.x, rc.x);
    const RectXY box = pose_bbox_xy(f.poses[0], 200.0);
    EXPECT_DOUBLE_EQ(d.size_xy.x, box.x1 - box.x0);
    EXPECT_DOUBLE_EQ(d.height_mm, 2000.0);
    EXPECT_DOUBLE_EQ(d.score, 1.0);
}

TEST(CostCsv, WellFormed) {
    ovxtest::TempDir tmp;
    CostReport rep;
    rep.config_digest = "abc123";
    rep.rows.push_back({"granularity", 64.0, "jln_infer", 1.5, 1000});
    rep.rows.push_back({"persons", 3.0, "total", 2.25, 2048});
    const std::string path = tmp.sub("cost.csv");
    write_cost_csv(rep, path);

    std::ifstream is(path);
    std::string line;
    ASSERT_TRUE(std::getline(is, line));
    EXPECT_EQ(line, "sweep,axis,stage,ms,macs,config_digest");
    ASSERT_TRUE(std::getline(is, line));
    EXPECT_EQ(line, "granularity,64,jln_infer,1.5,1000,abc123");
    ASSERT_TRUE(std::getline(is, line));
    EXPECT_EQ(line, "persons,3,total,2.25,2048,abc123");
    EXPECT_FALSE(std::getline(is, line));
}

TEST(CostSvg, ContainsSeriesAndRejectsUnknownSweep) {
    ovxtest::TempDir tmp;
    CostReport rep;
    rep.config_digest = "d";
    for (int res : {16, 32, 64}) {
        rep.rows.push_back({"granularity", static_cast<double>(res), "jln_infer", res * 0.1, 0});
        rep.rows.push_back({"granularity", static_cast<double>(res), "jln_total", res * 0.2, 0});
    }
    const std::string path = tmp.sub("plot.svg");
    write_cost_svg(rep, "granularity", path);
    const std::vector<char> raw = ovxtest::read_bytes(path);
    const std::string svg(raw.begin(), raw.end());
    EXPECT_NE(svg.find("<svg"), std::string::npos);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
    // One polyline and one legend entry per stage.
    std::size_t polylines = 0;
    for (std::size_t pos = svg.find("<polyline"); pos != std::string::npos; pos = svg.find("<polyline", pos + 1))
        ++polylines;
    EXPECT_EQ(polylines, 2u);
    EXPECT_NE(svg.find("jln_infer"), std::string::npos);
    EXPECT_NE(svg.find("jln_total"), std::string::npos);

    EXPECT_THROW(write_cost_svg(rep, "nonexistent", tmp.sub("x.svg")), std::invalid_argument);
}

class BenchSweepFixture : public ::testing::Test {
  protected:
    void SetUp() override {
        cfg.scene.image_width = 32;
        cfg.scene.image_height = 24;
        cfg.scene.focal_px = 20.0;
        cfg.scene.space.res = {32, 32, 12};
        cfg.net = {8, 8, 8, 8, 2, 2};
        cfg.jln.fine_res = 16;
        model = make_model(cfg.net, 15, 3);
        opt.granularities = {16, 8};
        opt.persons_min = 1;
        opt.persons_max = 2;
        opt.cameras_min = 3;
        opt.cameras_max = 4;
        opt.runs = 1;
    }

    RunConfig cfg;
    PoseModel model;
    BenchOptions opt;
};

TEST_F(BenchSweepFixture, GranularitySweepShape) {
    const CostReport rep = sweep_granularity(cfg, model, opt);
    ASSERT_EQ(rep.rows.size(), 6u);
    EXPECT_EQ(rep.config_digest, config_digest(cfg));
    for (const auto& r : rep.rows) {
        EXPECT_EQ(r.sweep, "granularity");
        EXPECT_GE(r.ms, 0.0);
    }
    // Infer rows carry analytic MACs that shrink with the grid.
    std::int64_t macs16 = 0, macs8 = 0;
    for (const auto& r : rep.rows) {
        if (r.stage != "jln_infer") continue;
        (r.axis == 16.0 ? macs16 : macs8) = r.macs;
    }
    EXPECT_GT(macs16, macs8);
    EXPECT_GT(macs8, 0);
}

TEST_F(BenchSweepFixture, PersonsSweepTracksLoad) {
    const CostReport rep = sweep_persons(cfg, model, opt);
    ASSERT_EQ(rep.rows.size(), 10u);  // five stages per person count
    std::int64_t jln1 = 0, jln2 = 0;
    for (const auto& r : rep.rows) {
        EXPECT_EQ(r.sweep, "persons");
        if (r.stage == "jln_infer" && r.axis == 1.0) jln1 = r.macs;
        if (r.stage == "jln_infer" && r.axis == 2.0) jln2 = r.macs;
    }
    EXPECT_EQ(jln2, 2 * jln1);  // per-person nets run once per person
}

TEST_F(BenchSweepFixture, CameraSweepKeepsNetworkMacsConstant) {
    const CostReport rep = sweep_cameras(cfg, model, opt);
    ASSERT_EQ(rep.rows.size(), 6u);  // three stages per camera count
    std::int64_t hdn_prev = -1, jln_prev = -1;
    for (const auto& r : rep.rows) {
        EXPECT_EQ(r.sweep, "cameras");
        if (r.stage == "hdn") {
            if (hdn_prev >= 0) EXPECT_EQ(r.macs, hdn_prev);
            hdn_prev = r.macs;
        }
        if (r.stage == "jln") {
            if (jln_prev >= 0) EXPECT_EQ(r.macs, jln_prev);
            jln_prev = r.macs;
        }
    }
    EXPECT_GT(hdn_prev, 0);
    EXPECT_GT(jln_prev, 0);
}

}  // namespace
