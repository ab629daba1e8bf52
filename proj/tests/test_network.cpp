// Copyright (C) 2026 Orthovox Contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>
#include <set>

#include "orthovox/network.hpp"
#include "testlib.hpp"

namespace {

using namespace ovx;

TEST(Hdn2dNet, HeadShapesAndRanges) {
    std::mt19937_64 rng(1);
    auto net = build_hdn_2d<float>(15, 16, rng);
    Tensor<float> x({2, 15, 16, 16});
    ovxtest::fill_uniform(x, rng, 0.0, 1.0);
    auto outs = net.forward(x, false);
    ASSERT_EQ(outs.size(), 3u);
    EXPECT_EQ(outs[0].shape, (std::vector<int>{2, 1, 16, 16}));
    EXPECT_EQ(outs[1].shape, (std::vector<int>{2, 2, 16, 16}));
    EXPECT_EQ(outs[2].shape, (std::vector<int>{2, 2, 16, 16}));
    for (float v : outs[0].data) {
        EXPECT_GT(v, 0.0f);
        EXPECT_LT(v, 1.0f);
    }
}

TEST(Hdn1dNet, ColumnShape) {
    std::mt19937_64 rng(2);
    auto net = build_hdn_1d<float>(15, 8, rng);
    Tensor<float> x({4, 15, 20});
    ovxtest::fill_uniform(x, rng, 0.0, 1.0);
    auto outs = net.forward(x, false);
    ASSERT_EQ(outs.size(), 1u);
    EXPECT_EQ(outs[0].shape, (std::vector<int>{4, 1, 20}));
}

TEST(PoseNet, PreservesPlaneResolution) {
    std::mt19937_64 rng(3);
    auto net = build_pose_2d<float>(15, 8, rng);
    for (int a : {16, 32}) {
        Tensor<float> x({3, 15, a, a});
        ovxtest::fill_uniform(x, rng, 0.0, 1.0);
        auto outs = net.forward(x, false);
        ASSERT_EQ(outs.size(), 1u);
        EXPECT_EQ(outs[0].shape, (std::vector<int>{3, 15, a, a}));
    }
}

TEST(ConfidenceNet, ZeroInitGivesZeroLogits) {
    std::mt19937_64 rng(4);
    auto net = build_confidence_net<float>(15, 8, rng);
    Tensor<float> x({3, 15, 8, 8});
    ovxtest::fill_uniform(x, rng, 0.0, 1.0);
    const Tensor<float> out = net.forward(x, false);
    ASSERT_EQ(out.shape, (std::vector<int>{3, 15}));
    for (float v : out.data) EXPECT_EQ(v, 0.0f);
}

TEST(Params, NamesUniqueAndRoundTrip) {
    std::mt19937_64 rng(5);
    auto net = build_pose_2d<float>(5, 8, rng);
    auto refs = collect_params(net, "pose");
    std::set<std::string> names;
    std::size_t trainable = 0;
    for (const auto& r : refs) {
        EXPECT_TRUE(names.insert(r.name).second) << "duplicate " << r.name;
        EXPECT_EQ(r.name.rfind("pose.", 0), 0u);
        if (r.trainable) ++trainable;
    }
    EXPECT_GT(trainable, 10u);

    Checkpoint cp;
    save_params(cp, refs);
    EXPECT_EQ(cp.size(), refs.size());

    // Mutate, reload, and confirm bit-exact restoration.
    std::vector<std::vector<float>> originals;
    for (const auto& r : refs) originals.push_back(r.tensor->data);
    for (auto& r : refs)
        for (auto& v : r.tensor->data) v += 1.0f;
    load_params(cp, refs);
    for (std::size_t i = 0; i < refs.size(); ++i) EXPECT_EQ(refs[i].tensor->data, originals[i]);
}

TEST(Params, LoadRejectsMissingAndShapeMismatch) {
    std::mt19937_64 rng(6);
    auto net = build_confidence_net<float>(4, 4, rng);
    std::vector<ParamRef<float>> refs;
    net.collect("conf", refs);
    Checkpoint cp;
    save_params(cp, refs);
    Checkpoint missing = cp;
    missing.erase(missing.begin()->first);
    EXPECT_THROW(load_params(missing, refs), std::runtime_error);
    Checkpoint bad = cp;
    bad.begin()->second = Tensor<float>({1, 1, 1});
    EXPECT_THROW(load_params(bad, refs), std::runtime_error);
}

TEST(MultiHeadNet, BackwardMergesHeadGradients) {
    std::mt19937_64 rng(7);
    MultiHeadNet<double> net;
    net.trunk.add("conv", std::make_unique<Conv2d<double>>(2, 3, 3, rng));
    auto h1 = std::make_unique<Sequential<double>>();
    h1->add("out", std::make_unique<Conv2d<double>>(3, 1, 1, rng));
    auto h2 = std::make_unique<Sequential<double>>();
    h2->add("out", std::make_unique<Conv2d<double>>(3, 2, 1, rng));
    net.heads.emplace_back("a", std::move(h1));
    net.heads.emplace_back("b", std::move(h2));

    Tensor<double> x({1, 2, 4, 4});
    ovxtest::fill_uniform(x, rng);
    auto outs = net.forward(x, true);
    Tensor<double> wa(outs[0].shape), wb(outs[1].shape);
    ovxtest::fill_uniform(wa, rng);
    ovxtest::fill_uniform(wb, rng);
    const Tensor<double> dx = net.backward({wa, wb});

    // FD on the summed two-head readout.
    const double h = 3e-4;
    double max_rel = 0.0;
    auto eval = [&]() {
        auto o = net.forward(x, true);
        double s = 0.0;
        for (std::size_t i = 0; i < o[0].numel(); ++i) s += o[0].data[i] * wa.data[i];
        for (std::size_t i = 0; i < o[1].numel(); ++i) s += o[1].data[i] * wb.data[i];
        return s;
    };
    double scale = 1e-12;
    std::vector<double> fd(x.numel());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double keep = x.data[i];
        x.data[i] = keep + h;
        const double up = eval();
        x.data[i] = keep - h;
        const double dn = eval();
        x.data[i] = keep;
        fd[i] = (up - dn) / (2 * h);
        scale = std::max({scale, std::abs(fd[i]), std::abs(dx.data[i])});
    }
    for (std::size_t i = 0; i < x.numel(); ++i) max_rel = std::max(max_rel, std::abs(fd[i] - dx.data[i]) / scale);
    EXPECT_LT(max_rel, 1e-6);
}

TEST(Macs, NetworkTotalsMatchLayerSums) {
    std::mt19937_64 rng(8);
    auto net = build_hdn_2d<float>(15, 16, rng);
    const std::vector<int> in{1, 15, 16, 16};
    const std::int64_t total = net.macs(in);
    EXPECT_GT(total, 0);
    // Heads see the trunk output shape; recomputing through the pieces agrees.
    std::int64_t manual = net.trunk.macs(in);
    const auto hshape = net.trunk_out_shape(in);
    for (const auto& [name, head] : net.heads) manual += head->macs(hshape);
    EXPECT_EQ(total, manual);
}

}  // namespace
