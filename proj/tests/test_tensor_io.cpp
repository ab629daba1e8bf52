// Copyright (C) 2026 Orthovox Contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "orthovox/io.hpp"
#include "orthovox/tensor.hpp"
#include "testlib.hpp"

namespace {

using namespace ovx;
using ovxtest::TempDir;

TEST(Tensor, ShapeAndIndexing) {
    Tensor<float> t({2, 3, 4});
    EXPECT_EQ(t.rank(), 3);
    EXPECT_EQ(t.numel(), 24u);
    t.at3(1, 2, 3) = 5.0f;
    EXPECT_EQ(t.data[23], 5.0f);
    Tensor<float> q({2, 3, 4, 5});
    q.at4(1, 2, 3, 4) = 7.0f;
    EXPECT_EQ(q.data[119], 7.0f);
    EXPECT_THROW(Tensor<float>({2, -1}), std::invalid_argument);
}

TEST(Tensor, ReshapeAndGrad) {
    Tensor<double> t({4, 6});
    EXPECT_THROW(t.reshape({5, 5}), std::invalid_argument);
    t.reshape({2, 12});
    EXPECT_EQ(t.dim(1), 12);
    t.ensure_grad();
    EXPECT_EQ(t.grad.size(), t.numel());
    t.grad[3] = 1.5;
    t.zero_grad();
    EXPECT_EQ(t.grad[3], 0.0);
}

TEST(Tensor, CastPreservesValues) {
    Tensor<double> t({3});
    t.data = {1.25, -2.5, 0.0};
    const Tensor<float> f = t.cast<float>();
    EXPECT_EQ(f.data[0], 1.25f);
    EXPECT_EQ(f.data[1], -2.5f);
}

TEST(TensorFile, RoundTripBitExact) {
    TempDir dir("tio");
    std::mt19937_64 rng(3);
    Tensor<float> t({3, 5, 7});
    ovxtest::fill_uniform(t, rng, -10.0, 10.0);
    const std::string path = dir.sub("a.ovxt");
    write_tensor(path, t);
    const Tensor<float> back = read_tensor(path);
    ASSERT_EQ(back.shape, t.shape);
    for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_EQ(back.data[i], t.data[i]);

    // Writing the loaded tensor again reproduces the file byte for byte.
    const std::string path2 = dir.sub("b.ovxt");
    write_tensor(path2, back);
    EXPECT_EQ(ovxtest::read_bytes(path), ovxtest::read_bytes(path2));
}

TEST(TensorFile, RejectsCorruptHeader) {
    TempDir dir("tio");
    const std::string path = dir.sub("bad.ovxt");
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOPE";
    }
    EXPECT_THROW(read_tensor(path), std::runtime_error);
    EXPECT_THROW(read_tensor(dir.sub("missing.ovxt")), std::runtime_error);
}

TEST(TensorFile, RejectsTruncatedPayload) {
    TempDir dir("tio");
    Tensor<float> t({4, 4});
    t.fill(1.0f);
    const std::string path = dir.sub("t.ovxt");
    write_tensor(path, t);
    const auto bytes = ovxtest::read_bytes(path);
    {
        std::ofstream os(path, std::ios::binary);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 8));
    }
    EXPECT_THROW(read_tensor(path), std::runtime_error);
}

TEST(Checkpoint, RoundTripBitExact) {
    TempDir dir("cp");
    std::mt19937_64 rng(5);
    Checkpoint cp;
    Tensor<float> a({2, 3}), b({7});
    ovxtest::fill_uniform(a, rng);
    ovxtest::fill_uniform(b, rng);
    cp["net.w"] = a;
    cp["net.b"] = b;
    const std::string p1 = dir.sub("m1.ovxc");
    write_checkpoint(p1, cp);
    const Checkpoint back = read_checkpoint(p1);
    ASSERT_EQ(back.size(), cp.size());
    for (const auto& [name, t] : cp) {
        ASSERT_TRUE(back.count(name)) << name;
        EXPECT_EQ(back.at(name).shape, t.shape);
        for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_EQ(back.at(name).data[i], t.data[i]);
    }
    const std::string p2 = dir.sub("m2.ovxc");
    write_checkpoint(p2, back);
    EXPECT_EQ(ovxtest::read_bytes(p1), ovxtest::read_bytes(p2));
}

TEST(Checkpoint, RejectsBadMagic) {
    TempDir dir("cp");
    const std::string path = dir.sub("bad.ovxc");
    {
        std::ofstream os(path, std::ios::binary);
        os << "garbage that is long enough to not hit eof first";
    }
    EXPECT_THROW(read_checkpoint(path), std::runtime_error);
}

}  // namespace
