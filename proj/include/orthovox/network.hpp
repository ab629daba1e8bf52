// Copyright (C) 2026 Orthovox Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "orthovox/io.hpp"
#include "orthovox/layers.hpp"
#include "orthovox/tensor.hpp"

namespace ovx {

// Shared trunk feeding one or more heads. Heads are evaluated on the same
// trunk output; backward sums their input gradients before the trunk pass.
template <typename T>
class MultiHeadNet {
  public:
    Sequential<T> trunk;
    std::vector<std::pair<std::string, std::unique_ptr<Sequential<T>>>> heads;

    std::vector<Tensor<T>> forward(const Tensor<T>& x, bool train) {
        Tensor<T> h = trunk.forward(x, train);
        std::vector<Tensor<T>> outs;
        outs.reserve(heads.size());
        for (auto& [name, head] : heads) outs.push_back(head->forward(h, train));
        return outs;
    }

    Tensor<T> backward(const std::vector<Tensor<T>>& dheads) {
        if (dheads.size() != heads.size()) throw std::invalid_argument("head gradient count mismatch");
        Tensor<T> dtrunk;
        for (std::size_t i = 0; i < heads.size(); ++i) {
            Tensor<T> g = heads[i].second->backward(dheads[i]);
            if (dtrunk.shape.empty()) {
                dtrunk = std::move(g);
            } else {
                for (std::size_t j = 0; j < g.numel(); ++j) dtrunk.data[j] += g.data[j];
            }
        }
        return trunk.backward(dtrunk);
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        trunk.collect(prefix + ".trunk", out);
        for (auto& [name, head] : heads) head->collect(prefix + ".head_" + name, out);
    }

    std::vector<int> trunk_out_shape(const std::vector<int>& in) const { return trunk.out_shape(in); }

    std::int64_t macs(const std::vector<int>& in) const {
        std::int64_t total = trunk.macs(in);
        auto hshape = trunk.out_shape(in);
        for (const auto& [name, head] : heads) total += head->macs(hshape);
        return total;
    }
};

namespace nn_detail {

template <typename T>
void add_encoder_decoder_2d(Sequential<T>& trunk, int width, int stages, std::mt19937_64& rng) {
    for (int s = 0; s < stages; ++s) {
        trunk.add("enc" + std::to_string(s), std::make_unique<ResidualBlock<T>>(width, 3, rng));
        trunk.add("pool" + std::to_string(s), std::make_unique<MaxPool2d<T>>());
    }
    for (int s = 0; s < stages; ++s) {
        auto up = std::make_unique<Sequential<T>>();
        up->add("deconv", std::make_unique<Deconv2d<T>>(width, width, rng));
        up->add("bn", std::make_unique<BatchNorm<T>>(width));
        up->add("relu", std::make_unique<ReLU<T>>());
        trunk.add("up" + std::to_string(s), std::move(up));
        trunk.add("dec" + std::to_string(s), std::make_unique<ResidualBlock<T>>(width, 3, rng));
    }
}

// Final 1x1 convs start at zero weights so every head begins at exactly its
// bias: the output is flat, and all early gradient goes into the signal.
template <typename T>
std::unique_ptr<Sequential<T>> make_head_2d(int width, int cout, std::mt19937_64& rng, bool sigmoid,
                                            T final_bias = T(0)) {
    auto head = std::make_unique<Sequential<T>>();
    head->add("conv", std::make_unique<Conv2d<T>>(width, width, 3, rng));
    head->add("relu", std::make_unique<ReLU<T>>());
    auto out = std::make_unique<Conv2d<T>>(width, cout, 1, rng);
    out->weight().fill(T(0));
    out->bias().fill(final_bias);
    head->add("out", std::move(out));
    if (sigmoid) head->add("sigmoid", std::make_unique<Sigmoid<T>>());
    return head;
}

}  // namespace nn_detail

// BEV detection network: 7x7 stem block, three residual+pool encoder stages,
// a symmetric deconv decoder, a 1x1 block, then heatmap/offset/size heads.
// The heat head starts at sigmoid(-2.19) ~ 0.1 (near the background rate),
// the offset head at the cell midpoint, and the size head at 0.6 of the size
// scale, so early decodes are sane and training raises peaks instead of
// first unlearning initialization noise.
template <typename T>
MultiHeadNet<T> build_hdn_2d(int joints, int width, std::mt19937_64& rng, int stages = 3) {
    MultiHeadNet<T> net;
    net.trunk.add("stem", basic_block2d<T>(joints, width, 7, rng));
    nn_detail::add_encoder_decoder_2d(net.trunk, width, stages, rng);
    net.trunk.add("final", basic_block2d<T>(width, width, 1, rng));
    net.heads.emplace_back("heat", nn_detail::make_head_2d<T>(width, 1, rng, true, T(-2.19)));
    net.heads.emplace_back("offset", nn_detail::make_head_2d<T>(width, 2, rng, false, T(0.5)));
    net.heads.emplace_back("size", nn_detail::make_head_2d<T>(width, 2, rng, false, T(0.6)));
    return net;
}

// 1D height network along z. Two encoder stages so a 20-bin column pools to 5.
template <typename T>
MultiHeadNet<T> build_hdn_1d(int joints, int width, std::mt19937_64& rng, int stages = 2) {
    MultiHeadNet<T> net;
    net.trunk.add("stem", basic_block1d<T>(joints, width, 7, rng));
    for (int s = 0; s < stages; ++s) {
        net.trunk.add("enc" + std::to_string(s), std::make_unique<ResidualBlock<T>>(width, 3, rng, true));
        net.trunk.add("pool" + std::to_string(s), std::make_unique<MaxPool1d<T>>());
    }
    for (int s = 0; s < stages; ++s) {
        auto up = std::make_unique<Sequential<T>>();
        up->add("deconv", std::make_unique<Deconv1d<T>>(width, width, rng));
        up->add("bn", std::make_unique<BatchNorm<T>>(width));
        up->add("relu", std::make_unique<ReLU<T>>());
        net.trunk.add("up" + std::to_string(s), std::move(up));
        net.trunk.add("dec" + std::to_string(s), std::make_unique<ResidualBlock<T>>(width, 3, rng, true));
    }
    net.trunk.add("final", basic_block1d<T>(width, width, 1, rng));
    auto head = std::make_unique<Sequential<T>>();
    head->add("conv", std::make_unique<Conv1d<T>>(width, width, 3, rng));
    head->add("relu", std::make_unique<ReLU<T>>());
    auto out = std::make_unique<Conv1d<T>>(width, 1, 1, rng);
    out->weight().fill(T(0));
    out->bias().fill(T(-2.19));
    head->add("out", std::move(out));
    head->add("sigmoid", std::make_unique<Sigmoid<T>>());
    net.heads.emplace_back("heat", std::move(head));
    return net;
}

// Shared tri-plane pose network: the three plane features run through this
// one net as a batch of 3. Output is a K-channel logit map per plane; the
// spatial softmax ahead of the center-of-mass decode lives in the jln module.
template <typename T>
MultiHeadNet<T> build_pose_2d(int joints, int width, std::mt19937_64& rng, int stages = 3) {
    MultiHeadNet<T> net;
    net.trunk.add("stem", basic_block2d<T>(joints, width, 7, rng));
    nn_detail::add_encoder_decoder_2d(net.trunk, width, stages, rng);
    net.trunk.add("final", basic_block2d<T>(width, width, 1, rng));
    net.heads.emplace_back("heat", nn_detail::make_head_2d<T>(width, joints, rng, false));
    return net;
}

// Per-plane joint confidence: conv + ReLU + global average pool + FC. The FC
// is zero-initialized so untrained confidences are exactly zero logits.
template <typename T>
Sequential<T> build_confidence_net(int joints, int width, std::mt19937_64& rng) {
    Sequential<T> net;
    net.add("conv", std::make_unique<Conv2d<T>>(joints, width, 3, rng));
    net.add("relu", std::make_unique<ReLU<T>>());
    net.add("gap", std::make_unique<GlobalAvgPool2d<T>>());
    net.add("fc", std::make_unique<Linear<T>>(width, joints, rng, true));
    return net;
}

template <typename T>
std::vector<ParamRef<T>> collect_params(MultiHeadNet<T>& net, const std::string& prefix) {
    std::vector<ParamRef<T>> refs;
    net.collect(prefix, refs);
    return refs;
}

template <typename T>
void save_params(Checkpoint& cp, const std::vector<ParamRef<T>>& refs) {
    for (const auto& r : refs) {
        if (!cp.emplace(r.name, r.tensor->template cast<float>()).second)
            throw std::runtime_error("duplicate parameter name: " + r.name);
    }
}

template <typename T>
void load_params(const Checkpoint& cp, const std::vector<ParamRef<T>>& refs) {
    for (const auto& r : refs) {
        auto it = cp.find(r.name);
        if (it == cp.end()) throw std::runtime_error("checkpoint missing parameter: " + r.name);
        if (it->second.shape != r.tensor->shape)
            throw std::runtime_error("checkpoint shape mismatch for " + r.name + ": file " +
                                     shape_str(it->second.shape) + " vs model " + shape_str(r.tensor->shape));
        for (std::size_t i = 0; i < r.tensor->data.size(); ++i)
            r.tensor->data[i] = static_cast<T>(it->second.data[i]);
    }
}

}  // namespace ovx
