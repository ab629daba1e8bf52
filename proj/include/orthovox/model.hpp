// Copyright (C) 2026 Orthovox Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "orthovox/adam.hpp"
#include "orthovox/config.hpp"
#include "orthovox/geometry.hpp"
#include "orthovox/io.hpp"
#include "orthovox/network.hpp"
#include "orthovox/util.hpp"

namespace ovx {

inline constexpr int kModelCheckpointVersion = 1;

// The four networks of the pipeline. Detection (hdn2d + hdn1d) and
// localization (pose2d + conf) are optimized independently.
struct PoseModel {
    int joints = 15;
    NetConfig net;
    MultiHeadNet<float> hdn2d;
    MultiHeadNet<float> hdn1d;
    MultiHeadNet<float> pose2d;
    Sequential<float> conf;
};

inline PoseModel make_model(const NetConfig& net, int joints, std::uint64_t seed) {
    PoseModel m;
    m.joints = joints;
    m.net = net;
    auto r1 = make_rng(seed, 101);
    auto r2 = make_rng(seed, 102);
    auto r3 = make_rng(seed, 103);
    auto r4 = make_rng(seed, 104);
    m.hdn2d = build_hdn_2d<float>(joints, net.hdn2d_width, r1, net.stages_2d);
    m.hdn1d = build_hdn_1d<float>(joints, net.hdn1d_width, r2, net.stages_1d);
    m.pose2d = build_pose_2d<float>(joints, net.pose_width, r3, net.stages_2d);
    m.conf = build_confidence_net<float>(joints, net.conf_width, r4);
    return m;
}

inline std::vector<ParamRef<float>> hdn_params(PoseModel& m) {
    std::vector<ParamRef<float>> refs;
    m.hdn2d.collect("model.hdn2d", refs);
    m.hdn1d.collect("model.hdn1d", refs);
    return refs;
}

inline std::vector<ParamRef<float>> jln_params(PoseModel& m) {
    std::vector<ParamRef<float>> refs;
    m.pose2d.collect("model.pose2d", refs);
    m.conf.collect("model.conf", refs);
    return refs;
}

inline std::vector<ParamRef<float>> model_params(PoseModel& m) {
    auto refs = hdn_params(m);
    auto jln = jln_params(m);
    refs.insert(refs.end(), jln.begin(), jln.end());
    return refs;
}

inline std::int64_t trainable_param_count(const std::vector<ParamRef<float>>& refs) {
    std::int64_t n = 0;
    for (const auto& r : refs)
        if (r.trainable) n += static_cast<std::int64_t>(r.tensor->numel());
    return n;
}

struct CheckpointMeta {
    int epoch = 0;
    int joints = 15;
    std::string config_digest;
};

namespace model_detail {

inline Tensor<float> string_tensor(const std::string& s) {
    Tensor<float> t({static_cast<int>(s.size())});
    for (std::size_t i = 0; i < s.size(); ++i) t.data[i] = static_cast<float>(static_cast<unsigned char>(s[i]));
    return t;
}

inline std::string tensor_string(const Tensor<float>& t) {
    std::string s;
    s.reserve(t.numel());
    for (float v : t.data) s.push_back(static_cast<char>(static_cast<unsigned char>(v)));
    return s;
}

}  // namespace model_detail

// Checkpoints are self-describing: architecture metadata travels with the
// weights so inference tools never need the original config file.
inline void save_model_checkpoint(const std::string& path, PoseModel& m, const CheckpointMeta& meta,
                                  const Adam<float>* adam_hdn = nullptr, const Adam<float>* adam_jln = nullptr) {
    Checkpoint cp;
    Tensor<float> head({3});
    head.data = {static_cast<float>(kModelCheckpointVersion), static_cast<float>(meta.epoch),
                 static_cast<float>(meta.joints)};
    cp.emplace("meta.version", std::move(head));
    Tensor<float> netmeta({6});
    netmeta.data = {static_cast<float>(m.net.hdn2d_width), static_cast<float>(m.net.hdn1d_width),
                    static_cast<float>(m.net.pose_width),  static_cast<float>(m.net.conf_width),
                    static_cast<float>(m.net.stages_2d),   static_cast<float>(m.net.stages_1d)};
    cp.emplace("meta.net", std::move(netmeta));
    cp.emplace("meta.digest", model_detail::string_tensor(meta.config_digest));
    save_params(cp, model_params(m));
    if (adam_hdn) adam_hdn->save_state(cp, "adam.hdn");
    if (adam_jln) adam_jln->save_state(cp, "adam.jln");
    write_checkpoint(path, cp);
}

struct LoadedModel {
    PoseModel model;
    CheckpointMeta meta;
    bool has_optimizer_state = false;
};

inline LoadedModel load_model_checkpoint(const std::string& path) {
    const Checkpoint cp = read_checkpoint(path);
    auto need = [&](const std::string& name) -> const Tensor<float>& {
        auto it = cp.find(name);
        if (it == cp.end()) throw std::runtime_error("checkpoint missing record " + name + " in " + path);
        return it->second;
    };
    const Tensor<float>& head = need("meta.version");
    if (head.numel() != 3 || static_cast<int>(head.data[0]) != kModelCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version in " + path);
    const Tensor<float>& netmeta = need("meta.net");
    if (netmeta.numel() != 6) throw std::runtime_error("malformed architecture record in " + path);

    LoadedModel out;
    out.meta.epoch = static_cast<int>(head.data[1]);
    out.meta.joints = static_cast<int>(head.data[2]);
    out.meta.config_digest = model_detail::tensor_string(need("meta.digest"));
    NetConfig net;
    net.hdn2d_width = static_cast<int>(netmeta.data[0]);
    net.hdn1d_width = static_cast<int>(netmeta.data[1]);
    net.pose_width = static_cast<int>(netmeta.data[2]);
    net.conf_width = static_cast<int>(netmeta.data[3]);
    net.stages_2d = static_cast<int>(netmeta.data[4]);
    net.stages_1d = static_cast<int>(netmeta.data[5]);
    out.model = make_model(net, out.meta.joints, 0);
    load_params(cp, model_params(out.model));
    out.has_optimizer_state = cp.count("adam.hdn.t") > 0 && cp.count("adam.jln.t") > 0;
    return out;
}

// Restores optimizer moments saved next to the model weights.
inline void load_optimizer_state(const std::string& path, Adam<float>& adam_hdn, Adam<float>& adam_jln) {
    const Checkpoint cp = read_checkpoint(path);
    adam_hdn.load_state(cp, "adam.hdn");
    adam_jln.load_state(cp, "adam.jln");
}

}  // namespace ovx
