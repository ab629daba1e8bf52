// Copyright (C) 2026 Orthovox Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "orthovox/synth.hpp"
#include "orthovox/util.hpp"

namespace ovx {

struct NetConfig {
    int hdn2d_width = 32;
    int hdn1d_width = 32;
    int pose_width = 32;
    int conf_width = 32;
    int stages_2d = 3;
    int stages_1d = 2;
};

struct TrainConfig {
    int epochs = 10;
    int batch_size = 8;
    double learning_rate = 1e-4;
    std::uint64_t seed = 7;
    double jitter_mm = 100.0;  // JLN cube-center jitter during training
};

struct HdnConfig {
    int max_proposals = 10;  // P
    double threshold = 0.3;
    double sigma_cells = 2.0;
    double delta_mm = 200.0;  // GT box safety margin
    double size_scale_mm = 2000.0;
    double min_size_mm = 200.0;
    double max_size_mm = 2000.0;
    double box_height_mm = 2000.0;
};

struct JlnParams {
    double cube_mm = 2000.0;
    int fine_res = 64;
    double beta = 15.0;  // spatial softmax temperature
    double tau = 0.5;    // analytic-path threshold
};

struct RunConfig {
    SceneConfig scene;
    NetConfig net;
    TrainConfig train;
    HdnConfig hdn;
    JlnParams jln;
    double match_radius_mm = 500.0;
    int threads = 1;
    bool deterministic = true;
};

inline void to_json(nlohmann::json& j, const NetConfig& c) {
    j = {{"hdn2d_width", c.hdn2d_width}, {"hdn1d_width", c.hdn1d_width}, {"pose_width", c.pose_width},
         {"conf_width", c.conf_width},   {"stages_2d", c.stages_2d},     {"stages_1d", c.stages_1d}};
}
inline void from_json(const nlohmann::json& j, NetConfig& c) {
    j.at("hdn2d_width").get_to(c.hdn2d_width);
    j.at("hdn1d_width").get_to(c.hdn1d_width);
    j.at("pose_width").get_to(c.pose_width);
    j.at("conf_width").get_to(c.conf_width);
    j.at("stages_2d").get_to(c.stages_2d);
    j.at("stages_1d").get_to(c.stages_1d);
}
inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"learning_rate", c.learning_rate},
         {"seed", c.seed},
         {"jitter_mm", c.jitter_mm}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    j.at("epochs").get_to(c.epochs);
    j.at("batch_size").get_to(c.batch_size);
    j.at("learning_rate").get_to(c.learning_rate);
    j.at("seed").get_to(c.seed);
    j.at("jitter_mm").get_to(c.jitter_mm);
}
inline void to_json(nlohmann::json& j, const HdnConfig& c) {
    j = {{"max_proposals", c.max_proposals},
         {"threshold", c.threshold},
         {"sigma_cells", c.sigma_cells},
         {"delta_mm", c.delta_mm},
         {"size_scale_mm", c.size_scale_mm},
         {"min_size_mm", c.min_size_mm},
         {"max_size_mm", c.max_size_mm},
         {"box_height_mm", c.box_height_mm}};
}
inline void from_json(const nlohmann::json& j, HdnConfig& c) {
    j.at("max_proposals").get_to(c.max_proposals);
    j.at("threshold").get_to(c.threshold);
    j.at("sigma_cells").get_to(c.sigma_cells);
    j.at("delta_mm").get_to(c.delta_mm);
    j.at("size_scale_mm").get_to(c.size_scale_mm);
    j.at("min_size_mm").get_to(c.min_size_mm);
    j.at("max_size_mm").get_to(c.max_size_mm);
    j.at("box_height_mm").get_to(c.box_height_mm);
}
inline void to_json(nlohmann::json& j, const JlnParams& c) {
    j = {{"cube_mm", c.cube_mm}, {"fine_res", c.fine_res}, {"beta", c.beta}, {"tau", c.tau}};
}
inline void from_json(const nlohmann::json& j, JlnParams& c) {
    j.at("cube_mm").get_to(c.cube_mm);
    j.at("fine_res").get_to(c.fine_res);
    j.at("beta").get_to(c.beta);
    j.at("tau").get_to(c.tau);
}
inline void to_json(nlohmann::json& j, const RunConfig& c) {
    j = {{"scene", c.scene},
         {"net", c.net},
         {"train", c.train},
         {"hdn", c.hdn},
         {"jln", c.jln},
         {"match_radius_mm", c.match_radius_mm},
         {"threads", c.threads},
         {"deterministic", c.deterministic}};
}
inline void from_json(const nlohmann::json& j, RunConfig& c) {
    j.at("scene").get_to(c.scene);
    j.at("net").get_to(c.net);
    j.at("train").get_to(c.train);
    j.at("hdn").get_to(c.hdn);
    j.at("jln").get_to(c.jln);
    j.at("match_radius_mm").get_to(c.match_radius_mm);
    j.at("threads").get_to(c.threads);
    j.at("deterministic").get_to(c.deterministic);
}

namespace cfg_detail {

inline bool env_value(const char* name, std::string& out) {
    const char* v = std::getenv(name);
    if (!v) return false;
    out = v;
    return true;
}

template <typename T>
void env_num(const char* name, T& field) {
    std::string s;
    if (!env_value(name, s)) return;
    try {
        if constexpr (std::is_floating_point_v<T>)
            field = static_cast<T>(std::stod(s));
        else
            field = static_cast<T>(std::stoll(s));
    } catch (const std::exception&) {
        throw std::invalid_argument(std::string("invalid numeric value in ") + name + ": " + s);
    }
}

}  // namespace cfg_detail

// Environment overrides, applied after file parsing. Every knob a CI run
// typically varies has one; all share the OVX_ prefix.
inline void apply_env_overrides(RunConfig& cfg) {
    using cfg_detail::env_num;
    env_num("OVX_EPOCHS", cfg.train.epochs);
    env_num("OVX_BATCH_SIZE", cfg.train.batch_size);
    env_num("OVX_LEARNING_RATE", cfg.train.learning_rate);
    env_num("OVX_SEED", cfg.train.seed);
    env_num("OVX_JITTER_MM", cfg.train.jitter_mm);
    env_num("OVX_THREADS", cfg.threads);
    env_num("OVX_FINE_RES", cfg.jln.fine_res);
    env_num("OVX_BETA", cfg.jln.beta);
    env_num("OVX_TAU", cfg.jln.tau);
    env_num("OVX_THRESHOLD", cfg.hdn.threshold);
    env_num("OVX_SIGMA_CELLS", cfg.hdn.sigma_cells);
    env_num("OVX_DELTA_MM", cfg.hdn.delta_mm);
    env_num("OVX_MAX_PROPOSALS", cfg.hdn.max_proposals);
    env_num("OVX_CAMERA_COUNT", cfg.scene.camera_count);
    env_num("OVX_MIN_PERSONS", cfg.scene.min_persons);
    env_num("OVX_MAX_PERSONS", cfg.scene.max_persons);
    env_num("OVX_HDN2D_WIDTH", cfg.net.hdn2d_width);
    env_num("OVX_HDN1D_WIDTH", cfg.net.hdn1d_width);
    env_num("OVX_POSE_WIDTH", cfg.net.pose_width);
    env_num("OVX_CONF_WIDTH", cfg.net.conf_width);
    env_num("OVX_MATCH_RADIUS_MM", cfg.match_radius_mm);
}

// Digest of the fully resolved config; echoed into every report so results
// can be traced back to their exact configuration.
inline std::string config_digest(const RunConfig& cfg) {
    const nlohmann::json j = cfg;
    return hex64(fnv1a(j.dump()));
}

inline RunConfig load_config(const std::string& path, bool with_env = true) {
    RunConfig cfg;
    if (!path.empty()) {
        std::ifstream is(path);
        if (!is) throw std::runtime_error("cannot open config file: " + path);
        nlohmann::json j = nlohmann::json::parse(is);
        // Partial configs are allowed: only given sections override defaults.
        nlohmann::json merged = cfg;
        merged.merge_patch(j);
        cfg = merged.get<RunConfig>();
    }
    if (with_env) apply_env_overrides(cfg);
    cfg.scene.validate();
    if (cfg.train.epochs < 0 || cfg.train.batch_size < 1)
        throw std::invalid_argument("config field train.epochs/batch_size invalid");
    if (cfg.jln.fine_res < 8 || cfg.jln.fine_res % 8 != 0)
        throw std::invalid_argument("config field jln.fine_res must be a positive multiple of 8");
    if (cfg.threads < 1) throw std::invalid_argument("config field threads must be >= 1");
    return cfg;
}

inline void save_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write config file: " + path);
    const nlohmann::json j = cfg;
    os << j.dump(1) << "\n";
}

}  // namespace ovx
