// Copyright (C) 2026 Orthovox Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "orthovox/geometry.hpp"
#include "orthovox/io.hpp"
#include "orthovox/util.hpp"
#include "orthovox/volume.hpp"

namespace ovx {

struct PoseParams {
    double pelvis_z_min = 880.0, pelvis_z_max = 980.0;
    double hip_half_width = 110.0;
    double torso_len = 500.0;
    double nose_len = 120.0;
    double shoulder_half_width = 170.0;
    double upper_arm = 280.0, forearm = 250.0;
    double thigh = 440.0, shin = 430.0;
    double torso_cone_deg = 12.0;
    double arm_cone_deg = 65.0, elbow_cone_deg = 55.0;
    double leg_cone_deg = 22.0, knee_cone_deg = 18.0;
};

struct SceneConfig {
    int min_persons = 1, max_persons = 4;
    VoxelSpace space = default_motion_space();
    int camera_count = 5;
    double ring_radius_mm = 5300.0, ring_height_mm = 2400.0, lookat_height_mm = 1000.0;
    int image_width = 128, image_height = 96;
    double focal_px = 80.0;
    double sigma_px = 2.5;
    double joint_dropout = 0.0;    // probability a joint is dropped per view
    double pixel_jitter_px = 0.0;  // gaussian jitter of blob centers per view
    double min_center_distance_mm = 1200.0;
    double placement_margin_mm = 1100.0;
    PoseParams pose;

    void validate() const {
        if (min_persons < 0 || max_persons < min_persons)
            throw std::invalid_argument("scene config field person range invalid");
        if (camera_count < 1) throw std::invalid_argument("scene config field camera_count must be >= 1");
        if (image_width < 8 || image_height < 8) throw std::invalid_argument("scene config field image size too small");
        if (sigma_px <= 0.0) throw std::invalid_argument("scene config field sigma_px must be positive");
        if (focal_px <= 0.0) throw std::invalid_argument("scene config field focal_px must be positive");
        space.validate();
    }
};

struct Frame {
    std::int64_t id = 0;
    std::vector<PoseSkeleton> poses;
    HeatmapSet heatmaps;
};

// Inward-looking ring of identical pinhole cameras.
inline std::vector<Camera> make_camera_ring(const SceneConfig& cfg) {
    const Vec3 center{cfg.space.origin.x + cfg.space.extent.x / 2.0, cfg.space.origin.y + cfg.space.extent.y / 2.0,
                      cfg.lookat_height_mm};
    std::vector<Camera> cams;
    cams.reserve(static_cast<std::size_t>(cfg.camera_count));
    for (int c = 0; c < cfg.camera_count; ++c) {
        const double ang = 2.0 * M_PI * c / cfg.camera_count;
        const Vec3 pos{center.x + cfg.ring_radius_mm * std::cos(ang), center.y + cfg.ring_radius_mm * std::sin(ang),
                       cfg.ring_height_mm};
        const Vec3 fwd = (center - pos).normalized();
        const Vec3 right = fwd.cross({0.0, 0.0, 1.0}).normalized();
        const Vec3 down = fwd.cross(right);
        Camera cam;
        cam.id = "cam" + std::to_string(c);
        cam.fx = cam.fy = cfg.focal_px;
        cam.cx = cfg.image_width / 2.0;
        cam.cy = cfg.image_height / 2.0;
        cam.width = cfg.image_width;
        cam.height = cfg.image_height;
        cam.R = Mat3::from_rows(right, down, fwd);
        cam.t = (cam.R * pos) * -1.0;
        cam.validate();
        cams.push_back(cam);
    }
    return cams;
}

namespace synth_detail {

inline Vec3 rotate_z(const Vec3& v, double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    return {c * v.x - s * v.y, s * v.x + c * v.y, v.z};
}

// Uniform unit vector within a cone of half-angle around an axis.
inline Vec3 cone_dir(const Vec3& axis, double half_angle_rad, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double cos_max = std::cos(half_angle_rad);
    const double cos_t = cos_max + (1.0 - cos_max) * u01(rng);
    const double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
    const double psi = 2.0 * M_PI * u01(rng);
    const Vec3 a = axis.normalized();
    Vec3 helper = std::abs(a.z) < 0.9 ? Vec3{0.0, 0.0, 1.0} : Vec3{1.0, 0.0, 0.0};
    const Vec3 e1 = a.cross(helper).normalized();
    const Vec3 e2 = a.cross(e1);
    return a * cos_t + (e1 * std::cos(psi) + e2 * std::sin(psi)) * sin_t;
}

}  // namespace synth_detail

// Articulated pose around a pelvis position: torso within a cone of vertical,
// arms hang in wide cones, legs in narrow ones, heading free.
inline PoseSkeleton sample_pose(const Vec3& pelvis_xy_center, const PoseParams& pp, std::mt19937_64& rng) {
    using synth_detail::cone_dir;
    using synth_detail::rotate_z;
    const double deg = M_PI / 180.0;
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    PoseSkeleton pose(15);
    const double theta = 2.0 * M_PI * u01(rng);
    const Vec3 pelvis{pelvis_xy_center.x, pelvis_xy_center.y,
                      pp.pelvis_z_min + (pp.pelvis_z_max - pp.pelvis_z_min) * u01(rng)};
    pose.joints[2] = pelvis;  // mid_hip
    const Vec3 lat = rotate_z({0.0, 1.0, 0.0}, theta);
    pose.joints[6] = pelvis + lat * pp.hip_half_width;   // l_hip
    pose.joints[12] = pelvis - lat * pp.hip_half_width;  // r_hip

    const Vec3 up = cone_dir({0.0, 0.0, 1.0}, pp.torso_cone_deg * deg, rng);
    const Vec3 neck = pelvis + up * pp.torso_len;
    pose.joints[0] = neck;
    const Vec3 fwd = rotate_z({1.0, 0.0, 0.0}, theta);
    pose.joints[1] = neck + (fwd * 0.6 + Vec3{0.0, 0.0, 0.8}).normalized() * pp.nose_len;  // nose

    pose.joints[3] = neck + lat * pp.shoulder_half_width - Vec3{0.0, 0.0, 30.0};  // l_shoulder
    pose.joints[9] = neck - lat * pp.shoulder_half_width - Vec3{0.0, 0.0, 30.0};  // r_shoulder
    for (int side = 0; side < 2; ++side) {
        const int sh = side == 0 ? 3 : 9;
        const Vec3 upper = cone_dir({0.0, 0.0, -1.0}, pp.arm_cone_deg * deg, rng);
        pose.joints[sh + 1] = pose.joints[sh] + upper * pp.upper_arm;
        const Vec3 fore = cone_dir(upper, pp.elbow_cone_deg * deg, rng);
        pose.joints[sh + 2] = pose.joints[sh + 1] + fore * pp.forearm;
    }
    for (int side = 0; side < 2; ++side) {
        const int hip = side == 0 ? 6 : 12;
        for (int attempt = 0;; ++attempt) {
            const Vec3 th = cone_dir({0.0, 0.0, -1.0}, pp.leg_cone_deg * deg, rng);
            const Vec3 knee = pose.joints[hip] + th * pp.thigh;
            const Vec3 sh = cone_dir(th, pp.knee_cone_deg * deg, rng);
            const Vec3 ankle = knee + sh * pp.shin;
            if (ankle.z >= 20.0 || attempt >= 16) {
                pose.joints[hip + 1] = knee;
                pose.joints[hip + 2] = {ankle.x, ankle.y, std::max(ankle.z, 20.0)};
                break;
            }
        }
    }
    return pose;
}

// Renders per-camera, per-joint Gaussian blobs (peak 1.0). Joints behind the
// camera or projecting outside the image are omitted. Multiple persons max
// into the shared joint channel.
inline HeatmapSet render_heatmaps(const std::vector<PoseSkeleton>& poses, const std::vector<Camera>& cameras,
                                  double sigma_px, double joint_dropout, double pixel_jitter_px,
                                  std::mt19937_64& rng) {
    const int joints = poses.empty() ? cmu15().joint_count : poses[0].joint_count();
    HeatmapSet set;
    set.reserve(cameras.size());
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> jitter(0.0, 1.0);
    const int win = static_cast<int>(std::ceil(6.0 * sigma_px));
    const double inv2s2 = 1.0 / (2.0 * sigma_px * sigma_px);
    for (const Camera& cam : cameras) {
        Tensor<float> heat({joints, cam.height, cam.width});
        for (const PoseSkeleton& pose : poses) {
            for (int k = 0; k < pose.joint_count(); ++k) {
                if (!pose.valid[k]) continue;
                const Projection pr = project_point(cam, pose.joints[k]);
                if (pr.behind) continue;
                double u = pr.pixel.x, v = pr.pixel.y;
                if (u < 0.0 || v < 0.0 || u >= cam.width || v >= cam.height) continue;
                if (joint_dropout > 0.0 && u01(rng) < joint_dropout) continue;
                if (pixel_jitter_px > 0.0) {
                    u += jitter(rng) * pixel_jitter_px;
                    v += jitter(rng) * pixel_jitter_px;
                }
                const int x0 = std::max(0, static_cast<int>(std::floor(u)) - win);
                const int x1 = std::min(cam.width - 1, static_cast<int>(std::floor(u)) + win);
                const int y0 = std::max(0, static_cast<int>(std::floor(v)) - win);
                const int y1 = std::min(cam.height - 1, static_cast<int>(std::floor(v)) + win);
                for (int y = y0; y <= y1; ++y)
                    for (int x = x0; x <= x1; ++x) {
                        const double d2 = (x - u) * (x - u) + (y - v) * (y - v);
                        const float val = static_cast<float>(std::exp(-d2 * inv2s2));
                        float& cell = heat.at3(k, y, x);
                        cell = std::max(cell, val);
                    }
            }
        }
        set.push_back(std::move(heat));
    }
    return set;
}

// One deterministic frame: person placement by rejection sampling (minimum
// center spacing), articulated poses, rendered heatmaps. The per-frame RNG is
// derived from (seed, frame id) so frames are independent of generation order.
inline Frame sample_scene(const SceneConfig& cfg, const std::vector<Camera>& cameras, std::uint64_t seed,
                          std::int64_t frame_id) {
    cfg.validate();
    std::mt19937_64 rng = make_rng(seed, static_cast<std::uint64_t>(frame_id));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uniform_int_distribution<int> pcount(cfg.min_persons, cfg.max_persons);

    Frame frame;
    frame.id = frame_id;
    const int persons = pcount(rng);
    const double x0 = cfg.space.origin.x + cfg.placement_margin_mm;
    const double x1 = cfg.space.origin.x + cfg.space.extent.x - cfg.placement_margin_mm;
    const double y0 = cfg.space.origin.y + cfg.placement_margin_mm;
    const double y1 = cfg.space.origin.y + cfg.space.extent.y - cfg.placement_margin_mm;
    if (x1 <= x0 || y1 <= y0) throw std::invalid_argument("scene config field placement_margin_mm leaves no area");

    std::vector<Vec3> centers;
    for (int p = 0; p < persons; ++p) {
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            const Vec3 c{x0 + (x1 - x0) * u01(rng), y0 + (y1 - y0) * u01(rng), 0.0};
            bool ok = true;
            for (const Vec3& prev : centers) {
                const double dx = c.x - prev.x, dy = c.y - prev.y;
                if (dx * dx + dy * dy < cfg.min_center_distance_mm * cfg.min_center_distance_mm) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                centers.push_back(c);
                placed = true;
            }
        }
        if (!placed) throw std::runtime_error("sample_scene: rejection budget exhausted, space too crowded");
    }
    for (const Vec3& c : centers) frame.poses.push_back(sample_pose(c, cfg.pose, rng));
    frame.heatmaps = render_heatmaps(frame.poses, cameras, cfg.sigma_px, cfg.joint_dropout, cfg.pixel_jitter_px, rng);
    return frame;
}

// --- scene files -----------------------------------------------------------
//
// A scene is a directory: scene.json holds config, cameras, skeleton and the
// frame table; each frame's heatmaps live in one OVXT blob, [C, K, H, W].

inline void to_json(nlohmann::json& j, const SceneConfig& c) {
    j = nlohmann::json{{"min_persons", c.min_persons},
                       {"max_persons", c.max_persons},
                       {"space",
                        {{"origin", {c.space.origin.x, c.space.origin.y, c.space.origin.z}},
                         {"extent", {c.space.extent.x, c.space.extent.y, c.space.extent.z}},
                         {"resolution", {c.space.res[0], c.space.res[1], c.space.res[2]}}}},
                       {"camera_count", c.camera_count},
                       {"ring_radius_mm", c.ring_radius_mm},
                       {"ring_height_mm", c.ring_height_mm},
                       {"lookat_height_mm", c.lookat_height_mm},
                       {"image_width", c.image_width},
                       {"image_height", c.image_height},
                       {"focal_px", c.focal_px},
                       {"sigma_px", c.sigma_px},
                       {"joint_dropout", c.joint_dropout},
                       {"pixel_jitter_px", c.pixel_jitter_px},
                       {"min_center_distance_mm", c.min_center_distance_mm},
                       {"placement_margin_mm", c.placement_margin_mm},
                       {"pose",
                        {{"pelvis_z_min", c.pose.pelvis_z_min},
                         {"pelvis_z_max", c.pose.pelvis_z_max},
                         {"hip_half_width", c.pose.hip_half_width},
                         {"torso_len", c.pose.torso_len},
                         {"nose_len", c.pose.nose_len},
                         {"shoulder_half_width", c.pose.shoulder_half_width},
                         {"upper_arm", c.pose.upper_arm},
                         {"forearm", c.pose.forearm},
                         {"thigh", c.pose.thigh},
                         {"shin", c.pose.shin},
                         {"torso_cone_deg", c.pose.torso_cone_deg},
                         {"arm_cone_deg", c.pose.arm_cone_deg},
                         {"elbow_cone_deg", c.pose.elbow_cone_deg},
                         {"leg_cone_deg", c.pose.leg_cone_deg},
                         {"knee_cone_deg", c.pose.knee_cone_deg}}}};
}

inline void from_json(const nlohmann::json& j, SceneConfig& c) {
    j.at("min_persons").get_to(c.min_persons);
    j.at("max_persons").get_to(c.max_persons);
    const auto& sp = j.at("space");
    c.space.origin = {sp.at("origin")[0], sp.at("origin")[1], sp.at("origin")[2]};
    c.space.extent = {sp.at("extent")[0], sp.at("extent")[1], sp.at("extent")[2]};
    c.space.res = {sp.at("resolution")[0], sp.at("resolution")[1], sp.at("resolution")[2]};
    j.at("camera_count").get_to(c.camera_count);
    j.at("ring_radius_mm").get_to(c.ring_radius_mm);
    j.at("ring_height_mm").get_to(c.ring_height_mm);
    j.at("lookat_height_mm").get_to(c.lookat_height_mm);
    j.at("image_width").get_to(c.image_width);
    j.at("image_height").get_to(c.image_height);
    j.at("focal_px").get_to(c.focal_px);
    j.at("sigma_px").get_to(c.sigma_px);
    j.at("joint_dropout").get_to(c.joint_dropout);
    j.at("pixel_jitter_px").get_to(c.pixel_jitter_px);
    j.at("min_center_distance_mm").get_to(c.min_center_distance_mm);
    j.at("placement_margin_mm").get_to(c.placement_margin_mm);
    const auto& pp = j.at("pose");
    pp.at("pelvis_z_min").get_to(c.pose.pelvis_z_min);
    pp.at("pelvis_z_max").get_to(c.pose.pelvis_z_max);
    pp.at("hip_half_width").get_to(c.pose.hip_half_width);
    pp.at("torso_len").get_to(c.pose.torso_len);
    pp.at("nose_len").get_to(c.pose.nose_len);
    pp.at("shoulder_half_width").get_to(c.pose.shoulder_half_width);
    pp.at("upper_arm").get_to(c.pose.upper_arm);
    pp.at("forearm").get_to(c.pose.forearm);
    pp.at("thigh").get_to(c.pose.thigh);
    pp.at("shin").get_to(c.pose.shin);
    pp.at("torso_cone_deg").get_to(c.pose.torso_cone_deg);
    pp.at("arm_cone_deg").get_to(c.pose.arm_cone_deg);
    pp.at("elbow_cone_deg").get_to(c.pose.elbow_cone_deg);
    pp.at("leg_cone_deg").get_to(c.pose.leg_cone_deg);
    pp.at("knee_cone_deg").get_to(c.pose.knee_cone_deg);
}

inline nlohmann::json camera_to_json(const Camera& cam) {
    return nlohmann::json{{"id", cam.id},
                          {"fx", cam.fx},
                          {"fy", cam.fy},
                          {"cx", cam.cx},
                          {"cy", cam.cy},
                          {"width", cam.width},
                          {"height", cam.height},
                          {"R", cam.R.m},
                          {"t", {cam.t.x, cam.t.y, cam.t.z}}};
}

inline Camera camera_from_json(const nlohmann::json& j) {
    Camera cam;
    j.at("id").get_to(cam.id);
    j.at("fx").get_to(cam.fx);
    j.at("fy").get_to(cam.fy);
    j.at("cx").get_to(cam.cx);
    j.at("cy").get_to(cam.cy);
    j.at("width").get_to(cam.width);
    j.at("height").get_to(cam.height);
    j.at("R").get_to(cam.R.m);
    cam.t = {j.at("t")[0], j.at("t")[1], j.at("t")[2]};
    cam.validate();
    return cam;
}

class SceneWriter {
  public:
    SceneWriter(std::string dir, const SceneConfig& cfg, const std::vector<Camera>& cameras,
                const SkeletonDef& skeleton, std::uint64_t seed)
        : dir_(std::move(dir)), cfg_(cfg), seed_(seed) {
        namespace fs = std::filesystem;
        fs::create_directories(fs::path(dir_) / "frames");
        root_["format"] = "orthovox-scene";
        root_["version"] = 1;
        root_["seed"] = seed;
        root_["config"] = cfg;
        for (const auto& cam : cameras) root_["cameras"].push_back(camera_to_json(cam));
        root_["skeleton"] = {{"joint_count", skeleton.joint_count},
                             {"joint_names", skeleton.joint_names},
                             {"limbs", skeleton.limbs}};
        root_["frames"] = nlohmann::json::array();
    }

    void add_frame(const Frame& frame) {
        char blob_name[64];
        std::snprintf(blob_name, sizeof blob_name, "frames/frame_%06lld.ovxt",
                      static_cast<long long>(frame.id));
        const int cams = static_cast<int>(frame.heatmaps.size());
        if (cams > 0) {
            const auto& h0 = frame.heatmaps[0];
            Tensor<float> blob({cams, h0.dim(0), h0.dim(1), h0.dim(2)});
            for (int c = 0; c < cams; ++c)
                std::copy(frame.heatmaps[c].data.begin(), frame.heatmaps[c].data.end(),
                          blob.data.begin() + static_cast<std::size_t>(c) * frame.heatmaps[c].numel());
            write_tensor((std::filesystem::path(dir_) / blob_name).string(), blob);
        }
        nlohmann::json fj;
        fj["id"] = frame.id;
        fj["heatmaps"] = blob_name;
        fj["poses"] = nlohmann::json::array();
        for (const auto& pose : frame.poses) {
            nlohmann::json pj;
            pj["joints"] = nlohmann::json::array();
            for (const auto& jt : pose.joints) pj["joints"].push_back({jt.x, jt.y, jt.z});
            pj["valid"] = pose.valid;
            fj["poses"].push_back(std::move(pj));
        }
        root_["frames"].push_back(std::move(fj));
    }

    void finalize() {
        std::ofstream os(std::filesystem::path(dir_) / "scene.json");
        if (!os) throw std::runtime_error("cannot write scene.json in " + dir_);
        os << root_.dump(1) << "\n";
        if (!os) throw std::runtime_error("write failed for scene.json in " + dir_);
    }

  private:
    std::string dir_;
    SceneConfig cfg_;
    std::uint64_t seed_;
    nlohmann::json root_;
};

class SceneReader {
  public:
    explicit SceneReader(std::string dir) : dir_(std::move(dir)) {
        std::ifstream is(std::filesystem::path(dir_) / "scene.json");
        if (!is) throw std::runtime_error("cannot open scene.json in " + dir_);
        nlohmann::json root = nlohmann::json::parse(is);
        if (root.value("format", "") != "orthovox-scene")
            throw std::runtime_error("not an orthovox scene: " + dir_);
        if (root.value("version", 0) != 1) throw std::runtime_error("unsupported scene version in " + dir_);
        seed_ = root.value("seed", 0ull);
        config_ = root.at("config").get<SceneConfig>();
        for (const auto& cj : root.at("cameras")) cameras_.push_back(camera_from_json(cj));
        const auto& sk = root.at("skeleton");
        skeleton_.joint_count = sk.at("joint_count");
        skeleton_.joint_names = sk.at("joint_names").get<std::vector<std::string>>();
        skeleton_.limbs = sk.at("limbs").get<std::vector<std::pair<int, int>>>();
        skeleton_.validate();
        for (const auto& fj : root.at("frames")) {
            FrameMeta m;
            m.id = fj.at("id");
            m.blob = fj.at("heatmaps");
            for (const auto& pj : fj.at("poses")) {
                PoseSkeleton pose(skeleton_.joint_count);
                const auto& joints = pj.at("joints");
                for (int k = 0; k < skeleton_.joint_count; ++k)
                    pose.joints[k] = {joints[k][0], joints[k][1], joints[k][2]};
                pose.valid = pj.at("valid").get<std::vector<std::uint8_t>>();
                m.poses.push_back(std::move(pose));
            }
            frames_.push_back(std::move(m));
        }
    }

    const SceneConfig& config() const { return config_; }
    const std::vector<Camera>& cameras() const { return cameras_; }
    const SkeletonDef& skeleton() const { return skeleton_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t frame_count() const { return frames_.size(); }
    const std::vector<PoseSkeleton>& poses(std::size_t idx) const { return frames_.at(idx).poses; }
    std::int64_t frame_id(std::size_t idx) const { return frames_.at(idx).id; }

    // Loads the heatmap blob from disk; call per frame to keep memory flat.
    Frame frame(std::size_t idx) const {
        const FrameMeta& m = frames_.at(idx);
        Frame f;
        f.id = m.id;
        f.poses = m.poses;
        Tensor<float> blob = read_tensor((std::filesystem::path(dir_) / m.blob).string());
        if (blob.rank() != 4 || blob.dim(0) != static_cast<int>(cameras_.size()))
            throw std::runtime_error("heatmap blob shape mismatch in frame " + std::to_string(m.id));
        const std::size_t per_cam = blob.numel() / static_cast<std::size_t>(blob.dim(0));
        for (int c = 0; c < blob.dim(0); ++c) {
            Tensor<float> h({blob.dim(1), blob.dim(2), blob.dim(3)});
            std::copy(blob.data.begin() + static_cast<std::size_t>(c) * per_cam,
                      blob.data.begin() + static_cast<std::size_t>(c + 1) * per_cam, h.data.begin());
            f.heatmaps.push_back(std::move(h));
        }
        return f;
    }

  private:
    struct FrameMeta {
        std::int64_t id = 0;
        std::string blob;
        std::vector<PoseSkeleton> poses;
    };
    std::string dir_;
    std::uint64_t seed_ = 0;
    SceneConfig config_;
    std::vector<Camera> cameras_;
    SkeletonDef skeleton_;
    std::vector<FrameMeta> frames_;
};

// Convenience wrapper used by the CLI and tests: generate + write a scene.
inline void write_scene(const std::string& dir, const SceneConfig& cfg, std::uint64_t seed, int frame_count) {
    cfg.validate();
    const auto cameras = make_camera_ring(cfg);
    SceneWriter writer(dir, cfg, cameras, cmu15(), seed);
    for (int f = 0; f < frame_count; ++f) writer.add_frame(sample_scene(cfg, cameras, seed, f));
    writer.finalize();
}

}  // namespace ovx
