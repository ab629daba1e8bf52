// Copyright (C) 2026 Orthovox Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "orthovox/model.hpp"
#include "orthovox/pipeline.hpp"
#include "orthovox/synth.hpp"
#include "orthovox/util.hpp"

namespace ovx {

// Accumulating wall-clock timer keyed by stage name. Nested stages are plain
// path-style names ("jln/feature"); the caller owns the naming discipline.
class StageTimer {
  public:
    class Scope {
      public:
        Scope(StageTimer& t, std::string name) : t_(&t), name_(std::move(name)) {}
        Scope(Scope&& o) noexcept : t_(o.t_), name_(std::move(o.name_)), w_(o.w_) { o.t_ = nullptr; }
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;
        Scope& operator=(Scope&&) = delete;
        ~Scope() {
            if (t_) t_->add(name_, w_.ms());
        }

      private:
        StageTimer* t_;
        std::string name_;
        WallTimer w_;
    };

    Scope scope(std::string name) { return Scope(*this, std::move(name)); }
    void add(const std::string& name, double ms) { acc_[name] += ms; }
    double ms(const std::string& name) const {
        auto it = acc_.find(name);
        return it == acc_.end() ? 0.0 : it->second;
    }
    const std::map<std::string, double>& stages() const { return acc_; }
    void reset() { acc_.clear(); }

  private:
    std::map<std::string, double> acc_;
};

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct MacBreakdown {
    std::int64_t hdn2d = 0;
    std::int64_t hdn1d = 0;
    std::int64_t pose2d = 0;
    std::int64_t conf = 0;
    std::int64_t total() const { return hdn2d + hdn1d + pose2d + conf; }
};

// Analytic multiply-accumulate counts for one frame: the BEV nets run once,
// the per-person nets run once per localized person.
inline MacBreakdown count_model_macs(const PoseModel& m, const VoxelSpace& space, int fine_res, int columns,
                                     int persons) {
    MacBreakdown b;
    b.hdn2d = m.hdn2d.macs({1, m.joints, space.res[0], space.res[1]});
    if (columns > 0) b.hdn1d = m.hdn1d.macs({columns, m.joints, space.res[2]});
    const std::vector<int> plane_in = {3, m.joints, fine_res, fine_res};
    b.pose2d = persons * m.pose2d.macs(plane_in);
    b.conf = persons * m.conf.macs(plane_in);
    return b;
}

struct CostRow {
    std::string sweep;
    double axis = 0.0;
    std::string stage;
    double ms = 0.0;
    std::int64_t macs = 0;
};

struct CostReport {
    std::string config_digest;
    std::vector<CostRow> rows;

    void append(const CostReport& other) { rows.insert(rows.end(), other.rows.begin(), other.rows.end()); }
};

inline void write_cost_csv(const CostReport& report, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write benchmark CSV: " + path);
    os << "sweep,axis,stage,ms,macs,config_digest\n";
    for (const auto& r : report.rows)
        os << r.sweep << "," << r.axis << "," << r.stage << "," << r.ms << "," << r.macs << ","
           << report.config_digest << "\n";
}

namespace bench_detail {

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                           "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

}  // namespace bench_detail

// Minimal line chart: one polyline per stage, ms over the sweep axis.
inline void write_cost_svg(const CostReport& report, const std::string& sweep, const std::string& path) {
    std::map<std::string, std::vector<std::pair<double, double>>> series;
    double xmin = 0, xmax = 1, ymax = 1e-9;
    bool first = true;
    for (const auto& r : report.rows) {
        if (r.sweep != sweep) continue;
        series[r.stage].emplace_back(r.axis, r.ms);
        if (first || r.axis < xmin) xmin = r.axis;
        if (first || r.axis > xmax) xmax = r.axis;
        ymax = std::max(ymax, r.ms);
        first = false;
    }
    if (series.empty()) throw std::invalid_argument("no rows for sweep " + sweep);
    if (xmax <= xmin) xmax = xmin + 1;

    const double w = 720, h = 420, ml = 70, mr = 170, mt = 40, mb = 50;
    const double pw = w - ml - mr, ph = h - mt - mb;
    auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
    auto sy = [&](double y) { return mt + ph - y / ymax * ph; };

    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write benchmark SVG: " + path);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << ml << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">" << sweep
       << " sweep (median ms per stage)</text>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\"" << mt + ph
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
       << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double yv = ymax * i / 4.0;
        os << "<text x=\"" << ml - 8 << "\" y=\"" << sy(yv) + 4
           << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << yv << "</text>\n";
    }
    int ci = 0;
    for (auto& [stage, pts] : series) {
        std::sort(pts.begin(), pts.end());
        const char* color = bench_detail::kPalette[ci % 8];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (const auto& [x, y] : pts) os << sx(x) << "," << sy(y) << " ";
        os << "\"/>\n";
        for (const auto& [x, y] : pts) {
            os << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(y) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
            os << "<text x=\"" << sx(x) << "\" y=\"" << mt + ph + 16
               << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << x << "</text>\n";
        }
        os << "<rect x=\"" << ml + pw + 16 << "\" y=\"" << mt + 18 * ci << "\" width=\"12\" height=\"12\" fill=\""
           << color << "\"/>\n";
        os << "<text x=\"" << ml + pw + 34 << "\" y=\"" << mt + 18 * ci + 10
           << "\" font-family=\"sans-serif\" font-size=\"12\">" << stage << "</text>\n";
        ++ci;
    }
    os << "</svg>\n";
}

inline Detection3D gt_detection(const PoseSkeleton& pose, const SkeletonDef& skeleton, double delta_mm,
                                double box_height_mm) {
    Detection3D d;
    d.center = pose.root_center(skeleton);
    const RectXY r = pose_bbox_xy(pose, delta_mm);
    d.size_xy = {r.x1 - r.x0, r.y1 - r.y0};
    d.height_mm = box_height_mm;
    d.score_2d = d.score_1d = d.score = 1.0;
    return d;
}

struct JlnStageTimes {
    double feature_ms = 0.0;
    double infer_ms = 0.0;
};

// localize_person with the feature-construction and network halves timed
// separately; the pose output itself is discarded.
inline JlnStageTimes timed_localize(const HeatmapSet& heatmaps, const std::vector<Camera>& cameras,
                                    const Detection3D& det, PoseModel& m, const JlnConfig& jc) {
    JlnStageTimes t;
    WallTimer w;
    FeatureVolume<float> cube =
        build_person_volume<float>(heatmaps, cameras, det.center, jc.cube_mm, jc.fine_res, jc.threads);
    cube = mask_person_volume(cube, det.bev_rect());
    const Tensor<float> batch = plane_batch(project_triplanes(cube));
    t.feature_ms = w.ms();
    w.reset();
    const Tensor<float> logits = m.pose2d.forward(batch, false)[0];
    const SoftArgmax<float> sm = softargmax_from_logits(logits, static_cast<float>(jc.beta));
    const Tensor<float> cl = m.conf.forward(sm.prob, false);
    const FusionResult<float> fused = fuse_pairwise(sm.coords, cl);
    (void)cube_to_world(fused.fused, cube.space);
    t.infer_ms = w.ms();
    return t;
}

struct BenchOptions {
    std::vector<int> granularities = {64, 48, 32};
    int persons_min = 1;
    int persons_max = 10;
    int cameras_min = 3;
    int cameras_max = 12;
    int runs = 5;
    std::uint64_t seed = 7;
};

namespace bench_detail {

inline Frame make_bench_frame(SceneConfig cfg, int persons, std::uint64_t seed,
                              std::vector<Camera>& cameras_out) {
    cfg.min_persons = persons;
    cfg.max_persons = persons;
    cfg.validate();
    cameras_out = make_camera_ring(cfg);
    return sample_scene(cfg, cameras_out, seed, 0);
}

}  // namespace bench_detail

// JLN cost as a function of the fine granularity, one person.
inline CostReport sweep_granularity(const RunConfig& cfg, PoseModel& model, const BenchOptions& opt) {
    CostReport rep;
    rep.config_digest = config_digest(cfg);
    std::vector<Camera> cameras;
    const Frame frame = bench_detail::make_bench_frame(cfg.scene, 1, opt.seed, cameras);
    const Detection3D det =
        gt_detection(frame.poses[0], cmu15(), cfg.hdn.delta_mm, cfg.hdn.box_height_mm);
    for (int res : opt.granularities) {
        JlnConfig jc = jln_config(cfg);
        jc.fine_res = res;
        std::vector<double> f, i;
        for (int r = 0; r < opt.runs; ++r) {
            const JlnStageTimes t = timed_localize(frame.heatmaps, cameras, det, model, jc);
            f.push_back(t.feature_ms);
            i.push_back(t.infer_ms);
        }
        const std::int64_t net_macs = model.pose2d.macs({3, model.joints, res, res}) +
                                      model.conf.macs({3, model.joints, res, res});
        rep.rows.push_back({"granularity", static_cast<double>(res), "jln_feature", median(f), 0});
        rep.rows.push_back({"granularity", static_cast<double>(res), "jln_infer", median(i), net_macs});
        rep.rows.push_back({"granularity", static_cast<double>(res), "jln_total", median(f) + median(i), net_macs});
    }
    return rep;
}

// Full-pipeline cost as the number of active persons grows. JLN work is
// driven off GT boxes so the load tracks the person count exactly.
inline CostReport sweep_persons(const RunConfig& cfg, PoseModel& model, const BenchOptions& opt) {
    CostReport rep;
    rep.config_digest = config_digest(cfg);
    const JlnConfig jc = jln_config(cfg);
    const DecodeParams dp = decode_params(cfg);
    for (int n = opt.persons_min; n <= opt.persons_max; ++n) {
        std::vector<Camera> cameras;
        const Frame frame =
            bench_detail::make_bench_frame(cfg.scene, n, opt.seed + static_cast<std::uint64_t>(n), cameras);
        std::vector<Detection3D> dets;
        for (const auto& pose : frame.poses)
            dets.push_back(gt_detection(pose, cmu15(), cfg.hdn.delta_mm, cfg.hdn.box_height_mm));

        std::vector<double> vol_ms, hdn_ms, feat_ms, inf_ms;
        for (int r = 0; r < opt.runs; ++r) {
            WallTimer w;
            const FeatureVolume<float> vol =
                build_volume<float>(frame.heatmaps, cameras, cfg.scene.space, cfg.threads);
            vol_ms.push_back(w.ms());
            w.reset();
            (void)run_hdn(vol, model, dp);
            hdn_ms.push_back(w.ms());
            double f = 0, i = 0;
            for (const auto& det : dets) {
                const JlnStageTimes t = timed_localize(frame.heatmaps, cameras, det, model, jc);
                f += t.feature_ms;
                i += t.infer_ms;
            }
            feat_ms.push_back(f);
            inf_ms.push_back(i);
        }
        const MacBreakdown mb = count_model_macs(model, cfg.scene.space, jc.fine_res,
                                                 std::min(n, cfg.hdn.max_proposals), n);
        const double axis = n;
        rep.rows.push_back({"persons", axis, "volume", median(vol_ms), 0});
        rep.rows.push_back({"persons", axis, "hdn", median(hdn_ms), mb.hdn2d + mb.hdn1d});
        rep.rows.push_back({"persons", axis, "jln_feature", median(feat_ms), 0});
        rep.rows.push_back({"persons", axis, "jln_infer", median(inf_ms), mb.pose2d + mb.conf});
        rep.rows.push_back({"persons", axis, "total",
                            median(vol_ms) + median(hdn_ms) + median(feat_ms) + median(inf_ms), mb.total()});
    }
    return rep;
}

// Volume-construction cost as the camera count grows; network cost is
// camera-independent by design, which the constant macs column documents.
inline CostReport sweep_cameras(const RunConfig& cfg, PoseModel& model, const BenchOptions& opt) {
    CostReport rep;
    rep.config_digest = config_digest(cfg);
    const JlnConfig jc = jln_config(cfg);
    const DecodeParams dp = decode_params(cfg);
    for (int c = opt.cameras_min; c <= opt.cameras_max; ++c) {
        SceneConfig sc = cfg.scene;
        sc.camera_count = c;
        std::vector<Camera> cameras;
        std::vector<Frame> frames;
        {
            sc.min_persons = sc.max_persons = 2;
            sc.validate();
            cameras = make_camera_ring(sc);
            frames.push_back(sample_scene(sc, cameras, opt.seed + static_cast<std::uint64_t>(100 + c), 0));
        }
        const Frame& frame = frames[0];
        std::vector<Detection3D> dets;
        for (const auto& pose : frame.poses)
            dets.push_back(gt_detection(pose, cmu15(), cfg.hdn.delta_mm, cfg.hdn.box_height_mm));

        std::vector<double> vol_ms, hdn_ms, jln_ms;
        for (int r = 0; r < opt.runs; ++r) {
            WallTimer w;
            const FeatureVolume<float> vol = build_volume<float>(frame.heatmaps, cameras, sc.space, cfg.threads);
            vol_ms.push_back(w.ms());
            w.reset();
            (void)run_hdn(vol, model, dp);
            hdn_ms.push_back(w.ms());
            w.reset();
            for (const auto& det : dets) (void)timed_localize(frame.heatmaps, cameras, det, model, jc);
            jln_ms.push_back(w.ms());
        }
        const MacBreakdown mb = count_model_macs(model, sc.space, jc.fine_res,
                                                 std::min(2, cfg.hdn.max_proposals), 2);
        const double axis = c;
        rep.rows.push_back({"cameras", axis, "volume", median(vol_ms), 0});
        rep.rows.push_back({"cameras", axis, "hdn", median(hdn_ms), mb.hdn2d + mb.hdn1d});
        rep.rows.push_back({"cameras", axis, "jln", median(jln_ms), mb.pose2d + mb.conf});
    }
    return rep;
}

inline CostReport run_benchmarks(const RunConfig& cfg, PoseModel& model, const BenchOptions& opt) {
    CostReport rep = sweep_granularity(cfg, model, opt);
    rep.append(sweep_persons(cfg, model, opt));
    rep.append(sweep_cameras(cfg, model, opt));
    return rep;
}

}  // namespace ovx
