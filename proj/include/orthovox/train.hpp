// Copyright (C) 2026 Orthovox Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "orthovox/adam.hpp"
#include "orthovox/config.hpp"
#include "orthovox/hdn.hpp"
#include "orthovox/jln.hpp"
#include "orthovox/model.hpp"
#include "orthovox/synth.hpp"
#include "orthovox/util.hpp"
#include "orthovox/volume.hpp"

namespace ovx {

struct BatchStats {
    int epoch = 0;
    int batch = 0;
    double hdn = 0.0;
    double jln = 0.0;
};

struct EpochStats {
    int epoch = 0;
    double l2d = 0.0, lsize = 0.0, loff = 0.0, l1d = 0.0, lhdn = 0.0;
    double lhm = 0.0, lconf = 0.0, ljln = 0.0;
    double wall_ms = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> epochs;
    std::vector<BatchStats> batches;
    std::string config_digest;
    std::string checkpoint_path;
};

inline void write_train_log(const std::string& path, const TrainResult& res) {
    nlohmann::json j;
    j["config_digest"] = res.config_digest;
    j["epochs"] = nlohmann::json::array();
    for (const auto& e : res.epochs)
        j["epochs"].push_back({{"epoch", e.epoch},
                               {"l2d", e.l2d},
                               {"lsize", e.lsize},
                               {"loff", e.loff},
                               {"l1d", e.l1d},
                               {"lhdn", e.lhdn},
                               {"lhm", e.lhm},
                               {"lconf", e.lconf},
                               {"ljln", e.ljln},
                               {"wall_ms", e.wall_ms}});
    j["batches"] = nlohmann::json::array();
    for (const auto& b : res.batches)
        j["batches"].push_back({{"epoch", b.epoch}, {"batch", b.batch}, {"hdn", b.hdn}, {"jln", b.jln}});
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write training log: " + path);
    os << j.dump(1) << "\n";
}

// Alternating two-phase trainer: each batch applies one Adam step to the
// detection pair (hdn2d + hdn1d) and one to the localization pair
// (pose2d + conf). Localization trains on GT-centered, jittered cubes so it
// never depends on detector quality. All randomness is derived per
// (seed, epoch, frame, person), which makes resumed runs bit-identical.
class Trainer {
  public:
    Trainer(const RunConfig& cfg, PoseModel& model, const SceneReader& scene)
        : cfg_(cfg),
          model_(model),
          scene_(scene),
          adam_hdn_(hdn_params(model), static_cast<float>(cfg.train.learning_rate)),
          adam_jln_(jln_params(model), static_cast<float>(cfg.train.learning_rate)),
          cache_(scene.frame_count()) {}

    Adam<float>& adam_hdn() { return adam_hdn_; }
    Adam<float>& adam_jln() { return adam_jln_; }

    TrainResult run(int start_epoch, int end_epoch, const std::string& out_dir, std::ostream* log = nullptr) {
        std::filesystem::create_directories(out_dir);
        TrainResult res;
        res.config_digest = config_digest(cfg_);
        res.checkpoint_path = (std::filesystem::path(out_dir) / "model.ovxc").string();
        const std::size_t frames_total = scene_.frame_count();
        if (frames_total == 0) throw std::runtime_error("training scene has no frames");
        const int bsz = cfg_.train.batch_size;

        for (int epoch = start_epoch; epoch <= end_epoch; ++epoch) {
            WallTimer timer;
            std::vector<std::size_t> order(frames_total);
            std::iota(order.begin(), order.end(), std::size_t{0});
            auto shuffle_rng = make_rng(cfg_.train.seed, 0xE70C0ull + static_cast<std::uint64_t>(epoch));
            std::shuffle(order.begin(), order.end(), shuffle_rng);

            EpochStats es;
            es.epoch = epoch;
            int batches = 0;
            for (std::size_t start = 0; start < frames_total; start += static_cast<std::size_t>(bsz)) {
                const std::size_t stop = std::min(frames_total, start + static_cast<std::size_t>(bsz));
                const std::vector<std::size_t> idxs(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                    order.begin() + static_cast<std::ptrdiff_t>(stop));
                std::vector<Frame> frames;
                frames.reserve(idxs.size());
                for (std::size_t idx : idxs) frames.push_back(scene_.frame(idx));

                HdnStats hs;
                JlnStats js;
                try {
                    for (std::size_t b = 0; b < idxs.size(); ++b) ensure_cache(idxs[b], frames[b]);
                    adam_hdn_.zero_grad();
                    hs = hdn_step(idxs);
                    adam_hdn_.step();
                    adam_jln_.zero_grad();
                    js = jln_step(frames, epoch);
                    if (js.persons > 0) adam_jln_.step();
                    if (!std::isfinite(hs.lhdn) || !std::isfinite(js.ljln))
                        throw std::runtime_error("non-finite loss (hdn=" + std::to_string(hs.lhdn) +
                                                 ", jln=" + std::to_string(js.ljln) + ")");
                } catch (const std::exception& e) {
                    throw std::runtime_error("training failed at epoch " + std::to_string(epoch) + " batch " +
                                             std::to_string(batches) + ": " + e.what());
                }

                es.l2d += hs.l2d;
                es.lsize += hs.lsize;
                es.loff += hs.loff;
                es.l1d += hs.l1d;
                es.lhdn += hs.lhdn;
                es.lhm += js.lhm;
                es.lconf += js.lconf;
                es.ljln += js.ljln;
                res.batches.push_back({epoch, batches, hs.lhdn, js.ljln});
                ++batches;
            }
            const double inv = batches > 0 ? 1.0 / batches : 0.0;
            es.l2d *= inv;
            es.lsize *= inv;
            es.loff *= inv;
            es.l1d *= inv;
            es.lhdn *= inv;
            es.lhm *= inv;
            es.lconf *= inv;
            es.ljln *= inv;
            es.wall_ms = timer.ms();
            res.epochs.push_back(es);
            if (log)
                *log << "epoch " << epoch << " hdn " << es.lhdn << " (2d " << es.l2d << " size " << es.lsize
                     << " off " << es.loff << " 1d " << es.l1d << ") jln " << es.ljln << " (hm " << es.lhm
                     << " conf " << es.lconf << ") " << es.wall_ms << " ms\n";

            const CheckpointMeta meta{epoch, model_.joints, res.config_digest};
            save_model_checkpoint(res.checkpoint_path, model_, meta, &adam_hdn_, &adam_jln_);
            char stamped[32];
            std::snprintf(stamped, sizeof(stamped), "epoch_%03d.ovxc", epoch);
            save_model_checkpoint((std::filesystem::path(out_dir) / stamped).string(), model_, meta, &adam_hdn_,
                                  &adam_jln_);
            write_train_log((std::filesystem::path(out_dir) / "train_log.json").string(), res);
        }
        return res;
    }

  private:
    struct FrameCache {
        Tensor<float> bev;             // [K, L, W]
        BevTargets targets;
        Tensor<float> gt_columns;      // [P, K, H] at the supervised cells
        Tensor<float> height_targets;  // [P, H], rows aligned with targets.cells
        bool ready = false;
    };

    struct HdnStats {
        double l2d = 0.0, lsize = 0.0, loff = 0.0, l1d = 0.0, lhdn = 0.0;
    };

    struct JlnStats {
        double lhm = 0.0, lconf = 0.0, ljln = 0.0;
        int persons = 0;
    };

    // BEV features, targets, and GT columns only depend on the frame, so they
    // are computed once and reused every epoch.
    void ensure_cache(std::size_t idx, const Frame& f) {
        FrameCache& c = cache_.at(idx);
        if (c.ready) return;
        const VoxelSpace& space = cfg_.scene.space;
        const FeatureVolume<float> vol = build_volume<float>(f.heatmaps, scene_.cameras(), space, cfg_.threads);
        c.bev = project_bev(vol).data;
        c.targets = make_bev_targets(f.poses, scene_.skeleton(), space, cfg_.hdn.sigma_cells, cfg_.hdn.delta_mm);
        const int persons = static_cast<int>(c.targets.cells.size());
        const int h = space.res[2];
        if (persons > 0) {
            std::vector<std::pair<int, int>> cells;
            cells.reserve(c.targets.cells.size());
            for (const auto& cell : c.targets.cells) cells.emplace_back(cell.i, cell.j);
            c.gt_columns = extract_columns(vol, cells).data;
            const Tensor<float> all =
                make_height_targets(f.poses, scene_.skeleton(), space, cfg_.hdn.sigma_cells);
            c.height_targets = Tensor<float>({persons, h});
            for (int p = 0; p < persons; ++p)
                std::copy_n(&all.data[static_cast<std::size_t>(c.targets.cells[p].person) * h], h,
                            &c.height_targets.data[static_cast<std::size_t>(p) * h]);
        }
        c.ready = true;
    }

    HdnStats hdn_step(const std::vector<std::size_t>& idxs) {
        const VoxelSpace& space = cfg_.scene.space;
        const int l = space.res[0], w = space.res[1], h = space.res[2];
        const int joints = model_.joints;
        const int bsz = static_cast<int>(idxs.size());
        const std::size_t plane = static_cast<std::size_t>(l) * w;
        const float inv_b = 1.0f / static_cast<float>(bsz);
        const float sscale = static_cast<float>(cfg_.hdn.size_scale_mm);
        const HdnLossWeights weights;

        Tensor<float> x({bsz, joints, l, w});
        for (int b = 0; b < bsz; ++b)
            std::copy(cache_[idxs[b]].bev.data.begin(), cache_[idxs[b]].bev.data.end(),
                      x.data.begin() + static_cast<std::size_t>(b) * joints * plane);

        auto outs = model_.hdn2d.forward(x, true);  // heat [B,1,L,W], offset [B,2,L,W], size [B,2,L,W]
        Tensor<float> dheat(outs[0].shape), doff(outs[1].shape), dsize(outs[2].shape);
        HdnStats st;
        Tensor<float> heat_f({l, w}), off_f({2, l, w}), size_f({2, l, w});
        for (int b = 0; b < bsz; ++b) {
            const FrameCache& c = cache_[idxs[b]];
            const std::size_t o1 = static_cast<std::size_t>(b) * plane;
            const std::size_t o2 = static_cast<std::size_t>(b) * 2 * plane;
            std::copy_n(&outs[0].data[o1], plane, heat_f.data.begin());
            const auto g2 = loss_2d_with_grad(heat_f, c.targets.confidence);
            st.l2d += g2.loss;
            for (std::size_t i = 0; i < plane; ++i) dheat.data[o1 + i] = g2.grad.data[i] * inv_b;

            std::copy_n(&outs[1].data[o2], 2 * plane, off_f.data.begin());
            const auto go = loss_offset_with_grad(off_f, c.targets.offset, c.targets.cells);
            st.loff += go.loss;
            const float wo = static_cast<float>(weights.lambda_off) * inv_b;
            for (std::size_t i = 0; i < 2 * plane; ++i) doff.data[o2 + i] = go.grad.data[i] * wo;

            for (std::size_t i = 0; i < 2 * plane; ++i) size_f.data[i] = outs[2].data[o2 + i] * sscale;
            const auto gs = loss_size_with_grad(size_f, c.targets.size, c.targets.cells);
            st.lsize += gs.loss;
            const float ws = static_cast<float>(weights.lambda_size) * inv_b * sscale;
            for (std::size_t i = 0; i < 2 * plane; ++i) dsize.data[o2 + i] = gs.grad.data[i] * ws;
        }

        int total_p = 0;
        for (std::size_t idx : idxs) total_p += static_cast<int>(cache_[idx].targets.cells.size());
        if (total_p > 0) {
            Tensor<float> cols({total_p, joints, h});
            int p0 = 0;
            for (std::size_t idx : idxs) {
                const FrameCache& c = cache_[idx];
                const int pf = static_cast<int>(c.targets.cells.size());
                if (pf == 0) continue;
                std::copy(c.gt_columns.data.begin(), c.gt_columns.data.end(),
                          cols.data.begin() + static_cast<std::size_t>(p0) * joints * h);
                p0 += pf;
            }
            auto outs1 = model_.hdn1d.forward(cols, true);  // [P, 1, H]
            Tensor<float> dcols(outs1[0].shape);
            const float w1 = static_cast<float>(weights.lambda_1d) * inv_b;
            p0 = 0;
            for (std::size_t idx : idxs) {
                const FrameCache& c = cache_[idx];
                const int pf = static_cast<int>(c.targets.cells.size());
                if (pf == 0) continue;
                Tensor<float> pred_f({pf, h});
                std::copy_n(&outs1[0].data[static_cast<std::size_t>(p0) * h], static_cast<std::size_t>(pf) * h,
                            pred_f.data.begin());
                const auto g1 = loss_1d_with_grad(pred_f, c.height_targets);
                st.l1d += g1.loss;
                for (std::size_t i = 0; i < static_cast<std::size_t>(pf) * h; ++i)
                    dcols.data[static_cast<std::size_t>(p0) * h + i] = g1.grad.data[i] * w1;
                p0 += pf;
            }
            model_.hdn1d.backward({dcols});
        }
        model_.hdn2d.backward({dheat, doff, dsize});

        st.l2d /= bsz;
        st.lsize /= bsz;
        st.loff /= bsz;
        st.l1d /= bsz;
        st.lhdn = loss_hdn(st.l2d, st.lsize, st.loff, st.l1d, weights);
        return st;
    }

    JlnStats jln_step(const std::vector<Frame>& frames, int epoch) {
        JlnStats st;
        for (const Frame& f : frames) st.persons += static_cast<int>(f.poses.size());
        if (st.persons == 0) return st;
        const float inv_np = 1.0f / static_cast<float>(st.persons);
        const int joints = model_.joints;
        const float beta = static_cast<float>(cfg_.jln.beta);
        const double jit = cfg_.train.jitter_mm;

        for (const Frame& f : frames) {
            for (std::size_t p = 0; p < f.poses.size(); ++p) {
                const PoseSkeleton& gt = f.poses[p];
                const std::uint64_t stream = (static_cast<std::uint64_t>(epoch) << 40) ^
                                             (static_cast<std::uint64_t>(f.id) << 8) ^
                                             static_cast<std::uint64_t>(p);
                auto rng = make_rng(cfg_.train.seed, 0x71773ull ^ stream);
                std::uniform_real_distribution<double> jd(-jit, jit);
                Vec3 center = gt.root_center(scene_.skeleton());
                center.x += jd(rng);
                center.y += jd(rng);
                center.z += jd(rng);

                FeatureVolume<float> cube = build_person_volume<float>(
                    f.heatmaps, scene_.cameras(), center, cfg_.jln.cube_mm, cfg_.jln.fine_res, cfg_.threads);
                cube = mask_person_volume(cube, pose_bbox_xy(gt, cfg_.hdn.delta_mm));
                const Tensor<float> batch3 = plane_batch(project_triplanes(cube));

                const Tensor<float> logits = model_.pose2d.forward(batch3, true)[0];
                const SoftArgmax<float> sm = softargmax_from_logits(logits, beta);
                const Tensor<float> conf_logits = model_.conf.forward(sm.prob, true);
                const FusionResult<float> fused = fuse_pairwise(sm.coords, conf_logits);

                const Tensor<float> gt_pc = gt_plane_coords<float>(gt, cube.space);
                const auto ghm = loss_hm_with_grad(sm.coords, gt_pc);
                st.lhm += ghm.loss;

                const Vec3 cell = cube.space.cell_size();
                Tensor<float> fused_world({joints, 3}), gt_world({joints, 3});
                for (int k = 0; k < joints; ++k) {
                    const std::size_t o = static_cast<std::size_t>(k) * 3;
                    fused_world.data[o] =
                        static_cast<float>(cube.space.origin.x + (fused.fused.data[o] + 0.5) * cell.x);
                    fused_world.data[o + 1] =
                        static_cast<float>(cube.space.origin.y + (fused.fused.data[o + 1] + 0.5) * cell.y);
                    fused_world.data[o + 2] =
                        static_cast<float>(cube.space.origin.z + (fused.fused.data[o + 2] + 0.5) * cell.z);
                    gt_world.data[o] = static_cast<float>(gt.joints[k].x);
                    gt_world.data[o + 1] = static_cast<float>(gt.joints[k].y);
                    gt_world.data[o + 2] = static_cast<float>(gt.joints[k].z);
                }
                const auto gcf = loss_conf_with_grad(fused_world, gt_world);
                st.lconf += gcf.loss;

                // The confidence loss reaches plane coords through fusion; the
                // confidence net sees only its own logit gradient (the pose
                // heatmaps are treated as fixed inputs to it).
                Tensor<float> dfused({joints, 3});
                for (int k = 0; k < joints; ++k) {
                    const std::size_t o = static_cast<std::size_t>(k) * 3;
                    dfused.data[o] = gcf.grad.data[o] * static_cast<float>(cell.x) * inv_np;
                    dfused.data[o + 1] = gcf.grad.data[o + 1] * static_cast<float>(cell.y) * inv_np;
                    dfused.data[o + 2] = gcf.grad.data[o + 2] * static_cast<float>(cell.z) * inv_np;
                }
                Tensor<float> dcoords_fusion, dlogits_w;
                fuse_pairwise_backward(fused, sm.coords, dfused, dcoords_fusion, dlogits_w);
                Tensor<float> dcoords = dcoords_fusion;
                for (std::size_t i = 0; i < dcoords.numel(); ++i) dcoords.data[i] += ghm.grad.data[i] * inv_np;

                model_.conf.backward(dlogits_w);
                const Tensor<float> dlogits =
                    softargmax_backward(sm, dcoords, static_cast<const Tensor<float>*>(nullptr), beta);
                model_.pose2d.backward({dlogits});
            }
        }
        st.lhm /= st.persons;
        st.lconf /= st.persons;
        st.ljln = loss_jln(st.lhm, st.lconf);
        return st;
    }

    const RunConfig& cfg_;
    PoseModel& model_;
    const SceneReader& scene_;
    Adam<float> adam_hdn_;
    Adam<float> adam_jln_;
    std::vector<FrameCache> cache_;
};

}  // namespace ovx
