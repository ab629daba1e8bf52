// Copyright (C) 2026 Orthovox Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <vector>

#include "orthovox/geometry.hpp"

namespace ovx {

struct ScoredPose {
    PoseSkeleton pose;
    double score = 0.0;
};

struct FrameEval {
    std::vector<ScoredPose> preds;
    std::vector<PoseSkeleton> gts;
};

// Mean joint distance between two poses over joints valid in both.
inline double pose_mpjpe(const PoseSkeleton& a, const PoseSkeleton& b) {
    if (a.joint_count() != b.joint_count()) throw std::invalid_argument("pose_mpjpe: joint count mismatch");
    double sum = 0.0;
    int n = 0;
    for (int k = 0; k < a.joint_count(); ++k) {
        if (!a.valid[k] || !b.valid[k]) continue;
        sum += distance(a.joints[k], b.joints[k]);
        ++n;
    }
    return n > 0 ? sum / n : 0.0;
}

// Each estimated pose is paired with its nearest GT; the metric is the mean
// per-joint error over all estimations. Frames with no preds or no GT
// contribute nothing.
inline double mpjpe(const std::vector<FrameEval>& frames) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& f : frames) {
        if (f.gts.empty()) continue;
        for (const auto& sp : f.preds) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& gt : f.gts) best = std::min(best, pose_mpjpe(sp.pose, gt));
            sum += best;
            ++count;
        }
    }
    return count > 0 ? sum / count : 0.0;
}

inline double mpjpe(const std::vector<ScoredPose>& preds, const std::vector<PoseSkeleton>& gts) {
    return mpjpe(std::vector<FrameEval>{{preds, gts}});
}

// Average precision at threshold k_mm: predictions ranked by score across the
// whole set, greedily matched one-to-one to unmatched GT poses of their frame
// within k_mm (by pose MPJPE); AP sums precision at each true positive over
// the GT count.
inline double ap_k(const std::vector<FrameEval>& frames, double k_mm) {
    struct Entry {
        double score;
        std::size_t frame, pred;
    };
    std::vector<Entry> ranked;
    std::size_t total_gt = 0;
    for (std::size_t fi = 0; fi < frames.size(); ++fi) {
        total_gt += frames[fi].gts.size();
        for (std::size_t pi = 0; pi < frames[fi].preds.size(); ++pi)
            ranked.push_back({frames[fi].preds[pi].score, fi, pi});
    }
    if (total_gt == 0) return ranked.empty() ? 1.0 : 0.0;
    if (ranked.empty()) return 0.0;
    std::stable_sort(ranked.begin(), ranked.end(), [](const Entry& a, const Entry& b) { return a.score > b.score; });
    std::vector<std::vector<bool>> gt_used(frames.size());
    for (std::size_t fi = 0; fi < frames.size(); ++fi) gt_used[fi].assign(frames[fi].gts.size(), false);
    double ap = 0.0;
    std::size_t tp = 0;
    for (std::size_t rank = 0; rank < ranked.size(); ++rank) {
        const Entry& e = ranked[rank];
        const auto& frame = frames[e.frame];
        int best_gt = -1;
        double best_d = k_mm;
        for (std::size_t gi = 0; gi < frame.gts.size(); ++gi) {
            if (gt_used[e.frame][gi]) continue;
            const double d = pose_mpjpe(frame.preds[e.pred].pose, frame.gts[gi]);
            if (d <= best_d) {
                best_d = d;
                best_gt = static_cast<int>(gi);
            }
        }
        if (best_gt >= 0) {
            gt_used[e.frame][static_cast<std::size_t>(best_gt)] = true;
            ++tp;
            ap += static_cast<double>(tp) / static_cast<double>(rank + 1);
        }
    }
    return ap / static_cast<double>(total_gt);
}

// Percentage of correct parts: each GT pose is paired with the closest
// estimate; a limb counts as correct when the mean of its two endpoint errors
// is at most half the GT limb length (inclusive). both_endpoints switches to
// requiring each endpoint individually. False positives are not penalized.
inline double pcp3d(const std::vector<FrameEval>& frames, const SkeletonDef& skeleton,
                    bool both_endpoints = false) {
    std::size_t correct = 0, total = 0;
    for (const auto& f : frames) {
        for (const auto& gt : f.gts) {
            total += skeleton.limbs.size();
            if (f.preds.empty()) continue;
            const ScoredPose* best = &f.preds[0];
            double best_d = pose_mpjpe(best->pose, gt);
            for (const auto& sp : f.preds) {
                const double d = pose_mpjpe(sp.pose, gt);
                if (d < best_d) {
                    best_d = d;
                    best = &sp;
                }
            }
            for (const auto& [pa, child] : skeleton.limbs) {
                const double len = distance(gt.joints[pa], gt.joints[child]);
                const double da = distance(best->pose.joints[pa], gt.joints[pa]);
                const double db = distance(best->pose.joints[child], gt.joints[child]);
                const bool ok = both_endpoints ? (da <= len / 2.0 && db <= len / 2.0) : ((da + db) / 2.0 <= len / 2.0);
                if (ok) ++correct;
            }
        }
    }
    return total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 1.0;
}

struct DetBox {
    Vec3 center;
    RectXY rect;
    double score = 0.0;
};

struct FrameDet {
    std::vector<DetBox> preds;
    std::vector<DetBox> gts;
};

struct DetectionMetrics {
    double center_err_mm = 0.0;  // mean over matched pairs
    double precision = 1.0;      // empty-denominator rates default to 1
    double recall = 1.0;
    double iou = 0.0;  // mean BEV IoU over matched pairs
    std::size_t matched = 0, pred_count = 0, gt_count = 0;
};

// Greedy by score: each prediction takes the nearest unmatched GT center
// within the match radius (3D distance); IoU on the matched BEV rectangles.
inline DetectionMetrics detection_metrics(const std::vector<FrameDet>& frames, double match_radius_mm = 500.0) {
    DetectionMetrics m;
    double err_sum = 0.0, iou_sum = 0.0;
    for (const auto& f : frames) {
        m.pred_count += f.preds.size();
        m.gt_count += f.gts.size();
        std::vector<std::size_t> order(f.preds.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return f.preds[a].score > f.preds[b].score; });
        std::vector<bool> used(f.gts.size(), false);
        for (std::size_t oi : order) {
            int best = -1;
            double best_d = match_radius_mm;
            for (std::size_t gi = 0; gi < f.gts.size(); ++gi) {
                if (used[gi]) continue;
                const double d = distance(f.preds[oi].center, f.gts[gi].center);
                if (d <= best_d) {
                    best_d = d;
                    best = static_cast<int>(gi);
                }
            }
            if (best >= 0) {
                used[static_cast<std::size_t>(best)] = true;
                ++m.matched;
                err_sum += best_d;
                iou_sum += rect_iou(f.preds[oi].rect, f.gts[static_cast<std::size_t>(best)].rect);
            }
        }
    }
    if (m.matched > 0) {
        m.center_err_mm = err_sum / static_cast<double>(m.matched);
        m.iou = iou_sum / static_cast<double>(m.matched);
    }
    if (m.pred_count > 0) m.precision = static_cast<double>(m.matched) / static_cast<double>(m.pred_count);
    if (m.gt_count > 0) m.recall = static_cast<double>(m.matched) / static_cast<double>(m.gt_count);
    return m;
}

inline DetectionMetrics detection_metrics(const std::vector<DetBox>& preds, const std::vector<DetBox>& gts,
                                          double match_radius_mm = 500.0) {
    return detection_metrics(std::vector<FrameDet>{{preds, gts}}, match_radius_mm);
}

// GT detection boxes derived from poses: tight xy bbox plus margin, center at
// the root.
inline std::vector<DetBox> gt_boxes_from_poses(const std::vector<PoseSkeleton>& poses, const SkeletonDef& skeleton,
                                               double margin_mm) {
    std::vector<DetBox> boxes;
    boxes.reserve(poses.size());
    for (const auto& pose : poses) {
        DetBox b;
        b.center = pose.root_center(skeleton);
        b.rect = pose_bbox_xy(pose, margin_mm);
        b.score = 1.0;
        boxes.push_back(b);
    }
    return boxes;
}

struct EvalReport {
    double mpjpe_mm = 0.0;
    std::map<int, double> ap;  // keyed by threshold mm
    double pcp = 0.0;
    DetectionMetrics detection;
    std::size_t frames = 0;
    std::size_t gt_poses = 0;
    std::size_t pred_poses = 0;
};

inline EvalReport evaluate_poses(const std::vector<FrameEval>& pose_frames, const std::vector<FrameDet>& det_frames,
                                 const SkeletonDef& skeleton, double match_radius_mm = 500.0) {
    EvalReport r;
    r.frames = pose_frames.size();
    r.mpjpe_mm = mpjpe(pose_frames);
    for (int k : {25, 50, 100, 150}) r.ap[k] = ap_k(pose_frames, static_cast<double>(k));
    r.pcp = pcp3d(pose_frames, skeleton);
    r.detection = detection_metrics(det_frames, match_radius_mm);
    for (const auto& f : pose_frames) {
        r.gt_poses += f.gts.size();
        r.pred_poses += f.preds.size();
    }
    return r;
}

}  // namespace ovx
