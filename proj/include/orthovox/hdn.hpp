// Copyright (C) 2026 Orthovox Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "orthovox/geometry.hpp"
#include "orthovox/tensor.hpp"
#include "orthovox/volume.hpp"

namespace ovx {

struct BevTargets {
    Tensor<float> confidence;  // [L, W]
    Tensor<float> size;        // [2, L, W], mm
    Tensor<float> offset;      // [2, L, W], fractional cell in [0,1)
    struct SupervisedCell {
        int i = 0, j = 0;
        int person = 0;
    };
    std::vector<SupervisedCell> cells;  // U: one floored center cell per kept person
    int skipped = 0;                    // persons whose center fell outside the space
};

// Gaussian confidence in raw continuous grid coordinates, max-combined across
// persons. Size/offset supervision lands only on each person's center cell.
inline BevTargets make_bev_targets(const std::vector<PoseSkeleton>& poses, const SkeletonDef& skeleton,
                                   const VoxelSpace& space, double sigma_cells, double margin_mm) {
    const int l = space.res[0], w = space.res[1];
    BevTargets t;
    t.confidence = Tensor<float>({l, w});
    t.size = Tensor<float>({2, l, w});
    t.offset = Tensor<float>({2, l, w});
    const double inv2s2 = 1.0 / (2.0 * sigma_cells * sigma_cells);
    for (std::size_t n = 0; n < poses.size(); ++n) {
        const Vec3 center = poses[n].root_center(skeleton);
        const Vec3 g = space.world_to_grid(center);
        const int ci = static_cast<int>(std::floor(g.x));
        const int cj = static_cast<int>(std::floor(g.y));
        if (ci < 0 || cj < 0 || ci >= l || cj >= w) {
            ++t.skipped;
            continue;
        }
        for (int i = 0; i < l; ++i) {
            const double dx2 = (i - g.x) * (i - g.x);
            for (int j = 0; j < w; ++j) {
                const double dy2 = (j - g.y) * (j - g.y);
                const float v = static_cast<float>(std::exp(-(dx2 + dy2) * inv2s2));
                float& cell = t.confidence.data[static_cast<std::size_t>(i) * w + j];
                cell = std::max(cell, v);
            }
        }
        const RectXY box = pose_bbox_xy(poses[n], margin_mm);
        t.size.at3(0, ci, cj) = static_cast<float>(box.x1 - box.x0);
        t.size.at3(1, ci, cj) = static_cast<float>(box.y1 - box.y0);
        t.offset.at3(0, ci, cj) = static_cast<float>(g.x - ci);
        t.offset.at3(1, ci, cj) = static_cast<float>(g.y - cj);
        t.cells.push_back({ci, cj, static_cast<int>(n)});
    }
    return t;
}

// 1D height targets, one row per person, peaked at the bin whose center
// matches the person height (cell-center convention: ideal peak at g_z - 0.5).
inline Tensor<float> make_height_targets(const std::vector<PoseSkeleton>& poses, const SkeletonDef& skeleton,
                                         const VoxelSpace& space, double sigma_cells) {
    const int h = space.res[2];
    Tensor<float> t({static_cast<int>(poses.size()), h});
    const double inv2s2 = 1.0 / (2.0 * sigma_cells * sigma_cells);
    for (std::size_t n = 0; n < poses.size(); ++n) {
        const Vec3 g = space.world_to_grid(poses[n].root_center(skeleton));
        const double zt = g.z - 0.5;
        for (int k = 0; k < h; ++k)
            t.data[n * static_cast<std::size_t>(h) + k] = static_cast<float>(std::exp(-(k - zt) * (k - zt) * inv2s2));
    }
    return t;
}

template <typename T>
struct LossGrad {
    T loss = T(0);
    Tensor<T> grad;
};

// Summed squared error over every BEV cell.
template <typename T>
LossGrad<T> loss_2d_with_grad(const Tensor<T>& pred, const Tensor<T>& target) {
    if (pred.shape != target.shape) throw std::invalid_argument("loss_2d: shape mismatch");
    LossGrad<T> r;
    r.grad = Tensor<T>(pred.shape);
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const T d = pred.data[i] - target.data[i];
        r.loss += d * d;
        r.grad.data[i] = T(2) * d;
    }
    return r;
}

template <typename T>
T loss_2d(const Tensor<T>& pred, const Tensor<T>& target) {
    return loss_2d_with_grad(pred, target).loss;
}

namespace hdn_detail {

// Shared form of the size and offset losses: L1 over the supervised cells,
// divided by the person count.
template <typename T>
LossGrad<T> center_cell_l1(const Tensor<T>& pred, const Tensor<T>& target,
                           const std::vector<BevTargets::SupervisedCell>& cells) {
    if (pred.shape != target.shape || pred.rank() != 3 || pred.dim(0) != 2)
        throw std::invalid_argument("center-cell loss: bad shapes");
    LossGrad<T> r;
    r.grad = Tensor<T>(pred.shape);
    if (cells.empty()) return r;
    const T inv_n = T(1) / static_cast<T>(cells.size());
    for (const auto& c : cells)
        for (int ch = 0; ch < 2; ++ch) {
            const std::size_t idx = pred.index3(ch, c.i, c.j);
            const T d = pred.data[idx] - target.data[idx];
            r.loss += std::abs(d) * inv_n;
            r.grad.data[idx] += (d > T(0) ? inv_n : (d < T(0) ? -inv_n : T(0)));
        }
    return r;
}

}  // namespace hdn_detail

template <typename T>
LossGrad<T> loss_size_with_grad(const Tensor<T>& pred_size, const Tensor<T>& target_size,
                                const std::vector<BevTargets::SupervisedCell>& cells) {
    return hdn_detail::center_cell_l1(pred_size, target_size, cells);
}

template <typename T>
T loss_size(const Tensor<T>& pred_size, const Tensor<T>& target_size,
            const std::vector<BevTargets::SupervisedCell>& cells) {
    return loss_size_with_grad(pred_size, target_size, cells).loss;
}

template <typename T>
LossGrad<T> loss_offset_with_grad(const Tensor<T>& pred_offset, const Tensor<T>& target_offset,
                                  const std::vector<BevTargets::SupervisedCell>& cells) {
    return hdn_detail::center_cell_l1(pred_offset, target_offset, cells);
}

template <typename T>
T loss_offset(const Tensor<T>& pred_offset, const Tensor<T>& target_offset,
              const std::vector<BevTargets::SupervisedCell>& cells) {
    return loss_offset_with_grad(pred_offset, target_offset, cells).loss;
}

// Squared error over proposals and height bins, averaged over proposals only.
template <typename T>
LossGrad<T> loss_1d_with_grad(const Tensor<T>& pred, const Tensor<T>& target) {
    if (pred.shape != target.shape || pred.rank() != 2) throw std::invalid_argument("loss_1d: bad shapes");
    LossGrad<T> r;
    r.grad = Tensor<T>(pred.shape);
    if (pred.dim(0) == 0) return r;
    const T inv_p = T(1) / static_cast<T>(pred.dim(0));
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const T d = pred.data[i] - target.data[i];
        r.loss += d * d * inv_p;
        r.grad.data[i] = T(2) * d * inv_p;
    }
    return r;
}

template <typename T>
T loss_1d(const Tensor<T>& pred, const Tensor<T>& target) {
    return loss_1d_with_grad(pred, target).loss;
}

struct HdnLossWeights {
    double lambda_size = 0.02;
    double lambda_off = 0.1;
    double lambda_1d = 1.0;
};

template <typename T>
T loss_hdn(T l2d, T lsize, T loff, T l1d, const HdnLossWeights& w = {}) {
    return l2d + static_cast<T>(w.lambda_size) * lsize + static_cast<T>(w.lambda_off) * loff +
           static_cast<T>(w.lambda_1d) * l1d;
}

// 3x3 non-maximum suppression. A cell survives when it is strictly greater
// than every lexicographically earlier neighbor and at least equal to every
// later one, so exactly the lowest-index cell of any adjacent plateau wins.
inline std::vector<std::pair<int, int>> nms_bev(const Tensor<float>& conf) {
    if (conf.rank() != 2) throw std::invalid_argument("nms_bev: expects [L,W]");
    const int l = conf.dim(0), w = conf.dim(1);
    std::vector<std::pair<int, int>> keep;
    for (int i = 0; i < l; ++i)
        for (int j = 0; j < w; ++j) {
            const float v = conf.data[static_cast<std::size_t>(i) * w + j];
            bool is_max = true;
            for (int di = -1; di <= 1 && is_max; ++di)
                for (int dj = -1; dj <= 1 && is_max; ++dj) {
                    if (di == 0 && dj == 0) continue;
                    const int ni = i + di, nj = j + dj;
                    if (ni < 0 || nj < 0 || ni >= l || nj >= w) continue;
                    const float nv = conf.data[static_cast<std::size_t>(ni) * w + nj];
                    const bool earlier = (ni < i) || (ni == i && nj < j);
                    if (earlier ? (nv >= v) : (nv > v)) is_max = false;
                }
            if (is_max) keep.emplace_back(i, j);
        }
    return keep;
}

struct Detection3D {
    int cell_i = 0, cell_j = 0;
    Vec3 center;
    Vec2 size_xy;
    double height_mm = 2000.0;
    double score_2d = 0.0;
    double score_1d = 0.0;
    double score = 0.0;

    RectXY bev_rect() const { return RectXY::from_center_size({center.x, center.y}, size_xy); }
};

struct DecodeParams {
    int max_proposals = 10;  // P
    double threshold = 0.3;
    double size_scale_mm = 1.0;  // multiplies raw size-head output into mm
    double min_size_mm = 0.0;
    double max_size_mm = 8000.0;
    double box_height_mm = 2000.0;
};

// Maps P extracted columns to [P, H] height confidences. The trained path
// wraps the 1D network; the oracle path reduces the raw columns analytically.
using ColumnScorer = std::function<Tensor<float>(const ColumnFeature<float>&)>;

// NMS -> top-P by confidence -> column heights -> thresholded product score.
inline std::vector<Detection3D> decode_detections(const Tensor<float>& conf, const Tensor<float>& offset,
                                                  const Tensor<float>& size, const FeatureVolume<float>& vol,
                                                  const ColumnScorer& scorer, const DecodeParams& params) {
    const VoxelSpace& space = vol.space;
    const Vec3 cell = space.cell_size();
    auto peaks = nms_bev(conf);
    std::stable_sort(peaks.begin(), peaks.end(), [&](const auto& a, const auto& b) {
        return conf.data[static_cast<std::size_t>(a.first) * conf.dim(1) + a.second] >
               conf.data[static_cast<std::size_t>(b.first) * conf.dim(1) + b.second];
    });
    if (static_cast<int>(peaks.size()) > params.max_proposals) peaks.resize(static_cast<std::size_t>(params.max_proposals));
    if (peaks.empty()) return {};

    const ColumnFeature<float> cols = extract_columns(vol, peaks);
    const Tensor<float> zheat = scorer(cols);
    if (zheat.rank() != 2 || zheat.dim(0) != static_cast<int>(peaks.size()) || zheat.dim(1) != space.res[2])
        throw std::invalid_argument("column scorer returned bad shape " + shape_str(zheat.shape));

    std::vector<Detection3D> dets;
    for (std::size_t p = 0; p < peaks.size(); ++p) {
        const auto [i, j] = peaks[p];
        Detection3D d;
        d.cell_i = i;
        d.cell_j = j;
        d.score_2d = conf.data[static_cast<std::size_t>(i) * conf.dim(1) + j];
        int zbin = 0;
        for (int k = 1; k < space.res[2]; ++k)
            if (zheat.data[p * static_cast<std::size_t>(space.res[2]) + k] >
                zheat.data[p * static_cast<std::size_t>(space.res[2]) + zbin])
                zbin = k;
        d.score_1d = zheat.data[p * static_cast<std::size_t>(space.res[2]) + zbin];
        d.score = d.score_2d * d.score_1d;
        if (d.score < params.threshold) continue;
        const double ox = std::clamp(static_cast<double>(offset.at3(0, i, j)), 0.0, 1.0 - 1e-6);
        const double oy = std::clamp(static_cast<double>(offset.at3(1, i, j)), 0.0, 1.0 - 1e-6);
        d.center = {space.origin.x + (i + ox) * cell.x, space.origin.y + (j + oy) * cell.y,
                    space.origin.z + (zbin + 0.5) * cell.z};
        d.size_xy = {std::clamp(size.at3(0, i, j) * params.size_scale_mm, params.min_size_mm, params.max_size_mm),
                     std::clamp(size.at3(1, i, j) * params.size_scale_mm, params.min_size_mm, params.max_size_mm)};
        d.height_mm = params.box_height_mm;
        dets.push_back(d);
    }
    return dets;
}

// Training-free decode used by the geometric oracle pipeline: BEV confidence
// is the mean of the root-joint channels, sub-cell refinement comes from a
// thresholded center-of-mass in a 5x5 window, and height from the column's
// center of mass. tau suppresses the single-camera ray streaks that survive
// mean aggregation.
struct AnalyticDecodeParams {
    double tau = 0.5;
    int window = 2;  // CoM half-window in cells
    double threshold = 0.3;
    int max_proposals = 10;
    double box_size_mm = 2000.0;
    double box_height_mm = 2000.0;
};

inline Tensor<float> analytic_bev_confidence(const PlaneFeature<float>& bev, const std::vector<int>& root_joints) {
    if (root_joints.empty()) throw std::invalid_argument("analytic_bev_confidence: no root joints");
    const int l = bev.data.dim(1), w = bev.data.dim(2);
    Tensor<float> conf({l, w});
    for (int r : root_joints)
        for (int i = 0; i < l; ++i)
            for (int j = 0; j < w; ++j) conf.data[static_cast<std::size_t>(i) * w + j] += bev.data.at3(r, i, j);
    const float inv = 1.0f / static_cast<float>(root_joints.size());
    for (auto& v : conf.data) v *= inv;
    return conf;
}

inline std::vector<Detection3D> analytic_decode(const FeatureVolume<float>& vol, const std::vector<int>& root_joints,
                                                const AnalyticDecodeParams& params = {}) {
    const VoxelSpace& space = vol.space;
    const Vec3 cell = space.cell_size();
    const PlaneFeature<float> bev = project_bev(vol);
    const Tensor<float> conf = analytic_bev_confidence(bev, root_joints);
    const int l = conf.dim(0), w = conf.dim(1), h = space.res[2];

    auto peaks = nms_bev(conf);
    std::stable_sort(peaks.begin(), peaks.end(), [&](const auto& a, const auto& b) {
        return conf.data[static_cast<std::size_t>(a.first) * w + a.second] >
               conf.data[static_cast<std::size_t>(b.first) * w + b.second];
    });
    if (static_cast<int>(peaks.size()) > params.max_proposals) peaks.resize(static_cast<std::size_t>(params.max_proposals));

    std::vector<Detection3D> dets;
    for (const auto& [pi, pj] : peaks) {
        const double peak = conf.data[static_cast<std::size_t>(pi) * w + pj];
        if (peak < params.threshold) continue;
        double mass = 0.0, mx = 0.0, my = 0.0;
        for (int i = std::max(0, pi - params.window); i <= std::min(l - 1, pi + params.window); ++i)
            for (int j = std::max(0, pj - params.window); j <= std::min(w - 1, pj + params.window); ++j) {
                const double v = std::max(0.0, conf.data[static_cast<std::size_t>(i) * w + j] - params.tau);
                mass += v;
                mx += v * (i + 0.5);
                my += v * (j + 0.5);
            }
        Detection3D d;
        d.cell_i = pi;
        d.cell_j = pj;
        if (mass > 0.0) {
            d.center.x = space.origin.x + (mx / mass) * cell.x;
            d.center.y = space.origin.y + (my / mass) * cell.y;
        } else {
            d.center.x = space.origin.x + (pi + 0.5) * cell.x;
            d.center.y = space.origin.y + (pj + 0.5) * cell.y;
        }
        double zmass = 0.0, mz = 0.0;
        int zbest = 0;
        double zbestval = -1.0;
        for (int k = 0; k < h; ++k) {
            double colv = 0.0;
            for (int r : root_joints) colv += vol.data.at4(r, pi, pj, k);
            colv /= static_cast<double>(root_joints.size());
            if (colv > zbestval) {
                zbestval = colv;
                zbest = k;
            }
            const double v = std::max(0.0, colv - params.tau);
            zmass += v;
            mz += v * (k + 0.5);
        }
        d.center.z = space.origin.z + (zmass > 0.0 ? (mz / zmass) * cell.z : (zbest + 0.5) * cell.z);
        d.score_2d = peak;
        d.score_1d = zbestval;
        d.score = d.score_2d * std::max(0.0, d.score_1d);
        if (d.score < params.threshold) continue;
        d.size_xy = {params.box_size_mm, params.box_size_mm};
        d.height_mm = params.box_height_mm;
        dets.push_back(d);
    }
    return dets;
}

}  // namespace ovx
