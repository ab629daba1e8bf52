// Copyright (C) 2026 Orthovox Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "orthovox/geometry.hpp"
#include "orthovox/hdn.hpp"
#include "orthovox/network.hpp"
#include "orthovox/tensor.hpp"
#include "orthovox/volume.hpp"

namespace ovx {

// Center of mass per channel of [K, A, B] in raw grid-index units, after
// normalizing the map to sum 1. An all-zero channel is treated as uniform,
// yielding the grid center.
template <typename T>
Tensor<T> soft_argmax_2d(const Tensor<T>& heat) {
    if (heat.rank() != 3) throw std::invalid_argument("soft_argmax_2d: expects [K,A,B]");
    const int k = heat.dim(0), a = heat.dim(1), b = heat.dim(2);
    if (a == 0 || b == 0) throw std::invalid_argument("soft_argmax_2d: empty map");
    Tensor<T> coords({k, 2});
    for (int ki = 0; ki < k; ++ki) {
        T mass = T(0), ma = T(0), mb = T(0);
        for (int i = 0; i < a; ++i)
            for (int j = 0; j < b; ++j) {
                const T v = heat.at3(ki, i, j);
                mass += v;
                ma += v * static_cast<T>(i);
                mb += v * static_cast<T>(j);
            }
        if (mass > T(0)) {
            coords.data[static_cast<std::size_t>(ki) * 2] = ma / mass;
            coords.data[static_cast<std::size_t>(ki) * 2 + 1] = mb / mass;
        } else {
            coords.data[static_cast<std::size_t>(ki) * 2] = static_cast<T>(a - 1) / T(2);
            coords.data[static_cast<std::size_t>(ki) * 2 + 1] = static_cast<T>(b - 1) / T(2);
        }
    }
    return coords;
}

// Spatial softmax with temperature over the last two axes of [N, K, A, B],
// followed by the center-of-mass decode. Kept as one unit because training
// always uses them together and the combined backward is simple.
template <typename T>
struct SoftArgmax {
    Tensor<T> prob;    // [N, K, A, B]
    Tensor<T> coords;  // [N, K, 2]
};

template <typename T>
SoftArgmax<T> softargmax_from_logits(const Tensor<T>& logits, T beta) {
    if (logits.rank() != 4) throw std::invalid_argument("softargmax_from_logits: expects [N,K,A,B]");
    const int n = logits.dim(0), k = logits.dim(1), a = logits.dim(2), b = logits.dim(3);
    const std::size_t plane = static_cast<std::size_t>(a) * b;
    SoftArgmax<T> r;
    r.prob = Tensor<T>(logits.shape);
    r.coords = Tensor<T>({n, k, 2});
    for (int ni = 0; ni < n; ++ni)
        for (int ki = 0; ki < k; ++ki) {
            const T* lp = &logits.data[logits.index4(ni, ki, 0, 0)];
            T* pp = &r.prob.data[r.prob.index4(ni, ki, 0, 0)];
            T mx = lp[0];
            for (std::size_t s = 1; s < plane; ++s) mx = std::max(mx, lp[s]);
            T z = T(0);
            for (std::size_t s = 0; s < plane; ++s) {
                pp[s] = std::exp(beta * (lp[s] - mx));
                z += pp[s];
            }
            T ca = T(0), cb = T(0);
            for (int i = 0; i < a; ++i)
                for (int j = 0; j < b; ++j) {
                    const T p = pp[static_cast<std::size_t>(i) * b + j] / z;
                    pp[static_cast<std::size_t>(i) * b + j] = p;
                    ca += p * static_cast<T>(i);
                    cb += p * static_cast<T>(j);
                }
            r.coords.data[(static_cast<std::size_t>(ni) * k + ki) * 2] = ca;
            r.coords.data[(static_cast<std::size_t>(ni) * k + ki) * 2 + 1] = cb;
        }
    return r;
}

// dL/dlogit = beta * p * (g - sum(g * p)) with g collecting both the coords
// path and any direct gradient on the probabilities (dprob may be null).
template <typename T>
Tensor<T> softargmax_backward(const SoftArgmax<T>& fwd, const Tensor<T>& dcoords, const Tensor<T>* dprob, T beta) {
    const int n = fwd.prob.dim(0), k = fwd.prob.dim(1), a = fwd.prob.dim(2), b = fwd.prob.dim(3);
    Tensor<T> dlogits(fwd.prob.shape);
    for (int ni = 0; ni < n; ++ni)
        for (int ki = 0; ki < k; ++ki) {
            const T* pp = &fwd.prob.data[fwd.prob.index4(ni, ki, 0, 0)];
            T* dl = &dlogits.data[dlogits.index4(ni, ki, 0, 0)];
            const T da = dcoords.data[(static_cast<std::size_t>(ni) * k + ki) * 2];
            const T db = dcoords.data[(static_cast<std::size_t>(ni) * k + ki) * 2 + 1];
            T expect = T(0);
            for (int i = 0; i < a; ++i)
                for (int j = 0; j < b; ++j) {
                    const std::size_t s = static_cast<std::size_t>(i) * b + j;
                    T g = da * static_cast<T>(i) + db * static_cast<T>(j);
                    if (dprob) g += dprob->data[fwd.prob.index4(ni, ki, i, j)];
                    dl[s] = g;
                    expect += g * pp[s];
                }
            for (std::size_t s = 0; s < static_cast<std::size_t>(a) * b; ++s)
                dl[s] = beta * pp[s] * (dl[s] - expect);
        }
    return dlogits;
}

// Plane batch order everywhere: 0 = xy, 1 = xz, 2 = yz. Axis a of each plane
// map is the first named world axis, axis b the second.
inline constexpr int kPlaneXY = 0;
inline constexpr int kPlaneXZ = 1;
inline constexpr int kPlaneYZ = 2;

// Pairwise softmax fusion: x from (xy, xz), y from (xy, yz), z from (xz, yz).
// plane_coords is [3, K, 2], weight logits [3, K]; fused coords are cube grid
// units [K, 3] plus the convex pair weights actually used [K, 3, 2].
template <typename T>
struct FusionResult {
    Tensor<T> fused;         // [K, 3]
    Tensor<T> pair_weights;  // [K, 3, 2]
};

namespace jln_detail {

struct PairSpec {
    int plane1, coord1;  // contributes the first member of the pair
    int plane2, coord2;
};

// Component order x, y, z.
inline constexpr PairSpec kPairs[3] = {
    {kPlaneXY, 0, kPlaneXZ, 0},
    {kPlaneXY, 1, kPlaneYZ, 0},
    {kPlaneXZ, 1, kPlaneYZ, 1},
};

}  // namespace jln_detail

template <typename T>
FusionResult<T> fuse_pairwise(const Tensor<T>& plane_coords, const Tensor<T>& weight_logits) {
    if (plane_coords.rank() != 3 || plane_coords.dim(0) != 3 || plane_coords.dim(2) != 2)
        throw std::invalid_argument("fuse_pairwise: plane_coords must be [3,K,2]");
    if (weight_logits.rank() != 2 || weight_logits.dim(0) != 3 || weight_logits.dim(1) != plane_coords.dim(1))
        throw std::invalid_argument("fuse_pairwise: weight_logits must be [3,K]");
    const int k = plane_coords.dim(1);
    FusionResult<T> r;
    r.fused = Tensor<T>({k, 3});
    r.pair_weights = Tensor<T>({k, 3, 2});
    for (int ki = 0; ki < k; ++ki)
        for (int c = 0; c < 3; ++c) {
            const auto& ps = jln_detail::kPairs[c];
            const T l1 = weight_logits.data[static_cast<std::size_t>(ps.plane1) * k + ki];
            const T l2 = weight_logits.data[static_cast<std::size_t>(ps.plane2) * k + ki];
            const T m = std::max(l1, l2);
            const T e1 = std::exp(l1 - m), e2 = std::exp(l2 - m);
            const T w1 = e1 / (e1 + e2), w2 = e2 / (e1 + e2);
            const T v1 = plane_coords.at3(ps.plane1, ki, ps.coord1);
            const T v2 = plane_coords.at3(ps.plane2, ki, ps.coord2);
            r.fused.data[static_cast<std::size_t>(ki) * 3 + c] = w1 * v1 + w2 * v2;
            r.pair_weights.at3(ki, c, 0) = w1;
            r.pair_weights.at3(ki, c, 1) = w2;
        }
    return r;
}

template <typename T>
void fuse_pairwise_backward(const FusionResult<T>& fwd, const Tensor<T>& plane_coords, const Tensor<T>& dfused,
                            Tensor<T>& dplane_coords, Tensor<T>& dweight_logits) {
    const int k = plane_coords.dim(1);
    dplane_coords = Tensor<T>(plane_coords.shape);
    dweight_logits = Tensor<T>({3, k});
    for (int ki = 0; ki < k; ++ki)
        for (int c = 0; c < 3; ++c) {
            const auto& ps = jln_detail::kPairs[c];
            const T g = dfused.data[static_cast<std::size_t>(ki) * 3 + c];
            const T w1 = fwd.pair_weights.at3(ki, c, 0);
            const T w2 = fwd.pair_weights.at3(ki, c, 1);
            const T v1 = plane_coords.at3(ps.plane1, ki, ps.coord1);
            const T v2 = plane_coords.at3(ps.plane2, ki, ps.coord2);
            dplane_coords.at3(ps.plane1, ki, ps.coord1) += g * w1;
            dplane_coords.at3(ps.plane2, ki, ps.coord2) += g * w2;
            const T dl = g * (v1 - v2) * w1 * w2;
            dweight_logits.data[static_cast<std::size_t>(ps.plane1) * k + ki] += dl;
            dweight_logits.data[static_cast<std::size_t>(ps.plane2) * k + ki] -= dl;
        }
}

// Cube grid coords (cell-center convention) to world millimeters.
template <typename T>
PoseSkeleton cube_to_world(const Tensor<T>& fused, const VoxelSpace& cube) {
    const int k = fused.dim(0);
    const Vec3 cell = cube.cell_size();
    PoseSkeleton pose(k);
    for (int ki = 0; ki < k; ++ki) {
        pose.joints[ki] = {
            cube.origin.x + (static_cast<double>(fused.data[static_cast<std::size_t>(ki) * 3]) + 0.5) * cell.x,
            cube.origin.y + (static_cast<double>(fused.data[static_cast<std::size_t>(ki) * 3 + 1]) + 0.5) * cell.y,
            cube.origin.z + (static_cast<double>(fused.data[static_cast<std::size_t>(ki) * 3 + 2]) + 0.5) * cell.z};
    }
    return pose;
}

// Orthographic projections of GT joints into cube grid coordinates, [3, K, 2].
template <typename T = float>
Tensor<T> gt_plane_coords(const PoseSkeleton& gt, const VoxelSpace& cube) {
    const int k = gt.joint_count();
    Tensor<T> out({3, k, 2});
    for (int ki = 0; ki < k; ++ki) {
        const Vec3 g = cube.world_to_grid(gt.joints[ki]);
        const T gx = static_cast<T>(g.x - 0.5), gy = static_cast<T>(g.y - 0.5), gz = static_cast<T>(g.z - 0.5);
        out.at3(kPlaneXY, ki, 0) = gx;
        out.at3(kPlaneXY, ki, 1) = gy;
        out.at3(kPlaneXZ, ki, 0) = gx;
        out.at3(kPlaneXZ, ki, 1) = gz;
        out.at3(kPlaneYZ, ki, 0) = gy;
        out.at3(kPlaneYZ, ki, 1) = gz;
    }
    return out;
}

// Coordinate L1 summed over planes, joints, and axes.
template <typename T>
LossGrad<T> loss_hm_with_grad(const Tensor<T>& pred_coords, const Tensor<T>& gt_coords) {
    if (pred_coords.shape != gt_coords.shape) throw std::invalid_argument("loss_hm: shape mismatch");
    LossGrad<T> r;
    r.grad = Tensor<T>(pred_coords.shape);
    for (std::size_t i = 0; i < pred_coords.numel(); ++i) {
        const T d = pred_coords.data[i] - gt_coords.data[i];
        r.loss += std::abs(d);
        r.grad.data[i] = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
    }
    return r;
}

template <typename T>
T loss_hm(const Tensor<T>& pred_coords, const Tensor<T>& gt_coords) {
    return loss_hm_with_grad(pred_coords, gt_coords).loss;
}

// World-space L1 between the fused pose and GT, summed over joints and axes.
template <typename T>
LossGrad<T> loss_conf_with_grad(const Tensor<T>& fused_world, const Tensor<T>& gt_world) {
    if (fused_world.shape != gt_world.shape || fused_world.rank() != 2 || fused_world.dim(1) != 3)
        throw std::invalid_argument("loss_conf: expects matching [K,3]");
    LossGrad<T> r;
    r.grad = Tensor<T>(fused_world.shape);
    for (std::size_t i = 0; i < fused_world.numel(); ++i) {
        const T d = fused_world.data[i] - gt_world.data[i];
        r.loss += std::abs(d);
        r.grad.data[i] = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
    }
    return r;
}

template <typename T>
T loss_conf(const PoseSkeleton& fused, const PoseSkeleton& gt) {
    if (fused.joint_count() != gt.joint_count()) throw std::invalid_argument("loss_conf: joint count mismatch");
    T total = T(0);
    for (int k = 0; k < fused.joint_count(); ++k) {
        total += static_cast<T>(std::abs(fused.joints[k].x - gt.joints[k].x) +
                                std::abs(fused.joints[k].y - gt.joints[k].y) +
                                std::abs(fused.joints[k].z - gt.joints[k].z));
    }
    return total;
}

template <typename T>
T loss_jln(T l_hm, T l_conf, T lambda_conf = T(1)) {
    return l_hm + lambda_conf * l_conf;
}

// Tri-plane feature batch [3, K, A, A] in the fixed plane order.
template <typename T>
Tensor<T> plane_batch(const std::array<PlaneFeature<T>, 3>& planes) {
    const int k = planes[0].data.dim(0), a = planes[0].data.dim(1);
    for (const auto& p : planes)
        if (p.data.dim(1) != a || p.data.dim(2) != a)
            throw std::invalid_argument("plane_batch: planes must share one granularity");
    Tensor<T> batch({3, k, a, a});
    for (int t = 0; t < 3; ++t)
        std::copy(planes[t].data.data.begin(), planes[t].data.data.end(),
                  batch.data.begin() + static_cast<std::size_t>(t) * planes[t].data.numel());
    return batch;
}

struct LocalizedPose {
    PoseSkeleton pose;
    Tensor<float> pair_weights;  // [K, 3, 2]
    bool low_confidence = false;
    double fuse_ms = 0.0;
};

struct JlnConfig {
    double cube_mm = 2000.0;
    int fine_res = 64;
    double beta = 15.0;
    int threads = 1;
};

// Full learned path: rebuild the person cube, mask, project, run the shared
// pose net on the three planes as one batch, weight by the confidence net,
// fuse pairwise, convert to world.
inline LocalizedPose localize_person(const HeatmapSet& heatmaps, const std::vector<Camera>& cameras,
                                     const Detection3D& det, MultiHeadNet<float>& pose_net,
                                     Sequential<float>& conf_net, const JlnConfig& cfg) {
    FeatureVolume<float> cube =
        build_person_volume<float>(heatmaps, cameras, det.center, cfg.cube_mm, cfg.fine_res, cfg.threads);
    cube = mask_person_volume(cube, det.bev_rect());
    bool all_zero = true;
    for (float v : cube.data.data)
        if (v != 0.0f) {
            all_zero = false;
            break;
        }
    const Tensor<float> batch = plane_batch(project_triplanes(cube));
    const Tensor<float> logits = pose_net.forward(batch, false)[0];
    const SoftArgmax<float> sm = softargmax_from_logits(logits, static_cast<float>(cfg.beta));
    const Tensor<float> conf_logits = conf_net.forward(sm.prob, false);  // [3, K]
    Tensor<float> plane_coords = sm.coords;
    plane_coords.reshape({3, plane_coords.dim(1), 2});
    Tensor<float> wl = conf_logits;
    const FusionResult<float> fused = fuse_pairwise(plane_coords, wl);
    LocalizedPose out;
    out.pose = cube_to_world(fused.fused, cube.space);
    out.pair_weights = fused.pair_weights;
    out.low_confidence = all_zero;
    return out;
}

// Oracle path: no networks. Each plane channel is thresholded and reduced by
// center of mass; pairs are averaged with equal weights. tau removes ray
// streaks exactly as in the analytic HDN decode.
inline LocalizedPose localize_person_analytic(const HeatmapSet& heatmaps, const std::vector<Camera>& cameras,
                                              const Detection3D& det, const JlnConfig& cfg, double tau = 0.5) {
    FeatureVolume<float> cube =
        build_person_volume<float>(heatmaps, cameras, det.center, cfg.cube_mm, cfg.fine_res, cfg.threads);
    cube = mask_person_volume(cube, det.bev_rect());
    const auto planes = project_triplanes(cube);
    const int k = cube.joints(), a = cfg.fine_res;
    Tensor<float> coords({3, k, 2});
    bool low_conf = false;
    for (int t = 0; t < 3; ++t) {
        for (int ki = 0; ki < k; ++ki) {
            double mass = 0.0, ma = 0.0, mb = 0.0;
            for (int i = 0; i < a; ++i)
                for (int j = 0; j < a; ++j) {
                    const double v = std::max(0.0, static_cast<double>(planes[t].data.at3(ki, i, j)) - tau);
                    mass += v;
                    ma += v * i;
                    mb += v * j;
                }
            if (mass > 0.0) {
                coords.at3(t, ki, 0) = static_cast<float>(ma / mass);
                coords.at3(t, ki, 1) = static_cast<float>(mb / mass);
            } else {
                coords.at3(t, ki, 0) = static_cast<float>(a - 1) / 2.0f;
                coords.at3(t, ki, 1) = static_cast<float>(a - 1) / 2.0f;
                low_conf = true;
            }
        }
    }
    Tensor<float> zero_logits({3, k});
    const FusionResult<float> fused = fuse_pairwise(coords, zero_logits);
    LocalizedPose out;
    out.pose = cube_to_world(fused.fused, cube.space);
    out.pair_weights = fused.pair_weights;
    out.low_confidence = low_conf;
    return out;
}

}  // namespace ovx
