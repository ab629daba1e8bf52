// Copyright (C) 2026 Orthovox Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "orthovox/geometry.hpp"
#include "orthovox/tensor.hpp"
#include "orthovox/util.hpp"

namespace ovx {

// Per-camera joint heatmaps, one [K, height_px, width_px] tensor per camera.
using HeatmapSet = std::vector<Tensor<float>>;

inline void check_heatmaps(const HeatmapSet& heatmaps, const std::vector<Camera>& cameras) {
    if (cameras.empty()) throw std::invalid_argument("build_volume: no cameras");
    if (heatmaps.size() != cameras.size()) throw std::invalid_argument("heatmap count != camera count");
    for (std::size_t c = 0; c < cameras.size(); ++c) {
        const auto& h = heatmaps[c];
        if (h.rank() != 3 || h.dim(1) != cameras[c].height || h.dim(2) != cameras[c].width)
            throw std::invalid_argument("heatmap dims do not match camera " + cameras[c].id);
    }
}

template <typename T = float>
struct FeatureVolume {
    VoxelSpace space;
    Tensor<T> data;  // [K, L, W, H]

    int joints() const { return data.dim(0); }
};

enum class Plane { XY, XZ, YZ };

inline const char* plane_name(Plane p) {
    switch (p) {
        case Plane::XY: return "xy";
        case Plane::XZ: return "xz";
        default: return "yz";
    }
}

template <typename T = float>
struct PlaneFeature {
    Plane plane = Plane::XY;
    Tensor<T> data;  // [K, A, B]
};

template <typename T = float>
struct ColumnFeature {
    Tensor<T> data;  // [P, K, H]
};

namespace vol_detail {

// Heatmaps transposed to [H][W][K] so one bilinear sample reads K contiguous
// values per corner.
inline std::vector<std::vector<float>> transpose_heatmaps(const HeatmapSet& heatmaps) {
    std::vector<std::vector<float>> out(heatmaps.size());
    for (std::size_t c = 0; c < heatmaps.size(); ++c) {
        const auto& h = heatmaps[c];
        const int k = h.dim(0), rows = h.dim(1), cols = h.dim(2);
        out[c].resize(static_cast<std::size_t>(k) * rows * cols);
        for (int ki = 0; ki < k; ++ki)
            for (int y = 0; y < rows; ++y)
                for (int x = 0; x < cols; ++x)
                    out[c][(static_cast<std::size_t>(y) * cols + x) * k + ki] = h.at3(ki, y, x);
    }
    return out;
}

}  // namespace vol_detail

// Back-projection: every voxel center is projected into each camera and the
// camera's heatmaps are bilinearly sampled there. A camera contributes only
// when the point is in front of it and the full 2x2 sample neighborhood is
// inside the image. The voxel value is the mean over contributing cameras
// (taken in camera order), 0 with none, clamped to [0,1].
template <typename T = float>
FeatureVolume<T> build_volume(const HeatmapSet& heatmaps, const std::vector<Camera>& cameras,
                              const VoxelSpace& space, int threads = 1) {
    check_heatmaps(heatmaps, cameras);
    space.validate();
    const int joints = heatmaps[0].dim(0);
    for (const auto& h : heatmaps)
        if (h.dim(0) != joints) throw std::invalid_argument("inconsistent joint count across heatmaps");

    const int l = space.res[0], w = space.res[1], hres = space.res[2];
    FeatureVolume<T> vol;
    vol.space = space;
    vol.data = Tensor<T>({joints, l, w, hres});

    const auto planes = vol_detail::transpose_heatmaps(heatmaps);
    const Vec3 cell = space.cell_size();
    const std::size_t joint_stride = static_cast<std::size_t>(l) * w * hres;

    parallel_for(static_cast<std::size_t>(l), threads, [&](std::size_t i0, std::size_t i1) {
        std::vector<float> acc(static_cast<std::size_t>(joints));
        for (std::size_t i = i0; i < i1; ++i) {
            const double px = space.origin.x + (static_cast<double>(i) + 0.5) * cell.x;
            for (int j = 0; j < w; ++j) {
                const double py = space.origin.y + (j + 0.5) * cell.y;
                for (int z = 0; z < hres; ++z) {
                    const Vec3 p{px, py, space.origin.z + (z + 0.5) * cell.z};
                    std::fill(acc.begin(), acc.end(), 0.0f);
                    int contributors = 0;
                    for (std::size_t c = 0; c < cameras.size(); ++c) {
                        const Camera& cam = cameras[c];
                        const Projection pr = project_point(cam, p);
                        if (pr.behind) continue;
                        const int x0 = static_cast<int>(std::floor(pr.pixel.x));
                        const int y0 = static_cast<int>(std::floor(pr.pixel.y));
                        if (x0 < 0 || y0 < 0 || x0 + 1 >= cam.width || y0 + 1 >= cam.height) continue;
                        const float fx = static_cast<float>(pr.pixel.x - x0);
                        const float fy = static_cast<float>(pr.pixel.y - y0);
                        const float w00 = (1.0f - fy) * (1.0f - fx), w01 = (1.0f - fy) * fx;
                        const float w10 = fy * (1.0f - fx), w11 = fy * fx;
                        const float* base = planes[c].data() + (static_cast<std::size_t>(y0) * cam.width + x0) *
                                                                  static_cast<std::size_t>(joints);
                        const float* next = base + static_cast<std::size_t>(cam.width) * joints;
                        for (int k = 0; k < joints; ++k)
                            acc[k] += w00 * base[k] + w01 * base[joints + k] + w10 * next[k] + w11 * next[joints + k];
                        ++contributors;
                    }
                    const std::size_t cell_off = (i * static_cast<std::size_t>(w) + j) * hres + z;
                    if (contributors == 0) continue;
                    const float inv = 1.0f / static_cast<float>(contributors);
                    for (int k = 0; k < joints; ++k)
                        vol.data.data[static_cast<std::size_t>(k) * joint_stride + cell_off] =
                            static_cast<T>(std::clamp(acc[k] * inv, 0.0f, 1.0f));
                }
            }
        }
    });
    return vol;
}

// BEV reduction: max over z.
template <typename T>
PlaneFeature<T> project_bev(const FeatureVolume<T>& vol) {
    const int k = vol.data.dim(0), l = vol.data.dim(1), w = vol.data.dim(2), h = vol.data.dim(3);
    PlaneFeature<T> out;
    out.plane = Plane::XY;
    out.data = Tensor<T>({k, l, w});
    for (int ki = 0; ki < k; ++ki)
        for (int i = 0; i < l; ++i)
            for (int j = 0; j < w; ++j) {
                const T* col = &vol.data.data[vol.data.index4(ki, i, j, 0)];
                T best = col[0];
                for (int z = 1; z < h; ++z) best = std::max(best, col[z]);
                out.data.at3(ki, i, j) = best;
            }
    return out;
}

template <typename T>
ColumnFeature<T> extract_columns(const FeatureVolume<T>& vol, const std::vector<std::pair<int, int>>& cells) {
    const int k = vol.data.dim(0), l = vol.data.dim(1), w = vol.data.dim(2), h = vol.data.dim(3);
    ColumnFeature<T> out;
    out.data = Tensor<T>({static_cast<int>(cells.size()), k, h});
    for (std::size_t p = 0; p < cells.size(); ++p) {
        const auto [i, j] = cells[p];
        if (i < 0 || j < 0 || i >= l || j >= w) throw std::out_of_range("extract_columns: cell out of range");
        for (int ki = 0; ki < k; ++ki) {
            const T* col = &vol.data.data[vol.data.index4(ki, i, j, 0)];
            std::copy(col, col + h, &out.data.data[out.data.index3(static_cast<int>(p), ki, 0)]);
        }
    }
    return out;
}

// Cube of edge cube_mm centered on the detection, rebuilt by re-projection at
// fine resolution (no resampling of the coarse volume).
template <typename T = float>
FeatureVolume<T> build_person_volume(const HeatmapSet& heatmaps, const std::vector<Camera>& cameras,
                                     const Vec3& box_center, double cube_mm, int fine_res, int threads = 1) {
    VoxelSpace cube;
    cube.origin = {box_center.x - cube_mm / 2.0, box_center.y - cube_mm / 2.0, box_center.z - cube_mm / 2.0};
    cube.extent = {cube_mm, cube_mm, cube_mm};
    cube.res = {fine_res, fine_res, fine_res};
    return build_volume<T>(heatmaps, cameras, cube, threads);
}

// Zeroes voxels whose centers fall outside the detection's horizontal
// rectangle; z is never restricted inside the person cube.
template <typename T>
FeatureVolume<T> mask_person_volume(const FeatureVolume<T>& vol, const RectXY& box) {
    FeatureVolume<T> out = vol;
    const int k = vol.data.dim(0), l = vol.data.dim(1), w = vol.data.dim(2), h = vol.data.dim(3);
    const Vec3 cell = vol.space.cell_size();
    for (int i = 0; i < l; ++i) {
        const double x = vol.space.origin.x + (i + 0.5) * cell.x;
        for (int j = 0; j < w; ++j) {
            const double y = vol.space.origin.y + (j + 0.5) * cell.y;
            if (box.contains(x, y)) continue;
            for (int ki = 0; ki < k; ++ki) {
                T* col = &out.data.data[out.data.index4(ki, i, j, 0)];
                std::fill(col, col + h, T(0));
            }
        }
    }
    return out;
}

template <typename T>
std::array<PlaneFeature<T>, 3> project_triplanes(const FeatureVolume<T>& vol) {
    const int k = vol.data.dim(0), l = vol.data.dim(1), w = vol.data.dim(2), h = vol.data.dim(3);
    std::array<PlaneFeature<T>, 3> out;
    out[0].plane = Plane::XY;
    out[0].data = Tensor<T>({k, l, w});
    out[1].plane = Plane::XZ;
    out[1].data = Tensor<T>({k, l, h});
    out[2].plane = Plane::YZ;
    out[2].data = Tensor<T>({k, w, h});
    for (int ki = 0; ki < k; ++ki) {
        for (int i = 0; i < l; ++i)
            for (int j = 0; j < w; ++j) {
                const T* col = &vol.data.data[vol.data.index4(ki, i, j, 0)];
                T best = col[0];
                for (int z = 1; z < h; ++z) best = std::max(best, col[z]);
                out[0].data.at3(ki, i, j) = best;
            }
        for (int i = 0; i < l; ++i) {
            T* dst = &out[1].data.data[out[1].data.index3(ki, i, 0)];
            const T* first = &vol.data.data[vol.data.index4(ki, i, 0, 0)];
            std::copy(first, first + h, dst);
            for (int j = 1; j < w; ++j) {
                const T* col = &vol.data.data[vol.data.index4(ki, i, j, 0)];
                for (int z = 0; z < h; ++z) dst[z] = std::max(dst[z], col[z]);
            }
        }
        {
            T* plane = &out[2].data.data[out[2].data.index3(ki, 0, 0)];
            const std::size_t plane_elems = static_cast<std::size_t>(w) * h;
            const T* first = &vol.data.data[vol.data.index4(ki, 0, 0, 0)];
            std::copy(first, first + plane_elems, plane);
            for (int i = 1; i < l; ++i) {
                const T* slab = &vol.data.data[vol.data.index4(ki, i, 0, 0)];
                for (std::size_t s = 0; s < plane_elems; ++s) plane[s] = std::max(plane[s], slab[s]);
            }
        }
    }
    return out;
}

}  // namespace ovx
