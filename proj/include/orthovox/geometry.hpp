// Copyright (C) 2026 Orthovox Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ovx {

struct Vec2 {
    double x = 0.0, y = 0.0;
};

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        double n = norm();
        if (n == 0.0) throw std::domain_error("cannot normalize zero vector");
        return *this / n;
    }
    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

// Row-major 3x3 matrix.
struct Mat3 {
    std::array<double, 9> m{};

    static Mat3 identity() {
        Mat3 r;
        r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
        return r;
    }
    static Mat3 from_rows(const Vec3& r0, const Vec3& r1, const Vec3& r2) {
        Mat3 r;
        r.m = {r0.x, r0.y, r0.z, r1.x, r1.y, r1.z, r2.x, r2.y, r2.z};
        return r;
    }
    double& operator()(int r, int c) { return m[r * 3 + c]; }
    double operator()(int r, int c) const { return m[r * 3 + c]; }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }
    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        return r;
    }
};

inline bool is_orthonormal(const Mat3& r, double tol = 1e-9) {
    Mat3 g = r.transposed() * r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double want = (i == j) ? 1.0 : 0.0;
            if (std::abs(g(i, j) - want) > tol) return false;
        }
    return true;
}

// Ideal pinhole camera; R, t map world to camera frame.
struct Camera {
    std::string id;
    double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
    Mat3 R = Mat3::identity();
    Vec3 t;
    int width = 0, height = 0;

    void validate() const {
        if (fx <= 0.0 || fy <= 0.0) throw std::invalid_argument("camera " + id + ": focal lengths must be positive");
        if (width <= 0 || height <= 0) throw std::invalid_argument("camera " + id + ": image size must be positive");
        if (!is_orthonormal(R)) throw std::invalid_argument("camera " + id + ": rotation not orthonormal");
    }
};

struct Projection {
    Vec2 pixel;
    double depth = 0.0;
    bool behind = false;
};

inline Projection project_point(const Camera& cam, const Vec3& world) {
    Vec3 pc = cam.R * world + cam.t;
    Projection pr;
    pr.depth = pc.z;
    if (pc.z <= 0.0) {
        pr.behind = true;
        return pr;
    }
    pr.pixel = {cam.fx * pc.x / pc.z + cam.cx, cam.fy * pc.y / pc.z + cam.cy};
    return pr;
}

// Axis-aligned voxel grid. x spans L cells, y spans W, z spans H; z = 0 is the floor.
struct VoxelSpace {
    Vec3 origin;
    Vec3 extent;
    std::array<int, 3> res{};

    void validate() const {
        if (extent.x <= 0.0 || extent.y <= 0.0 || extent.z <= 0.0)
            throw std::invalid_argument("voxel space extent must be positive");
        if (res[0] < 1 || res[1] < 1 || res[2] < 1)
            throw std::invalid_argument("voxel resolution must be >= 1");
    }

    Vec3 cell_size() const { return {extent.x / res[0], extent.y / res[1], extent.z / res[2]}; }

    bool index_in_range(int i, int j, int k) const {
        return i >= 0 && j >= 0 && k >= 0 && i < res[0] && j < res[1] && k < res[2];
    }

    Vec3 voxel_center(int i, int j, int k) const {
        if (!index_in_range(i, j, k)) throw std::out_of_range("voxel index out of range");
        Vec3 c = cell_size();
        return {origin.x + (i + 0.5) * c.x, origin.y + (j + 0.5) * c.y, origin.z + (k + 0.5) * c.z};
    }

    // Continuous grid coordinates; may be out of range. floor() gives the containing cell.
    Vec3 world_to_grid(const Vec3& p) const {
        Vec3 c = cell_size();
        return {(p.x - origin.x) / c.x, (p.y - origin.y) / c.y, (p.z - origin.z) / c.z};
    }

    bool contains(const Vec3& p) const {
        return p.x >= origin.x && p.y >= origin.y && p.z >= origin.z && p.x <= origin.x + extent.x &&
               p.y <= origin.y + extent.y && p.z <= origin.z + extent.z;
    }
};

inline VoxelSpace default_motion_space() {
    VoxelSpace s;
    s.origin = {0.0, 0.0, 0.0};
    s.extent = {8000.0, 8000.0, 2000.0};
    s.res = {80, 80, 20};
    return s;
}

struct SkeletonDef {
    int joint_count = 0;
    std::vector<std::string> joint_names;
    std::vector<std::pair<int, int>> limbs;

    void validate() const {
        for (auto& [a, b] : limbs) {
            if (a < 0 || b < 0 || a >= joint_count || b >= joint_count)
                throw std::invalid_argument("limb joint index out of range");
            if (a == b) throw std::invalid_argument("limb self-loop");
        }
    }
};

// 15-joint CMU-style skeleton used by the synthetic generator.
inline const SkeletonDef& cmu15() {
    static const SkeletonDef def = [] {
        SkeletonDef d;
        d.joint_count = 15;
        d.joint_names = {"neck",  "nose",  "mid_hip", "l_shoulder", "l_elbow", "l_wrist", "l_hip", "l_knee",
                         "l_ankle", "r_shoulder", "r_elbow", "r_wrist", "r_hip", "r_knee", "r_ankle"};
        d.limbs = {{0, 1}, {0, 2}, {0, 3}, {3, 4}, {4, 5}, {2, 6}, {6, 7},
                   {7, 8}, {0, 9}, {9, 10}, {10, 11}, {2, 12}, {12, 13}, {13, 14}};
        d.validate();
        return d;
    }();
    return def;
}

struct PoseSkeleton {
    std::vector<Vec3> joints;
    std::vector<std::uint8_t> valid;

    explicit PoseSkeleton(int k = 0) : joints(k), valid(k, 1) {}

    int joint_count() const { return static_cast<int>(joints.size()); }

    // Midpoint of the hips when both are valid, else the first valid joint.
    Vec3 root_center(const SkeletonDef& def) const {
        int lhip = -1, rhip = -1;
        for (int i = 0; i < static_cast<int>(def.joint_names.size()); ++i) {
            if (def.joint_names[i] == "l_hip") lhip = i;
            if (def.joint_names[i] == "r_hip") rhip = i;
        }
        if (lhip >= 0 && rhip >= 0 && lhip < joint_count() && rhip < joint_count() && valid[lhip] && valid[rhip])
            return (joints[lhip] + joints[rhip]) * 0.5;
        for (int i = 0; i < joint_count(); ++i)
            if (valid[i]) return joints[i];
        throw std::invalid_argument("pose has no valid joints");
    }
};

// Axis-aligned rectangle on the ground plane, used for boxes and BEV IoU.
struct RectXY {
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

    static RectXY from_center_size(const Vec2& center, const Vec2& size) {
        return {center.x - size.x / 2.0, center.y - size.y / 2.0, center.x + size.x / 2.0, center.y + size.y / 2.0};
    }
    double area() const { return std::max(0.0, x1 - x0) * std::max(0.0, y1 - y0); }
    bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
    bool intersects(const RectXY& o) const {
        return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1;
    }
};

inline double rect_iou(const RectXY& a, const RectXY& b) {
    double ix = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
    double iy = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
    double inter = std::max(0.0, ix) * std::max(0.0, iy);
    double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

// Tight xy extent of a pose's valid joints, grown by margin on each side.
inline RectXY pose_bbox_xy(const PoseSkeleton& pose, double margin_mm) {
    bool any = false;
    RectXY r{1e30, 1e30, -1e30, -1e30};
    for (int i = 0; i < pose.joint_count(); ++i) {
        if (!pose.valid[i]) continue;
        any = true;
        r.x0 = std::min(r.x0, pose.joints[i].x);
        r.y0 = std::min(r.y0, pose.joints[i].y);
        r.x1 = std::max(r.x1, pose.joints[i].x);
        r.y1 = std::max(r.y1, pose.joints[i].y);
    }
    if (!any) throw std::invalid_argument("pose has no valid joints");
    return {r.x0 - margin_mm, r.y0 - margin_mm, r.x1 + margin_mm, r.y1 + margin_mm};
}

}  // namespace ovx
