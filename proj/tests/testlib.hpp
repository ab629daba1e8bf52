// Copyright (C) 2026 Orthovox Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "orthovox/layers.hpp"
#include "orthovox/tensor.hpp"

namespace ovxtest {

template <typename T>
void fill_uniform(ovx::Tensor<T>& t, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    for (auto& v : t.data) v = static_cast<T>(d(rng));
}

// Fills with values pairwise separated by at least `gap` so finite-difference
// probes cannot flip an argmax.
template <typename T>
void fill_distinct(ovx::Tensor<T>& t, std::mt19937_64& rng, double gap = 0.05) {
    std::vector<std::size_t> order(t.numel());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < order.size(); ++i)
        t.data[order[i]] = static_cast<T>(static_cast<double>(i) * gap - static_cast<double>(order.size()) * gap / 2);
}

struct GradCheckResult {
    double max_rel = 0.0;   // worst |analytic - fd| relative to the tensor's gradient scale
    std::string worst;      // which tensor and element produced it
};

// Central-difference check of a layer's input and parameter gradients against
// a random linear readout of the output. Relative error is measured against
// the largest gradient magnitude of the tensor under test, so uniformly tiny
// gradients do not mask real disagreements on the big ones.
inline GradCheckResult grad_check(ovx::Layer<double>& layer, ovx::Tensor<double> x, std::uint64_t seed,
                                  double h = 3e-4) {
    std::mt19937_64 rng(seed);
    ovx::Tensor<double> w(layer.out_shape(x.shape));
    fill_uniform(w, rng);

    auto eval = [&]() {
        ovx::Tensor<double> y = layer.forward(x, true);
        double s = 0.0;
        for (std::size_t i = 0; i < y.numel(); ++i) s += y.data[i] * w.data[i];
        return s;
    };

    std::vector<ovx::ParamRef<double>> params;
    layer.collect("p", params);
    for (auto& p : params) {
        if (!p.trainable) continue;
        p.tensor->ensure_grad();
        p.tensor->zero_grad();
    }
    (void)layer.forward(x, true);
    ovx::Tensor<double> dx = layer.backward(w);

    GradCheckResult r;
    auto check_tensor = [&](const std::string& name, std::vector<double>& values, const std::vector<double>& analytic) {
        std::vector<double> fd(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double keep = values[i];
            values[i] = keep + h;
            const double up = eval();
            values[i] = keep - h;
            const double dn = eval();
            values[i] = keep;
            fd[i] = (up - dn) / (2.0 * h);
        }
        double scale = 1e-12;
        for (std::size_t i = 0; i < values.size(); ++i)
            scale = std::max({scale, std::abs(analytic[i]), std::abs(fd[i])});
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double rel = std::abs(analytic[i] - fd[i]) / scale;
            if (rel > r.max_rel) {
                r.max_rel = rel;
                r.worst = name + "[" + std::to_string(i) + "]";
            }
        }
    };

    check_tensor("input", x.data, dx.data);
    for (auto& p : params) {
        if (!p.trainable) continue;
        check_tensor(p.name, p.tensor->data, p.tensor->grad);
    }
    return r;
}

// Unique scratch directory removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag = "t") {
        auto base = std::filesystem::temp_directory_path() / ("ovx_" + tag + "_XXXXXX");
        std::string tmpl = base.string();
        if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed for " + tmpl);
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::string& path() const { return path_; }
    std::string sub(const std::string& name) const { return (std::filesystem::path(path_) / name).string(); }

  private:
    std::string path_;
};

inline std::vector<char> read_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace ovxtest
