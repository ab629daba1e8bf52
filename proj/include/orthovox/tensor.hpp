// Copyright (C) 2026 Orthovox Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ovx {

// Dense row-major tensor. The optional grad buffer is allocated lazily by
// training code and always matches data in length.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;
    std::vector<T> grad;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
        data.assign(numel_of(shape), fill);
    }

    static std::size_t numel_of(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            if (d < 0) throw std::invalid_argument("negative tensor dimension");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::size_t numel() const { return data.size(); }
    int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
    int rank() const { return static_cast<int>(shape.size()); }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    std::size_t index3(int a, int b, int c) const {
        return (static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c;
    }
    std::size_t index4(int a, int b, int c, int d) const {
        return ((static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c) * static_cast<std::size_t>(shape[3]) + d;
    }

    T& at3(int a, int b, int c) { return data[index3(a, b, c)]; }
    const T& at3(int a, int b, int c) const { return data[index3(a, b, c)]; }
    T& at4(int a, int b, int c, int d) { return data[index4(a, b, c, d)]; }
    const T& at4(int a, int b, int c, int d) const { return data[index4(a, b, c, d)]; }

    void fill(T v) { data.assign(data.size(), v); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
    void zero_grad() {
        if (!grad.empty()) grad.assign(grad.size(), T(0));
    }

    void reshape(std::vector<int> s) {
        if (numel_of(s) != data.size()) throw std::invalid_argument("reshape changes element count");
        shape = std::move(s);
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> r;
        r.shape = shape;
        r.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) r.data[i] = static_cast<U>(data[i]);
        return r;
    }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::string r = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) r += ",";
        r += std::to_string(s[i]);
    }
    return r + "]";
}

}  // namespace ovx
