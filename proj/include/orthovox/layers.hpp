// Copyright (C) 2026 Orthovox Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "orthovox/tensor.hpp"

namespace ovx {

template <typename T>
struct ParamRef {
    std::string name;
    Tensor<T>* tensor = nullptr;
    bool trainable = true;
};

// All layers run stride-1 convolutions and factor-2 pooling/upsampling; that
// covers every architecture used here. Forward caches what backward needs
// when train=true; backward accumulates parameter gradients in-place and
// returns the input gradient.
template <typename T>
class Layer {
  public:
    virtual ~Layer() = default;
    virtual Tensor<T> forward(const Tensor<T>& x, bool train) = 0;
    virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
    virtual void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) { (void)prefix, (void)out; }
    virtual std::vector<int> out_shape(const std::vector<int>& in) const { return in; }
    virtual std::int64_t macs(const std::vector<int>& in) const {
        (void)in;
        return 0;
    }
};

namespace nn_detail {

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

template <typename T>
void kaiming_uniform(Tensor<T>& w, std::size_t fan_in, std::mt19937_64& rng) {
    T bound = static_cast<T>(std::sqrt(6.0 / static_cast<double>(fan_in)));
    std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
    for (auto& v : w.data) v = static_cast<T>(dist(rng));
}

// Row kernels for the convolution inner loops. The simd forms only pay off
// once a row fills a vector register; below that the pragma'd loop costs
// several times the plain scalar one, so callers dispatch on row width.
constexpr int kWideRow = 16;

template <typename T>
inline void row_axpy(T* __restrict y, const T* __restrict x, T a, int n) {
#pragma omp simd
    for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
inline void row_axpy_narrow(T* __restrict y, const T* __restrict x, T a, int n) {
    for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
inline T row_dot(const T* a, const T* b, int n) {
    T acc = T(0);
#pragma omp simd reduction(+ : acc)
    for (int i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <typename T>
inline T row_dot_narrow(const T* a, const T* b, int n) {
    T acc = T(0);
    for (int i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

// Copies [c, h, w] planes into a zero-filled halo buffer of [c, h+2p, w+2p]
// so the convolution loops never clip rows at the borders. The halo zeros
// drop out of every sum, so results match the clipped form exactly.
template <typename T>
void fill_halo(const T* x, int c, int h, int w, int pad, T* dst) {
    const int hp = h + 2 * pad, wp = w + 2 * pad;
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y) {
            const T* src = x + (static_cast<std::size_t>(ci) * h + y) * w;
            T* d = dst + (static_cast<std::size_t>(ci) * hp + y + pad) * wp + pad;
            std::copy(src, src + w, d);
        }
}

}  // namespace nn_detail

template <typename T>
class Conv2d : public Layer<T> {
  public:
    Conv2d(int cin, int cout, int k, std::mt19937_64& rng) : cin_(cin), cout_(cout), k_(k), pad_(k / 2) {
        w_ = Tensor<T>({cout, cin, k, k});
        b_ = Tensor<T>({cout});
        nn_detail::kaiming_uniform(w_, static_cast<std::size_t>(cin) * k * k, rng);
    }

    std::vector<int> out_shape(const std::vector<int>& in) const override {
        nn_detail::require(in.size() == 4 && in[1] == cin_, "conv2d: bad input shape " + shape_str(in));
        return {in[0], cout_, in[2] + 2 * pad_ - k_ + 1, in[3] + 2 * pad_ - k_ + 1};
    }

    std::int64_t macs(const std::vector<int>& in) const override {
        auto o = out_shape(in);
        return static_cast<std::int64_t>(o[0]) * o[1] * o[2] * o[3] * cin_ * k_ * k_;
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) override {
        auto os = out_shape(x.shape);
        const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
        const int ho = os[2], wo = os[3];
        const int hp = h + 2 * pad_, wp = w + 2 * pad_;
        const std::size_t plane = static_cast<std::size_t>(hp) * wp;
        const bool wide = wo >= nn_detail::kWideRow;
        std::vector<T> scratch;
        std::vector<T>& xp = train ? xpad_ : scratch;
        xp.assign(static_cast<std::size_t>(n) * cin_ * plane, T(0));
        for (int ni = 0; ni < n; ++ni)
            nn_detail::fill_halo(&x.data[x.index4(ni, 0, 0, 0)], cin_, h, w, pad_,
                                 xp.data() + static_cast<std::size_t>(ni) * cin_ * plane);
        Tensor<T> y(os);
        for (int ni = 0; ni < n; ++ni) {
            const T* xb = xp.data() + static_cast<std::size_t>(ni) * cin_ * plane;
            for (int co = 0; co < cout_; ++co) {
                T* yp = &y.data[y.index4(ni, co, 0, 0)];
                std::fill(yp, yp + static_cast<std::size_t>(ho) * wo, b_[co]);
                for (int ci = 0; ci < cin_; ++ci) {
                    const T* xc = xb + static_cast<std::size_t>(ci) * plane;
                    for (int ky = 0; ky < k_; ++ky) {
                        for (int kx = 0; kx < k_; ++kx) {
                            const T wv = w_.at4(co, ci, ky, kx);
                            for (int yo = 0; yo < ho; ++yo) {
                                const T* xr = xc + static_cast<std::size_t>(yo + ky) * wp + kx;
                                T* yr = yp + static_cast<std::size_t>(yo) * wo;
                                if (wide)
                                    nn_detail::row_axpy(yr, xr, wv, wo);
                                else
                                    nn_detail::row_axpy_narrow(yr, xr, wv, wo);
                            }
                        }
                    }
                }
            }
        }
        if (train) xshape_ = x.shape;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        nn_detail::require(!xshape_.empty(), "conv2d: backward without cached forward");
        const int n = xshape_[0], h = xshape_[2], w = xshape_[3];
        const int ho = dy.dim(2), wo = dy.dim(3);
        const int hp = h + 2 * pad_, wp = w + 2 * pad_;
        const std::size_t plane = static_cast<std::size_t>(hp) * wp;
        const std::size_t oplane = static_cast<std::size_t>(ho) * wo;
        const bool wide = wo >= nn_detail::kWideRow;
        w_.ensure_grad();
        b_.ensure_grad();
        Tensor<T> dx(xshape_);
        std::vector<T> dxp(static_cast<std::size_t>(cin_) * plane);
        for (int ni = 0; ni < n; ++ni) {
            std::fill(dxp.begin(), dxp.end(), T(0));
            const T* xb = xpad_.data() + static_cast<std::size_t>(ni) * cin_ * plane;
            for (int co = 0; co < cout_; ++co) {
                const T* dyp = &dy.data[dy.index4(ni, co, 0, 0)];
                T bacc = T(0);
#pragma omp simd reduction(+ : bacc)
                for (std::size_t i = 0; i < oplane; ++i) bacc += dyp[i];
                b_.grad[static_cast<std::size_t>(co)] += bacc;
                for (int ci = 0; ci < cin_; ++ci) {
                    const T* xc = xb + static_cast<std::size_t>(ci) * plane;
                    T* dxc = dxp.data() + static_cast<std::size_t>(ci) * plane;
                    for (int ky = 0; ky < k_; ++ky) {
                        for (int kx = 0; kx < k_; ++kx) {
                            const T wv = w_.at4(co, ci, ky, kx);
                            T wacc = T(0);
                            for (int yo = 0; yo < ho; ++yo) {
                                const std::size_t xoff = static_cast<std::size_t>(yo + ky) * wp + kx;
                                const T* dyr = dyp + static_cast<std::size_t>(yo) * wo;
                                if (wide) {
                                    wacc += nn_detail::row_dot(dyr, xc + xoff, wo);
                                    nn_detail::row_axpy(dxc + xoff, dyr, wv, wo);
                                } else {
                                    wacc += nn_detail::row_dot_narrow(dyr, xc + xoff, wo);
                                    nn_detail::row_axpy_narrow(dxc + xoff, dyr, wv, wo);
                                }
                            }
                            w_.grad[w_.index4(co, ci, ky, kx)] += wacc;
                        }
                    }
                }
            }
            for (int ci = 0; ci < cin_; ++ci)
                for (int yy = 0; yy < h; ++yy) {
                    const T* src = dxp.data() + (static_cast<std::size_t>(ci) * hp + yy + pad_) * wp + pad_;
                    std::copy(src, src + w, &dx.data[dx.index4(ni, ci, yy, 0)]);
                }
        }
        return dx;
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
        out.push_back({prefix + ".w", &w_, true});
        out.push_back({prefix + ".b", &b_, true});
    }

    Tensor<T>& weight() { return w_; }
    Tensor<T>& bias() { return b_; }

  private:
    int cin_, cout_, k_, pad_;
    Tensor<T> w_, b_;
    std::vector<T> xpad_;
    std::vector<int> xshape_;
};

template <typename T>
class Conv1d : public Layer<T> {
  public:
    Conv1d(int cin, int cout, int k, std::mt19937_64& rng) : cin_(cin), cout_(cout), k_(k), pad_(k / 2) {
        w_ = Tensor<T>({cout, cin, k});
        b_ = Tensor<T>({cout});
        nn_detail::kaiming_uniform(w_, static_cast<std::size_t>(cin) * k, rng);
    }

    std::vector<int> out_shape(const std::vector<int>& in) const override {
        nn_detail::require(in.size() == 3 && in[1] == cin_, "conv1d: bad input shape " + shape_str(in));
        return {in[0], cout_, in[2] + 2 * pad_ - k_ + 1};
    }

    std::int64_t macs(const std::vector<int>& in) const override {
        auto o = out_shape(in);
        return static_cast<std::int64_t>(o[0]) * o[1] * o[2] * cin_ * k_;
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) override {
        auto os = out_shape(x.shape);
        const int n = x.dim(0), l = x.dim(2), lo = os[2];
        Tensor<T> y(os);
        for (int ni = 0; ni < n; ++ni)
            for (int co = 0; co < cout_; ++co) {
                T* yr = &y.data[y.index3(ni, co, 0)];
                std::fill(yr, yr + lo, b_[co]);
                for (int ci = 0; ci < cin_; ++ci) {
                    const T* xr = &x.data[x.index3(ni, ci, 0)];
                    for (int kx = 0; kx < k_; ++kx) {
                        const T wv = w_.at3(co, ci, kx);
                        const int o0 = std::max(0, pad_ - kx), o1 = std::min(lo, l + pad_ - kx);
                        for (int o = o0; o < o1; ++o) yr[o] += wv * xr[o + kx - pad_];
                    }
                }
            }
        if (train) xcache_ = x;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        nn_detail::require(!xcache_.shape.empty(), "conv1d: backward without cached forward");
        const Tensor<T>& x = xcache_;
        const int n = x.dim(0), l = x.dim(2), lo = dy.dim(2);
        w_.ensure_grad();
        b_.ensure_grad();
        Tensor<T> dx(x.shape);
        for (int ni = 0; ni < n; ++ni)
            for (int co = 0; co < cout_; ++co) {
                const T* dyr = &dy.data[dy.index3(ni, co, 0)];
                T bacc = T(0);
#pragma omp simd reduction(+ : bacc)
                for (int o = 0; o < lo; ++o) bacc += dyr[o];
                b_.grad[static_cast<std::size_t>(co)] += bacc;
                for (int ci = 0; ci < cin_; ++ci) {
                    const T* xr = &x.data[x.index3(ni, ci, 0)];
                    T* dxr = &dx.data[dx.index3(ni, ci, 0)];
                    for (int kx = 0; kx < k_; ++kx) {
                        const T wv = w_.at3(co, ci, kx);
                        const int o0 = std::max(0, pad_ - kx), o1 = std::min(lo, l + pad_ - kx);
                        const T* xs = xr + kx - pad_;
                        T* dxs = dxr + kx - pad_;
                        T wacc = T(0);
#pragma omp simd reduction(+ : wacc)
                        for (int o = o0; o < o1; ++o) wacc += dyr[o] * xs[o];
#pragma omp simd
                        for (int o = o0; o < o1; ++o) dxs[o] += wv * dyr[o];
                        w_.grad[w_.index3(co, ci, kx)] += wacc;
                    }
                }
            }
        return dx;
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
        out.push_back({prefix + ".w", &w_, true});
        out.push_back({prefix + ".b", &b_, true});
    }

    Tensor<T>& weight() { return w_; }
    Tensor<T>& bias() { return b_; }

  private:
    int cin_, cout_, k_, pad_;
    Tensor<T> w_, b_;
    Tensor<T> xcache_;
};

// Transposed convolution, kernel 2 stride 2: exact 2x upsampling.
template <typename T>
class Deconv2d : public Layer<T> {
  public:
    Deconv2d(int cin, int cout, std::mt19937_64& rng) : cin_(cin), cout_(cout) {
        w_ = Tensor<T>({cin, cout, 2, 2});
        b_ = Tensor<T>({cout});
        nn_detail::kaiming_uniform(w_, static_cast<std::size_t>(cin) * 4, rng);
    }

    std::vector<int> out_shape(const std::vector<int>& in) const override {
        nn_detail::require(in.size() == 4 && in[1] == cin_, "deconv2d: bad input shape " + shape_str(in));
        return {in[0], cout_, in[2] * 2, in[3] * 2};
    }

    std::int64_t macs(const std::vector<int>& in) const override {
        return static_cast<std::int64_t>(in[0]) * in[1] * in[2] * in[3] * cout_ * 4;
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) override {
        auto os = out_shape(x.shape);
        const int n = x.dim(0), h = x.dim(2), w = x.dim(3), wo = os[3];
        Tensor<T> y(os);
        for (int ni = 0; ni < n; ++ni)
            for (int co = 0; co < cout_; ++co) {
                T* yp = &y.data[y.index4(ni, co, 0, 0)];
                std::fill(yp, yp + static_cast<std::size_t>(os[2]) * wo, b_[co]);
                for (int ci = 0; ci < cin_; ++ci) {
                    const T* xp = &x.data[x.index4(ni, ci, 0, 0)];
                    for (int ky = 0; ky < 2; ++ky)
                        for (int kx = 0; kx < 2; ++kx) {
                            const T wv = w_.at4(ci, co, ky, kx);
                            for (int yi = 0; yi < h; ++yi) {
                                const T* xr = xp + static_cast<std::size_t>(yi) * w;
                                T* yr = yp + static_cast<std::size_t>(2 * yi + ky) * wo + kx;
                                for (int xi = 0; xi < w; ++xi) yr[2 * xi] += wv * xr[xi];
                            }
                        }
                }
            }
        if (train) xcache_ = x;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        nn_detail::require(!xcache_.shape.empty(), "deconv2d: backward without cached forward");
        const Tensor<T>& x = xcache_;
        const int n = x.dim(0), h = x.dim(2), w = x.dim(3), wo = dy.dim(3);
        w_.ensure_grad();
        b_.ensure_grad();
        Tensor<T> dx(x.shape);
        for (int ni = 0; ni < n; ++ni)
            for (int co = 0; co < cout_; ++co) {
                const T* dyp = &dy.data[dy.index4(ni, co, 0, 0)];
                T bacc = T(0);
                const std::size_t plane = static_cast<std::size_t>(dy.dim(2)) * wo;
#pragma omp simd reduction(+ : bacc)
                for (std::size_t i = 0; i < plane; ++i) bacc += dyp[i];
                b_.grad[static_cast<std::size_t>(co)] += bacc;
                for (int ci = 0; ci < cin_; ++ci) {
                    const T* xp = &x.data[x.index4(ni, ci, 0, 0)];
                    T* dxp = &dx.data[dx.index4(ni, ci, 0, 0)];
                    for (int ky = 0; ky < 2; ++ky)
                        for (int kx = 0; kx < 2; ++kx) {
                            const T wv = w_.at4(ci, co, ky, kx);
                            T wacc = T(0);
                            for (int yi = 0; yi < h; ++yi) {
                                const T* dyr = dyp + static_cast<std::size_t>(2 * yi + ky) * wo + kx;
                                const T* xr = xp + static_cast<std::size_t>(yi) * w;
                                T* dxr = dxp + static_cast<std::size_t>(yi) * w;
#pragma omp simd reduction(+ : wacc)
                                for (int xi = 0; xi < w; ++xi) wacc += xr[xi] * dyr[2 * xi];
#pragma omp simd
                                for (int xi = 0; xi < w; ++xi) dxr[xi] += wv * dyr[2 * xi];
                            }
                            w_.grad[w_.index4(ci, co, ky, kx)] += wacc;
                        }
                }
            }
        return dx;
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
        out.push_back({prefix + ".w", &w_, true});
        out.push_back({prefix + ".b", &b_, true});
    }

  private:
    int cin_, cout_;
    Tensor<T> w_, b_;
    Tensor<T> xcache_;
};

template <typename T>
class Deconv1d : public Layer<T> {
  public:
    Deconv1d(int cin, int cout, std::mt19937_64& rng) : cin_(cin), cout_(cout) {
        w_ = Tensor<T>({cin, cout, 2});
        b_ = Tensor<T>({cout});
        nn_detail::kaiming_uniform(w_, static_cast<std::size_t>(cin) * 2, rng);
    }

    std::vector<int> out_shape(const std::vector<int>& in) const override {
        nn_detail::require(in.size() == 3 && in[1] == cin_, "deconv1d: bad input shape " + shape_str(in));
        return {in[0], cout_, in[2] * 2};
    }

    std::int64_t macs(const std::vector<int>& in) const override {
        return static_cast<std::int64_t>(in[0]) * in[1] * in[2] * cout_ * 2;
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) override {
        auto os = out_shape(x.shape);
        const int n = x.dim(0), l = x.dim(2);
        Tensor<T> y(os);
        for (int ni = 0; ni < n; ++ni)
            for (int co = 0; co < cout_; ++co) {
                T* yr = &y.data[y.index3(ni, co, 0)];
                std::fill(yr, yr + os[2], b_[co]);
                for (int ci = 0; ci < cin_; ++ci) {
                    const T* xr = &x.data[x.index3(ni, ci, 0)];
                    for (int kx = 0; kx < 2; ++kx) {
                        const T wv = w_.at3(ci, co, kx);
                        for (int xi = 0; xi < l; ++xi) yr[2 * xi + kx] += wv * xr[xi];
                    }
                }
            }
        if (train) xcache_ = x;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        nn_detail::require(!xcache_.shape.empty(), "deconv1d: backward without cached forward");
        const Tensor<T>& x = xcache_;
        const int n = x.dim(0), l = x.dim(2);
        w_.ensure_grad();
        b_.ensure_grad();
        Tensor<T> dx(x.shape);
        for (int ni = 0; ni < n; ++ni)
            for (int co = 0; co < cout_; ++co) {
                const T* dyr = &dy.data[dy.index3(ni, co, 0)];
                T bacc = T(0);
                const int lo = dy.dim(2);
#pragma omp simd reduction(+ : bacc)
                for (int o = 0; o < lo; ++o) bacc += dyr[o];
                b_.grad[static_cast<std::size_t>(co)] += bacc;
                for (int ci = 0; ci < cin_; ++ci) {
                    const T* xr = &x.data[x.index3(ni, ci, 0)];
                    T* dxr = &dx.data[dx.index3(ni, ci, 0)];
                    for (int kx = 0; kx < 2; ++kx) {
                        const T wv = w_.at3(ci, co, kx);
                        T wacc = T(0);
#pragma omp simd reduction(+ : wacc)
                        for (int xi = 0; xi < l; ++xi) wacc += xr[xi] * dyr[2 * xi + kx];
#pragma omp simd
                        for (int xi = 0; xi < l; ++xi) dxr[xi] += wv * dyr[2 * xi + kx];
                        w_.grad[w_.index3(ci, co, kx)] += wacc;
                    }
                }
            }
        return dx;
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
        out.push_back({prefix + ".w", &w_, true});
        out.push_back({prefix + ".b", &b_, true});
    }

  private:
    int cin_, cout_;
    Tensor<T> w_, b_;
    Tensor<T> xcache_;
};

// Batch normalization over the channel axis of [N, C, spatial...]. Training
// uses biased per-batch statistics; eval uses the running averages
// (momentum 0.1). Running buffers are checkpointed but not trained.
template <typename T>
class BatchNorm : public Layer<T> {
  public:
    explicit BatchNorm(int channels, T momentum = T(0.1), T eps = T(1e-5))
        : c_(channels), momentum_(momentum), eps_(eps) {
        gamma_ = Tensor<T>({channels}, T(1));
        beta_ = Tensor<T>({channels});
        running_mean_ = Tensor<T>({channels});
        running_var_ = Tensor<T>({channels}, T(1));
    }

    std::vector<int> out_shape(const std::vector<int>& in) const override {
        nn_detail::require(in.size() >= 2 && in[1] == c_, "batchnorm: bad input shape " + shape_str(in));
        return in;
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) override {
        out_shape(x.shape);
        const int n = x.dim(0);
        std::size_t spatial = 1;
        for (int i = 2; i < x.rank(); ++i) spatial *= static_cast<std::size_t>(x.dim(i));
        const std::size_t m = static_cast<std::size_t>(n) * spatial;
        Tensor<T> y(x.shape);
        if (!train) {
            for (int ni = 0; ni < n; ++ni)
                for (int ci = 0; ci < c_; ++ci) {
                    const T inv = gamma_[ci] / std::sqrt(running_var_[ci] + eps_);
                    const T shift = beta_[ci] - running_mean_[ci] * inv;
                    const std::size_t off = (static_cast<std::size_t>(ni) * c_ + ci) * spatial;
                    for (std::size_t s = 0; s < spatial; ++s) y.data[off + s] = inv * x.data[off + s] + shift;
                }
            return y;
        }
        nn_detail::require(m > 1, "batchnorm: needs more than one sample per channel in training");
        mean_.assign(c_, T(0));
        invstd_.assign(c_, T(0));
        for (int ci = 0; ci < c_; ++ci) {
            T acc = T(0);
            for (int ni = 0; ni < n; ++ni) {
                const std::size_t off = (static_cast<std::size_t>(ni) * c_ + ci) * spatial;
#pragma omp simd reduction(+ : acc)
                for (std::size_t s = 0; s < spatial; ++s) acc += x.data[off + s];
            }
            const T mu = acc / static_cast<T>(m);
            T vacc = T(0);
            for (int ni = 0; ni < n; ++ni) {
                const std::size_t off = (static_cast<std::size_t>(ni) * c_ + ci) * spatial;
#pragma omp simd reduction(+ : vacc)
                for (std::size_t s = 0; s < spatial; ++s) {
                    const T d = x.data[off + s] - mu;
                    vacc += d * d;
                }
            }
            const T var = vacc / static_cast<T>(m);
            mean_[ci] = mu;
            invstd_[ci] = T(1) / std::sqrt(var + eps_);
            running_mean_[ci] = (T(1) - momentum_) * running_mean_[ci] + momentum_ * mu;
            running_var_[ci] = (T(1) - momentum_) * running_var_[ci] + momentum_ * var;
        }
        xhat_ = Tensor<T>(x.shape);
        for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < c_; ++ci) {
                const std::size_t off = (static_cast<std::size_t>(ni) * c_ + ci) * spatial;
                for (std::size_t s = 0; s < spatial; ++s) {
                    const T xh = (x.data[off + s] - mean_[ci]) * invstd_[ci];
                    xhat_.data[off + s] = xh;
                    y.data[off + s] = gamma_[ci] * xh + beta_[ci];
                }
            }
        spatial_ = spatial;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        nn_detail::require(!xhat_.shape.empty(), "batchnorm: backward without cached forward");
        const int n = dy.dim(0);
        const std::size_t spatial = spatial_;
        const T m = static_cast<T>(static_cast<std::size_t>(n) * spatial);
        gamma_.ensure_grad();
        beta_.ensure_grad();
        Tensor<T> dx(dy.shape);
        for (int ci = 0; ci < c_; ++ci) {
            T sum_dy = T(0), sum_dy_xhat = T(0);
            for (int ni = 0; ni < n; ++ni) {
                const std::size_t off = (static_cast<std::size_t>(ni) * c_ + ci) * spatial;
#pragma omp simd reduction(+ : sum_dy, sum_dy_xhat)
                for (std::size_t s = 0; s < spatial; ++s) {
                    sum_dy += dy.data[off + s];
                    sum_dy_xhat += dy.data[off + s] * xhat_.data[off + s];
                }
            }
            gamma_.grad[static_cast<std::size_t>(ci)] += sum_dy_xhat;
            beta_.grad[static_cast<std::size_t>(ci)] += sum_dy;
            const T scale = gamma_[ci] * invstd_[ci] / m;
            for (int ni = 0; ni < n; ++ni) {
                const std::size_t off = (static_cast<std::size_t>(ni) * c_ + ci) * spatial;
                for (std::size_t s = 0; s < spatial; ++s)
                    dx.data[off + s] =
                        scale * (m * dy.data[off + s] - sum_dy - xhat_.data[off + s] * sum_dy_xhat);
            }
        }
        return dx;
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
        out.push_back({prefix + ".gamma", &gamma_, true});
        out.push_back({prefix + ".beta", &beta_, true});
        out.push_back({prefix + ".running_mean", &running_mean_, false});
        out.push_back({prefix + ".running_var", &running_var_, false});
    }

  private:
    int c_;
    T momentum_, eps_;
    Tensor<T> gamma_, beta_, running_mean_, running_var_;
    std::vector<T> mean_, invstd_;
    Tensor<T> xhat_;
    std::size_t spatial_ = 0;
};

template <typename T>
class ReLU : public Layer<T> {
  public:
    Tensor<T> forward(const Tensor<T>& x, bool train) override {
        Tensor<T> y(x.shape);
        for (std::size_t i = 0; i < x.numel(); ++i) y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
        if (train) {
            mask_.assign(x.numel(), 0);
            for (std::size_t i = 0; i < x.numel(); ++i) mask_[i] = x.data[i] > T(0);
        }
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy) override {
        nn_detail::require(mask_.size() == dy.numel(), "relu: backward without cached forward");
        Tensor<T> dx(dy.shape);
        for (std::size_t i = 0; i < dy.numel(); ++i) dx.data[i] = mask_[i] ? dy.data[i] : T(0);
        return dx;
    }

  private:
    std::vector<std::uint8_t> mask_;
};

template <typename T>
class Sigmoid : public Layer<T> {
  public:
    Tensor<T> forward(const Tensor<T>& x, bool train) override {
        Tensor<T> y(x.shape);
        for (std::size_t i = 0; i < x.numel(); ++i) y.data[i] = T(1) / (T(1) + std::exp(-x.data[i]));
        if (train) ycache_ = y;
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy) override {
        nn_detail::require(ycache_.numel() == dy.numel(), "sigmoid: backward without cached forward");
        Tensor<T> dx(dy.shape);
        for (std::size_t i = 0; i < dy.numel(); ++i)
            dx.data[i] = dy.data[i] * ycache_.data[i] * (T(1) - ycache_.data[i]);
        return dx;
    }

  private:
    Tensor<T> ycache_;
};

// 2x2 stride-2 max pooling; spatial dims must be even. On ties the first
// window element in (ky, kx) scan order wins, keeping backward deterministic.
template <typename T>
class MaxPool2d : public Layer<T> {
  public:
    std::vector<int> out_shape(const std::vector<int>& in) const override {
        nn_detail::require(in.size() == 4 && in[2] % 2 == 0 && in[3] % 2 == 0,
                           "maxpool2d: needs even spatial dims, got " + shape_str(in));
        return {in[0], in[1], in[2] / 2, in[3] / 2};
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) override {
        auto os = out_shape(x.shape);
        const int planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
        const int ho = os[2], wo = os[3];
        Tensor<T> y(os);
        if (train) argmax_.assign(y.numel(), 0);
        for (int p = 0; p < planes; ++p) {
            const T* xp = &x.data[static_cast<std::size_t>(p) * h * w];
            T* yp = &y.data[static_cast<std::size_t>(p) * ho * wo];
            for (int yo = 0; yo < ho; ++yo)
                for (int xo = 0; xo < wo; ++xo) {
                    std::size_t best = static_cast<std::size_t>(2 * yo) * w + 2 * xo;
                    T bv = xp[best];
                    for (int ky = 0; ky < 2; ++ky)
                        for (int kx = 0; kx < 2; ++kx) {
                            std::size_t idx = static_cast<std::size_t>(2 * yo + ky) * w + (2 * xo + kx);
                            if (xp[idx] > bv) {
                                bv = xp[idx];
                                best = idx;
                            }
                        }
                    yp[static_cast<std::size_t>(yo) * wo + xo] = bv;
                    if (train)
                        argmax_[static_cast<std::size_t>(p) * ho * wo + static_cast<std::size_t>(yo) * wo + xo] =
                            static_cast<std::size_t>(p) * h * w + best;
                }
        }
        xshape_ = x.shape;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        nn_detail::require(argmax_.size() == dy.numel(), "maxpool2d: backward without cached forward");
        Tensor<T> dx(xshape_);
        for (std::size_t i = 0; i < dy.numel(); ++i) dx.data[argmax_[i]] += dy.data[i];
        return dx;
    }

  private:
    std::vector<std::size_t> argmax_;
    std::vector<int> xshape_;
};

template <typename T>
class MaxPool1d : public Layer<T> {
  public:
    std::vector<int> out_shape(const std::vector<int>& in) const override {
        nn_detail::require(in.size() == 3 && in[2] % 2 == 0, "maxpool1d: needs even length, got " + shape_str(in));
        return {in[0], in[1], in[2] / 2};
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) override {
        auto os = out_shape(x.shape);
        const int rows = x.dim(0) * x.dim(1), l = x.dim(2), lo = os[2];
        Tensor<T> y(os);
        if (train) argmax_.assign(y.numel(), 0);
        for (int r = 0; r < rows; ++r) {
            const T* xr = &x.data[static_cast<std::size_t>(r) * l];
            T* yr = &y.data[static_cast<std::size_t>(r) * lo];
            for (int o = 0; o < lo; ++o) {
                std::size_t best = static_cast<std::size_t>(2 * o);
                if (xr[2 * o + 1] > xr[best]) best = static_cast<std::size_t>(2 * o + 1);
                yr[o] = xr[best];
                if (train) argmax_[static_cast<std::size_t>(r) * lo + o] = static_cast<std::size_t>(r) * l + best;
            }
        }
        xshape_ = x.shape;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        nn_detail::require(argmax_.size() == dy.numel(), "maxpool1d: backward without cached forward");
        Tensor<T> dx(xshape_);
        for (std::size_t i = 0; i < dy.numel(); ++i) dx.data[argmax_[i]] += dy.data[i];
        return dx;
    }

  private:
    std::vector<std::size_t> argmax_;
    std::vector<int> xshape_;
};

template <typename T>
class Linear : public Layer<T> {
  public:
    Linear(int fin, int fout, std::mt19937_64& rng, bool zero_init = false) : fin_(fin), fout_(fout) {
        w_ = Tensor<T>({fout, fin});
        b_ = Tensor<T>({fout});
        if (!zero_init) nn_detail::kaiming_uniform(w_, static_cast<std::size_t>(fin), rng);
    }

    std::vector<int> out_shape(const std::vector<int>& in) const override {
        nn_detail::require(in.size() == 2 && in[1] == fin_, "linear: bad input shape " + shape_str(in));
        return {in[0], fout_};
    }

    std::int64_t macs(const std::vector<int>& in) const override {
        return static_cast<std::int64_t>(in[0]) * fin_ * fout_;
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) override {
        auto os = out_shape(x.shape);
        const int n = x.dim(0);
        Tensor<T> y(os);
        for (int ni = 0; ni < n; ++ni)
            for (int o = 0; o < fout_; ++o) {
                T acc = b_[o];
                const T* xr = &x.data[static_cast<std::size_t>(ni) * fin_];
                const T* wr = &w_.data[static_cast<std::size_t>(o) * fin_];
                for (int i = 0; i < fin_; ++i) acc += wr[i] * xr[i];
                y.data[static_cast<std::size_t>(ni) * fout_ + o] = acc;
            }
        if (train) xcache_ = x;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        nn_detail::require(!xcache_.shape.empty(), "linear: backward without cached forward");
        const int n = xcache_.dim(0);
        w_.ensure_grad();
        b_.ensure_grad();
        Tensor<T> dx(xcache_.shape);
        for (int ni = 0; ni < n; ++ni) {
            const T* xr = &xcache_.data[static_cast<std::size_t>(ni) * fin_];
            const T* dyr = &dy.data[static_cast<std::size_t>(ni) * fout_];
            T* dxr = &dx.data[static_cast<std::size_t>(ni) * fin_];
            for (int o = 0; o < fout_; ++o) {
                const T g = dyr[o];
                b_.grad[static_cast<std::size_t>(o)] += g;
                T* wg = &w_.grad[static_cast<std::size_t>(o) * fin_];
                const T* wr = &w_.data[static_cast<std::size_t>(o) * fin_];
                for (int i = 0; i < fin_; ++i) {
                    wg[i] += g * xr[i];
                    dxr[i] += g * wr[i];
                }
            }
        }
        return dx;
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
        out.push_back({prefix + ".w", &w_, true});
        out.push_back({prefix + ".b", &b_, true});
    }

  private:
    int fin_, fout_;
    Tensor<T> w_, b_;
    Tensor<T> xcache_;
};

template <typename T>
class GlobalAvgPool2d : public Layer<T> {
  public:
    std::vector<int> out_shape(const std::vector<int>& in) const override {
        nn_detail::require(in.size() == 4, "gap: bad input shape " + shape_str(in));
        return {in[0], in[1]};
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) override {
        auto os = out_shape(x.shape);
        const std::size_t spatial = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
        Tensor<T> y(os);
        for (int p = 0; p < x.dim(0) * x.dim(1); ++p) {
            T acc = T(0);
            const T* xp = &x.data[static_cast<std::size_t>(p) * spatial];
            for (std::size_t s = 0; s < spatial; ++s) acc += xp[s];
            y.data[static_cast<std::size_t>(p)] = acc / static_cast<T>(spatial);
        }
        if (train) xshape_ = x.shape;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        nn_detail::require(!xshape_.empty(), "gap: backward without cached forward");
        const std::size_t spatial = static_cast<std::size_t>(xshape_[2]) * xshape_[3];
        Tensor<T> dx(xshape_);
        for (std::size_t p = 0; p < dy.numel(); ++p) {
            const T g = dy.data[p] / static_cast<T>(spatial);
            T* dxp = &dx.data[p * spatial];
            for (std::size_t s = 0; s < spatial; ++s) dxp[s] = g;
        }
        return dx;
    }

  private:
    std::vector<int> xshape_;
};

template <typename T>
class Sequential : public Layer<T> {
  public:
    Sequential() = default;

    Sequential& add(const std::string& name, std::unique_ptr<Layer<T>> layer) {
        children_.emplace_back(name, std::move(layer));
        return *this;
    }

    Layer<T>& child(std::size_t i) { return *children_[i].second; }
    std::size_t size() const { return children_.size(); }

    std::vector<int> out_shape(const std::vector<int>& in) const override {
        std::vector<int> s = in;
        for (const auto& [name, l] : children_) s = l->out_shape(s);
        return s;
    }

    std::int64_t macs(const std::vector<int>& in) const override {
        std::vector<int> s = in;
        std::int64_t total = 0;
        for (const auto& [name, l] : children_) {
            total += l->macs(s);
            s = l->out_shape(s);
        }
        return total;
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) override {
        Tensor<T> h = x;
        for (auto& [name, l] : children_) h = l->forward(h, train);
        return h;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> g = dy;
        for (auto it = children_.rbegin(); it != children_.rend(); ++it) g = it->second->backward(g);
        return g;
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
        for (auto& [name, l] : children_) l->collect(prefix.empty() ? name : prefix + "." + name, out);
    }

  private:
    std::vector<std::pair<std::string, std::unique_ptr<Layer<T>>>> children_;
};

// conv + batch-norm + ReLU.
template <typename T>
std::unique_ptr<Sequential<T>> basic_block2d(int cin, int cout, int k, std::mt19937_64& rng) {
    auto s = std::make_unique<Sequential<T>>();
    s->add("conv", std::make_unique<Conv2d<T>>(cin, cout, k, rng));
    s->add("bn", std::make_unique<BatchNorm<T>>(cout));
    s->add("relu", std::make_unique<ReLU<T>>());
    return s;
}

template <typename T>
std::unique_ptr<Sequential<T>> basic_block1d(int cin, int cout, int k, std::mt19937_64& rng) {
    auto s = std::make_unique<Sequential<T>>();
    s->add("conv", std::make_unique<Conv1d<T>>(cin, cout, k, rng));
    s->add("bn", std::make_unique<BatchNorm<T>>(cout));
    s->add("relu", std::make_unique<ReLU<T>>());
    return s;
}

// Two basic blocks plus identity skip: y = b2(b1(x)) + x. Channel count must
// be preserved for the skip to be an identity.
template <typename T>
class ResidualBlock : public Layer<T> {
  public:
    ResidualBlock(int channels, int k, std::mt19937_64& rng, bool one_dim = false) {
        if (one_dim) {
            b1_ = basic_block1d<T>(channels, channels, k, rng);
            b2_ = basic_block1d<T>(channels, channels, k, rng);
        } else {
            b1_ = basic_block2d<T>(channels, channels, k, rng);
            b2_ = basic_block2d<T>(channels, channels, k, rng);
        }
    }

    std::vector<int> out_shape(const std::vector<int>& in) const override {
        return b2_->out_shape(b1_->out_shape(in));
    }

    std::int64_t macs(const std::vector<int>& in) const override {
        return b1_->macs(in) + b2_->macs(b1_->out_shape(in));
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) override {
        Tensor<T> y = b2_->forward(b1_->forward(x, train), train);
        nn_detail::require(y.shape == x.shape, "residual block: branch changed shape");
        for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] += x.data[i];
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> dx = b1_->backward(b2_->backward(dy));
        for (std::size_t i = 0; i < dx.numel(); ++i) dx.data[i] += dy.data[i];
        return dx;
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
        b1_->collect(prefix + ".b1", out);
        b2_->collect(prefix + ".b2", out);
    }

  private:
    std::unique_ptr<Sequential<T>> b1_, b2_;
};

}  // namespace ovx
