// Copyright (C) 2026 Orthovox Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "orthovox/io.hpp"
#include "orthovox/layers.hpp"

namespace ovx {

// Adam with bias correction over a fixed parameter list. Non-trainable refs
// (batch-norm running buffers) are skipped. Moment buffers live here and are
// checkpointed alongside the step counter so training can resume exactly.
template <typename T>
class Adam {
  public:
    explicit Adam(std::vector<ParamRef<T>> params, T lr = T(1e-4), T beta1 = T(0.9), T beta2 = T(0.999),
                  T eps = T(1e-8))
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& p : params_) {
            m_.emplace_back(p.trainable ? p.tensor->numel() : 0, T(0));
            v_.emplace_back(p.trainable ? p.tensor->numel() : 0, T(0));
        }
    }

    void zero_grad() {
        for (auto& p : params_) {
            if (!p.trainable) continue;
            p.tensor->ensure_grad();
            p.tensor->zero_grad();
        }
    }

    void step() {
        ++t_;
        const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1_), static_cast<double>(t_)));
        const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2_), static_cast<double>(t_)));
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            auto& p = params_[pi];
            if (!p.trainable) continue;
            if (p.tensor->grad.size() != p.tensor->numel())
                throw std::runtime_error("missing gradient for parameter " + p.name);
            auto& m = m_[pi];
            auto& v = v_[pi];
            for (std::size_t i = 0; i < m.size(); ++i) {
                const T g = p.tensor->grad[i];
                if (!std::isfinite(static_cast<double>(g)))
                    throw std::runtime_error("non-finite gradient in parameter " + p.name);
                m[i] = beta1_ * m[i] + (T(1) - beta1_) * g;
                v[i] = beta2_ * v[i] + (T(1) - beta2_) * g * g;
                const T mhat = m[i] / bc1;
                const T vhat = v[i] / bc2;
                p.tensor->data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    std::int64_t step_count() const { return t_; }
    T learning_rate() const { return lr_; }

    void save_state(Checkpoint& cp, const std::string& prefix) const {
        Tensor<float> tc({1});
        tc.data[0] = static_cast<float>(t_);
        cp.emplace(prefix + ".t", std::move(tc));
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            if (!params_[pi].trainable) continue;
            Tensor<float> mt(params_[pi].tensor->shape), vt(params_[pi].tensor->shape);
            for (std::size_t i = 0; i < m_[pi].size(); ++i) {
                mt.data[i] = static_cast<float>(m_[pi][i]);
                vt.data[i] = static_cast<float>(v_[pi][i]);
            }
            cp.emplace(prefix + ".m." + params_[pi].name, std::move(mt));
            cp.emplace(prefix + ".v." + params_[pi].name, std::move(vt));
        }
    }

    void load_state(const Checkpoint& cp, const std::string& prefix) {
        auto tit = cp.find(prefix + ".t");
        if (tit == cp.end()) throw std::runtime_error("checkpoint missing optimizer state " + prefix + ".t");
        t_ = static_cast<std::int64_t>(tit->second.data.at(0));
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            if (!params_[pi].trainable) continue;
            auto mit = cp.find(prefix + ".m." + params_[pi].name);
            auto vit = cp.find(prefix + ".v." + params_[pi].name);
            if (mit == cp.end() || vit == cp.end())
                throw std::runtime_error("checkpoint missing moments for " + params_[pi].name);
            if (mit->second.numel() != m_[pi].size() || vit->second.numel() != v_[pi].size())
                throw std::runtime_error("optimizer moment size mismatch for " + params_[pi].name);
            for (std::size_t i = 0; i < m_[pi].size(); ++i) {
                m_[pi][i] = static_cast<T>(mit->second.data[i]);
                v_[pi][i] = static_cast<T>(vit->second.data[i]);
            }
        }
    }

  private:
    std::vector<ParamRef<T>> params_;
    T lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<std::vector<T>> m_, v_;
};

}  // namespace ovx
