#pragma once

#include <cmath>
#include <vector>

#include "errors.hpp"
#include "nn.hpp"

namespace pointtc {

struct AdamOptions {
    double lr = 1e-3;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with decoupled weight decay:
///   w <- w - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * w)
class Adam {
public:
    Adam(ParameterSet& params, AdamOptions options) : params_(&params), opt_(options) {
        if (!(opt_.lr > 0.0)) throw ConfigError("adam: learning rate must be positive");
        for (const auto& p : params.all()) {
            m_.emplace_back(p.tensor.numel(), 0.0);
            v_.emplace_back(p.tensor.numel(), 0.0);
        }
    }

    void set_lr(double lr) {
        if (!(lr > 0.0)) throw ConfigError("adam: learning rate must be positive");
        opt_.lr = lr;
    }
    double lr() const noexcept { return opt_.lr; }
    long steps() const noexcept { return t_; }

    /// Applies one update using the gradients currently held by the parameters.
    /// Parameters without a populated gradient are treated as having zero gradient.
    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
        auto& all = params_->all();
        for (std::size_t k = 0; k < all.size(); ++k) {
            if (!all[k].trainable) continue;
            Tensor& t = all[k].tensor;
            auto w = t.mutable_values();
            const auto g = t.grad();
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double gi = g.empty() ? 0.0 : g[i];
                m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * gi;
                v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * gi * gi;
                const double m_hat = m[i] / bc1;
                const double v_hat = v[i] / bc2;
                w[i] -= opt_.lr * (m_hat / (std::sqrt(v_hat) + opt_.eps) + opt_.weight_decay * w[i]);
            }
        }
    }

private:
    ParameterSet* params_;
    AdamOptions opt_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

/// Halves the base rate every `period` epochs (period 0 disables decay).
inline double step_decay_lr(double base_lr, std::size_t epoch, std::size_t period) {
    if (period == 0) return base_lr;
    return base_lr * std::pow(0.5, static_cast<double>(epoch / period));
}

}  // namespace pointtc
