#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "random.hpp"
#include "tensor.hpp"

namespace pointtc {

struct Parameter {
    std::string name;
    Tensor tensor;
    bool trainable = true;
};

/// Owns every learnable tensor of a model under a unique dotted name.
class ParameterSet {
public:
    /// Registers a leaf initialised uniformly in +-sqrt(1 / fan_in).
    Tensor create(const std::string& name, Shape shape, std::size_t fan_in, RandomSource& rng) {
        const double bound = std::sqrt(1.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
        std::vector<double> values(shape_numel(shape));
        for (auto& v : values) v = rng.uniform(-bound, bound);
        return add(name, Tensor::from(std::move(shape), std::move(values), true));
    }

    Tensor add(const std::string& name, Tensor tensor, bool trainable = true) {
        if (index_.contains(name)) throw ConfigError("duplicate parameter name: " + name);
        index_.emplace(name, params_.size());
        params_.push_back({name, std::move(tensor), trainable});
        return params_.back().tensor;
    }

    std::vector<Parameter>& all() noexcept { return params_; }
    const std::vector<Parameter>& all() const noexcept { return params_; }
    std::size_t size() const noexcept { return params_.size(); }

    const Parameter* find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &params_[it->second];
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.tensor.numel();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

private:
    std::vector<Parameter> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Affine map x * w + b with w stored as [in, out].
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return affine(x, w, b); }

struct Linear {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]

    static Linear create(ParameterSet& params, const std::string& prefix, std::size_t in, std::size_t out,
                         RandomSource& rng) {
        Linear l;
        l.weight = params.create(prefix + ".weight", {in, out}, in, rng);
        l.bias = params.create(prefix + ".bias", {out}, in, rng);
        return l;
    }

    std::size_t in_features() const { return weight.dim(0); }
    std::size_t out_features() const { return weight.dim(1); }

    Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

enum class Activation { None, Relu, Tanh };

inline Tensor activate(const Tensor& x, Activation act) {
    switch (act) {
        case Activation::Relu: return relu(x);
        case Activation::Tanh: return tanh(x);
        case Activation::None: break;
    }
    return x;
}

/// Stack of linear layers. Hidden layers use `hidden`; the last one `final`.
struct Mlp {
    std::vector<Linear> layers;
    Activation hidden = Activation::Relu;
    Activation final = Activation::None;

    static Mlp create(ParameterSet& params, const std::string& prefix, std::size_t in,
                      const std::vector<std::size_t>& widths, Activation hidden, Activation final,
                      RandomSource& rng) {
        if (widths.empty()) throw ConfigError("mlp '" + prefix + "': empty layer-width list");
        Mlp m;
        m.hidden = hidden;
        m.final = final;
        std::size_t width = in;
        for (std::size_t i = 0; i < widths.size(); ++i) {
            m.layers.push_back(Linear::create(params, prefix + "." + std::to_string(i), width, widths[i], rng));
            width = widths[i];
        }
        return m;
    }

    std::size_t out_features() const { return layers.back().out_features(); }

    Tensor operator()(const Tensor& x) const {
        if (layers.empty()) throw ConfigError("mlp: no layers");
        Tensor h = x;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            h = activate(layers[i](h), i + 1 == layers.size() ? final : hidden);
        }
        return h;
    }
};

/// Free-function form: run `x` through `net` (built from a layer-width list).
inline Tensor mlp(const Tensor& x, const Mlp& net) { return net(x); }

/// I.i.d. Gumbel(0, 1) samples -log(-log(u)), u uniform on (0, 1).
/// With `enabled == false` returns zeros and consumes no randomness.
inline Tensor gumbel_noise(RandomSource& source, Shape shape, bool enabled = true) {
    std::vector<double> values(shape_numel(shape), 0.0);
    if (enabled) {
        for (auto& v : values) v = source.gumbel();
    }
    return Tensor::from(std::move(shape), std::move(values));
}

}  // namespace pointtc
