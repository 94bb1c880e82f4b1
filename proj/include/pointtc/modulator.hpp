#pragma once

#include <cmath>
#include <limits>
#include <tuple>
#include <utility>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "nn.hpp"
#include "random.hpp"
#include "tensor.hpp"

namespace pointtc {

// ---------------------------------------------------------------------------
// Codebook
// ---------------------------------------------------------------------------

/// Per-axis levels of a square M-QAM grid, ascending, symmetric about zero
/// and scaled so the mean energy of the M two-dimensional points is 1.
struct Codebook {
    std::size_t order = 0;
    std::vector<double> levels;

    std::size_t levels_per_axis() const noexcept { return levels.size(); }
    double spacing() const { return levels.size() > 1 ? levels[1] - levels[0] : 0.0; }

    /// Index of the nearest level; ties resolve to the lower level.
    std::size_t nearest_index(double z) const {
        std::size_t best = 0;
        double best_d = std::abs(levels[0] - z);
        for (std::size_t k = 1; k < levels.size(); ++k) {
            const double d = std::abs(levels[k] - z);
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        return best;
    }

    bool contains(double v) const {
        for (double c : levels)
            if (c == v) return true;
        return false;
    }

    /// Levels as an [L, 1] column, for inner products against probability rows.
    Tensor column() const { return Tensor::from({levels.size(), 1}, levels); }
};

inline Codebook make_codebook(std::size_t order) {
    if (order != 4 && order != 16 && order != 64 && order != 256) {
        throw ArgumentError("make_codebook: M must be a square QAM order in {4, 16, 64, 256}, got " +
                            std::to_string(order));
    }
    const auto per_axis = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(order))));
    // Mean energy of the unscaled {+-1, +-3, ...}^2 grid is 2 (M - 1) / 3.
    const double unit = std::sqrt(3.0 / (2.0 * (static_cast<double>(order) - 1.0)));
    Codebook cb;
    cb.order = order;
    for (std::size_t k = 0; k < per_axis; ++k) {
        cb.levels.push_back((2.0 * static_cast<double>(k) - static_cast<double>(per_axis - 1)) * unit);
    }
    return cb;
}

// ---------------------------------------------------------------------------
// Relaxed position and quantisers
// ---------------------------------------------------------------------------

/// Gumbel-softmax over the levels of one axis: softmax((y + tau) / T) per row.
/// `logits` and `noise` are [n, L]; pass zero noise for deterministic evaluation.
inline Tensor gumbel_soft_probs(const Tensor& logits, double temperature, const Tensor& noise) {
    if (!(temperature > 0.0)) throw DomainError("gumbel_soft_probs: temperature must be positive");
    return softmax(add(logits, noise), logits.rank() - 1, temperature);
}

/// Inner product of each probability row with the codebook: [n, L] -> [n, 1].
inline Tensor initial_position(const Tensor& probs, const Codebook& cb) {
    if (probs.dim(probs.rank() - 1) != cb.levels_per_axis()) {
        throw DimensionError("initial_position: probability width != codebook size");
    }
    return matmul(probs.rank() == 1 ? reshape(probs, {1, probs.numel()}) : probs, cb.column());
}

inline double hard_quantize(double z, const Codebook& cb) { return cb.levels[cb.nearest_index(z)]; }

namespace detail {

// Softmax(-|c_k - z| / T) weights; returns the weighted level and its
// derivative with respect to z.
inline std::pair<double, double> soft_quantize_with_slope(double z, const Codebook& cb, double temperature) {
    const auto& c = cb.levels;
    double lo = std::numeric_limits<double>::infinity();
    for (double ck : c) lo = std::min(lo, std::abs(ck - z));
    double norm = 0.0, out = 0.0, mean_a = 0.0, weighted_ca = 0.0;
    std::vector<double> w(c.size());
    for (std::size_t k = 0; k < c.size(); ++k) {
        w[k] = std::exp(-(std::abs(c[k] - z) - lo) / temperature);
        norm += w[k];
    }
    for (std::size_t k = 0; k < c.size(); ++k) {
        w[k] /= norm;
        const double diff = c[k] - z;
        const double a = (diff > 0.0 ? 1.0 : diff < 0.0 ? -1.0 : 0.0) / temperature;  // d(-|c_k - z|/T)/dz
        out += w[k] * c[k];
        mean_a += w[k] * a;
        weighted_ca += w[k] * c[k] * a;
    }
    return {out, weighted_ca - out * mean_a};
}

}  // namespace detail

/// Distance-softmax average of the levels: sum_k softmax_k(-|c_k - z| / T) c_k.
inline double soft_quantize(double z, const Codebook& cb, double temperature) {
    if (!(temperature > 0.0)) throw DomainError("soft_quantize: temperature must be positive");
    return detail::soft_quantize_with_slope(z, cb, temperature).first;
}

/// Elementwise differentiable soft quantisation of a tensor of positions.
inline Tensor soft_quantize(const Tensor& z, const Codebook& cb, double temperature) {
    if (!(temperature > 0.0)) throw DomainError("soft_quantize: temperature must be positive");
    std::vector<double> out(z.numel()), slope(z.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::tie(out[i], slope[i]) = detail::soft_quantize_with_slope(z[i], cb, temperature);
    }
    auto* pz = z.node().get();
    return make_result(z.shape(), std::move(out), {z}, [pz, slope = std::move(slope)](detail::Node& self) {
        auto& g = pz->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * slope[i];
    });
}

// ---------------------------------------------------------------------------
// Modulation
// ---------------------------------------------------------------------------

enum class Estimator {
    GumbelSoftQuant,  // forward: hard grid point; backward: soft quantisation
    StraightThrough,  // backward: identity on the initial position
    UniformNoise,     // backward: identity on position + U(-spacing/2, spacing/2)
};

inline Estimator parse_estimator(std::string_view s) {
    if (s == "gumbel-softq" || s == "gumbel+softq") return Estimator::GumbelSoftQuant;
    if (s == "ste") return Estimator::StraightThrough;
    if (s == "uniform-noise") return Estimator::UniformNoise;
    throw ArgumentError("unknown estimator '" + std::string(s) + "'");
}

inline std::string_view to_string(Estimator e) {
    switch (e) {
        case Estimator::GumbelSoftQuant: return "gumbel-softq";
        case Estimator::StraightThrough: return "ste";
        case Estimator::UniformNoise: return "uniform-noise";
    }
    return "?";
}

struct ModulatorConfig {
    double temperature = 1.5;
    bool gumbel_noise = true;
    Estimator estimator = Estimator::GumbelSoftQuant;
    // Emit the relaxed surrogate as the forward value too. Only used to check
    // gradients of the soft path; transmissions never use it.
    bool relaxed_forward = false;
};

/// Complex symbols stored as [rows, 2] (in-phase, quadrature).
///
/// Only the leading `count` rows are transmitted; trailing rows are the
/// receiver-side zero padding (and carry exact zeros in the forward pass).
struct SymbolStream {
    Tensor symbols;
    std::size_t count = 0;
    double scale = 1.0;  // last power-normalisation factor applied

    std::size_t rows() const { return symbols.dim(0); }
    double in_phase(std::size_t i) const { return symbols.at(i, 0); }
    double quadrature(std::size_t i) const { return symbols.at(i, 1); }

    /// sum |z|^2 over transmitted rows, divided by the transmitted count.
    double mean_power() const {
        double s = 0.0;
        for (std::size_t i = 0; i < count; ++i) s += in_phase(i) * in_phase(i) + quadrature(i) * quadrature(i);
        return count == 0 ? 0.0 : s / static_cast<double>(count);
    }
};

namespace detail {

inline Tensor modulate_axis(const Tensor& logits, const Tensor& noise, const Codebook& cb, const ModulatorConfig& cfg,
                            RandomSource& rng) {
    const Tensor probs = gumbel_soft_probs(logits, cfg.temperature, noise);
    const Tensor position = initial_position(probs, cb);  // [n, 1]

    Tensor surrogate;
    switch (cfg.estimator) {
        case Estimator::GumbelSoftQuant:
            surrogate = soft_quantize(position, cb, cfg.temperature);
            break;
        case Estimator::StraightThrough:
            surrogate = position;
            break;
        case Estimator::UniformNoise: {
            const double half = 0.5 * cb.spacing();
            std::vector<double> u(position.numel());
            for (auto& x : u) x = rng.uniform(-half, half);
            surrogate = add(position, Tensor::from(position.shape(), std::move(u)));
            break;
        }
    }
    if (cfg.relaxed_forward) return surrogate;

    std::vector<double> hard(position.numel());
    for (std::size_t i = 0; i < hard.size(); ++i) hard[i] = hard_quantize(position[i], cb);
    return straight_through(std::move(hard), surrogate);
}

}  // namespace detail

/// Maps logit rows [n, 2 sqrt(M)] to constellation points. Each half of a row
/// goes through Gumbel-softmax, the codebook inner product and nearest-level
/// quantisation; the forward value is the grid point exactly, the gradient is
/// that of the estimator's surrogate.
inline SymbolStream modulate(const Tensor& logits, const Codebook& cb, const ModulatorConfig& cfg,
                             RandomSource& rng) {
    const std::size_t l = cb.levels_per_axis();
    if (logits.rank() != 2 || logits.dim(1) != 2 * l) {
        throw ContractError("modulate: logits " + shape_string(logits.shape()) + " need width " +
                            std::to_string(2 * l));
    }
    const std::size_t n = logits.dim(0);
    const Tensor noise = gumbel_noise(rng, {n, 2 * l}, cfg.gumbel_noise);
    const Tensor i_axis = detail::modulate_axis(slice_cols(logits, 0, l), slice_cols(noise, 0, l), cb, cfg, rng);
    const Tensor q_axis = detail::modulate_axis(slice_cols(logits, l, 2 * l), slice_cols(noise, l, 2 * l), cb, cfg, rng);
    return {concat_cols({i_axis, q_axis}), n, 1.0};
}

/// Scales the stream so that (sum of |z|^2 over all rows) / count == target.
/// Padding rows hold zeros and do not contribute. Differentiable, including
/// through the scale factor.
inline SymbolStream normalize_power(const SymbolStream& stream, double target = 1.0) {
    if (stream.count == 0 || stream.rows() == 0) throw ContractError("normalize_power: empty stream");
    const Tensor& z = stream.symbols;
    double energy = 0.0;
    for (double v : z.values()) energy += v * v;
    if (energy == 0.0) throw ContractError("normalize_power: all-zero stream has no defined scale");
    const double s = std::sqrt(target * static_cast<double>(stream.count) / energy);

    std::vector<double> out(z.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * z[i];
    auto* pz = z.node().get();
    Tensor scaled = make_result(z.shape(), std::move(out), {z}, [pz, s, energy](detail::Node& self) {
        // d(s z_i)/dz_j = s delta_ij - s z_i z_j / E
        double proj = 0.0;
        for (std::size_t i = 0; i < self.grad.size(); ++i) proj += self.grad[i] * pz->value[i];
        auto& g = pz->grad_buffer();
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += s * self.grad[j] - s * pz->value[j] * proj / energy;
    });
    return {scaled, stream.count, s};
}

/// One scale for all streams together (every cloud in a training iteration).
inline std::vector<SymbolStream> normalize_power_jointly(const std::vector<SymbolStream>& streams,
                                                         double target = 1.0) {
    std::vector<Tensor> parts;
    std::size_t count = 0;
    for (const auto& s : streams) {
        parts.push_back(s.symbols);
        count += s.count;
    }
    const SymbolStream joint = normalize_power({concat_rows(parts), count, 1.0}, target);
    std::vector<SymbolStream> out;
    std::size_t row = 0;
    for (const auto& s : streams) {
        out.push_back({slice_rows(joint.symbols, row, row + s.rows()), s.count, joint.scale});
        row += s.rows();
    }
    return out;
}

}  // namespace pointtc
