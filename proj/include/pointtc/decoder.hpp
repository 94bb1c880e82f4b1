#pragma once

#include <string>
#include <vector>

#include "encoder.hpp"
#include "modulator.hpp"
#include "nn.hpp"
#include "tensor.hpp"

namespace pointtc {

struct DecoderConfig {
    std::size_t n_mod = 40;
    std::size_t n_points = 256;    // N; the decoder emits N / 16 tokens
    std::size_t feature_dim = 32;  // N_demod
    std::size_t attention_k = 8;
    double offset_range = 0.1;     // r
    std::size_t upsample = 4;      // per-stage ratio
    std::size_t stages = 2;

    std::size_t tokens() const { return n_points / 16; }

    void validate() const {
        if (n_points % 16 != 0 || n_points == 0) throw ConfigError("decoder: N must be a positive multiple of 16");
        if (upsample != 4 || stages != 2) throw ConfigError("decoder: de-tokenizer is two x4 stages");
        if (!(offset_range > 0.0)) throw ConfigError("decoder: offset range must be positive");
    }
};

/// Appends complex zeros to restore N_mod rows. No mask is needed: the
/// transmitter only ever drops a tail.
inline SymbolStream zero_pad(const SymbolStream& received, std::size_t n_mod) {
    if (received.rows() > n_mod) {
        throw ContractError("zero_pad: " + std::to_string(received.rows()) + " symbols exceed N_mod " +
                            std::to_string(n_mod));
    }
    if (received.rows() == n_mod) return received;
    const Tensor pad = Tensor::zeros({n_mod - received.rows(), 2});
    return {concat_rows({received.symbols, pad}), received.count, received.scale};
}

// ---------------------------------------------------------------------------
// Demodulator
// ---------------------------------------------------------------------------

/// One transposed convolution per axis. The N_mod received values act as input
/// channels of a length-1 signal; with kernel = stride = N/16 the expansion is
/// non-overlapping and produces N_demod channels of length N/16.
struct DemodulatorParams {
    Linear in_phase, quadrature;

    static DemodulatorParams create(ParameterSet& params, const std::string& prefix, const DecoderConfig& cfg,
                                    RandomSource& rng) {
        const std::size_t out = cfg.tokens() * cfg.feature_dim;
        return {Linear::create(params, prefix + ".in_phase", cfg.n_mod, out, rng),
                Linear::create(params, prefix + ".quadrature", cfg.n_mod, out, rng)};
    }
};

/// Padded symbols [N_mod, 2] -> features [N/16, N_demod] (tokens as rows).
/// The two axis branches are summed.
inline Tensor demodulate(const SymbolStream& padded, const DemodulatorParams& params, const DecoderConfig& cfg) {
    if (padded.rows() != cfg.n_mod || padded.symbols.dim(1) != 2) {
        throw ConfigError("demodulate: expected [" + std::to_string(cfg.n_mod) + ", 2] symbols, got " +
                          shape_string(padded.symbols.shape()));
    }
    const Tensor i_row = reshape(slice_cols(padded.symbols, 0, 1), {1, cfg.n_mod});
    const Tensor q_row = reshape(slice_cols(padded.symbols, 1, 2), {1, cfg.n_mod});
    const Tensor merged = add(params.in_phase(i_row), params.quadrature(q_row));
    return reshape(merged, {cfg.tokens(), cfg.feature_dim});
}

// ---------------------------------------------------------------------------
// JSCC decoder
// ---------------------------------------------------------------------------

struct DecodedTokens {
    Tensor coords;    // [N/16, 3]
    Tensor features;  // [N/16, N_demod]
};

struct JsccDecoderParams {
    Linear coarse_head;
    PtBlockParams refine;
    Linear coord_head;

    static JsccDecoderParams create(ParameterSet& params, const std::string& prefix, const DecoderConfig& cfg,
                                    RandomSource& rng) {
        JsccDecoderParams d;
        d.coarse_head = Linear::create(params, prefix + ".coarse_head", cfg.feature_dim, 3, rng);
        d.refine = PtBlockParams::create(params, prefix + ".refine", cfg.feature_dim, rng);
        d.coord_head = Linear::create(params, prefix + ".coord_head", cfg.feature_dim, 3, rng);
        return d;
    }
};

inline std::vector<Vec3> to_points(const Tensor& coords) {
    std::vector<Vec3> pts(coords.dim(0));
    for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = {coords.at(i, 0), coords.at(i, 1), coords.at(i, 2)};
    return pts;
}

/// Coarse coordinates from the features, a Point Transformer refinement on
/// the kNN graph of those coordinates, then the final coordinate head.
inline DecodedTokens jscc_decode(const Tensor& features, const JsccDecoderParams& params, const DecoderConfig& cfg) {
    const Tensor coarse = params.coarse_head(features);
    const auto graph = token_neighbors(to_points(coarse), cfg.attention_k);
    const Tensor refined = pt_block(features, coarse, graph, params.refine);
    return {params.coord_head(refined), refined};
}

// ---------------------------------------------------------------------------
// De-tokenizer
// ---------------------------------------------------------------------------

struct UpsampleStageParams {
    std::vector<Mlp> offsets;   // Delta_k, tanh-ended
    std::vector<Mlp> features;  // Phi_k; empty on the last stage
};

struct DetokenizerParams {
    std::vector<UpsampleStageParams> stages;

    static DetokenizerParams create(ParameterSet& params, const std::string& prefix, const DecoderConfig& cfg,
                                    RandomSource& rng) {
        DetokenizerParams d;
        const std::size_t w = cfg.feature_dim;
        for (std::size_t s = 0; s < cfg.stages; ++s) {
            UpsampleStageParams stage;
            const bool last = s + 1 == cfg.stages;
            for (std::size_t k = 0; k < cfg.upsample; ++k) {
                const std::string p = prefix + ".stage" + std::to_string(s) + "." + std::to_string(k);
                stage.offsets.push_back(
                    Mlp::create(params, p + ".offset", w, {w, 3}, Activation::Relu, Activation::Tanh, rng));
                if (!last) {
                    stage.features.push_back(
                        Mlp::create(params, p + ".feature", w, {w}, Activation::Relu, Activation::Relu, rng));
                }
            }
            d.stages.push_back(std::move(stage));
        }
        return d;
    }
};

/// Each stage emits K = 4 offset copies of every point:
///   X^k = X + r * Delta_k(Y),  Y^k = Phi_k(Y)
/// The copies are stacked k-major, so N/16 tokens become N points.
inline Tensor detokenize(const DecodedTokens& tokens, const DetokenizerParams& params, double offset_range) {
    Tensor coords = tokens.coords;
    Tensor features = tokens.features;
    for (const auto& stage : params.stages) {
        std::vector<Tensor> next_coords, next_features;
        for (std::size_t k = 0; k < stage.offsets.size(); ++k) {
            next_coords.push_back(add(coords, scale(stage.offsets[k](features), offset_range)));
            if (!stage.features.empty()) next_features.push_back(stage.features[k](features));
        }
        coords = concat_rows(next_coords);
        if (!next_features.empty()) features = concat_rows(next_features);
    }
    return coords;
}

}  // namespace pointtc
