#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "nn.hpp"
#include "tensor.hpp"
#include "tokenizer.hpp"

namespace pointtc {

// ---------------------------------------------------------------------------
// Vector attention
// ---------------------------------------------------------------------------

/// phi/psi/alpha project tokens to query/key/value; gamma maps the
/// query-key-position difference to per-channel scores; delta encodes the
/// coordinate difference x_i - x_j. gamma and delta are linear-relu-linear.
struct AttentionParams {
    Linear query, key, value;
    Mlp gamma, delta;

    static AttentionParams create(ParameterSet& params, const std::string& prefix, std::size_t width,
                                  RandomSource& rng) {
        AttentionParams a;
        a.query = Linear::create(params, prefix + ".query", width, width, rng);
        a.key = Linear::create(params, prefix + ".key", width, width, rng);
        a.value = Linear::create(params, prefix + ".value", width, width, rng);
        a.gamma = Mlp::create(params, prefix + ".gamma", width, {width, width}, Activation::Relu, Activation::None, rng);
        a.delta = Mlp::create(params, prefix + ".delta", 3, {width, width}, Activation::Relu, Activation::None, rng);
        return a;
    }
};

/// out_i = sum_j softmax_j( gamma(phi(f_i) - psi(f_j) + delta(x_i - x_j)) / sqrt(C) )
///                 (.) ( alpha(f_j) + delta(x_i - x_j) )
/// with the softmax taken per channel over the k neighbours of row i.
///
/// `features` is [n, C]; `coords` is [n, 3] and may carry gradients (the
/// decoder refines around predicted coordinates). Row i of `neighbors` lists
/// the k neighbour indices of token i.
inline Tensor vector_attention(const Tensor& features, const Tensor& coords, const NeighborTable& neighbors,
                               const AttentionParams& params) {
    const std::size_t n = features.dim(0), width = features.dim(1), k = neighbors.k;
    if (neighbors.rows() != n) throw DimensionError("vector_attention: neighbour table rows != token count");
    if (coords.rank() != 2 || coords.dim(0) != n || coords.dim(1) != 3) {
        throw DimensionError("vector_attention: coords must be [n, 3]");
    }
    if (params.gamma.out_features() != params.value.out_features()) {
        throw ContractError("vector_attention: gamma width " + std::to_string(params.gamma.out_features()) +
                            " != value width " + std::to_string(params.value.out_features()));
    }

    std::vector<std::size_t> self_rows(n * k);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) self_rows[i * k + j] = i;
    const auto& nbr = neighbors.indices;

    const Tensor q = params.query(features);
    const Tensor key = params.key(features);
    const Tensor v = params.value(features);
    const Tensor pos = params.delta(sub(gather_rows(coords, self_rows), gather_rows(coords, nbr)));

    const Tensor pre = add(sub(gather_rows(q, self_rows), gather_rows(key, nbr)), pos);
    const std::size_t out_w = params.value.out_features();
    const Tensor scores = scale(params.gamma(pre), 1.0 / std::sqrt(static_cast<double>(width)));
    const Tensor weights = softmax(reshape(scores, {n, k, out_w}), 1);
    const Tensor values = reshape(add(gather_rows(v, nbr), pos), {n, k, out_w});
    return sum_axis(mul(weights, values), 1);
}

struct PtBlockParams {
    Linear in, out;
    AttentionParams attention;

    static PtBlockParams create(ParameterSet& params, const std::string& prefix, std::size_t width,
                                RandomSource& rng) {
        PtBlockParams b;
        b.in = Linear::create(params, prefix + ".in", width, width, rng);
        b.attention = AttentionParams::create(params, prefix + ".attention", width, rng);
        b.out = Linear::create(params, prefix + ".out", width, width, rng);
        return b;
    }
};

/// linear -> vector attention -> linear, plus the block input as residual.
inline Tensor pt_block(const Tensor& features, const Tensor& coords, const NeighborTable& neighbors,
                       const PtBlockParams& params) {
    return add(features, params.out(vector_attention(params.in(features), coords, neighbors, params.attention)));
}

/// kNN graph over token coordinates, k clamped to the token count.
inline NeighborTable token_neighbors(std::span<const Vec3> coords, std::size_t k) {
    return knn(coords, coords, std::min(k, coords.size()));
}

// ---------------------------------------------------------------------------
// Parallel JSCC encoders
// ---------------------------------------------------------------------------

struct EncoderConfig {
    std::size_t tokens = 64;       // N' (input token count)
    std::size_t token_dim = 32;    // C'
    std::size_t qam_order = 16;    // M
    std::size_t n_main = 32;
    std::size_t n_aux = 8;
    std::size_t attention_k = 8;
    std::vector<std::size_t> head_widths{128, 128};  // 2*sqrt(M) is appended
    std::size_t adapter_hidden = 128;
    SetAbstractionConfig second_stage{16, 0.4, 16, {32, 32}, FpsStart::fixed()};

    std::size_t levels_per_axis() const { return static_cast<std::size_t>(std::lround(std::sqrt(double(qam_order)))); }
    std::size_t logit_width() const { return 2 * levels_per_axis(); }

    void validate() const {
        const std::size_t l = levels_per_axis();
        if (l * l != qam_order || (qam_order != 4 && qam_order != 16 && qam_order != 64 && qam_order != 256)) {
            throw ConfigError("QAM order must be one of 4, 16, 64, 256");
        }
        if (second_stage.samples > tokens) throw ConfigError("second set abstraction samples exceed token count");
        if (second_stage.widths.empty() || second_stage.widths.back() != token_dim) {
            throw ConfigError("second set abstraction must end at the token width");
        }
        if (n_main == 0) throw ConfigError("main branch needs at least one symbol");
    }
};

inline std::vector<std::size_t> with_logit_width(std::vector<std::size_t> widths, std::size_t logit_width) {
    widths.push_back(logit_width);
    return widths;
}

struct MainEncoderParams {
    PtBlockParams block1;
    SetAbstractionParams aggregate;
    PtBlockParams block2;
    Mlp head;
    Linear spread;  // flatten -> N_main * 2 sqrt(M)

    static MainEncoderParams create(ParameterSet& params, const std::string& prefix, const EncoderConfig& cfg,
                                    RandomSource& rng) {
        MainEncoderParams m;
        m.block1 = PtBlockParams::create(params, prefix + ".block1", cfg.token_dim, rng);
        m.aggregate = SetAbstractionParams::create(params, prefix + ".aggregate", cfg.token_dim, cfg.second_stage, rng);
        m.block2 = PtBlockParams::create(params, prefix + ".block2", cfg.token_dim, rng);
        m.head = Mlp::create(params, prefix + ".head", cfg.token_dim, with_logit_width(cfg.head_widths, cfg.logit_width()),
                             Activation::Relu, Activation::None, rng);
        const std::size_t flat = cfg.second_stage.samples * cfg.logit_width();
        m.spread = Linear::create(params, prefix + ".spread", flat, cfg.n_main * cfg.logit_width(), rng);
        return m;
    }
};

struct AuxiliaryEncoderParams {
    PtBlockParams block;
    Mlp head;
    Linear spread;

    static AuxiliaryEncoderParams create(ParameterSet& params, const std::string& prefix, const EncoderConfig& cfg,
                                         RandomSource& rng) {
        AuxiliaryEncoderParams a;
        a.block = PtBlockParams::create(params, prefix + ".block", cfg.token_dim, rng);
        a.head = Mlp::create(params, prefix + ".head", cfg.token_dim, with_logit_width(cfg.head_widths, cfg.logit_width()),
                             Activation::Relu, Activation::None, rng);
        a.spread = Linear::create(params, prefix + ".spread", cfg.tokens * cfg.logit_width(),
                                  std::max<std::size_t>(cfg.n_aux, 1) * cfg.logit_width(), rng);
        return a;
    }
};

// Flattening is row-major over (token, channel).
inline Tensor spread_to_symbols(const Tensor& per_token_logits, const Linear& spread, std::size_t rows,
                                std::size_t logit_width) {
    const Tensor flat = reshape(per_token_logits, {1, per_token_logits.numel()});
    return reshape(spread(flat), {rows, logit_width});
}

/// Main branch: PT block, second set abstraction (N' -> N''), PT block,
/// per-token MLP to 2 sqrt(M) logits, then flatten + linear to N_main rows.
inline Tensor encode_main(const TokenSet& tokens, const MainEncoderParams& params, const EncoderConfig& cfg) {
    if (tokens.width() != cfg.token_dim) throw DimensionError("encode_main: token width mismatch");
    if (tokens.size() != cfg.tokens) throw DimensionError("encode_main: token count mismatch");
    const Tensor coords = coordinate_tensor(tokens.centroids);
    const Tensor h1 = pt_block(tokens.embeddings, coords, token_neighbors(tokens.centroids, cfg.attention_k),
                               params.block1);
    const TokenSet coarse = set_abstraction(tokens.centroids, h1, cfg.second_stage, params.aggregate);
    const Tensor h2 = pt_block(coarse.embeddings, coordinate_tensor(coarse.centroids),
                               token_neighbors(coarse.centroids, cfg.attention_k), params.block2);
    return spread_to_symbols(params.head(h2), params.spread, cfg.n_main, cfg.logit_width());
}

/// Auxiliary branch: the main branch without the second aggregation stage.
inline Tensor encode_auxiliary(const TokenSet& tokens, const AuxiliaryEncoderParams& params,
                               const EncoderConfig& cfg) {
    if (tokens.width() != cfg.token_dim) throw DimensionError("encode_auxiliary: token width mismatch");
    if (tokens.size() != cfg.tokens) throw DimensionError("encode_auxiliary: token count mismatch");
    const Tensor coords = coordinate_tensor(tokens.centroids);
    const Tensor h = pt_block(tokens.embeddings, coords, token_neighbors(tokens.centroids, cfg.attention_k),
                              params.block);
    return spread_to_symbols(params.head(h), params.spread, cfg.n_aux, cfg.logit_width());
}

// ---------------------------------------------------------------------------
// Channel adapter
// ---------------------------------------------------------------------------

inline constexpr double kSnrFeatureScale = 10.0;

/// [2 sqrt(M) + 1] -> hidden -> [2 sqrt(M)]. The output replaces the logits.
struct ChannelAdapterParams {
    Mlp net;

    static ChannelAdapterParams create(ParameterSet& params, const std::string& prefix, std::size_t logit_width,
                                       std::size_t hidden, RandomSource& rng) {
        return {Mlp::create(params, prefix, logit_width + 1, {hidden, logit_width}, Activation::Relu,
                            Activation::None, rng)};
    }
};

/// Appends SNR_dB / 10 to every logit row and maps back to the logit width.
inline Tensor channel_adapt(const Tensor& logits, double snr_db, const ChannelAdapterParams& params) {
    const double feature = snr_db / kSnrFeatureScale;
    return params.net(concat_cols({logits, Tensor::full({logits.dim(0), 1}, feature)}));
}

}  // namespace pointtc
