#pragma once

#include <string>
#include <vector>

#include "modulator.hpp"
#include "nn.hpp"
#include "random.hpp"
#include "tensor.hpp"

namespace pointtc {

inline constexpr std::size_t kRateLevels = 5;

/// Auxiliary symbols kept at rate level `level` (1-based): ceil(level / 5 * n_aux).
inline std::size_t kept_auxiliary(std::size_t level, std::size_t n_aux) {
    return (level * n_aux + kRateLevels - 1) / kRateLevels;
}

/// Max-pool over logit positions followed by a progressive MLP whose blocks
/// each shrink the width to a quarter, down to kRateLevels logits.
struct RateAllocatorParams {
    std::vector<Linear> blocks;

    static RateAllocatorParams create(ParameterSet& params, const std::string& prefix, std::size_t n_mod,
                                      RandomSource& rng) {
        RateAllocatorParams r;
        std::size_t width = n_mod;
        do {
            const std::size_t next = std::max(kRateLevels, width / 4);
            r.blocks.push_back(Linear::create(params, prefix + ".block" + std::to_string(r.blocks.size()), width,
                                              next, rng));
            width = next;
        } while (width > kRateLevels);
        return r;
    }

    Tensor operator()(const Tensor& pooled_row) const {
        Tensor h = pooled_row;
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            h = blocks[i](h);
            if (i + 1 < blocks.size()) h = relu(h);
        }
        return h;
    }
};

struct RateDecision {
    std::size_t level = kRateLevels;     // 1..5
    std::vector<double> one_hot;         // kRateLevels entries
    std::vector<double> mask;            // thermal mask over auxiliary symbols
    std::size_t n_main = 0;
    std::size_t n_aux = 0;
    std::size_t kept = 0;

    // Per-row mask [n_main + n_aux, 1]: hard 0/1 forward, expected-keep
    // probability backward.
    Tensor row_mask;
    // Scalar: N_send forward, softmax-weighted expected N_send backward.
    Tensor send_count;

    std::size_t n_send() const noexcept { return n_main + kept; }
};

/// Picks a rate level from the full logit matrix (main rows then auxiliary
/// rows) and masks the tail of the auxiliary symbols. Main-branch symbols are
/// always kept. Selection is Gumbel-max; the backward pass sees its softmax.
inline RateDecision rate_allocate(const Tensor& logits, std::size_t n_main, std::size_t n_aux,
                                  const RateAllocatorParams& params, double temperature, bool noisy,
                                  RandomSource& rng) {
    if (logits.rank() != 2 || logits.dim(0) != n_main + n_aux) {
        throw DimensionError("rate_allocate: logits " + shape_string(logits.shape()) + " for " +
                             std::to_string(n_main + n_aux) + " symbols");
    }
    RateDecision d;
    d.n_main = n_main;
    d.n_aux = n_aux;
    d.one_hot.assign(kRateLevels, 0.0);
    if (n_aux == 0) {
        d.one_hot.back() = 1.0;
        d.row_mask = Tensor::full({n_main, 1}, 1.0);
        d.send_count = Tensor::scalar(static_cast<double>(n_main));
        return d;
    }

    const std::size_t n_mod = n_main + n_aux;
    const Tensor pooled = reshape(max_pool(logits, 1), {1, n_mod});
    const Tensor scores = add(params(pooled), gumbel_noise(rng, Shape{1, kRateLevels}, noisy));
    const Tensor soft = softmax(scores, 1, temperature);  // [1, 5]

    std::size_t arg = 0;
    for (std::size_t j = 1; j < kRateLevels; ++j)
        if (scores[j] > scores[arg]) arg = j;
    d.level = arg + 1;
    d.one_hot[arg] = 1.0;
    d.kept = kept_auxiliary(d.level, n_aux);
    d.mask.assign(n_aux, 0.0);
    for (std::size_t p = 0; p < d.kept; ++p) d.mask[p] = 1.0;

    // keep[l][p] = 1 when auxiliary position p survives at level l + 1.
    std::vector<double> keep(kRateLevels * n_aux, 0.0), counts(kRateLevels);
    for (std::size_t l = 0; l < kRateLevels; ++l) {
        counts[l] = static_cast<double>(kept_auxiliary(l + 1, n_aux));
        for (std::size_t p = 0; p < kept_auxiliary(l + 1, n_aux); ++p) keep[l * n_aux + p] = 1.0;
    }
    const Tensor soft_mask = reshape(matmul(soft, Tensor::from({kRateLevels, n_aux}, std::move(keep))), {n_aux, 1});
    d.row_mask = concat_rows({Tensor::full({n_main, 1}, 1.0), straight_through(d.mask, soft_mask)});

    const Tensor expected = add_scalar(reshape(matmul(soft, Tensor::from({kRateLevels, 1}, std::move(counts))), {}),
                                       static_cast<double>(n_main));
    d.send_count = straight_through({static_cast<double>(d.n_send())}, expected);
    return d;
}

/// Zeroes the masked rows and marks the kept prefix as the transmitted count.
inline SymbolStream apply_rate_mask(const SymbolStream& stream, const RateDecision& decision) {
    if (stream.rows() != decision.n_main + decision.n_aux) throw DimensionError("apply_rate_mask: row mismatch");
    return {mul_rows(stream.symbols, decision.row_mask), decision.n_send(), stream.scale};
}

}  // namespace pointtc
