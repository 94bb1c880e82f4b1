#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "channel.hpp"
#include "config.hpp"
#include "decoder.hpp"
#include "encoder.hpp"
#include "metrics.hpp"
#include "modulator.hpp"
#include "nn.hpp"
#include "rate_allocator.hpp"
#include "tokenizer.hpp"

namespace pointtc {

/// Per-call switches of the end-to-end forward pass.
struct ForwardOptions {
    double snr_db = 10.0;                  // channel SNR; +inf disables noise
    std::optional<double> adapter_snr_db;  // SNR fed to the adapter (defaults to snr_db)
    bool apply_channel = true;
    bool gumbel_noise = true;
    bool relaxed_forward = false;
    std::optional<Estimator> estimator;    // overrides the configured estimator
    bool joint_power = true;               // one power scale for the whole batch
    std::optional<ChannelKind> channel;    // overrides the configured channel
};

/// What one cloud went through.
struct Transmission {
    Tensor reconstruction;            // [N, 3]
    Tensor chamfer;                   // scalar
    SymbolStream grid_symbols;        // modulated symbols before power normalisation
    SymbolStream sent;                // normalised stream with the rate mask applied
    SymbolStream received;            // after channel and equalisation
    RateDecision rate;
    ChannelRealization channel;
};

struct ForwardResult {
    Tensor loss;          // scalar objective (mean Chamfer + lambda * mean rate term)
    double chamfer = 0.0; // mean Chamfer value over the batch
    double mean_n_send = 0.0;
    std::vector<Transmission> items;
};

class PointTcModel {
public:
    explicit PointTcModel(const ExperimentConfig& cfg) : cfg_(cfg), codebook_(make_codebook(cfg.qam_order)) {
        cfg_.validate();
        RandomSource init(cfg_.seed);

        sa1_.samples = cfg_.tokens;
        sa1_.radius = cfg_.radius1;
        sa1_.k = cfg_.group_k;
        sa1_.widths = {cfg_.token_dim, cfg_.token_dim};

        enc_.tokens = cfg_.tokens;
        enc_.token_dim = cfg_.token_dim;
        enc_.qam_order = cfg_.qam_order;
        enc_.n_main = cfg_.n_main();
        enc_.n_aux = cfg_.n_aux();
        enc_.attention_k = std::min(cfg_.attention_k, cfg_.coarse_tokens);
        enc_.head_widths = {cfg_.head_width, cfg_.head_width};
        enc_.adapter_hidden = cfg_.adapter_hidden;
        enc_.second_stage = {cfg_.coarse_tokens, cfg_.radius2, cfg_.group_k, {cfg_.token_dim, cfg_.token_dim},
                             FpsStart::fixed()};
        enc_.validate();

        dec_.n_mod = cfg_.n_mod;
        dec_.n_points = cfg_.n_points;
        dec_.feature_dim = cfg_.token_dim;
        dec_.attention_k = std::min(cfg_.attention_k, cfg_.n_points / 16);
        dec_.offset_range = cfg_.offset_range;
        dec_.validate();

        tokenizer_ = SetAbstractionParams::create(params_, "tokenizer", 3, sa1_, init);
        main_ = MainEncoderParams::create(params_, "encoder.main", enc_, init);
        if (enc_.n_aux > 0) aux_ = AuxiliaryEncoderParams::create(params_, "encoder.aux", enc_, init);
        if (cfg_.channel_adapter) {
            adapter_main_ = ChannelAdapterParams::create(params_, "adapter.main", enc_.logit_width(),
                                                         cfg_.adapter_hidden, init);
            if (enc_.n_aux > 0) {
                adapter_aux_ = ChannelAdapterParams::create(params_, "adapter.aux", enc_.logit_width(),
                                                            cfg_.adapter_hidden, init);
            }
        }
        if (cfg_.rate_allocator && enc_.n_aux > 0) {
            rate_ = RateAllocatorParams::create(params_, "rate", cfg_.n_mod, init);
        }
        demod_ = DemodulatorParams::create(params_, "decoder.demod", dec_, init);
        jscc_ = JsccDecoderParams::create(params_, "decoder.jscc", dec_, init);
        detok_ = DetokenizerParams::create(params_, "decoder.detok", dec_, init);
    }

    const ExperimentConfig& config() const noexcept { return cfg_; }
    const Codebook& codebook() const noexcept { return codebook_; }
    ParameterSet& parameters() noexcept { return params_; }
    const ParameterSet& parameters() const noexcept { return params_; }
    bool uses_rate_allocator() const noexcept { return !rate_.blocks.empty(); }

    /// Logit matrix [N_mod, 2 sqrt(M)] (main rows then auxiliary rows) for one cloud.
    Tensor logits(const PointCloud& cloud, double adapter_snr) const {
        if (cloud.size() != cfg_.n_points) {
            throw DimensionError("model expects " + std::to_string(cfg_.n_points) + " points, got " +
                                 std::to_string(cloud.size()));
        }
        const TokenSet tokens = tokenize(cloud, sa1_, tokenizer_);
        Tensor main = encode_main(tokens, main_, enc_);
        if (cfg_.channel_adapter) main = channel_adapt(main, adapter_snr, adapter_main_);
        if (enc_.n_aux == 0) return main;
        Tensor aux = encode_auxiliary(tokens, aux_, enc_);
        if (cfg_.channel_adapter) aux = channel_adapt(aux, adapter_snr, adapter_aux_);
        return concat_rows({main, aux});
    }

    /// Receiver: zero padding, demodulation, decoding and up-sampling.
    Tensor receive(const SymbolStream& received) const {
        const SymbolStream padded = zero_pad(received, cfg_.n_mod);
        const Tensor features = demodulate(padded, demod_, dec_);
        return detokenize(jscc_decode(features, jscc_, dec_), detok_, dec_.offset_range);
    }

    /// Full chain over a batch. Randomness (Gumbel noise, rate sampling,
    /// channel noise and fading) is drawn from `rng` in a fixed order.
    ForwardResult forward(std::span<const PointCloud> batch, const ForwardOptions& opt, RandomSource& rng) const {
        if (batch.empty()) throw ArgumentError("forward: empty batch");
        const double adapter_snr = opt.adapter_snr_db.value_or(opt.snr_db);
        if (cfg_.channel_adapter && !std::isfinite(adapter_snr)) {
            throw DomainError("forward: the channel adapter needs a finite SNR input");
        }
        ModulatorConfig mod;
        mod.temperature = cfg_.temperature;
        mod.gumbel_noise = opt.gumbel_noise;
        mod.estimator = opt.estimator.value_or(cfg_.estimator);
        mod.relaxed_forward = opt.relaxed_forward;

        ForwardResult out;
        out.items.resize(batch.size());
        std::vector<SymbolStream> masked(batch.size());
        for (std::size_t b = 0; b < batch.size(); ++b) {
            auto& item = out.items[b];
            const Tensor y = logits(batch[b], adapter_snr);
            item.grid_symbols = modulate(y, codebook_, mod, rng);
            if (uses_rate_allocator()) {
                item.rate = rate_allocate(y, enc_.n_main, enc_.n_aux, rate_, cfg_.temperature, opt.gumbel_noise, rng);
            } else {
                item.rate = rate_allocate(y, cfg_.n_mod, 0, rate_, cfg_.temperature, false, rng);
            }
            masked[b] = uses_rate_allocator() ? apply_rate_mask(item.grid_symbols, item.rate) : item.grid_symbols;
        }

        std::vector<SymbolStream> normalised;
        if (opt.joint_power) {
            normalised = normalize_power_jointly(masked);
        } else {
            for (const auto& s : masked) normalised.push_back(normalize_power(s));
        }

        std::vector<Tensor> chamfers, rates;
        double chamfer_sum = 0.0, send_sum = 0.0;
        for (std::size_t b = 0; b < batch.size(); ++b) {
            auto& item = out.items[b];
            item.sent = normalised[b];
            item.received = opt.apply_channel ? transmit(item.sent, opt.snr_db, opt.channel.value_or(cfg_.channel), rng, item.channel) : item.sent;
            item.reconstruction = receive(item.received);
            item.chamfer = chamfer_loss(batch[b].points, item.reconstruction);
            chamfers.push_back(item.chamfer);
            rates.push_back(rate_loss(item.rate.send_count, static_cast<double>(cfg_.n_mod), cfg_.rate_orientation));
            chamfer_sum += item.chamfer.item();
            send_sum += static_cast<double>(item.rate.n_send());
        }
        const double inv = 1.0 / static_cast<double>(batch.size());
        out.chamfer = chamfer_sum * inv;
        out.mean_n_send = send_sum * inv;
        out.loss = scale(sum(concat_rows(reshape_all(chamfers))), inv);
        if (uses_rate_allocator() && cfg_.lambda > 0.0) {
            out.loss = add(out.loss, scale(sum(concat_rows(reshape_all(rates))), cfg_.lambda * inv));
        }
        return out;
    }

private:
    static std::vector<Tensor> reshape_all(const std::vector<Tensor>& scalars) {
        std::vector<Tensor> rows;
        rows.reserve(scalars.size());
        for (const auto& s : scalars) rows.push_back(reshape(s, {1, 1}));
        return rows;
    }

    // The normalised transmit power is 1, so the noise power for a given SNR
    // is 10^(-snr/10) on AWGN and |h|^2 10^(-snr/10) on fading (the SNR is
    // defined on received power). Fading is followed by ZF equalisation with
    // the (possibly perturbed) channel estimate.
    SymbolStream transmit(const SymbolStream& sent, double snr, ChannelKind kind, RandomSource& rng,
                          ChannelRealization& real) const {
        const double p_noise = noise_power_for_snr(snr, 1.0);
        if (kind == ChannelKind::Awgn) {
            real = {ChannelKind::Awgn, {1.0, 0.0}, p_noise, {1.0, 0.0}};
            return transmit_awgn(sent, p_noise, rng);
        }
        real.kind = ChannelKind::Rayleigh;
        real.gain = draw_rayleigh_gain(rng);
        real.noise_power = p_noise * std::norm(real.gain);
        real.csi = perturb_csi(real.gain, cfg_.csi_noise, rng);
        const SymbolStream faded = transmit_faded(sent, real.gain, real.noise_power, rng);
        return zf_equalize(faded, real.csi);
    }

    ExperimentConfig cfg_;
    Codebook codebook_;
    SetAbstractionConfig sa1_;
    EncoderConfig enc_;
    DecoderConfig dec_;
    ParameterSet params_;

    SetAbstractionParams tokenizer_;
    MainEncoderParams main_;
    AuxiliaryEncoderParams aux_;
    ChannelAdapterParams adapter_main_, adapter_aux_;
    RateAllocatorParams rate_;
    DemodulatorParams demod_;
    JsccDecoderParams jscc_;
    DetokenizerParams detok_;
};

}  // namespace pointtc
