#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "modulator.hpp"
#include "random.hpp"
#include "tensor.hpp"

namespace pointtc {

using complex = std::complex<double>;

enum class ChannelKind { Awgn, Rayleigh };

inline ChannelKind parse_channel_kind(std::string_view s) {
    if (s == "awgn") return ChannelKind::Awgn;
    if (s == "rayleigh") return ChannelKind::Rayleigh;
    throw ArgumentError("unknown channel '" + std::string(s) + "'");
}

inline std::string_view to_string(ChannelKind k) { return k == ChannelKind::Awgn ? "awgn" : "rayleigh"; }

struct ChannelRealization {
    ChannelKind kind = ChannelKind::Awgn;
    complex gain{1.0, 0.0};  // h (Rayleigh only)
    double noise_power = 0.0;
    complex csi{1.0, 0.0};   // receiver's estimate of h
};

/// 10 log10(P_signal / P_noise).
inline double snr_db(double signal_power, double noise_power) {
    if (!(signal_power > 0.0) || !(noise_power > 0.0)) throw DomainError("snr_db: powers must be positive");
    return 10.0 * std::log10(signal_power / noise_power);
}

/// Noise power that yields `snr` dB at the given signal power; +inf dB gives 0.
inline double noise_power_for_snr(double snr, double signal_power) {
    return signal_power / std::pow(10.0, snr / 10.0);
}

/// Circularly-symmetric complex Gaussian with total variance `variance`.
inline complex complex_gaussian(RandomSource& source, double variance) {
    const double sd = std::sqrt(variance / 2.0);
    const double re = source.normal(0.0, sd);
    const double im = source.normal(0.0, sd);
    return {re, im};
}

namespace detail {

// Right-multiplying a row (zI, zQ) by [[re, im], [-im, re]] yields the
// complex product (re + j im)(zI + j zQ).
inline Tensor complex_scale(const Tensor& symbols, complex factor) {
    return matmul(symbols, Tensor::from({2, 2}, {factor.real(), factor.imag(), -factor.imag(), factor.real()}));
}

inline Tensor add_noise(const SymbolStream& stream, double noise_power, RandomSource& source) {
    std::vector<double> n(stream.symbols.numel(), 0.0);
    if (noise_power > 0.0) {
        for (std::size_t i = 0; i < stream.count; ++i) {
            const complex w = complex_gaussian(source, noise_power);
            n[2 * i] = w.real();
            n[2 * i + 1] = w.imag();
        }
    }
    return add(stream.symbols, Tensor::from(stream.symbols.shape(), std::move(n)));
}

}  // namespace detail

/// Z_hat = Z + n on the transmitted rows, n ~ CN(0, P_noise).
inline SymbolStream transmit_awgn(const SymbolStream& stream, double noise_power, RandomSource& source) {
    if (noise_power < 0.0) throw DomainError("transmit_awgn: negative noise power");
    return {detail::add_noise(stream, noise_power, source), stream.count, stream.scale};
}

/// Z_hat = h Z + n with a given block-fading gain.
inline SymbolStream transmit_faded(const SymbolStream& stream, complex gain, double noise_power, RandomSource& source) {
    if (noise_power < 0.0) throw DomainError("transmit_rayleigh: negative noise power");
    const SymbolStream faded{detail::complex_scale(stream.symbols, gain), stream.count, stream.scale};
    return {detail::add_noise(faded, noise_power, source), stream.count, stream.scale};
}

inline complex draw_rayleigh_gain(RandomSource& source) { return complex_gaussian(source, 1.0); }

/// Draws h ~ CN(0, 1) (one gain for the whole stream) and transmits.
inline std::pair<SymbolStream, ChannelRealization> transmit_rayleigh(const SymbolStream& stream, double noise_power,
                                                                     RandomSource& source) {
    ChannelRealization r;
    r.kind = ChannelKind::Rayleigh;
    r.gain = draw_rayleigh_gain(source);
    r.csi = r.gain;
    r.noise_power = noise_power;
    return {transmit_faded(stream, r.gain, noise_power, source), r};
}

/// E||h Z||^2 / N_send for a stream before noise.
inline double received_signal_power(const SymbolStream& stream, complex gain) {
    return std::norm(gain) * stream.mean_power();
}

/// Z_eq = conj(csi) / |csi|^2 * Z_hat.
inline SymbolStream zf_equalize(const SymbolStream& received, complex csi) {
    const double mag2 = std::norm(csi);
    if (mag2 == 0.0) throw DomainError("zf_equalize: channel estimate is zero");
    return {detail::complex_scale(received.symbols, std::conj(csi) / mag2), received.count, received.scale};
}

/// h_hat = h + CN(0, noise_power).
inline complex perturb_csi(complex h, double noise_power, RandomSource& source) {
    if (noise_power < 0.0) throw DomainError("perturb_csi: negative noise power");
    if (noise_power == 0.0) return h;
    return h + complex_gaussian(source, noise_power);
}

}  // namespace pointtc
