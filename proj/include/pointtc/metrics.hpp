#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "tensor.hpp"

namespace pointtc {

namespace detail {

// Nearest point of `to` for every point of `from`; ties to the lower index.
inline std::vector<std::size_t> nearest_indices(std::span<const Vec3> from, std::span<const Vec3> to) {
    std::vector<std::size_t> out(from.size());
    for (std::size_t i = 0; i < from.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < to.size(); ++j) {
            const double d = squared_distance(from[i], to[j]);
            if (d < best) {
                best = d;
                out[i] = j;
            }
        }
    }
    return out;
}

inline void require_nonempty(std::span<const Vec3> a, std::span<const Vec3> b, const char* what) {
    if (a.empty() || b.empty()) throw ArgumentError(std::string(what) + ": empty point cloud");
}

}  // namespace detail

/// Mean squared nearest-neighbour distance from `from` to `to` (e1).
inline double directed_d1(std::span<const Vec3> from, std::span<const Vec3> to) {
    detail::require_nonempty(from, to, "d1");
    const auto nn = detail::nearest_indices(from, to);
    double s = 0.0;
    for (std::size_t i = 0; i < from.size(); ++i) s += squared_distance(from[i], to[nn[i]]);
    return s / static_cast<double>(from.size());
}

/// Point-to-plane term (e2): squared distance to the nearest target point
/// weighted by cos^2 of the angle between the displacement and that target's
/// normal.
inline double directed_d2(std::span<const Vec3> from, std::span<const Vec3> to, std::span<const Vec3> to_normals) {
    detail::require_nonempty(from, to, "d2");
    if (to_normals.size() != to.size()) throw ArgumentError("d2: target cloud lacks normals");
    const auto nn = detail::nearest_indices(from, to);
    double s = 0.0;
    for (std::size_t i = 0; i < from.size(); ++i) {
        const Vec3 d = from[i] - to[nn[i]];
        const Vec3& n = to_normals[nn[i]];
        const double nn2 = dot(n, n);
        if (nn2 > 0.0) s += dot(d, n) * dot(d, n) / nn2;
    }
    return s / static_cast<double>(from.size());
}

inline double chamfer(const PointCloud& a, const PointCloud& b) {
    return directed_d1(a.points, b.points) + directed_d1(b.points, a.points);
}

inline double d1(const PointCloud& a, const PointCloud& b) {
    return std::max(directed_d1(a.points, b.points), directed_d1(b.points, a.points));
}

inline double d2(const PointCloud& a, const PointCloud& b) {
    if (!a.has_normals() || !b.has_normals()) throw ArgumentError("d2: both clouds need normals");
    return std::max(directed_d2(a.points, b.points, b.normals), directed_d2(b.points, a.points, a.normals));
}

/// Peak coordinate magnitude of a cloud (the default PSNR peak).
inline double peak_value(const PointCloud& cloud) {
    double p = 0.0;
    for (const auto& x : cloud.points)
        for (double c : x) p = std::max(p, std::abs(c));
    return p;
}

/// 10 log10(3 P^2 / D); +infinity when D == 0.
inline double distortion_psnr(double distortion, double peak) {
    if (distortion == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(3.0 * peak * peak / distortion);
}

inline double d1_psnr(const PointCloud& ref, const PointCloud& rec, double peak) {
    return distortion_psnr(d1(ref, rec), peak);
}

inline double d2_psnr(const PointCloud& ref, const PointCloud& rec, double peak) {
    return distortion_psnr(d2(ref, rec), peak);
}

/// Differentiable Chamfer loss between a fixed reference and a reconstruction
/// tensor [m, 3]. Nearest-neighbour assignments are treated as constants.
inline Tensor chamfer_loss(std::span<const Vec3> reference, const Tensor& recon) {
    if (recon.rank() != 2 || recon.dim(1) != 3) throw DimensionError("chamfer_loss: reconstruction must be [m, 3]");
    std::vector<Vec3> rec(recon.dim(0));
    for (std::size_t i = 0; i < rec.size(); ++i) rec[i] = {recon.at(i, 0), recon.at(i, 1), recon.at(i, 2)};
    detail::require_nonempty(reference, rec, "chamfer");

    const auto fwd = detail::nearest_indices(reference, rec);  // reference -> recon
    const auto bwd = detail::nearest_indices(rec, reference);  // recon -> reference
    const double inv_ref = 1.0 / static_cast<double>(reference.size());
    const double inv_rec = 1.0 / static_cast<double>(rec.size());
    double value = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) value += inv_ref * squared_distance(reference[i], rec[fwd[i]]);
    for (std::size_t i = 0; i < rec.size(); ++i) value += inv_rec * squared_distance(rec[i], reference[bwd[i]]);

    auto* pr = recon.node().get();
    std::vector<Vec3> ref(reference.begin(), reference.end());
    return make_result({}, {value}, {recon},
                       [pr, ref = std::move(ref), rec = std::move(rec), fwd, bwd, inv_ref, inv_rec](detail::Node& self) {
                           auto& g = pr->grad_buffer();
                           const double up = self.grad[0];
                           for (std::size_t i = 0; i < ref.size(); ++i) {
                               const std::size_t j = fwd[i];
                               for (int d = 0; d < 3; ++d) g[3 * j + d] += up * inv_ref * 2.0 * (rec[j][d] - ref[i][d]);
                           }
                           for (std::size_t i = 0; i < rec.size(); ++i) {
                               const std::size_t j = bwd[i];
                               for (int d = 0; d < 3; ++d) g[3 * i + d] += up * inv_rec * 2.0 * (rec[i][d] - ref[j][d]);
                           }
                       });
}

// ---------------------------------------------------------------------------
// Rate term and combined objective
// ---------------------------------------------------------------------------

/// SendOverMod (N_send / N_mod) grows with the symbol count and therefore
/// penalises rate. ModOverSend (N_mod / N_send) is kept for comparison.
enum class RateOrientation { SendOverMod, ModOverSend };

inline RateOrientation parse_rate_orientation(std::string_view s) {
    if (s == "send-over-mod") return RateOrientation::SendOverMod;
    if (s == "mod-over-send") return RateOrientation::ModOverSend;
    throw ArgumentError("unknown rate orientation '" + std::string(s) + "'");
}

inline std::string_view to_string(RateOrientation o) {
    return o == RateOrientation::SendOverMod ? "send-over-mod" : "mod-over-send";
}

inline double rate_loss(double n_send, double n_mod, RateOrientation orientation = RateOrientation::SendOverMod) {
    if (!(n_send > 0.0) || !(n_mod > 0.0)) throw DomainError("rate_loss: symbol counts must be positive");
    return orientation == RateOrientation::SendOverMod ? n_send / n_mod : n_mod / n_send;
}

/// Differentiable form; `n_send` is a scalar tensor (e.g. RateDecision::send_count).
inline Tensor rate_loss(const Tensor& n_send, double n_mod, RateOrientation orientation = RateOrientation::SendOverMod) {
    return orientation == RateOrientation::SendOverMod ? scale(n_send, 1.0 / n_mod) : scale(reciprocal(n_send), n_mod);
}

inline double total_loss(double chamfer_value, double n_send, double n_mod, double lambda, bool rate_enabled,
                         RateOrientation orientation = RateOrientation::SendOverMod) {
    if (lambda < 0.0) throw DomainError("total_loss: lambda must be non-negative");
    if (!rate_enabled) return chamfer_value;
    return chamfer_value + lambda * rate_loss(n_send, n_mod, orientation);
}

struct MetricReport {
    double chamfer = 0.0;
    double d1 = 0.0;
    double d1_psnr = 0.0;
    double d2 = 0.0;
    double d2_psnr = 0.0;
    double peak = 0.0;
    double n_send = 0.0;
    double n_mod = 0.0;
};

/// Scores a reconstruction. Both clouds must already carry normals.
inline MetricReport score(const PointCloud& ref, const PointCloud& rec, double peak) {
    MetricReport r;
    r.chamfer = chamfer(ref, rec);
    r.d1 = d1(ref, rec);
    r.d2 = d2(ref, rec);
    r.peak = peak;
    r.d1_psnr = distortion_psnr(r.d1, peak);
    r.d2_psnr = distortion_psnr(r.d2, peak);
    return r;
}

}  // namespace pointtc
