#pragma once

#include <span>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "nn.hpp"
#include "tensor.hpp"

namespace pointtc {

/// Point tokens: one embedding row per centroid.
struct TokenSet {
    Tensor embeddings;                  // [N', C']
    std::vector<Vec3> centroids;        // N' coordinates
    std::vector<std::size_t> parent_indices;  // centroid positions in the parent set

    std::size_t size() const noexcept { return centroids.size(); }
    std::size_t width() const { return embeddings.dim(1); }
};

struct SetAbstractionConfig {
    std::size_t samples = 64;
    double radius = 0.2;
    std::size_t k = 16;
    std::vector<std::size_t> widths{32, 32};
    FpsStart start = FpsStart::fixed();

    void validate() const {
        if (samples < 1) throw ConfigError("set abstraction: sample count must be >= 1");
        if (widths.empty()) throw ConfigError("set abstraction: pointwise widths are empty");
    }
};

/// The shared pointwise network (a kernel-size-1 convolution is the same
/// affine map applied to every grouped row).
struct SetAbstractionParams {
    Mlp pointwise;

    static SetAbstractionParams create(ParameterSet& params, const std::string& prefix, std::size_t in_features,
                                       const SetAbstractionConfig& cfg, RandomSource& rng) {
        cfg.validate();
        return {Mlp::create(params, prefix + ".pointwise", in_features + 3, cfg.widths, Activation::Relu,
                            Activation::Relu, rng)};
    }
};

/// Sample (FPS), group (ball query), re-express neighbour coordinates in the
/// centroid's local frame, lift with the shared pointwise map and max-pool
/// over the K neighbours.
///
///   (N,3) -> (N',3) -> (N',K,C) -> (N',K,C+3) -> (N',K,C') -> (N',C')
///
/// `features` is [N, C] and may carry gradients; coordinates are constants.
inline TokenSet set_abstraction(std::span<const Vec3> coords, const Tensor& features,
                                const SetAbstractionConfig& cfg, const SetAbstractionParams& params,
                                RandomSource* source = nullptr) {
    cfg.validate();
    if (features.rank() != 2 || features.dim(0) != coords.size()) {
        throw DimensionError("set_abstraction: features " + shape_string(features.shape()) + " for " +
                             std::to_string(coords.size()) + " points");
    }
    const auto centroids = fps(coords, cfg.samples, cfg.start, source);
    const auto groups = ball_query(coords, centroids.coords, cfg.radius, cfg.k);

    std::vector<double> local(groups.indices.size() * 3);
    for (std::size_t r = 0; r < groups.relative.size(); ++r)
        for (int d = 0; d < 3; ++d) local[3 * r + d] = groups.relative[r][d];

    const Tensor grouped = concat_cols({gather_rows(features, groups.indices),
                                        Tensor::from({groups.indices.size(), 3}, std::move(local))});
    const Tensor lifted = params.pointwise(grouped);  // [N'K, C']
    const std::size_t width = lifted.dim(1);

    TokenSet out;
    out.embeddings = max_pool(reshape(lifted, {cfg.samples, cfg.k, width}), 1);
    out.centroids = centroids.coords;
    out.parent_indices = centroids.indices;
    return out;
}

/// Coordinates as an [N, 3] constant tensor.
inline Tensor coordinate_tensor(std::span<const Vec3> coords) {
    std::vector<double> v(coords.size() * 3);
    for (std::size_t i = 0; i < coords.size(); ++i)
        for (int d = 0; d < 3; ++d) v[3 * i + d] = coords[i][d];
    return Tensor::from({coords.size(), 3}, std::move(v));
}

/// First-stage tokenization: features are the coordinates themselves (C = 3).
inline TokenSet tokenize(const PointCloud& cloud, const SetAbstractionConfig& cfg,
                         const SetAbstractionParams& params, RandomSource* source = nullptr) {
    cloud.validate();
    return set_abstraction(cloud.points, coordinate_tensor(cloud.points), cfg, params, source);
}

}  // namespace pointtc
