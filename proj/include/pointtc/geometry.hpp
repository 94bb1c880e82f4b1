#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "random.hpp"

namespace pointtc {

using Vec3 = std::array<double, 3>;

inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double squared_distance(const Vec3& a, const Vec3& b) {
    const Vec3 d = a - b;
    return dot(d, d);
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

/// Geometry-only point cloud. Normals and per-point features are optional;
/// when present they are indexed like `points`.
struct PointCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;
    std::vector<double> features;  // row-major N x feature_dim
    std::size_t feature_dim = 0;

    std::size_t size() const noexcept { return points.size(); }
    bool has_normals() const noexcept { return !normals.empty(); }

    void validate() const {
        if (points.empty()) throw ArgumentError("point cloud is empty");
        if (has_normals()) {
            if (normals.size() != points.size()) throw DimensionError("normal count differs from point count");
            for (const auto& n : normals) {
                if (std::abs(norm(n) - 1.0) > 1e-9) throw ContractError("normal is not unit length");
            }
        }
        if (feature_dim != 0 && features.size() != points.size() * feature_dim) {
            throw DimensionError("feature matrix does not match point count");
        }
    }
};

/// Uniform rescale into [0, 1]^3: the largest bounding-box extent maps to 1
/// and the box is centred on (0.5, 0.5, 0.5).
inline void normalize_to_unit_cube(PointCloud& cloud) {
    if (cloud.points.empty()) return;
    Vec3 lo = cloud.points.front(), hi = lo;
    for (const auto& p : cloud.points)
        for (int d = 0; d < 3; ++d) {
            lo[d] = std::min(lo[d], p[d]);
            hi[d] = std::max(hi[d], p[d]);
        }
    const double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
    const double s = extent > 0.0 ? 1.0 / extent : 1.0;
    for (auto& p : cloud.points)
        for (int d = 0; d < 3; ++d) p[d] = 0.5 + s * (p[d] - 0.5 * (lo[d] + hi[d]));
}

// ---------------------------------------------------------------------------
// Sampling and neighbourhoods
// ---------------------------------------------------------------------------

struct CentroidSet {
    std::vector<std::size_t> indices;
    std::vector<Vec3> coords;
    // Distance from each selected point to the set chosen before it
    // (infinity for the first). Non-increasing by construction.
    std::vector<double> selection_distances;

    std::size_t size() const noexcept { return indices.size(); }
};

struct FpsStart {
    enum class Mode { FixedIndex, Random } mode = Mode::FixedIndex;
    std::size_t index = 0;

    static FpsStart fixed(std::size_t i = 0) { return {Mode::FixedIndex, i}; }
    static FpsStart random() { return {Mode::Random, 0}; }
};

/// Greedy farthest point sampling. Each pick maximises the minimum Euclidean
/// distance to the points already chosen; ties go to the lower index.
inline CentroidSet fps(std::span<const Vec3> points, std::size_t count, FpsStart start = FpsStart::fixed(),
                       RandomSource* source = nullptr) {
    const std::size_t n = points.size();
    if (count < 1 || count > n) {
        throw ArgumentError("fps: count " + std::to_string(count) + " not in [1, " + std::to_string(n) + "]");
    }
    std::size_t first = start.index;
    if (start.mode == FpsStart::Mode::Random) {
        if (source == nullptr) throw ArgumentError("fps: random start needs a RandomSource");
        first = source->index(n);
    }
    if (first >= n) throw ArgumentError("fps: start index out of range");

    CentroidSet out;
    out.indices.reserve(count);
    std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
    std::vector<char> taken(n, 0);
    std::size_t current = first;
    double current_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t step = 0; step < count; ++step) {
        out.indices.push_back(current);
        out.coords.push_back(points[current]);
        out.selection_distances.push_back(std::sqrt(current_d2));
        taken[current] = 1;
        if (step + 1 == count) break;

        std::size_t best = n;
        double best_d2 = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            min_d2[i] = std::min(min_d2[i], squared_distance(points[i], points[current]));
            if (min_d2[i] > best_d2) {
                best_d2 = min_d2[i];
                best = i;
            }
        }
        current = best;
        current_d2 = best_d2;
    }
    return out;
}

/// Fixed-arity neighbour lists, one row of `k` indices per query.
struct NeighborTable {
    std::size_t k = 0;
    std::vector<std::size_t> indices;  // rows x k
    std::vector<Vec3> relative;        // neighbour minus query, rows x k

    std::size_t rows() const noexcept { return k == 0 ? 0 : indices.size() / k; }
    std::span<const std::size_t> row(std::size_t r) const { return {indices.data() + r * k, k}; }
};

/// Radius search with fixed output length K.
///
/// In-radius candidates are ordered by descending point index and the first K
/// are kept. Rows with fewer than K candidates are padded with the smallest
/// in-radius index.
inline NeighborTable ball_query(std::span<const Vec3> points, std::span<const Vec3> centroids, double radius,
                                std::size_t k) {
    if (!(radius > 0.0)) throw ArgumentError("ball_query: radius must be positive");
    if (k < 1) throw ArgumentError("ball_query: K must be at least 1");
    const double r2 = radius * radius;
    NeighborTable table;
    table.k = k;
    table.indices.reserve(centroids.size() * k);
    table.relative.reserve(centroids.size() * k);
    std::vector<std::size_t> found;
    for (const auto& c : centroids) {
        found.clear();
        for (std::size_t i = points.size(); i-- > 0;) {
            if (squared_distance(points[i], c) < r2) found.push_back(i);
        }
        if (found.empty()) throw ContractError("ball_query: centroid has no point within the radius");
        const std::size_t smallest = found.back();
        for (std::size_t j = 0; j < k; ++j) {
            const std::size_t idx = j < found.size() ? found[j] : smallest;
            table.indices.push_back(idx);
            table.relative.push_back(points[idx] - c);
        }
    }
    return table;
}

/// Exact k nearest neighbours by Euclidean distance, ties to the lower index.
/// Rows are ordered nearest first.
inline NeighborTable knn(std::span<const Vec3> queries, std::span<const Vec3> reference, std::size_t k) {
    if (k < 1 || k > reference.size()) {
        throw ArgumentError("knn: k=" + std::to_string(k) + " with " + std::to_string(reference.size()) +
                            " reference points");
    }
    NeighborTable table;
    table.k = k;
    table.indices.reserve(queries.size() * k);
    table.relative.reserve(queries.size() * k);
    std::vector<std::pair<double, std::size_t>> d(reference.size());
    for (const auto& q : queries) {
        for (std::size_t i = 0; i < reference.size(); ++i) d[i] = {squared_distance(q, reference[i]), i};
        std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
        for (std::size_t j = 0; j < k; ++j) {
            table.indices.push_back(d[j].second);
            table.relative.push_back(reference[d[j].second] - q);
        }
    }
    return table;
}

// ---------------------------------------------------------------------------
// Normals
// ---------------------------------------------------------------------------

struct NormalEstimate {
    PointCloud cloud;
    std::vector<char> degenerate;  // 1 where the neighbourhood had rank < 2

    bool any_degenerate() const {
        return std::any_of(degenerate.begin(), degenerate.end(), [](char c) { return c != 0; });
    }
};

inline constexpr std::size_t kDefaultNormalNeighbors = 16;

/// PCA normals: eigenvector of the smallest covariance eigenvalue over the k
/// nearest neighbours (the point itself included). Sign is arbitrary.
/// Degenerate neighbourhoods get (0, 0, 1) and are flagged.
inline NormalEstimate estimate_normals(const PointCloud& cloud, std::size_t k = kDefaultNormalNeighbors) {
    if (k < 3) throw ArgumentError("estimate_normals: k must be at least 3");
    cloud.validate();
    const std::size_t kk = std::min(k, cloud.size());
    const auto table = knn(cloud.points, cloud.points, kk);

    NormalEstimate out;
    out.cloud = cloud;
    out.cloud.normals.resize(cloud.size());
    out.degenerate.assign(cloud.size(), 0);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        Eigen::Vector3d mean = Eigen::Vector3d::Zero();
        for (auto j : table.row(i)) mean += Eigen::Vector3d(cloud.points[j][0], cloud.points[j][1], cloud.points[j][2]);
        mean /= static_cast<double>(kk);
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (auto j : table.row(i)) {
            const Eigen::Vector3d d = Eigen::Vector3d(cloud.points[j][0], cloud.points[j][1], cloud.points[j][2]) - mean;
            cov += d * d.transpose();
        }
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
        const auto& ev = solver.eigenvalues();  // ascending
        const bool rank_deficient = kk < 3 || ev[2] <= 0.0 || ev[1] <= 1e-10 * ev[2];
        if (rank_deficient) {
            out.cloud.normals[i] = {0.0, 0.0, 1.0};
            out.degenerate[i] = 1;
            continue;
        }
        Eigen::Vector3d n = solver.eigenvectors().col(0).normalized();
        out.cloud.normals[i] = {n[0], n[1], n[2]};
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic shapes
// ---------------------------------------------------------------------------

enum class ShapeKind { Sphere, CubeSurface, Torus, Plane };

inline ShapeKind parse_shape_kind(std::string_view name) {
    if (name == "sphere") return ShapeKind::Sphere;
    if (name == "cube-surface" || name == "cube") return ShapeKind::CubeSurface;
    if (name == "torus") return ShapeKind::Torus;
    if (name == "plane") return ShapeKind::Plane;
    throw ArgumentError("unknown shape kind '" + std::string(name) + "'");
}

inline std::string_view to_string(ShapeKind kind) {
    switch (kind) {
        case ShapeKind::Sphere: return "sphere";
        case ShapeKind::CubeSurface: return "cube-surface";
        case ShapeKind::Torus: return "torus";
        case ShapeKind::Plane: return "plane";
    }
    return "?";
}

inline constexpr ShapeKind kAllShapeKinds[] = {ShapeKind::Sphere, ShapeKind::CubeSurface, ShapeKind::Torus,
                                               ShapeKind::Plane};

/// n surface samples of a canonical shape inside the unit cube, centred on
/// (0.5, 0.5, 0.5) with largest extent 1. Sphere radius 0.5; torus radii
/// 0.35 / 0.15; plane at z = 0.5.
inline PointCloud synth_shape(ShapeKind kind, std::size_t n, RandomSource& source) {
    if (n < 8) throw ArgumentError("synth_shape: need at least 8 points");
    PointCloud cloud;
    cloud.points.reserve(n);
    constexpr double two_pi = 2.0 * std::numbers::pi;
    while (cloud.points.size() < n) {
        switch (kind) {
            case ShapeKind::Sphere: {
                Vec3 g{source.normal(), source.normal(), source.normal()};
                const double len = norm(g);
                if (len < 1e-12) continue;
                cloud.points.push_back({0.5 + 0.5 * g[0] / len, 0.5 + 0.5 * g[1] / len, 0.5 + 0.5 * g[2] / len});
                break;
            }
            case ShapeKind::CubeSurface: {
                const std::size_t face = source.index(6);
                const double u = source.uniform_open(), v = source.uniform_open();
                const double fixed = face % 2 == 0 ? 0.0 : 1.0;
                const std::size_t axis = face / 2;
                Vec3 p{};
                p[axis] = fixed;
                p[(axis + 1) % 3] = u;
                p[(axis + 2) % 3] = v;
                cloud.points.push_back(p);
                break;
            }
            case ShapeKind::Torus: {
                constexpr double major = 0.35, minor = 0.15;
                const double u = two_pi * source.uniform_open();
                const double v = two_pi * source.uniform_open();
                // Area element is proportional to (R + r cos v); accept accordingly.
                if (source.uniform_open() * (major + minor) > major + minor * std::cos(v)) continue;
                const double ring = major + minor * std::cos(v);
                cloud.points.push_back({0.5 + ring * std::cos(u), 0.5 + ring * std::sin(u), 0.5 + minor * std::sin(v)});
                break;
            }
            case ShapeKind::Plane:
                cloud.points.push_back({source.uniform_open(), source.uniform_open(), 0.5});
                break;
        }
    }
    return cloud;
}

}  // namespace pointtc
