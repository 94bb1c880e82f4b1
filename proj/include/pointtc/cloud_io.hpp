#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "endian.hpp"
#include "geometry.hpp"

namespace pointtc {

// ASCII PLY with a single vertex element: x y z [nx ny nz].
inline void write_ply(const PointCloud& cloud, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << "ply\nformat ascii 1.0\nelement vertex " << cloud.size() << '\n'
       << "property double x\nproperty double y\nproperty double z\n";
    if (cloud.has_normals()) os << "property double nx\nproperty double ny\nproperty double nz\n";
    os << "end_header\n" << std::setprecision(17);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto& p = cloud.points[i];
        os << p[0] << ' ' << p[1] << ' ' << p[2];
        if (cloud.has_normals()) {
            const auto& n = cloud.normals[i];
            os << ' ' << n[0] << ' ' << n[1] << ' ' << n[2];
        }
        os << '\n';
    }
}

inline PointCloud read_ply(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    std::string line;
    std::getline(is, line);
    if (line.rfind("ply", 0) != 0) throw std::runtime_error(path.string() + ": missing ply magic");

    std::size_t vertices = 0;
    std::vector<std::string> props;
    bool in_vertex = false, ascii = false;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "format") {
            std::string fmt;
            ls >> fmt;
            ascii = fmt == "ascii";
        } else if (word == "element") {
            std::string name;
            ls >> name;
            in_vertex = name == "vertex";
            if (in_vertex) ls >> vertices;
        } else if (word == "property" && in_vertex) {
            std::string type, name;
            ls >> type >> name;
            props.push_back(name);
        } else if (word == "end_header") {
            break;
        }
    }
    if (!ascii) throw std::runtime_error(path.string() + ": only ASCII PLY is supported");

    auto find = [&](const char* name) -> int {
        for (std::size_t i = 0; i < props.size(); ++i)
            if (props[i] == name) return static_cast<int>(i);
        return -1;
    };
    const int ix = find("x"), iy = find("y"), iz = find("z");
    const int inx = find("nx"), iny = find("ny"), inz = find("nz");
    if (ix < 0 || iy < 0 || iz < 0) throw std::runtime_error(path.string() + ": vertex lacks x/y/z");
    const bool normals = inx >= 0 && iny >= 0 && inz >= 0;

    PointCloud cloud;
    std::vector<double> row(props.size());
    for (std::size_t v = 0; v < vertices; ++v) {
        if (!std::getline(is, line)) throw std::runtime_error(path.string() + ": truncated vertex list");
        std::istringstream ls(line);
        for (auto& x : row) ls >> x;
        cloud.points.push_back({row[ix], row[iy], row[iz]});
        if (normals) cloud.normals.push_back({row[inx], row[iny], row[inz]});
    }
    return cloud;
}

// Flat binary cloud:
//   magic "PTCB" | u64 N | u32 flags (bit 0: normals present)
//   N records of little-endian f64: x y z [nx ny nz]
inline constexpr char kBinaryCloudMagic[4] = {'P', 'T', 'C', 'B'};
inline constexpr std::uint32_t kBinaryCloudHasNormals = 1u;

inline void write_binary_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os.write(kBinaryCloudMagic, 4);
    le::write_u64(os, cloud.size());
    le::write_u32(os, cloud.has_normals() ? kBinaryCloudHasNormals : 0u);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (double v : cloud.points[i]) le::write_f64(os, v);
        if (cloud.has_normals())
            for (double v : cloud.normals[i]) le::write_f64(os, v);
    }
}

inline PointCloud read_binary_cloud(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kBinaryCloudMagic)) {
        throw std::runtime_error(path.string() + ": not a binary point cloud");
    }
    const auto n = le::read_u64(is);
    const auto flags = le::read_u32(is);
    PointCloud cloud;
    cloud.points.resize(n);
    if (flags & kBinaryCloudHasNormals) cloud.normals.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& v : cloud.points[i]) v = le::read_f64(is);
        if (flags & kBinaryCloudHasNormals)
            for (auto& v : cloud.normals[i]) v = le::read_f64(is);
    }
    return cloud;
}

/// Dispatches on extension: .ply -> ASCII PLY, anything else -> binary.
inline PointCloud read_cloud(const std::filesystem::path& path) {
    return path.extension() == ".ply" ? read_ply(path) : read_binary_cloud(path);
}

inline void write_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
    if (path.extension() == ".ply") {
        write_ply(cloud, path);
    } else {
        write_binary_cloud(cloud, path);
    }
}

}  // namespace pointtc
