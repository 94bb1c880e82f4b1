#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "endian.hpp"
#include "errors.hpp"
#include "nn.hpp"

namespace pointtc {

// On-disk layout: <stem>.json holds the manifest
//   { "format": "pointtc-checkpoint", "version": 1, "data_file": "<stem>.bin",
//     "parameters": [ { "name", "shape", "offset", "count" } ... ], "metadata": {...} }
// and <stem>.bin holds every parameter as little-endian float64, concatenated
// in manifest order. "offset" is in bytes from the start of the data file.

inline constexpr const char* kCheckpointFormat = "pointtc-checkpoint";

struct CheckpointPaths {
    std::filesystem::path manifest;
    std::filesystem::path data;
};

inline CheckpointPaths checkpoint_paths(const std::filesystem::path& stem) {
    auto base = stem;
    if (base.extension() == ".json" || base.extension() == ".bin") base.replace_extension();
    return {std::filesystem::path(base.string() + ".json"), std::filesystem::path(base.string() + ".bin")};
}

inline void save_checkpoint(const ParameterSet& params, const std::filesystem::path& stem,
                            const nlohmann::json& metadata = nlohmann::json::object()) {
    const auto paths = checkpoint_paths(stem);
    if (paths.manifest.has_parent_path()) std::filesystem::create_directories(paths.manifest.parent_path());

    std::ofstream data(paths.data, std::ios::binary);
    if (!data) throw std::runtime_error("cannot write " + paths.data.string());
    nlohmann::json entries = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& p : params.all()) {
        for (double v : p.tensor.values()) le::write_f64(data, v);
        entries.push_back({{"name", p.name},
                           {"shape", p.tensor.shape()},
                           {"offset", offset},
                           {"count", p.tensor.numel()},
                           {"trainable", p.trainable}});
        offset += 8 * p.tensor.numel();
    }
    nlohmann::json manifest = {{"format", kCheckpointFormat},
                               {"version", 1},
                               {"data_file", paths.data.filename().string()},
                               {"parameters", entries},
                               {"metadata", metadata}};
    std::ofstream(paths.manifest) << manifest.dump(2) << '\n';
}

inline nlohmann::json read_checkpoint_manifest(const std::filesystem::path& stem) {
    const auto paths = checkpoint_paths(stem);
    std::ifstream in(paths.manifest);
    if (!in) throw std::runtime_error("cannot read " + paths.manifest.string());
    auto manifest = nlohmann::json::parse(in);
    if (manifest.value("format", "") != kCheckpointFormat) {
        throw std::runtime_error(paths.manifest.string() + " is not a checkpoint manifest");
    }
    return manifest;
}

/// Loads values into an already-constructed parameter set. Every parameter of
/// `params` must be present with a matching shape.
inline nlohmann::json load_checkpoint(ParameterSet& params, const std::filesystem::path& stem) {
    const auto paths = checkpoint_paths(stem);
    const auto manifest = read_checkpoint_manifest(stem);
    std::ifstream data(paths.manifest.parent_path() / manifest.at("data_file").get<std::string>(),
                       std::ios::binary);
    if (!data) throw std::runtime_error("cannot read checkpoint data for " + paths.manifest.string());

    std::unordered_map<std::string, nlohmann::json> entries;
    for (const auto& e : manifest.at("parameters")) entries.emplace(e.at("name").get<std::string>(), e);

    for (auto& p : params.all()) {
        auto it = entries.find(p.name);
        if (it == entries.end()) throw ConfigError("checkpoint lacks parameter " + p.name);
        if (it->second.at("shape").get<Shape>() != p.tensor.shape()) {
            throw DimensionError("checkpoint shape mismatch for " + p.name);
        }
        data.seekg(static_cast<std::streamoff>(it->second.at("offset").get<std::uint64_t>()));
        auto values = p.tensor.mutable_values();
        for (auto& v : values) v = le::read_f64(data);
    }
    return manifest.at("metadata");
}

}  // namespace pointtc
