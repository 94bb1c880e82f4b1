#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "channel.hpp"
#include "errors.hpp"
#include "metrics.hpp"
#include "modulator.hpp"

namespace pointtc {

enum class SnrMode { Range, Fixed };

inline SnrMode parse_snr_mode(std::string_view s) {
    if (s == "range") return SnrMode::Range;
    if (s == "fixed") return SnrMode::Fixed;
    throw ArgumentError("unknown snr mode '" + std::string(s) + "'");
}

inline std::string_view to_string(SnrMode m) { return m == SnrMode::Range ? "range" : "fixed"; }

/// Every knob of one experiment. Defaults are the desk-scale setting.
struct ExperimentConfig {
    // Geometry and architecture
    std::size_t n_points = 256;      // N
    std::size_t tokens = 64;         // N'
    std::size_t coarse_tokens = 16;  // N''
    std::size_t token_dim = 32;      // C'
    std::size_t qam_order = 16;      // M
    std::size_t n_mod = 40;
    std::size_t branch_ratio = 0;    // N_main : N_aux; 0 picks 2 for N_mod = 300, else 4
    std::size_t group_k = 16;
    double radius1 = 0.2;
    double radius2 = 0.4;
    std::size_t attention_k = 8;
    std::size_t head_width = 128;
    std::size_t adapter_hidden = 128;
    double offset_range = 0.1;

    // Modulation and rate
    double temperature = 1.5;
    Estimator estimator = Estimator::GumbelSoftQuant;
    bool rate_allocator = true;
    bool channel_adapter = true;
    double lambda = 2e-4;
    RateOrientation rate_orientation = RateOrientation::SendOverMod;

    // Channel
    ChannelKind channel = ChannelKind::Awgn;
    SnrMode snr_mode = SnrMode::Range;
    double snr_min = -0.5;
    double snr_max = 10.5;
    double snr_fixed = 10.0;
    double csi_noise = 0.0;

    // Optimisation
    std::size_t epochs = 200;
    std::size_t batch_size = 8;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    std::size_t lr_halving = 20;
    std::uint64_t seed = 1;

    // Synthetic data
    std::size_t dataset_size = 32;
    std::uint64_t data_seed = 7;

    std::size_t effective_ratio() const { return branch_ratio != 0 ? branch_ratio : (n_mod == 300 ? 2 : 4); }
    std::size_t n_aux() const { return n_mod / (effective_ratio() + 1); }
    std::size_t n_main() const { return n_mod - n_aux(); }

    void validate() const {
        if (n_points == 0 || n_points % 16 != 0) throw ConfigError("n_points must be a positive multiple of 16");
        if (tokens == 0 || tokens > n_points) throw ConfigError("tokens must lie in [1, n_points]");
        if (coarse_tokens == 0 || coarse_tokens > tokens) throw ConfigError("coarse_tokens must lie in [1, tokens]");
        const auto l = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(qam_order))));
        if (l * l != qam_order || (qam_order != 4 && qam_order != 16 && qam_order != 64 && qam_order != 256)) {
            throw ConfigError("qam_order must be one of 4, 16, 64, 256");
        }
        if (n_mod == 0) throw ConfigError("n_mod must be positive");
        if (n_mod % (effective_ratio() + 1) != 0) {
            throw ConfigError("n_mod " + std::to_string(n_mod) + " does not split at ratio " +
                              std::to_string(effective_ratio()) + ":1");
        }
        if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
        if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
        if (snr_min > snr_max) throw ConfigError("snr_min exceeds snr_max");
        if (csi_noise < 0.0) throw ConfigError("csi_noise must be non-negative");
        if (batch_size == 0) throw ConfigError("batch_size must be positive");
        if (!(lr > 0.0)) throw ConfigError("lr must be positive");
        if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
        if (lr_halving == 0) throw ConfigError("lr_halving must be positive");
        if (group_k == 0 || attention_k == 0) throw ConfigError("neighbour counts must be positive");
        if (!(radius1 > 0.0) || !(radius2 > 0.0)) throw ConfigError("radii must be positive");
        if (!(offset_range > 0.0)) throw ConfigError("offset_range must be positive");
    }
};

/// Full-size setting (2048 points, 64-QAM, 300 symbols). Not tractable on a CPU;
/// validated but never trained here.
inline ExperimentConfig full_config() {
    ExperimentConfig c;
    c.n_points = 2048;
    c.tokens = 512;
    c.coarse_tokens = 128;
    c.token_dim = 256;
    c.qam_order = 64;
    c.n_mod = 300;
    c.attention_k = 16;
    c.batch_size = 256;
    return c;
}

inline ExperimentConfig desk_config() { return {}; }

namespace detail {

template <class T>
T parse_number(std::string_view key, std::string_view text) {
    T value{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
    }
    return value;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw ConfigError("config key '" + std::string(key) + "': expected a boolean, got '" + std::string(text) + "'");
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

struct Field {
    std::string name;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, std::string_view)> set;
};

template <class T>
Field number_field(std::string name, T ExperimentConfig::*member) {
    return {name,
            [member](const ExperimentConfig& c) {
                if constexpr (std::is_floating_point_v<T>) return format_double(c.*member);
                else return std::to_string(c.*member);
            },
            [member, name](ExperimentConfig& c, std::string_view v) { c.*member = parse_number<T>(name, v); }};
}

inline Field bool_field(std::string name, bool ExperimentConfig::*member) {
    return {name, [member](const ExperimentConfig& c) { return std::string(c.*member ? "true" : "false"); },
            [member, name](ExperimentConfig& c, std::string_view v) { c.*member = parse_bool(name, v); }};
}

template <class E, class Parse>
Field enum_field(std::string name, E ExperimentConfig::*member, Parse parse) {
    return {name, [member](const ExperimentConfig& c) { return std::string(to_string(c.*member)); },
            [member, parse](ExperimentConfig& c, std::string_view v) {
                try {
                    c.*member = parse(v);
                } catch (const ArgumentError& e) {
                    throw ConfigError(e.what());
                }
            }};
}

inline const std::vector<Field>& config_fields() {
    using C = ExperimentConfig;
    static const std::vector<Field> fields = {
        number_field("n_points", &C::n_points),
        number_field("tokens", &C::tokens),
        number_field("coarse_tokens", &C::coarse_tokens),
        number_field("token_dim", &C::token_dim),
        number_field("qam_order", &C::qam_order),
        number_field("n_mod", &C::n_mod),
        number_field("branch_ratio", &C::branch_ratio),
        number_field("group_k", &C::group_k),
        number_field("radius1", &C::radius1),
        number_field("radius2", &C::radius2),
        number_field("attention_k", &C::attention_k),
        number_field("head_width", &C::head_width),
        number_field("adapter_hidden", &C::adapter_hidden),
        number_field("offset_range", &C::offset_range),
        number_field("temperature", &C::temperature),
        enum_field("estimator", &C::estimator, parse_estimator),
        bool_field("rate_allocator", &C::rate_allocator),
        bool_field("channel_adapter", &C::channel_adapter),
        number_field("lambda", &C::lambda),
        enum_field("rate_orientation", &C::rate_orientation, parse_rate_orientation),
        enum_field("channel", &C::channel, parse_channel_kind),
        enum_field("snr_mode", &C::snr_mode, parse_snr_mode),
        number_field("snr_min", &C::snr_min),
        number_field("snr_max", &C::snr_max),
        number_field("snr_fixed", &C::snr_fixed),
        number_field("csi_noise", &C::csi_noise),
        number_field("epochs", &C::epochs),
        number_field("batch_size", &C::batch_size),
        number_field("lr", &C::lr),
        number_field("weight_decay", &C::weight_decay),
        number_field("lr_halving", &C::lr_halving),
        number_field("seed", &C::seed),
        number_field("dataset_size", &C::dataset_size),
        number_field("data_seed", &C::data_seed),
    };
    return fields;
}

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Applies one `key=value` assignment. Unknown keys are rejected.
inline void apply_setting(ExperimentConfig& cfg, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
    const auto key = detail::trim(assignment.substr(0, eq));
    const auto value = detail::trim(assignment.substr(eq + 1));
    for (const auto& f : detail::config_fields()) {
        if (f.name == key) {
            f.set(cfg, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + std::string(key) + "'");
}

/// Flat `key = value` text; `#` starts a comment. Keys not mentioned keep
/// the values already in `base`.
inline ExperimentConfig parse_config(std::string_view text, ExperimentConfig base = {}) {
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (!line.empty()) apply_setting(base, line);
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    return base;
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

inline std::string serialize_config(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& f : detail::config_fields()) out += f.name + " = " + f.get(cfg) + "\n";
    return out;
}

/// FNV-1a over the serialized form; identifies a configuration in run records.
inline std::string config_hash(const ExperimentConfig& cfg) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : serialize_config(cfg)) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace pointtc
