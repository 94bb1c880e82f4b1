#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iterator>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "checkpoint.hpp"
#include "cloud_io.hpp"
#include "config.hpp"
#include "geometry.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "optim.hpp"

namespace pointtc {

/// Raised when the training objective stops being finite.
class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

struct Dataset {
    std::vector<PointCloud> clouds;  // every cloud carries normals
    std::vector<std::string> names;
    std::vector<std::size_t> train, val, test;

    std::size_t size() const noexcept { return clouds.size(); }

    std::vector<PointCloud> subset(const std::vector<std::size_t>& idx) const {
        std::vector<PointCloud> out;
        out.reserve(idx.size());
        for (auto i : idx) out.push_back(clouds.at(i));
        return out;
    }
};

/// Seeded 70/10/20 split over a shuffled index list.
inline void split_dataset(Dataset& data, std::uint64_t seed) {
    const std::size_t n = data.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    RandomSource rng(seed);
    rng.shuffle(order.begin(), order.end());
    const auto n_train = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
    data.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    data.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                    order.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_train + n_val)));
    data.test.assign(order.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_train + n_val)), order.end());
}

/// A synthetic shape with random per-axis scale in [0.6, 1] about the cube
/// centre, plus PCA normals.
inline PointCloud synth_jittered(ShapeKind kind, std::size_t n_points, RandomSource& rng) {
    PointCloud c = synth_shape(kind, n_points, rng);
    const Vec3 s{rng.uniform(0.6, 1.0), rng.uniform(0.6, 1.0), rng.uniform(0.6, 1.0)};
    for (auto& p : c.points)
        for (int d = 0; d < 3; ++d) p[d] = 0.5 + s[d] * (p[d] - 0.5);
    return estimate_normals(c).cloud;
}

/// `count` shapes cycling through every shape kind, split 70/10/20.
inline Dataset make_synthetic_dataset(std::size_t count, std::size_t n_points, std::uint64_t seed) {
    Dataset data;
    RandomSource rng(seed);
    constexpr std::size_t kinds = std::size(kAllShapeKinds);
    for (std::size_t i = 0; i < count; ++i) {
        const ShapeKind kind = kAllShapeKinds[i % kinds];
        data.clouds.push_back(synth_jittered(kind, n_points, rng));
        data.names.push_back(std::string(to_string(kind)) + "_" + std::to_string(i));
    }
    split_dataset(data, seed ^ 0x5eedull);
    return data;
}

/// Loads every cloud file (.ply or binary) of a directory in name order.
/// Larger clouds are reduced to `n_points` with FPS; coordinates are mapped
/// into the unit cube and missing normals are estimated.
inline Dataset load_cloud_directory(const std::filesystem::path& dir, std::size_t n_points, std::uint64_t seed) {
    if (!std::filesystem::is_directory(dir)) throw ArgumentError("not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());

    Dataset data;
    for (const auto& f : files) {
        PointCloud c = read_cloud(f);
        if (c.size() < n_points) {
            throw ArgumentError(f.string() + ": " + std::to_string(c.size()) + " points, need " +
                                std::to_string(n_points));
        }
        if (c.size() > n_points) {
            const auto picked = fps(c.points, n_points);
            PointCloud sub;
            for (std::size_t i : picked.indices) {
                sub.points.push_back(c.points[i]);
                if (c.has_normals()) sub.normals.push_back(c.normals[i]);
            }
            c = std::move(sub);
        }
        normalize_to_unit_cube(c);
        if (!c.has_normals()) c = estimate_normals(c).cloud;
        data.clouds.push_back(std::move(c));
        data.names.push_back(f.filename().string());
    }
    if (data.clouds.empty()) throw ArgumentError("no point clouds in " + dir.string());
    split_dataset(data, seed ^ 0x5eedull);
    return data;
}

/// FNV-1a over the coordinate bits of every cloud.
inline std::string dataset_hash(const Dataset& data) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& c : data.clouds)
        for (const auto& p : c.points)
            for (double v : p) {
                auto bits = std::bit_cast<std::uint64_t>(v);
                for (int b = 0; b < 8; ++b) {
                    h ^= (bits >> (8 * b)) & 0xffu;
                    h *= 1099511628211ull;
                }
            }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    double chamfer = 0.0;
    double mean_n_send = 0.0;
};

struct EvalRow {
    std::string label;
    double snr_db = 0.0;
    std::size_t trials = 0;
    std::size_t clouds = 0;
    double chamfer = 0.0;
    double d1 = 0.0;
    double d1_psnr = 0.0;
    double d2 = 0.0;
    double d2_psnr = 0.0;
    double mean_n_send = 0.0;
    double n_mod = 0.0;
};

struct ConstellationTable {
    std::vector<double> levels;           // per-axis codebook
    std::vector<std::size_t> counts;      // L x L, row = in-phase index
    std::size_t total = 0;

    std::size_t side() const noexcept { return levels.size(); }
    double probability(std::size_t i, std::size_t q) const {
        return total == 0 ? 0.0 : static_cast<double>(counts[i * side() + q]) / static_cast<double>(total);
    }
    /// Shannon entropy of the empirical grid distribution, in bits.
    double entropy_bits() const {
        double h = 0.0;
        for (auto c : counts) {
            if (c == 0) continue;
            const double p = static_cast<double>(c) / static_cast<double>(total);
            h -= p * std::log2(p);
        }
        return h;
    }
};

struct RunRecord {
    std::string config_hash;
    std::string config_text;
    std::string dataset_hash;
    std::vector<EpochRecord> epochs;
    std::vector<EvalRow> evaluations;
    std::optional<ConstellationTable> constellation;
};

inline nlohmann::json to_json(const EvalRow& r) {
    return {{"label", r.label},   {"snr_db", r.snr_db},   {"trials", r.trials},   {"clouds", r.clouds},
            {"chamfer", r.chamfer}, {"d1", r.d1},         {"d1_psnr", r.d1_psnr}, {"d2", r.d2},
            {"d2_psnr", r.d2_psnr}, {"mean_n_send", r.mean_n_send}, {"n_mod", r.n_mod}};
}

inline nlohmann::json to_json(const ConstellationTable& t) {
    nlohmann::json points = nlohmann::json::array();
    for (std::size_t i = 0; i < t.side(); ++i)
        for (std::size_t q = 0; q < t.side(); ++q)
            points.push_back({{"i", t.levels[i]}, {"q", t.levels[q]}, {"count", t.counts[i * t.side() + q]}});
    return {{"total", t.total}, {"entropy_bits", t.entropy_bits()}, {"points", points}};
}

inline nlohmann::json to_json(const RunRecord& r) {
    nlohmann::json j;
    j["config_hash"] = r.config_hash;
    j["config"] = r.config_text;
    j["dataset_hash"] = r.dataset_hash;
    j["epochs"] = nlohmann::json::array();
    for (const auto& e : r.epochs) {
        j["epochs"].push_back(
            {{"epoch", e.epoch}, {"lr", e.lr}, {"loss", e.loss}, {"chamfer", e.chamfer}, {"mean_n_send", e.mean_n_send}});
    }
    j["evaluations"] = nlohmann::json::array();
    for (const auto& e : r.evaluations) j["evaluations"].push_back(to_json(e));
    if (r.constellation) j["constellation"] = to_json(*r.constellation);
    return j;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainOptions {
    std::optional<std::filesystem::path> init_checkpoint;  // e.g. an AWGN model to fine-tune on fading
    std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
    std::unique_ptr<PointTcModel> model;
    RunRecord record;
};

inline double draw_training_snr(const ExperimentConfig& cfg, RandomSource& rng) {
    return cfg.snr_mode == SnrMode::Fixed ? cfg.snr_fixed : rng.uniform(cfg.snr_min, cfg.snr_max);
}

/// Adam on the full objective. Each batch draws one SNR; the power of all
/// clouds in a batch is normalised together; the learning rate halves every
/// `lr_halving` epochs.
inline TrainResult train(const ExperimentConfig& cfg, const Dataset& data, const TrainOptions& options = {}) {
    cfg.validate();
    if (data.train.empty()) throw ArgumentError("train: empty training split");
    TrainResult result;
    result.model = std::make_unique<PointTcModel>(cfg);
    auto& model = *result.model;
    if (options.init_checkpoint) load_checkpoint(model.parameters(), *options.init_checkpoint);

    result.record.config_hash = config_hash(cfg);
    result.record.config_text = serialize_config(cfg);
    result.record.dataset_hash = dataset_hash(data);

    AdamOptions adam_opts;
    adam_opts.lr = cfg.lr;
    adam_opts.weight_decay = cfg.weight_decay;
    Adam adam(model.parameters(), adam_opts);

    RandomSource order_rng(cfg.seed ^ 0x07de5ull);
    RandomSource noise_rng(cfg.seed ^ 0xc4a77e1ull);
    std::vector<std::size_t> order = data.train;
    std::vector<PointCloud> batch;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = step_decay_lr(cfg.lr, epoch, cfg.lr_halving);
        adam.set_lr(lr);
        order_rng.shuffle(order.begin(), order.end());

        double loss_sum = 0.0, chamfer_sum = 0.0, send_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(data.clouds[order[i]]);

            ForwardOptions fo;
            fo.snr_db = draw_training_snr(cfg, noise_rng);
            const ForwardResult fr = model.forward(batch, fo, noise_rng);
            const double loss = fr.loss.item();
            if (!std::isfinite(loss)) {
                throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch + 1) + ", batch " +
                                       std::to_string(start / cfg.batch_size) + ": loss " + std::to_string(loss) +
                                       " (lr " + std::to_string(lr) + ", snr " + std::to_string(fo.snr_db) + " dB)");
            }
            model.parameters().zero_grad();
            fr.loss.backward();
            adam.step();

            const double w = static_cast<double>(batch.size());
            loss_sum += loss * w;
            chamfer_sum += fr.chamfer * w;
            send_sum += fr.mean_n_send * w;
        }
        const double n = static_cast<double>(order.size());
        EpochRecord rec{epoch + 1, lr, loss_sum / n, chamfer_sum / n, send_sum / n};
        result.record.epochs.push_back(rec);
        if (options.on_epoch) options.on_epoch(rec);
    }
    return result;
}

inline void save_model(const PointTcModel& model, const RunRecord& record, const std::filesystem::path& stem) {
    nlohmann::json meta;
    meta["config"] = serialize_config(model.config());
    meta["config_hash"] = config_hash(model.config());
    meta["dataset_hash"] = record.dataset_hash;
    meta["epochs_trained"] = record.epochs.size();
    save_checkpoint(model.parameters(), stem, meta);
}

/// Rebuilds a model from the configuration stored with a checkpoint.
inline std::unique_ptr<PointTcModel> load_model(const std::filesystem::path& stem) {
    const auto manifest = read_checkpoint_manifest(stem);
    const auto& meta = manifest.at("metadata");
    const ExperimentConfig cfg = parse_config(meta.at("config").get<std::string>());
    auto model = std::make_unique<PointTcModel>(cfg);
    load_checkpoint(model->parameters(), stem);
    return model;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalOptions {
    std::vector<double> snr_db{0.0, 5.0, 10.0, 15.0};
    std::size_t trials = 1;
    std::uint64_t seed = 1;
    std::optional<ChannelKind> channel;
    std::string label;
};

/// Adapter input used when the channel SNR is not finite.
inline double adapter_snr_for(const ExperimentConfig& cfg, double snr) {
    if (std::isfinite(snr)) return snr;
    return cfg.snr_mode == SnrMode::Fixed ? cfg.snr_fixed : cfg.snr_max;
}

/// Reconstruction of one cloud in evaluation mode (no Gumbel noise).
inline Transmission evaluate_one(const PointTcModel& model, const PointCloud& cloud, double snr,
                                 std::optional<ChannelKind> channel, bool apply_channel, RandomSource& rng) {
    ForwardOptions fo;
    fo.snr_db = snr;
    fo.adapter_snr_db = adapter_snr_for(model.config(), snr);
    fo.gumbel_noise = false;
    fo.apply_channel = apply_channel;
    fo.channel = channel;
    const std::vector<PointCloud> one{cloud};
    return std::move(model.forward(one, fo, rng).items.front());
}

inline PointCloud to_cloud(const Tensor& coords) {
    PointCloud c;
    c.points = to_points(coords);
    return c;
}

/// Mean metrics per SNR over the clouds and `trials` fresh channel draws.
/// PSNR uses each reference cloud's own peak and is averaged in dB.
inline std::vector<EvalRow> evaluate(const PointTcModel& model, const std::vector<PointCloud>& clouds,
                                     const EvalOptions& opt) {
    if (clouds.empty()) throw ArgumentError("evaluate: no clouds");
    if (opt.trials == 0) throw ArgumentError("evaluate: trials must be positive");
    std::vector<EvalRow> rows;
    RandomSource rng(opt.seed);
    for (double snr : opt.snr_db) {
        EvalRow row;
        row.label = opt.label;
        row.snr_db = snr;
        row.trials = opt.trials;
        row.clouds = clouds.size();
        row.n_mod = static_cast<double>(model.config().n_mod);
        for (std::size_t t = 0; t < opt.trials; ++t) {
            for (const auto& ref : clouds) {
                const Transmission tx = evaluate_one(model, ref, snr, opt.channel, true, rng);
                const PointCloud rec = estimate_normals(to_cloud(tx.reconstruction)).cloud;
                const MetricReport m = score(ref, rec, peak_value(ref));
                row.chamfer += m.chamfer;
                row.d1 += m.d1;
                row.d2 += m.d2;
                row.d1_psnr += m.d1_psnr;
                row.d2_psnr += m.d2_psnr;
                row.mean_n_send += static_cast<double>(tx.rate.n_send());
            }
        }
        const double n = static_cast<double>(opt.trials * clouds.size());
        row.chamfer /= n;
        row.d1 /= n;
        row.d2 /= n;
        row.d1_psnr /= n;
        row.d2_psnr /= n;
        row.mean_n_send /= n;
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Constellation statistics
// ---------------------------------------------------------------------------

inline ConstellationTable empty_constellation(const Codebook& cb) {
    ConstellationTable t;
    t.levels = cb.levels;
    t.counts.assign(cb.levels.size() * cb.levels.size(), 0);
    return t;
}

/// Adds the first `transmitted` rows of a grid-valued stream to the table.
inline void accumulate_constellation(ConstellationTable& table, const Codebook& cb, const SymbolStream& grid,
                                     std::size_t transmitted) {
    for (std::size_t r = 0; r < transmitted; ++r) {
        const double i = grid.in_phase(r), q = grid.quadrature(r);
        if (!cb.contains(i) || !cb.contains(q)) throw ContractError("constellation: symbol off the grid");
        ++table.counts[cb.nearest_index(i) * table.side() + cb.nearest_index(q)];
        ++table.total;
    }
}

/// Empirical grid-point frequencies of the transmitted symbols over `clouds`.
inline ConstellationTable constellation_stats(const PointTcModel& model, const std::vector<PointCloud>& clouds,
                                              double snr, bool gumbel_noise, std::uint64_t seed) {
    ConstellationTable table = empty_constellation(model.codebook());
    RandomSource rng(seed);
    for (const auto& c : clouds) {
        ForwardOptions fo;
        fo.snr_db = snr;
        fo.adapter_snr_db = adapter_snr_for(model.config(), snr);
        fo.gumbel_noise = gumbel_noise;
        fo.apply_channel = false;
        const std::vector<PointCloud> one{c};
        const auto fr = model.forward(one, fo, rng);
        const auto& tx = fr.items.front();
        accumulate_constellation(table, model.codebook(), tx.grid_symbols, tx.rate.n_send());
    }
    return table;
}

// ---------------------------------------------------------------------------
// Estimator comparison
// ---------------------------------------------------------------------------

struct ComparisonResult {
    std::vector<EvalRow> rows;  // label = estimator name
    std::vector<RunRecord> records;
};

/// Trains one model per estimator on the same seed, data and configuration
/// and evaluates each on the test split.
inline ComparisonResult compare_estimators(const ExperimentConfig& base, const Dataset& data, EvalOptions eval,
                                           const std::vector<Estimator>& estimators = {
                                               Estimator::GumbelSoftQuant, Estimator::StraightThrough,
                                               Estimator::UniformNoise}) {
    ComparisonResult out;
    const auto test = data.subset(data.test.empty() ? data.train : data.test);
    for (Estimator e : estimators) {
        ExperimentConfig cfg = base;
        cfg.estimator = e;
        auto trained = train(cfg, data);
        eval.label = std::string(to_string(e));
        for (auto& row : evaluate(*trained.model, test, eval)) out.rows.push_back(row);
        out.records.push_back(std::move(trained.record));
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

inline void write_eval_csv(std::ostream& os, const std::vector<EvalRow>& rows) {
    os << "label,snr_db,trials,clouds,chamfer,d1,d1_psnr,d2,d2_psnr,mean_n_send,n_mod\n";
    os.precision(10);
    for (const auto& r : rows) {
        os << r.label << ',' << r.snr_db << ',' << r.trials << ',' << r.clouds << ',' << r.chamfer << ',' << r.d1
           << ',' << r.d1_psnr << ',' << r.d2 << ',' << r.d2_psnr << ',' << r.mean_n_send << ',' << r.n_mod << '\n';
    }
}

inline void write_constellation_csv(std::ostream& os, const ConstellationTable& t) {
    os << "i,q,count,probability\n";
    os.precision(10);
    for (std::size_t i = 0; i < t.side(); ++i)
        for (std::size_t q = 0; q < t.side(); ++q)
            os << t.levels[i] << ',' << t.levels[q] << ',' << t.counts[i * t.side() + q] << ',' << t.probability(i, q)
               << '\n';
}

inline void write_epoch_csv(std::ostream& os, const std::vector<EpochRecord>& epochs) {
    os << "epoch,lr,loss,chamfer,mean_n_send\n";
    os.precision(10);
    for (const auto& e : epochs)
        os << e.epoch << ',' << e.lr << ',' << e.loss << ',' << e.chamfer << ',' << e.mean_n_send << '\n';
}

}  // namespace pointtc
