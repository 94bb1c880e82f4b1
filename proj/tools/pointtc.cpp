#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <pointtc/pointtc.hpp>

namespace fs = std::filesystem;
using namespace pointtc;

namespace {

std::vector<double> parse_snr_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item == "inf" || item == "+inf") {
            out.push_back(std::numeric_limits<double>::infinity());
            continue;
        }
        std::size_t used = 0;
        const double v = std::stod(item, &used);
        if (used != item.size()) throw ArgumentError("bad SNR value '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ArgumentError("empty SNR list");
    return out;
}

struct ConfigArgs {
    std::string file;
    std::string preset = "desk";
    std::vector<std::string> overrides;

    void attach(CLI::App* app) {
        app->add_option("-c,--config", file, "flat key = value config file");
        app->add_option("--preset", preset, "base configuration")->check(CLI::IsMember({"desk", "full"}));
        app->add_option("--set", overrides, "override one key (key=value); repeatable");
    }

    ExperimentConfig build() const {
        ExperimentConfig cfg = preset == "full" ? full_config() : desk_config();
        if (!file.empty()) cfg = load_config(file, cfg);
        for (const auto& o : overrides) apply_setting(cfg, o);
        cfg.validate();
        return cfg;
    }
};

Dataset dataset_for(const ExperimentConfig& cfg, const std::string& dir) {
    if (!dir.empty()) return load_cloud_directory(dir, cfg.n_points, cfg.data_seed);
    return make_synthetic_dataset(cfg.dataset_size, cfg.n_points, cfg.data_seed);
}

std::vector<PointCloud> pick_split(const Dataset& data, const std::string& split) {
    if (split == "train") return data.subset(data.train);
    if (split == "val") return data.subset(data.val);
    if (split == "all") return data.clouds;
    return data.subset(data.test);
}

// Writes to `path`, or stdout when the path is empty or "-".
template <class Fn>
void emit(const std::string& path, Fn&& write) {
    if (path.empty() || path == "-") {
        write(std::cout);
        return;
    }
    std::ofstream os(path);
    if (!os) throw ArgumentError("cannot write '" + path + "'");
    write(os);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Token communication simulator for point-cloud geometry"};
    app.require_subcommand(1);

    // train
    ConfigArgs train_cfg;
    std::string train_data, train_out = "model", train_record, train_init;
    bool train_quiet = false;
    auto* train_cmd = app.add_subcommand("train", "train a model end to end");
    train_cfg.attach(train_cmd);
    train_cmd->add_option("--data", train_data, "directory of .ply clouds (default: synthetic shapes)");
    train_cmd->add_option("-o,--out", train_out, "checkpoint stem (writes <stem>.json and <stem>.bin)");
    train_cmd->add_option("--record", train_record, "run record JSON path");
    train_cmd->add_option("--init", train_init, "checkpoint stem to start from");
    train_cmd->add_flag("-q,--quiet", train_quiet, "no per-epoch CSV on stdout");

    // eval
    std::string eval_ckpt, eval_data, eval_snr = "0,5,10,15", eval_channel, eval_split = "test", eval_out;
    std::size_t eval_trials = 1;
    std::uint64_t eval_seed = 1;
    auto* eval_cmd = app.add_subcommand("eval", "D1/D2 PSNR per SNR");
    eval_cmd->add_option("-m,--checkpoint", eval_ckpt, "checkpoint stem")->required();
    eval_cmd->add_option("--data", eval_data, "directory of .ply clouds");
    eval_cmd->add_option("--snr", eval_snr, "comma-separated SNR list in dB");
    eval_cmd->add_option("--trials", eval_trials, "channel realisations per cloud")->check(CLI::PositiveNumber);
    eval_cmd->add_option("--channel", eval_channel, "override channel")->check(CLI::IsMember({"awgn", "rayleigh"}));
    eval_cmd->add_option("--split", eval_split)->check(CLI::IsMember({"train", "val", "test", "all"}));
    eval_cmd->add_option("--seed", eval_seed);
    eval_cmd->add_option("-o,--out", eval_out, "CSV path (default stdout)");

    // stats
    std::string stats_ckpt, stats_data, stats_split = "test", stats_out, stats_json;
    double stats_snr = 10.0;
    bool stats_gumbel = false;
    std::uint64_t stats_seed = 1;
    auto* stats_cmd = app.add_subcommand("stats", "constellation point frequencies");
    stats_cmd->add_option("-m,--checkpoint", stats_ckpt, "checkpoint stem")->required();
    stats_cmd->add_option("--data", stats_data);
    stats_cmd->add_option("--snr", stats_snr, "adapter SNR in dB");
    stats_cmd->add_option("--split", stats_split)->check(CLI::IsMember({"train", "val", "test", "all"}));
    stats_cmd->add_flag("--gumbel", stats_gumbel, "keep Gumbel noise on");
    stats_cmd->add_option("--seed", stats_seed);
    stats_cmd->add_option("-o,--out", stats_out, "CSV path (default stdout)");
    stats_cmd->add_option("--json", stats_json, "summary JSON path");

    // metrics
    std::string metrics_a, metrics_b;
    std::optional<double> metrics_peak;
    auto* metrics_cmd = app.add_subcommand("metrics", "score two cloud files");
    metrics_cmd->add_option("reference", metrics_a)->required()->check(CLI::ExistingFile);
    metrics_cmd->add_option("reconstruction", metrics_b)->required()->check(CLI::ExistingFile);
    metrics_cmd->add_option("--peak", metrics_peak, "PSNR peak (default: max |coordinate| of the reference)");

    // synth
    std::string synth_kind = "sphere", synth_out = "clouds", synth_format = "ply";
    std::size_t synth_n = 256, synth_count = 32;
    std::uint64_t synth_seed = 1;
    auto* synth_cmd = app.add_subcommand("synth", "generate synthetic shapes");
    synth_cmd->add_option("--kind", synth_kind)->check(CLI::IsMember({"sphere", "cube", "torus", "plane", "mixed"}));
    synth_cmd->add_option("--n", synth_n, "points per cloud")->check(CLI::Range(8, 1 << 24));
    synth_cmd->add_option("--count", synth_count, "number of clouds")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--seed", synth_seed);
    synth_cmd->add_option("-o,--out", synth_out, "output directory");
    synth_cmd->add_option("--format", synth_format)->check(CLI::IsMember({"ply", "bin"}));

    // compare
    ConfigArgs cmp_cfg;
    std::string cmp_data, cmp_snr = "0,5,10,15", cmp_out;
    std::size_t cmp_trials = 1;
    auto* cmp_cmd = app.add_subcommand("compare", "train and evaluate each quantisation estimator");
    cmp_cfg.attach(cmp_cmd);
    cmp_cmd->add_option("--data", cmp_data);
    cmp_cmd->add_option("--snr", cmp_snr);
    cmp_cmd->add_option("--trials", cmp_trials)->check(CLI::PositiveNumber);
    cmp_cmd->add_option("-o,--out", cmp_out, "CSV path (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) {
            const ExperimentConfig cfg = train_cfg.build();
            const Dataset data = dataset_for(cfg, train_data);
            TrainOptions opts;
            if (!train_init.empty()) opts.init_checkpoint = train_init;
            if (!train_quiet) {
                std::cout << "epoch,lr,loss,chamfer,mean_n_send\n";
                opts.on_epoch = [](const EpochRecord& e) {
                    std::cout << e.epoch << ',' << e.lr << ',' << e.loss << ',' << e.chamfer << ',' << e.mean_n_send
                              << std::endl;
                };
            }
            TrainResult result = train(cfg, data, opts);
            save_model(*result.model, result.record, train_out);
            if (!train_record.empty()) {
                std::ofstream(train_record) << to_json(result.record).dump(2) << '\n';
            }
        } else if (*eval_cmd) {
            const auto model = load_model(eval_ckpt);
            const Dataset data = dataset_for(model->config(), eval_data);
            EvalOptions eo;
            eo.snr_db = parse_snr_list(eval_snr);
            eo.trials = eval_trials;
            eo.seed = eval_seed;
            eo.label = fs::path(eval_ckpt).filename().string();
            if (!eval_channel.empty()) eo.channel = parse_channel_kind(eval_channel);
            const auto rows = evaluate(*model, pick_split(data, eval_split), eo);
            emit(eval_out, [&](std::ostream& os) { write_eval_csv(os, rows); });
        } else if (*stats_cmd) {
            const auto model = load_model(stats_ckpt);
            const Dataset data = dataset_for(model->config(), stats_data);
            const auto table =
                constellation_stats(*model, pick_split(data, stats_split), stats_snr, stats_gumbel, stats_seed);
            emit(stats_out, [&](std::ostream& os) { write_constellation_csv(os, table); });
            if (!stats_json.empty()) std::ofstream(stats_json) << to_json(table).dump(2) << '\n';
        } else if (*metrics_cmd) {
            auto with_normals = [](PointCloud c) { return c.has_normals() ? c : estimate_normals(c).cloud; };
            const PointCloud a = with_normals(read_cloud(metrics_a));
            const PointCloud b = with_normals(read_cloud(metrics_b));
            const MetricReport m = score(a, b, metrics_peak.value_or(peak_value(a)));
            std::cout << "chamfer,d1,d1_psnr,d2,d2_psnr,peak\n";
            std::cout.precision(10);
            std::cout << m.chamfer << ',' << m.d1 << ',' << m.d1_psnr << ',' << m.d2 << ',' << m.d2_psnr << ','
                      << m.peak << '\n';
        } else if (*synth_cmd) {
            fs::create_directories(synth_out);
            RandomSource rng(synth_seed);
            for (std::size_t i = 0; i < synth_count; ++i) {
                const ShapeKind kind = synth_kind == "mixed" ? kAllShapeKinds[i % std::size(kAllShapeKinds)]
                                                             : parse_shape_kind(synth_kind);
                const PointCloud c = synth_jittered(kind, synth_n, rng);
                char name[64];
                std::snprintf(name, sizeof name, "%s_%04zu.%s", std::string(to_string(kind)).c_str(), i,
                              synth_format == "ply" ? "ply" : "ptcb");
                write_cloud(c, fs::path(synth_out) / name);
            }
            std::cout << synth_count << " clouds written to " << synth_out << '\n';
        } else if (*cmp_cmd) {
            const ExperimentConfig cfg = cmp_cfg.build();
            const Dataset data = dataset_for(cfg, cmp_data);
            EvalOptions eo;
            eo.snr_db = parse_snr_list(cmp_snr);
            eo.trials = cmp_trials;
            eo.seed = cfg.seed;
            const auto result = compare_estimators(cfg, data, eo);
            emit(cmp_out, [&](std::ostream& os) { write_eval_csv(os, result.rows); });
        }
    } catch (const TrainingDiverged& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
