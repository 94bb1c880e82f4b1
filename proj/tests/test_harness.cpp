#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <limits>
#include <set>
#include <sstream>

#include <pointtc/harness.hpp>

#include "test_util.hpp"

using namespace pointtc;

namespace {

// Small enough for a few epochs in well under a second.
ExperimentConfig tiny_config() {
    ExperimentConfig c;
    c.n_points = 64;
    c.tokens = 16;
    c.coarse_tokens = 4;
    c.token_dim = 8;
    c.n_mod = 10;
    c.group_k = 8;
    c.attention_k = 4;
    c.head_width = 16;
    c.adapter_hidden = 16;
    c.epochs = 2;
    c.batch_size = 4;
    c.dataset_size = 10;
    return c;
}

Dataset tiny_data(const ExperimentConfig& c) { return make_synthetic_dataset(c.dataset_size, c.n_points, c.data_seed); }

std::vector<double> flat_parameters(const ParameterSet& ps) {
    std::vector<double> v;
    for (const auto& p : ps.all()) v.insert(v.end(), p.tensor.values().begin(), p.tensor.values().end());
    return v;
}

}  // namespace

TEST_CASE("dataset split is 70/10/20 and disjoint", "[harness][data]") {
    const Dataset d = make_synthetic_dataset(32, 64, 7);
    CHECK(d.size() == 32);
    CHECK(d.train.size() == 22);
    CHECK(d.val.size() == 3);
    CHECK(d.test.size() == 7);
    std::set<std::size_t> all(d.train.begin(), d.train.end());
    all.insert(d.val.begin(), d.val.end());
    all.insert(d.test.begin(), d.test.end());
    CHECK(all.size() == 32);
    for (const auto& c : d.clouds) {
        CHECK(c.size() == 64);
        CHECK(c.has_normals());
    }
    CHECK(dataset_hash(d) == dataset_hash(make_synthetic_dataset(32, 64, 7)));
    CHECK(dataset_hash(d) != dataset_hash(make_synthetic_dataset(32, 64, 8)));
}

TEST_CASE("zero epochs leave the initialisation untouched", "[harness][train]") {
    ExperimentConfig c = tiny_config();
    c.epochs = 0;
    const auto r = train(c, tiny_data(c));
    const PointTcModel fresh(c);
    CHECK(flat_parameters(r.model->parameters()) == flat_parameters(fresh.parameters()));
    CHECK(r.record.epochs.empty());
}

TEST_CASE("training is deterministic under a seed", "[harness][train]") {
    const ExperimentConfig c = tiny_config();
    const Dataset d = tiny_data(c);
    const auto a = train(c, d), b = train(c, d);
    REQUIRE(a.record.epochs.size() == 2);
    for (std::size_t e = 0; e < 2; ++e) {
        CHECK(a.record.epochs[e].loss == b.record.epochs[e].loss);
        CHECK(a.record.epochs[e].chamfer == b.record.epochs[e].chamfer);
        CHECK(std::isfinite(a.record.epochs[e].loss));
    }
    CHECK(a.record.epochs[1].lr == c.lr);
    CHECK(flat_parameters(a.model->parameters()) == flat_parameters(b.model->parameters()));
    CHECK(a.record.config_hash == config_hash(c));

    ExperimentConfig other = c;
    other.seed = 2;
    CHECK(train(other, d).record.epochs[0].loss != a.record.epochs[0].loss);
}

TEST_CASE("checkpoints restore the model and its configuration", "[harness][train]") {
    ExperimentConfig c = tiny_config();
    c.epochs = 1;
    c.snr_mode = SnrMode::Fixed;
    const auto r = train(c, tiny_data(c));
    const auto stem = std::filesystem::temp_directory_path() / "pointtc_harness_model";
    save_model(*r.model, r.record, stem);
    const auto loaded = load_model(stem);
    CHECK(serialize_config(loaded->config()) == serialize_config(c));
    CHECK(flat_parameters(loaded->parameters()) == flat_parameters(r.model->parameters()));

    // Fine-tuning starts from the stored weights.
    ExperimentConfig fading = c;
    fading.channel = ChannelKind::Rayleigh;
    fading.epochs = 0;
    TrainOptions opts;
    opts.init_checkpoint = stem;
    CHECK(flat_parameters(train(fading, tiny_data(c), opts).model->parameters()) ==
          flat_parameters(r.model->parameters()));
    std::filesystem::remove(stem.string() + ".json");
    std::filesystem::remove(stem.string() + ".bin");
}

TEST_CASE("evaluation", "[harness][eval]") {
    const ExperimentConfig c = tiny_config();
    const Dataset d = tiny_data(c);
    const PointTcModel model(c);
    const auto clouds = d.subset(d.test);

    SECTION("noiseless awgn equals the channel-free pass") {
        const double inf = std::numeric_limits<double>::infinity();
        RandomSource a(3), b(3);
        const Transmission x = evaluate_one(model, clouds[0], inf, ChannelKind::Awgn, true, a);
        const Transmission y = evaluate_one(model, clouds[0], inf, ChannelKind::Awgn, false, b);
        CHECK(std::equal(x.reconstruction.values().begin(), x.reconstruction.values().end(),
                         y.reconstruction.values().begin()));
        CHECK(adapter_snr_for(c, inf) == c.snr_max);
    }
    SECTION("one row per snr, reproducible under a seed") {
        EvalOptions opt;
        opt.trials = 1;
        const auto a = evaluate(model, clouds, opt), b = evaluate(model, clouds, opt);
        REQUIRE(a.size() == 4);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(a[i].snr_db == opt.snr_db[i]);
            CHECK(a[i].d2_psnr == b[i].d2_psnr);
            CHECK(a[i].clouds == clouds.size());
            CHECK(a[i].mean_n_send >= double(c.n_main()));
            CHECK(a[i].mean_n_send <= double(c.n_mod));
        }
        std::ostringstream csv;
        write_eval_csv(csv, a);
        const std::string text = csv.str();
        CHECK(std::count(text.begin(), text.end(), '\n') == 5);
    }
    SECTION("rayleigh evaluation runs") {
        EvalOptions opt;
        opt.snr_db = {5.0};
        opt.channel = ChannelKind::Rayleigh;
        opt.trials = 2;
        CHECK(std::isfinite(evaluate(model, clouds, opt).front().chamfer));
    }
    SECTION("bad requests") {
        EvalOptions opt;
        CHECK_THROWS_AS(evaluate(model, {}, opt), ArgumentError);
        opt.trials = 0;
        CHECK_THROWS_AS(evaluate(model, clouds, opt), ArgumentError);
    }
}

TEST_CASE("constellation statistics", "[harness][stats]") {
    const ExperimentConfig c = tiny_config();
    const Dataset d = tiny_data(c);
    const PointTcModel model(c);
    const auto t = constellation_stats(model, d.subset(d.test), 10.0, true, 5);
    double total = 0.0;
    for (std::size_t i = 0; i < t.side(); ++i)
        for (std::size_t q = 0; q < t.side(); ++q) total += t.probability(i, q);
    CHECK(total == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(t.levels == model.codebook().levels);
    CHECK(t.entropy_bits() <= 4.0 + 1e-12);

    ConstellationTable bad = empty_constellation(model.codebook());
    const SymbolStream off{Tensor::from({1, 2}, {0.1, 0.2}), 1, 1.0};
    CHECK_THROWS_AS(accumulate_constellation(bad, model.codebook(), off, 1), ContractError);
}

TEST_CASE("uniform logits with gumbel noise match a monte-carlo oracle", "[harness][stats][oracle]") {
    const ExperimentConfig c = tiny_config();
    PointTcModel model(c);
    testutil::fill_all(model.parameters(), 0.0);  // every logit is exactly zero
    const Dataset d = tiny_data(c);
    const std::vector<PointCloud> clouds(300, d.clouds[0]);
    const auto t = constellation_stats(model, clouds, 10.0, true, 11);
    REQUIRE(t.total >= 300 * c.n_main());

    // Oracle: the relaxed position of zero logits under Gumbel noise, snapped
    // to the nearest level, drawn independently per axis.
    const Codebook cb = model.codebook();
    RandomSource rng(99);
    std::vector<double> axis(cb.levels_per_axis(), 0.0);
    const int draws = 400000;
    for (int n = 0; n < draws; ++n) {
        double z = 0.0, w[4], s = 0.0;
        for (int k = 0; k < 4; ++k) s += (w[k] = std::exp(rng.gumbel() / c.temperature));
        for (int k = 0; k < 4; ++k) z += w[k] / s * cb.levels[k];
        axis[cb.nearest_index(z)] += 1.0 / draws;
    }
    double oracle_entropy = 0.0;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t q = 0; q < 4; ++q) {
            const double p = axis[i] * axis[q];
            CHECK(std::abs(t.probability(i, q) - p) < 0.03);
            oracle_entropy -= p * std::log2(p);
        }
    CHECK(std::abs(t.entropy_bits() - oracle_entropy) < 0.1);
    // Every grid point is used and the table is symmetric about the centre.
    for (std::size_t k = 0; k < 16; ++k) CHECK(t.counts[k] > 0);
    CHECK(std::abs(axis[0] - axis[3]) < 0.01);
}

TEST_CASE("non-finite loss aborts training", "[harness][train]") {
    ExperimentConfig c = tiny_config();
    c.lr = 1e300;
    c.epochs = 5;
    CHECK_THROWS_AS(train(c, tiny_data(c)), TrainingDiverged);
}

TEST_CASE("snr draws follow the configured mode", "[harness][train]") {
    ExperimentConfig c;
    RandomSource rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double s = draw_training_snr(c, rng);
        CHECK(s >= c.snr_min);
        CHECK(s <= c.snr_max);
    }
    c.snr_mode = SnrMode::Fixed;
    CHECK(draw_training_snr(c, rng) == c.snr_fixed);
}

TEST_CASE("estimator comparison emits one row per estimator and snr", "[harness][compare]") {
    ExperimentConfig c = tiny_config();
    c.epochs = 1;
    EvalOptions eval;
    eval.snr_db = {0.0, 10.0};
    const auto r = compare_estimators(c, tiny_data(c), eval);
    REQUIRE(r.rows.size() == 6);
    CHECK(r.rows[0].label == "gumbel-softq");
    CHECK(r.rows[2].label == "ste");
    CHECK(r.rows[4].label == "uniform-noise");
    CHECK(r.records.size() == 3);
    CHECK(r.records[0].config_hash != r.records[1].config_hash);
}
