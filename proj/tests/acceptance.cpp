// Acceptance run: one PASS/FAIL line per criterion. Every tolerance is pinned
// below. Exit status is nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <pointtc/pointtc.hpp>

#include "gradcheck.hpp"

using namespace pointtc;

namespace {

// Criterion 1
constexpr double kGradRuntimeLimitS = 120.0;
// Criterion 2
constexpr int kModulationPasses = 10000;
constexpr double kPowerTol = 1e-9;
// Criterion 3
constexpr int kMetricPairs = 200;
constexpr std::size_t kMetricPoints = 32;
constexpr double kMetricTol = 1e-12;
// Criterion 4
constexpr double kZfTol = 1e-12;
constexpr double kSnrTol = 1e-9;
constexpr int kChannelSamples = 100000;
constexpr double kMonteCarloRelTol = 0.02;
// Criterion 6
constexpr std::size_t kDeskEpochs = 200;
constexpr double kChamferRatio = 0.5;
constexpr double kTrainRuntimeLimitS = 1800.0;
// Criteria 7 and 8
constexpr std::size_t kTrendEpochs = 100;
constexpr std::uint64_t kSeeds[] = {1, 2, 3};
constexpr std::size_t kEvalTrials = 4;
constexpr double kRateSnrDb = 10.0;
constexpr double kProbeLambda = 0.5;
// Criterion 9
constexpr std::size_t kCompareEpochs = 50;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::vector<std::pair<int, Outcome>> g_results;

void report(int id, Outcome o) {
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << o.detail << std::endl;
    g_results.push_back({id, std::move(o)});
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

Tensor random_tensor(Shape shape, RandomSource& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor weighted(const Tensor& t, std::uint64_t seed) {
    RandomSource rng(seed);
    std::vector<double> w(t.numel());
    for (auto& x : w) x = rng.uniform(-1.0, 1.0);
    return sum(mul(t, Tensor::from(t.shape(), std::move(w))));
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness
// ---------------------------------------------------------------------------

ExperimentConfig gradient_config() {
    ExperimentConfig c;
    c.n_points = 64;
    c.tokens = 16;
    c.coarse_tokens = 4;
    c.token_dim = 8;
    c.qam_order = 16;
    c.n_mod = 10;
    c.group_k = 8;
    c.attention_k = 4;
    c.head_width = 12;
    c.adapter_hidden = 12;
    // The allocator's hard mask is piecewise constant in the parameters; its
    // expected-count backward rule is checked against a closed form instead.
    c.rate_allocator = false;
    return c;
}

Outcome criterion_gradients() {
    const auto t0 = Clock::now();
    RandomSource rng(2024);
    std::size_t checked = 0, failed = 0, skipped = 0;
    double worst = 0.0;
    std::string first;
    auto run = [&](const std::string& name, std::vector<Tensor> inputs, const std::function<Tensor()>& f,
                   std::size_t per = 12) {
        const auto r = gradcheck::check(std::move(inputs), f, per, 7);
        checked += r.checked;
        skipped += r.skipped;
        failed += r.failed;
        worst = std::max(worst, r.worst_ratio);
        if (!r.ok() && first.empty()) first = name + (r.first_failure.empty() ? " (nothing checked)" : ": " + r.first_failure);
    };

    // Elementary operations.
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng), m = random_tensor({4, 5}, rng);
    Tensor bias = random_tensor({5}, rng), col = random_tensor({3}, rng), pos = random_tensor({3, 4}, rng, 0.5, 2.0);
    Tensor cube = random_tensor({2, 3, 4}, rng);
    const std::vector<std::size_t> rows{2, 0, 0, 1};
    run("add", {a, b}, [&] { return weighted(add(a, b), 1); });
    run("sub", {a, b}, [&] { return weighted(sub(a, b), 2); });
    run("mul", {a, b}, [&] { return weighted(mul(a, b), 3); });
    run("scale", {a}, [&] { return weighted(scale(a, -1.7), 4); });
    run("add_scalar", {a}, [&] { return weighted(add_scalar(a, 0.3), 5); });
    run("reciprocal", {pos}, [&] { return weighted(reciprocal(pos), 6); });
    run("relu", {a}, [&] { return weighted(relu(a), 7); });
    run("tanh", {a}, [&] { return weighted(tanh(a), 8); });
    run("mul_rows", {a, col}, [&] { return weighted(mul_rows(a, col), 9); });
    run("matmul", {a, m}, [&] { return weighted(matmul(a, m), 10); });
    run("affine", {a, m, bias}, [&] { return weighted(affine(a, m, bias), 11); });
    run("sum", {a}, [&] { return mul(sum(a), sum(a)); });
    run("mean", {a}, [&] { return mul(mean(a), sum(b)); });
    run("sum_axis", {cube}, [&] { return weighted(sum_axis(cube, 1), 12); });
    run("max_pool", {cube}, [&] { return weighted(max_pool(cube, 1), 13); });
    run("softmax", {cube}, [&] { return weighted(softmax(cube, 2, 1.5), 14); });
    run("reshape", {cube}, [&] { return weighted(reshape(cube, {6, 4}), 15); });
    run("gather_rows", {a}, [&] { return weighted(gather_rows(a, rows), 16); });
    run("slice_rows", {a}, [&] { return weighted(slice_rows(a, 1, 3), 17); });
    run("slice_cols", {a}, [&] { return weighted(slice_cols(a, 1, 3), 18); });
    run("concat_rows", {a, b}, [&] { return weighted(concat_rows({a, b}), 19); });
    run("concat_cols", {a, b}, [&] { return weighted(concat_cols({a, b}), 20); });

    const Codebook cb = make_codebook(16);
    Tensor z = random_tensor({6, 1}, rng, -1.2, 1.2);
    run("soft_quantize", {z}, [&] { return weighted(soft_quantize(z, cb, 1.5), 21); });
    Tensor sym = random_tensor({6, 2}, rng);
    run("normalize_power", {sym}, [&] { return weighted(normalize_power({sym, 4, 1.0}).symbols, 22); });
    Tensor rec = random_tensor({12, 3}, rng, 0.0, 1.0);
    std::vector<Vec3> ref;
    for (int i = 0; i < 15; ++i) ref.push_back({rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)});
    run("chamfer_loss", {rec}, [&] { return chamfer_loss(ref, rec); }, 36);
    Tensor logits = random_tensor({5, 8}, rng, -2, 2);
    for (auto est : {Estimator::GumbelSoftQuant, Estimator::StraightThrough, Estimator::UniformNoise}) {
        ModulatorConfig mc;
        mc.estimator = est;
        mc.relaxed_forward = true;
        run("modulate/" + std::string(to_string(est)), {logits}, [&] {
            RandomSource r(3);
            return weighted(modulate(logits, cb, mc, r).symbols, 23);
        }, 40);
    }
    Tensor rx = random_tensor({6, 2}, rng);
    run("rayleigh+zf", {rx}, [&] {
        RandomSource r(4);
        auto [faded, real] = transmit_rayleigh({rx, 6, 1.0}, 0.1, r);
        return weighted(zf_equalize(faded, real.csi).symbols, 24);
    });

    // Composed chain: tokenizer -> encoder -> adapter -> modulator (soft
    // path) -> power normalisation -> AWGN -> decoder -> Chamfer.
    const ExperimentConfig cfg = gradient_config();
    const PointTcModel model(cfg);
    const Dataset data = make_synthetic_dataset(2, cfg.n_points, 5);
    ForwardOptions fo;
    fo.snr_db = 5.0;
    fo.gumbel_noise = false;
    fo.relaxed_forward = true;
    std::vector<Tensor> params;
    for (const auto& p : model.parameters().all()) params.push_back(p.tensor);
    run("composed chain", params, [&] {
        RandomSource r(11);  // same channel draw for every evaluation
        return model.forward(data.clouds, fo, r).loss;
    }, 12);

    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = failed == 0 && checked > 0 && first.empty() && secs < kGradRuntimeLimitS;
    o.detail = std::to_string(checked) + " coordinates checked, " + std::to_string(skipped) + " on kinks skipped, " +
               std::to_string(failed) + " failed, worst error/bound " + fmt("%.3g", worst) + ", " +
               fmt("%.1f", secs) + " s";
    if (!first.empty()) o.detail += "; first failure " + first;
    return o;
}

// ---------------------------------------------------------------------------
// 2. Grid exactness
// ---------------------------------------------------------------------------

Outcome criterion_grid() {
    RandomSource rng(77);
    const std::size_t orders[] = {4, 16, 64, 256};
    const Estimator estimators[] = {Estimator::GumbelSoftQuant, Estimator::StraightThrough, Estimator::UniformNoise};
    std::size_t symbols = 0, off_grid = 0;
    double worst_power = 0.0;
    for (int pass = 0; pass < kModulationPasses; ++pass) {
        const Codebook cb = make_codebook(orders[rng.index(4)]);
        ModulatorConfig mc;
        mc.estimator = estimators[rng.index(3)];
        mc.gumbel_noise = rng.uniform(0, 1) < 0.5;
        mc.temperature = rng.uniform(0.2, 3.0);
        const std::size_t rows = 1 + rng.index(12);
        const double span = rng.uniform(0.1, 10.0);
        std::vector<double> v(rows * 2 * cb.levels_per_axis());
        for (auto& x : v) x = rng.uniform(-span, span);
        const SymbolStream s = modulate(Tensor::from({rows, v.size() / rows}, v), cb, mc, rng);
        for (double x : s.symbols.values()) {
            ++symbols;
            if (!cb.contains(x)) ++off_grid;
        }
        const std::size_t count = 1 + rng.index(rows);
        std::vector<double> kept(s.symbols.values().begin(), s.symbols.values().end());
        std::fill(kept.begin() + static_cast<std::ptrdiff_t>(2 * count), kept.end(), 0.0);
        const SymbolStream n = normalize_power({Tensor::from({rows, 2}, kept), count, 1.0});
        worst_power = std::max(worst_power, std::abs(n.mean_power() - 1.0));
    }
    return {off_grid == 0 && worst_power <= kPowerTol,
            std::to_string(kModulationPasses) + " passes, " + std::to_string(symbols) + " coordinates, " +
                std::to_string(off_grid) + " off the grid; worst |mean power - 1| " + fmt("%.2e", worst_power)};
}

// ---------------------------------------------------------------------------
// 3. Metric oracle equivalence
// ---------------------------------------------------------------------------

struct DirectedOracle {
    double e1, e2;
};

DirectedOracle oracle_directed(const PointCloud& from, const PointCloud& to) {
    double s1 = 0.0, s2 = 0.0;
    for (const auto& p : from.points) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t j = 0; j < to.size(); ++j) {
            double d = 0.0;
            for (int k = 0; k < 3; ++k) d += (p[k] - to.points[j][k]) * (p[k] - to.points[j][k]);
            if (d < best) {
                best = d;
                arg = j;
            }
        }
        s1 += best;
        double proj = 0.0, nn = 0.0;
        for (int k = 0; k < 3; ++k) {
            proj += (p[k] - to.points[arg][k]) * to.normals[arg][k];
            nn += to.normals[arg][k] * to.normals[arg][k];
        }
        s2 += proj * proj / nn;
    }
    const double n = static_cast<double>(from.size());
    return {s1 / n, s2 / n};
}

Outcome criterion_metrics() {
    RandomSource rng(31);
    double worst = 0.0;
    auto cloud = [&] {
        PointCloud c;
        for (std::size_t i = 0; i < kMetricPoints; ++i) {
            c.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
            c.normals.push_back({rng.normal(), rng.normal(), rng.normal()});
        }
        return c;
    };
    for (int t = 0; t < kMetricPairs; ++t) {
        const PointCloud a = cloud(), b = cloud();
        const auto ab = oracle_directed(a, b), ba = oracle_directed(b, a);
        worst = std::max(worst, std::abs(chamfer(a, b) - (ab.e1 + ba.e1)));
        worst = std::max(worst, std::abs(d1(a, b) - std::max(ab.e1, ba.e1)));
        worst = std::max(worst, std::abs(d2(a, b) - std::max(ab.e2, ba.e2)));
    }
    PointCloud o, p;
    o.points = {{0, 0, 0}};
    p.points = {{0, 3, 4}};
    const double hand_d1 = d1(o, p), hand_psnr = d1_psnr(o, p, 5.0);
    const bool hand_ok = hand_d1 == 25.0 && std::abs(hand_psnr - 10.0 * std::log10(75.0 / 25.0)) <= kMetricTol &&
                         std::lround(hand_psnr * 1000.0) == 4771;
    return {worst <= kMetricTol && hand_ok,
            std::to_string(kMetricPairs) + " pairs, worst deviation " + fmt("%.2e", worst) + "; hand case D1 = " +
                fmt("%.1f", hand_d1) + ", PSNR = " + fmt("%.6f", hand_psnr) + " dB"};
}

// ---------------------------------------------------------------------------
// 4. Channel algebra
// ---------------------------------------------------------------------------

Outcome criterion_channel() {
    RandomSource rng(41);
    std::vector<double> v(64 * 2);
    for (auto& x : v) x = rng.uniform(-1, 1);
    const SymbolStream s = normalize_power({Tensor::from({64, 2}, v), 64, 1.0});

    double zf_err = 0.0;
    for (int t = 0; t < 100; ++t) {
        auto [rx, real] = transmit_rayleigh(s, 0.0, rng);
        const SymbolStream eq = zf_equalize(rx, real.csi);
        for (std::size_t i = 0; i < s.symbols.numel(); ++i) zf_err = std::max(zf_err, std::abs(eq.symbols[i] - s.symbols[i]));
    }

    double snr_err = 0.0;
    for (double snr = -5.0; snr <= 30.0; snr += 0.5) {
        const double p_signal = rng.uniform(0.1, 10.0);
        snr_err = std::max(snr_err, std::abs(snr_db(p_signal, noise_power_for_snr(snr, p_signal)) - snr));
    }

    const double p_noise = noise_power_for_snr(5.0, 1.0);
    std::vector<double> zeros(kChannelSamples * 2, 0.0);
    const SymbolStream silent{Tensor::from({static_cast<std::size_t>(kChannelSamples), 2}, zeros),
                              static_cast<std::size_t>(kChannelSamples), 1.0};
    const SymbolStream noisy = transmit_awgn(silent, p_noise, rng);
    double measured = 0.0;
    for (double x : noisy.symbols.values()) measured += x * x;
    measured /= kChannelSamples;
    const double noise_rel = std::abs(measured / p_noise - 1.0);

    double h2 = 0.0;
    for (int i = 0; i < kChannelSamples; ++i) h2 += std::norm(draw_rayleigh_gain(rng));
    h2 /= kChannelSamples;
    const double h_rel = std::abs(h2 - 1.0);

    return {zf_err <= kZfTol && snr_err <= kSnrTol && noise_rel <= kMonteCarloRelTol && h_rel <= kMonteCarloRelTol,
            "ZF error " + fmt("%.2e", zf_err) + ", SNR error " + fmt("%.2e", snr_err) + ", noise power off by " +
                fmt("%.2f%%", 100 * noise_rel) + ", E|h|^2 = " + fmt("%.4f", h2)};
}

// ---------------------------------------------------------------------------
// 5. Detach-trick contract
// ---------------------------------------------------------------------------

Outcome criterion_detach() {
    RandomSource rng(51);
    const Codebook cb = make_codebook(16);
    ParameterSet ps;
    const Linear head = Linear::create(ps, "head", 6, 8, rng);
    const Tensor x = Tensor::from({10, 6}, [&] {
        std::vector<double> v(60);
        for (auto& e : v) e = rng.uniform(-2, 2);
        return v;
    }());
    ModulatorConfig hard;
    hard.gumbel_noise = true;
    ModulatorConfig relaxed = hard;
    relaxed.relaxed_forward = true;

    auto grads = [&](const ModulatorConfig& mc, bool sever) {
        ps.zero_grad();
        RandomSource r(8);
        Tensor out = modulate(head(x), cb, mc, r).symbols;
        if (sever) out = straight_through(std::vector<double>(out.values().begin(), out.values().end()), out.detach());
        weighted(out, 5).backward();
        std::vector<double> g;
        for (const auto& p : ps.all())
            if (p.tensor.has_grad()) g.insert(g.end(), p.tensor.grad().begin(), p.tensor.grad().end());
        return g;
    };

    // Forward: equals nearest-level quantisation of the relaxed position.
    RandomSource r1(8), r2(8);
    const Tensor y = head(x);
    const SymbolStream s = modulate(y, cb, hard, r1);
    const Tensor noise = gumbel_noise(r2, {10, 8});
    std::size_t forward_mismatch = 0;
    for (std::size_t row = 0; row < 10; ++row)
        for (std::size_t axis = 0; axis < 2; ++axis) {
            double w[4], tot = 0.0, zpos = 0.0;
            for (std::size_t k = 0; k < 4; ++k) tot += (w[k] = std::exp((y.at(row, 4 * axis + k) + noise.at(row, 4 * axis + k)) / hard.temperature));
            for (std::size_t k = 0; k < 4; ++k) zpos += w[k] / tot * cb.levels[k];
            if (s.symbols.at(row, axis) != hard_quantize(zpos, cb)) ++forward_mismatch;
        }

    // Backward: identical to the soft composition; that composition matches
    // finite differences.
    const auto g_hard = grads(hard, false), g_soft = grads(relaxed, false), g_cut = grads(hard, true);
    double diff = 0.0;
    for (std::size_t i = 0; i < g_hard.size(); ++i) diff = std::max(diff, std::abs(g_hard[i] - g_soft[i]));
    std::vector<Tensor> inputs;
    for (const auto& p : ps.all()) inputs.push_back(p.tensor);
    const auto fd = gradcheck::check(inputs, [&] {
        RandomSource r(8);
        return weighted(modulate(head(x), cb, relaxed, r).symbols, 5);
    }, 40, 9);
    double cut = 0.0;
    for (double g : g_cut) cut = std::max(cut, std::abs(g));

    const bool nonzero = std::any_of(g_hard.begin(), g_hard.end(), [](double g) { return g != 0.0; });
    return {forward_mismatch == 0 && diff == 0.0 && fd.ok() && cut == 0.0 && nonzero && g_hard.size() == g_soft.size(),
            std::to_string(forward_mismatch) + " forward mismatches; hard vs soft gradient max diff " +
                fmt("%.1e", diff) + "; soft path vs finite differences " + (fd.ok() ? "ok" : "FAILED " + fd.first_failure) +
                "; severed path max |grad| " + fmt("%.1e", cut)};
}

// ---------------------------------------------------------------------------
// 6-9. Training runs
// ---------------------------------------------------------------------------

struct TrendRun {
    double psnr0 = 0.0, psnr15 = 0.0;
};

std::vector<EvalRow> eval_test(const PointTcModel& m, const Dataset& d, std::vector<double> snrs) {
    EvalOptions eo;
    eo.snr_db = std::move(snrs);
    eo.trials = kEvalTrials;
    eo.seed = 1234;
    return evaluate(m, d.subset(d.test), eo);
}

std::unique_ptr<PointTcModel> train_quiet(ExperimentConfig cfg, const Dataset& data, const std::string& tag) {
    const auto t0 = Clock::now();
    auto r = train(cfg, data);
    std::cout << "  trained " << tag << " (" << cfg.epochs << " epochs, final Chamfer "
              << fmt("%.4f", r.record.epochs.back().chamfer) << ", " << fmt("%.0f", seconds_since(t0)) << " s)"
              << std::endl;
    return std::move(r.model);
}

Outcome criterion_desk_training(const Dataset& data) {
    ExperimentConfig cfg = desk_config();
    cfg.epochs = kDeskEpochs;
    const auto t0 = Clock::now();
    const auto r = train(cfg, data);
    const double secs = seconds_since(t0);
    const double first = r.record.epochs.front().chamfer, last = r.record.epochs.back().chamfer;
    return {last <= kChamferRatio * first && secs <= kTrainRuntimeLimitS,
            "epoch 1 Chamfer " + fmt("%.4f", first) + ", epoch " + std::to_string(kDeskEpochs) + " Chamfer " +
                fmt("%.4f", last) + " (ratio " + fmt("%.3f", last / first) + "), " + fmt("%.0f", secs) + " s"};
}

}  // namespace

int main() {
    std::cout.setf(std::ios::unitbuf);
    const auto t_all = Clock::now();

    report(1, criterion_gradients());
    report(2, criterion_grid());
    report(3, criterion_metrics());
    report(4, criterion_channel());
    report(5, criterion_detach());

    const ExperimentConfig desk = desk_config();
    const Dataset data = make_synthetic_dataset(desk.dataset_size, desk.n_points, desk.data_seed);
    report(6, criterion_desk_training(data));

    // 7: adapter trained over the SNR window vs the same network at fixed 10 dB.
    // 8: lambda sweep; the default lambda run is shared with 7.
    std::size_t trend_votes = 0, rate_votes = 0;
    bool prefix_ok = true;
    std::ostringstream trend_detail, rate_detail;
    for (std::uint64_t seed : kSeeds) {
        ExperimentConfig range = desk;
        range.epochs = kTrendEpochs;
        range.seed = seed;
        ExperimentConfig fixed = range;
        fixed.snr_mode = SnrMode::Fixed;
        fixed.snr_fixed = 10.0;
        const auto m_range = train_quiet(range, data, "range seed " + std::to_string(seed));
        const auto m_fixed = train_quiet(fixed, data, "fixed-10dB seed " + std::to_string(seed));
        const auto e_range = eval_test(*m_range, data, {0.0, 15.0});
        const auto e_fixed = eval_test(*m_fixed, data, {0.0});
        const bool up = e_range[1].d2_psnr >= e_range[0].d2_psnr;
        const bool robust = e_range[0].d2_psnr >= e_fixed[0].d2_psnr;
        trend_votes += (up && robust) ? 1 : 0;
        trend_detail << " seed " << seed << ": " << fmt("%.2f", e_range[0].d2_psnr) << "->"
                     << fmt("%.2f", e_range[1].d2_psnr) << " dB vs fixed " << fmt("%.2f", e_fixed[0].d2_psnr) << ";";

        std::vector<double> sends;
        for (double lambda : {0.0, 2e-4, 2e-3}) {
            std::unique_ptr<PointTcModel> owned;
            const PointTcModel* m = m_range.get();
            if (lambda != range.lambda) {
                ExperimentConfig c = range;
                c.lambda = lambda;
                owned = train_quiet(c, data, "lambda " + fmt("%g", lambda) + " seed " + std::to_string(seed));
                m = owned.get();
            }
            sends.push_back(eval_test(*m, data, {kRateSnrDb}).front().mean_n_send);
            // Mask shape on every test cloud.
            RandomSource r(seed);
            for (const auto& c : data.subset(data.test)) {
                const Transmission tx = evaluate_one(*m, c, kRateSnrDb, std::nullopt, true, r);
                bool seen_zero = false;
                for (std::size_t i = 0; i < tx.rate.row_mask.numel(); ++i) {
                    const double k = tx.rate.row_mask[i];
                    if (k == 0.0) seen_zero = true;
                    if ((k == 1.0 && seen_zero) || (k != 0.0 && k != 1.0)) prefix_ok = false;
                }
                const SymbolStream head{slice_rows(tx.received.symbols, 0, tx.rate.n_send()).detach(),
                                        tx.rate.n_send(), 1.0};
                const SymbolStream padded = zero_pad(head, desk.n_mod);
                for (std::size_t i = 0; i < padded.symbols.numel(); ++i) {
                    const double expect = i < 2 * tx.rate.n_send() ? tx.received.symbols[i] : 0.0;
                    if (padded.symbols[i] != expect) prefix_ok = false;
                }
            }
        }
        const bool monotone = sends[0] >= sends[1] && sends[1] >= sends[2];
        rate_votes += monotone ? 1 : 0;
        rate_detail << " seed " << seed << ": N_send " << fmt("%.2f", sends[0]) << " / " << fmt("%.2f", sends[1])
                    << " / " << fmt("%.2f", sends[2]) << ";";
    }
    // Sensitivity probe, reported but not gating: at the swept lambdas the rate
    // term is small next to the Chamfer term, so ties are expected.
    {
        ExperimentConfig c = desk;
        c.epochs = kTrendEpochs;
        c.seed = kSeeds[0];
        c.lambda = kProbeLambda;
        const auto m = train_quiet(c, data, "lambda " + fmt("%g", kProbeLambda) + " probe");
        rate_detail << " probe lambda " << fmt("%g", kProbeLambda) << " seed " << kSeeds[0] << ": N_send "
                    << fmt("%.2f", eval_test(*m, data, {kRateSnrDb}).front().mean_n_send) << ";";
    }
    report(7, {trend_votes >= 2, std::to_string(trend_votes) + "/3 seeds hold both orderings (test D2-PSNR at 0 and 15 dB)" +
                                     trend_detail.str()});
    report(8, {rate_votes >= 2 && prefix_ok,
               std::to_string(rate_votes) + "/3 seeds non-increasing in lambda {0, 2e-4, 2e-3} at " +
                   fmt("%.0f", kRateSnrDb) + " dB;" + rate_detail.str() + (prefix_ok ? " masks are prefixes, padding exact" : " MASK/PADDING VIOLATION")});

    {
        ExperimentConfig c = desk;
        c.epochs = kCompareEpochs;
        EvalOptions eo;
        eo.trials = 2;
        eo.seed = 99;
        const auto result = compare_estimators(c, data, eo);
        const std::string path = "acceptance_estimators.csv";
        {
            std::ofstream os(path);
            write_eval_csv(os, result.rows);
        }
        std::ifstream in(path);
        std::string line, header;
        std::getline(in, header);
        std::size_t n_rows = 0;
        bool finite = true;
        std::vector<std::string> labels;
        while (std::getline(in, line)) {
            ++n_rows;
            labels.push_back(line.substr(0, line.find(',')));
            if (line.find("nan") != std::string::npos) finite = false;
        }
        const bool labels_ok = labels.size() == 12 && labels[0] == "gumbel-softq" && labels[4] == "ste" &&
                               labels[8] == "uniform-noise";
        const bool same_seed = result.records.size() == 3 &&
                               result.records[0].dataset_hash == result.records[2].dataset_hash;
        std::ostringstream d;
        d << n_rows << " rows written to " << path << " (3 estimators x 4 SNRs); D2-PSNR at 10 dB:";
        for (std::size_t i = 0; i < result.rows.size(); ++i)
            if (result.rows[i].snr_db == 10.0) d << ' ' << result.rows[i].label << ' ' << fmt("%.2f", result.rows[i].d2_psnr);
        report(9, {n_rows == 12 && finite && labels_ok && same_seed && header.rfind("label,snr_db", 0) == 0, d.str()});
    }

    std::size_t passed = 0;
    for (const auto& [id, o] : g_results) passed += o.pass ? 1 : 0;
    std::cout << passed << "/" << g_results.size() << " criteria passed in " << fmt("%.0f", seconds_since(t_all))
              << " s" << std::endl;
    return passed == g_results.size() ? 0 : 1;
}
