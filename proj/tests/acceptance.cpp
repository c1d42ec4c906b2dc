// Acceptance suite: one binary, one pass/fail line per criterion.
// Run via ctest (test name "acceptance") or directly; exits non-zero if any
// criterion fails.

#include "lobcast/labeling.hpp"
#include "lobcast/rng.hpp"
#include "lobcast/synthetic.hpp"
#include "lobcast/tcn.hpp"
#include "lobcast/training.hpp"
#include "lobcast/walkforward.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

using namespace lobcast;

namespace {

struct Check {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

Tensor3 random_tensor(int b, int t, int c, uint64_t seed) {
    Tensor3 x(b, t, c);
    Rng rng(seed);
    for (double& v : x.data) v = rng.normal();
    return x;
}

// --------------------------------------------------------------------------
// 1. Receptive field formula + full-window influence probe.
// --------------------------------------------------------------------------
Check criterion_receptive_field() {
    Check c;
    c.require(receptive_field(2, 6) == 127, "receptive_field(2,6) != 127");

    TcnConfig cfg;  // defaults: T=100, F=40, 6 levels, 32 channels
    cfg.dropout_rate = 0.0;
    const TcnParams params = init_params(cfg, 101);
    const Tensor3 x = random_tensor(1, cfg.window_length, cfg.input_channels, 55);
    const Matrix base = tcn_forward(x, params, cfg, RunMode::eval, 0);
    for (int t = 0; t < cfg.window_length && c.ok; ++t) {
        Tensor3 bumped = x;
        for (int ch = 0; ch < cfg.input_channels; ++ch) bumped.at(0, t, ch) += 1.0;
        const Matrix probe = tcn_forward(bumped, params, cfg, RunMode::eval, 0);
        double delta = 0.0;
        for (int k = 0; k < cfg.num_classes; ++k) delta += std::abs(probe.at(0, k) - base.at(0, k));
        c.require(delta > 0.0, "timestep " + std::to_string(t) + " has no influence on logits");
    }
    return c;
}

// --------------------------------------------------------------------------
// 2. Causality: earlier outputs are bitwise unchanged by later inputs.
// --------------------------------------------------------------------------
Check criterion_causality() {
    Check c;
    Rng meta(7001);
    for (int pair = 0; pair < 50 && c.ok; ++pair) {
        TcnConfig cfg;
        cfg.kernel_size = 2 + static_cast<int>(meta.uniform_int(2));
        cfg.dilation_levels = 3;
        cfg.channels_per_block = 3 + static_cast<int>(meta.uniform_int(4));
        cfg.input_channels = 2 + static_cast<int>(meta.uniform_int(4));
        const int max_window = std::min(receptive_field(cfg.kernel_size, cfg.dilation_levels), 24);
        cfg.window_length = 8 + static_cast<int>(meta.uniform_int(max_window - 7));
        cfg.dropout_rate = 0.0;
        const TcnParams params = init_params(cfg, 9000 + pair);
        const Tensor3 x = random_tensor(1, cfg.window_length, cfg.input_channels, 800 + pair);

        TcnTrace base;
        tcn_forward_traced(x, params, cfg, RunMode::eval, 0, base);
        for (int t = 0; t < cfg.window_length && c.ok; ++t) {
            Tensor3 bumped = x;
            bumped.at(0, t, 0) += 0.731;
            TcnTrace probe;
            tcn_forward_traced(bumped, params, cfg, RunMode::eval, 0, probe);
            // block_inputs[i+1] is the output of block i; the last entry is
            // the network's final sequence.
            for (size_t blk = 1; blk < base.block_inputs.size() && c.ok; ++blk) {
                const Tensor3& a = base.block_inputs[blk];
                const Tensor3& b = probe.block_inputs[blk];
                for (int t2 = 0; t2 < t && c.ok; ++t2)
                    for (int ch = 0; ch < a.channels; ++ch)
                        c.require(a.at(0, t2, ch) == b.at(0, t2, ch),
                                  "pair " + std::to_string(pair) + " block " +
                                      std::to_string(blk - 1) + ": output at t=" +
                                      std::to_string(t2) + " changed by input at t=" +
                                      std::to_string(t));
            }
        }
    }
    return c;
}

// --------------------------------------------------------------------------
// 3. Analytic gradients vs central finite differences, 20 random tiny
//    configurations.
// --------------------------------------------------------------------------
Check criterion_gradients() {
    Check c;
    Rng meta(31337);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        TcnConfig cfg;
        cfg.kernel_size = 2 + static_cast<int>(meta.uniform_int(2));
        cfg.dilation_levels = 1 + static_cast<int>(meta.uniform_int(4));
        cfg.channels_per_block = 2 + static_cast<int>(meta.uniform_int(4));
        cfg.input_channels = 2 + static_cast<int>(meta.uniform_int(5));
        const int rf = receptive_field(cfg.kernel_size, cfg.dilation_levels);
        cfg.window_length = 2 + static_cast<int>(meta.uniform_int(std::min(rf, 18) - 1));
        cfg.dropout_rate = trial % 2 == 1 ? 0.25 : 0.0;
        const int batch = 1 + static_cast<int>(meta.uniform_int(3));

        TcnParams params = init_params(cfg, 500 + trial);
        // Perturb every parameter (biases included) so no pre-activation sits
        // exactly on the relu kink, where two-sided differences are invalid.
        Rng jitter(900 + trial);
        for (auto* arr : param_arrays(params))
            for (double& v : *arr) v += 0.1 * jitter.normal();
        Tensor3 x = random_tensor(batch, cfg.window_length, cfg.input_channels, 600 + trial);
        std::vector<int> targets(batch);
        for (int b = 0; b < batch; ++b) targets[b] = static_cast<int>(meta.uniform_int(3));
        const uint64_t seed = 700 + trial;

        const auto res = backward(x, targets, params, cfg, seed);
        const auto ps = param_arrays(params);
        const auto gs = grad_arrays(res.grads);
        const double h = 1e-5;
        for (size_t a = 0; a < ps.size(); ++a) {
            for (size_t i = 0; i < ps[a]->size(); ++i) {
                const double orig = (*ps[a])[i];
                (*ps[a])[i] = orig + h;
                const Matrix lp = tcn_forward(x, params, cfg, RunMode::train, seed);
                const double up = softmax_cross_entropy(lp, targets).loss;
                (*ps[a])[i] = orig - h;
                const Matrix lm = tcn_forward(x, params, cfg, RunMode::train, seed);
                const double dn = softmax_cross_entropy(lm, targets).loss;
                (*ps[a])[i] = orig;
                const double fd = (up - dn) / (2.0 * h);
                const double an = (*gs[a])[i];
                worst = std::max(worst,
                                 std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
            }
        }
    }
    c.require(worst < 1e-4, "max relative gradient error " + std::to_string(worst));
    c.detail = "max relative error " + std::to_string(worst);
    return c;
}

// --------------------------------------------------------------------------
// 4. Labeling matches brute force on 1000 random series; scale invariance.
// --------------------------------------------------------------------------
Check criterion_labeling() {
    Check c;
    for (uint64_t trial = 0; trial < 1000 && c.ok; ++trial) {
        Rng rng(40'000 + trial);
        const int n = 40 + static_cast<int>(rng.uniform_int(200));
        const int k = 1 + static_cast<int>(rng.uniform_int(12));
        std::vector<double> mids(n);
        double p = 50.0 + rng.uniform(0.0, 100.0);
        for (int i = 0; i < n; ++i) {
            p += 0.08 * rng.normal();
            mids[i] = p;
        }
        const LabelParams params{k, 0.002};
        const auto got = label_series(mids, params);
        const auto want = oracle::brute_force_label_series(mids, k, 0.002);
        c.require(got.size() == want.size(), "label count mismatch");
        for (size_t i = 0; i < got.size() && c.ok; ++i) {
            c.require(got[i].first == want[i].first && got[i].second == want[i].second,
                      "label mismatch at trial " + std::to_string(trial));
        }
        for (const double scale : {1e-3, 0.5, 3.0, 1e4}) {
            std::vector<double> scaled(mids.size());
            for (size_t i = 0; i < mids.size(); ++i) scaled[i] = mids[i] * scale;
            const auto rescaled = label_series(scaled, params);
            for (size_t i = 0; i < got.size() && c.ok; ++i)
                c.require(rescaled[i].second == got[i].second,
                          "scale invariance broken at trial " + std::to_string(trial));
        }
    }
    return c;
}

// --------------------------------------------------------------------------
// 5. Convolution kernel vs naive reference on 100 randomized shapes.
// --------------------------------------------------------------------------
Check criterion_kernel() {
    Check c;
    Rng meta(555);
    for (int trial = 0; trial < 100 && c.ok; ++trial) {
        const int b = 1 + static_cast<int>(meta.uniform_int(4));
        const int t = 2 + static_cast<int>(meta.uniform_int(31));
        const int cin = 1 + static_cast<int>(meta.uniform_int(8));
        const int cout = 1 + static_cast<int>(meta.uniform_int(8));
        const int k = 2 + static_cast<int>(meta.uniform_int(2));
        const int dilation = 1 << meta.uniform_int(4);
        const Tensor3 x = random_tensor(b, t, cin, 10'000 + trial);
        ConvParams p(k, cin, cout);
        Rng wrng(20'000 + trial);
        for (double& v : p.weights) v = wrng.normal();
        for (double& v : p.bias) v = wrng.normal() * 0.3;
        const Tensor3 got = causal_conv1d(x, p, dilation);
        const Tensor3 want = oracle::naive_causal_conv(x, p, dilation);
        for (size_t i = 0; i < got.data.size() && c.ok; ++i)
            c.require(std::abs(got.data[i] - want.data[i]) <=
                          1e-12 * std::max(1.0, std::abs(want.data[i])),
                      "kernel mismatch at trial " + std::to_string(trial));
    }
    return c;
}

// --------------------------------------------------------------------------
// 6. Learnability on synthetic data: s=1 pooled accuracy >= 0.90; s=0 within
//    3 sigma of the majority rate.
// --------------------------------------------------------------------------
WalkForwardConfig learnability_config() {
    WalkForwardConfig cfg;
    cfg.train_days = 2;
    cfg.depth = 10;
    cfg.keep_fraction = 0.33;
    cfg.tcn.channels_per_block = 16;
    cfg.tcn.dropout_rate = 0.1;
    cfg.train.max_epochs = 6;
    cfg.seed = 1;
    return cfg;
}

Check criterion_learnability() {
    Check c;
    SyntheticConfig sc;
    sc.days = 4;
    sc.snapshots_per_day = 20'000;
    sc.depth = 10;

    sc.signal_strength = 1.0;
    {
        const auto series = generate_synthetic(sc, 42);
        const auto report = run_walkforward(series, learnability_config());
        const double acc = report.pooled_report.accuracy;
        c.require(acc >= 0.90, "s=1 pooled accuracy " + std::to_string(acc) + " < 0.90");
        c.detail = "s=1 acc " + std::to_string(acc);
    }

    sc.signal_strength = 0.0;
    {
        const auto series = generate_synthetic(sc, 42);
        WalkForwardConfig cfg = learnability_config();
        // No class rebalancing here: the learned priors must match the
        // natural distribution for the majority-rate comparison to be exact.
        cfg.keep_fraction = 1.0;
        cfg.train.max_epochs = 4;
        const auto report = run_walkforward(series, cfg);
        const auto& cm = report.pooled_confusion;
        int64_t best = 0;
        for (int k = 0; k < kNumClasses; ++k) best = std::max(best, cm.support(k));
        const double p = static_cast<double>(best) / cm.total();
        const double sigma = std::sqrt(p * (1.0 - p) / cm.total());
        const double dev = std::abs(report.pooled_report.accuracy - p);
        c.require(dev <= 3.0 * sigma, "s=0 accuracy deviates from majority rate by " +
                                          std::to_string(dev) + " > 3 sigma = " +
                                          std::to_string(3.0 * sigma));
        c.detail += ", s=0 dev " + std::to_string(dev) + " (3 sigma " +
                    std::to_string(3.0 * sigma) + ")";
    }
    return c;
}

// --------------------------------------------------------------------------
// 7. Depth sweep: signal lives in the top 2 levels, so no gain past depth 2.
// --------------------------------------------------------------------------
Check criterion_depth_sweep() {
    Check c;
    SyntheticConfig sc;
    sc.days = 4;
    sc.snapshots_per_day = 5'000;
    sc.depth = 50;
    sc.signal_strength = 1.0;
    const auto series = generate_synthetic(sc, 42);
    const auto result = sweep(SweepAxis::depth, {2, 10, 50}, series, learnability_config());
    const double base = result.rows[0].pooled_accuracy;
    c.detail = "acc(2) " + std::to_string(base);
    for (size_t i = 1; i < result.rows.size(); ++i) {
        const auto& row = result.rows[i];
        c.detail += ", acc(" + std::to_string(static_cast<int>(row.axis_value)) + ") " +
                    std::to_string(row.pooled_accuracy);
        c.require(row.pooled_accuracy <= base + 0.02,
                  "depth " + std::to_string(static_cast<int>(row.axis_value)) + " gains " +
                      std::to_string(row.pooled_accuracy - base) + " over depth 2");
    }
    return c;
}

// --------------------------------------------------------------------------
// 8. Callback semantics on a scripted validation-loss sequence.
// --------------------------------------------------------------------------
Check criterion_callbacks() {
    Check c;
    LrController ctl;
    double lr = 0.01;
    int first_reduction = 0, stopped_at = 0;
    for (int epoch = 1; epoch <= 10 && stopped_at == 0; ++epoch) {
        const auto o = ctl.observe(1.0, lr, 0.5, 2, 4);
        if (o.reduced_lr && first_reduction == 0) first_reduction = epoch;
        if (o.stop) stopped_at = epoch;
    }
    c.require(first_reduction == 3,
              "lr reduced at epoch " + std::to_string(first_reduction) + ", expected 3");
    c.require(stopped_at == 5, "stopped at epoch " + std::to_string(stopped_at) + ", expected 5");
    c.require(lr == 0.01 * std::pow(0.5, ctl.plateau_events), "lr != initial * 0.5^events");

    LrController improving;
    double lr2 = 0.01;
    for (int epoch = 1; epoch <= 8; ++epoch) {
        const auto o = improving.observe(1.0 / epoch, lr2, 0.5, 2, 4);
        c.require(o.improved && !o.reduced_lr && !o.stop,
                  "spurious callback on an improving sequence");
    }
    c.require(lr2 == 0.01, "lr changed on an improving sequence");
    return c;
}

// --------------------------------------------------------------------------
// 9. Temporal hygiene across every split configuration.
// --------------------------------------------------------------------------
Check criterion_hygiene() {
    Check c;
    SyntheticConfig sc;
    sc.days = 9;
    sc.snapshots_per_day = 600;
    sc.depth = 3;
    sc.signal_strength = 1.0;
    const auto series = generate_synthetic(sc, 13);
    const auto data = prepare_dataset(series, 3, LabelParams{}, 32);
    c.require(data.days.size() == 8, "expected 8 usable days from a 9-day series");

    std::vector<int64_t> usable;
    for (const auto& d : data.days) usable.push_back(d.day_id);

    const auto one = make_splits(usable, 7);
    c.require(one.size() == 1, "train_days=7 over 8 usable days must yield exactly 1 split");

    for (int train_days = 1; train_days <= 7 && c.ok; ++train_days) {
        for (const auto& split : make_splits(usable, train_days)) {
            int64_t max_train_ts = INT64_MIN, min_test_ts = INT64_MAX;
            for (const auto& day : data.days) {
                const bool in_train = std::find(split.train_day_ids.begin(),
                                                split.train_day_ids.end(),
                                                day.day_id) != split.train_day_ids.end();
                if (in_train)
                    max_train_ts = std::max(max_train_ts, day.rows.timestamps_ms.back());
                if (day.day_id == split.test_day_id)
                    min_test_ts = day.rows.timestamps_ms.front();
            }
            c.require(max_train_ts < min_test_ts,
                      "split with test day " + std::to_string(split.test_day_id) +
                          " overlaps its training window");
        }
    }
    return c;
}

// --------------------------------------------------------------------------
// 10. Determinism: identical config and seed give byte-identical reports.
// --------------------------------------------------------------------------
Check criterion_determinism() {
    Check c;
    SyntheticConfig sc;
    sc.days = 4;
    sc.snapshots_per_day = 800;
    sc.depth = 3;
    sc.signal_strength = 1.0;
    const auto series = generate_synthetic(sc, 23);

    WalkForwardConfig cfg;
    cfg.train_days = 1;
    cfg.depth = 3;
    cfg.keep_fraction = 0.5;
    cfg.tcn.window_length = 32;
    cfg.tcn.dilation_levels = 5;
    cfg.tcn.channels_per_block = 6;
    cfg.tcn.dropout_rate = 0.1;
    cfg.train.batch_size = 64;
    cfg.train.max_epochs = 2;
    cfg.seed = 5;

    const std::string a = report_to_json(run_walkforward(series, cfg));
    const std::string b = report_to_json(run_walkforward(series, cfg));
    c.require(a == b, "reports differ between identical reruns");
    return c;
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Check()> run;
    };
    const std::vector<Criterion> criteria = {
        {"receptive field formula and full-window influence", criterion_receptive_field},
        {"causality of every block and the stacked network", criterion_causality},
        {"analytic vs finite-difference gradients", criterion_gradients},
        {"labeling brute-force oracle and scale invariance", criterion_labeling},
        {"causal convolution vs naive reference", criterion_kernel},
        {"learnability: planted signal and null signal", criterion_learnability},
        {"depth sweep gains nothing past the planted levels", criterion_depth_sweep},
        {"lr-plateau and early-stop callback semantics", criterion_callbacks},
        {"temporal hygiene of every split", criterion_hygiene},
        {"byte-identical reports for identical config and seed", criterion_determinism},
    };

    int failures = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Check result;
        try {
            result = criteria[i].run();
        } catch (const std::exception& e) {
            result.ok = false;
            result.detail = std::string("exception: ") + e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("[%s] criterion %zu: %s (%.1fs)%s%s\n", result.ok ? "PASS" : "FAIL", i + 1,
                    criteria[i].name, secs, result.detail.empty() ? "" : " -- ",
                    result.detail.c_str());
        std::fflush(stdout);
        if (!result.ok) ++failures;
    }
    if (failures > 0) {
        std::printf("%d of %zu criteria FAILED\n", failures, criteria.size());
        return 1;
    }
    std::printf("all %zu criteria passed\n", criteria.size());
    return 0;
}
