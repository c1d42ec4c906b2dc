// lobcast command-line interface: synthetic data generation, labeling,
// training, walk-forward studies, and hyperparameter sweeps.
//
// Exit codes: 0 success, 1 internal error, 2 invalid input or config.

#include "lobcast/digest.hpp"
#include "lobcast/labeling.hpp"
#include "lobcast/lob_data.hpp"
#include "lobcast/log.hpp"
#include "lobcast/synthetic.hpp"
#include "lobcast/version.hpp"
#include "lobcast/walkforward.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lobcast;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open for writing: " + path);
    f << content;
    if (!f) throw ConfigError("write failed: " + path);
}

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

// One manifest per run: command, config echo, seed, input digests, artifact
// paths and digests, tool version, wall-clock timings.
class ManifestWriter {
public:
    ManifestWriter(std::string command, const std::string& out_dir)
        : out_dir_(out_dir) {
        manifest_["command"] = std::move(command);
        manifest_["tool_version"] = kToolVersion;
        manifest_["inputs"] = json::object();
        manifest_["artifacts"] = json::object();
    }

    void set_seed(uint64_t seed) { manifest_["seed"] = seed; }
    void set_config(json config) { manifest_["config"] = std::move(config); }

    void add_input(const std::string& name, const std::string& path) {
        manifest_["inputs"][name] = {{"path", path}, {"digest", digest_file(path)}};
    }

    void add_artifact(const std::string& name, const std::string& path) {
        manifest_["artifacts"][name] = {{"path", path}, {"digest", digest_file(path)}};
    }

    void finish(double seconds) {
        manifest_["timings"] = {{"total_seconds", seconds}};
        write_file((fs::path(out_dir_) / "manifest.json").string(), manifest_.dump(2) + "\n");
    }

private:
    std::string out_dir_;
    json manifest_;
};

std::string out_path(const std::string& out_dir, const std::string& name) {
    return (fs::path(out_dir) / name).string();
}

void ensure_out_dir(const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw ConfigError("cannot create out dir '" + out_dir + "': " + ec.message());
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

int cmd_synth(const std::string& config_path, std::optional<uint64_t> seed_override,
              const std::string& out_dir, const std::string& out_name) {
    Stopwatch timer;
    ensure_out_dir(out_dir);
    SyntheticConfig cfg = parse_synthetic_config_json(read_file(config_path));
    if (seed_override) cfg.seed = *seed_override;

    const SnapshotSeries series = generate_synthetic(cfg, cfg.seed);
    const std::string csv_path = out_path(out_dir, out_name);
    write_snapshot_csv_file(series, csv_path);
    std::cout << "wrote " << series.snapshots.size() << " snapshots (" << series.days.size()
              << " days, depth " << cfg.depth << ") to " << csv_path << "\n";

    ManifestWriter manifest("synth", out_dir);
    manifest.set_seed(cfg.seed);
    manifest.set_config({{"days", cfg.days},
                         {"snapshots_per_day", cfg.snapshots_per_day},
                         {"depth", cfg.depth},
                         {"signal_strength", cfg.signal_strength},
                         {"seed", cfg.seed}});
    manifest.add_input("config", config_path);
    manifest.add_artifact("snapshots", csv_path);
    manifest.finish(timer.seconds());
    return 0;
}

// ---------------------------------------------------------------------------
// label
// ---------------------------------------------------------------------------

constexpr char kWindowStoreMagic[8] = {'L', 'O', 'B', 'W', 'I', 'N', '0', '1'};

int cmd_label(const std::string& data_path, int k, double alpha, double keep_fraction,
              uint64_t seed, int window_length, const std::string& out_dir) {
    Stopwatch timer;
    ensure_out_dir(out_dir);
    const SnapshotSeries series = read_snapshot_csv_file(data_path);
    const int depth = series.snapshots.front().depth();
    const LabelParams params{k, alpha};
    const PreparedData data = prepare_dataset(series, depth, params, window_length);

    std::vector<SampleRef> samples;
    for (size_t d = 0; d < data.days.size(); ++d) {
        const auto day_refs = day_samples(data, static_cast<int>(d));
        samples.insert(samples.end(), day_refs.begin(), day_refs.end());
    }
    int64_t before[kNumClasses] = {0, 0, 0};
    for (const auto& s : samples) ++before[class_index(s.label)];

    const auto kept = downsample_stable(samples, keep_fraction, seed,
                                        [](const SampleRef& s) { return s.label; });
    int64_t after[kNumClasses] = {0, 0, 0};
    for (const auto& s : kept) ++after[class_index(s.label)];

    std::printf("class histogram (before -> after downsampling, keep_fraction=%g):\n",
                keep_fraction);
    for (int c = 0; c < kNumClasses; ++c)
        std::printf("  %-6s %10lld -> %10lld\n", movement_name(static_cast<Movement>(c)),
                    static_cast<long long>(before[c]), static_cast<long long>(after[c]));
    std::printf("  total  %10lld -> %10lld\n",
                static_cast<long long>(before[0] + before[1] + before[2]),
                static_cast<long long>(after[0] + after[1] + after[2]));

    // Manifest CSV: global series row index, end timestamp, class.
    const std::string labels_path = out_path(out_dir, "labels.csv");
    {
        std::ofstream f(labels_path, std::ios::binary);
        f << "t,end_timestamp_ms,class_index\n";
        for (const auto& s : kept) {
            // Day 1 of the series is consumed by normalization, hence day + 1.
            const DaySpan& span = series.days[s.day + 1];
            f << (span.start + s.t) << "," << s.end_timestamp_ms << "," << class_index(s.label)
              << "\n";
        }
    }

    // Window tensor store: magic, count, window_length, cols, then one
    // window_length x cols float64 block per sample, little-endian.
    const std::string windows_path = out_path(out_dir, "windows.bin");
    {
        std::ofstream f(windows_path, std::ios::binary);
        f.write(kWindowStoreMagic, 8);
        const int64_t count = static_cast<int64_t>(kept.size());
        const int32_t wl = window_length, cols = data.feature_cols;
        f.write(reinterpret_cast<const char*>(&count), 8);
        f.write(reinterpret_cast<const char*>(&wl), 4);
        f.write(reinterpret_cast<const char*>(&cols), 4);
        std::vector<double> buf(static_cast<size_t>(window_length) * cols);
        WindowSource source(data, kept);
        for (int i = 0; i < source.size(); ++i) {
            source.fill_window(i, buf.data());
            f.write(reinterpret_cast<const char*>(buf.data()),
                    static_cast<std::streamsize>(buf.size() * sizeof(double)));
        }
        if (!f) throw ConfigError("write failed: " + windows_path);
    }

    ManifestWriter manifest("label", out_dir);
    manifest.set_seed(seed);
    manifest.set_config({{"k", k},
                         {"alpha", alpha},
                         {"keep_fraction", keep_fraction},
                         {"window_length", window_length},
                         {"depth", depth}});
    manifest.add_input("data", data_path);
    manifest.add_artifact("labels", labels_path);
    manifest.add_artifact("windows", windows_path);
    manifest.finish(timer.seconds());
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const std::string& data_path, const std::string& config_path,
              std::optional<uint64_t> seed_override, const std::string& out_dir) {
    Stopwatch timer;
    ensure_out_dir(out_dir);
    WalkForwardConfig cfg = walkforward_config_from_json(read_file(config_path));
    if (seed_override) cfg.seed = *seed_override;
    cfg.validate();

    const SnapshotSeries series = read_snapshot_csv_file(data_path);
    const PreparedData data =
        prepare_dataset(series, cfg.depth, cfg.label, cfg.tcn.window_length);
    if (static_cast<int>(data.days.size()) < cfg.train_days)
        throw DataError("insufficient days: have " + std::to_string(data.days.size()) +
                        " usable days, need " + std::to_string(cfg.train_days));

    // Train on the first train_days usable days, validation from the tail.
    std::vector<SampleRef> refs;
    for (int d = 0; d < cfg.train_days; ++d) {
        const auto day_refs = day_samples(data, d);
        refs.insert(refs.end(), day_refs.begin(), day_refs.end());
    }
    refs = downsample_stable(refs, cfg.keep_fraction, mix_seed(cfg.seed, 0x6b656570ULL),
                             [](const SampleRef& s) { return s.label; });
    const int n = static_cast<int>(refs.size());
    const int n_val = std::max(1, static_cast<int>(std::llround(n * cfg.train.validation_fraction)));
    if (n - n_val < 1) throw DataError("too few training samples (" + std::to_string(n) + ")");
    std::vector<SampleRef> val_refs(refs.end() - n_val, refs.end());
    refs.resize(n - n_val);
    const WindowSource train_src(data, std::move(refs));
    const WindowSource val_src(data, std::move(val_refs));

    TrainConfig train_cfg = cfg.train;
    train_cfg.seed = cfg.seed;
    const std::string log_path = out_path(out_dir, "epochs.jsonl");
    std::ofstream epoch_log(log_path, std::ios::binary);
    const FitResult result = fit(train_src, val_src, train_cfg, cfg.effective_tcn(), &epoch_log);
    epoch_log.close();

    const std::string ckpt_path = out_path(out_dir, "checkpoint.bin");
    save_checkpoint(ckpt_path, cfg.effective_tcn(), result.params);
    std::printf("trained %zu epochs (%s), best epoch %d, best val loss %.6f\n",
                result.history.size(), result.stop_reason.c_str(), result.best_epoch,
                result.best_val_loss);

    ManifestWriter manifest("train", out_dir);
    manifest.set_seed(cfg.seed);
    manifest.set_config(json::parse(walkforward_config_to_json(cfg)));
    manifest.add_input("data", data_path);
    manifest.add_input("config", config_path);
    manifest.add_artifact("checkpoint", ckpt_path);
    manifest.add_artifact("epochs", log_path);
    manifest.finish(timer.seconds());
    return 0;
}

// ---------------------------------------------------------------------------
// walkforward
// ---------------------------------------------------------------------------

void write_records_csv(const std::string& path, const std::vector<SampleRecord>& records) {
    std::ofstream f(path, std::ios::binary);
    f << "end_timestamp_ms,hour_of_day,true_class,predicted_class,correct\n";
    for (const auto& r : records) {
        const int64_t ms_in_day = r.end_timestamp_ms % kMsPerDay;
        f << r.end_timestamp_ms << "," << ms_in_day / 3'600'000 << "," << r.true_class << ","
          << r.predicted_class << "," << (r.true_class == r.predicted_class ? 1 : 0) << "\n";
    }
}

int cmd_walkforward(const std::string& data_path, const std::string& config_path,
                    std::optional<uint64_t> seed_override, const std::string& out_dir) {
    Stopwatch timer;
    ensure_out_dir(out_dir);
    WalkForwardConfig cfg = walkforward_config_from_json(read_file(config_path));
    if (seed_override) cfg.seed = *seed_override;
    cfg.validate();

    const SnapshotSeries series = read_snapshot_csv_file(data_path);
    const WalkForwardReport report = run_walkforward(series, cfg);

    const std::string report_path = out_path(out_dir, "report.json");
    write_file(report_path, report_to_json(report));

    ManifestWriter manifest("walkforward", out_dir);
    manifest.set_seed(cfg.seed);
    manifest.set_config(json::parse(walkforward_config_to_json(cfg)));
    manifest.add_input("data", data_path);
    manifest.add_input("config", config_path);
    manifest.add_artifact("report", report_path);

    for (const auto& split : report.splits) {
        const std::string ckpt =
            out_path(out_dir, "checkpoint_split_" + std::to_string(split.index) + ".bin");
        save_checkpoint(ckpt, cfg.effective_tcn(), split.params);
        const std::string records =
            out_path(out_dir, "records_split_" + std::to_string(split.index) + ".csv");
        write_records_csv(records, split.records);
        manifest.add_artifact("checkpoint_split_" + std::to_string(split.index), ckpt);
        manifest.add_artifact("records_split_" + std::to_string(split.index), records);
    }

    std::cout << "walk-forward: " << report.splits.size() << " split(s), pooled over "
              << report.pooled_confusion.total() << " test samples\n\n";
    std::cout << format_report_table(report.pooled_report);
    manifest.finish(timer.seconds());
    return 0;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

int cmd_sweep(const std::string& axis_name, const std::vector<double>& values,
              const std::string& data_path, const std::string& config_path,
              std::optional<uint64_t> seed_override, const std::string& out_dir) {
    Stopwatch timer;
    ensure_out_dir(out_dir);
    WalkForwardConfig cfg = walkforward_config_from_json(read_file(config_path));
    if (seed_override) cfg.seed = *seed_override;
    const SweepAxis axis = sweep_axis_from_string(axis_name);

    const SnapshotSeries series = read_snapshot_csv_file(data_path);
    const std::string csv_path = out_path(out_dir, "sweep_" + axis_name + ".csv");

    // Open in write-through mode so completed rows survive an interrupt.
    std::FILE* f = std::fopen(csv_path.c_str(), "wb");
    if (!f) throw ConfigError("cannot open for writing: " + csv_path);
    std::fputs(sweep_csv_header().c_str(), f);
    std::fflush(f);

    sweep(axis, values, series, cfg, [&](const SweepRow& row) {
        std::fputs(sweep_csv_row(row).c_str(), f);
        std::fflush(f);
        std::printf("%s=%g -> pooled accuracy %.4f over %d split(s)\n", axis_name.c_str(),
                    row.axis_value, row.pooled_accuracy, row.splits);
        std::fflush(stdout);
    });
    std::fclose(f);

    ManifestWriter manifest("sweep", out_dir);
    manifest.set_seed(cfg.seed);
    json config_echo = json::parse(walkforward_config_to_json(cfg));
    config_echo["sweep"] = {{"axis", axis_name}, {"values", values}};
    manifest.set_config(std::move(config_echo));
    manifest.add_input("data", data_path);
    manifest.add_input("config", config_path);
    manifest.add_artifact("sweep_csv", csv_path);
    manifest.finish(timer.seconds());
    return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

int cmd_report(const std::string& report_path) {
    const std::string text = read_file(report_path);
    validate_report_json(text);
    const json j = json::parse(text);

    ConfusionMatrix pooled;
    const auto& cm = j.at("pooled").at("confusion");
    for (int r = 0; r < kNumClasses; ++r)
        for (int c = 0; c < kNumClasses; ++c) pooled.counts[r][c] = cm[r][c].get<int64_t>();

    std::cout << "report " << report_path << " (tool " << j.at("tool_version").get<std::string>()
              << "), " << j.at("splits").size() << " split(s)\n\n";
    std::cout << format_report_table(report_from_confusion(pooled));
    std::cout << "\nper-split accuracy:\n";
    for (const auto& s : j.at("splits"))
        std::printf("  split %d (test day %lld): %.4f\n", s.at("index").get<int>(),
                    static_cast<long long>(s.at("test_day_id").get<int64_t>()),
                    s.at("report").at("accuracy").get<double>());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lobcast: order book midprice movement classification pipeline"};
    app.require_subcommand(1);

    std::string out_dir = "out";
    std::string global_config;
    std::optional<uint64_t> seed;
    int threads = 0;
    app.add_option("--out-dir", out_dir, "Directory for artifacts")->capture_default_str();
    app.add_option("--config", global_config, "Config JSON (default for the subcommand)");
    app.add_option("--seed", seed, "Override the config seed");
    app.add_option("--threads", threads, "Worker thread cap (0 = hardware default)");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic snapshot CSV");
    std::string synth_config, synth_out = "snapshots.csv";
    synth->add_option("--config", synth_config, "Synthetic config JSON");
    synth->add_option("--out", synth_out, "Output CSV name")->capture_default_str();

    auto* label = app.add_subcommand("label", "Label a snapshot CSV and emit the dataset");
    std::string label_data;
    int label_k = 20, label_window = 100;
    double label_alpha = 0.002, label_keep = 0.33;
    uint64_t label_seed = 1;
    label->add_option("--data", label_data, "Snapshot CSV")->required();
    label->add_option("--k", label_k, "Averaging horizon in steps")->capture_default_str();
    label->add_option("--alpha", label_alpha, "Stable band threshold")->capture_default_str();
    label->add_option("--keep-fraction", label_keep, "Stable retention probability")
        ->capture_default_str();
    label->add_option("--window", label_window, "Window length")->capture_default_str();

    auto* train = app.add_subcommand("train", "Train one model on the leading days");
    std::string train_data, train_config;
    train->add_option("--data", train_data, "Snapshot CSV")->required();
    train->add_option("--config", train_config, "Walk-forward config JSON");

    auto* wf = app.add_subcommand("walkforward", "Run the walk-forward study");
    std::string wf_data, wf_config;
    wf->add_option("--data", wf_data, "Snapshot CSV")->required();
    wf->add_option("--config", wf_config, "Walk-forward config JSON");

    auto* sw = app.add_subcommand("sweep", "Sweep one hyperparameter axis");
    std::string sw_data, sw_config, sw_axis;
    std::vector<double> sw_values;
    sw->add_option("--data", sw_data, "Snapshot CSV")->required();
    sw->add_option("--config", sw_config, "Walk-forward config JSON");
    sw->add_option("--axis", sw_axis, "depth|train_days|horizon")->required();
    sw->add_option("--values", sw_values, "Axis values")->required()->delimiter(',');

    auto* rep = app.add_subcommand("report", "Validate and pretty-print a report JSON");
    std::string rep_in;
    rep->add_option("--in", rep_in, "Report JSON path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#endif

    // The top-level --config is the default for whichever subcommand ran.
    for (std::string* cfg : {&synth_config, &train_config, &wf_config, &sw_config})
        if (cfg->empty()) *cfg = global_config;
    if ((synth->parsed() && synth_config.empty()) || (train->parsed() && train_config.empty()) ||
        (wf->parsed() && wf_config.empty()) || (sw->parsed() && sw_config.empty())) {
        std::cerr << "error: this command needs --config\n";
        return 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_config, seed, out_dir, synth_out);
        if (label->parsed())
            return cmd_label(label_data, label_k, label_alpha, label_keep,
                             seed.value_or(label_seed), label_window, out_dir);
        if (train->parsed()) return cmd_train(train_data, train_config, seed, out_dir);
        if (wf->parsed()) return cmd_walkforward(wf_data, wf_config, seed, out_dir);
        if (sw->parsed())
            return cmd_sweep(sw_axis, sw_values, sw_data, sw_config, seed, out_dir);
        if (rep->parsed()) return cmd_report(rep_in);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
