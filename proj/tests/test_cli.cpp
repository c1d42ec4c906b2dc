#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "lobcast/digest.hpp"
#include "lobcast/labeling.hpp"
#include "lobcast/lob_data.hpp"
#include "lobcast/walkforward.hpp"

#include <sys/types.h>
#include <sys/wait.h>
#include <signal.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace lobcast;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

RunResult run_cli(const std::string& args, const fs::path& dir) {
    const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = std::string(LOBCAST_BIN) + " " + args + " >" + out.string() + " 2>" +
                            err.string();
    const int rc = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::path("cli_scratch_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    f << text;
}

const char* kTinyWfConfig = R"({
  "train_days": 1, "depth": 3, "keep_fraction": 0.5,
  "tcn": {"window_length": 32, "dilation_levels": 5, "channels_per_block": 6, "dropout_rate": 0.1},
  "train": {"batch_size": 64, "max_epochs": 2},
  "seed": 5
})";

std::string make_synth(const TempDir& dir, int days, int snaps, int depth, double signal,
                       uint64_t seed) {
    const std::string cfg = dir / "synth.json";
    write_text(cfg, "{\"days\": " + std::to_string(days) +
                        ", \"snapshots_per_day\": " + std::to_string(snaps) +
                        ", \"depth\": " + std::to_string(depth) +
                        ", \"signal_strength\": " + std::to_string(signal) +
                        ", \"seed\": " + std::to_string(seed) + "}");
    const auto r = run_cli("--out-dir " + (dir / "synth_out") + " synth --config " + cfg,
                           dir.path);
    REQUIRE(r.exit_code == 0);
    return (dir.path / "synth_out" / "snapshots.csv").string();
}

size_t count_lines(const std::string& text) {
    size_t n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

}  // namespace

TEST_CASE("synth: row count, column count, determinism") {
    TempDir dir("synth");
    const std::string cfg = dir / "synth.json";
    write_text(cfg,
               R"({"days": 2, "snapshots_per_day": 1000, "depth": 10, "signal_strength": 1.0, "seed": 3})");

    const auto r1 = run_cli("--out-dir " + (dir / "a") + " synth --config " + cfg, dir.path);
    CHECK(r1.exit_code == 0);
    const std::string csv1 = slurp(dir.path / "a" / "snapshots.csv");
    CHECK(count_lines(csv1) == 2001);  // header + 2 days x 1000

    // Depth 10 -> 41 columns.
    const std::string header = csv1.substr(0, csv1.find('\n'));
    CHECK(std::count(header.begin(), header.end(), ',') == 40);

    const auto r2 = run_cli("--out-dir " + (dir / "b") + " synth --config " + cfg, dir.path);
    CHECK(r2.exit_code == 0);
    CHECK(slurp(dir.path / "b" / "snapshots.csv") == csv1);  // byte-identical

    // Manifest written, carries the input digest.
    const std::string manifest = slurp(dir.path / "a" / "manifest.json");
    CHECK(manifest.find("\"command\": \"synth\"") != std::string::npos);
    CHECK(manifest.find(digest_file(cfg)) != std::string::npos);

    // Seed override changes the artifact.
    const auto r3 =
        run_cli("--out-dir " + (dir / "c") + " --seed 99 synth --config " + cfg, dir.path);
    CHECK(r3.exit_code == 0);
    CHECK(slurp(dir.path / "c" / "snapshots.csv") != csv1);

    const auto bad = run_cli("--out-dir " + (dir / "d") + " synth --config missing.json",
                             dir.path);
    CHECK(bad.exit_code == 2);
}

TEST_CASE("label: histograms, manifest counts, keep-fraction identity") {
    TempDir dir("label");
    const std::string data = make_synth(dir, 3, 700, 3, 1.0, 7);

    const auto r = run_cli("--out-dir " + (dir / "lab") +
                               " label --data " + data + " --keep-fraction 1.0 --window 32",
                           dir.path);
    REQUIRE(r.exit_code == 0);

    // keep-fraction 1 -> before and after histograms identical.
    std::istringstream lines(r.out);
    std::string line;
    int64_t totals[2] = {-1, -1};
    while (std::getline(lines, line)) {
        long long before = 0, after = 0;
        if (std::sscanf(line.c_str(), "  total %lld -> %lld", &before, &after) == 2) {
            totals[0] = before;
            totals[1] = after;
        }
    }
    REQUIRE(totals[0] >= 0);
    CHECK(totals[0] == totals[1]);

    // Recount with the library: histogram totals equal the anchor count.
    const auto series = read_snapshot_csv_file(data);
    const auto prepared = prepare_dataset(series, 3, LabelParams{}, 32);
    int64_t expected = 0;
    for (size_t d = 0; d < prepared.days.size(); ++d)
        expected += static_cast<int64_t>(day_samples(prepared, static_cast<int>(d)).size());
    CHECK(totals[0] == expected);

    // labels.csv has one data row per kept sample.
    const std::string labels = slurp(dir.path / "lab" / "labels.csv");
    CHECK(count_lines(labels) == static_cast<size_t>(totals[1]) + 1);

    // Window store header says the same count.
    std::ifstream win(dir.path / "lab" / "windows.bin", std::ios::binary);
    char magic[8];
    int64_t count = 0;
    win.read(magic, 8);
    win.read(reinterpret_cast<char*>(&count), 8);
    CHECK(std::string(magic, 8) == "LOBWIN01");
    CHECK(count == totals[1]);
}

TEST_CASE("label: monotone up-drift data gives an Up-dominated histogram") {
    TempDir dir("updrift");
    // Two handcrafted days; day 2 rises steeply so every in-range anchor
    // labels Up at the default band.
    SnapshotSeries series;
    Rng rng(4);
    for (int day = 1; day <= 2; ++day) {
        for (int i = 0; i < 120; ++i) {
            const double mid = day == 1 ? 100.0 + 0.01 * rng.normal() : 100.0 + 0.5 * i;
            OrderBookSnapshot s;
            s.timestamp_ms = day * kMsPerDay + i * 100;
            s.bids.push_back({mid - 0.05, rng.uniform(0.5, 1.5)});
            s.asks.push_back({mid + 0.05, rng.uniform(0.5, 1.5)});
            series.snapshots.push_back(std::move(s));
        }
    }
    validate_series(series);
    const std::string csv = dir / "drift.csv";
    write_snapshot_csv_file(series, csv);

    const auto r = run_cli("--out-dir " + (dir / "lab") + " label --data " + csv +
                               " --keep-fraction 1.0 --window 32",
                           dir.path);
    REQUIRE(r.exit_code == 0);
    long long counts[3] = {0, 0, 0};
    std::istringstream lines(r.out);
    std::string line;
    long long n = 0;
    while (std::getline(lines, line)) {
        if (std::sscanf(line.c_str(), "  Down %lld", &n) == 1) counts[0] = n;
        if (std::sscanf(line.c_str(), "  Stable %lld", &n) == 1) counts[1] = n;
        if (std::sscanf(line.c_str(), "  Up %lld", &n) == 1) counts[2] = n;
    }
    CHECK(counts[2] > 0);
    CHECK(counts[2] > counts[0] + counts[1]);
}

TEST_CASE("walkforward: report artifacts, table, determinism, exit codes") {
    TempDir dir("wf");
    const std::string data = make_synth(dir, 4, 700, 3, 1.0, 5);
    const std::string cfg = dir / "wf.json";
    write_text(cfg, kTinyWfConfig);

    const auto r = run_cli("--out-dir " + (dir / "a") + " walkforward --data " + data +
                               " --config " + cfg,
                           dir.path);
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("Avg.") != std::string::npos);
    CHECK(r.out.find("Class") != std::string::npos);

    const std::string report1 = slurp(dir.path / "a" / "report.json");
    CHECK_NOTHROW(validate_report_json(report1));
    CHECK(fs::exists(dir.path / "a" / "checkpoint_split_0.bin"));
    CHECK(fs::exists(dir.path / "a" / "records_split_0.csv"));

    // Idempotence: identical inputs and seed give byte-identical reports.
    const auto r2 = run_cli("--out-dir " + (dir / "b") + " walkforward --data " + data +
                                " --config " + cfg,
                            dir.path);
    REQUIRE(r2.exit_code == 0);
    CHECK(slurp(dir.path / "b" / "report.json") == report1);
    CHECK(digest_file((dir.path / "b" / "checkpoint_split_0.bin").string()) ==
          digest_file((dir.path / "a" / "checkpoint_split_0.bin").string()));

    // The report command accepts its own artifact.
    const auto rr = run_cli("report --in " + (dir.path / "a" / "report.json").string(), dir.path);
    CHECK(rr.exit_code == 0);
    CHECK(rr.out.find("per-split accuracy") != std::string::npos);

    // Too few days: exit 2 with a message naming the problem.
    const std::string short_data = make_synth(dir, 2, 700, 3, 1.0, 6);
    const auto bad = run_cli("--out-dir " + (dir / "c") + " walkforward --data " + short_data +
                                 " --config " + cfg,
                             dir.path);
    CHECK(bad.exit_code == 2);
    CHECK(bad.err.find("insufficient days") != std::string::npos);
}

TEST_CASE("records csv carries hour buckets and correctness flags") {
    TempDir dir("records");
    const std::string data = make_synth(dir, 3, 700, 3, 1.0, 8);
    const std::string cfg = dir / "wf.json";
    write_text(cfg, kTinyWfConfig);
    const auto r = run_cli("--out-dir " + (dir / "a") + " walkforward --data " + data +
                               " --config " + cfg,
                           dir.path);
    REQUIRE(r.exit_code == 0);
    std::ifstream f(dir.path / "a" / "records_split_0.csv");
    std::string header;
    std::getline(f, header);
    CHECK(header == "end_timestamp_ms,hour_of_day,true_class,predicted_class,correct");
    std::string row;
    std::getline(f, row);
    long long ts = 0;
    int hour = -1, tc = -1, pc = -1, ok = -1;
    REQUIRE(std::sscanf(row.c_str(), "%lld,%d,%d,%d,%d", &ts, &hour, &tc, &pc, &ok) == 5);
    CHECK(hour == static_cast<int>((ts % kMsPerDay) / 3'600'000));
    CHECK((ok == 1) == (tc == pc));
}

TEST_CASE("sweep: one csv row per value, flushed incrementally") {
    TempDir dir("sweep");
    const std::string data = make_synth(dir, 4, 700, 3, 1.0, 11);
    const std::string cfg = dir / "wf.json";
    write_text(cfg, kTinyWfConfig);

    const auto r = run_cli("--out-dir " + (dir / "a") + " sweep --data " + data + " --config " +
                               cfg + " --axis horizon --values 20,10,5",
                           dir.path);
    REQUIRE(r.exit_code == 0);
    const std::string csv = slurp(dir.path / "a" / "sweep_horizon.csv");
    CHECK(count_lines(csv) == 4);  // header + 3 values
    CHECK(csv.find("axis_value,pooled_accuracy,recall_down,recall_stable,recall_up,splits") == 0);

    const auto bad = run_cli("--out-dir " + (dir / "b") + " sweep --data " + data + " --config " +
                                 cfg + " --axis bogus --values 1",
                             dir.path);
    CHECK(bad.exit_code == 2);
}

TEST_CASE("sweep: interrupted run keeps completed rows") {
    TempDir dir("kill");
    const std::string data = make_synth(dir, 4, 700, 3, 1.0, 12);
    const std::string cfg = dir / "wf.json";
    write_text(cfg, kTinyWfConfig);
    const std::string out_dir = dir / "a";
    const fs::path csv_path = fs::path(out_dir) / "sweep_train_days.csv";

    const pid_t pid = fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
        // Child: train_days 1 finishes quickly, 2 takes much longer.
        execl(LOBCAST_BIN, LOBCAST_BIN, "--out-dir", out_dir.c_str(), "sweep", "--data",
              data.c_str(), "--config", cfg.c_str(), "--axis", "train_days", "--values", "1,2",
              static_cast<char*>(nullptr));
        _exit(127);
    }
    // Parent: wait for the first row to be flushed, then kill mid-value-2.
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(120);
    bool saw_first_row = false;
    while (std::chrono::steady_clock::now() < deadline) {
        if (fs::exists(csv_path) && count_lines(slurp(csv_path)) >= 2) {
            saw_first_row = true;
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    REQUIRE(saw_first_row);
    kill(pid, SIGKILL);
    int status = 0;
    waitpid(pid, &status, 0);
    CHECK(WIFSIGNALED(status));

    const std::string csv = slurp(csv_path);
    CHECK(count_lines(csv) == 2);  // header + exactly the completed first value
    CHECK(csv.find("\n1,") != std::string::npos);
}

TEST_CASE("train: checkpoint and epoch log artifacts") {
    TempDir dir("train");
    const std::string data = make_synth(dir, 3, 700, 3, 1.0, 13);
    const std::string cfg = dir / "wf.json";
    write_text(cfg, kTinyWfConfig);

    const auto r = run_cli("--out-dir " + (dir / "a") + " train --data " + data + " --config " +
                               cfg,
                           dir.path);
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(dir.path / "a" / "checkpoint.bin"));
    CHECK(fs::exists(dir.path / "a" / "checkpoint.bin.json"));

    // One JSON line per epoch, each parseable and carrying the stat fields.
    const std::string log = slurp(dir.path / "a" / "epochs.jsonl");
    CHECK(count_lines(log) == 2);  // max_epochs 2
    std::istringstream lines(log);
    std::string line;
    while (std::getline(lines, line)) {
        CHECK(line.find("\"epoch\"") != std::string::npos);
        CHECK(line.find("\"train_loss\"") != std::string::npos);
        CHECK(line.find("\"val_loss\"") != std::string::npos);
        CHECK(line.find("\"lr_in_effect\"") != std::string::npos);
    }

    const auto [ck_cfg, ck_params] = load_checkpoint((dir.path / "a" / "checkpoint.bin").string());
    CHECK(ck_cfg.window_length == 32);
    CHECK(ck_cfg.input_channels == 12);
    CHECK(ck_params.blocks.size() == 5);
}

TEST_CASE("LOBCAST_LOG=info surfaces progress logs on stderr") {
    TempDir dir("logenv");
    const std::string data = make_synth(dir, 4, 700, 3, 1.0, 14);
    const std::string cfg = dir / "wf.json";
    write_text(cfg, kTinyWfConfig);

    const fs::path out = dir.path / "stdout.txt", err = dir.path / "stderr.txt";
    const std::string cmd = "LOBCAST_LOG=info " + std::string(LOBCAST_BIN) + " --out-dir " +
                            (dir / "a") + " walkforward --data " + data + " --config " + cfg +
                            " >" + out.string() + " 2>" + err.string();
    REQUIRE(std::system(cmd.c_str()) == 0);
    CHECK(slurp(err).find("walk-forward split") != std::string::npos);

    // Default level (warn) keeps the same run quiet.
    const std::string quiet = std::string(LOBCAST_BIN) + " --out-dir " + (dir / "b") +
                              " walkforward --data " + data + " --config " + cfg + " >" +
                              out.string() + " 2>" + err.string();
    REQUIRE(std::system(quiet.c_str()) == 0);
    CHECK(slurp(err).find("walk-forward split") == std::string::npos);
}

TEST_CASE("report: rejects corrupted documents with exit 2") {
    TempDir dir("report");
    write_text(dir / "broken.json", "{\"not\": \"a report\"}");
    const auto r = run_cli("report --in " + (dir / "broken.json"), dir.path);
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("schema") != std::string::npos);
}
