#include "lobcast/walkforward.hpp"

#include "lobcast/log.hpp"
#include "lobcast/version.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>

namespace lobcast {

using nlohmann::json;

void WalkForwardConfig::validate() const {
    if (train_days < 1 || train_days > 7)
        throw ConfigError("train_days must be in 1..7");
    if (depth < 1 || depth > kMaxIngestDepth)
        throw ConfigError("depth must be in 1.." + std::to_string(kMaxIngestDepth));
    if (label.k < 1) throw ConfigError("label horizon k must be >= 1");
    if (label.alpha < 0.0) throw ConfigError("alpha must be >= 0");
    if (!(keep_fraction > 0.0) || keep_fraction > 1.0)
        throw ConfigError("keep_fraction must be in (0, 1]");
    effective_tcn().validate();
    train.validate();
}

TcnConfig WalkForwardConfig::effective_tcn() const {
    TcnConfig t = tcn;
    t.input_channels = 4 * depth;
    t.num_classes = kNumClasses;
    return t;
}

int64_t ConfusionMatrix::total() const {
    int64_t n = 0;
    for (const auto& row : counts)
        for (int64_t v : row) n += v;
    return n;
}

int64_t ConfusionMatrix::support(int c) const {
    int64_t n = 0;
    for (int64_t v : counts[c]) n += v;
    return n;
}

int64_t ConfusionMatrix::predicted(int c) const {
    int64_t n = 0;
    for (int r = 0; r < kNumClasses; ++r) n += counts[r][c];
    return n;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
    for (int r = 0; r < kNumClasses; ++r)
        for (int c = 0; c < kNumClasses; ++c) counts[r][c] += o.counts[r][c];
    return *this;
}

ClassificationReport report_from_confusion(const ConfusionMatrix& cm) {
    ClassificationReport rep;
    const int64_t total = cm.total();
    int64_t diag = 0;
    double macro_p = 0.0, macro_r = 0.0, macro_f = 0.0;
    double wsum_p = 0.0, wsum_r = 0.0, wsum_f = 0.0;
    for (int c = 0; c < kNumClasses; ++c) {
        const int64_t sup = cm.support(c);
        const int64_t col = cm.predicted(c);
        const int64_t hit = cm.counts[c][c];
        diag += hit;
        ClassMetrics& m = rep.per_class[c];
        m.support = sup;
        m.precision = col > 0 ? static_cast<double>(hit) / col : 0.0;
        m.recall = sup > 0 ? static_cast<double>(hit) / sup : 0.0;
        m.f1 = (m.precision + m.recall) > 0.0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
        macro_p += m.precision;
        macro_r += m.recall;
        macro_f += m.f1;
        wsum_p += m.precision * sup;
        wsum_r += m.recall * sup;
        wsum_f += m.f1 * sup;
    }
    rep.macro = {macro_p / kNumClasses, macro_r / kNumClasses, macro_f / kNumClasses, total};
    if (total > 0) {
        rep.weighted = {wsum_p / total, wsum_r / total, wsum_f / total, total};
        rep.accuracy = static_cast<double>(diag) / total;
    } else {
        rep.weighted = {0.0, 0.0, 0.0, 0};
    }
    return rep;
}

namespace {

std::string percent(double v) {
    return std::to_string(static_cast<long long>(std::llround(v * 100.0))) + "%";
}

void append_table_row(std::string& out, const char* name, const ClassMetrics& m, double acc) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-8s %9.2f %7.2f %7.2f %9s %10lld\n", name, m.precision,
                  m.recall, m.f1, percent(acc).c_str(), static_cast<long long>(m.support));
    out += buf;
}

}  // namespace

std::string format_report_table(const ClassificationReport& rep) {
    std::string out;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-8s %9s %7s %7s %9s %10s\n", "Class", "Precision", "Recall",
                  "F1", "Accuracy", "Support");
    out += buf;
    for (int c = 0; c < kNumClasses; ++c)
        append_table_row(out, movement_name(static_cast<Movement>(c)), rep.per_class[c],
                         rep.per_class[c].recall);
    append_table_row(out, "Avg.", rep.weighted, rep.accuracy);
    return out;
}

// ---------------------------------------------------------------------------
// Dataset preparation
// ---------------------------------------------------------------------------

PreparedData prepare_dataset(const SnapshotSeries& series, int depth, const LabelParams& label,
                             int window_length) {
    if (series.days.empty())
        throw DataError("series has no derived day spans; run validate_series first");
    const SnapshotSeries truncated = truncate_depth(series, depth);
    const auto stats = compute_all_norm_stats(truncated);
    auto normalized = normalize(truncated, stats);

    PreparedData out;
    out.window_length = window_length;
    out.feature_cols = 4 * depth;
    out.days.reserve(normalized.size());
    for (size_t i = 0; i < normalized.size(); ++i) {
        DayData day;
        day.day_id = normalized[i].day_id;
        // normalize() emits days 2..N, so series day index is i + 1.
        day.mids = day_midprices(truncated, static_cast<int>(i) + 1);
        day.labels = label_series(day.mids, label);
        day.rows = std::move(normalized[i]);
        out.days.push_back(std::move(day));
    }
    return out;
}

std::vector<SampleRef> day_samples(const PreparedData& data, int day_index) {
    const DayData& day = data.days.at(day_index);
    std::vector<SampleRef> out;
    const int min_t = data.window_length - 1;
    for (const auto& [t, label] : day.labels) {
        if (t < min_t) continue;
        out.push_back({day_index, t, label, day.rows.timestamps_ms[t]});
    }
    return out;
}

void WindowSource::fill_window(int i, double* dst) const {
    const SampleRef& ref = refs_[i];
    const DayData& day = data_->days[ref.day];
    const double* src = day.rows.row(ref.t - data_->window_length + 1);
    std::memcpy(dst, src,
                sizeof(double) * static_cast<size_t>(data_->window_length) * data_->feature_cols);
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

std::vector<DaySplit> make_splits(const std::vector<int64_t>& usable_day_ids, int train_days) {
    if (train_days < 1) throw ConfigError("train_days must be >= 1");
    if (static_cast<int>(usable_day_ids.size()) < train_days + 1)
        throw DataError("insufficient days: have " + std::to_string(usable_day_ids.size()) +
                        " usable days, need " + std::to_string(train_days + 1));
    std::vector<DaySplit> out;
    for (size_t i = 0; i + train_days < usable_day_ids.size(); ++i) {
        DaySplit s;
        s.train_day_ids.assign(usable_day_ids.begin() + i, usable_day_ids.begin() + i + train_days);
        s.test_day_id = usable_day_ids[i + train_days];
        out.push_back(std::move(s));
    }
    return out;
}

namespace {

int day_index_of(const PreparedData& data, int64_t day_id) {
    for (size_t i = 0; i < data.days.size(); ++i)
        if (data.days[i].day_id == day_id) return static_cast<int>(i);
    throw DataError("day " + std::to_string(day_id) + " not present in prepared data");
}

}  // namespace

SplitResult evaluate_split(const PreparedData& data, const DaySplit& split, int split_index,
                           const WalkForwardConfig& config) {
    const uint64_t split_seed = mix_seed(config.seed, static_cast<uint64_t>(split_index));
    const TcnConfig tcn = config.effective_tcn();

    SplitResult result;
    result.index = split_index;
    result.train_day_ids = split.train_day_ids;
    result.test_day_id = split.test_day_id;

    std::vector<SampleRef> train_refs;
    int64_t max_train_ts = INT64_MIN;
    for (int64_t day_id : split.train_day_ids) {
        const int di = day_index_of(data, day_id);
        auto refs = day_samples(data, di);
        train_refs.insert(train_refs.end(), refs.begin(), refs.end());
        const auto& ts = data.days[di].rows.timestamps_ms;
        if (!ts.empty()) max_train_ts = std::max(max_train_ts, ts.back());
    }
    const int test_day_index = day_index_of(data, split.test_day_id);
    std::vector<SampleRef> test_refs = day_samples(data, test_day_index);
    const auto& test_ts = data.days[test_day_index].rows.timestamps_ms;
    const int64_t min_test_ts = test_ts.empty() ? INT64_MAX : test_ts.front();

    // Temporal hygiene: the whole training window precedes the test day.
    if (max_train_ts >= min_test_ts)
        throw std::logic_error("temporal hygiene violation: train data at t=" +
                               std::to_string(max_train_ts) + " overlaps test day starting t=" +
                               std::to_string(min_test_ts));
    if (test_refs.empty())
        throw DataError("test day " + std::to_string(split.test_day_id) +
                        " yields no labeled windows");

    train_refs = downsample_stable(train_refs, config.keep_fraction,
                                   mix_seed(split_seed, 0x6b656570ULL),
                                   [](const SampleRef& r) { return r.label; });
    const int n = static_cast<int>(train_refs.size());
    int n_val = static_cast<int>(std::llround(n * config.train.validation_fraction));
    n_val = std::max(1, n_val);
    if (n - n_val < 1)
        throw DataError("split " + std::to_string(split_index) +
                        ": too few training samples (" + std::to_string(n) + ")");
    std::vector<SampleRef> val_refs(train_refs.end() - n_val, train_refs.end());
    train_refs.resize(n - n_val);

    WindowSource train_src(data, std::move(train_refs));
    WindowSource val_src(data, std::move(val_refs));

    TrainConfig train_cfg = config.train;
    train_cfg.seed = split_seed;
    const FitResult fitted = fit(train_src, val_src, train_cfg, tcn);
    result.history = fitted.history;
    result.stop_reason = fitted.stop_reason;
    result.best_epoch = fitted.best_epoch;

    // Test evaluation on the natural label distribution (no downsampling).
    const int batch = config.train.batch_size;
    const int ntest = static_cast<int>(test_refs.size());
    WindowSource test_src(data, test_refs);
    std::vector<int> targets;
    for (int start = 0; start < ntest; start += batch) {
        const int bs = std::min(batch, ntest - start);
        Tensor3 x(bs, tcn.window_length, tcn.input_channels);
        targets.resize(bs);
        for (int i = 0; i < bs; ++i) {
            test_src.fill_window(start + i, x.row(i, 0));
            targets[i] = test_src.label(start + i);
        }
        const Matrix logits = tcn_forward(x, fitted.params, tcn, RunMode::eval, 0);
        for (int i = 0; i < bs; ++i) {
            const double* row = logits.row(i);
            int arg = 0;
            for (int c = 1; c < tcn.num_classes; ++c)
                if (row[c] > row[arg]) arg = c;
            result.confusion.add(targets[i], arg);
            result.records.push_back({test_refs[start + i].end_timestamp_ms, targets[i], arg});
        }
    }
    result.report = report_from_confusion(result.confusion);
    result.params = fitted.params;
    return result;
}

WalkForwardReport run_walkforward(const SnapshotSeries& series, const WalkForwardConfig& config) {
    config.validate();
    const PreparedData data =
        prepare_dataset(series, config.depth, config.label, config.tcn.window_length);
    std::vector<int64_t> usable;
    for (const auto& d : data.days) usable.push_back(d.day_id);
    const auto splits = make_splits(usable, config.train_days);

    WalkForwardReport report;
    report.config = config;
    for (size_t i = 0; i < splits.size(); ++i) {
        log(LogLevel::info, "walk-forward split " + std::to_string(i + 1) + "/" +
                                std::to_string(splits.size()) + ": test day " +
                                std::to_string(splits[i].test_day_id));
        report.splits.push_back(evaluate_split(data, splits[i], static_cast<int>(i), config));
        report.pooled_confusion += report.splits.back().confusion;
    }
    report.pooled_report = report_from_confusion(report.pooled_confusion);
    return report;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

SweepAxis sweep_axis_from_string(const std::string& name) {
    if (name == "depth") return SweepAxis::depth;
    if (name == "train_days") return SweepAxis::train_days;
    if (name == "horizon") return SweepAxis::horizon;
    throw ConfigError("unknown sweep axis '" + name + "' (expected depth|train_days|horizon)");
}

std::string sweep_axis_name(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::depth: return "depth";
        case SweepAxis::train_days: return "train_days";
        case SweepAxis::horizon: return "horizon";
    }
    return "?";
}

namespace {

WalkForwardConfig apply_axis_value(const WalkForwardConfig& base, SweepAxis axis, double value) {
    if (value != std::floor(value) || value < 1.0)
        throw ConfigError("sweep value must be a positive integer, got " + std::to_string(value));
    WalkForwardConfig cfg = base;
    const int v = static_cast<int>(value);
    switch (axis) {
        case SweepAxis::depth:
            if (v > kMaxIngestDepth)
                throw ConfigError("depth sweep value " + std::to_string(v) + " exceeds " +
                                  std::to_string(kMaxIngestDepth));
            cfg.depth = v;
            break;
        case SweepAxis::train_days: cfg.train_days = v; break;
        case SweepAxis::horizon: cfg.label.k = v; break;
    }
    return cfg;
}

}  // namespace

SweepResult sweep(SweepAxis axis, const std::vector<double>& values,
                  const SnapshotSeries& series, const WalkForwardConfig& base_config,
                  const std::function<void(const SweepRow&)>& on_row) {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    SweepResult result;
    result.axis = axis;
    for (double v : values) {
        const WalkForwardConfig cfg = apply_axis_value(base_config, axis, v);
        const WalkForwardReport rep = run_walkforward(series, cfg);
        SweepRow row;
        row.axis_value = v;
        row.pooled_accuracy = rep.pooled_report.accuracy;
        row.recall_down = rep.pooled_report.per_class[0].recall;
        row.recall_stable = rep.pooled_report.per_class[1].recall;
        row.recall_up = rep.pooled_report.per_class[2].recall;
        row.splits = static_cast<int>(rep.splits.size());
        result.rows.push_back(row);
        if (on_row) on_row(row);
    }
    return result;
}

std::string sweep_csv_header() {
    return "axis_value,pooled_accuracy,recall_down,recall_stable,recall_up,splits\n";
}

std::string sweep_csv_row(const SweepRow& row) {
    char buf[192];
    std::snprintf(buf, sizeof(buf), "%g,%.6f,%.6f,%.6f,%.6f,%d\n", row.axis_value,
                  row.pooled_accuracy, row.recall_down, row.recall_stable, row.recall_up,
                  row.splits);
    return buf;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace {

json confusion_to_json(const ConfusionMatrix& cm) {
    json rows = json::array();
    for (int r = 0; r < kNumClasses; ++r) {
        json row = json::array();
        for (int c = 0; c < kNumClasses; ++c) row.push_back(cm.counts[r][c]);
        rows.push_back(row);
    }
    return rows;
}

json metrics_to_json(const ClassMetrics& m) {
    return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
            {"support", m.support}};
}

json report_obj_to_json(const ClassificationReport& rep) {
    json classes = json::array();
    for (int c = 0; c < kNumClasses; ++c) {
        json jc = metrics_to_json(rep.per_class[c]);
        jc["name"] = movement_name(static_cast<Movement>(c));
        classes.push_back(jc);
    }
    return {{"classes", classes},
            {"macro", metrics_to_json(rep.macro)},
            {"weighted", metrics_to_json(rep.weighted)},
            {"accuracy", rep.accuracy}};
}

json config_to_json_obj(const WalkForwardConfig& c) {
    return {{"train_days", c.train_days},
            {"depth", c.depth},
            {"label", {{"k", c.label.k}, {"alpha", c.label.alpha}}},
            {"keep_fraction", c.keep_fraction},
            {"tcn",
             {{"kernel_size", c.tcn.kernel_size},
              {"dilation_levels", c.tcn.dilation_levels},
              {"channels_per_block", c.tcn.channels_per_block},
              {"dropout_rate", c.tcn.dropout_rate},
              {"window_length", c.tcn.window_length}}},
            {"train",
             {{"batch_size", c.train.batch_size},
              {"early_stop_patience", c.train.early_stop_patience},
              {"lr_plateau_patience", c.train.lr_plateau_patience},
              {"lr_plateau_factor", c.train.lr_plateau_factor},
              {"max_epochs", c.train.max_epochs},
              {"validation_fraction", c.train.validation_fraction},
              {"learning_rate", c.train.learning_rate},
              {"adam_epsilon", c.train.adam_epsilon}}},
            {"seed", c.seed}};
}

}  // namespace

std::string walkforward_config_to_json(const WalkForwardConfig& config) {
    return config_to_json_obj(config).dump(2);
}

WalkForwardConfig walkforward_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("walk-forward config: invalid JSON: ") + e.what());
    }
    WalkForwardConfig c;
    try {
        if (j.contains("train_days")) c.train_days = j.at("train_days").get<int>();
        if (j.contains("depth")) c.depth = j.at("depth").get<int>();
        if (j.contains("label")) {
            const auto& l = j.at("label");
            if (l.contains("k")) c.label.k = l.at("k").get<int>();
            if (l.contains("alpha")) c.label.alpha = l.at("alpha").get<double>();
        }
        if (j.contains("keep_fraction")) c.keep_fraction = j.at("keep_fraction").get<double>();
        if (j.contains("tcn")) {
            const auto& t = j.at("tcn");
            if (t.contains("kernel_size")) c.tcn.kernel_size = t.at("kernel_size").get<int>();
            if (t.contains("dilation_levels"))
                c.tcn.dilation_levels = t.at("dilation_levels").get<int>();
            if (t.contains("channels_per_block"))
                c.tcn.channels_per_block = t.at("channels_per_block").get<int>();
            if (t.contains("dropout_rate")) c.tcn.dropout_rate = t.at("dropout_rate").get<double>();
            if (t.contains("window_length")) c.tcn.window_length = t.at("window_length").get<int>();
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            if (t.contains("batch_size")) c.train.batch_size = t.at("batch_size").get<int>();
            if (t.contains("early_stop_patience"))
                c.train.early_stop_patience = t.at("early_stop_patience").get<int>();
            if (t.contains("lr_plateau_patience"))
                c.train.lr_plateau_patience = t.at("lr_plateau_patience").get<int>();
            if (t.contains("lr_plateau_factor"))
                c.train.lr_plateau_factor = t.at("lr_plateau_factor").get<double>();
            if (t.contains("max_epochs")) c.train.max_epochs = t.at("max_epochs").get<int>();
            if (t.contains("validation_fraction"))
                c.train.validation_fraction = t.at("validation_fraction").get<double>();
            if (t.contains("learning_rate"))
                c.train.learning_rate = t.at("learning_rate").get<double>();
            if (t.contains("adam_epsilon"))
                c.train.adam_epsilon = t.at("adam_epsilon").get<double>();
        }
        if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("walk-forward config: bad field type: ") + e.what());
    }
    return c;
}

std::string report_to_json(const WalkForwardReport& report) {
    json j;
    j["tool_version"] = kToolVersion;
    j["config"] = config_to_json_obj(report.config);
    j["pooled"] = {{"confusion", confusion_to_json(report.pooled_confusion)},
                   {"report", report_obj_to_json(report.pooled_report)}};
    json splits = json::array();
    for (const auto& s : report.splits) {
        json epochs = json::array();
        for (const auto& e : s.history)
            epochs.push_back({{"epoch", e.epoch},
                              {"train_loss", e.train_loss},
                              {"val_loss", e.val_loss},
                              {"train_accuracy", e.train_accuracy},
                              {"val_accuracy", e.val_accuracy},
                              {"lr_in_effect", e.lr_in_effect}});
        splits.push_back({{"index", s.index},
                          {"train_day_ids", s.train_day_ids},
                          {"test_day_id", s.test_day_id},
                          {"confusion", confusion_to_json(s.confusion)},
                          {"report", report_obj_to_json(s.report)},
                          {"epochs", epochs},
                          {"stop_reason", s.stop_reason},
                          {"best_epoch", s.best_epoch}});
    }
    j["splits"] = splits;
    return j.dump(2) + "\n";
}

namespace {

void require(bool cond, const std::string& what) {
    if (!cond) throw DataError("report schema violation: " + what);
}

void check_metrics_obj(const json& m, const std::string& where) {
    require(m.is_object(), where + " must be an object");
    for (const char* k : {"precision", "recall", "f1"}) {
        require(m.contains(k) && m.at(k).is_number(), where + "." + k + " must be a number");
        const double v = m.at(k).get<double>();
        require(v >= 0.0 && v <= 1.0, where + "." + k + " must be in [0,1]");
    }
    require(m.contains("support") && m.at("support").is_number_integer(),
            where + ".support must be an integer");
}

void check_confusion(const json& cm, const std::string& where) {
    require(cm.is_array() && cm.size() == kNumClasses, where + " must be a 3x3 array");
    for (const auto& row : cm) {
        require(row.is_array() && row.size() == kNumClasses, where + " must be a 3x3 array");
        for (const auto& v : row)
            require(v.is_number_integer() && v.get<int64_t>() >= 0,
                    where + " entries must be non-negative integers");
    }
}

void check_report_obj(const json& r, const std::string& where) {
    require(r.is_object(), where + " must be an object");
    require(r.contains("classes") && r.at("classes").is_array() &&
                r.at("classes").size() == kNumClasses,
            where + ".classes must have one entry per class");
    for (const auto& c : r.at("classes")) {
        check_metrics_obj(c, where + ".classes[]");
        require(c.contains("name") && c.at("name").is_string(),
                where + ".classes[].name must be a string");
    }
    check_metrics_obj(r.at("macro"), where + ".macro");
    check_metrics_obj(r.at("weighted"), where + ".weighted");
    require(r.contains("accuracy") && r.at("accuracy").is_number(),
            where + ".accuracy must be a number");
}

}  // namespace

void validate_report_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw DataError(std::string("report is not valid JSON: ") + e.what());
    }
    try {
        require(j.is_object(), "top level must be an object");
        require(j.contains("tool_version") && j.at("tool_version").is_string(),
                "tool_version must be a string");
        require(j.contains("config") && j.at("config").is_object(), "config must be an object");
        require(j.contains("pooled") && j.at("pooled").is_object(), "pooled must be an object");
        check_confusion(j.at("pooled").at("confusion"), "pooled.confusion");
        check_report_obj(j.at("pooled").at("report"), "pooled.report");
        require(j.contains("splits") && j.at("splits").is_array(), "splits must be an array");
        for (const auto& s : j.at("splits")) {
            require(s.contains("index") && s.at("index").is_number_integer(),
                    "splits[].index must be an integer");
            require(s.contains("test_day_id") && s.at("test_day_id").is_number_integer(),
                    "splits[].test_day_id must be an integer");
            require(s.contains("train_day_ids") && s.at("train_day_ids").is_array(),
                    "splits[].train_day_ids must be an array");
            check_confusion(s.at("confusion"), "splits[].confusion");
            check_report_obj(s.at("report"), "splits[].report");
            require(s.contains("stop_reason") && s.at("stop_reason").is_string(),
                    "splits[].stop_reason must be a string");
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("report schema violation: ") + e.what());
    }
}

}  // namespace lobcast
