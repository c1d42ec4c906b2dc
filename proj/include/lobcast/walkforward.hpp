#pragma once

#include "lobcast/labeling.hpp"
#include "lobcast/lob_data.hpp"
#include "lobcast/training.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace lobcast {

struct WalkForwardConfig {
    int train_days = 7;  // days per training window; the test window is 1 day
    int depth = 10;
    LabelParams label;
    double keep_fraction = 0.33;  // stable retention in training data only
    TcnConfig tcn;                // input_channels is derived as 4 * depth
    TrainConfig train;
    uint64_t seed = 1;

    void validate() const;
    // tcn with input_channels set from depth.
    TcnConfig effective_tcn() const;
};

// rows = true class, cols = predicted class.
struct ConfusionMatrix {
    std::array<std::array<int64_t, kNumClasses>, kNumClasses> counts{};

    void add(int true_class, int predicted_class) { ++counts[true_class][predicted_class]; }
    int64_t total() const;
    int64_t support(int c) const;
    int64_t predicted(int c) const;
    ConfusionMatrix& operator+=(const ConfusionMatrix& o);
    bool operator==(const ConfusionMatrix&) const = default;
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    int64_t support = 0;
};

struct ClassificationReport {
    std::array<ClassMetrics, kNumClasses> per_class;
    ClassMetrics macro;
    ClassMetrics weighted;
    double accuracy = 0.0;
};

// Derives precision/recall/F1/accuracy from counts. Metrics with a zero
// denominator are reported as 0.
ClassificationReport report_from_confusion(const ConfusionMatrix& cm);

// Fixed-width table with columns Class, Precision, Recall, F1, Accuracy,
// Support. The per-class accuracy column is the recall as a rounded percent;
// the Avg. row carries weighted averages and the overall accuracy.
std::string format_report_table(const ClassificationReport& report);

// ---------------------------------------------------------------------------
// Dataset preparation
// ---------------------------------------------------------------------------

// One usable day (day 1 of the series is consumed by normalization): the
// normalized feature rows plus raw midprices and labels.
struct DayData {
    int64_t day_id = 0;
    NormalizedDay rows;
    std::vector<double> mids;
    std::vector<std::pair<int, Movement>> labels;
};

struct PreparedData {
    std::vector<DayData> days;
    int window_length = 0;
    int feature_cols = 0;
};

PreparedData prepare_dataset(const SnapshotSeries& series, int depth, const LabelParams& label,
                             int window_length);

// A labeled anchor: day index into PreparedData::days, in-day row t.
struct SampleRef {
    int day = 0;
    int t = 0;
    Movement label = Movement::stable;
    int64_t end_timestamp_ms = 0;
};

// All anchors of a day that admit both a full window and a full label horizon.
std::vector<SampleRef> day_samples(const PreparedData& data, int day_index);

// SampleSource over prepared windows; windows are gathered as contiguous
// row blocks.
class WindowSource : public SampleSource {
public:
    WindowSource(const PreparedData& data, std::vector<SampleRef> refs)
        : data_(&data), refs_(std::move(refs)) {}

    int size() const override { return static_cast<int>(refs_.size()); }
    int label(int i) const override { return class_index(refs_[i].label); }
    void fill_window(int i, double* dst) const override;
    const std::vector<SampleRef>& refs() const { return refs_; }

private:
    const PreparedData* data_;
    std::vector<SampleRef> refs_;
};

// ---------------------------------------------------------------------------
// Walk-forward study
// ---------------------------------------------------------------------------

struct DaySplit {
    std::vector<int64_t> train_day_ids;
    int64_t test_day_id = 0;
};

// Sliding splits over the usable days: split i trains on days [i, i+train_days)
// and tests on day i + train_days. Throws DataError when there are not enough
// days.
std::vector<DaySplit> make_splits(const std::vector<int64_t>& usable_day_ids, int train_days);

struct SampleRecord {
    int64_t end_timestamp_ms = 0;
    int true_class = 0;
    int predicted_class = 0;
};

struct SplitResult {
    int index = 0;
    std::vector<int64_t> train_day_ids;
    int64_t test_day_id = 0;
    ConfusionMatrix confusion;
    ClassificationReport report;
    std::vector<SampleRecord> records;
    std::vector<EpochStats> history;
    std::string stop_reason;
    int best_epoch = 0;
    TcnParams params;
};

// Trains on the split's training days (stable-downsampled, last
// validation_fraction in time order held out) and evaluates on the raw test
// day. Asserts temporal hygiene at runtime.
SplitResult evaluate_split(const PreparedData& data, const DaySplit& split, int split_index,
                           const WalkForwardConfig& config);

struct WalkForwardReport {
    WalkForwardConfig config;
    std::vector<SplitResult> splits;
    ConfusionMatrix pooled_confusion;
    ClassificationReport pooled_report;
};

WalkForwardReport run_walkforward(const SnapshotSeries& series, const WalkForwardConfig& config);

enum class SweepAxis { depth, train_days, horizon };

SweepAxis sweep_axis_from_string(const std::string& name);
std::string sweep_axis_name(SweepAxis axis);

struct SweepRow {
    double axis_value = 0.0;
    double pooled_accuracy = 0.0;
    double recall_down = 0.0;
    double recall_stable = 0.0;
    double recall_up = 0.0;
    int splits = 0;
};

struct SweepResult {
    SweepAxis axis = SweepAxis::depth;
    std::vector<SweepRow> rows;
};

// Runs one walk-forward per axis value, everything else (including the seed)
// held fixed. on_row, when set, fires after each completed value so partial
// results can be flushed.
SweepResult sweep(SweepAxis axis, const std::vector<double>& values,
                  const SnapshotSeries& series, const WalkForwardConfig& base_config,
                  const std::function<void(const SweepRow&)>& on_row = nullptr);

// CSV header: axis_value,pooled_accuracy,recall_down,recall_stable,recall_up,splits
std::string sweep_csv_header();
std::string sweep_csv_row(const SweepRow& row);

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

std::string walkforward_config_to_json(const WalkForwardConfig& config);
WalkForwardConfig walkforward_config_from_json(const std::string& text);

// Deterministic pretty JSON: config echo, per-split and pooled confusion
// matrices and reports, per-epoch training stats. No wall-clock fields.
std::string report_to_json(const WalkForwardReport& report);

// Structural schema check; throws DataError describing the first violation.
void validate_report_json(const std::string& json_text);

}  // namespace lobcast
