#pragma once

#include "lobcast/errors.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace lobcast {

constexpr int64_t kMsPerDay = 86'400'000;
constexpr int kMaxIngestDepth = 50;

// One resting price level: price in quote currency per unit asset, volume in
// asset units.
struct PriceLevel {
    double price = 0.0;
    double volume = 0.0;
};

// One order book observation. Bids best-first (descending price), asks
// best-first (ascending price), equal ladder length on both sides.
struct OrderBookSnapshot {
    int64_t timestamp_ms = 0;
    std::vector<PriceLevel> bids;
    std::vector<PriceLevel> asks;

    int depth() const { return static_cast<int>(bids.size()); }
};

// Contiguous index range [start, end) of one UTC day within a series.
struct DaySpan {
    int64_t day_id = 0;  // timestamp_ms / kMsPerDay
    int start = 0;
    int end = 0;

    int size() const { return end - start; }
};

// Time-ordered snapshot sequence, regular at resolution_ms within each day.
// Day boundaries are derived, not stored inputs.
struct SnapshotSeries {
    std::vector<OrderBookSnapshot> snapshots;
    int64_t resolution_ms = 100;
    std::vector<DaySpan> days;
};

// Pooled mean/std of one day's prices and volumes (population std, both book
// sides, all levels).
struct NormStats {
    double price_mean = 0.0;
    double price_std = 0.0;
    double volume_mean = 0.0;
    double volume_std = 0.0;
    int64_t source_day = 0;
};

// Normalized feature rows of a single day. Row layout per level l:
// [bid_px_l, bid_vol_l, ask_px_l, ask_vol_l], so cols = 4 * depth.
struct NormalizedDay {
    int64_t day_id = 0;
    int rows = 0;
    int cols = 0;
    std::vector<double> values;          // rows x cols, row-major
    std::vector<int64_t> timestamps_ms;  // one per row

    double* row(int r) { return values.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return values.data() + static_cast<size_t>(r) * cols; }
};

// One model input: T x F matrix of normalized features ending at a timestamp.
struct FeatureWindow {
    int rows = 0;  // T
    int cols = 0;  // F = 4 * depth
    std::vector<double> values;
    int64_t end_timestamp_ms = 0;

    double at(int t, int f) const { return values[static_cast<size_t>(t) * cols + f]; }
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// (best ask + best bid) / 2. Throws DataError on an empty side.
double midprice(const OrderBookSnapshot& snapshot);

// Checks all series invariants (ordering, positive spread, uniform depth,
// within-day regularity) and derives the day spans. Throws DataError.
void validate_series(SnapshotSeries& series);

// Keeps the top `depth` levels per side of every snapshot.
// Throws DataError naming the offending timestamp if a snapshot is too shallow.
SnapshotSeries truncate_depth(const SnapshotSeries& series, int depth);

// Pooled stats over every price / volume entry of one day. Population std.
// Throws DataError if the day is missing, has < 2 snapshots, or a std is zero.
NormStats compute_norm_stats(const SnapshotSeries& series, int64_t day_id);

// Stats for every day of the series, keyed by day_id.
std::map<int64_t, NormStats> compute_all_norm_stats(const SnapshotSeries& series);

// Standardizes each snapshot into a feature row using the *previous* day's
// stats. The first day has no previous day and is excluded from the output.
// stats_by_day maps day_id -> stats computed from that day.
std::vector<NormalizedDay> normalize(const SnapshotSeries& series,
                                     const std::map<int64_t, NormStats>& stats_by_day);

// Sliding windows of T rows, stride 1, within one day. The window with
// end-index t covers rows t-T+1..t. A day shorter than T yields no windows.
std::vector<FeatureWindow> make_windows(const NormalizedDay& day, int window_length);

// Number of windows make_windows would emit over all days.
size_t count_windows(const std::vector<NormalizedDay>& days, int window_length);

// Midprices of one day (by index into series.days).
std::vector<double> day_midprices(const SnapshotSeries& series, int day_index);

// ---------------------------------------------------------------------------
// Snapshot CSV
// ---------------------------------------------------------------------------
// Header: timestamp_ms,bid_px_1..D,bid_vol_1..D,ask_px_1..D,ask_vol_1..D.
// Doubles are written with 17 significant digits and round-trip exactly.

void write_snapshot_csv(const SnapshotSeries& series, std::ostream& out);
void write_snapshot_csv_file(const SnapshotSeries& series, const std::string& path);

// Parses and validates. Throws DataError naming the offending row.
SnapshotSeries read_snapshot_csv(std::istream& in, const std::string& source_name);
SnapshotSeries read_snapshot_csv_file(const std::string& path);

}  // namespace lobcast
