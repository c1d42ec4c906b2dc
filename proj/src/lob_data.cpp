#include "lobcast/lob_data.hpp"

#include "lobcast/log.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace lobcast {

namespace {

int64_t day_of(int64_t timestamp_ms) {
    // Timestamps are non-negative in practice; floor-divide to be safe.
    return timestamp_ms >= 0 ? timestamp_ms / kMsPerDay
                             : (timestamp_ms - kMsPerDay + 1) / kMsPerDay;
}

std::string ts_str(int64_t ts) { return std::to_string(ts); }

}  // namespace

double midprice(const OrderBookSnapshot& snapshot) {
    if (snapshot.bids.empty() || snapshot.asks.empty())
        throw DataError("malformed snapshot at t=" + ts_str(snapshot.timestamp_ms) +
                        ": empty bid or ask side");
    return (snapshot.asks.front().price + snapshot.bids.front().price) / 2.0;
}

void validate_series(SnapshotSeries& series) {
    if (series.snapshots.empty()) throw DataError("series is empty");
    if (series.resolution_ms <= 0) throw DataError("resolution_ms must be positive");

    const int depth = series.snapshots.front().depth();
    series.days.clear();

    for (size_t i = 0; i < series.snapshots.size(); ++i) {
        const auto& s = series.snapshots[i];
        const std::string where = "snapshot at t=" + ts_str(s.timestamp_ms);
        if (s.bids.empty() || s.asks.empty()) throw DataError(where + ": empty side");
        if (static_cast<int>(s.bids.size()) != depth || static_cast<int>(s.asks.size()) != depth)
            throw DataError(where + ": ladder length differs from series depth " +
                            std::to_string(depth));
        for (const auto& lv : s.bids) {
            if (!(lv.price > 0.0)) throw DataError(where + ": non-positive bid price");
            if (!(lv.volume >= 0.0)) throw DataError(where + ": negative bid volume");
        }
        for (const auto& lv : s.asks) {
            if (!(lv.price > 0.0)) throw DataError(where + ": non-positive ask price");
            if (!(lv.volume >= 0.0)) throw DataError(where + ": negative ask volume");
        }
        for (size_t l = 1; l < s.bids.size(); ++l)
            if (!(s.bids[l].price < s.bids[l - 1].price))
                throw DataError(where + ": bid prices not strictly descending");
        for (size_t l = 1; l < s.asks.size(); ++l)
            if (!(s.asks[l].price > s.asks[l - 1].price))
                throw DataError(where + ": ask prices not strictly ascending");
        if (!(s.bids.front().price < s.asks.front().price))
            throw DataError(where + ": spread is not positive");

        const int64_t day = day_of(s.timestamp_ms);
        if (series.days.empty() || series.days.back().day_id != day) {
            if (!series.days.empty() && day < series.days.back().day_id)
                throw DataError(where + ": day ids not increasing");
            series.days.push_back({day, static_cast<int>(i), static_cast<int>(i) + 1});
        } else {
            // Same day: enforce exact resolution spacing. Gaps are an ingest error.
            const int64_t prev = series.snapshots[i - 1].timestamp_ms;
            if (s.timestamp_ms - prev != series.resolution_ms)
                throw DataError(where + ": irregular spacing within day (" +
                                std::to_string(s.timestamp_ms - prev) + "ms, expected " +
                                std::to_string(series.resolution_ms) + "ms)");
            series.days.back().end = static_cast<int>(i) + 1;
        }
        if (i > 0 && series.snapshots[i - 1].timestamp_ms >= s.timestamp_ms)
            throw DataError(where + ": timestamps not strictly increasing");
    }
}

SnapshotSeries truncate_depth(const SnapshotSeries& series, int depth) {
    if (depth <= 0) throw ConfigError("depth must be positive");
    SnapshotSeries out;
    out.resolution_ms = series.resolution_ms;
    out.snapshots.reserve(series.snapshots.size());
    for (const auto& s : series.snapshots) {
        if (s.depth() < depth)
            throw DataError("insufficient depth at t=" + ts_str(s.timestamp_ms) + ": have " +
                            std::to_string(s.depth()) + " levels, need " + std::to_string(depth));
        OrderBookSnapshot t;
        t.timestamp_ms = s.timestamp_ms;
        t.bids.assign(s.bids.begin(), s.bids.begin() + depth);
        t.asks.assign(s.asks.begin(), s.asks.begin() + depth);
        out.snapshots.push_back(std::move(t));
    }
    out.days = series.days;
    return out;
}

NormStats compute_norm_stats(const SnapshotSeries& series, int64_t day_id) {
    const DaySpan* span = nullptr;
    for (const auto& d : series.days)
        if (d.day_id == day_id) span = &d;
    if (!span) throw DataError("day " + std::to_string(day_id) + " not present in series");
    if (span->size() < 2)
        throw DataError("day " + std::to_string(day_id) + " has fewer than 2 snapshots");

    // Two accumulation passes: exact mean first, then centered second moment.
    double price_sum = 0.0, vol_sum = 0.0;
    size_t n = 0;
    for (int i = span->start; i < span->end; ++i) {
        const auto& s = series.snapshots[i];
        for (const auto& lv : s.bids) { price_sum += lv.price; vol_sum += lv.volume; }
        for (const auto& lv : s.asks) { price_sum += lv.price; vol_sum += lv.volume; }
        n += s.bids.size() + s.asks.size();
    }
    const double price_mean = price_sum / static_cast<double>(n);
    const double vol_mean = vol_sum / static_cast<double>(n);

    double price_ss = 0.0, vol_ss = 0.0;
    for (int i = span->start; i < span->end; ++i) {
        const auto& s = series.snapshots[i];
        for (const auto& lv : s.bids) {
            price_ss += (lv.price - price_mean) * (lv.price - price_mean);
            vol_ss += (lv.volume - vol_mean) * (lv.volume - vol_mean);
        }
        for (const auto& lv : s.asks) {
            price_ss += (lv.price - price_mean) * (lv.price - price_mean);
            vol_ss += (lv.volume - vol_mean) * (lv.volume - vol_mean);
        }
    }
    NormStats st;
    st.price_mean = price_mean;
    st.volume_mean = vol_mean;
    st.price_std = std::sqrt(price_ss / static_cast<double>(n));
    st.volume_std = std::sqrt(vol_ss / static_cast<double>(n));
    st.source_day = day_id;
    if (!(st.price_std > 0.0) || !(st.volume_std > 0.0))
        throw DataError("degenerate day " + std::to_string(day_id) +
                        ": zero price or volume standard deviation");
    return st;
}

std::map<int64_t, NormStats> compute_all_norm_stats(const SnapshotSeries& series) {
    std::map<int64_t, NormStats> out;
    for (const auto& d : series.days) out[d.day_id] = compute_norm_stats(series, d.day_id);
    return out;
}

std::vector<NormalizedDay> normalize(const SnapshotSeries& series,
                                     const std::map<int64_t, NormStats>& stats_by_day) {
    std::vector<NormalizedDay> out;
    if (series.days.size() < 2) return out;

    for (size_t di = 1; di < series.days.size(); ++di) {
        const DaySpan& span = series.days[di];
        const int64_t prev_day = series.days[di - 1].day_id;
        auto it = stats_by_day.find(prev_day);
        if (it == stats_by_day.end())
            throw DataError("missing normalization stats for day " + std::to_string(prev_day) +
                            " (needed by day " + std::to_string(span.day_id) + ")");
        const NormStats& st = it->second;

        NormalizedDay day;
        day.day_id = span.day_id;
        day.rows = span.size();
        day.cols = 4 * series.snapshots[span.start].depth();
        day.values.resize(static_cast<size_t>(day.rows) * day.cols);
        day.timestamps_ms.resize(day.rows);

        for (int r = 0; r < day.rows; ++r) {
            const auto& s = series.snapshots[span.start + r];
            day.timestamps_ms[r] = s.timestamp_ms;
            double* row = day.row(r);
            const int depth = s.depth();
            for (int l = 0; l < depth; ++l) {
                row[4 * l + 0] = (s.bids[l].price - st.price_mean) / st.price_std;
                row[4 * l + 1] = (s.bids[l].volume - st.volume_mean) / st.volume_std;
                row[4 * l + 2] = (s.asks[l].price - st.price_mean) / st.price_std;
                row[4 * l + 3] = (s.asks[l].volume - st.volume_mean) / st.volume_std;
            }
        }
        out.push_back(std::move(day));
    }
    return out;
}

std::vector<FeatureWindow> make_windows(const NormalizedDay& day, int window_length) {
    std::vector<FeatureWindow> out;
    if (window_length <= 0) throw ConfigError("window length must be positive");
    if (day.rows < window_length) {
        log(LogLevel::info, "day " + std::to_string(day.day_id) + " has " +
                                std::to_string(day.rows) + " rows < window " +
                                std::to_string(window_length) + ", no windows emitted");
        return out;
    }
    out.reserve(day.rows - window_length + 1);
    for (int t = window_length - 1; t < day.rows; ++t) {
        FeatureWindow w;
        w.rows = window_length;
        w.cols = day.cols;
        w.end_timestamp_ms = day.timestamps_ms[t];
        w.values.assign(day.row(t - window_length + 1), day.row(t) + day.cols);
        out.push_back(std::move(w));
    }
    return out;
}

size_t count_windows(const std::vector<NormalizedDay>& days, int window_length) {
    size_t n = 0;
    for (const auto& d : days)
        if (d.rows >= window_length) n += static_cast<size_t>(d.rows - window_length + 1);
    return n;
}

std::vector<double> day_midprices(const SnapshotSeries& series, int day_index) {
    const DaySpan& span = series.days.at(day_index);
    std::vector<double> mids(span.size());
    for (int i = 0; i < span.size(); ++i) mids[i] = midprice(series.snapshots[span.start + i]);
    return mids;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

}  // namespace

void write_snapshot_csv(const SnapshotSeries& series, std::ostream& out) {
    const int depth = series.snapshots.empty() ? 0 : series.snapshots.front().depth();
    std::string line = "timestamp_ms";
    const char* groups[4] = {"bid_px_", "bid_vol_", "ask_px_", "ask_vol_"};
    for (const char* g : groups)
        for (int l = 1; l <= depth; ++l) line += "," + std::string(g) + std::to_string(l);
    line += "\n";
    out << line;

    for (const auto& s : series.snapshots) {
        line.clear();
        line += std::to_string(s.timestamp_ms);
        for (const auto& lv : s.bids) { line += ','; append_double(line, lv.price); }
        for (const auto& lv : s.bids) { line += ','; append_double(line, lv.volume); }
        for (const auto& lv : s.asks) { line += ','; append_double(line, lv.price); }
        for (const auto& lv : s.asks) { line += ','; append_double(line, lv.volume); }
        line += '\n';
        out << line;
    }
}

void write_snapshot_csv_file(const SnapshotSeries& series, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open for writing: " + path);
    write_snapshot_csv(series, f);
    if (!f) throw ConfigError("write failed: " + path);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        const size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

double parse_double(const std::string& s, const std::string& where) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw DataError(where + ": cannot parse number '" + s + "'");
    return v;
}

}  // namespace

SnapshotSeries read_snapshot_csv(std::istream& in, const std::string& source_name) {
    std::string line;
    if (!std::getline(in, line)) throw DataError(source_name + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const auto header = split_csv_line(line);
    if (header.empty() || header[0] != "timestamp_ms")
        throw DataError(source_name + ": header must start with timestamp_ms");
    if ((header.size() - 1) % 4 != 0)
        throw DataError(source_name + ": column count implies a non-integer depth");
    const int depth = static_cast<int>((header.size() - 1) / 4);
    if (depth == 0 || depth > kMaxIngestDepth)
        throw DataError(source_name + ": depth " + std::to_string(depth) +
                        " outside supported range 1.." + std::to_string(kMaxIngestDepth));
    const char* groups[4] = {"bid_px_", "bid_vol_", "ask_px_", "ask_vol_"};
    for (int g = 0; g < 4; ++g)
        for (int l = 0; l < depth; ++l) {
            const std::string expect = std::string(groups[g]) + std::to_string(l + 1);
            if (header[1 + g * depth + l] != expect)
                throw DataError(source_name + ": header column " +
                                std::to_string(1 + g * depth + l) + " is '" +
                                header[1 + g * depth + l] + "', expected '" + expect + "'");
        }

    SnapshotSeries series;
    size_t row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = source_name + " row " + std::to_string(row_no);
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw DataError(where + ": expected " + std::to_string(header.size()) +
                            " fields, got " + std::to_string(fields.size()));
        OrderBookSnapshot s;
        char* end = nullptr;
        s.timestamp_ms = std::strtoll(fields[0].c_str(), &end, 10);
        if (end == fields[0].c_str() || *end != '\0')
            throw DataError(where + ": bad timestamp '" + fields[0] + "'");
        s.bids.resize(depth);
        s.asks.resize(depth);
        for (int l = 0; l < depth; ++l) {
            s.bids[l].price = parse_double(fields[1 + l], where);
            s.bids[l].volume = parse_double(fields[1 + depth + l], where);
            s.asks[l].price = parse_double(fields[1 + 2 * depth + l], where);
            s.asks[l].volume = parse_double(fields[1 + 3 * depth + l], where);
        }
        series.snapshots.push_back(std::move(s));
    }
    validate_series(series);
    return series;
}

SnapshotSeries read_snapshot_csv_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open: " + path);
    return read_snapshot_csv(f, path);
}

}  // namespace lobcast
