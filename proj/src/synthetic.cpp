#include "lobcast/synthetic.hpp"

#include "lobcast/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>

namespace lobcast {

namespace {

constexpr double kSpread = 0.02;
constexpr double kLevelGap = 0.01;
constexpr double kVolLo = 0.5;
constexpr double kVolHi = 1.5;
constexpr double kMarkerVolHigh = 4.0;
constexpr double kMarkerVolLow = 0.2;
constexpr int kQuietMin = 40;
constexpr int kQuietMax = 100;
constexpr double kMeanReversion = 0.0005;
// First generated day: 2019-06-12 UTC.
constexpr int64_t kBaseDayId = 18'059;

double noise_sigma(double signal_strength) {
    return 0.002 + 0.024 * (1.0 - signal_strength);
}

enum class Phase { quiet, lead, drift };

void validate(const SyntheticConfig& c) {
    if (c.days <= 0) throw ConfigError("synthetic config: days must be positive");
    if (c.snapshots_per_day <= 0)
        throw ConfigError("synthetic config: snapshots_per_day must be positive");
    if (static_cast<int64_t>(c.snapshots_per_day) * 100 > kMsPerDay)
        throw ConfigError("synthetic config: snapshots_per_day exceeds one day at 100ms");
    if (c.depth <= 0 || c.depth > kMaxIngestDepth)
        throw ConfigError("synthetic config: depth must be in 1.." +
                          std::to_string(kMaxIngestDepth));
    if (c.signal_strength < 0.0 || c.signal_strength > 1.0)
        throw ConfigError("synthetic config: signal_strength must be in [0, 1]");
}

}  // namespace

SyntheticResult generate_synthetic_with_events(const SyntheticConfig& config, uint64_t seed) {
    validate(config);
    Rng rng(mix_seed(seed, 0x73796e7468ULL));

    SyntheticResult out;
    out.series.resolution_ms = 100;
    out.series.snapshots.reserve(static_cast<size_t>(config.days) * config.snapshots_per_day);

    const double sigma = noise_sigma(config.signal_strength);
    double mid = kSyntheticBasePrice;

    Phase phase = Phase::quiet;
    int phase_left = kQuietMin + static_cast<int>(rng.uniform_int(kQuietMax - kQuietMin + 1));
    int direction = 0;
    bool fired = false;

    for (int day = 0; day < config.days; ++day) {
        const int64_t day_base = (kBaseDayId + day) * kMsPerDay;
        for (int step = 0; step < config.snapshots_per_day; ++step) {
            mid += sigma * rng.normal() + kMeanReversion * (kSyntheticBasePrice - mid);
            if (phase == Phase::drift && fired) mid += direction * kDriftRelPerStep * mid;

            OrderBookSnapshot s;
            s.timestamp_ms = day_base + static_cast<int64_t>(step) * 100;
            s.bids.resize(config.depth);
            s.asks.resize(config.depth);
            const bool marker = phase == Phase::lead;
            for (int l = 0; l < config.depth; ++l) {
                s.bids[l].price = mid - kSpread / 2.0 - l * kLevelGap;
                s.asks[l].price = mid + kSpread / 2.0 + l * kLevelGap;
                double bid_vol = rng.uniform(kVolLo, kVolHi);
                double ask_vol = rng.uniform(kVolLo, kVolHi);
                if (marker && l < kMarkerLevels) {
                    const double strong = (direction > 0 ? kMarkerVolHigh : kMarkerVolLow);
                    const double weak = (direction > 0 ? kMarkerVolLow : kMarkerVolHigh);
                    bid_vol = strong * rng.uniform(0.9, 1.1);
                    ask_vol = weak * rng.uniform(0.9, 1.1);
                }
                s.bids[l].volume = bid_vol;
                s.asks[l].volume = ask_vol;
            }
            out.series.snapshots.push_back(std::move(s));

            if (--phase_left == 0) {
                switch (phase) {
                    case Phase::quiet:
                        phase = Phase::lead;
                        phase_left = kLeadSteps;
                        direction = rng.bernoulli(0.5) ? 1 : -1;
                        fired = rng.bernoulli(config.signal_strength);
                        break;
                    case Phase::lead:
                        // The step just emitted is the event anchor.
                        out.events.push_back({day, step, direction, fired});
                        phase = Phase::drift;
                        phase_left = kDriftSteps;
                        break;
                    case Phase::drift:
                        phase = Phase::quiet;
                        phase_left =
                            kQuietMin + static_cast<int>(rng.uniform_int(kQuietMax - kQuietMin + 1));
                        direction = 0;
                        fired = false;
                        break;
                }
            }
        }
    }
    validate_series(out.series);
    return out;
}

SnapshotSeries generate_synthetic(const SyntheticConfig& config, uint64_t seed) {
    return generate_synthetic_with_events(config, seed).series;
}

SyntheticConfig parse_synthetic_config_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("synthetic config: invalid JSON: ") + e.what());
    }
    SyntheticConfig c;
    try {
        if (j.contains("days")) c.days = j.at("days").get<int>();
        if (j.contains("snapshots_per_day")) c.snapshots_per_day = j.at("snapshots_per_day").get<int>();
        if (j.contains("depth")) c.depth = j.at("depth").get<int>();
        if (j.contains("signal_strength")) c.signal_strength = j.at("signal_strength").get<double>();
        if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("synthetic config: bad field type: ") + e.what());
    }
    validate(c);
    return c;
}

}  // namespace lobcast
