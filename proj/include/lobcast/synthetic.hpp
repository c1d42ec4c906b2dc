#pragma once

#include "lobcast/lob_data.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lobcast {

// Synthetic series generator with a planted, tunable predictability rule:
// whenever top-of-book volume imbalance exceeds kImbalanceThreshold (a
// "marker", shown for kLeadSteps snapshots on the top kMarkerLevels levels),
// the midprice drifts in the imbalance direction by kDriftPerStep for the
// next kDriftSteps steps with probability signal_strength, and otherwise
// stays put. Background midprice noise shrinks as signal_strength rises, so
// the best achievable 3-class accuracy grows monotonically with
// signal_strength; at 0 the labels are independent of the features.
struct SyntheticConfig {
    int days = 4;
    int snapshots_per_day = 20'000;
    int depth = 10;
    double signal_strength = 1.0;  // s in [0, 1]
    uint64_t seed = 1;
};

// Planted-rule geometry, exposed for counting oracles in tests.
constexpr int kMarkerLevels = 2;  // signal lives in the top 2 levels only
constexpr double kImbalanceThreshold = 0.6;
constexpr int kLeadSteps = 10;      // marker visible this many steps before the drift
constexpr int kDriftSteps = 20;     // drift persistence, matches the default label horizon
// Drift per step as a fraction of the current midprice. Relative drift keeps
// the ratio-banded label geometry identical at every price level, so the
// planted rule transfers cleanly across days.
constexpr double kDriftRelPerStep = 0.0005;
constexpr double kSyntheticBasePrice = 100.0;

// One planted event: the marker's last step (day-local index). If fired, the
// midprice drifts over steps (step, step + kDriftSteps].
struct PlantedEvent {
    int day_index = 0;
    int step = 0;
    int direction = 0;  // +1 up, -1 down
    bool fired = false;
};

struct SyntheticResult {
    SnapshotSeries series;
    std::vector<PlantedEvent> events;
};

// Deterministic for a fixed (config, seed). Throws ConfigError on bad dims.
SyntheticResult generate_synthetic_with_events(const SyntheticConfig& config, uint64_t seed);
SnapshotSeries generate_synthetic(const SyntheticConfig& config, uint64_t seed);

// Parses {"days", "snapshots_per_day", "depth", "signal_strength", "seed"}.
SyntheticConfig parse_synthetic_config_json(const std::string& json_text);

}  // namespace lobcast
