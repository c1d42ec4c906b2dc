#pragma once

#include "lobcast/lob_data.hpp"
#include "lobcast/rng.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lobcast {

// Labeling horizon k (steps averaged on each side of the anchor) and the
// relative threshold alpha that defines the stable band.
struct LabelParams {
    int k = 20;
    double alpha = 0.002;
};

// 3-class midprice movement. Class indices: Down 0, Stable 1, Up 2.
enum class Movement : int { down = 0, stable = 1, up = 2 };

constexpr int kNumClasses = 3;

inline int class_index(Movement m) { return static_cast<int>(m); }

inline const char* movement_name(Movement m) {
    switch (m) {
        case Movement::down: return "Down";
        case Movement::stable: return "Stable";
        case Movement::up: return "Up";
    }
    return "?";
}

// Mean of the k midprices at indices t-k+1..t (inclusive of t).
double avg_mid_before(std::span<const double> mids, int t, int k);

// Mean of the k midprices at indices t+1..t+k (exclusive of t).
double avg_mid_after(std::span<const double> mids, int t, int k);

// Ratio-banded 3-way comparison of past vs future mean. The past mean being
// above the future mean means the price fell, hence Down.
Movement label_at(double m_minus, double m_plus, double alpha);

// One (t, label) pair per anchor t in [k-1, n-k-1]. A series shorter than 2k
// yields an empty result.
std::vector<std::pair<int, Movement>> label_series(std::span<const double> mids,
                                                   const LabelParams& params);

// A window paired with its movement label, anchored at series index t.
struct LabeledSample {
    FeatureWindow window;
    Movement label = Movement::stable;
    int t = 0;
};

// Keeps every Down/Up sample; keeps each Stable sample independently with
// probability keep_fraction. The decision for a sample depends only on
// (seed, its index in the input), so the result is deterministic and
// independent of evaluation order. Relative order is preserved.
template <typename Sample, typename LabelOf>
std::vector<Sample> downsample_stable(const std::vector<Sample>& samples, double keep_fraction,
                                      uint64_t seed, LabelOf label_of) {
    if (!(keep_fraction > 0.0) || keep_fraction > 1.0)
        throw ConfigError("keep_fraction must be in (0, 1]");
    std::vector<Sample> out;
    out.reserve(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        if (label_of(samples[i]) == Movement::stable) {
            const double u =
                static_cast<double>(splitmix64(mix_seed(seed, i)) >> 11) * 0x1.0p-53;
            if (u >= keep_fraction) continue;
        }
        out.push_back(samples[i]);
    }
    return out;
}

inline std::vector<LabeledSample> downsample_stable(const std::vector<LabeledSample>& samples,
                                                    double keep_fraction, uint64_t seed) {
    return downsample_stable(samples, keep_fraction, seed,
                             [](const LabeledSample& s) { return s.label; });
}

}  // namespace lobcast
