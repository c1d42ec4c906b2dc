#include "lobcast/labeling.hpp"

#include <stdexcept>

namespace lobcast {

double avg_mid_before(std::span<const double> mids, int t, int k) {
    if (k < 1) throw ConfigError("k must be >= 1");
    if (t < k - 1 || t >= static_cast<int>(mids.size()))
        throw std::out_of_range("avg_mid_before: t=" + std::to_string(t) + " needs " +
                                std::to_string(k) + " past midprices");
    double sum = 0.0;
    for (int i = t - k + 1; i <= t; ++i) sum += mids[i];
    return sum / k;
}

double avg_mid_after(std::span<const double> mids, int t, int k) {
    if (k < 1) throw ConfigError("k must be >= 1");
    if (t < 0 || t + k >= static_cast<int>(mids.size()))
        throw std::out_of_range("avg_mid_after: t=" + std::to_string(t) + " needs " +
                                std::to_string(k) + " future midprices");
    double sum = 0.0;
    for (int i = t + 1; i <= t + k; ++i) sum += mids[i];
    return sum / k;
}

Movement label_at(double m_minus, double m_plus, double alpha) {
    if (m_minus > m_plus * (1.0 + alpha)) return Movement::down;
    if (m_minus < m_plus * (1.0 - alpha)) return Movement::up;
    return Movement::stable;
}

std::vector<std::pair<int, Movement>> label_series(std::span<const double> mids,
                                                   const LabelParams& params) {
    std::vector<std::pair<int, Movement>> out;
    const int n = static_cast<int>(mids.size());
    const int k = params.k;
    if (k < 1) throw ConfigError("k must be >= 1");
    if (n < 2 * k) return out;
    out.reserve(n - 2 * k + 1);
    for (int t = k - 1; t <= n - k - 1; ++t) {
        const double m_minus = avg_mid_before(mids, t, k);
        const double m_plus = avg_mid_after(mids, t, k);
        out.emplace_back(t, label_at(m_minus, m_plus, params.alpha));
    }
    return out;
}

}  // namespace lobcast
