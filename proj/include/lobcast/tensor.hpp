#pragma once

#include "lobcast/errors.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace lobcast {

// Rank-3 array (batch x time x channels), contiguous row-major doubles.
// The currency of all network kernels.
struct Tensor3 {
    int batch = 0;
    int time = 0;
    int channels = 0;
    std::vector<double> data;

    Tensor3() = default;
    Tensor3(int b, int t, int c) : batch(b), time(t), channels(c) {
        if (b <= 0 || t <= 0 || c <= 0)
            throw DimensionError("Tensor3 dims must be positive, got (" + std::to_string(b) +
                                 "," + std::to_string(t) + "," + std::to_string(c) + ")");
        data.assign(static_cast<size_t>(b) * t * c, 0.0);
    }

    size_t size() const { return data.size(); }

    double& at(int b, int t, int c) {
        return data[(static_cast<size_t>(b) * time + t) * channels + c];
    }
    double at(int b, int t, int c) const {
        return data[(static_cast<size_t>(b) * time + t) * channels + c];
    }

    // Pointer to the channel row at (b, t).
    double* row(int b, int t) { return data.data() + (static_cast<size_t>(b) * time + t) * channels; }
    const double* row(int b, int t) const {
        return data.data() + (static_cast<size_t>(b) * time + t) * channels;
    }

    bool same_shape(const Tensor3& o) const {
        return batch == o.batch && time == o.time && channels == o.channels;
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

// Dense rank-2 array, row-major.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c) {
        if (r <= 0 || c <= 0) throw DimensionError("Matrix dims must be positive");
        values.assign(static_cast<size_t>(r) * c, 0.0);
    }

    double& at(int r, int c) { return values[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return values[static_cast<size_t>(r) * cols + c]; }
    double* row(int r) { return values.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return values.data() + static_cast<size_t>(r) * cols; }
};

}  // namespace lobcast
