#include "lobcast/tcn.hpp"

#include "lobcast/errors.hpp"
#include "lobcast/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace lobcast {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

int receptive_field(int kernel_size, int dilation_levels) {
    return 1 + 2 * (kernel_size - 1) * ((1 << dilation_levels) - 1);
}

void TcnConfig::validate() const {
    if (kernel_size < 2) throw ConfigError("kernel_size must be >= 2");
    if (dilation_levels < 1) throw ConfigError("dilation_levels must be >= 1");
    if (dilation_levels > 20) throw ConfigError("dilation_levels too large");
    if (channels_per_block < 1) throw ConfigError("channels_per_block must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw ConfigError("dropout_rate must be in [0, 1)");
    if (input_channels < 1) throw ConfigError("input_channels must be >= 1");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (window_length < 1) throw ConfigError("window_length must be >= 1");
    if (receptive_field(kernel_size, dilation_levels) < window_length)
        throw ConfigError("receptive field " +
                          std::to_string(receptive_field(kernel_size, dilation_levels)) +
                          " does not cover window length " + std::to_string(window_length));
}

size_t TcnParams::parameter_count() const {
    size_t n = head.weights.size() + head.bias.size();
    for (const auto& b : blocks) {
        n += b.conv1.weights.size() + b.conv1.bias.size();
        n += b.conv2.weights.size() + b.conv2.bias.size();
        if (b.has_projection) n += b.projection.weights.size() + b.projection.bias.size();
    }
    return n;
}

namespace {

void glorot_fill(std::vector<double>& w, int fan_in, int fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : w) v = rng.uniform(-limit, limit);
}

}  // namespace

TcnParams init_params(const TcnConfig& config, uint64_t seed) {
    config.validate();
    Rng rng(mix_seed(seed, 0x696e6974ULL));
    TcnParams p;
    p.blocks.resize(config.dilation_levels);
    for (int i = 0; i < config.dilation_levels; ++i) {
        const int in = i == 0 ? config.input_channels : config.channels_per_block;
        const int out = config.channels_per_block;
        auto& b = p.blocks[i];
        b.conv1 = ConvParams(config.kernel_size, in, out);
        glorot_fill(b.conv1.weights, config.kernel_size * in, config.kernel_size * out, rng);
        b.conv2 = ConvParams(config.kernel_size, out, out);
        glorot_fill(b.conv2.weights, config.kernel_size * out, config.kernel_size * out, rng);
        if (in != out) {
            b.has_projection = true;
            b.projection = ConvParams(1, in, out);
            glorot_fill(b.projection.weights, in, out, rng);
        }
    }
    p.head = DenseParams(config.channels_per_block, config.num_classes);
    glorot_fill(p.head.weights, p.head.in, p.head.out, rng);
    return p;
}

// ---------------------------------------------------------------------------
// Kernels. Every output element is accumulated by exactly one thread in a
// fixed order, so results are bitwise identical for any thread count.
// ---------------------------------------------------------------------------

void causal_conv1d(const Tensor3& x, const ConvParams& p, int dilation, Tensor3& y) {
    if (x.channels != p.in_channels)
        throw DimensionError("causal_conv1d: input has " + std::to_string(x.channels) +
                             " channels, kernel expects " + std::to_string(p.in_channels));
    if (dilation < 1) throw DimensionError("causal_conv1d: dilation must be >= 1");
    if (y.batch != x.batch || y.time != x.time || y.channels != p.out_channels)
        y = Tensor3(x.batch, x.time, p.out_channels);

    const int cin = p.in_channels, cout = p.out_channels, kernel = p.kernel_size;
#pragma omp parallel for schedule(static)
    for (int b = 0; b < x.batch; ++b) {
        for (int t = 0; t < x.time; ++t) {
            double* yr = y.row(b, t);
            std::copy(p.bias.begin(), p.bias.end(), yr);
            for (int j = 0; j < kernel; ++j) {
                const int src = t - (kernel - 1 - j) * dilation;
                if (src < 0) continue;
                const double* xr = x.row(b, src);
                const double* wj = p.weights.data() + static_cast<size_t>(j) * cin * cout;
                for (int c = 0; c < cin; ++c) {
                    const double xv = xr[c];
                    const double* wr = wj + static_cast<size_t>(c) * cout;
                    for (int o = 0; o < cout; ++o) yr[o] += xv * wr[o];
                }
            }
        }
    }
}

Tensor3 causal_conv1d(const Tensor3& x, const ConvParams& p, int dilation) {
    Tensor3 y(x.batch, x.time, p.out_channels);
    causal_conv1d(x, p, dilation, y);
    return y;
}

namespace {

void relu_inplace(Tensor3& a) {
    for (double& v : a.data) v = v > 0.0 ? v : 0.0;
}

// Inverted dropout: zero where mask is 0, scale kept entries by 1/(1-rate).
void apply_mask_inplace(Tensor3& a, const Tensor3& mask, double rate) {
    const double scale = 1.0 / (1.0 - rate);
    for (size_t i = 0; i < a.data.size(); ++i) a.data[i] *= mask.data[i] * scale;
}

Tensor3 make_mask(int batch, int time, int channels, double rate, Rng& rng) {
    Tensor3 m(batch, time, channels);
    for (double& v : m.data) v = rng.uniform() < rate ? 0.0 : 1.0;
    return m;
}

}  // namespace

Tensor3 residual_block(const Tensor3& x, const BlockParams& block, int dilation,
                       const Tensor3* mask1, const Tensor3* mask2, double dropout_rate) {
    Tensor3 a1 = causal_conv1d(x, block.conv1, dilation);
    relu_inplace(a1);
    if (mask1) apply_mask_inplace(a1, *mask1, dropout_rate);
    Tensor3 a2 = causal_conv1d(a1, block.conv2, dilation);
    relu_inplace(a2);
    if (mask2) apply_mask_inplace(a2, *mask2, dropout_rate);

    if (block.has_projection) {
        Tensor3 skip = causal_conv1d(x, block.projection, 1);
        for (size_t i = 0; i < a2.data.size(); ++i) a2.data[i] += skip.data[i];
    } else {
        if (x.channels != a2.channels)
            throw DimensionError("residual_block: channel mismatch without projection");
        for (size_t i = 0; i < a2.data.size(); ++i) a2.data[i] += x.data[i];
    }
    return a2;
}

namespace {

Matrix forward_impl(const Tensor3& x, const TcnParams& params, const TcnConfig& config,
                    RunMode mode, uint64_t seed, TcnTrace* trace) {
    config.validate();
    if (x.time != config.window_length || x.channels != config.input_channels)
        throw DimensionError("tcn_forward: input (" + std::to_string(x.time) + " x " +
                             std::to_string(x.channels) + ") does not match config (" +
                             std::to_string(config.window_length) + " x " +
                             std::to_string(config.input_channels) + ")");
    if (static_cast<int>(params.blocks.size()) != config.dilation_levels)
        throw DimensionError("tcn_forward: block count does not match dilation_levels");

    const bool use_dropout = mode == RunMode::train && config.dropout_rate > 0.0;
    Rng mask_rng(mix_seed(seed, 0x64726f70ULL));

    if (trace) {
        *trace = TcnTrace{};
        trace->block_inputs.reserve(params.blocks.size() + 1);
    }

    Tensor3 cur = x;
    for (size_t i = 0; i < params.blocks.size(); ++i) {
        const auto& block = params.blocks[i];
        const int dilation = 1 << i;

        Tensor3 mask1, mask2;
        if (use_dropout) {
            mask1 = make_mask(cur.batch, cur.time, block.conv1.out_channels,
                              config.dropout_rate, mask_rng);
            mask2 = make_mask(cur.batch, cur.time, block.conv2.out_channels,
                              config.dropout_rate, mask_rng);
        }

        Tensor3 a1 = causal_conv1d(cur, block.conv1, dilation);
        if (trace) trace->preact1.push_back(a1);
        relu_inplace(a1);
        if (use_dropout) apply_mask_inplace(a1, mask1, config.dropout_rate);
        if (trace) trace->conv2_inputs.push_back(a1);

        Tensor3 a2 = causal_conv1d(a1, block.conv2, dilation);
        if (trace) trace->preact2.push_back(a2);
        relu_inplace(a2);
        if (use_dropout) apply_mask_inplace(a2, mask2, config.dropout_rate);

        if (block.has_projection) {
            Tensor3 skip = causal_conv1d(cur, block.projection, 1);
            for (size_t n = 0; n < a2.data.size(); ++n) a2.data[n] += skip.data[n];
        } else {
            for (size_t n = 0; n < a2.data.size(); ++n) a2.data[n] += cur.data[n];
        }

        if (trace) {
            trace->block_inputs.push_back(std::move(cur));
            trace->masks1.push_back(std::move(mask1));
            trace->masks2.push_back(std::move(mask2));
        }
        cur = std::move(a2);
    }

    // Head reads the final-timestep features.
    Matrix features(x.batch, config.channels_per_block);
    for (int b = 0; b < x.batch; ++b) {
        const double* src = cur.row(b, cur.time - 1);
        std::copy(src, src + cur.channels, features.row(b));
    }
    Matrix logits(x.batch, config.num_classes);
    for (int b = 0; b < x.batch; ++b) {
        const double* f = features.row(b);
        double* z = logits.row(b);
        std::copy(params.head.bias.begin(), params.head.bias.end(), z);
        for (int c = 0; c < params.head.in; ++c) {
            const double fv = f[c];
            const double* wr = params.head.weights.data() + static_cast<size_t>(c) * params.head.out;
            for (int o = 0; o < params.head.out; ++o) z[o] += fv * wr[o];
        }
    }

    if (trace) {
        trace->block_inputs.push_back(std::move(cur));
        trace->head_input = std::move(features);
        trace->logits = logits;
    }
    return logits;
}

}  // namespace

Matrix tcn_forward(const Tensor3& x, const TcnParams& params, const TcnConfig& config,
                   RunMode mode, uint64_t seed) {
    return forward_impl(x, params, config, mode, seed, nullptr);
}

Matrix tcn_forward_traced(const Tensor3& x, const TcnParams& params, const TcnConfig& config,
                          RunMode mode, uint64_t seed, TcnTrace& trace) {
    return forward_impl(x, params, config, mode, seed, &trace);
}

CrossEntropyResult softmax_cross_entropy(const Matrix& logits, std::span<const int> targets) {
    if (static_cast<int>(targets.size()) != logits.rows)
        throw DimensionError("softmax_cross_entropy: batch/target size mismatch");
    CrossEntropyResult r;
    r.probs = Matrix(logits.rows, logits.cols);
    double total = 0.0;
    for (int b = 0; b < logits.rows; ++b) {
        const int y = targets[b];
        if (y < 0 || y >= logits.cols)
            throw DimensionError("softmax_cross_entropy: class index " + std::to_string(y) +
                                 " out of range");
        const double* z = logits.row(b);
        double zmax = z[0];
        for (int c = 1; c < logits.cols; ++c) zmax = std::max(zmax, z[c]);
        double sum = 0.0;
        for (int c = 0; c < logits.cols; ++c) sum += std::exp(z[c] - zmax);
        const double lse = zmax + std::log(sum);
        double* p = r.probs.row(b);
        for (int c = 0; c < logits.cols; ++c) p[c] = std::exp(z[c] - lse);
        total += lse - z[y];
    }
    r.loss = total / logits.rows;
    return r;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'L', 'O', 'B', 'T', 'C', 'N', '0', '1'};
constexpr uint32_t kVersion = 1;

void put_bytes(std::ostream& out, const void* p, size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void put_i32(std::ostream& out, int32_t v) { put_bytes(out, &v, 4); }
void put_f64(std::ostream& out, double v) { put_bytes(out, &v, 8); }

void put_array(std::ostream& out, const std::vector<double>& v) {
    put_bytes(out, v.data(), v.size() * sizeof(double));
}

void get_bytes(std::istream& in, void* p, size_t n, const std::string& path) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n))
        throw DataError("checkpoint truncated: " + path);
}

int32_t get_i32(std::istream& in, const std::string& path) {
    int32_t v;
    get_bytes(in, &v, 4, path);
    return v;
}

double get_f64(std::istream& in, const std::string& path) {
    double v;
    get_bytes(in, &v, 8, path);
    return v;
}

void get_array(std::istream& in, std::vector<double>& v, const std::string& path) {
    get_bytes(in, v.data(), v.size() * sizeof(double), path);
}

}  // namespace

void save_checkpoint(const std::string& path, const TcnConfig& config, const TcnParams& params) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open checkpoint for writing: " + path);
    put_bytes(f, kMagic, 8);
    uint32_t version = kVersion;
    put_bytes(f, &version, 4);
    put_i32(f, config.kernel_size);
    put_i32(f, config.dilation_levels);
    put_i32(f, config.channels_per_block);
    put_i32(f, config.input_channels);
    put_i32(f, config.num_classes);
    put_i32(f, config.window_length);
    put_f64(f, config.dropout_rate);
    for (const auto& b : params.blocks) {
        put_array(f, b.conv1.weights);
        put_array(f, b.conv1.bias);
        put_array(f, b.conv2.weights);
        put_array(f, b.conv2.bias);
        const char has_proj = b.has_projection ? 1 : 0;
        put_bytes(f, &has_proj, 1);
        if (b.has_projection) {
            put_array(f, b.projection.weights);
            put_array(f, b.projection.bias);
        }
    }
    put_array(f, params.head.weights);
    put_array(f, params.head.bias);
    if (!f) throw ConfigError("checkpoint write failed: " + path);

    nlohmann::json sidecar = {
        {"kernel_size", config.kernel_size},
        {"dilation_levels", config.dilation_levels},
        {"channels_per_block", config.channels_per_block},
        {"dropout_rate", config.dropout_rate},
        {"input_channels", config.input_channels},
        {"num_classes", config.num_classes},
        {"window_length", config.window_length},
        {"parameter_count", params.parameter_count()},
    };
    std::ofstream sj(path + ".json", std::ios::binary);
    sj << sidecar.dump(2) << "\n";
}

std::pair<TcnConfig, TcnParams> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open checkpoint: " + path);
    char magic[8];
    get_bytes(f, magic, 8, path);
    if (std::memcmp(magic, kMagic, 8) != 0) throw DataError("bad checkpoint magic: " + path);
    uint32_t version;
    get_bytes(f, &version, 4, path);
    if (version != kVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version));

    TcnConfig config;
    config.kernel_size = get_i32(f, path);
    config.dilation_levels = get_i32(f, path);
    config.channels_per_block = get_i32(f, path);
    config.input_channels = get_i32(f, path);
    config.num_classes = get_i32(f, path);
    config.window_length = get_i32(f, path);
    config.dropout_rate = get_f64(f, path);
    config.validate();

    TcnParams params;
    params.blocks.resize(config.dilation_levels);
    for (int i = 0; i < config.dilation_levels; ++i) {
        const int in = i == 0 ? config.input_channels : config.channels_per_block;
        const int out = config.channels_per_block;
        auto& b = params.blocks[i];
        b.conv1 = ConvParams(config.kernel_size, in, out);
        get_array(f, b.conv1.weights, path);
        get_array(f, b.conv1.bias, path);
        b.conv2 = ConvParams(config.kernel_size, out, out);
        get_array(f, b.conv2.weights, path);
        get_array(f, b.conv2.bias, path);
        char has_proj;
        get_bytes(f, &has_proj, 1, path);
        b.has_projection = has_proj != 0;
        if (b.has_projection) {
            b.projection = ConvParams(1, in, out);
            get_array(f, b.projection.weights, path);
            get_array(f, b.projection.bias, path);
        }
    }
    params.head = DenseParams(config.channels_per_block, config.num_classes);
    get_array(f, params.head.weights, path);
    get_array(f, params.head.bias, path);
    return {config, params};
}

}  // namespace lobcast
