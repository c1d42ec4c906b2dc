#pragma once

#include "lobcast/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lobcast {

// Timesteps reachable by a stack of dilation_levels residual blocks (two
// causal convs each) with dilations 2^0..2^(levels-1):
// 1 + 2*(kernel_size-1)*(2^levels - 1).
int receptive_field(int kernel_size, int dilation_levels);

struct TcnConfig {
    int kernel_size = 2;
    int dilation_levels = 6;
    int channels_per_block = 32;
    double dropout_rate = 0.1;
    int input_channels = 40;   // F = 4 * depth
    int num_classes = 3;
    int window_length = 100;   // T

    // Throws ConfigError; in particular the receptive field must cover the
    // whole window.
    void validate() const;
};

// Causal 1-D convolution parameters. weights laid out [kernel][in][out] so
// the out-channel run is contiguous.
struct ConvParams {
    int kernel_size = 0;
    int in_channels = 0;
    int out_channels = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    ConvParams() = default;
    ConvParams(int k, int in, int out)
        : kernel_size(k), in_channels(in), out_channels(out),
          weights(static_cast<size_t>(k) * in * out, 0.0), bias(out, 0.0) {}

    double& w(int j, int c, int o) {
        return weights[(static_cast<size_t>(j) * in_channels + c) * out_channels + o];
    }
    double w(int j, int c, int o) const {
        return weights[(static_cast<size_t>(j) * in_channels + c) * out_channels + o];
    }
};

// One residual block: two causal convs at the same dilation, plus a 1x1
// projection on the skip path when channel counts differ.
struct BlockParams {
    ConvParams conv1;
    ConvParams conv2;
    bool has_projection = false;
    ConvParams projection;
};

// Dense layer, weights [in][out].
struct DenseParams {
    int in = 0;
    int out = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    DenseParams() = default;
    DenseParams(int i, int o)
        : in(i), out(o), weights(static_cast<size_t>(i) * o, 0.0), bias(o, 0.0) {}
};

struct TcnParams {
    std::vector<BlockParams> blocks;  // block i uses dilation 2^i
    DenseParams head;

    size_t parameter_count() const;
};

// Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases.
TcnParams init_params(const TcnConfig& config, uint64_t seed);

enum class RunMode { train, eval };

// y[b,t,o] = bias[o] + sum_{j,c} w[j,c,o] * x[b, t-(K-1-j)*dilation, c],
// out-of-range taps read as zero (left padding only). Output keeps the input
// time length.
void causal_conv1d(const Tensor3& x, const ConvParams& p, int dilation, Tensor3& y);
Tensor3 causal_conv1d(const Tensor3& x, const ConvParams& p, int dilation);

// out = dropout(relu(conv2(dropout(relu(conv1(x)))))) + skip. Masks are 0/1
// tensors shaped like the conv outputs; pass nullptr (inference) to disable
// dropout. Train-time activations are scaled by 1/(1-rate).
Tensor3 residual_block(const Tensor3& x, const BlockParams& block, int dilation,
                       const Tensor3* mask1, const Tensor3* mask2, double dropout_rate);

// Everything backward() needs to replay the forward pass: per-block inputs,
// pre-activations, dropout masks, and the head inputs.
struct TcnTrace {
    std::vector<Tensor3> block_inputs;   // x_i per block, plus the final output last
    std::vector<Tensor3> preact1;        // conv1 output per block, pre-relu
    std::vector<Tensor3> conv2_inputs;   // relu+dropout of preact1
    std::vector<Tensor3> preact2;        // conv2 output per block, pre-relu
    std::vector<Tensor3> masks1, masks2; // empty in eval mode or when rate == 0
    Matrix head_input;                   // final-timestep features (batch x channels)
    Matrix logits;
};

// Full network: dilation_levels residual blocks, then a dense head on the
// final-timestep features. Train mode draws dropout masks from `seed`; eval
// mode is deterministic and mask-free.
Matrix tcn_forward(const Tensor3& x, const TcnParams& params, const TcnConfig& config,
                   RunMode mode, uint64_t seed);
Matrix tcn_forward_traced(const Tensor3& x, const TcnParams& params, const TcnConfig& config,
                          RunMode mode, uint64_t seed, TcnTrace& trace);

struct CrossEntropyResult {
    double loss = 0.0;  // mean over the batch
    Matrix probs;       // softmax rows
};

// Numerically stable log-sum-exp formulation.
CrossEntropyResult softmax_cross_entropy(const Matrix& logits, std::span<const int> targets);

// ---------------------------------------------------------------------------
// Checkpoints: magic + version + config block + parameter arrays in block
// order, little-endian float64. A JSON sidecar (<path>.json) mirrors the
// config for human inspection.
// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, const TcnConfig& config, const TcnParams& params);
std::pair<TcnConfig, TcnParams> load_checkpoint(const std::string& path);

}  // namespace lobcast
