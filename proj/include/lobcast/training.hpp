#pragma once

#include "lobcast/tcn.hpp"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace lobcast {

// Per-block gradient arrays; projection vectors are empty when the block has
// no projection. Shapes mirror TcnParams exactly.
struct BlockGrads {
    std::vector<double> conv1_w, conv1_b;
    std::vector<double> conv2_w, conv2_b;
    std::vector<double> proj_w, proj_b;
};

struct Gradients {
    std::vector<BlockGrads> blocks;
    std::vector<double> head_w, head_b;

    static Gradients zeros_like(const TcnParams& params);
    bool all_finite() const;
};

// Parameter arrays in a fixed traversal order (per block: conv1 w/b, conv2
// w/b, projection w/b; then head w/b). Gradients and Adam moments are
// enumerated in the same order.
std::vector<std::vector<double>*> param_arrays(TcnParams& p);
std::vector<std::vector<double>*> grad_arrays(Gradients& g);
std::vector<const std::vector<double>*> grad_arrays(const Gradients& g);

struct AdamState {
    int64_t step = 0;
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;
    Gradients m, v;

    static AdamState init(const TcnParams& params, double lr, double epsilon);
};

struct TrainConfig {
    int batch_size = 128;
    int early_stop_patience = 4;
    int lr_plateau_patience = 2;
    double lr_plateau_factor = 0.5;
    int max_epochs = 100;
    double validation_fraction = 0.1;  // taken from the end of the training period
    double learning_rate = 0.01;
    double adam_epsilon = 1e-7;
    uint64_t seed = 0;

    void validate() const;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
    double lr_in_effect = 0.0;
};

struct BackwardResult {
    double loss = 0.0;
    Gradients grads;
    Matrix probs;  // train-mode softmax rows, for logging accuracy
};

// Exact reverse-mode derivatives of the mean batch cross entropy with respect
// to every parameter. Replays the train-mode forward pass with the dropout
// masks drawn from dropout_seed. Throws DivergenceError on non-finite loss.
BackwardResult backward(const Tensor3& batch, std::span<const int> targets,
                        const TcnParams& params, const TcnConfig& config, uint64_t dropout_seed);

// Bias-corrected Adam update; increments state.step.
void adam_step(TcnParams& params, const Gradients& grads, AdamState& state);

// Plateau / early-stop bookkeeping shared by fit and its tests.
// "Improvement" is a strict decrease of the best validation loss seen so far.
// After lr_plateau_patience consecutive non-improving epochs the learning
// rate is multiplied by the factor (and the plateau counter resets); after
// early_stop_patience consecutive non-improving epochs training stops.
struct LrController {
    double best = std::numeric_limits<double>::infinity();
    int plateau_wait = 0;
    int stop_wait = 0;
    int plateau_events = 0;

    struct Outcome {
        bool improved = false;
        bool reduced_lr = false;
        bool stop = false;
    };

    Outcome observe(double val_loss, double& lr, double factor, int plateau_patience,
                    int stop_patience);
};

// Read-only view of a labeled window set; fit gathers batches through it.
class SampleSource {
public:
    virtual ~SampleSource() = default;
    virtual int size() const = 0;
    virtual int label(int i) const = 0;
    // Copies window i (window_length x input_channels doubles) into dst.
    virtual void fill_window(int i, double* dst) const = 0;
};

struct FitResult {
    TcnParams params;  // parameters from the best-validation-loss epoch
    std::vector<EpochStats> history;
    std::string stop_reason;  // "early_stop" | "max_epochs"
    int best_epoch = 0;
    double best_val_loss = 0.0;
};

// Shuffled minibatch training with Adam, LR-on-plateau, and early stopping.
// Bit-reproducible for fixed (data, config, seed). If epoch_log is non-null,
// one JSON line per epoch is appended to it.
FitResult fit(const SampleSource& train, const SampleSource& val, const TrainConfig& config,
              const TcnConfig& tcn_config, std::ostream* epoch_log = nullptr);

}  // namespace lobcast
