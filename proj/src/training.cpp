#include "lobcast/training.hpp"

#include "lobcast/errors.hpp"
#include "lobcast/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace lobcast {

Gradients Gradients::zeros_like(const TcnParams& params) {
    Gradients g;
    g.blocks.resize(params.blocks.size());
    for (size_t i = 0; i < params.blocks.size(); ++i) {
        const auto& b = params.blocks[i];
        auto& gb = g.blocks[i];
        gb.conv1_w.assign(b.conv1.weights.size(), 0.0);
        gb.conv1_b.assign(b.conv1.bias.size(), 0.0);
        gb.conv2_w.assign(b.conv2.weights.size(), 0.0);
        gb.conv2_b.assign(b.conv2.bias.size(), 0.0);
        if (b.has_projection) {
            gb.proj_w.assign(b.projection.weights.size(), 0.0);
            gb.proj_b.assign(b.projection.bias.size(), 0.0);
        }
    }
    g.head_w.assign(params.head.weights.size(), 0.0);
    g.head_b.assign(params.head.bias.size(), 0.0);
    return g;
}

bool Gradients::all_finite() const {
    for (const auto* arr : grad_arrays(*this))
        for (double v : *arr)
            if (!std::isfinite(v)) return false;
    return true;
}

std::vector<std::vector<double>*> param_arrays(TcnParams& p) {
    std::vector<std::vector<double>*> out;
    for (auto& b : p.blocks) {
        out.push_back(&b.conv1.weights);
        out.push_back(&b.conv1.bias);
        out.push_back(&b.conv2.weights);
        out.push_back(&b.conv2.bias);
        if (b.has_projection) {
            out.push_back(&b.projection.weights);
            out.push_back(&b.projection.bias);
        }
    }
    out.push_back(&p.head.weights);
    out.push_back(&p.head.bias);
    return out;
}

std::vector<std::vector<double>*> grad_arrays(Gradients& g) {
    std::vector<std::vector<double>*> out;
    for (auto& b : g.blocks) {
        out.push_back(&b.conv1_w);
        out.push_back(&b.conv1_b);
        out.push_back(&b.conv2_w);
        out.push_back(&b.conv2_b);
        if (!b.proj_w.empty()) {
            out.push_back(&b.proj_w);
            out.push_back(&b.proj_b);
        }
    }
    out.push_back(&g.head_w);
    out.push_back(&g.head_b);
    return out;
}

std::vector<const std::vector<double>*> grad_arrays(const Gradients& g) {
    std::vector<const std::vector<double>*> out;
    for (const auto& b : g.blocks) {
        out.push_back(&b.conv1_w);
        out.push_back(&b.conv1_b);
        out.push_back(&b.conv2_w);
        out.push_back(&b.conv2_b);
        if (!b.proj_w.empty()) {
            out.push_back(&b.proj_w);
            out.push_back(&b.proj_b);
        }
    }
    out.push_back(&g.head_w);
    out.push_back(&g.head_b);
    return out;
}

AdamState AdamState::init(const TcnParams& params, double lr, double epsilon) {
    AdamState s;
    s.lr = lr;
    s.epsilon = epsilon;
    s.m = Gradients::zeros_like(params);
    s.v = Gradients::zeros_like(params);
    return s;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
    if (lr_plateau_patience < 1) throw ConfigError("lr_plateau_patience must be >= 1");
    if (!(lr_plateau_factor > 0.0) || lr_plateau_factor >= 1.0)
        throw ConfigError("lr_plateau_factor must be in (0, 1)");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (!(validation_fraction > 0.0) || !(validation_fraction < 0.5))
        throw ConfigError("validation_fraction must be in (0, 0.5)");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be positive");
}

// ---------------------------------------------------------------------------
// Convolution backward kernels. Same ownership discipline as the forward
// kernel: one thread per output element, fixed accumulation order.
// ---------------------------------------------------------------------------

namespace {

void conv_backward_data(const ConvParams& p, int dilation, const Tensor3& dy, Tensor3& dx) {
    const int cin = p.in_channels, cout = p.out_channels, kernel = p.kernel_size;
#pragma omp parallel for schedule(static)
    for (int b = 0; b < dy.batch; ++b) {
        for (int t = 0; t < dy.time; ++t) {
            const double* dyr = dy.row(b, t);
            for (int j = 0; j < kernel; ++j) {
                const int src = t - (kernel - 1 - j) * dilation;
                if (src < 0) continue;
                double* dxr = dx.row(b, src);
                const double* wj = p.weights.data() + static_cast<size_t>(j) * cin * cout;
                for (int c = 0; c < cin; ++c) {
                    const double* wr = wj + static_cast<size_t>(c) * cout;
                    double acc = 0.0;
                    for (int o = 0; o < cout; ++o) acc += wr[o] * dyr[o];
                    dxr[c] += acc;
                }
            }
        }
    }
}

void conv_backward_params(const Tensor3& x, const ConvParams& p, int dilation, const Tensor3& dy,
                          std::vector<double>& dw, std::vector<double>& db) {
    const int cin = p.in_channels, cout = p.out_channels, kernel = p.kernel_size;
    const int jc = kernel * cin;
#pragma omp parallel for schedule(static)
    for (int idx = 0; idx < jc; ++idx) {
        const int j = idx / cin;
        const int c = idx % cin;
        double* dwr = dw.data() + static_cast<size_t>(idx) * cout;
        const int shift = (kernel - 1 - j) * dilation;
        for (int b = 0; b < dy.batch; ++b) {
            for (int t = shift; t < dy.time; ++t) {
                const double xv = x.at(b, t - shift, c);
                const double* dyr = dy.row(b, t);
                for (int o = 0; o < cout; ++o) dwr[o] += xv * dyr[o];
            }
        }
    }
    for (int b = 0; b < dy.batch; ++b)
        for (int t = 0; t < dy.time; ++t) {
            const double* dyr = dy.row(b, t);
            for (int o = 0; o < cout; ++o) db[o] += dyr[o];
        }
}

// d(dropout(relu(a))) -> da, in place on d. Pre-activation gate plus the
// inverted-dropout scaling used in the forward pass.
void backprop_relu_dropout(Tensor3& d, const Tensor3& preact, const Tensor3* mask, double rate) {
    if (mask && mask->data.size() == d.data.size()) {
        const double scale = 1.0 / (1.0 - rate);
        for (size_t i = 0; i < d.data.size(); ++i)
            d.data[i] = preact.data[i] > 0.0 ? d.data[i] * mask->data[i] * scale : 0.0;
    } else {
        for (size_t i = 0; i < d.data.size(); ++i)
            d.data[i] = preact.data[i] > 0.0 ? d.data[i] : 0.0;
    }
}

}  // namespace

BackwardResult backward(const Tensor3& batch, std::span<const int> targets,
                        const TcnParams& params, const TcnConfig& config, uint64_t dropout_seed) {
    if (static_cast<int>(targets.size()) != batch.batch)
        throw DimensionError("backward: batch/target size mismatch");

    TcnTrace trace;
    tcn_forward_traced(batch, params, config, RunMode::train, dropout_seed, trace);
    const CrossEntropyResult ce = softmax_cross_entropy(trace.logits, targets);
    if (!std::isfinite(ce.loss)) throw DivergenceError("non-finite loss in backward pass");

    BackwardResult result;
    result.loss = ce.loss;
    result.probs = ce.probs;
    result.grads = Gradients::zeros_like(params);
    Gradients& g = result.grads;

    const int nb = batch.batch;
    const int classes = config.num_classes;
    const int channels = config.channels_per_block;

    // d loss / d logits = (softmax - one_hot) / batch
    Matrix dz(nb, classes);
    for (int b = 0; b < nb; ++b) {
        const double* p = ce.probs.row(b);
        double* d = dz.row(b);
        for (int c = 0; c < classes; ++c) d[c] = p[c] / nb;
        d[targets[b]] -= 1.0 / nb;
    }

    // Head.
    for (int c = 0; c < channels; ++c) {
        double* dwr = g.head_w.data() + static_cast<size_t>(c) * classes;
        for (int b = 0; b < nb; ++b) {
            const double fv = trace.head_input.at(b, c);
            const double* d = dz.row(b);
            for (int o = 0; o < classes; ++o) dwr[o] += fv * d[o];
        }
    }
    for (int b = 0; b < nb; ++b) {
        const double* d = dz.row(b);
        for (int o = 0; o < classes; ++o) g.head_b[o] += d[o];
    }

    // Gradient w.r.t. the final block output: only the last timestep feeds
    // the head.
    const int levels = static_cast<int>(params.blocks.size());
    Tensor3 d_cur(nb, config.window_length, channels);
    for (int b = 0; b < nb; ++b) {
        double* row = d_cur.row(b, config.window_length - 1);
        const double* d = dz.row(b);
        for (int c = 0; c < channels; ++c) {
            const double* wr = params.head.weights.data() + static_cast<size_t>(c) * classes;
            double acc = 0.0;
            for (int o = 0; o < classes; ++o) acc += wr[o] * d[o];
            row[c] = acc;
        }
    }

    const bool use_dropout = config.dropout_rate > 0.0;
    for (int i = levels - 1; i >= 0; --i) {
        const auto& block = params.blocks[i];
        auto& gb = g.blocks[i];
        const int dilation = 1 << i;
        const Tensor3& x_in = trace.block_inputs[i];
        const Tensor3* mask1 = use_dropout ? &trace.masks1[i] : nullptr;
        const Tensor3* mask2 = use_dropout ? &trace.masks2[i] : nullptr;

        Tensor3 dx(x_in.batch, x_in.time, x_in.channels);

        // Skip path.
        if (block.has_projection) {
            conv_backward_params(x_in, block.projection, 1, d_cur, gb.proj_w, gb.proj_b);
            conv_backward_data(block.projection, 1, d_cur, dx);
        } else {
            dx.data = d_cur.data;
        }

        // Activation path: d_out -> conv2 -> conv1.
        Tensor3 d_a2 = d_cur;
        backprop_relu_dropout(d_a2, trace.preact2[i], mask2, config.dropout_rate);
        conv_backward_params(trace.conv2_inputs[i], block.conv2, dilation, d_a2, gb.conv2_w,
                             gb.conv2_b);
        Tensor3 d_h1(nb, config.window_length, block.conv2.in_channels);
        conv_backward_data(block.conv2, dilation, d_a2, d_h1);

        backprop_relu_dropout(d_h1, trace.preact1[i], mask1, config.dropout_rate);
        conv_backward_params(x_in, block.conv1, dilation, d_h1, gb.conv1_w, gb.conv1_b);
        conv_backward_data(block.conv1, dilation, d_h1, dx);

        d_cur = std::move(dx);
    }

    if (!g.all_finite()) throw DivergenceError("non-finite gradients in backward pass");
    return result;
}

void adam_step(TcnParams& params, const Gradients& grads, AdamState& state) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

    auto ps = param_arrays(params);
    auto gs = grad_arrays(grads);
    auto ms = grad_arrays(state.m);
    auto vs = grad_arrays(state.v);
    if (ps.size() != gs.size() || ps.size() != ms.size())
        throw DimensionError("adam_step: parameter/gradient structure mismatch");

    for (size_t a = 0; a < ps.size(); ++a) {
        auto& p = *ps[a];
        const auto& g = *gs[a];
        auto& m = *ms[a];
        auto& v = *vs[a];
        if (p.size() != g.size())
            throw DimensionError("adam_step: array size mismatch");
        for (size_t i = 0; i < p.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

LrController::Outcome LrController::observe(double val_loss, double& lr, double factor,
                                            int plateau_patience, int stop_patience) {
    Outcome o;
    if (val_loss < best) {
        best = val_loss;
        plateau_wait = 0;
        stop_wait = 0;
        o.improved = true;
        return o;
    }
    ++plateau_wait;
    ++stop_wait;
    if (plateau_wait >= plateau_patience) {
        lr *= factor;
        plateau_wait = 0;
        ++plateau_events;
        o.reduced_lr = true;
    }
    if (stop_wait >= stop_patience) o.stop = true;
    return o;
}

namespace {

struct EvalStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

EvalStats evaluate(const SampleSource& set, const TcnParams& params, const TcnConfig& config,
                   int batch_size) {
    EvalStats out;
    const int n = set.size();
    double loss_sum = 0.0;
    int correct = 0;
    std::vector<int> targets;
    for (int start = 0; start < n; start += batch_size) {
        const int bs = std::min(batch_size, n - start);
        Tensor3 batch(bs, config.window_length, config.input_channels);
        targets.resize(bs);
        for (int i = 0; i < bs; ++i) {
            set.fill_window(start + i, batch.row(i, 0));
            targets[i] = set.label(start + i);
        }
        const Matrix logits = tcn_forward(batch, params, config, RunMode::eval, 0);
        const CrossEntropyResult ce = softmax_cross_entropy(logits, targets);
        loss_sum += ce.loss * bs;
        for (int i = 0; i < bs; ++i) {
            const double* row = logits.row(i);
            int arg = 0;
            for (int c = 1; c < config.num_classes; ++c)
                if (row[c] > row[arg]) arg = c;
            if (arg == targets[i]) ++correct;
        }
    }
    out.loss = n > 0 ? loss_sum / n : 0.0;
    out.accuracy = n > 0 ? static_cast<double>(correct) / n : 0.0;
    return out;
}

}  // namespace

FitResult fit(const SampleSource& train, const SampleSource& val, const TrainConfig& config,
              const TcnConfig& tcn_config, std::ostream* epoch_log) {
    config.validate();
    tcn_config.validate();
    if (train.size() == 0 || val.size() == 0)
        throw ConfigError("fit: train and validation sets must be non-empty");

    TcnParams params = init_params(tcn_config, mix_seed(config.seed, 0x706172616dULL));
    AdamState adam = AdamState::init(params, config.learning_rate, config.adam_epsilon);
    Rng shuffle_rng(mix_seed(config.seed, 0x73687566ULL));
    LrController controller;

    FitResult result;
    result.params = params;
    result.stop_reason = "max_epochs";
    result.best_val_loss = std::numeric_limits<double>::infinity();

    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<int> targets;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        int correct = 0;
        int batch_index = 0;
        for (int start = 0; start < train.size(); start += config.batch_size, ++batch_index) {
            const int bs = std::min(config.batch_size, train.size() - start);
            Tensor3 batch(bs, tcn_config.window_length, tcn_config.input_channels);
            targets.resize(bs);
            for (int i = 0; i < bs; ++i) {
                const int idx = order[start + i];
                train.fill_window(idx, batch.row(i, 0));
                targets[i] = train.label(idx);
            }
            const uint64_t dropout_seed =
                mix_seed(config.seed, (static_cast<uint64_t>(epoch) << 24) ^
                                          static_cast<uint64_t>(batch_index));
            BackwardResult br;
            try {
                br = backward(batch, targets, params, tcn_config, dropout_seed);
            } catch (const DivergenceError& e) {
                throw DivergenceError(std::string(e.what()) + " (epoch " +
                                      std::to_string(epoch) + ", batch " +
                                      std::to_string(batch_index) + ")");
            }
            adam_step(params, br.grads, adam);
            loss_sum += br.loss * bs;
            for (int i = 0; i < bs; ++i) {
                const double* row = br.probs.row(i);
                int arg = 0;
                for (int c = 1; c < tcn_config.num_classes; ++c)
                    if (row[c] > row[arg]) arg = c;
                if (arg == targets[i]) ++correct;
            }
        }

        const EvalStats vs = evaluate(val, params, tcn_config, config.batch_size);
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / train.size();
        stats.train_accuracy = static_cast<double>(correct) / train.size();
        stats.val_loss = vs.loss;
        stats.val_accuracy = vs.accuracy;
        stats.lr_in_effect = adam.lr;
        result.history.push_back(stats);

        if (epoch_log) {
            nlohmann::json line = {
                {"epoch", stats.epoch},           {"train_loss", stats.train_loss},
                {"val_loss", stats.val_loss},     {"train_accuracy", stats.train_accuracy},
                {"val_accuracy", stats.val_accuracy}, {"lr_in_effect", stats.lr_in_effect},
            };
            (*epoch_log) << line.dump() << "\n";
        }

        const auto outcome = controller.observe(vs.loss, adam.lr, config.lr_plateau_factor,
                                                config.lr_plateau_patience,
                                                config.early_stop_patience);
        if (outcome.improved) {
            result.params = params;
            result.best_epoch = epoch;
            result.best_val_loss = vs.loss;
        }
        if (outcome.stop) {
            result.stop_reason = "early_stop";
            break;
        }
    }
    return result;
}

}  // namespace lobcast
