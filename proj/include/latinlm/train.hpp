#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "latinlm/corpus.hpp"
#include "latinlm/encoder.hpp"

namespace latinlm {

struct AdamOptions {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double warmup_fraction = 0.01;  // linear warmup over this share of steps
};

// Adam over an arbitrary set of parameter tensors, so the encoder and any
// task head can be optimized jointly. Moments are owned per slot.
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<Tensor*> params, AdamOptions opts);

    // grads must parallel the params list; lr may vary per step (warmup);
    // t is the 1-based update index used for bias correction
    void step(const std::vector<Tensor*>& grads, double lr, uint64_t t);

    const AdamOptions& options() const { return opts_; }

private:
    std::vector<Tensor*> params_;
    AdamOptions opts_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

std::vector<Tensor*> param_tensor_list(EncoderState& state);

struct TrainOptions {
    int steps = 0;
    int batch_size = 16;
    AdamOptions adam;
    uint64_t seed = 0;
};

struct TrainResult {
    std::vector<double> loss_trace;  // per-step mean loss over masked tokens
};

// Cross-entropy at mask positions only, batched by cycling through examples
// in order. Deterministic given (state, examples, options). Throws with the
// offending step number if the loss stops being finite.
TrainResult train_mlm(EncoderState& state, const std::vector<MaskedExample>& examples,
                      const TrainOptions& opts);

// Top-1 accuracy at mask positions over a fixed example set (eval mode).
double masked_token_accuracy(const EncoderState& state,
                             const std::vector<MaskedExample>& examples);

void write_loss_trace_csv(const std::string& path, const std::vector<double>& trace);

struct GradCheckOptions {
    double epsilon = 1e-4;
    int min_samples = 200;       // total sampled parameters, spread over tensors
    uint64_t seed = 0;
    std::string flip_sign_tensor;  // test hook: corrupt one tensor's gradient
};

// Max relative error between analytic gradients and central finite
// differences, sampled across every parameter tensor. Dropout is disabled.
double gradient_check(const EncoderState& state, const MaskedExample& example,
                      const GradCheckOptions& opts = {});

}  // namespace latinlm
