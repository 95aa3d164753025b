#include "latinlm/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <utility>

namespace latinlm {

AdamOptimizer::AdamOptimizer(std::vector<Tensor*> params, AdamOptions opts)
    : params_(std::move(params)), opts_(opts) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor* p : params_) {
        m_.push_back(Tensor::zeros(p->shape));
        v_.push_back(Tensor::zeros(p->shape));
    }
}

void AdamOptimizer::step(const std::vector<Tensor*>& grads, double lr, uint64_t t) {
    if (grads.size() != params_.size()) {
        throw std::invalid_argument("AdamOptimizer: gradient list mismatch");
    }
    const double b1 = opts_.beta1;
    const double b2 = opts_.beta2;
    const double correction =
        std::sqrt(1.0 - std::pow(b2, static_cast<double>(t))) /
        (1.0 - std::pow(b1, static_cast<double>(t)));
    const double alpha = lr * correction;

    for (size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = *params_[i];
        const Tensor& g = *grads[i];
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (size_t j = 0; j < p.data.size(); ++j) {
            const double gj = g.data[j];
            m.data[j] = b1 * m.data[j] + (1.0 - b1) * gj;
            v.data[j] = b2 * v.data[j] + (1.0 - b2) * gj * gj;
            p.data[j] -= alpha * m.data[j] / (std::sqrt(v.data[j]) + opts_.epsilon);
        }
    }
}

std::vector<Tensor*> param_tensor_list(EncoderState& state) {
    std::vector<Tensor*> out;
    state.for_each_param([&](const std::string&, Tensor& t) { out.push_back(&t); });
    return out;
}

namespace {

void zero_params(EncoderState& s) {
    s.for_each_param([](const std::string&, Tensor& t) { t.fill(0.0); });
}

// loss over one example accumulated into grads (scaled), returns summed CE
// and the number of targets
std::pair<Real, size_t> example_loss_and_grad(const EncoderState& state,
                                              const MaskedExample& ex,
                                              bool train_mode, Rng* rng,
                                              Real loss_scale,
                                              EncoderState* grads) {
    if (ex.mask_positions.empty()) return {0.0, 0};
    ForwardCache fwd = forward(state, ex.input_ids,
                               static_cast<int>(ex.attention_length), train_mode, rng);
    MlmCache mlm = mlm_forward(state, fwd, ex.mask_positions);
    Real sum_ce = 0.0;
    const int V = state.config.vocab_size;
    for (size_t i = 0; i < ex.original_ids.size(); ++i) {
        const Real p = mlm.probs.data[i * static_cast<size_t>(V) +
                                      static_cast<size_t>(ex.original_ids[i])];
        sum_ce += -std::log(std::max(p, std::numeric_limits<Real>::min()));
    }
    if (grads != nullptr) {
        Tensor dfinal = mlm_backward(state, fwd, mlm, ex.original_ids, loss_scale, *grads);
        backward_from_hidden(state, fwd, dfinal, *grads);
    }
    return {sum_ce, ex.original_ids.size()};
}

}  // namespace

TrainResult train_mlm(EncoderState& state, const std::vector<MaskedExample>& examples,
                      const TrainOptions& opts) {
    TrainResult result;
    if (opts.steps <= 0) return result;
    if (examples.empty()) {
        throw std::invalid_argument("train_mlm: no examples");
    }
    for (const auto& ex : examples) {
        if (ex.input_ids.size() > static_cast<size_t>(state.config.max_positions)) {
            throw std::invalid_argument("train_mlm: example longer than max_positions");
        }
    }

    AdamOptimizer optimizer(param_tensor_list(state), opts.adam);
    EncoderState grads = EncoderState::zeros_like(state);
    const std::vector<Tensor*> grad_list = param_tensor_list(grads);
    Rng rng(mix_seed(opts.seed, "train-mlm"));

    const int warmup_steps = static_cast<int>(
        std::ceil(opts.adam.warmup_fraction * static_cast<double>(opts.steps)));
    size_t cursor = 0;

    result.loss_trace.reserve(static_cast<size_t>(opts.steps));
    for (int step = 0; step < opts.steps; ++step) {
        // gather the batch first so the total target count sets the scale
        std::vector<const MaskedExample*> batch;
        batch.reserve(static_cast<size_t>(opts.batch_size));
        size_t total_targets = 0;
        for (int b = 0; b < opts.batch_size; ++b) {
            const MaskedExample& ex = examples[cursor];
            cursor = (cursor + 1) % examples.size();
            batch.push_back(&ex);
            total_targets += ex.mask_positions.size();
        }
        if (total_targets == 0) {
            result.loss_trace.push_back(0.0);
            continue;
        }

        zero_params(grads);
        const Real scale = 1.0 / static_cast<Real>(total_targets);
        Real sum_ce = 0.0;
        for (const MaskedExample* ex : batch) {
            auto [ce, n] = example_loss_and_grad(state, *ex, true, &rng, scale, &grads);
            (void)n;
            sum_ce += ce;
        }
        const Real mean_loss = sum_ce * scale;
        if (!std::isfinite(mean_loss)) {
            throw std::runtime_error("train_mlm: non-finite loss at step " +
                                     std::to_string(step));
        }

        double lr = opts.adam.learning_rate;
        if (warmup_steps > 0 && step < warmup_steps) {
            lr *= static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
        }
        optimizer.step(grad_list, lr, state.step_count + 1);
        state.step_count += 1;
        result.loss_trace.push_back(mean_loss);
    }
    return result;
}

double masked_token_accuracy(const EncoderState& state,
                             const std::vector<MaskedExample>& examples) {
    size_t correct = 0;
    size_t total = 0;
    const int V = state.config.vocab_size;
    for (const auto& ex : examples) {
        if (ex.mask_positions.empty()) continue;
        ForwardCache fwd = forward(state, ex.input_ids,
                                   static_cast<int>(ex.attention_length), false, nullptr);
        MlmCache mlm = mlm_forward(state, fwd, ex.mask_positions);
        for (size_t i = 0; i < ex.original_ids.size(); ++i) {
            const Real* row = mlm.probs.ptr() + i * static_cast<size_t>(V);
            int argmax = 0;
            for (int j = 1; j < V; ++j) {
                if (row[j] > row[argmax]) argmax = j;
            }
            if (argmax == ex.original_ids[i]) ++correct;
            ++total;
        }
    }
    if (total == 0) return 0.0;
    return static_cast<double>(correct) / static_cast<double>(total);
}

void write_loss_trace_csv(const std::string& path, const std::vector<double>& trace) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "step,loss\n";
    out.precision(17);
    for (size_t i = 0; i < trace.size(); ++i) {
        out << i << ',' << trace[i] << '\n';
    }
}

double gradient_check(const EncoderState& state, const MaskedExample& example,
                      const GradCheckOptions& opts) {
    if (example.mask_positions.empty()) {
        throw std::invalid_argument("gradient_check: example has no mask positions");
    }
    EncoderState work = state;  // mutated for the finite-difference probes

    auto loss_at = [&]() -> Real {
        auto [ce, n] = example_loss_and_grad(work, example, false, nullptr, 0.0, nullptr);
        return ce / static_cast<Real>(n);
    };

    // analytic gradients of the mean loss
    EncoderState grads = EncoderState::zeros_like(state);
    {
        const Real scale = 1.0 / static_cast<Real>(example.mask_positions.size());
        example_loss_and_grad(work, example, false, nullptr, scale, &grads);
    }
    if (!opts.flip_sign_tensor.empty()) {
        bool found = false;
        grads.for_each_param([&](const std::string& name, Tensor& t) {
            if (name == opts.flip_sign_tensor) {
                for (Real& v : t.data) v = -v;
                found = true;
            }
        });
        if (!found) {
            throw std::invalid_argument("gradient_check: no tensor named " +
                                        opts.flip_sign_tensor);
        }
    }

    std::vector<std::pair<std::string, Tensor*>> param_list;
    work.for_each_param([&](const std::string& name, Tensor& t) {
        param_list.emplace_back(name, &t);
    });
    std::vector<Tensor*> grad_list;
    grads.for_each_param([&](const std::string&, Tensor& t) { grad_list.push_back(&t); });

    const size_t per_tensor = std::max<size_t>(
        1, (static_cast<size_t>(opts.min_samples) + param_list.size() - 1) /
               param_list.size());
    Rng rng(mix_seed(opts.seed, "grad-check"));

    double max_rel = 0.0;
    for (size_t ti = 0; ti < param_list.size(); ++ti) {
        Tensor& p = *param_list[ti].second;
        const Tensor& g = *grad_list[ti];
        for (size_t s = 0; s < per_tensor; ++s) {
            const size_t idx = static_cast<size_t>(rng.uniform_below(p.data.size()));
            const Real saved = p.data[idx];
            p.data[idx] = saved + opts.epsilon;
            const Real up = loss_at();
            p.data[idx] = saved - opts.epsilon;
            const Real down = loss_at();
            p.data[idx] = saved;
            const Real numeric = (up - down) / (2.0 * opts.epsilon);
            const Real analytic = g.data[idx];
            const Real denom = std::max<Real>(std::abs(analytic) + std::abs(numeric), 1e-6);
            const Real rel = std::abs(analytic - numeric) / denom;
            if (rel > max_rel) max_rel = rel;
        }
    }
    return max_rel;
}

}  // namespace latinlm
