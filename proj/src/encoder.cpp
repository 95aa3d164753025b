#include "latinlm/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace latinlm {

namespace {

constexpr Real kLnEps = 1e-12;
constexpr Real kInvSqrt2 = 0.70710678118654752440;
constexpr Real kInvSqrt2Pi = 0.39894228040143267794;

Real gelu(Real x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

Real gelu_grad(Real x) {
    return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
           x * std::exp(-0.5 * x * x) * kInvSqrt2Pi;
}

// y = g * (x - mean) * rstd + b, per row
void layer_norm_forward(const Tensor& x, const Tensor& g, const Tensor& b,
                        Tensor& y, LnCache& cache) {
    const int rows = x.shape[0];
    const int cols = x.shape[1];
    cache.mean.resize(static_cast<size_t>(rows));
    cache.rstd.resize(static_cast<size_t>(rows));
    for (int i = 0; i < rows; ++i) {
        const Real* xr = x.ptr() + static_cast<size_t>(i) * cols;
        Real* yr = y.ptr() + static_cast<size_t>(i) * cols;
        Real mean = 0.0;
        for (int j = 0; j < cols; ++j) mean += xr[j];
        mean /= cols;
        Real var = 0.0;
        for (int j = 0; j < cols; ++j) {
            const Real d = xr[j] - mean;
            var += d * d;
        }
        var /= cols;
        const Real rstd = 1.0 / std::sqrt(var + kLnEps);
        cache.mean[static_cast<size_t>(i)] = mean;
        cache.rstd[static_cast<size_t>(i)] = rstd;
        for (int j = 0; j < cols; ++j) {
            yr[j] = g.data[static_cast<size_t>(j)] * (xr[j] - mean) * rstd +
                    b.data[static_cast<size_t>(j)];
        }
    }
}

void layer_norm_backward(const Tensor& x, const Tensor& g, const LnCache& cache,
                         const Tensor& dy, Tensor& dx, Tensor& dg, Tensor& db) {
    const int rows = x.shape[0];
    const int cols = x.shape[1];
    for (int i = 0; i < rows; ++i) {
        const Real* xr = x.ptr() + static_cast<size_t>(i) * cols;
        const Real* dyr = dy.ptr() + static_cast<size_t>(i) * cols;
        Real* dxr = dx.ptr() + static_cast<size_t>(i) * cols;
        const Real mean = cache.mean[static_cast<size_t>(i)];
        const Real rstd = cache.rstd[static_cast<size_t>(i)];
        Real sum_dxhat = 0.0;
        Real sum_dxhat_xhat = 0.0;
        for (int j = 0; j < cols; ++j) {
            const Real xhat = (xr[j] - mean) * rstd;
            const Real dxhat = dyr[j] * g.data[static_cast<size_t>(j)];
            dg.data[static_cast<size_t>(j)] += dyr[j] * xhat;
            db.data[static_cast<size_t>(j)] += dyr[j];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
        }
        const Real inv_n = 1.0 / cols;
        for (int j = 0; j < cols; ++j) {
            const Real xhat = (xr[j] - mean) * rstd;
            const Real dxhat = dyr[j] * g.data[static_cast<size_t>(j)];
            dxr[j] += rstd * (dxhat - inv_n * sum_dxhat - xhat * inv_n * sum_dxhat_xhat);
        }
    }
}

// inverted dropout; mask entries hold 0 or 1/keep
void dropout_forward(Tensor& x, Tensor& mask, double p, Rng& rng) {
    mask = Tensor::zeros(x.shape);
    const Real scale = 1.0 / (1.0 - p);
    for (size_t i = 0; i < x.data.size(); ++i) {
        if (!rng.bernoulli(p)) {
            mask.data[i] = scale;
            x.data[i] *= scale;
        } else {
            x.data[i] = 0.0;
        }
    }
}

// y = x * W + b over rows
void linear_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y) {
    mat(y).noalias() = mat(x) * mat(w);
    for (int i = 0; i < y.shape[0]; ++i) {
        Real* yr = y.ptr() + static_cast<size_t>(i) * y.shape[1];
        for (int j = 0; j < y.shape[1]; ++j) yr[j] += b.data[static_cast<size_t>(j)];
    }
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy,
                     Tensor& dx, Tensor& dw, Tensor& db, bool accumulate_dx) {
    mat(dw).noalias() += mat(x).transpose() * mat(dy);
    for (int i = 0; i < dy.shape[0]; ++i) {
        const Real* dyr = dy.ptr() + static_cast<size_t>(i) * dy.shape[1];
        for (int j = 0; j < dy.shape[1]; ++j) db.data[static_cast<size_t>(j)] += dyr[j];
    }
    if (accumulate_dx) {
        mat(dx).noalias() += mat(dy) * mat(w).transpose();
    } else {
        mat(dx).noalias() = mat(dy) * mat(w).transpose();
    }
}

void init_tensor(const std::string& name, Tensor& t, Rng& rng, double stddev) {
    const bool gain = name.size() >= 7 && name.compare(name.size() - 7, 7, "ln_gain") == 0;
    const bool bias = !gain && (name.back() == 'b' || name.compare(name.size() - 2, 2, "b1") == 0 ||
                                name.compare(name.size() - 2, 2, "b2") == 0 ||
                                name.compare(name.size() - 4, 4, "bias") == 0);
    if (gain) {
        t.fill(1.0);
    } else if (bias) {
        t.fill(0.0);
    } else {
        for (Real& v : t.data) v = rng.normal(0.0, stddev);
    }
}

}  // namespace

void TransformerConfig::validate() const {
    if (num_layers < 0) throw std::invalid_argument("num_layers must be >= 0");
    if (hidden_size <= 0 || num_heads <= 0 || hidden_size % num_heads != 0) {
        throw std::invalid_argument("hidden_size must be a positive multiple of num_heads");
    }
    if (intermediate_size <= 0) throw std::invalid_argument("intermediate_size must be positive");
    if (max_positions <= 0) throw std::invalid_argument("max_positions must be positive");
    if (vocab_size <= SubwordVocab::kNumSpecials) {
        throw std::invalid_argument("vocab_size must exceed the special-token count");
    }
    if (type_vocab_size <= 0) throw std::invalid_argument("type_vocab_size must be positive");
    if (hidden_dropout < 0.0 || hidden_dropout >= 1.0 ||
        attention_dropout < 0.0 || attention_dropout >= 1.0) {
        throw std::invalid_argument("dropout probabilities must lie in [0, 1)");
    }
    if (initializer_range <= 0.0) throw std::invalid_argument("initializer_range must be positive");
}

EncoderState EncoderState::zeros_like(const EncoderState& other) {
    EncoderState s;
    s.config = other.config;
    const auto& c = s.config;
    const int h = c.hidden_size;
    const int ffi = c.intermediate_size;
    s.token_emb = Tensor::zeros({c.vocab_size, h});
    s.pos_emb = Tensor::zeros({c.max_positions, h});
    s.seg_emb = Tensor::zeros({c.type_vocab_size, h});
    s.emb_ln_g = Tensor::zeros({h});
    s.emb_ln_b = Tensor::zeros({h});
    s.layers.resize(static_cast<size_t>(c.num_layers));
    for (auto& l : s.layers) {
        l.q_w = Tensor::zeros({h, h});
        l.q_b = Tensor::zeros({h});
        l.k_w = Tensor::zeros({h, h});
        l.k_b = Tensor::zeros({h});
        l.v_w = Tensor::zeros({h, h});
        l.v_b = Tensor::zeros({h});
        l.attn_out_w = Tensor::zeros({h, h});
        l.attn_out_b = Tensor::zeros({h});
        l.attn_ln_g = Tensor::zeros({h});
        l.attn_ln_b = Tensor::zeros({h});
        l.ffn_w1 = Tensor::zeros({h, ffi});
        l.ffn_b1 = Tensor::zeros({ffi});
        l.ffn_w2 = Tensor::zeros({ffi, h});
        l.ffn_b2 = Tensor::zeros({h});
        l.ffn_ln_g = Tensor::zeros({h});
        l.ffn_ln_b = Tensor::zeros({h});
    }
    s.mlm_tr_w = Tensor::zeros({h, h});
    s.mlm_tr_b = Tensor::zeros({h});
    s.mlm_ln_g = Tensor::zeros({h});
    s.mlm_ln_b = Tensor::zeros({h});
    if (!c.tie_mlm_weights) s.mlm_dec_w = Tensor::zeros({c.vocab_size, h});
    s.mlm_bias = Tensor::zeros({c.vocab_size});
    return s;
}

EncoderState EncoderState::init(const TransformerConfig& config) {
    config.validate();
    EncoderState proto;
    proto.config = config;
    EncoderState s = zeros_like(proto);
    Rng rng(mix_seed(config.seed, "encoder-init"));
    s.for_each_param([&](const std::string& name, Tensor& t) {
        init_tensor(name, t, rng, config.initializer_range);
    });
    return s;
}

void EncoderState::for_each_param(
    const std::function<void(const std::string&, Tensor&)>& fn) {
    fn("embeddings.token", token_emb);
    fn("embeddings.position", pos_emb);
    fn("embeddings.segment", seg_emb);
    fn("embeddings.ln_gain", emb_ln_g);
    fn("embeddings.ln_bias", emb_ln_b);
    for (size_t i = 0; i < layers.size(); ++i) {
        const std::string p = "layer." + std::to_string(i) + ".";
        LayerParams& l = layers[i];
        fn(p + "attn.q_w", l.q_w);
        fn(p + "attn.q_b", l.q_b);
        fn(p + "attn.k_w", l.k_w);
        fn(p + "attn.k_b", l.k_b);
        fn(p + "attn.v_w", l.v_w);
        fn(p + "attn.v_b", l.v_b);
        fn(p + "attn.out_w", l.attn_out_w);
        fn(p + "attn.out_b", l.attn_out_b);
        fn(p + "attn.ln_gain", l.attn_ln_g);
        fn(p + "attn.ln_bias", l.attn_ln_b);
        fn(p + "ffn.w1", l.ffn_w1);
        fn(p + "ffn.b1", l.ffn_b1);
        fn(p + "ffn.w2", l.ffn_w2);
        fn(p + "ffn.b2", l.ffn_b2);
        fn(p + "ffn.ln_gain", l.ffn_ln_g);
        fn(p + "ffn.ln_bias", l.ffn_ln_b);
    }
    fn("mlm.transform_w", mlm_tr_w);
    fn("mlm.transform_b", mlm_tr_b);
    fn("mlm.ln_gain", mlm_ln_g);
    fn("mlm.ln_bias", mlm_ln_b);
    if (!config.tie_mlm_weights) fn("mlm.decoder_w", mlm_dec_w);
    fn("mlm.bias", mlm_bias);
}

void EncoderState::for_each_param(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
    auto* self = const_cast<EncoderState*>(this);
    self->for_each_param([&](const std::string& name, Tensor& t) {
        fn(name, static_cast<const Tensor&>(t));
    });
}

size_t EncoderState::num_param_tensors() const {
    size_t n = 0;
    for_each_param([&](const std::string&, const Tensor&) { ++n; });
    return n;
}

ForwardCache forward(const EncoderState& state, const std::vector<int>& ids,
                     int attention_length, bool train_mode, Rng* rng) {
    const auto& c = state.config;
    const int S = static_cast<int>(ids.size());
    if (S == 0) throw std::invalid_argument("forward: empty input");
    if (S > c.max_positions) {
        throw std::invalid_argument("forward: sequence length " + std::to_string(S) +
                                    " exceeds max_positions " +
                                    std::to_string(c.max_positions));
    }
    if (attention_length <= 0 || attention_length > S) {
        throw std::invalid_argument("forward: attention_length out of range");
    }
    for (int id : ids) {
        if (id < 0 || id >= c.vocab_size) {
            throw std::invalid_argument("forward: id " + std::to_string(id) +
                                        " outside vocabulary of size " +
                                        std::to_string(c.vocab_size));
        }
    }
    if (train_mode && rng == nullptr &&
        (c.hidden_dropout > 0.0 || c.attention_dropout > 0.0)) {
        throw std::invalid_argument("forward: train mode with dropout needs an rng");
    }

    const int H = c.hidden_size;
    const int nh = c.num_heads;
    const int dh = c.head_dim();
    const Real scale = 1.0 / std::sqrt(static_cast<Real>(dh));
    const int A = attention_length;

    ForwardCache fc;
    fc.seq_len = S;
    fc.attn_len = A;
    fc.train_mode = train_mode;
    fc.input_ids = ids;

    fc.emb_sum = Tensor::zeros({S, H});
    for (int i = 0; i < S; ++i) {
        const Real* te = state.token_emb.ptr() + static_cast<size_t>(ids[i]) * H;
        const Real* pe = state.pos_emb.ptr() + static_cast<size_t>(i) * H;
        const Real* se = state.seg_emb.ptr();  // segment 0 throughout
        Real* row = fc.emb_sum.ptr() + static_cast<size_t>(i) * H;
        for (int j = 0; j < H; ++j) row[j] = te[j] + pe[j] + se[j];
    }

    Tensor h0 = Tensor::zeros({S, H});
    layer_norm_forward(fc.emb_sum, state.emb_ln_g, state.emb_ln_b, h0, fc.emb_ln);
    if (train_mode && c.hidden_dropout > 0.0) {
        dropout_forward(h0, fc.emb_drop_mask, c.hidden_dropout, *rng);
    }
    fc.hidden.reserve(static_cast<size_t>(c.num_layers) + 1);
    fc.hidden.push_back(std::move(h0));

    fc.layers.resize(static_cast<size_t>(c.num_layers));
    for (int l = 0; l < c.num_layers; ++l) {
        const LayerParams& lp = state.layers[static_cast<size_t>(l)];
        LayerCache& lc = fc.layers[static_cast<size_t>(l)];
        const Tensor& x = fc.hidden.back();

        lc.q = Tensor::zeros({S, H});
        lc.k = Tensor::zeros({S, H});
        lc.v = Tensor::zeros({S, H});
        linear_forward(x, lp.q_w, lp.q_b, lc.q);
        linear_forward(x, lp.k_w, lp.k_b, lc.k);
        linear_forward(x, lp.v_w, lp.v_b, lc.v);

        lc.attn_probs = Tensor::zeros({nh * S, S});
        for (int h = 0; h < nh; ++h) {
            for (int i = 0; i < S; ++i) {
                const Real* qr = lc.q.ptr() + static_cast<size_t>(i) * H + h * dh;
                Real* pr = lc.attn_probs.ptr() + (static_cast<size_t>(h) * S + i) * S;
                Real maxv = -std::numeric_limits<Real>::infinity();
                for (int j = 0; j < A; ++j) {
                    const Real* kr = lc.k.ptr() + static_cast<size_t>(j) * H + h * dh;
                    Real dot = 0.0;
                    for (int d = 0; d < dh; ++d) dot += qr[d] * kr[d];
                    pr[j] = dot * scale;
                    if (pr[j] > maxv) maxv = pr[j];
                }
                Real sum = 0.0;
                for (int j = 0; j < A; ++j) {
                    pr[j] = std::exp(pr[j] - maxv);
                    sum += pr[j];
                }
                const Real inv = 1.0 / sum;
                for (int j = 0; j < A; ++j) pr[j] *= inv;
                // columns at and past attention_length stay exactly zero
            }
        }

        Tensor probs_used = lc.attn_probs;  // post-dropout view when training
        if (train_mode && c.attention_dropout > 0.0) {
            dropout_forward(probs_used, lc.attn_drop_mask, c.attention_dropout, *rng);
        }

        lc.attn_ctx = Tensor::zeros({S, H});
        for (int h = 0; h < nh; ++h) {
            // ctx_h = P_h * V_h
            ConstMatMap p(probs_used.ptr() + static_cast<size_t>(h) * S * S, S, S);
            for (int i = 0; i < S; ++i) {
                Real* out = lc.attn_ctx.ptr() + static_cast<size_t>(i) * H + h * dh;
                for (int j = 0; j < A; ++j) {
                    const Real w = p(i, j);
                    if (w == 0.0) continue;
                    const Real* vr = lc.v.ptr() + static_cast<size_t>(j) * H + h * dh;
                    for (int d = 0; d < dh; ++d) out[d] += w * vr[d];
                }
            }
        }
        if (train_mode && c.attention_dropout > 0.0) {
            lc.attn_probs_used = std::move(probs_used);
        }

        lc.attn_out = Tensor::zeros({S, H});
        linear_forward(lc.attn_ctx, lp.attn_out_w, lp.attn_out_b, lc.attn_out);

        Tensor attn_dropped = lc.attn_out;
        if (train_mode && c.hidden_dropout > 0.0) {
            dropout_forward(attn_dropped, lc.attn_out_drop_mask, c.hidden_dropout, *rng);
        }
        lc.attn_res = Tensor::zeros({S, H});
        vec(lc.attn_res) = vec(x) + vec(attn_dropped);

        lc.h1 = Tensor::zeros({S, H});
        layer_norm_forward(lc.attn_res, lp.attn_ln_g, lp.attn_ln_b, lc.h1, lc.attn_ln);

        const int I = c.intermediate_size;
        lc.ffn_pre = Tensor::zeros({S, I});
        linear_forward(lc.h1, lp.ffn_w1, lp.ffn_b1, lc.ffn_pre);
        lc.ffn_act = Tensor::zeros({S, I});
        for (size_t i = 0; i < lc.ffn_pre.data.size(); ++i) {
            lc.ffn_act.data[i] = gelu(lc.ffn_pre.data[i]);
        }
        lc.ffn_out = Tensor::zeros({S, H});
        linear_forward(lc.ffn_act, lp.ffn_w2, lp.ffn_b2, lc.ffn_out);

        Tensor ffn_dropped = lc.ffn_out;
        if (train_mode && c.hidden_dropout > 0.0) {
            dropout_forward(ffn_dropped, lc.ffn_drop_mask, c.hidden_dropout, *rng);
        }
        lc.ffn_res = Tensor::zeros({S, H});
        vec(lc.ffn_res) = vec(lc.h1) + vec(ffn_dropped);

        Tensor h_next = Tensor::zeros({S, H});
        layer_norm_forward(lc.ffn_res, lp.ffn_ln_g, lp.ffn_ln_b, h_next, lc.ffn_ln);
        fc.hidden.push_back(std::move(h_next));
    }
    return fc;
}

ForwardCache forward(const EncoderState& state, const SubwordEncoding& enc,
                     bool train_mode, Rng* rng) {
    return forward(state, enc.ids, static_cast<int>(enc.ids.size()), train_mode, rng);
}

MlmCache mlm_forward(const EncoderState& state, const ForwardCache& fwd,
                     const std::vector<uint32_t>& positions) {
    const auto& c = state.config;
    const int H = c.hidden_size;
    const int M = static_cast<int>(positions.size());
    MlmCache mc;
    mc.positions = positions;
    mc.input_rows = Tensor::zeros({M, H});
    const Tensor& final_hidden = fwd.hidden.back();
    for (int i = 0; i < M; ++i) {
        if (positions[static_cast<size_t>(i)] >= static_cast<uint32_t>(fwd.seq_len)) {
            throw std::invalid_argument("mlm_forward: position out of range");
        }
        std::memcpy(mc.input_rows.ptr() + static_cast<size_t>(i) * H,
                    final_hidden.ptr() + static_cast<size_t>(positions[static_cast<size_t>(i)]) * H,
                    sizeof(Real) * static_cast<size_t>(H));
    }

    mc.t_pre = Tensor::zeros({M, H});
    linear_forward(mc.input_rows, state.mlm_tr_w, state.mlm_tr_b, mc.t_pre);
    mc.t_act = Tensor::zeros({M, H});
    for (size_t i = 0; i < mc.t_pre.data.size(); ++i) mc.t_act.data[i] = gelu(mc.t_pre.data[i]);
    mc.t_ln = Tensor::zeros({M, H});
    layer_norm_forward(mc.t_act, state.mlm_ln_g, state.mlm_ln_b, mc.t_ln, mc.ln);

    const Tensor& dec = c.tie_mlm_weights ? state.token_emb : state.mlm_dec_w;
    const int V = c.vocab_size;
    mc.probs = Tensor::zeros({M, V});
    mat(mc.probs).noalias() = mat(mc.t_ln) * mat(dec).transpose();
    for (int i = 0; i < M; ++i) {
        Real* row = mc.probs.ptr() + static_cast<size_t>(i) * V;
        Real maxv = -std::numeric_limits<Real>::infinity();
        for (int j = 0; j < V; ++j) {
            row[j] += state.mlm_bias.data[static_cast<size_t>(j)];
            if (row[j] > maxv) maxv = row[j];
        }
        Real sum = 0.0;
        for (int j = 0; j < V; ++j) {
            row[j] = std::exp(row[j] - maxv);
            sum += row[j];
        }
        const Real inv = 1.0 / sum;
        for (int j = 0; j < V; ++j) row[j] *= inv;
    }
    return mc;
}

Tensor mlm_probabilities(const EncoderState& state, const Tensor& hidden_rows) {
    if (hidden_rows.shape.size() != 2 || hidden_rows.shape[1] != state.config.hidden_size) {
        throw std::invalid_argument("mlm_probabilities: rows must have hidden_size columns");
    }
    ForwardCache dummy;
    dummy.seq_len = hidden_rows.shape[0];
    dummy.hidden.push_back(hidden_rows);
    std::vector<uint32_t> positions(static_cast<size_t>(hidden_rows.shape[0]));
    for (size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<uint32_t>(i);
    return mlm_forward(state, dummy, positions).probs;
}

Real mlm_loss(const MlmCache& mlm, const std::vector<int>& gold_ids) {
    if (gold_ids.size() != mlm.positions.size()) {
        throw std::invalid_argument("mlm_loss: gold id count mismatch");
    }
    if (gold_ids.empty()) return 0.0;
    const int V = mlm.probs.shape[1];
    Real total = 0.0;
    for (size_t i = 0; i < gold_ids.size(); ++i) {
        const int gold = gold_ids[i];
        if (gold < 0 || gold >= V) throw std::invalid_argument("mlm_loss: gold id out of range");
        const Real p = mlm.probs.data[i * static_cast<size_t>(V) + static_cast<size_t>(gold)];
        total += -std::log(std::max(p, std::numeric_limits<Real>::min()));
    }
    return total / static_cast<Real>(gold_ids.size());
}

Tensor mlm_backward(const EncoderState& state, const ForwardCache& fwd,
                    const MlmCache& mlm, const std::vector<int>& gold_ids,
                    Real loss_scale, EncoderState& grads) {
    const auto& c = state.config;
    const int H = c.hidden_size;
    const int V = c.vocab_size;
    const int M = static_cast<int>(mlm.positions.size());

    // d(sum of CE) / dlogits = probs - onehot, scaled
    Tensor dlogits = mlm.probs;
    for (int i = 0; i < M; ++i) {
        Real* row = dlogits.ptr() + static_cast<size_t>(i) * V;
        row[gold_ids[static_cast<size_t>(i)]] -= 1.0;
        for (int j = 0; j < V; ++j) row[j] *= loss_scale;
    }

    for (int i = 0; i < M; ++i) {
        const Real* row = dlogits.ptr() + static_cast<size_t>(i) * V;
        for (int j = 0; j < V; ++j) grads.mlm_bias.data[static_cast<size_t>(j)] += row[j];
    }
    Tensor& ddec = c.tie_mlm_weights ? grads.token_emb : grads.mlm_dec_w;
    const Tensor& dec = c.tie_mlm_weights ? state.token_emb : state.mlm_dec_w;
    mat(ddec).noalias() += mat(dlogits).transpose() * mat(mlm.t_ln);

    Tensor dt_ln = Tensor::zeros({M, H});
    mat(dt_ln).noalias() = mat(dlogits) * mat(dec);

    Tensor dt_act = Tensor::zeros({M, H});
    layer_norm_backward(mlm.t_act, state.mlm_ln_g, mlm.ln, dt_ln, dt_act,
                        grads.mlm_ln_g, grads.mlm_ln_b);

    Tensor dt_pre = Tensor::zeros({M, H});
    for (size_t i = 0; i < dt_pre.data.size(); ++i) {
        dt_pre.data[i] = dt_act.data[i] * gelu_grad(mlm.t_pre.data[i]);
    }

    Tensor dinput_rows = Tensor::zeros({M, H});
    linear_backward(mlm.input_rows, state.mlm_tr_w, dt_pre, dinput_rows,
                    grads.mlm_tr_w, grads.mlm_tr_b, false);

    Tensor dfinal = Tensor::zeros({fwd.seq_len, H});
    for (int i = 0; i < M; ++i) {
        Real* dst = dfinal.ptr() + static_cast<size_t>(mlm.positions[static_cast<size_t>(i)]) * H;
        const Real* src = dinput_rows.ptr() + static_cast<size_t>(i) * H;
        for (int j = 0; j < H; ++j) dst[j] += src[j];
    }
    return dfinal;
}

void backward_from_hidden(const EncoderState& state, const ForwardCache& fwd,
                          const Tensor& grad_final_hidden, EncoderState& grads) {
    const auto& c = state.config;
    const int S = fwd.seq_len;
    const int A = fwd.attn_len;
    const int H = c.hidden_size;
    const int nh = c.num_heads;
    const int dh = c.head_dim();
    const Real scale = 1.0 / std::sqrt(static_cast<Real>(dh));

    Tensor dh_cur = grad_final_hidden;  // gradient at hidden[l+1]

    for (int l = c.num_layers - 1; l >= 0; --l) {
        const LayerParams& lp = state.layers[static_cast<size_t>(l)];
        LayerParams& lg = grads.layers[static_cast<size_t>(l)];
        const LayerCache& lc = fwd.layers[static_cast<size_t>(l)];
        const Tensor& x = fwd.hidden[static_cast<size_t>(l)];

        // ffn layer norm
        Tensor dffn_res = Tensor::zeros({S, H});
        layer_norm_backward(lc.ffn_res, lp.ffn_ln_g, lc.ffn_ln, dh_cur, dffn_res,
                            lg.ffn_ln_g, lg.ffn_ln_b);

        // residual: ffn_res = h1 + dropout(ffn_out)
        Tensor dh1 = dffn_res;
        Tensor dffn_out = dffn_res;
        if (fwd.train_mode && c.hidden_dropout > 0.0) {
            for (size_t i = 0; i < dffn_out.data.size(); ++i) {
                dffn_out.data[i] *= lc.ffn_drop_mask.data[i];
            }
        }

        Tensor dffn_act = Tensor::zeros({S, c.intermediate_size});
        linear_backward(lc.ffn_act, lp.ffn_w2, dffn_out, dffn_act, lg.ffn_w2,
                        lg.ffn_b2, false);
        Tensor dffn_pre = Tensor::zeros({S, c.intermediate_size});
        for (size_t i = 0; i < dffn_pre.data.size(); ++i) {
            dffn_pre.data[i] = dffn_act.data[i] * gelu_grad(lc.ffn_pre.data[i]);
        }
        linear_backward(lc.h1, lp.ffn_w1, dffn_pre, dh1, lg.ffn_w1, lg.ffn_b1, true);

        // attention layer norm
        Tensor dattn_res = Tensor::zeros({S, H});
        layer_norm_backward(lc.attn_res, lp.attn_ln_g, lc.attn_ln, dh1, dattn_res,
                            lg.attn_ln_g, lg.attn_ln_b);

        // residual: attn_res = x + dropout(attn_out)
        Tensor dx = dattn_res;
        Tensor dattn_out = dattn_res;
        if (fwd.train_mode && c.hidden_dropout > 0.0) {
            for (size_t i = 0; i < dattn_out.data.size(); ++i) {
                dattn_out.data[i] *= lc.attn_out_drop_mask.data[i];
            }
        }

        Tensor dctx = Tensor::zeros({S, H});
        linear_backward(lc.attn_ctx, lp.attn_out_w, dattn_out, dctx,
                        lg.attn_out_w, lg.attn_out_b, false);

        const bool attn_dropped = fwd.train_mode && c.attention_dropout > 0.0;
        const Tensor& probs_used = attn_dropped ? lc.attn_probs_used : lc.attn_probs;

        Tensor dq = Tensor::zeros({S, H});
        Tensor dk = Tensor::zeros({S, H});
        Tensor dv = Tensor::zeros({S, H});
        for (int h = 0; h < nh; ++h) {
            ConstMatMap p_used(probs_used.ptr() + static_cast<size_t>(h) * S * S, S, S);
            ConstMatMap p_pre(lc.attn_probs.ptr() + static_cast<size_t>(h) * S * S, S, S);
            // dP_used = dctx_h * V_h^T ; dV_h = P_used^T * dctx_h
            Tensor dp = Tensor::zeros({S, S});
            for (int i = 0; i < S; ++i) {
                const Real* dctx_r = dctx.ptr() + static_cast<size_t>(i) * H + h * dh;
                Real* dpr = dp.ptr() + static_cast<size_t>(i) * S;
                for (int j = 0; j < A; ++j) {
                    const Real* vr = lc.v.ptr() + static_cast<size_t>(j) * H + h * dh;
                    Real dot = 0.0;
                    for (int d = 0; d < dh; ++d) dot += dctx_r[d] * vr[d];
                    dpr[j] = dot;
                    const Real w = p_used(i, j);
                    if (w != 0.0) {
                        Real* dvr = dv.ptr() + static_cast<size_t>(j) * H + h * dh;
                        for (int d = 0; d < dh; ++d) dvr[d] += w * dctx_r[d];
                    }
                }
            }
            if (attn_dropped) {
                const Real* mask = lc.attn_drop_mask.ptr() + static_cast<size_t>(h) * S * S;
                for (int i = 0; i < S; ++i) {
                    Real* dpr = dp.ptr() + static_cast<size_t>(i) * S;
                    for (int j = 0; j < A; ++j) dpr[j] *= mask[static_cast<size_t>(i) * S + j];
                }
            }
            // softmax backward over the allowed columns
            for (int i = 0; i < S; ++i) {
                Real* dpr = dp.ptr() + static_cast<size_t>(i) * S;
                Real dot = 0.0;
                for (int j = 0; j < A; ++j) dot += dpr[j] * p_pre(i, j);
                for (int j = 0; j < A; ++j) dpr[j] = p_pre(i, j) * (dpr[j] - dot);
            }
            // dQ_h = dS * K_h * scale ; dK_h = dS^T * Q_h * scale
            for (int i = 0; i < S; ++i) {
                const Real* dpr = dp.ptr() + static_cast<size_t>(i) * S;
                Real* dqr = dq.ptr() + static_cast<size_t>(i) * H + h * dh;
                const Real* qr = lc.q.ptr() + static_cast<size_t>(i) * H + h * dh;
                for (int j = 0; j < A; ++j) {
                    const Real g = dpr[j] * scale;
                    if (g == 0.0) continue;
                    const Real* kr = lc.k.ptr() + static_cast<size_t>(j) * H + h * dh;
                    Real* dkr = dk.ptr() + static_cast<size_t>(j) * H + h * dh;
                    for (int d = 0; d < dh; ++d) {
                        dqr[d] += g * kr[d];
                        dkr[d] += g * qr[d];
                    }
                }
            }
        }

        linear_backward(x, lp.q_w, dq, dx, lg.q_w, lg.q_b, true);
        linear_backward(x, lp.k_w, dk, dx, lg.k_w, lg.k_b, true);
        linear_backward(x, lp.v_w, dv, dx, lg.v_w, lg.v_b, true);

        dh_cur = std::move(dx);
    }

    // embeddings: hidden[0] = dropout(LN(emb_sum))
    if (fwd.train_mode && c.hidden_dropout > 0.0) {
        for (size_t i = 0; i < dh_cur.data.size(); ++i) {
            dh_cur.data[i] *= fwd.emb_drop_mask.data[i];
        }
    }
    Tensor demb_sum = Tensor::zeros({S, H});
    layer_norm_backward(fwd.emb_sum, state.emb_ln_g, fwd.emb_ln, dh_cur, demb_sum,
                        grads.emb_ln_g, grads.emb_ln_b);
    for (int i = 0; i < S; ++i) {
        const Real* src = demb_sum.ptr() + static_cast<size_t>(i) * H;
        Real* te = grads.token_emb.ptr() +
                   static_cast<size_t>(fwd.input_ids[static_cast<size_t>(i)]) * H;
        Real* pe = grads.pos_emb.ptr() + static_cast<size_t>(i) * H;
        Real* se = grads.seg_emb.ptr();
        for (int j = 0; j < H; ++j) {
            te[j] += src[j];
            pe[j] += src[j];
            se[j] += src[j];
        }
    }
}

WordEmbeddings embed_words_from_encoding(const EncoderState& state,
                                         const SubwordEncoding& enc, int layer) {
    const auto& c = state.config;
    const int chosen = layer < 0 ? c.num_layers : layer;
    if (chosen > c.num_layers) {
        throw std::invalid_argument("embed_words: layer out of range");
    }
    ForwardCache fc = forward(state, enc, false, nullptr);
    const Tensor& hs = fc.hidden[static_cast<size_t>(chosen)];
    const int H = c.hidden_size;

    WordEmbeddings out;
    for (size_t w = 0; w < enc.word_alignment.size(); ++w) {
        const WordRange r = enc.word_alignment[w];
        TokenRepresentation rep;
        rep.layer = chosen;
        rep.word_index = static_cast<uint32_t>(w);
        rep.vector.assign(static_cast<size_t>(H), 0.0);
        const Real inv = 1.0 / static_cast<Real>(r.end - r.begin);
        for (uint32_t p = r.begin; p < r.end; ++p) {
            const Real* row = hs.ptr() + static_cast<size_t>(p) * H;
            for (int j = 0; j < H; ++j) rep.vector[static_cast<size_t>(j)] += row[j] * inv;
        }
        out.words.push_back(std::move(rep));
    }
    return out;
}

WordEmbeddings embed_words(const EncoderState& state, const SubwordVocab& vocab,
                           const std::vector<Token>& tokens, int layer,
                           size_t max_len) {
    const size_t cap = max_len == 0 ? static_cast<size_t>(state.config.max_positions)
                                    : max_len;
    SubwordEncoding enc = encode_sentence(vocab, tokens, true, cap);
    WordEmbeddings out = embed_words_from_encoding(state, enc, layer);
    for (size_t w = enc.word_alignment.size(); w < tokens.size(); ++w) {
        out.omitted_word_indices.push_back(static_cast<uint32_t>(w));
    }
    return out;
}

// --- checkpoint I/O ---

namespace {

void write_u32(std::ostream& out, uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& out, uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_f64(std::ostream& out, double v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint32_t read_u32(std::istream& in, const std::string& what) {
    uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
        throw std::runtime_error("checkpoint truncated while reading " + what);
    }
    return v;
}
uint64_t read_u64(std::istream& in, const std::string& what) {
    uint64_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
        throw std::runtime_error("checkpoint truncated while reading " + what);
    }
    return v;
}
double read_f64(std::istream& in, const std::string& what) {
    double v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
        throw std::runtime_error("checkpoint truncated while reading " + what);
    }
    return v;
}

constexpr uint32_t kCheckpointVersion = 1;

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
    write_u32(out, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) write_u32(out, static_cast<uint32_t>(d));
    std::vector<float> buf(t.data.size());
    for (size_t i = 0; i < t.data.size(); ++i) buf[i] = static_cast<float>(t.data[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

Tensor read_tensor(std::istream& in, const std::string& what) {
    const uint32_t rank = read_u32(in, what + " rank");
    std::vector<int> shape;
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
        const uint32_t dim = read_u32(in, what + " dim");
        shape.push_back(static_cast<int>(dim));
        numel *= dim;
    }
    Tensor t = Tensor::zeros(shape);
    std::vector<float> buf(static_cast<size_t>(numel));
    if (!in.read(reinterpret_cast<char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
        throw std::runtime_error("truncated payload for " + what);
    }
    for (size_t i = 0; i < buf.size(); ++i) t.data[i] = static_cast<Real>(buf[i]);
    return t;
}

void save_checkpoint(const EncoderState& state, std::ostream& out) {
    out.write("PLLM", 4);
    write_u32(out, kCheckpointVersion);
    const auto& c = state.config;
    write_u32(out, static_cast<uint32_t>(c.num_layers));
    write_u32(out, static_cast<uint32_t>(c.hidden_size));
    write_u32(out, static_cast<uint32_t>(c.num_heads));
    write_u32(out, static_cast<uint32_t>(c.intermediate_size));
    write_u32(out, static_cast<uint32_t>(c.max_positions));
    write_u32(out, static_cast<uint32_t>(c.vocab_size));
    write_u32(out, static_cast<uint32_t>(c.type_vocab_size));
    write_f64(out, c.hidden_dropout);
    write_f64(out, c.attention_dropout);
    write_f64(out, c.initializer_range);
    write_u64(out, c.seed);
    write_u32(out, c.tie_mlm_weights ? 1 : 0);
    write_u64(out, state.step_count);

    write_u32(out, static_cast<uint32_t>(state.num_param_tensors()));
    state.for_each_param([&](const std::string& name, const Tensor& t) {
        write_u32(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_tensor(out, t);
    });
    if (!out) throw std::runtime_error("failed while writing checkpoint stream");
}

void save_checkpoint(const EncoderState& state, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    save_checkpoint(state, out);
    if (!out) throw std::runtime_error("failed while writing checkpoint " + path);
}

EncoderState load_checkpoint(std::istream& in, const std::string& path) {
    char magic[4] = {};
    if (!in.read(magic, 4) || std::memcmp(magic, "PLLM", 4) != 0) {
        throw std::runtime_error(path + ": not a checkpoint file (bad magic)");
    }
    const uint32_t version = read_u32(in, "version");
    if (version != kCheckpointVersion) {
        throw std::runtime_error(path + ": unsupported checkpoint version " +
                                 std::to_string(version));
    }
    TransformerConfig c;
    c.num_layers = static_cast<int>(read_u32(in, "num_layers"));
    c.hidden_size = static_cast<int>(read_u32(in, "hidden_size"));
    c.num_heads = static_cast<int>(read_u32(in, "num_heads"));
    c.intermediate_size = static_cast<int>(read_u32(in, "intermediate_size"));
    c.max_positions = static_cast<int>(read_u32(in, "max_positions"));
    c.vocab_size = static_cast<int>(read_u32(in, "vocab_size"));
    c.type_vocab_size = static_cast<int>(read_u32(in, "type_vocab_size"));
    c.hidden_dropout = read_f64(in, "hidden_dropout");
    c.attention_dropout = read_f64(in, "attention_dropout");
    c.initializer_range = read_f64(in, "initializer_range");
    c.seed = read_u64(in, "seed");
    c.tie_mlm_weights = read_u32(in, "tie_mlm_weights") != 0;
    const uint64_t step_count = read_u64(in, "step_count");
    c.validate();

    EncoderState proto;
    proto.config = c;
    EncoderState state = EncoderState::zeros_like(proto);
    state.step_count = step_count;

    const uint32_t n_tensors = read_u32(in, "tensor count");
    std::unordered_map<std::string, Tensor*> by_name;
    state.for_each_param([&](const std::string& name, Tensor& t) {
        by_name[name] = &t;
    });
    if (n_tensors != by_name.size()) {
        throw std::runtime_error(path + ": tensor count mismatch");
    }
    for (uint32_t i = 0; i < n_tensors; ++i) {
        const uint32_t name_len = read_u32(in, "tensor name length");
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) {
            throw std::runtime_error(path + ": truncated tensor name");
        }
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw std::runtime_error(path + ": unexpected tensor " + name);
        }
        Tensor& t = *it->second;
        Tensor loaded = read_tensor(in, path + " tensor " + name);
        if (loaded.shape != t.shape) {
            throw std::runtime_error(path + ": shape mismatch for " + name);
        }
        for (Real v : loaded.data) {
            if (!std::isfinite(v)) {
                throw std::runtime_error(path + ": non-finite value in " + name);
            }
        }
        t = std::move(loaded);
    }
    return state;
}

EncoderState load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path);
    return load_checkpoint(in, path);
}

}  // namespace latinlm
