#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "latinlm/corpus.hpp"
#include "latinlm/rng.hpp"
#include "latinlm/subword.hpp"
#include "latinlm/tensor.hpp"

namespace latinlm {

struct TransformerConfig {
    int num_layers = 2;
    int hidden_size = 128;
    int num_heads = 4;
    int intermediate_size = 512;
    int max_positions = 512;
    int vocab_size = 0;
    int type_vocab_size = 2;
    double hidden_dropout = 0.1;
    double attention_dropout = 0.1;
    double initializer_range = 0.02;
    uint64_t seed = 0;
    bool tie_mlm_weights = true;
    // activation is gelu; no alternative is wired in

    int head_dim() const { return hidden_size / num_heads; }
    void validate() const;
};

struct LayerParams {
    Tensor q_w, q_b, k_w, k_b, v_w, v_b;   // [H,H] / [H]
    Tensor attn_out_w, attn_out_b;         // [H,H] / [H]
    Tensor attn_ln_g, attn_ln_b;           // [H]
    Tensor ffn_w1, ffn_b1;                 // [H,I] / [I]
    Tensor ffn_w2, ffn_b2;                 // [I,H] / [H]
    Tensor ffn_ln_g, ffn_ln_b;             // [H]
};

// All trainable parameters. Weight matrices are stored [in, out] so that a
// row-major activation block times the matrix gives the next activation.
struct EncoderState {
    TransformerConfig config;
    Tensor token_emb;                      // [V,H]
    Tensor pos_emb;                        // [P,H]
    Tensor seg_emb;                        // [T,H]
    Tensor emb_ln_g, emb_ln_b;             // [H]
    std::vector<LayerParams> layers;
    Tensor mlm_tr_w, mlm_tr_b;             // [H,H] / [H]
    Tensor mlm_ln_g, mlm_ln_b;             // [H]
    Tensor mlm_dec_w;                      // [V,H], only when untied
    Tensor mlm_bias;                       // [V]
    uint64_t step_count = 0;

    static EncoderState init(const TransformerConfig& config);
    static EncoderState zeros_like(const EncoderState& other);

    // Visits every parameter tensor in a fixed order with a stable name.
    void for_each_param(const std::function<void(const std::string&, Tensor&)>& fn);
    void for_each_param(
        const std::function<void(const std::string&, const Tensor&)>& fn) const;
    size_t num_param_tensors() const;
};

struct LnCache {
    std::vector<Real> mean;
    std::vector<Real> rstd;
};

struct LayerCache {
    Tensor x_in;                 // [S,H]
    Tensor q, k, v;              // [S,H]
    Tensor attn_probs;           // [nh*S, S], pre-dropout softmax rows
    Tensor attn_probs_used;      // post-dropout copy (train only)
    Tensor attn_drop_mask;       // [nh*S, S] (train only)
    Tensor attn_ctx;             // [S,H]
    Tensor attn_out;             // [S,H] pre-dropout
    Tensor attn_out_drop_mask;   // [S,H] (train only)
    Tensor attn_res;             // residual sum, pre-LN
    LnCache attn_ln;
    Tensor h1;                   // [S,H] after attention LN
    Tensor ffn_pre;              // [S,I]
    Tensor ffn_act;              // [S,I]
    Tensor ffn_out;              // [S,H] pre-dropout
    Tensor ffn_drop_mask;        // [S,H] (train only)
    Tensor ffn_res;              // pre-LN
    LnCache ffn_ln;
};

struct ForwardCache {
    int seq_len = 0;
    int attn_len = 0;            // positions attention may look at
    bool train_mode = false;
    std::vector<int> input_ids;
    Tensor emb_sum;              // [S,H] pre-LN
    LnCache emb_ln;
    Tensor emb_drop_mask;        // (train only)
    std::vector<Tensor> hidden;  // hidden[l], l in 0..num_layers, each [S,H]
    std::vector<LayerCache> layers;
};

// Runs the encoder over one id sequence. attention_length marks how many
// leading positions are real; trailing padding is never attended to, so
// outputs at real positions do not depend on how much padding follows.
// Dropout fires only in train mode and draws from rng.
ForwardCache forward(const EncoderState& state, const std::vector<int>& ids,
                     int attention_length, bool train_mode = false,
                     Rng* rng = nullptr);
ForwardCache forward(const EncoderState& state, const SubwordEncoding& enc,
                     bool train_mode = false, Rng* rng = nullptr);

// MLM head over selected positions of the final hidden layer.
struct MlmCache {
    std::vector<uint32_t> positions;
    Tensor input_rows;           // [M,H] gathered hidden states
    Tensor t_pre, t_act;         // [M,H]
    LnCache ln;
    Tensor t_ln;                 // [M,H]
    Tensor probs;                // [M,V] softmax rows
};

MlmCache mlm_forward(const EncoderState& state, const ForwardCache& fwd,
                     const std::vector<uint32_t>& positions);

// Row-normalized output distributions for externally supplied hidden rows.
Tensor mlm_probabilities(const EncoderState& state, const Tensor& hidden_rows);

// Mean cross-entropy of gold ids under the cached MLM distributions.
Real mlm_loss(const MlmCache& mlm, const std::vector<int>& gold_ids);

// Accumulates parameter gradients for the MLM loss (sum of per-position
// cross-entropies scaled by loss_scale) and returns the gradient w.r.t. the
// final hidden layer for backward_from_hidden.
Tensor mlm_backward(const EncoderState& state, const ForwardCache& fwd,
                    const MlmCache& mlm, const std::vector<int>& gold_ids,
                    Real loss_scale, EncoderState& grads);

// Backpropagates an arbitrary gradient at the final hidden layer through the
// whole stack, accumulating into grads.
void backward_from_hidden(const EncoderState& state, const ForwardCache& fwd,
                          const Tensor& grad_final_hidden, EncoderState& grads);

// One word vector: the mean of the word's subtoken vectors at a layer.
struct TokenRepresentation {
    std::vector<Real> vector;
    int layer = 0;
    uint32_t word_index = 0;
};

struct WordEmbeddings {
    std::vector<TokenRepresentation> words;
    std::vector<uint32_t> omitted_word_indices;  // lost to length truncation
};

// layer -1 selects the final layer.
WordEmbeddings embed_words(const EncoderState& state, const SubwordVocab& vocab,
                           const std::vector<Token>& tokens, int layer = -1,
                           size_t max_len = 0);
WordEmbeddings embed_words_from_encoding(const EncoderState& state,
                                         const SubwordEncoding& enc, int layer = -1);

// Checkpoint: "PLLM" magic, version, config block, then named float32
// tensors (name, rank, dims, row-major little-endian payload). The stream
// variants leave the stream positioned after the encoder section so head
// models can append their own sections.
void save_checkpoint(const EncoderState& state, std::ostream& out);
void save_checkpoint(const EncoderState& state, const std::string& path);
EncoderState load_checkpoint(std::istream& in, const std::string& what);
EncoderState load_checkpoint(const std::string& path);

// Raw tensor block I/O shared with head sections.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in, const std::string& what);

}  // namespace latinlm
