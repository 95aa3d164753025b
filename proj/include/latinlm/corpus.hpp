#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include "latinlm/subword.hpp"
#include "latinlm/textproc.hpp"

namespace latinlm {

struct QualityReport {
    std::string doc_id;
    double in_vocab_fraction = 0.0;
    bool retained = false;
};

// Fraction of case-folded word tokens (punctuation excluded, enclitic
// markers stripped) found in reference_vocab. Documents with zero word
// tokens are rejected with fraction 0.
QualityReport quality_filter(const Tokenizer& tok, const RawDocument& doc,
                             const std::unordered_set<std::string>& reference_vocab,
                             double threshold = 0.40);

std::unordered_set<std::string> load_reference_vocab(const std::string& path);

struct MixturePlan {
    std::map<std::string, double> source_weights;  // repetition weight per source label
    double target_ia_fraction = 0.5;
};

// Internet Archive text keeps weight 1; every other source receives the
// single uniform weight that brings the expected IA token share to
// target_ia_fraction.
MixturePlan plan_mixture(const std::map<std::string, uint64_t>& source_token_counts,
                         double target_ia_fraction = 0.5);

// Realizes a fractional weight as floor(w) whole repetitions plus one more
// with probability frac(w), decided by hash(seed, doc_id) so shard order
// cannot change the outcome.
uint32_t repetitions_for(const MixturePlan& plan, const std::string& source,
                         const std::string& doc_id, uint64_t seed);

void save_mixture_plan(const MixturePlan& plan, const std::string& path);
MixturePlan load_mixture_plan(const std::string& path);

struct MaskedExample {
    std::vector<int> input_ids;        // padded with [PAD] to seq_len
    std::vector<uint32_t> mask_positions;
    std::vector<int> original_ids;     // gold ids at mask_positions
    uint32_t attention_length = 0;     // real (non-pad) positions
};

struct MaskingOptions {
    size_t seq_len = 256;
    double mask_prob = 0.15;
    bool force_one_word = true;   // guarantee at least one masked word
    uint64_t seed = 0;
};

// Whole-word masking: words are selected independently with mask_prob and
// all subtokens of a selected word become prediction targets together. The
// replacement mode is drawn once per word: 80% [MASK], 10% random non-special
// ids, 10% unchanged. Seeds derive from (seed, doc_id) so document order and
// sharding do not change outputs.
std::vector<MaskedExample> make_masked_examples(const std::vector<Sentence>& sentences,
                                                const SubwordVocab& vocab,
                                                const MaskingOptions& opts);

// Single-sentence variant used by the batch one; exposed for tests.
MaskedExample mask_sentence(const SubwordEncoding& enc, const SubwordVocab& vocab,
                            const MaskingOptions& opts, class Rng& rng);

void write_masked_examples(const std::string& path, const std::vector<MaskedExample>& examples);
std::vector<MaskedExample> read_masked_examples(const std::string& path);

}  // namespace latinlm
