#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "latinlm/encoder.hpp"

namespace latinlm {

struct TokenRecord {
    std::string doc_id;
    uint32_t sentence_index = 0;
    uint32_t word_index = 0;
    std::string surface;
    std::string citation;
};

struct RecordKey {
    std::string doc_id;
    uint32_t sentence_index = 0;
    uint32_t word_index = 0;
    bool operator==(const RecordKey&) const = default;
};

// Immutable store of unit-normalized word vectors (float32, contiguous) plus
// per-record metadata, ordered by (doc_id, sentence_index, word_index).
class EmbeddingIndex {
public:
    EmbeddingIndex() = default;
    EmbeddingIndex(uint32_t dimension, uint32_t layer)
        : dimension_(dimension), layer_(layer) {}

    uint32_t dimension() const { return dimension_; }
    uint32_t layer() const { return layer_; }
    size_t count() const { return records_.size(); }
    const TokenRecord& record(size_t i) const { return records_.at(i); }
    const float* vector(size_t i) const {
        return vectors_.data() + i * static_cast<size_t>(dimension_);
    }

    void add(TokenRecord record, const std::vector<float>& vector);
    void sort_records();  // canonical ordering, applied after a build

    const std::vector<float>& raw_vectors() const { return vectors_; }

private:
    uint32_t dimension_ = 0;
    uint32_t layer_ = 0;
    std::vector<TokenRecord> records_;
    std::vector<float> vectors_;
};

struct IndexBuildOptions {
    int layer = -1;                   // -1 = final layer
    bool include_punctuation = false;
    uint32_t shards = 1;              // processing partition; output is order-independent
};

struct IndexBuildStats {
    uint64_t tokens_indexed = 0;
    uint64_t tokens_truncated = 0;   // lost to the sequence budget
    uint64_t tokens_skipped_punct = 0;
};

// One record per word token, vector = unit-normalized subtoken-averaged
// representation at the chosen layer. citations maps doc_id to a citation
// string carried into every record of that document.
EmbeddingIndex build_index(const EncoderState& state, const SubwordVocab& vocab,
                           const std::vector<Sentence>& sentences,
                           const IndexBuildOptions& opts = {},
                           const std::map<std::string, std::string>& citations = {},
                           IndexBuildStats* stats = nullptr);

struct NeighborHit {
    size_t record_index = 0;
    double cosine = 0.0;
    std::string sentence_text;  // filled when a corpus lookup is available
};

// Exact top-k by cosine over the whole index; ties break toward the earlier
// record. exclude drops the record with that exact key (the query's own
// origin when querying an indexed sentence).
std::vector<NeighborHit> query_vector(const EmbeddingIndex& index,
                                      const std::vector<float>& query, size_t k,
                                      const std::optional<RecordKey>& exclude = {});

// Embeds tokens[target_word_index] in context and queries. corpus, when
// given, resolves hit sentence texts.
std::vector<NeighborHit> query(const EmbeddingIndex& index, const EncoderState& state,
                               const SubwordVocab& vocab,
                               const std::vector<Token>& tokens,
                               size_t target_word_index, size_t k,
                               const std::optional<RecordKey>& exclude = {},
                               const std::vector<Sentence>* corpus = nullptr);

// Unit-normalized embedding of one word in context (float32), ready to query.
std::vector<float> embed_query_word(const EncoderState& state, const SubwordVocab& vocab,
                                    const std::vector<Token>& tokens,
                                    size_t target_word_index, int layer = -1);

// Index file: "PLNN" magic, u32 version, u32 dimension, u64 count, u32 layer,
// then per record the length-prefixed metadata strings, the two u32 indices
// and the float32 vector. Load errors name the byte offset.
void save_index(const EmbeddingIndex& index, const std::string& path);
EmbeddingIndex load_index(const std::string& path);

}  // namespace latinlm
