#include "latinlm/neighbors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace latinlm {

void EmbeddingIndex::add(TokenRecord record, const std::vector<float>& vector) {
    if (vector.size() != dimension_) {
        throw std::invalid_argument("EmbeddingIndex: vector dimension mismatch");
    }
    records_.push_back(std::move(record));
    vectors_.insert(vectors_.end(), vector.begin(), vector.end());
}

void EmbeddingIndex::sort_records() {
    std::vector<size_t> order(records_.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        const TokenRecord& ra = records_[a];
        const TokenRecord& rb = records_[b];
        if (ra.doc_id != rb.doc_id) return ra.doc_id < rb.doc_id;
        if (ra.sentence_index != rb.sentence_index) {
            return ra.sentence_index < rb.sentence_index;
        }
        return ra.word_index < rb.word_index;
    });
    std::vector<TokenRecord> new_records;
    new_records.reserve(records_.size());
    std::vector<float> new_vectors(vectors_.size());
    for (size_t i = 0; i < order.size(); ++i) {
        new_records.push_back(std::move(records_[order[i]]));
        std::memcpy(new_vectors.data() + i * dimension_,
                    vectors_.data() + order[i] * dimension_,
                    sizeof(float) * dimension_);
    }
    records_ = std::move(new_records);
    vectors_ = std::move(new_vectors);
}

namespace {

std::vector<float> normalize_to_f32(const std::vector<Real>& v) {
    double norm_sq = 0.0;
    for (Real x : v) norm_sq += x * x;
    const double inv = norm_sq > 0.0 ? 1.0 / std::sqrt(norm_sq) : 0.0;
    std::vector<float> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] * inv);
    return out;
}

}  // namespace

EmbeddingIndex build_index(const EncoderState& state, const SubwordVocab& vocab,
                           const std::vector<Sentence>& sentences,
                           const IndexBuildOptions& opts,
                           const std::map<std::string, std::string>& citations,
                           IndexBuildStats* stats) {
    const int layer = opts.layer < 0 ? state.config.num_layers : opts.layer;
    if (layer > state.config.num_layers) {
        throw std::invalid_argument("build_index: layer out of range");
    }
    EmbeddingIndex index(static_cast<uint32_t>(state.config.hidden_size),
                         static_cast<uint32_t>(layer));
    IndexBuildStats local;

    const uint32_t shards = std::max<uint32_t>(1, opts.shards);
    for (uint32_t shard = 0; shard < shards; ++shard) {
        for (size_t si = 0; si < sentences.size(); ++si) {
            if (si % shards != shard) continue;
            const Sentence& s = sentences[si];
            if (s.tokens.empty()) continue;
            WordEmbeddings emb = embed_words(state, vocab, s.tokens, layer);
            local.tokens_truncated += emb.omitted_word_indices.size();
            std::string citation;
            auto it = citations.find(s.doc_id);
            if (it != citations.end()) citation = it->second;
            for (const auto& rep : emb.words) {
                const Token& token = s.tokens[rep.word_index];
                if (!opts.include_punctuation && !is_word_token(token.surface)) {
                    ++local.tokens_skipped_punct;
                    continue;
                }
                TokenRecord rec;
                rec.doc_id = s.doc_id;
                rec.sentence_index = s.index;
                rec.word_index = rep.word_index;
                rec.surface = token.surface;
                rec.citation = citation;
                index.add(std::move(rec), normalize_to_f32(rep.vector));
                ++local.tokens_indexed;
            }
        }
    }
    index.sort_records();
    if (stats != nullptr) *stats = local;
    return index;
}

std::vector<NeighborHit> query_vector(const EmbeddingIndex& index,
                                      const std::vector<float>& query, size_t k,
                                      const std::optional<RecordKey>& exclude) {
    if (index.count() == 0) throw std::invalid_argument("query: empty index");
    if (k < 1 || k > index.count()) {
        throw std::invalid_argument("query: k must lie in [1, index count]");
    }
    if (query.size() != index.dimension()) {
        throw std::invalid_argument("query: dimension mismatch");
    }

    // renormalize the query in double so cosines stay within bounds
    double norm_sq = 0.0;
    for (float x : query) norm_sq += static_cast<double>(x) * static_cast<double>(x);
    const double inv = norm_sq > 0.0 ? 1.0 / std::sqrt(norm_sq) : 0.0;
    std::vector<double> q(query.size());
    for (size_t i = 0; i < query.size(); ++i) q[i] = static_cast<double>(query[i]) * inv;

    const size_t n = index.count();
    const size_t dim = index.dimension();
    std::vector<std::pair<double, size_t>> scores;
    scores.reserve(n);
    const float* base = index.raw_vectors().data();
    for (size_t i = 0; i < n; ++i) {
        const float* v = base + i * dim;
        double dot = 0.0;
        for (size_t d = 0; d < dim; ++d) dot += q[d] * static_cast<double>(v[d]);
        scores.emplace_back(dot, i);
    }

    auto better = [](const std::pair<double, size_t>& a,
                     const std::pair<double, size_t>& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    };

    size_t want = k;
    if (exclude.has_value()) want = std::min(n, k + 1);
    std::partial_sort(scores.begin(),
                      scores.begin() + static_cast<ptrdiff_t>(want), scores.end(),
                      better);

    std::vector<NeighborHit> hits;
    for (size_t i = 0; i < want && hits.size() < k; ++i) {
        const size_t idx = scores[i].second;
        if (exclude.has_value()) {
            const TokenRecord& rec = index.record(idx);
            if (rec.doc_id == exclude->doc_id &&
                rec.sentence_index == exclude->sentence_index &&
                rec.word_index == exclude->word_index) {
                continue;
            }
        }
        NeighborHit hit;
        hit.record_index = idx;
        hit.cosine = scores[i].first;
        hits.push_back(std::move(hit));
    }
    return hits;
}

std::vector<float> embed_query_word(const EncoderState& state, const SubwordVocab& vocab,
                                    const std::vector<Token>& tokens,
                                    size_t target_word_index, int layer) {
    WordEmbeddings emb = embed_words(state, vocab, tokens, layer);
    if (target_word_index >= emb.words.size()) {
        throw std::invalid_argument("query: target word index out of range (or truncated)");
    }
    return normalize_to_f32(emb.words[target_word_index].vector);
}

std::vector<NeighborHit> query(const EmbeddingIndex& index, const EncoderState& state,
                               const SubwordVocab& vocab,
                               const std::vector<Token>& tokens,
                               size_t target_word_index, size_t k,
                               const std::optional<RecordKey>& exclude,
                               const std::vector<Sentence>* corpus) {
    const std::vector<float> q = embed_query_word(state, vocab, tokens,
                                                  target_word_index,
                                                  static_cast<int>(index.layer()));
    auto hits = query_vector(index, q, k, exclude);
    if (corpus != nullptr) {
        std::map<std::pair<std::string, uint32_t>, const std::string*> text_by_key;
        for (const auto& s : *corpus) {
            text_by_key[{s.doc_id, s.index}] = &s.text;
        }
        for (auto& hit : hits) {
            const TokenRecord& rec = index.record(hit.record_index);
            auto it = text_by_key.find({rec.doc_id, rec.sentence_index});
            if (it != text_by_key.end()) hit.sentence_text = *it->second;
        }
    }
    return hits;
}

namespace {

constexpr uint32_t kIndexVersion = 1;

class CountingWriter {
public:
    explicit CountingWriter(std::ostream& out) : out_(out) {}
    void write(const void* p, size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        offset_ += n;
    }
    void u32(uint32_t v) { write(&v, sizeof(v)); }
    void u64(uint64_t v) { write(&v, sizeof(v)); }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        write(s.data(), s.size());
    }

private:
    std::ostream& out_;
    uint64_t offset_ = 0;
};

class CountingReader {
public:
    CountingReader(std::istream& in, std::string path)
        : in_(in), path_(std::move(path)) {}

    void read(void* p, size_t n, const char* what) {
        if (!in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n))) {
            throw std::runtime_error(path_ + ": truncated reading " + what +
                                     " at byte offset " + std::to_string(offset_));
        }
        offset_ += n;
    }
    uint32_t u32(const char* what) {
        uint32_t v = 0;
        read(&v, sizeof(v), what);
        return v;
    }
    uint64_t u64(const char* what) {
        uint64_t v = 0;
        read(&v, sizeof(v), what);
        return v;
    }
    std::string str(const char* what) {
        const uint32_t n = u32(what);
        std::string s(n, '\0');
        read(s.data(), n, what);
        return s;
    }
    uint64_t offset() const { return offset_; }

private:
    std::istream& in_;
    std::string path_;
    uint64_t offset_ = 0;
};

}  // namespace

void save_index(const EmbeddingIndex& index, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write index " + path);
    CountingWriter w(out);
    w.write("PLNN", 4);
    w.u32(kIndexVersion);
    w.u32(index.dimension());
    w.u64(index.count());
    w.u32(index.layer());
    for (size_t i = 0; i < index.count(); ++i) {
        const TokenRecord& rec = index.record(i);
        w.str(rec.doc_id);
        w.str(rec.surface);
        w.str(rec.citation);
        w.u32(rec.sentence_index);
        w.u32(rec.word_index);
        w.write(index.vector(i), sizeof(float) * index.dimension());
    }
    if (!out) throw std::runtime_error("failed while writing index " + path);
}

EmbeddingIndex load_index(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open index " + path);
    CountingReader r(in, path);
    char magic[4] = {};
    r.read(magic, 4, "magic");
    if (std::memcmp(magic, "PLNN", 4) != 0) {
        throw std::runtime_error(path + ": not an embedding index (bad magic)");
    }
    const uint32_t version = r.u32("version");
    if (version != kIndexVersion) {
        throw std::runtime_error(path + ": unsupported index version " +
                                 std::to_string(version));
    }
    const uint32_t dimension = r.u32("dimension");
    if (dimension == 0) throw std::runtime_error(path + ": zero dimension");
    const uint64_t count = r.u64("count");
    const uint32_t layer = r.u32("layer");

    EmbeddingIndex index(dimension, layer);
    std::vector<float> buf(dimension);
    for (uint64_t i = 0; i < count; ++i) {
        TokenRecord rec;
        rec.doc_id = r.str("doc_id");
        rec.surface = r.str("surface");
        rec.citation = r.str("citation");
        rec.sentence_index = r.u32("sentence_index");
        rec.word_index = r.u32("word_index");
        r.read(buf.data(), sizeof(float) * dimension, "vector");
        index.add(std::move(rec), buf);
    }
    // must be exactly exhausted
    char probe = 0;
    if (in.read(&probe, 1)) {
        throw std::runtime_error(path + ": trailing bytes after record " +
                                 std::to_string(count) + " at byte offset " +
                                 std::to_string(r.offset()));
    }
    return index;
}

}  // namespace latinlm
