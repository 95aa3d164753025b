#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "latinlm/textproc.hpp"

namespace latinlm {

// Learned subword inventory. Ids are dense; the five specials always occupy
// ids 0..4 in the order below.
class SubwordVocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kCls = 2;
    static constexpr int kSep = 3;
    static constexpr int kMask = 4;
    static constexpr int kNumSpecials = 5;

    SubwordVocab() = default;
    SubwordVocab(std::vector<std::string> pieces, bool lowercase);

    int size() const { return static_cast<int>(id_to_piece_.size()); }
    bool lowercase() const { return lowercase_; }
    const std::string& continuation_prefix() const { return continuation_; }

    // -1 when absent
    int piece_id(const std::string& piece) const;
    const std::string& piece(int id) const;
    bool is_special(int id) const { return id >= 0 && id < kNumSpecials; }
    const std::vector<std::string>& pieces() const { return id_to_piece_; }

private:
    std::vector<std::string> id_to_piece_;
    std::unordered_map<std::string, int> piece_to_id_;
    bool lowercase_ = true;
    std::string continuation_ = "##";
};

using WordFrequency = std::pair<std::string, uint64_t>;

// Greedy pair-merge vocabulary learning with the likelihood score
// count(ab) / (count(a) * count(b)). The alphabet holds both the initial and
// the continuation ("##") form of every character whose total weighted
// occurrence count is at least min_frequency. Merging continues until the
// vocabulary holds exactly target_size entries or no pair with count >=
// min_frequency remains. Pair counts include overlapping occurrences; exact
// score ties break on the merged string with the continuation prefix
// stripped, unprefixed first, then on the pair itself. Deterministic for
// identical input.
SubwordVocab learn_vocab(const std::vector<WordFrequency>& word_freqs,
                         size_t target_size, uint64_t min_frequency,
                         bool lowercase = true);

// Greedy longest-match from the left; the first piece is unprefixed,
// later pieces match under the continuation prefix. A word with any
// unmatchable position encodes as the single [UNK] id.
std::vector<int> encode_word(const SubwordVocab& vocab, const std::string& word);

// Contiguous subtoken range a word produced, half-open over positions in ids.
struct WordRange {
    uint32_t begin = 0;
    uint32_t end = 0;
};

struct SubwordEncoding {
    std::vector<int> ids;
    std::vector<WordRange> word_alignment;  // one entry per surviving word
    bool has_specials = false;
};

// [CLS]/[SEP] added when add_specials; truncation happens at whole-word
// boundaries so no word is ever split by the length budget. Words dropped by
// truncation simply have no alignment entry.
SubwordEncoding encode_sentence(const SubwordVocab& vocab,
                                const std::vector<std::string>& words,
                                bool add_specials, size_t max_len);
SubwordEncoding encode_sentence(const SubwordVocab& vocab,
                                const std::vector<Token>& tokens,
                                bool add_specials, size_t max_len);

// Drops specials, strips continuation prefixes, joins words with single
// spaces. Throws on an id outside the vocabulary, naming the position.
std::string decode(const SubwordVocab& vocab, const std::vector<int>& ids);

// Vocab file: two header lines (#lowercase=<bool>, #continuation=##), then
// one piece per line; 0-based line number after the header is the id.
void save_vocab(const SubwordVocab& vocab, const std::string& path);
SubwordVocab load_vocab(const std::string& path);

// Word-frequency extraction from a tokenized one-sentence-per-line file
// (tokens space-separated). Result is sorted by word for determinism.
std::vector<WordFrequency> word_frequencies_from_file(const std::string& path);
std::vector<WordFrequency> word_frequencies_from_sentences(
    const std::vector<Sentence>& sentences);

}  // namespace latinlm
