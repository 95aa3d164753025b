#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "latinlm/datasets.hpp"
#include "latinlm/encoder.hpp"

namespace latinlm {

struct CandidateRanking {
    std::string source_id;
    // sorted by score descending, exact ties broken lexicographically
    std::vector<std::pair<std::string, double>> entries;
    bool truncated_context = false;
};

struct InfillOptions {
    size_t seq_len = 0;  // 0 selects the encoder's max_positions
};

// Scores every lexicon word for the emendation slot. A candidate encoding to
// k subtokens is scored by placing k [MASK] slots and averaging the per-slot
// log-probabilities of its pieces, so scores are length-normalized and a
// single-piece candidate's score is exactly the log of its MLM probability.
// Context that exceeds the length budget is truncated symmetrically around
// the slot.
CandidateRanking rank_candidates(const EncoderState& state, const SubwordVocab& vocab,
                                 const EmendationExample& example,
                                 const std::vector<std::string>& candidate_lexicon,
                                 const InfillOptions& opts = {});

struct InfillMetrics {
    size_t n_examples = 0;
    double top1 = 0.0;
    double top10 = 0.0;
    double top50 = 0.0;
    double mean_reciprocal_rank = 0.0;
};

// Rank of each gold word under the tie-broken order; throws if a gold word
// is missing from its ranking (the lexicon must contain it).
InfillMetrics evaluate_infilling(const std::vector<CandidateRanking>& rankings,
                                 const std::vector<std::string>& gold_words);

// 1-based rank of a word within a ranking; 0 when absent.
size_t rank_of(const CandidateRanking& ranking, const std::string& word);

// Word types of the corpus with frequency >= min_frequency, case-folded to
// the vocab's convention, punctuation excluded, sorted.
std::vector<std::string> build_candidate_lexicon(const std::vector<Sentence>& sentences,
                                                 const SubwordVocab& vocab,
                                                 uint64_t min_frequency = 5);

void write_rankings(const std::string& path, const std::vector<CandidateRanking>& rankings);
std::vector<CandidateRanking> read_rankings(const std::string& path);
void write_lexicon(const std::string& path, const std::vector<std::string>& words);
std::vector<std::string> read_lexicon(const std::string& path);

// Table-style top-n listing (word and probability-like score per line).
std::string format_ranking_table(const CandidateRanking& ranking, size_t top_n = 10);

}  // namespace latinlm
