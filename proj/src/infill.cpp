#include "latinlm/infill.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace latinlm {

namespace {

// words nearest the slot win when the budget is short, alternating sides
void truncate_context(const SubwordVocab& vocab,
                      const std::vector<std::string>& left,
                      const std::vector<std::string>& right, size_t budget,
                      std::vector<std::vector<int>>& left_ids,
                      std::vector<std::vector<int>>& right_ids, bool& truncated) {
    std::vector<std::vector<int>> left_enc, right_enc;
    for (const auto& w : left) left_enc.push_back(encode_word(vocab, w));
    for (const auto& w : right) right_enc.push_back(encode_word(vocab, w));

    size_t li = 0;  // taken from the end of left
    size_t ri = 0;  // taken from the start of right
    size_t used = 0;
    bool progress = true;
    while (progress) {
        progress = false;
        if (li < left_enc.size()) {
            const auto& enc = left_enc[left_enc.size() - 1 - li];
            if (used + enc.size() <= budget) {
                used += enc.size();
                ++li;
                progress = true;
            }
        }
        if (ri < right_enc.size()) {
            const auto& enc = right_enc[ri];
            if (used + enc.size() <= budget) {
                used += enc.size();
                ++ri;
                progress = true;
            }
        }
    }
    truncated = li < left_enc.size() || ri < right_enc.size();
    left_ids.assign(left_enc.end() - static_cast<ptrdiff_t>(li), left_enc.end());
    right_ids.assign(right_enc.begin(), right_enc.begin() + static_cast<ptrdiff_t>(ri));
}

}  // namespace

CandidateRanking rank_candidates(const EncoderState& state, const SubwordVocab& vocab,
                                 const EmendationExample& example,
                                 const std::vector<std::string>& candidate_lexicon,
                                 const InfillOptions& opts) {
    if (candidate_lexicon.empty()) {
        throw std::invalid_argument("rank_candidates: empty candidate lexicon");
    }
    const size_t seq_len = opts.seq_len == 0
                               ? static_cast<size_t>(state.config.max_positions)
                               : opts.seq_len;

    // deduplicated candidates grouped by subtoken count
    std::map<std::string, std::vector<int>> pieces;
    std::map<size_t, std::vector<const std::string*>> by_len;
    for (const auto& word : candidate_lexicon) {
        auto [it, inserted] = pieces.emplace(word, std::vector<int>{});
        if (!inserted) continue;
        it->second = encode_word(vocab, word);
        by_len[it->second.size()].push_back(&it->first);
    }

    const size_t max_k = by_len.rbegin()->first;
    if (seq_len < 2 + max_k) {
        throw std::invalid_argument("rank_candidates: sequence budget too small");
    }

    CandidateRanking ranking;
    ranking.source_id = example.source_id;

    for (const auto& [k, words] : by_len) {
        std::vector<std::vector<int>> left_ids, right_ids;
        bool truncated = false;
        truncate_context(vocab, example.left_context, example.right_context,
                         seq_len - 2 - k, left_ids, right_ids, truncated);
        if (truncated) {
            ranking.truncated_context = true;
            std::cerr << "warning: context truncated for " << example.source_id
                      << " at k=" << k << "\n";
        }

        std::vector<int> ids;
        ids.push_back(SubwordVocab::kCls);
        for (const auto& w : left_ids) ids.insert(ids.end(), w.begin(), w.end());
        std::vector<uint32_t> slots;
        for (size_t j = 0; j < k; ++j) {
            slots.push_back(static_cast<uint32_t>(ids.size()));
            ids.push_back(SubwordVocab::kMask);
        }
        for (const auto& w : right_ids) ids.insert(ids.end(), w.begin(), w.end());
        ids.push_back(SubwordVocab::kSep);

        ForwardCache fwd = forward(state, ids, static_cast<int>(ids.size()), false, nullptr);
        MlmCache mlm = mlm_forward(state, fwd, slots);
        const int V = state.config.vocab_size;

        for (const std::string* word : words) {
            const auto& p = pieces.at(*word);
            Real sum_log = 0.0;
            for (size_t j = 0; j < k; ++j) {
                const Real prob =
                    mlm.probs.data[j * static_cast<size_t>(V) + static_cast<size_t>(p[j])];
                sum_log += std::log(std::max(prob, std::numeric_limits<Real>::min()));
            }
            ranking.entries.emplace_back(*word, sum_log / static_cast<Real>(k));
        }
    }

    std::sort(ranking.entries.begin(), ranking.entries.end(),
              [](const auto& a, const auto& b) {
                  if (a.second != b.second) return a.second > b.second;
                  return a.first < b.first;
              });
    return ranking;
}

size_t rank_of(const CandidateRanking& ranking, const std::string& word) {
    for (size_t i = 0; i < ranking.entries.size(); ++i) {
        if (ranking.entries[i].first == word) return i + 1;
    }
    return 0;
}

InfillMetrics evaluate_infilling(const std::vector<CandidateRanking>& rankings,
                                 const std::vector<std::string>& gold_words) {
    if (rankings.size() != gold_words.size()) {
        throw std::invalid_argument("evaluate_infilling: one gold word per ranking required");
    }
    InfillMetrics m;
    m.n_examples = rankings.size();
    if (rankings.empty()) return m;

    size_t top1 = 0, top10 = 0, top50 = 0;
    double mrr_sum = 0.0;
    for (size_t i = 0; i < rankings.size(); ++i) {
        const size_t rank = rank_of(rankings[i], gold_words[i]);
        if (rank == 0) {
            throw std::invalid_argument("evaluate_infilling: gold word '" + gold_words[i] +
                                        "' absent from ranking " + rankings[i].source_id);
        }
        if (rank <= 1) ++top1;
        if (rank <= 10) ++top10;
        if (rank <= 50) ++top50;
        mrr_sum += 1.0 / static_cast<double>(rank);
    }
    const double n = static_cast<double>(m.n_examples);
    m.top1 = static_cast<double>(top1) / n;
    m.top10 = static_cast<double>(top10) / n;
    m.top50 = static_cast<double>(top50) / n;
    m.mean_reciprocal_rank = mrr_sum / n;
    return m;
}

std::vector<std::string> build_candidate_lexicon(const std::vector<Sentence>& sentences,
                                                 const SubwordVocab& vocab,
                                                 uint64_t min_frequency) {
    std::map<std::string, uint64_t> counts;
    for (const auto& s : sentences) {
        for (const auto& t : s.tokens) {
            if (!is_word_token(t.surface)) continue;
            std::string w = strip_enclitic_marker(t.surface);
            if (vocab.lowercase()) w = fold_case(w);
            ++counts[w];
        }
    }
    std::vector<std::string> out;
    for (const auto& [w, c] : counts) {
        if (c >= min_frequency) out.push_back(w);
    }
    return out;
}

void write_rankings(const std::string& path, const std::vector<CandidateRanking>& rankings) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& r : rankings) {
        nlohmann::json j;
        j["source_id"] = r.source_id;
        auto entries = nlohmann::json::array();
        for (const auto& [w, s] : r.entries) entries.push_back({w, s});
        j["entries"] = std::move(entries);
        out << j.dump() << '\n';
    }
}

std::vector<CandidateRanking> read_rankings(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<CandidateRanking> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        CandidateRanking r;
        r.source_id = j.at("source_id").get<std::string>();
        for (const auto& e : j.at("entries")) {
            r.entries.emplace_back(e[0].get<std::string>(), e[1].get<double>());
        }
        out.push_back(std::move(r));
    }
    return out;
}

void write_lexicon(const std::string& path, const std::vector<std::string>& words) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& w : words) out << w << '\n';
}

std::vector<std::string> read_lexicon(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

std::string format_ranking_table(const CandidateRanking& ranking, size_t top_n) {
    std::ostringstream out;
    out << "rank  score        word\n";
    const size_t n = std::min(top_n, ranking.entries.size());
    for (size_t i = 0; i < n; ++i) {
        out << std::setw(4) << (i + 1) << "  " << std::setw(11) << std::fixed
            << std::setprecision(6) << ranking.entries[i].second << "  "
            << ranking.entries[i].first << '\n';
    }
    return out.str();
}

}  // namespace latinlm
