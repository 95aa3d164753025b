#include "latinlm/corpus.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "latinlm/rng.hpp"

namespace latinlm {

QualityReport quality_filter(const Tokenizer& tok, const RawDocument& doc,
                             const std::unordered_set<std::string>& reference_vocab,
                             double threshold) {
    QualityReport report;
    report.doc_id = doc.id;
    uint64_t total = 0;
    uint64_t hits = 0;
    for (const auto& sentence : tokenize_document(tok, doc)) {
        for (const auto& t : sentence.tokens) {
            if (!is_word_token(t.surface)) continue;
            ++total;
            if (reference_vocab.count(fold_case(strip_enclitic_marker(t.surface)))) {
                ++hits;
            }
        }
    }
    if (total == 0) {
        report.in_vocab_fraction = 0.0;
        report.retained = false;
        return report;
    }
    report.in_vocab_fraction = static_cast<double>(hits) / static_cast<double>(total);
    report.retained = report.in_vocab_fraction >= threshold;
    return report;
}

std::unordered_set<std::string> load_reference_vocab(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open reference vocab " + path);
    std::unordered_set<std::string> vocab;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) vocab.insert(fold_case(line));
    }
    return vocab;
}

MixturePlan plan_mixture(const std::map<std::string, uint64_t>& source_token_counts,
                         double target_ia_fraction) {
    if (!(target_ia_fraction > 0.0 && target_ia_fraction < 1.0)) {
        throw std::invalid_argument("target_ia_fraction must lie in (0, 1)");
    }
    uint64_t ia = 0;
    uint64_t non_ia = 0;
    for (const auto& [src, count] : source_token_counts) {
        if (is_internet_archive(doc_source_from_string(src))) {
            ia += count;
        } else {
            non_ia += count;
        }
    }
    if (ia == 0 || non_ia == 0) {
        throw std::invalid_argument(
            "mixture planning needs positive token counts on both the IA and non-IA side");
    }
    // Non-IA weight chosen so the expected IA share equals the target:
    //   ia / (ia + w * non_ia) = t  =>  w = ia * (1 - t) / (t * non_ia)
    const double w = static_cast<double>(ia) * (1.0 - target_ia_fraction) /
                     (target_ia_fraction * static_cast<double>(non_ia));
    MixturePlan plan;
    plan.target_ia_fraction = target_ia_fraction;
    for (const auto& [src, count] : source_token_counts) {
        (void)count;
        plan.source_weights[src] =
            is_internet_archive(doc_source_from_string(src)) ? 1.0 : w;
    }
    return plan;
}

uint32_t repetitions_for(const MixturePlan& plan, const std::string& source,
                         const std::string& doc_id, uint64_t seed) {
    auto it = plan.source_weights.find(source);
    const double w = it == plan.source_weights.end() ? 1.0 : it->second;
    const double whole = std::floor(w);
    const double frac = w - whole;
    uint32_t reps = static_cast<uint32_t>(whole);
    if (frac > 0.0) {
        Rng rng(mix_seed(seed, source + "\x1f" + doc_id));
        if (rng.bernoulli(frac)) ++reps;
    }
    return reps;
}

void save_mixture_plan(const MixturePlan& plan, const std::string& path) {
    nlohmann::json j;
    j["target_ia_fraction"] = plan.target_ia_fraction;
    j["source_weights"] = plan.source_weights;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
}

MixturePlan load_mixture_plan(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open mixture plan " + path);
    nlohmann::json j;
    in >> j;
    MixturePlan plan;
    plan.target_ia_fraction = j.at("target_ia_fraction").get<double>();
    plan.source_weights =
        j.at("source_weights").get<std::map<std::string, double>>();
    return plan;
}

MaskedExample mask_sentence(const SubwordEncoding& enc, const SubwordVocab& vocab,
                            const MaskingOptions& opts, Rng& rng) {
    MaskedExample ex;
    ex.attention_length = static_cast<uint32_t>(enc.ids.size());
    ex.input_ids = enc.ids;
    ex.input_ids.resize(opts.seq_len, SubwordVocab::kPad);

    const size_t n_words = enc.word_alignment.size();
    std::vector<char> selected(n_words, 0);
    bool any = false;
    for (size_t w = 0; w < n_words; ++w) {
        if (rng.bernoulli(opts.mask_prob)) {
            selected[w] = 1;
            any = true;
        }
    }
    if (!any && opts.force_one_word && n_words > 0) {
        selected[rng.uniform_below(n_words)] = 1;
        any = true;
    }

    const int n_replaceable = vocab.size() - SubwordVocab::kNumSpecials;
    for (size_t w = 0; w < n_words; ++w) {
        if (!selected[w]) continue;
        const WordRange r = enc.word_alignment[w];
        const double mode = rng.uniform01();
        for (uint32_t p = r.begin; p < r.end; ++p) {
            ex.mask_positions.push_back(p);
            ex.original_ids.push_back(enc.ids[p]);
            if (mode < 0.8) {
                ex.input_ids[p] = SubwordVocab::kMask;
            } else if (mode < 0.9 && n_replaceable > 0) {
                ex.input_ids[p] = SubwordVocab::kNumSpecials +
                                  static_cast<int>(rng.uniform_below(
                                      static_cast<uint64_t>(n_replaceable)));
            }
            // else: left unchanged, still a prediction target
        }
    }
    return ex;
}

std::vector<MaskedExample> make_masked_examples(const std::vector<Sentence>& sentences,
                                                const SubwordVocab& vocab,
                                                const MaskingOptions& opts) {
    std::vector<MaskedExample> out;
    out.reserve(sentences.size());
    std::string current_doc;
    uint64_t doc_seed = 0;
    Rng rng(0);
    bool have_rng = false;
    for (const auto& s : sentences) {
        if (!have_rng || s.doc_id != current_doc) {
            current_doc = s.doc_id;
            doc_seed = mix_seed(opts.seed, s.doc_id);
            rng = Rng(doc_seed);
            have_rng = true;
        }
        auto enc = encode_sentence(vocab, s.tokens, true, opts.seq_len);
        out.push_back(mask_sentence(enc, vocab, opts, rng));
    }
    return out;
}

void write_masked_examples(const std::string& path,
                           const std::vector<MaskedExample>& examples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& ex : examples) {
        nlohmann::json j;
        j["input_ids"] = ex.input_ids;
        j["mask_positions"] = ex.mask_positions;
        j["original_ids"] = ex.original_ids;
        j["attention_length"] = ex.attention_length;
        out << j.dump() << '\n';
    }
}

std::vector<MaskedExample> read_masked_examples(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<MaskedExample> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": bad json: " + e.what());
        }
        MaskedExample ex;
        ex.input_ids = j.at("input_ids").get<std::vector<int>>();
        ex.mask_positions = j.at("mask_positions").get<std::vector<uint32_t>>();
        ex.original_ids = j.at("original_ids").get<std::vector<int>>();
        ex.attention_length = j.at("attention_length").get<uint32_t>();
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace latinlm
