#include "latinlm/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "latinlm/rng.hpp"

namespace latinlm {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
        size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

bool is_digits(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s) {
        if (c < '0' || c > '9') return false;
    }
    return true;
}

}  // namespace

std::vector<TaggedSentence> read_conllu(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open treebank file " + path);

    std::vector<TaggedSentence> out;
    TaggedSentence current;
    std::string line;
    size_t lineno = 0;

    auto flush = [&]() {
        if (!current.tokens.empty()) {
            out.push_back(std::move(current));
            current = TaggedSentence{};
        }
    };

    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            flush();
            continue;
        }
        if (line[0] == '#') continue;
        auto fields = split_tabs(line);
        if (fields.size() != 10) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected 10 tab-separated columns, got " +
                                     std::to_string(fields.size()));
        }
        const std::string& id = fields[0];
        if (id.find('-') != std::string::npos) continue;  // multi-word range row
        if (id.find('.') != std::string::npos) continue;  // empty node
        if (!is_digits(id)) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": malformed token id '" + id + "'");
        }
        current.tokens.push_back(fields[1]);
        current.upos.push_back(fields[3]);
    }
    flush();
    return out;
}

namespace {

struct BracketSpan {
    size_t begin = 0;  // position of '<'
    size_t end = 0;    // position of '>'
};

// no nesting allowed; returns false on malformed bracketing
bool find_bracket_spans(const std::string& s, std::vector<BracketSpan>& spans) {
    spans.clear();
    size_t open = std::string::npos;
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '<') {
            if (open != std::string::npos) return false;
            open = i;
        } else if (s[i] == '>') {
            if (open == std::string::npos) return false;
            spans.push_back({open, i});
            open = std::string::npos;
        }
    }
    return open == std::string::npos;
}

bool span_is_single_word(const std::string& s, const BracketSpan& span,
                         std::string* word_out) {
    const std::string inner = s.substr(span.begin + 1, span.end - span.begin - 1);
    if (inner.empty()) return false;
    for (char c : inner) {
        if (c == ' ' || c == '\t') return false;
    }
    if (word_out != nullptr) *word_out = inner;
    return true;
}

}  // namespace

std::set<std::string> build_training_ngrams(const Tokenizer& tok,
                                            const std::vector<std::string>& sentences) {
    std::set<std::string> grams;
    for (const auto& text : sentences) {
        std::vector<std::string> words;
        for (const auto& t : tok.tokenize(text)) {
            if (is_word_token(t.surface)) {
                words.push_back(fold_case(strip_enclitic_marker(t.surface)));
            }
        }
        if (words.size() < 5) continue;
        for (size_t i = 0; i + 5 <= words.size(); ++i) {
            std::string g = words[i];
            for (size_t j = 1; j < 5; ++j) {
                g += ' ';
                g += words[i + j];
            }
            grams.insert(std::move(g));
        }
    }
    return grams;
}

std::string centered_ngram(const EmendationExample& ex) {
    std::vector<std::string> parts;
    const size_t nl = ex.left_context.size();
    for (size_t i = nl >= 2 ? nl - 2 : 0; i < nl; ++i) {
        parts.push_back(fold_case(ex.left_context[i]));
    }
    parts.push_back(fold_case(ex.gold_word));
    for (size_t i = 0; i < std::min<size_t>(2, ex.right_context.size()); ++i) {
        parts.push_back(fold_case(ex.right_context[i]));
    }
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) out += ' ';
        out += parts[i];
    }
    return out;
}

std::vector<EmendationExample> mine_emendations(
    const Tokenizer& tok, const std::vector<std::string>& sentences,
    const std::string& source_id, const std::set<std::string>& training_ngrams,
    EmendationMiningReport* report) {
    EmendationMiningReport local;
    std::vector<EmendationExample> out;

    for (size_t si = 0; si < sentences.size(); ++si) {
        const std::string& text = sentences[si];
        std::vector<BracketSpan> spans;
        if (!find_bracket_spans(text, spans)) {
            ++local.malformed_brackets;
            std::cerr << "warning: skipping sentence with unbalanced brackets: "
                      << source_id << "#" << si << "\n";
            continue;
        }
        if (spans.size() != 1) continue;
        std::string gold;
        if (!span_is_single_word(text, spans[0], &gold)) continue;
        ++local.candidates;

        // word tokens to the left and right of the span
        const std::string left_text = text.substr(0, spans[0].begin);
        const std::string right_text = text.substr(spans[0].end + 1);
        EmendationExample ex;
        for (const auto& t : tok.tokenize(left_text)) {
            if (is_word_token(t.surface)) {
                ex.left_context.push_back(strip_enclitic_marker(t.surface));
            }
        }
        for (const auto& t : tok.tokenize(right_text)) {
            if (is_word_token(t.surface)) {
                ex.right_context.push_back(strip_enclitic_marker(t.surface));
            }
        }
        ex.gold_word = gold;
        ex.sentence_len = static_cast<uint32_t>(ex.left_context.size() +
                                                ex.right_context.size() + 1);
        ex.source_id = source_id + "#" + std::to_string(si);

        if (gold.size() < 2) {
            ++local.failed_word_length;
            continue;
        }
        if (ex.sentence_len < 10 || ex.sentence_len > 100) {
            ++local.failed_sentence_length;
            continue;
        }
        if (training_ngrams.count(centered_ngram(ex)) > 0) {
            ++local.failed_leakage;
            continue;
        }
        ++local.emitted;
        out.push_back(std::move(ex));
    }
    std::sort(out.begin(), out.end(),
              [](const EmendationExample& a, const EmendationExample& b) {
                  return a.source_id < b.source_id;
              });
    if (report != nullptr) *report = local;
    return out;
}

std::vector<std::string> remove_bracketed_sentences(const std::vector<std::string>& sentences) {
    std::vector<std::string> out;
    out.reserve(sentences.size());
    for (const auto& text : sentences) {
        std::vector<BracketSpan> spans;
        if (!find_bracket_spans(text, spans)) {
            // malformed bracketing cannot be classified; drop it from training
            continue;
        }
        bool has_single_word = false;
        for (const auto& span : spans) {
            if (span_is_single_word(text, span, nullptr)) {
                has_single_word = true;
                break;
            }
        }
        if (has_single_word) continue;
        if (spans.empty()) {
            out.push_back(text);
            continue;
        }
        std::string cleaned;
        cleaned.reserve(text.size());
        for (char ch : text) {
            if (ch == '<' || ch == '>') continue;
            cleaned.push_back(ch);
        }
        out.push_back(std::move(cleaned));
    }
    return out;
}

void write_emendations(const std::string& path,
                       const std::vector<EmendationExample>& examples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& ex : examples) {
        nlohmann::json j;
        j["left_context"] = ex.left_context;
        j["right_context"] = ex.right_context;
        j["gold_word"] = ex.gold_word;
        j["sentence_len"] = ex.sentence_len;
        j["source_id"] = ex.source_id;
        out << j.dump() << '\n';
    }
}

std::vector<EmendationExample> read_emendations(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<EmendationExample> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        EmendationExample ex;
        ex.left_context = j.at("left_context").get<std::vector<std::string>>();
        ex.right_context = j.at("right_context").get<std::vector<std::string>>();
        ex.gold_word = j.at("gold_word").get<std::string>();
        ex.sentence_len = j.at("sentence_len").get<uint32_t>();
        ex.source_id = j.at("source_id").get<std::string>();
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<DictionaryEntry> read_dictionary_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open dictionary file " + path);
    std::vector<DictionaryEntry> out;
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
        DictionaryEntry entry;
        entry.headword = j.at("headword").get<std::string>();
        if (entry.headword.empty()) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": empty headword");
        }
        for (const auto& sj : j.at("senses")) {
            DictionarySense sense;
            sense.level = sj.at("level").get<std::string>();
            sense.citations = sj.at("citations").get<std::vector<std::string>>();
            entry.senses.push_back(std::move(sense));
        }
        out.push_back(std::move(entry));
    }
    return out;
}

std::string split_to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::dev: return "dev";
        case Split::test: return "test";
    }
    return "train";
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "dev") return Split::dev;
    if (s == "test") return Split::test;
    throw std::invalid_argument("unknown split label: " + s);
}

uint32_t count_word_tokens(const Tokenizer& tok, const std::string& text) {
    uint32_t n = 0;
    for (const auto& t : tok.tokenize(text)) {
        if (is_word_token(t.surface)) ++n;
    }
    return n;
}

std::vector<SenseExample> mine_sense_examples(const std::vector<DictionaryEntry>& entries,
                                              const SenseMiningOptions& opts,
                                              SenseMiningReport* report) {
    SenseMiningReport local;
    Tokenizer tok;  // word counting only, no exception list needed
    std::vector<SenseExample> out;

    for (const auto& entry : entries) {
        ++local.entries_seen;
        if (entry.senses.size() < 2) {
            ++local.dropped_too_few_senses;
            continue;
        }
        // first two major senses only
        std::array<std::vector<std::string>, 2> qualifying;
        for (int s = 0; s < 2; ++s) {
            for (const auto& cit : entry.senses[static_cast<size_t>(s)].citations) {
                if (count_word_tokens(tok, cit) >= static_cast<uint32_t>(opts.min_words)) {
                    qualifying[static_cast<size_t>(s)].push_back(cit);
                }
            }
        }
        if (qualifying[0].size() < static_cast<size_t>(opts.min_per_sense) ||
            qualifying[1].size() < static_cast<size_t>(opts.min_per_sense)) {
            ++local.dropped_too_few_citations;
            continue;
        }
        ++local.headwords_kept;

        const size_t n = std::min(qualifying[0].size(), qualifying[1].size());
        const size_t n_dev = static_cast<size_t>(
            std::floor(opts.dev_ratio * static_cast<double>(n)));
        const size_t n_test = static_cast<size_t>(std::floor(
            (1.0 - opts.train_ratio - opts.dev_ratio) * static_cast<double>(n) +
            1e-9));
        for (int s = 0; s < 2; ++s) {
            auto& cits = qualifying[static_cast<size_t>(s)];
            Rng rng(mix_seed(opts.seed, entry.headword + "\x1f" + std::to_string(s)));
            rng.shuffle(cits);
            cits.resize(n);  // downsample the larger sense
            for (size_t i = 0; i < n; ++i) {
                SenseExample ex;
                ex.headword = entry.headword;
                ex.sense = s;
                ex.text = cits[i];
                if (i < n_dev) {
                    ex.split = Split::dev;
                } else if (i < n_dev + n_test) {
                    ex.split = Split::test;
                } else {
                    ex.split = Split::train;
                }
                out.push_back(std::move(ex));
                ++local.examples_emitted;
            }
        }
    }
    if (report != nullptr) *report = local;
    return out;
}

void write_sense_examples(const std::string& path,
                          const std::vector<SenseExample>& examples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& ex : examples) {
        nlohmann::json j;
        j["headword"] = ex.headword;
        j["sense"] = ex.sense;
        j["text"] = ex.text;
        j["split"] = split_to_string(ex.split);
        out << j.dump() << '\n';
    }
}

std::vector<SenseExample> read_sense_examples(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<SenseExample> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        SenseExample ex;
        ex.headword = j.at("headword").get<std::string>();
        ex.sense = j.at("sense").get<int>();
        ex.text = j.at("text").get<std::string>();
        ex.split = split_from_string(j.at("split").get<std::string>());
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace latinlm
