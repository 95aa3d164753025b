#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "latinlm/textproc.hpp"

namespace latinlm {

struct TaggedSentence {
    std::vector<std::string> tokens;
    std::vector<std::string> upos;
};

// FORM and UPOS columns of the 10-column treebank exchange format.
// Multi-word token ranges ("2-4") contribute their component rows; comments
// and empty-node rows ("8.1") are skipped. Throws on a row with the wrong
// column count, naming the line.
std::vector<TaggedSentence> read_conllu(const std::string& path);

struct EmendationExample {
    std::vector<std::string> left_context;   // word tokens before the slot
    std::vector<std::string> right_context;  // word tokens after the slot
    std::string gold_word;
    uint32_t sentence_len = 0;               // word tokens including the gold
    std::string source_id;
};

struct EmendationMiningReport {
    uint32_t candidates = 0;          // sentences with exactly one <word> span
    uint32_t failed_word_length = 0;
    uint32_t failed_sentence_length = 0;
    uint32_t failed_leakage = 0;
    uint32_t malformed_brackets = 0;  // nested or unbalanced, skipped
    uint32_t emitted = 0;
};

// All consecutive case-folded word 5-grams of a tokenized corpus, joined
// with single spaces. Enclitic markers are stripped before joining.
std::set<std::string> build_training_ngrams(const Tokenizer& tok,
                                            const std::vector<std::string>& sentences);

// The centered 5-gram for a slot: up to two word tokens each side plus the
// gold word, case-folded, space-joined.
std::string centered_ngram(const EmendationExample& ex);

// Sentences with exactly one single-word angle-bracket span become
// candidates, then pass the word-length (>= 2 chars), sentence-length
// (10..100 word tokens) and 5-gram leakage filters.
std::vector<EmendationExample> mine_emendations(
    const Tokenizer& tok, const std::vector<std::string>& sentences,
    const std::string& source_id, const std::set<std::string>& training_ngrams,
    EmendationMiningReport* report = nullptr);

// Drops every sentence containing a single-word angle-bracket span; strips
// the brackets from multi-word spans and keeps those sentences.
std::vector<std::string> remove_bracketed_sentences(const std::vector<std::string>& sentences);

void write_emendations(const std::string& path, const std::vector<EmendationExample>& examples);
std::vector<EmendationExample> read_emendations(const std::string& path);

struct DictionarySense {
    std::string level;                   // "I", "II", ...
    std::vector<std::string> citations;
};

struct DictionaryEntry {
    std::string headword;
    std::vector<DictionarySense> senses;
};

// JSON-lines: {headword, senses:[{level, citations:[...]}]}
std::vector<DictionaryEntry> read_dictionary_jsonl(const std::string& path);

enum class Split { train, dev, test };
std::string split_to_string(Split s);
Split split_from_string(const std::string& s);

struct SenseExample {
    std::string headword;
    int sense = 0;                       // 0 = first major sense, 1 = second
    std::string text;
    Split split = Split::train;
};

struct SenseMiningOptions {
    int min_per_sense = 10;
    int min_words = 6;                   // citation must have at least this many words
    double train_ratio = 0.8;
    double dev_ratio = 0.1;
    uint64_t seed = 0;
};

struct SenseMiningReport {
    uint32_t entries_seen = 0;
    uint32_t dropped_too_few_senses = 0;
    uint32_t dropped_too_few_citations = 0;
    uint32_t headwords_kept = 0;
    uint32_t examples_emitted = 0;
};

// Keeps headwords whose first two major senses each have at least
// min_per_sense qualifying citations, downsamples the larger sense to exact
// balance, and splits per headword per sense so every split stays balanced.
// Deterministic for a fixed seed.
std::vector<SenseExample> mine_sense_examples(const std::vector<DictionaryEntry>& entries,
                                              const SenseMiningOptions& opts,
                                              SenseMiningReport* report = nullptr);

void write_sense_examples(const std::string& path, const std::vector<SenseExample>& examples);
std::vector<SenseExample> read_sense_examples(const std::string& path);

// Word-token count after tokenization (punctuation excluded).
uint32_t count_word_tokens(const Tokenizer& tok, const std::string& text);

}  // namespace latinlm
