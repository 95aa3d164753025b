#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

namespace latinlm {

enum class DocSource {
    perseus,
    latin_library,
    patrologia,
    thomisticum,
    wikipedia,
    internet_archive,
    other,
};

DocSource doc_source_from_string(const std::string& s);
std::string doc_source_to_string(DocSource s);
bool is_internet_archive(DocSource s);

struct RawDocument {
    std::string id;
    DocSource source = DocSource::other;
    std::string text;
};

// Half-open byte span into the owning sentence's text.
struct Span {
    uint32_t begin = 0;
    uint32_t end = 0;
};

struct Token {
    std::string surface;        // enclitics carry a leading "-"
    bool is_enclitic = false;
    Span span;                  // for enclitics, covers the text without the marker
};

struct Sentence {
    std::string doc_id;
    uint32_t index = 0;         // ordinal within document
    std::string text;
    std::vector<Token> tokens;
};

// Splits on sentence-final punctuation {. ? ! ; :} followed by whitespace.
// A period after a single-letter word (praenomen abbreviations such as
// "M. Tullius") does not end a sentence. Each returned sentence is trimmed
// and has internal whitespace runs collapsed to single spaces, so the
// concatenation of the outputs equals the input modulo whitespace.
std::vector<std::string> segment_sentences(const std::string& text);

// Exception list: word forms ending in -que/-ne/-ve that are lexicalized and
// must not be split (itaque, neque, ...). One word per line, '#' comments.
std::unordered_set<std::string> load_enclitic_exceptions(const std::string& path);

class Tokenizer {
public:
    Tokenizer() = default;
    explicit Tokenizer(std::unordered_set<std::string> enclitic_exceptions)
        : exceptions_(std::move(enclitic_exceptions)) {}

    // Words split on whitespace; punctuation characters become their own
    // tokens; digit runs stay together. Word-final enclitics {que, ne, ve}
    // detach as a separate token with a leading "-" unless the word is on
    // the exception list or the remaining host would be shorter than two
    // characters. Casing is preserved. Pure function of the input.
    std::vector<Token> tokenize(const std::string& sentence_text) const;

    const std::unordered_set<std::string>& exceptions() const { return exceptions_; }

private:
    std::unordered_set<std::string> exceptions_;
};

// Full pipeline over a document: segment, then tokenize every sentence.
std::vector<Sentence> tokenize_document(const Tokenizer& tok, const RawDocument& doc);

// Inverse of tokenize: rebuilds sentence text from tokens and spans.
// Drops the enclitic marker and rejoins on the original offsets.
std::string detokenize(const std::string& sentence_text, const std::vector<Token>& tokens);

// True if the surface contains at least one letter or digit (i.e. the token
// is a word rather than punctuation). Enclitic markers do not count.
bool is_word_token(const std::string& surface);

// ASCII-only case fold; non-ASCII bytes pass through. Latin corpora at desk
// scale are ASCII after transcription, and this keeps folding reversible to
// reason about.
std::string fold_case(std::string s);

// Strips one leading enclitic marker if present.
std::string strip_enclitic_marker(const std::string& surface);

// --- serialization ---

// One sentence per line, tokens space-separated (enclitics keep the marker).
void write_tokenized_text(const std::string& path, const std::vector<Sentence>& sentences);

// JSON-lines: {doc_id, index, text, tokens:[{surface, span:[b,e], is_enclitic}]}
void write_tokenized_jsonl(const std::string& path, const std::vector<Sentence>& sentences);
std::vector<Sentence> read_tokenized_jsonl(const std::string& path);

}  // namespace latinlm
