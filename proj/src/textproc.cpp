#include "latinlm/textproc.hpp"

#include <array>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace latinlm {

namespace {

bool is_ascii_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_ascii_letter(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

bool is_ascii_digit(unsigned char c) {
    return c >= '0' && c <= '9';
}

// Length in bytes of the UTF-8 sequence starting at s[i].
size_t cp_len(const std::string& s, size_t i) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    if (c < 0x80) return 1;
    if ((c >> 5) == 0x6) return std::min<size_t>(2, s.size() - i);
    if ((c >> 4) == 0xE) return std::min<size_t>(3, s.size() - i);
    if ((c >> 3) == 0x1E) return std::min<size_t>(4, s.size() - i);
    return 1;  // stray continuation byte, treat as opaque
}

// Common typographic punctuation seen in digitized Latin texts. Any other
// non-ASCII codepoint (letters with diacritics, ligatures) counts as a word
// character.
bool is_unicode_punct(const std::string& cp) {
    static const std::array<const char*, 12> punct = {
        "«", "»", "„", "“", "”", "‘",
        "’", "–", "—", "…", "·", "†",
    };
    for (const char* p : punct) {
        if (cp == p) return true;
    }
    return false;
}

bool is_sentence_final(char c) {
    return c == '.' || c == '?' || c == '!' || c == ';' || c == ':';
}

std::string normalize_ws(const std::string& raw) {
    std::string out;
    out.reserve(raw.size());
    bool in_space = false;
    for (char c : raw) {
        if (is_ascii_space(static_cast<unsigned char>(c))) {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty()) out.push_back(' ');
        in_space = false;
        out.push_back(c);
    }
    return out;
}

}  // namespace

DocSource doc_source_from_string(const std::string& s) {
    if (s == "perseus") return DocSource::perseus;
    if (s == "latin_library") return DocSource::latin_library;
    if (s == "patrologia") return DocSource::patrologia;
    if (s == "thomisticum") return DocSource::thomisticum;
    if (s == "wikipedia") return DocSource::wikipedia;
    if (s == "internet_archive") return DocSource::internet_archive;
    if (s == "other") return DocSource::other;
    throw std::invalid_argument("unknown document source: " + s);
}

std::string doc_source_to_string(DocSource s) {
    switch (s) {
        case DocSource::perseus: return "perseus";
        case DocSource::latin_library: return "latin_library";
        case DocSource::patrologia: return "patrologia";
        case DocSource::thomisticum: return "thomisticum";
        case DocSource::wikipedia: return "wikipedia";
        case DocSource::internet_archive: return "internet_archive";
        case DocSource::other: return "other";
    }
    return "other";
}

bool is_internet_archive(DocSource s) { return s == DocSource::internet_archive; }

std::vector<std::string> segment_sentences(const std::string& text) {
    std::vector<std::string> out;
    if (text.empty()) return out;

    size_t start = 0;
    size_t i = 0;
    auto flush = [&](size_t end_excl) {
        std::string s = normalize_ws(text.substr(start, end_excl - start));
        if (!s.empty()) out.push_back(std::move(s));
        start = end_excl;
    };

    while (i < text.size()) {
        char c = text[i];
        if (is_sentence_final(c) && i + 1 < text.size() &&
            is_ascii_space(static_cast<unsigned char>(text[i + 1]))) {
            bool boundary = true;
            if (c == '.') {
                // single-letter abbreviation protection: "M. Tullius"
                size_t w_end = i;
                size_t w_begin = w_end;
                while (w_begin > 0 &&
                       !is_ascii_space(static_cast<unsigned char>(text[w_begin - 1]))) {
                    --w_begin;
                }
                if (w_end - w_begin == 1 &&
                    is_ascii_letter(static_cast<unsigned char>(text[w_begin]))) {
                    boundary = false;
                }
            }
            if (boundary) {
                flush(i + 1);
                ++i;
                continue;
            }
        }
        ++i;
    }
    flush(text.size());
    return out;
}

std::unordered_set<std::string> load_enclitic_exceptions(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open enclitic exception list: " + path);
    }
    std::unordered_set<std::string> set;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        set.insert(fold_case(line));
    }
    return set;
}

std::vector<Token> Tokenizer::tokenize(const std::string& text) const {
    static const std::array<const char*, 3> enclitics = {"que", "ne", "ve"};

    std::vector<Token> out;
    size_t i = 0;
    while (i < text.size()) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (is_ascii_space(c)) {
            ++i;
            continue;
        }
        size_t begin = i;
        if (is_ascii_letter(c) || is_ascii_digit(c) || c >= 0x80) {
            // word run: letters, digits and non-punct multibyte codepoints
            while (i < text.size()) {
                unsigned char d = static_cast<unsigned char>(text[i]);
                if (is_ascii_letter(d) || is_ascii_digit(d)) {
                    ++i;
                    continue;
                }
                if (d >= 0x80) {
                    size_t n = cp_len(text, i);
                    if (is_unicode_punct(text.substr(i, n))) break;
                    i += n;
                    continue;
                }
                break;
            }
            std::string word = text.substr(begin, i - begin);
            std::string folded = fold_case(word);

            size_t split_at = 0;  // byte offset of the enclitic within the word
            if (exceptions_.find(folded) == exceptions_.end()) {
                for (const char* e : enclitics) {
                    size_t elen = std::char_traits<char>::length(e);
                    if (folded.size() >= elen + 2 &&
                        folded.compare(folded.size() - elen, elen, e) == 0) {
                        split_at = word.size() - elen;
                        break;
                    }
                }
            }

            if (split_at > 0) {
                Token host;
                host.surface = word.substr(0, split_at);
                host.span = {static_cast<uint32_t>(begin),
                             static_cast<uint32_t>(begin + split_at)};
                out.push_back(std::move(host));
                Token enc;
                enc.surface = "-" + word.substr(split_at);
                enc.is_enclitic = true;
                enc.span = {static_cast<uint32_t>(begin + split_at),
                            static_cast<uint32_t>(i)};
                out.push_back(std::move(enc));
            } else {
                Token t;
                t.surface = std::move(word);
                t.span = {static_cast<uint32_t>(begin), static_cast<uint32_t>(i)};
                out.push_back(std::move(t));
            }
        } else {
            // punctuation: one codepoint per token
            size_t n = (c >= 0x80) ? cp_len(text, i) : 1;
            Token t;
            t.surface = text.substr(i, n);
            t.span = {static_cast<uint32_t>(i), static_cast<uint32_t>(i + n)};
            out.push_back(std::move(t));
            i += n;
        }
    }
    return out;
}

std::vector<Sentence> tokenize_document(const Tokenizer& tok, const RawDocument& doc) {
    std::vector<Sentence> out;
    uint32_t index = 0;
    for (auto& text : segment_sentences(doc.text)) {
        Sentence s;
        s.doc_id = doc.id;
        s.index = index++;
        s.tokens = tok.tokenize(text);
        s.text = std::move(text);
        out.push_back(std::move(s));
    }
    return out;
}

std::string detokenize(const std::string& sentence_text, const std::vector<Token>& tokens) {
    std::string out;
    uint32_t prev_end = 0;
    bool first = true;
    for (const auto& t : tokens) {
        if (!first && t.span.begin > prev_end) {
            out.append(sentence_text, prev_end, t.span.begin - prev_end);
        }
        out += t.is_enclitic ? t.surface.substr(1) : t.surface;
        prev_end = t.span.end;
        first = false;
    }
    return out;
}

bool is_word_token(const std::string& surface) {
    for (size_t i = 0; i < surface.size(); ++i) {
        unsigned char c = static_cast<unsigned char>(surface[i]);
        if (is_ascii_letter(c) || is_ascii_digit(c)) return true;
        if (c >= 0x80) {
            size_t n = cp_len(surface, i);
            if (!is_unicode_punct(surface.substr(i, n))) return true;
            i += n - 1;
        }
    }
    return false;
}

std::string fold_case(std::string s) {
    for (char& c : s) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return s;
}

std::string strip_enclitic_marker(const std::string& surface) {
    if (!surface.empty() && surface[0] == '-' && surface.size() > 1) {
        return surface.substr(1);
    }
    return surface;
}

void write_tokenized_text(const std::string& path, const std::vector<Sentence>& sentences) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& s : sentences) {
        bool first = true;
        for (const auto& t : s.tokens) {
            if (!first) out << ' ';
            out << t.surface;
            first = false;
        }
        out << '\n';
    }
}

void write_tokenized_jsonl(const std::string& path, const std::vector<Sentence>& sentences) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& s : sentences) {
        nlohmann::json j;
        j["doc_id"] = s.doc_id;
        j["index"] = s.index;
        j["text"] = s.text;
        auto toks = nlohmann::json::array();
        for (const auto& t : s.tokens) {
            toks.push_back({{"surface", t.surface},
                            {"span", {t.span.begin, t.span.end}},
                            {"is_enclitic", t.is_enclitic}});
        }
        j["tokens"] = std::move(toks);
        out << j.dump() << '\n';
    }
}

std::vector<Sentence> read_tokenized_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<Sentence> out;
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
        Sentence s;
        s.doc_id = j.at("doc_id").get<std::string>();
        s.index = j.at("index").get<uint32_t>();
        s.text = j.at("text").get<std::string>();
        for (const auto& tj : j.at("tokens")) {
            Token t;
            t.surface = tj.at("surface").get<std::string>();
            t.span.begin = tj.at("span")[0].get<uint32_t>();
            t.span.end = tj.at("span")[1].get<uint32_t>();
            t.is_enclitic = tj.at("is_enclitic").get<bool>();
            s.tokens.push_back(std::move(t));
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace latinlm
