#include "latinlm/subword.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace latinlm {

namespace {

const char* kSpecialNames[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};

size_t cp_len(const std::string& s, size_t i) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    if (c < 0x80) return 1;
    if ((c >> 5) == 0x6) return std::min<size_t>(2, s.size() - i);
    if ((c >> 4) == 0xE) return std::min<size_t>(3, s.size() - i);
    if ((c >> 3) == 0x1E) return std::min<size_t>(4, s.size() - i);
    return 1;
}

std::vector<std::string> codepoints(const std::string& s) {
    std::vector<std::string> out;
    for (size_t i = 0; i < s.size();) {
        size_t n = cp_len(s, i);
        out.push_back(s.substr(i, n));
        i += n;
    }
    return out;
}

}  // namespace

SubwordVocab::SubwordVocab(std::vector<std::string> pieces, bool lowercase)
    : id_to_piece_(std::move(pieces)), lowercase_(lowercase) {
    if (id_to_piece_.size() < kNumSpecials) {
        throw std::invalid_argument("vocabulary must hold the five special tokens");
    }
    for (int i = 0; i < kNumSpecials; ++i) {
        if (id_to_piece_[static_cast<size_t>(i)] != kSpecialNames[i]) {
            throw std::invalid_argument("special tokens must open the vocabulary in fixed order");
        }
    }
    for (size_t i = 0; i < id_to_piece_.size(); ++i) {
        const std::string& p = id_to_piece_[i];
        if (p.empty()) {
            throw std::invalid_argument("empty vocabulary entry at id " + std::to_string(i));
        }
        auto [it, inserted] = piece_to_id_.emplace(p, static_cast<int>(i));
        if (!inserted) {
            throw std::invalid_argument("duplicate vocabulary entry: " + p);
        }
    }
}

int SubwordVocab::piece_id(const std::string& piece) const {
    auto it = piece_to_id_.find(piece);
    return it == piece_to_id_.end() ? -1 : it->second;
}

const std::string& SubwordVocab::piece(int id) const {
    if (id < 0 || id >= size()) {
        throw std::out_of_range("subword id out of range: " + std::to_string(id));
    }
    return id_to_piece_[static_cast<size_t>(id)];
}

namespace {

// Interned symbol table for the merge loop.
struct SymTable {
    std::vector<std::string> strings;
    std::vector<std::string> stripped;  // continuation prefix removed
    std::vector<bool> prefixed;
    std::unordered_map<std::string, uint32_t> ids;

    uint32_t intern(const std::string& s) {
        auto it = ids.find(s);
        if (it != ids.end()) return it->second;
        uint32_t id = static_cast<uint32_t>(strings.size());
        strings.push_back(s);
        bool pre = s.size() > 2 && s.compare(0, 2, "##") == 0;
        prefixed.push_back(pre);
        stripped.push_back(pre ? s.substr(2) : s);
        ids.emplace(s, id);
        return id;
    }
};

uint64_t pair_key(uint32_t a, uint32_t b) {
    return (static_cast<uint64_t>(a) << 32) | b;
}

struct MergeCandidate {
    double score = -1.0;
    uint32_t left = 0;
    uint32_t right = 0;
    bool valid = false;
};

// true if (score, tie-break) of lhs beats rhs
bool beats(const SymTable& syms, double ls, uint32_t la, uint32_t lb,
           double rs, uint32_t ra, uint32_t rb) {
    if (ls != rs) return ls > rs;
    const std::string lm = syms.stripped[la] + syms.stripped[lb];
    const std::string rm = syms.stripped[ra] + syms.stripped[rb];
    if (lm != rm) return lm < rm;
    if (syms.prefixed[la] != syms.prefixed[ra]) return !syms.prefixed[la];
    if (syms.strings[la] != syms.strings[ra]) return syms.strings[la] < syms.strings[ra];
    return syms.strings[lb] < syms.strings[rb];
}

}  // namespace

SubwordVocab learn_vocab(const std::vector<WordFrequency>& word_freqs,
                         size_t target_size, uint64_t min_frequency,
                         bool lowercase) {
    const uint64_t qualify = std::max<uint64_t>(min_frequency, 1);

    // fold and combine
    std::map<std::string, uint64_t> folded;
    for (const auto& [w, c] : word_freqs) {
        if (w.empty() || c == 0) continue;
        folded[lowercase ? fold_case(w) : w] += c;
    }

    // alphabet from weighted character counts
    std::map<std::string, uint64_t> char_counts;
    for (const auto& [w, c] : folded) {
        for (const auto& cp : codepoints(w)) char_counts[cp] += c;
    }
    std::vector<std::string> alphabet_pieces;
    std::set<std::string> alphabet;
    for (const auto& [cp, c] : char_counts) {
        if (c >= qualify) alphabet.insert(cp);
    }
    for (const auto& cp : alphabet) {
        alphabet_pieces.push_back(cp);
        alphabet_pieces.push_back("##" + cp);
    }
    std::sort(alphabet_pieces.begin(), alphabet_pieces.end());

    const size_t base = SubwordVocab::kNumSpecials + alphabet_pieces.size();
    if (target_size < base) {
        throw std::invalid_argument(
            "target_size " + std::to_string(target_size) + " cannot hold " +
            std::to_string(alphabet_pieces.size()) + " alphabet pieces plus " +
            std::to_string(SubwordVocab::kNumSpecials) + " specials");
    }

    std::vector<std::string> pieces;
    pieces.reserve(target_size);
    for (const char* s : kSpecialNames) pieces.push_back(s);
    pieces.insert(pieces.end(), alphabet_pieces.begin(), alphabet_pieces.end());

    // words whose characters all qualify participate in merging
    SymTable syms;
    struct Word {
        std::vector<uint32_t> sym;
        uint64_t count;
    };
    std::vector<Word> words;
    for (const auto& [w, c] : folded) {
        auto cps = codepoints(w);
        bool ok = true;
        for (const auto& cp : cps) {
            if (alphabet.find(cp) == alphabet.end()) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        Word word;
        word.count = c;
        for (size_t i = 0; i < cps.size(); ++i) {
            word.sym.push_back(syms.intern(i == 0 ? cps[i] : "##" + cps[i]));
        }
        words.push_back(std::move(word));
    }

    std::vector<uint64_t> sym_counts(syms.strings.size(), 0);
    auto ensure_sym_count = [&](uint32_t s) {
        if (s >= sym_counts.size()) sym_counts.resize(s + 1, 0);
    };
    std::unordered_map<uint64_t, uint64_t> pair_counts;
    std::unordered_map<uint64_t, std::set<uint32_t>> pair_words;

    auto add_word_stats = [&](uint32_t wi, int sign) {
        const Word& w = words[wi];
        for (uint32_t s : w.sym) {
            ensure_sym_count(s);
            sym_counts[s] += sign > 0 ? w.count : 0;
            if (sign < 0) sym_counts[s] -= w.count;
        }
        for (size_t i = 0; i + 1 < w.sym.size(); ++i) {
            uint64_t k = pair_key(w.sym[i], w.sym[i + 1]);
            if (sign > 0) {
                pair_counts[k] += w.count;
                pair_words[k].insert(wi);
            } else {
                pair_counts[k] -= w.count;
            }
        }
    };
    for (uint32_t wi = 0; wi < words.size(); ++wi) add_word_stats(wi, +1);

    while (pieces.size() < target_size) {
        MergeCandidate best;
        for (const auto& [k, c] : pair_counts) {
            if (c < qualify) continue;
            uint32_t a = static_cast<uint32_t>(k >> 32);
            uint32_t b = static_cast<uint32_t>(k & 0xffffffffu);
            double score = static_cast<double>(c) /
                           (static_cast<double>(sym_counts[a]) * static_cast<double>(sym_counts[b]));
            if (!best.valid ||
                beats(syms, score, a, b, best.score, best.left, best.right)) {
                best = {score, a, b, true};
            }
        }
        if (!best.valid) break;

        const std::string merged_str =
            syms.strings[best.left] +
            (syms.prefixed[best.right] ? syms.strings[best.right].substr(2)
                                       : syms.strings[best.right]);
        const uint32_t merged = syms.intern(merged_str);
        ensure_sym_count(merged);
        pieces.push_back(merged_str);

        const uint64_t bk = pair_key(best.left, best.right);
        std::set<uint32_t> affected = pair_words[bk];
        for (uint32_t wi : affected) {
            add_word_stats(wi, -1);
            Word& w = words[wi];
            std::vector<uint32_t> merged_sym;
            merged_sym.reserve(w.sym.size());
            for (size_t i = 0; i < w.sym.size();) {
                if (i + 1 < w.sym.size() && w.sym[i] == best.left &&
                    w.sym[i + 1] == best.right) {
                    merged_sym.push_back(merged);
                    i += 2;
                } else {
                    merged_sym.push_back(w.sym[i]);
                    ++i;
                }
            }
            w.sym = std::move(merged_sym);
            add_word_stats(wi, +1);
        }
        pair_counts.erase(bk);
        pair_words.erase(bk);
    }

    return SubwordVocab(std::move(pieces), lowercase);
}

std::vector<int> encode_word(const SubwordVocab& vocab, const std::string& word) {
    if (word.empty()) {
        throw std::invalid_argument("encode_word: empty word");
    }
    const std::string w = vocab.lowercase() ? fold_case(word) : word;
    std::vector<int> ids;
    size_t start = 0;
    bool first = true;
    while (start < w.size()) {
        int found = -1;
        size_t next = start;
        for (size_t end = w.size(); end > start; --end) {
            std::string cand = first ? w.substr(start, end - start)
                                     : "##" + w.substr(start, end - start);
            int id = vocab.piece_id(cand);
            if (id >= 0) {
                found = id;
                next = end;
                break;
            }
        }
        if (found < 0) {
            return {SubwordVocab::kUnk};
        }
        ids.push_back(found);
        start = next;
        first = false;
    }
    return ids;
}

SubwordEncoding encode_sentence(const SubwordVocab& vocab,
                                const std::vector<std::string>& words,
                                bool add_specials, size_t max_len) {
    SubwordEncoding enc;
    enc.has_specials = add_specials;
    const size_t budget = add_specials ? (max_len >= 2 ? max_len - 2 : 0) : max_len;

    if (add_specials) enc.ids.push_back(SubwordVocab::kCls);
    size_t used = 0;
    for (const auto& w : words) {
        auto piece_ids = encode_word(vocab, w);
        if (used + piece_ids.size() > budget) break;
        WordRange r;
        r.begin = static_cast<uint32_t>(enc.ids.size());
        enc.ids.insert(enc.ids.end(), piece_ids.begin(), piece_ids.end());
        r.end = static_cast<uint32_t>(enc.ids.size());
        enc.word_alignment.push_back(r);
        used += piece_ids.size();
    }
    if (add_specials) enc.ids.push_back(SubwordVocab::kSep);
    return enc;
}

SubwordEncoding encode_sentence(const SubwordVocab& vocab,
                                const std::vector<Token>& tokens,
                                bool add_specials, size_t max_len) {
    std::vector<std::string> words;
    words.reserve(tokens.size());
    for (const auto& t : tokens) words.push_back(t.surface);
    return encode_sentence(vocab, words, add_specials, max_len);
}

std::string decode(const SubwordVocab& vocab, const std::vector<int>& ids) {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        int id = ids[i];
        if (id < 0 || id >= vocab.size()) {
            throw std::out_of_range("decode: unknown id " + std::to_string(id) +
                                    " at position " + std::to_string(i));
        }
        if (vocab.is_special(id)) continue;
        const std::string& p = vocab.piece(id);
        if (p.size() > 2 && p.compare(0, 2, "##") == 0) {
            out += p.substr(2);
        } else {
            if (!out.empty()) out += ' ';
            out += p;
        }
    }
    return out;
}

void save_vocab(const SubwordVocab& vocab, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "#lowercase=" << (vocab.lowercase() ? "true" : "false") << '\n';
    out << "#continuation=" << vocab.continuation_prefix() << '\n';
    for (const auto& p : vocab.pieces()) out << p << '\n';
}

SubwordVocab load_vocab(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open vocab file " + path);
    std::string line;
    auto next_line = [&]() {
        if (!std::getline(in, line)) {
            throw std::runtime_error(path + ": truncated vocab header");
        }
        if (!line.empty() && line.back() == '\r') line.pop_back();
    };
    next_line();
    if (line != "#lowercase=true" && line != "#lowercase=false") {
        throw std::runtime_error(path + ": expected #lowercase header, got: " + line);
    }
    const bool lowercase = line == "#lowercase=true";
    next_line();
    if (line != "#continuation=##") {
        throw std::runtime_error(path + ": expected #continuation=## header, got: " + line);
    }
    std::vector<std::string> pieces;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && in.eof()) break;
        pieces.push_back(line);
    }
    return SubwordVocab(std::move(pieces), lowercase);
}

std::vector<WordFrequency> word_frequencies_from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::map<std::string, uint64_t> counts;
    std::string line, word;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        while (ss >> word) ++counts[word];
    }
    return {counts.begin(), counts.end()};
}

std::vector<WordFrequency> word_frequencies_from_sentences(
    const std::vector<Sentence>& sentences) {
    std::map<std::string, uint64_t> counts;
    for (const auto& s : sentences) {
        for (const auto& t : s.tokens) ++counts[t.surface];
    }
    return {counts.begin(), counts.end()};
}

}  // namespace latinlm
