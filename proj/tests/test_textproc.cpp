#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "latinlm/rng.hpp"
#include "latinlm/textproc.hpp"

using namespace latinlm;

namespace {

std::string data_path(const char* name) {
    return std::string(LATINLM_SOURCE_DIR) + "/" + name;
}

Tokenizer make_tokenizer() {
    return Tokenizer(load_enclitic_exceptions(data_path("data/enclitic_exceptions.txt")));
}

std::vector<std::string> fixture_sentences() {
    std::ifstream in(data_path("tests/data/latin_sample.txt"));
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return segment_sentences(ss.str());
}

}  // namespace

TEST_CASE("sentence segmentation splits on final punctuation") {
    auto s = segment_sentences("arma virumque cano. troiae qui primus ab oris");
    REQUIRE(s.size() == 2);
    CHECK(s[0] == "arma virumque cano.");
    CHECK(s[1] == "troiae qui primus ab oris");
}

TEST_CASE("sentence segmentation handles empty input") {
    CHECK(segment_sentences("").empty());
}

TEST_CASE("single-letter abbreviations do not end a sentence") {
    auto s = segment_sentences("M. Tullius Cicero dixit.");
    REQUIRE(s.size() == 1);
    CHECK(s[0] == "M. Tullius Cicero dixit.");
}

TEST_CASE("segmentation preserves text modulo whitespace") {
    const std::string text = "primus venit;  deinde alter!\npostremo tertius? ita est.";
    auto s = segment_sentences(text);
    REQUIRE(s.size() == 4);
    CHECK(s[0] == "primus venit;");
    CHECK(s[1] == "deinde alter!");
    CHECK(s[2] == "postremo tertius?");
    CHECK(s[3] == "ita est.");
}

TEST_CASE("tokenize splits the -que enclitic") {
    Tokenizer tok = make_tokenizer();
    auto tokens = tok.tokenize("arma virumque cano");
    REQUIRE(tokens.size() == 4);
    CHECK(tokens[0].surface == "arma");
    CHECK(tokens[1].surface == "virum");
    CHECK(tokens[2].surface == "-que");
    CHECK(tokens[2].is_enclitic);
    CHECK(tokens[3].surface == "cano");
    CHECK_FALSE(tokens[0].is_enclitic);
    // spans rebuild the original text
    CHECK(detokenize("arma virumque cano", tokens) == "arma virumque cano");
}

TEST_CASE("tokenize keeps a plain word whole") {
    Tokenizer tok = make_tokenizer();
    auto tokens = tok.tokenize("cano");
    REQUIRE(tokens.size() == 1);
    CHECK(tokens[0].surface == "cano");
}

TEST_CASE("exception-list words never split") {
    // oracle: membership in the shipped list decides the behavior
    auto exceptions = load_enclitic_exceptions(data_path("data/enclitic_exceptions.txt"));
    for (const char* w : {"itaque", "neque", "quoque", "atque"}) {
        REQUIRE(exceptions.count(w) == 1);
    }
    Tokenizer tok{exceptions};
    auto tokens = tok.tokenize("itaque venit");
    REQUIRE(tokens.size() == 2);
    CHECK(tokens[0].surface == "itaque");
    CHECK(tokens[1].surface == "venit");

    auto more = tok.tokenize("neque quoque atque itaque");
    CHECK(more.size() == 4);
}

TEST_CASE("-ne and -ve enclitics split unless excepted") {
    Tokenizer tok = make_tokenizer();
    auto q = tok.tokenize("videsne hominem");
    REQUIRE(q.size() == 3);
    CHECK(q[0].surface == "vides");
    CHECK(q[1].surface == "-ne");
    auto v = tok.tokenize("duosve dies");
    REQUIRE(v.size() == 3);
    CHECK(v[0].surface == "duos");
    CHECK(v[1].surface == "-ve");
    // "sine" is on the exception list
    auto s = tok.tokenize("sine aqua");
    REQUIRE(s.size() == 2);
    CHECK(s[0].surface == "sine");
}

TEST_CASE("minimum host length blocks degenerate splits") {
    Tokenizer tok;  // empty exception list
    auto t = tok.tokenize("aque");
    REQUIRE(t.size() == 1);
    CHECK(t[0].surface == "aque");
    // "que" itself must never produce an empty host
    auto q = tok.tokenize("que");
    REQUIRE(q.size() == 1);
}

TEST_CASE("punctuation becomes individual tokens, digit runs stay whole") {
    Tokenizer tok = make_tokenizer();
    auto t = tok.tokenize("dixit: veni, vidi, vici. anno 44 a.");
    std::vector<std::string> surfaces;
    for (const auto& x : t) surfaces.push_back(x.surface);
    std::vector<std::string> expected = {"dixit", ":",    "veni", ",", "vidi", ",",
                                         "vici",  ".",    "anno", "44", "a", "."};
    CHECK(surfaces == expected);
}

TEST_CASE("token spans are strictly increasing and in bounds") {
    Tokenizer tok = make_tokenizer();
    for (const auto& text : fixture_sentences()) {
        auto tokens = tok.tokenize(text);
        uint32_t prev_end = 0;
        bool first = true;
        for (const auto& t : tokens) {
            CHECK(t.surface.size() > 0);
            CHECK(t.span.begin < t.span.end);
            CHECK(t.span.end <= text.size());
            if (!first) CHECK(t.span.begin >= prev_end);
            prev_end = t.span.end;
            first = false;
        }
    }
}

TEST_CASE("detokenization identity over the fixture corpus") {
    Tokenizer tok = make_tokenizer();
    auto sentences = fixture_sentences();
    REQUIRE(sentences.size() > 50);
    for (const auto& text : sentences) {
        auto tokens = tok.tokenize(text);
        CHECK(detokenize(text, tokens) == text);
    }
}

TEST_CASE("tokenize is a pure function") {
    Tokenizer tok = make_tokenizer();
    const std::string text = "Helvetii quoque reliquos Gallos virtute praecedunt.";
    auto a = tok.tokenize(text);
    auto b = tok.tokenize(text);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].surface == b[i].surface);
        CHECK(a[i].span.begin == b[i].span.begin);
        CHECK(a[i].is_enclitic == b[i].is_enclitic);
    }
}

TEST_CASE("que-final words split into exactly two rejoining tokens") {
    Tokenizer tok = make_tokenizer();
    Rng rng(99);
    const std::string alphabet = "abcdefghilmnopqrstuvx";
    int tested = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const size_t host_len = 2 + rng.uniform_below(8);
        std::string w;
        for (size_t i = 0; i < host_len; ++i) {
            w += alphabet[rng.uniform_below(alphabet.size())];
        }
        w += "que";
        if (tok.exceptions().count(w) > 0) continue;
        ++tested;
        auto tokens = tok.tokenize(w);
        REQUIRE(tokens.size() == 2);
        CHECK(tokens[0].surface + tokens[1].surface.substr(1) == w);
        CHECK(tokens[1].is_enclitic);
    }
    CHECK(tested > 150);
}

TEST_CASE("tokenized jsonl round-trips") {
    Tokenizer tok = make_tokenizer();
    RawDocument doc;
    doc.id = "doc1";
    doc.source = DocSource::perseus;
    doc.text = "arma virumque cano. itaque venit, et vidit.";
    auto sentences = tokenize_document(tok, doc);
    REQUIRE(sentences.size() == 2);
    CHECK(sentences[0].index == 0);
    CHECK(sentences[1].index == 1);

    const std::string path = "test_textproc_roundtrip.jsonl";
    write_tokenized_jsonl(path, sentences);
    auto loaded = read_tokenized_jsonl(path);
    REQUIRE(loaded.size() == sentences.size());
    for (size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].doc_id == sentences[i].doc_id);
        CHECK(loaded[i].text == sentences[i].text);
        REQUIRE(loaded[i].tokens.size() == sentences[i].tokens.size());
        for (size_t j = 0; j < loaded[i].tokens.size(); ++j) {
            CHECK(loaded[i].tokens[j].surface == sentences[i].tokens[j].surface);
            CHECK(loaded[i].tokens[j].span.begin == sentences[i].tokens[j].span.begin);
        }
    }
    std::remove(path.c_str());
}

TEST_CASE("word-token classification") {
    CHECK(is_word_token("arma"));
    CHECK(is_word_token("-que"));
    CHECK(is_word_token("44"));
    CHECK_FALSE(is_word_token("."));
    CHECK_FALSE(is_word_token(","));
    CHECK(fold_case("Gallia") == "gallia");
    CHECK(strip_enclitic_marker("-que") == "que");
    CHECK(strip_enclitic_marker("arma") == "arma");
}
