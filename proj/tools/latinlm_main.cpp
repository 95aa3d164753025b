// latinlm: one binary driving the whole pipeline. Every subcommand wraps a
// single library operation, echoes its effective configuration next to its
// output, and draws all randomness from --seed.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "latinlm/corpus.hpp"
#include "latinlm/datasets.hpp"
#include "latinlm/encoder.hpp"
#include "latinlm/heads.hpp"
#include "latinlm/infill.hpp"
#include "latinlm/neighbors.hpp"
#include "latinlm/subword.hpp"
#include "latinlm/textproc.hpp"
#include "latinlm/train.hpp"

namespace {

using namespace latinlm;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

// corpus documents as JSON lines {id, source, text[, citation]}
std::vector<RawDocument> read_corpus_jsonl(const std::string& path,
                                           std::map<std::string, std::string>* citations) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<RawDocument> docs;
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
        RawDocument doc;
        doc.id = j.at("id").get<std::string>();
        doc.source = doc_source_from_string(j.at("source").get<std::string>());
        doc.text = j.at("text").get<std::string>();
        if (citations != nullptr && j.contains("citation")) {
            (*citations)[doc.id] = j.at("citation").get<std::string>();
        }
        docs.push_back(std::move(doc));
    }
    return docs;
}

void write_corpus_jsonl(const std::string& path, const std::vector<RawDocument>& docs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& d : docs) {
        nlohmann::json j;
        j["id"] = d.id;
        j["source"] = doc_source_to_string(d.source);
        j["text"] = d.text;
        out << j.dump() << '\n';
    }
}

std::string default_exceptions_path() {
    if (const char* env = std::getenv("LATINLM_ENCLITIC_EXCEPTIONS")) return env;
    return "data/enclitic_exceptions.txt";
}

Tokenizer make_tokenizer(const std::string& exceptions_path) {
    if (exceptions_path == "none") return Tokenizer{};
    return Tokenizer(load_enclitic_exceptions(exceptions_path));
}

// effective configuration echoed next to the subcommand's primary output
void echo_config(const CLI::App* sub, const std::string& out_path) {
    if (out_path.empty()) return;
    std::ofstream out(out_path + ".config", std::ios::binary);
    if (!out) return;
    out << "# effective configuration: " << sub->get_name() << "\n";
    for (const CLI::Option* opt : sub->get_options()) {
        if (opt->get_lnames().empty()) continue;
        const std::string name = opt->get_lnames()[0];
        if (name == "help") continue;
        std::string value;
        if (!opt->results().empty()) {
            for (const auto& r : opt->results()) {
                if (!value.empty()) value += ",";
                value += r;
            }
        } else {
            value = opt->get_default_str();
        }
        out << name << "=" << value << "\n";
    }
}

TransformerConfig config_from_flags(int layers, int hidden, int heads,
                                    int intermediate, int max_positions,
                                    int vocab_size, double dropout, bool untied,
                                    uint64_t seed) {
    TransformerConfig c;
    c.num_layers = layers;
    c.hidden_size = hidden;
    c.num_heads = heads;
    c.intermediate_size = intermediate;
    c.max_positions = max_positions;
    c.vocab_size = vocab_size;
    c.hidden_dropout = dropout;
    c.attention_dropout = dropout;
    c.tie_mlm_weights = !untied;
    c.seed = seed;
    return c;
}

std::vector<Sentence> sentences_from_text_lines(const std::string& path) {
    // tokenized one-sentence-per-line format: surfaces only, spans rebuilt
    std::vector<Sentence> sentences;
    auto lines = read_lines(path);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        Sentence s;
        s.doc_id = path;
        s.index = static_cast<uint32_t>(i);
        s.text = lines[i];
        std::istringstream ss(lines[i]);
        std::string w;
        uint32_t pos = 0;
        while (ss >> w) {
            Token t;
            t.is_enclitic = w.size() > 1 && w[0] == '-';
            t.surface = w;
            t.span = {pos, pos + static_cast<uint32_t>(w.size())};
            pos += static_cast<uint32_t>(w.size()) + 1;
            s.tokens.push_back(std::move(t));
        }
        sentences.push_back(std::move(s));
    }
    return sentences;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"latinlm: desk-scale Latin masked language model pipeline"};
    app.require_subcommand(1);
    app.set_config("--config", "", "flat key=value configuration file");
    app.allow_config_extras(true);

    uint64_t seed = 0;
    app.add_option("--seed", seed, "seed for every random choice")
        ->capture_default_str();

    try {
        // ---------------- tokenize ----------------
        auto* tokenize_cmd =
            app.add_subcommand("tokenize", "segment and tokenize raw Latin text");
        struct {
            std::string in, out, json_out, doc_id, source = "other";
            std::string exceptions = default_exceptions_path();
        } tok_args;
        tokenize_cmd->add_option("--in", tok_args.in, "raw UTF-8 text file")->required();
        tokenize_cmd->add_option("--out", tok_args.out,
                                 "tokenized output, one sentence per line");
        tokenize_cmd->add_option("--json-out", tok_args.json_out,
                                 "tokenized output as JSON lines with spans");
        tokenize_cmd->add_option("--doc-id", tok_args.doc_id,
                                 "document id (default: input path)");
        tokenize_cmd->add_option("--source", tok_args.source, "document source label")
            ->capture_default_str();
        tokenize_cmd->add_option("--exceptions", tok_args.exceptions,
                                 "enclitic exception list, or 'none'")
            ->capture_default_str();
        tokenize_cmd->callback([&]() {
            if (tok_args.out.empty() && tok_args.json_out.empty()) {
                throw CLI::ValidationError("tokenize", "need --out or --json-out");
            }
            Tokenizer tok = make_tokenizer(tok_args.exceptions);
            RawDocument doc;
            doc.id = tok_args.doc_id.empty() ? tok_args.in : tok_args.doc_id;
            doc.source = doc_source_from_string(tok_args.source);
            doc.text = read_text_file(tok_args.in);
            auto sentences = tokenize_document(tok, doc);
            if (!tok_args.out.empty()) {
                write_tokenized_text(tok_args.out, sentences);
                echo_config(tokenize_cmd, tok_args.out);
            }
            if (!tok_args.json_out.empty()) {
                write_tokenized_jsonl(tok_args.json_out, sentences);
                echo_config(tokenize_cmd, tok_args.json_out);
            }
            std::cerr << "tokenized " << sentences.size() << " sentences\n";
        });

        // ---------------- learn-vocab ----------------
        auto* learn_cmd =
            app.add_subcommand("learn-vocab", "learn a subword vocabulary");
        struct {
            std::string in, out;
            size_t target_size = 4000;
            uint64_t min_freq = 2;
            bool keep_case = false;
        } lv_args;
        learn_cmd->add_option("--in", lv_args.in, "tokenized one-sentence-per-line file")
            ->required();
        learn_cmd->add_option("--out", lv_args.out, "vocabulary file")->required();
        learn_cmd->add_option("--target-size", lv_args.target_size)->capture_default_str();
        learn_cmd->add_option("--min-freq", lv_args.min_freq)->capture_default_str();
        learn_cmd->add_flag("--keep-case", lv_args.keep_case,
                            "learn a case-sensitive vocabulary");
        learn_cmd->callback([&]() {
            auto freqs = word_frequencies_from_file(lv_args.in);
            auto vocab = learn_vocab(freqs, lv_args.target_size, lv_args.min_freq,
                                     !lv_args.keep_case);
            save_vocab(vocab, lv_args.out);
            echo_config(learn_cmd, lv_args.out);
            std::cerr << "learned " << vocab.size() << " pieces\n";
        });

        // ---------------- encode ----------------
        auto* encode_cmd =
            app.add_subcommand("encode", "encode tokenized sentences to subword ids");
        struct {
            std::string in, vocab, out;
            size_t max_len = 256;
            bool no_specials = false;
        } enc_args;
        encode_cmd->add_option("--in", enc_args.in, "tokenized text file")->required();
        encode_cmd->add_option("--vocab", enc_args.vocab)->required();
        encode_cmd->add_option("--out", enc_args.out, "JSON lines of encodings")->required();
        encode_cmd->add_option("--max-len", enc_args.max_len)->capture_default_str();
        encode_cmd->add_flag("--no-specials", enc_args.no_specials);
        encode_cmd->callback([&]() {
            auto vocab = load_vocab(enc_args.vocab);
            auto sentences = sentences_from_text_lines(enc_args.in);
            std::ofstream out(enc_args.out, std::ios::binary);
            if (!out) throw std::runtime_error("cannot write " + enc_args.out);
            for (const auto& s : sentences) {
                auto enc = encode_sentence(vocab, s.tokens, !enc_args.no_specials,
                                           enc_args.max_len);
                nlohmann::json j;
                j["ids"] = enc.ids;
                auto align = nlohmann::json::array();
                for (const auto& r : enc.word_alignment) align.push_back({r.begin, r.end});
                j["word_alignment"] = std::move(align);
                j["has_specials"] = enc.has_specials;
                out << j.dump() << '\n';
            }
            echo_config(encode_cmd, enc_args.out);
        });

        // ---------------- quality-filter ----------------
        auto* qf_cmd = app.add_subcommand("quality-filter",
                                          "score documents by in-vocabulary token share");
        struct {
            std::string in, ref_vocab, out, retained_out;
            double threshold = 0.40;
            std::string exceptions = default_exceptions_path();
        } qf_args;
        qf_cmd->add_option("--in", qf_args.in, "corpus JSON lines {id, source, text}")
            ->required();
        qf_cmd->add_option("--ref-vocab", qf_args.ref_vocab, "one word per line")
            ->required();
        qf_cmd->add_option("--out", qf_args.out, "quality reports as JSON lines")
            ->required();
        qf_cmd->add_option("--retained-out", qf_args.retained_out,
                           "retained documents as corpus JSON lines");
        qf_cmd->add_option("--threshold", qf_args.threshold)->capture_default_str();
        qf_cmd->add_option("--exceptions", qf_args.exceptions)->capture_default_str();
        qf_cmd->callback([&]() {
            Tokenizer tok = make_tokenizer(qf_args.exceptions);
            auto ref = load_reference_vocab(qf_args.ref_vocab);
            auto docs = read_corpus_jsonl(qf_args.in, nullptr);
            std::ofstream out(qf_args.out, std::ios::binary);
            if (!out) throw std::runtime_error("cannot write " + qf_args.out);
            std::vector<RawDocument> retained;
            for (const auto& doc : docs) {
                auto report = quality_filter(tok, doc, ref, qf_args.threshold);
                nlohmann::json j;
                j["doc_id"] = report.doc_id;
                j["in_vocab_fraction"] = report.in_vocab_fraction;
                j["retained"] = report.retained;
                out << j.dump() << '\n';
                if (report.retained) retained.push_back(doc);
            }
            if (!qf_args.retained_out.empty()) {
                write_corpus_jsonl(qf_args.retained_out, retained);
            }
            echo_config(qf_cmd, qf_args.out);
            std::cerr << "retained " << retained.size() << "/" << docs.size()
                      << " documents\n";
        });

        // ---------------- plan-mixture ----------------
        auto* pm_cmd = app.add_subcommand("plan-mixture",
                                          "derive source repetition weights");
        struct {
            std::string counts, out;
            double target = 0.5;
        } pm_args;
        pm_cmd->add_option("--counts", pm_args.counts,
                           "JSON object mapping source label to token count")
            ->required();
        pm_cmd->add_option("--out", pm_args.out)->required();
        pm_cmd->add_option("--target", pm_args.target, "target IA token share")
            ->capture_default_str();
        pm_cmd->callback([&]() {
            nlohmann::json j = nlohmann::json::parse(read_text_file(pm_args.counts));
            std::map<std::string, uint64_t> counts =
                j.get<std::map<std::string, uint64_t>>();
            auto plan = plan_mixture(counts, pm_args.target);
            save_mixture_plan(plan, pm_args.out);
            echo_config(pm_cmd, pm_args.out);
        });

        // ---------------- make-examples ----------------
        auto* me_cmd = app.add_subcommand("make-examples",
                                          "generate whole-word-masked training examples");
        struct {
            std::string in, vocab, out, mixture, mixture_source;
            size_t seq_len = 128;
            double mask_prob = 0.15;
            bool no_force = false;
        } me_args;
        me_cmd->add_option("--in", me_args.in, "tokenized JSON lines")->required();
        me_cmd->add_option("--vocab", me_args.vocab)->required();
        me_cmd->add_option("--out", me_args.out)->required();
        me_cmd->add_option("--mixture", me_args.mixture,
                           "mixture plan for per-document upsampling");
        me_cmd->add_option("--mixture-source", me_args.mixture_source,
                           "source label of this corpus within the plan");
        me_cmd->add_option("--seq-len", me_args.seq_len)->capture_default_str();
        me_cmd->add_option("--mask-prob", me_args.mask_prob)->capture_default_str();
        me_cmd->add_flag("--no-force", me_args.no_force,
                         "do not force one masked word per sentence");
        me_cmd->callback([&]() {
            auto vocab = load_vocab(me_args.vocab);
            auto sentences = read_tokenized_jsonl(me_args.in);
            if (!me_args.mixture.empty()) {
                if (me_args.mixture_source.empty()) {
                    throw CLI::ValidationError(
                        "make-examples", "--mixture needs --mixture-source");
                }
                auto plan = load_mixture_plan(me_args.mixture);
                std::vector<Sentence> upsampled;
                for (const auto& s : sentences) {
                    const uint32_t reps = repetitions_for(
                        plan, me_args.mixture_source, s.doc_id, seed);
                    for (uint32_t r = 0; r < reps; ++r) {
                        Sentence copy = s;
                        copy.doc_id = r == 0 ? s.doc_id
                                             : s.doc_id + "+rep" + std::to_string(r);
                        upsampled.push_back(std::move(copy));
                    }
                }
                sentences = std::move(upsampled);
            }
            MaskingOptions opts;
            opts.seq_len = me_args.seq_len;
            opts.mask_prob = me_args.mask_prob;
            opts.force_one_word = !me_args.no_force;
            opts.seed = seed;
            auto examples = make_masked_examples(sentences, vocab, opts);
            write_masked_examples(me_args.out, examples);
            echo_config(me_cmd, me_args.out);
            std::cerr << "wrote " << examples.size() << " examples\n";
        });

        // ---------------- pretrain ----------------
        auto* pt_cmd = app.add_subcommand("pretrain", "masked language model training");
        struct {
            std::string examples, vocab, out, loss_out, init_from;
            int layers = 2, hidden = 128, heads = 4, intermediate = 512;
            int max_positions = 512;
            int steps = 100, batch_size = 16;
            double lr = 1e-4, dropout = 0.1, warmup = 0.01;
            bool untied = false;
        } pt_args;
        pt_cmd->add_option("--examples", pt_args.examples)->required();
        pt_cmd->add_option("--vocab", pt_args.vocab)->required();
        pt_cmd->add_option("--out", pt_args.out, "checkpoint path")->required();
        pt_cmd->add_option("--loss-out", pt_args.loss_out, "loss trace CSV");
        pt_cmd->add_option("--init-from", pt_args.init_from, "resume checkpoint");
        pt_cmd->add_option("--layers", pt_args.layers)->capture_default_str();
        pt_cmd->add_option("--hidden", pt_args.hidden)->capture_default_str();
        pt_cmd->add_option("--heads", pt_args.heads)->capture_default_str();
        pt_cmd->add_option("--intermediate", pt_args.intermediate)->capture_default_str();
        pt_cmd->add_option("--max-positions", pt_args.max_positions)->capture_default_str();
        pt_cmd->add_option("--steps", pt_args.steps)->capture_default_str();
        pt_cmd->add_option("--batch-size", pt_args.batch_size)->capture_default_str();
        pt_cmd->add_option("--lr", pt_args.lr)->capture_default_str();
        pt_cmd->add_option("--dropout", pt_args.dropout)->capture_default_str();
        pt_cmd->add_option("--warmup", pt_args.warmup)->capture_default_str();
        pt_cmd->add_flag("--untied", pt_args.untied, "untie the output embedding");
        pt_cmd->callback([&]() {
            auto vocab = load_vocab(pt_args.vocab);
            EncoderState state =
                pt_args.init_from.empty()
                    ? EncoderState::init(config_from_flags(
                          pt_args.layers, pt_args.hidden, pt_args.heads,
                          pt_args.intermediate, pt_args.max_positions, vocab.size(),
                          pt_args.dropout, pt_args.untied, seed))
                    : load_checkpoint(pt_args.init_from);
            auto examples = read_masked_examples(pt_args.examples);
            TrainOptions opts;
            opts.steps = pt_args.steps;
            opts.batch_size = pt_args.batch_size;
            opts.seed = seed;
            opts.adam.learning_rate = pt_args.lr;
            opts.adam.warmup_fraction = pt_args.warmup;
            auto result = train_mlm(state, examples, opts);
            save_checkpoint(state, pt_args.out);
            if (!pt_args.loss_out.empty()) {
                write_loss_trace_csv(pt_args.loss_out, result.loss_trace);
            }
            echo_config(pt_cmd, pt_args.out);
            if (!result.loss_trace.empty()) {
                std::cerr << "step 0 loss " << result.loss_trace.front()
                          << ", final loss " << result.loss_trace.back() << "\n";
            }
        });

        // ---------------- grad-check ----------------
        auto* gc_cmd = app.add_subcommand("grad-check",
                                          "verify gradients against finite differences");
        struct {
            std::string examples;
            int layers = 2, hidden = 32, heads = 2, vocab_size = 64;
            double epsilon = 1e-4, tol = 1e-3;
            int samples = 200;
        } gc_args;
        gc_cmd->add_option("--examples", gc_args.examples,
                           "masked examples JSON lines (first one is used)");
        gc_cmd->add_option("--layers", gc_args.layers)->capture_default_str();
        gc_cmd->add_option("--hidden", gc_args.hidden)->capture_default_str();
        gc_cmd->add_option("--heads", gc_args.heads)->capture_default_str();
        gc_cmd->add_option("--vocab-size", gc_args.vocab_size)->capture_default_str();
        gc_cmd->add_option("--epsilon", gc_args.epsilon)->capture_default_str();
        gc_cmd->add_option("--tol", gc_args.tol)->capture_default_str();
        gc_cmd->add_option("--samples", gc_args.samples)->capture_default_str();
        gc_cmd->callback([&]() {
            TransformerConfig c = config_from_flags(
                gc_args.layers, gc_args.hidden, gc_args.heads, gc_args.hidden * 4,
                64, gc_args.vocab_size, 0.0, false, seed);
            auto state = EncoderState::init(c);
            MaskedExample ex;
            if (!gc_args.examples.empty()) {
                auto all = read_masked_examples(gc_args.examples);
                if (all.empty()) throw std::runtime_error("no examples in file");
                ex = all.front();
            } else {
                Rng rng(mix_seed(seed, "grad-check-example"));
                ex.input_ids = {SubwordVocab::kCls};
                for (int i = 0; i < 10; ++i) {
                    ex.input_ids.push_back(
                        SubwordVocab::kNumSpecials +
                        static_cast<int>(rng.uniform_below(
                            static_cast<uint64_t>(c.vocab_size - SubwordVocab::kNumSpecials))));
                }
                ex.input_ids.push_back(SubwordVocab::kSep);
                ex.attention_length = static_cast<uint32_t>(ex.input_ids.size());
                ex.mask_positions = {2, 5};
                ex.original_ids = {ex.input_ids[2], ex.input_ids[5]};
                ex.input_ids[2] = SubwordVocab::kMask;
            }
            GradCheckOptions opts;
            opts.epsilon = gc_args.epsilon;
            opts.min_samples = gc_args.samples;
            opts.seed = seed;
            const double err = gradient_check(state, ex, opts);
            std::cout << "max relative error " << err << " (tolerance " << gc_args.tol
                      << ")\n";
            if (!(err <= gc_args.tol)) {
                throw std::runtime_error("gradient check failed");
            }
        });

        // ---------------- tag-train ----------------
        auto* tt_cmd = app.add_subcommand("tag-train", "fine-tune the tagging head");
        struct {
            std::string ckpt, vocab, train, dev, out;
            int epochs = 5, max_epochs = 50, patience = 10, batch_size = 8;
            double lr = 5e-5;
            size_t seq_len = 0;
            bool first_subtoken = false;
        } tt_args;
        tt_cmd->add_option("--ckpt", tt_args.ckpt)->required();
        tt_cmd->add_option("--vocab", tt_args.vocab)->required();
        tt_cmd->add_option("--train", tt_args.train, "training treebank file")->required();
        tt_cmd->add_option("--dev", tt_args.dev, "development treebank file");
        tt_cmd->add_option("--out", tt_args.out, "model path")->required();
        tt_cmd->add_option("--epochs", tt_args.epochs, "fixed epochs when no dev set")
            ->capture_default_str();
        tt_cmd->add_option("--max-epochs", tt_args.max_epochs)->capture_default_str();
        tt_cmd->add_option("--patience", tt_args.patience)->capture_default_str();
        tt_cmd->add_option("--batch-size", tt_args.batch_size)->capture_default_str();
        tt_cmd->add_option("--lr", tt_args.lr)->capture_default_str();
        tt_cmd->add_option("--seq-len", tt_args.seq_len)->capture_default_str();
        tt_cmd->add_flag("--first-subtoken", tt_args.first_subtoken,
                         "classify from the first subtoken instead of the mean");
        tt_cmd->callback([&]() {
            auto vocab = load_vocab(tt_args.vocab);
            auto base = load_checkpoint(tt_args.ckpt);
            auto train = read_conllu(tt_args.train);
            std::vector<TaggedSentence> dev;
            if (!tt_args.dev.empty()) dev = read_conllu(tt_args.dev);
            FineTuneOptions opts;
            opts.fixed_epochs = tt_args.epochs;
            opts.max_epochs = tt_args.max_epochs;
            opts.patience = tt_args.patience;
            opts.batch_size = tt_args.batch_size;
            opts.learning_rate = tt_args.lr;
            opts.seq_len = tt_args.seq_len;
            opts.average_subtokens = !tt_args.first_subtoken;
            opts.seed = seed;
            FineTuneReport report;
            auto model = train_pos(base, vocab, train,
                                   tt_args.dev.empty() ? nullptr : &dev, opts, &report);
            save_pos_model(model, tt_args.out);
            echo_config(tt_cmd, tt_args.out);
            std::cerr << "epochs run " << report.epochs_run;
            if (report.best_epoch >= 0) {
                std::cerr << ", best dev epoch " << report.best_epoch << " ("
                          << report.dev_scores[static_cast<size_t>(report.best_epoch)]
                          << ")";
            }
            std::cerr << "\n";
        });

        // ---------------- tag-eval ----------------
        auto* te_cmd = app.add_subcommand("tag-eval", "evaluate a tagging model");
        struct {
            std::string model, vocab, test, out;
        } te_args;
        te_cmd->add_option("--model", te_args.model)->required();
        te_cmd->add_option("--vocab", te_args.vocab)->required();
        te_cmd->add_option("--test", te_args.test)->required();
        te_cmd->add_option("--out", te_args.out, "accuracy report JSON");
        te_cmd->callback([&]() {
            auto vocab = load_vocab(te_args.vocab);
            auto model = load_pos_model(te_args.model);
            auto test = read_conllu(te_args.test);
            const double acc = evaluate_pos(model, vocab, test);
            std::cout << "accuracy " << acc << "\n";
            if (!te_args.out.empty()) {
                std::ofstream out(te_args.out, std::ios::binary);
                nlohmann::json j;
                j["accuracy"] = acc;
                j["sentences"] = test.size();
                out << j.dump(2) << '\n';
                echo_config(te_cmd, te_args.out);
            }
        });

        // ---------------- wsd-mine ----------------
        auto* wm_cmd = app.add_subcommand("wsd-mine",
                                          "mine balanced sense examples from a dictionary");
        struct {
            std::string dict, out, report_out;
            int min_per_sense = 10, min_words = 6;
        } wm_args;
        wm_cmd->add_option("--dict", wm_args.dict, "dictionary JSON lines")->required();
        wm_cmd->add_option("--out", wm_args.out)->required();
        wm_cmd->add_option("--report-out", wm_args.report_out);
        wm_cmd->add_option("--min-per-sense", wm_args.min_per_sense)->capture_default_str();
        wm_cmd->add_option("--min-words", wm_args.min_words)->capture_default_str();
        wm_cmd->callback([&]() {
            auto entries = read_dictionary_jsonl(wm_args.dict);
            SenseMiningOptions opts;
            opts.min_per_sense = wm_args.min_per_sense;
            opts.min_words = wm_args.min_words;
            opts.seed = seed;
            SenseMiningReport report;
            auto examples = mine_sense_examples(entries, opts, &report);
            write_sense_examples(wm_args.out, examples);
            echo_config(wm_cmd, wm_args.out);
            if (!wm_args.report_out.empty()) {
                std::ofstream out(wm_args.report_out, std::ios::binary);
                nlohmann::json j;
                j["entries_seen"] = report.entries_seen;
                j["dropped_too_few_senses"] = report.dropped_too_few_senses;
                j["dropped_too_few_citations"] = report.dropped_too_few_citations;
                j["headwords_kept"] = report.headwords_kept;
                j["examples_emitted"] = report.examples_emitted;
                out << j.dump(2) << '\n';
            }
            std::cerr << "kept " << report.headwords_kept << " headwords, "
                      << report.examples_emitted << " examples\n";
        });

        // ---------------- wsd-train ----------------
        auto* wt_cmd = app.add_subcommand("wsd-train",
                                          "fine-tune one headword's sense classifier");
        struct {
            std::string ckpt, vocab, examples, headword, out;
            std::string exceptions = default_exceptions_path();
            int max_epochs = 50, patience = 10, batch_size = 8;
            double lr = 5e-5;
        } wt_args;
        wt_cmd->add_option("--ckpt", wt_args.ckpt)->required();
        wt_cmd->add_option("--vocab", wt_args.vocab)->required();
        wt_cmd->add_option("--examples", wt_args.examples)->required();
        wt_cmd->add_option("--headword", wt_args.headword)->required();
        wt_cmd->add_option("--out", wt_args.out)->required();
        wt_cmd->add_option("--exceptions", wt_args.exceptions)->capture_default_str();
        wt_cmd->add_option("--max-epochs", wt_args.max_epochs)->capture_default_str();
        wt_cmd->add_option("--patience", wt_args.patience)->capture_default_str();
        wt_cmd->add_option("--batch-size", wt_args.batch_size)->capture_default_str();
        wt_cmd->add_option("--lr", wt_args.lr)->capture_default_str();
        wt_cmd->callback([&]() {
            auto vocab = load_vocab(wt_args.vocab);
            auto base = load_checkpoint(wt_args.ckpt);
            Tokenizer tok = make_tokenizer(wt_args.exceptions);
            auto examples = read_sense_examples(wt_args.examples);
            FineTuneOptions opts;
            opts.max_epochs = wt_args.max_epochs;
            opts.patience = wt_args.patience;
            opts.batch_size = wt_args.batch_size;
            opts.learning_rate = wt_args.lr;
            opts.seed = seed;
            uint32_t rejected = 0;
            FineTuneReport report;
            auto model = train_wsd(base, vocab, tok, wt_args.headword, examples, opts,
                                   &report, &rejected);
            save_wsd_model(model, wt_args.out);
            echo_config(wt_cmd, wt_args.out);
            std::cerr << "epochs run " << report.epochs_run << ", rejected " << rejected
                      << " examples\n";
        });

        // ---------------- wsd-eval ----------------
        auto* we_cmd = app.add_subcommand("wsd-eval", "evaluate sense classifiers");
        struct {
            std::vector<std::string> models;
            std::string vocab, examples, out;
            std::string exceptions = default_exceptions_path();
        } we_args;
        we_cmd->add_option("--models", we_args.models, "model files")->required();
        we_cmd->add_option("--vocab", we_args.vocab)->required();
        we_cmd->add_option("--examples", we_args.examples)->required();
        we_cmd->add_option("--out", we_args.out, "evaluation JSON");
        we_cmd->add_option("--exceptions", we_args.exceptions)->capture_default_str();
        we_cmd->callback([&]() {
            auto vocab = load_vocab(we_args.vocab);
            Tokenizer tok = make_tokenizer(we_args.exceptions);
            std::vector<WsdModel> models;
            for (const auto& p : we_args.models) models.push_back(load_wsd_model(p));
            std::vector<SenseExample> test;
            for (auto& ex : read_sense_examples(we_args.examples)) {
                if (ex.split == Split::test) test.push_back(std::move(ex));
            }
            auto eval = evaluate_wsd(models, vocab, tok, test);
            std::cout << "overall accuracy " << eval.overall << " over " << test.size()
                      << " examples\n";
            for (const auto& [hw, acc] : eval.per_headword) {
                std::cout << "  " << hw << " " << acc << "\n";
            }
            if (!we_args.out.empty()) {
                std::ofstream out(we_args.out, std::ios::binary);
                nlohmann::json j;
                j["overall"] = eval.overall;
                j["per_headword"] = eval.per_headword;
                out << j.dump(2) << '\n';
                echo_config(we_cmd, we_args.out);
            }
        });

        // ---------------- mine-emendations ----------------
        auto* men_cmd = app.add_subcommand(
            "mine-emendations", "extract bracketed conjectures as evaluation slots");
        struct {
            std::string in, train, out, report_out, cleaned_out, source_id = "corpus";
            std::string exceptions = default_exceptions_path();
        } men_args;
        men_cmd->add_option("--in", men_args.in, "raw text with angle brackets")->required();
        men_cmd->add_option("--train", men_args.train,
                            "raw pretraining text for the leakage filter");
        men_cmd->add_option("--out", men_args.out)->required();
        men_cmd->add_option("--report-out", men_args.report_out);
        men_cmd->add_option("--cleaned-out", men_args.cleaned_out,
                            "training text with bracketed sentences removed");
        men_cmd->add_option("--source-id", men_args.source_id)->capture_default_str();
        men_cmd->add_option("--exceptions", men_args.exceptions)->capture_default_str();
        men_cmd->callback([&]() {
            Tokenizer tok = make_tokenizer(men_args.exceptions);
            auto sentences = segment_sentences(read_text_file(men_args.in));
            std::set<std::string> ngrams;
            if (!men_args.train.empty()) {
                auto train_sentences = segment_sentences(read_text_file(men_args.train));
                auto cleaned = remove_bracketed_sentences(train_sentences);
                ngrams = build_training_ngrams(tok, cleaned);
                if (!men_args.cleaned_out.empty()) {
                    std::ofstream out(men_args.cleaned_out, std::ios::binary);
                    for (const auto& s : cleaned) out << s << '\n';
                }
            }
            EmendationMiningReport report;
            auto examples =
                mine_emendations(tok, sentences, men_args.source_id, ngrams, &report);
            write_emendations(men_args.out, examples);
            echo_config(men_cmd, men_args.out);
            if (!men_args.report_out.empty()) {
                std::ofstream out(men_args.report_out, std::ios::binary);
                nlohmann::json j;
                j["candidates"] = report.candidates;
                j["failed_word_length"] = report.failed_word_length;
                j["failed_sentence_length"] = report.failed_sentence_length;
                j["failed_leakage"] = report.failed_leakage;
                j["malformed_brackets"] = report.malformed_brackets;
                j["emitted"] = report.emitted;
                out << j.dump(2) << '\n';
            }
            std::cerr << "emitted " << report.emitted << " of " << report.candidates
                      << " candidates\n";
        });

        // ---------------- infill-rank ----------------
        auto* ir_cmd = app.add_subcommand("infill-rank",
                                          "rank lexicon words for emendation slots");
        struct {
            std::string ckpt, vocab, examples, lexicon, lexicon_from, out;
            uint64_t min_freq = 5;
            size_t show = 0;
            bool include_gold = false;
        } ir_args;
        ir_cmd->add_option("--ckpt", ir_args.ckpt)->required();
        ir_cmd->add_option("--vocab", ir_args.vocab)->required();
        ir_cmd->add_option("--examples", ir_args.examples)->required();
        ir_cmd->add_option("--lexicon", ir_args.lexicon, "candidate words, one per line");
        ir_cmd->add_option("--lexicon-from", ir_args.lexicon_from,
                           "build the lexicon from this tokenized JSON lines corpus");
        ir_cmd->add_option("--min-freq", ir_args.min_freq)->capture_default_str();
        ir_cmd->add_option("--out", ir_args.out)->required();
        ir_cmd->add_option("--show", ir_args.show, "print a top-10 table for N examples");
        ir_cmd->add_flag("--include-gold", ir_args.include_gold,
                         "add gold words to the lexicon (evaluation runs)");
        ir_cmd->callback([&]() {
            auto vocab = load_vocab(ir_args.vocab);
            auto state = load_checkpoint(ir_args.ckpt);
            auto examples = read_emendations(ir_args.examples);
            std::vector<std::string> lexicon;
            if (!ir_args.lexicon.empty()) {
                lexicon = read_lexicon(ir_args.lexicon);
            } else if (!ir_args.lexicon_from.empty()) {
                lexicon = build_candidate_lexicon(
                    read_tokenized_jsonl(ir_args.lexicon_from), vocab, ir_args.min_freq);
            } else {
                throw CLI::ValidationError("infill-rank",
                                           "need --lexicon or --lexicon-from");
            }
            if (ir_args.include_gold) {
                for (const auto& ex : examples) {
                    lexicon.push_back(vocab.lowercase() ? fold_case(ex.gold_word)
                                                        : ex.gold_word);
                }
            }
            std::vector<CandidateRanking> rankings;
            for (size_t i = 0; i < examples.size(); ++i) {
                rankings.push_back(rank_candidates(state, vocab, examples[i], lexicon));
                if (i < ir_args.show) {
                    std::cout << "== " << rankings.back().source_id << " (gold "
                              << examples[i].gold_word << ")\n"
                              << format_ranking_table(rankings.back(), 10);
                }
            }
            write_rankings(ir_args.out, rankings);
            echo_config(ir_cmd, ir_args.out);
        });

        // ---------------- infill-eval ----------------
        auto* ie_cmd = app.add_subcommand("infill-eval", "restoration metrics");
        struct {
            std::string rankings, examples, out;
        } ie_args;
        ie_cmd->add_option("--rankings", ie_args.rankings)->required();
        ie_cmd->add_option("--examples", ie_args.examples, "emendation JSON lines with gold")
            ->required();
        ie_cmd->add_option("--out", ie_args.out);
        ie_cmd->callback([&]() {
            auto rankings = read_rankings(ie_args.rankings);
            auto examples = read_emendations(ie_args.examples);
            if (rankings.size() != examples.size()) {
                throw std::runtime_error("rankings and examples differ in count");
            }
            std::vector<std::string> gold;
            for (const auto& ex : examples) gold.push_back(fold_case(ex.gold_word));
            auto m = evaluate_infilling(rankings, gold);
            std::cout << "n " << m.n_examples << " top1 " << m.top1 << " top10 "
                      << m.top10 << " top50 " << m.top50 << " mrr "
                      << m.mean_reciprocal_rank << "\n";
            if (!ie_args.out.empty()) {
                std::ofstream out(ie_args.out, std::ios::binary);
                nlohmann::json j;
                j["n_examples"] = m.n_examples;
                j["top1"] = m.top1;
                j["top10"] = m.top10;
                j["top50"] = m.top50;
                j["mean_reciprocal_rank"] = m.mean_reciprocal_rank;
                out << j.dump(2) << '\n';
                echo_config(ie_cmd, ie_args.out);
            }
        });

        // ---------------- index-build ----------------
        auto* ib_cmd = app.add_subcommand("index-build",
                                          "embed a corpus into an exact search index");
        struct {
            std::string ckpt, vocab, in, out, citations;
            int layer = -1;
            uint32_t shards = 1;
            bool include_punct = false;
        } ib_args;
        ib_cmd->add_option("--ckpt", ib_args.ckpt)->required();
        ib_cmd->add_option("--vocab", ib_args.vocab)->required();
        ib_cmd->add_option("--in", ib_args.in, "tokenized JSON lines")->required();
        ib_cmd->add_option("--out", ib_args.out)->required();
        ib_cmd->add_option("--citations", ib_args.citations,
                           "tab-separated doc_id and citation");
        ib_cmd->add_option("--layer", ib_args.layer, "-1 selects the final layer")
            ->capture_default_str();
        ib_cmd->add_option("--shards", ib_args.shards)->capture_default_str();
        ib_cmd->add_flag("--include-punct", ib_args.include_punct);
        ib_cmd->callback([&]() {
            auto vocab = load_vocab(ib_args.vocab);
            auto state = load_checkpoint(ib_args.ckpt);
            auto sentences = read_tokenized_jsonl(ib_args.in);
            std::map<std::string, std::string> citations;
            if (!ib_args.citations.empty()) {
                for (const auto& line : read_lines(ib_args.citations)) {
                    const size_t tab = line.find('\t');
                    if (tab != std::string::npos) {
                        citations[line.substr(0, tab)] = line.substr(tab + 1);
                    }
                }
            }
            IndexBuildOptions opts;
            opts.layer = ib_args.layer;
            opts.include_punctuation = ib_args.include_punct;
            opts.shards = ib_args.shards;
            IndexBuildStats stats;
            auto index = build_index(state, vocab, sentences, opts, citations, &stats);
            save_index(index, ib_args.out);
            echo_config(ib_cmd, ib_args.out);
            std::cerr << "indexed " << stats.tokens_indexed << " tokens ("
                      << stats.tokens_truncated << " truncated, "
                      << stats.tokens_skipped_punct << " punctuation)\n";
        });

        // ---------------- index-query ----------------
        auto* iq_cmd = app.add_subcommand("index-query", "contextual nearest neighbors");
        struct {
            std::string index, ckpt, vocab, sentence, corpus, json_out;
            std::string exceptions = default_exceptions_path();
            size_t word_index = 0;
            size_t k = 10;
        } iq_args;
        iq_cmd->add_option("--index", iq_args.index)->required();
        iq_cmd->add_option("--ckpt", iq_args.ckpt)->required();
        iq_cmd->add_option("--vocab", iq_args.vocab)->required();
        iq_cmd->add_option("--sentence", iq_args.sentence, "query sentence text")->required();
        iq_cmd->add_option("--word-index", iq_args.word_index,
                           "token position of the query word")
            ->required();
        iq_cmd->add_option("--k", iq_args.k)->capture_default_str();
        iq_cmd->add_option("--corpus", iq_args.corpus,
                           "tokenized JSON lines for hit snippets");
        iq_cmd->add_option("--json-out", iq_args.json_out);
        iq_cmd->add_option("--exceptions", iq_args.exceptions)->capture_default_str();
        iq_cmd->callback([&]() {
            auto vocab = load_vocab(iq_args.vocab);
            auto state = load_checkpoint(iq_args.ckpt);
            auto index = load_index(iq_args.index);
            Tokenizer tok = make_tokenizer(iq_args.exceptions);
            auto tokens = tok.tokenize(iq_args.sentence);
            std::vector<Sentence> corpus;
            if (!iq_args.corpus.empty()) corpus = read_tokenized_jsonl(iq_args.corpus);
            auto hits = query(index, state, vocab, tokens, iq_args.word_index, iq_args.k,
                              {}, iq_args.corpus.empty() ? nullptr : &corpus);
            std::cout << "cosine  snippet\n";
            for (const auto& h : hits) {
                const TokenRecord& rec = index.record(h.record_index);
                std::cout << std::fixed << std::setprecision(3) << h.cosine << "   "
                          << (h.sentence_text.empty() ? rec.surface : h.sentence_text);
                if (!rec.citation.empty()) std::cout << "  [" << rec.citation << "]";
                std::cout << "  (" << rec.doc_id << ":" << rec.sentence_index << ":"
                          << rec.word_index << ")\n";
            }
            if (!iq_args.json_out.empty()) {
                std::ofstream out(iq_args.json_out, std::ios::binary);
                for (const auto& h : hits) {
                    const TokenRecord& rec = index.record(h.record_index);
                    nlohmann::json j;
                    j["cosine"] = h.cosine;
                    j["doc_id"] = rec.doc_id;
                    j["sentence_index"] = rec.sentence_index;
                    j["word_index"] = rec.word_index;
                    j["surface"] = rec.surface;
                    j["citation"] = rec.citation;
                    if (!h.sentence_text.empty()) j["text"] = h.sentence_text;
                    out << j.dump() << '\n';
                }
                echo_config(iq_cmd, iq_args.json_out);
            }
        });

        // ---------------- dump-embeddings ----------------
        auto* de_cmd = app.add_subcommand("dump-embeddings",
                                          "contextual vectors for one word form");
        struct {
            std::string ckpt, vocab, in, form, out;
            int layer = -1;
        } de_args;
        de_cmd->add_option("--ckpt", de_args.ckpt)->required();
        de_cmd->add_option("--vocab", de_args.vocab)->required();
        de_cmd->add_option("--in", de_args.in, "tokenized JSON lines")->required();
        de_cmd->add_option("--form", de_args.form, "target word form")->required();
        de_cmd->add_option("--out", de_args.out, "CSV output")->required();
        de_cmd->add_option("--layer", de_args.layer)->capture_default_str();
        de_cmd->callback([&]() {
            auto vocab = load_vocab(de_args.vocab);
            auto state = load_checkpoint(de_args.ckpt);
            auto sentences = read_tokenized_jsonl(de_args.in);
            auto records = dump_embeddings(state, vocab, sentences, de_args.form,
                                           de_args.layer);
            write_embedding_dump_csv(de_args.out, records);
            echo_config(de_cmd, de_args.out);
            std::cerr << "dumped " << records.size() << " vectors\n";
        });

        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
