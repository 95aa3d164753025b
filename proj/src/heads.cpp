#include "latinlm/heads.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>
#include <stdexcept>

namespace latinlm {

TagSet::TagSet(std::vector<std::string> tags) : id_to_tag_(std::move(tags)) {
    for (size_t i = 0; i < id_to_tag_.size(); ++i) {
        if (!tag_to_id_.emplace(id_to_tag_[i], static_cast<int>(i)).second) {
            throw std::invalid_argument("duplicate tag: " + id_to_tag_[i]);
        }
    }
    if (tag_to_id_.find(kUnkTag) == tag_to_id_.end()) {
        throw std::invalid_argument("tag set must contain the reserved tag");
    }
}

TagSet TagSet::from_training(const std::vector<TaggedSentence>& train) {
    std::map<std::string, int> seen;
    for (const auto& s : train) {
        for (const auto& t : s.upos) seen.emplace(t, 0);
    }
    std::vector<std::string> tags;
    tags.reserve(seen.size() + 1);
    for (const auto& [t, _] : seen) tags.push_back(t);
    tags.push_back(kUnkTag);
    return TagSet(std::move(tags));
}

int TagSet::id(const std::string& tag) const {
    auto it = tag_to_id_.find(tag);
    return it == tag_to_id_.end() ? -1 : it->second;
}

int TagSet::id_or_unk(const std::string& tag) const {
    const int i = id(tag);
    return i < 0 ? unk_id() : i;
}

namespace {

struct WordClsExample {
    SubwordEncoding enc;
    std::vector<int> labels;  // aligned with enc.word_alignment; -1 = ignore
};

// mean (or first) subtoken vector of a word at the final layer
void word_rep(const Tensor& hidden, const WordRange& r, bool average,
              std::vector<Real>& out) {
    const int H = hidden.shape[1];
    out.assign(static_cast<size_t>(H), 0.0);
    if (average) {
        const Real inv = 1.0 / static_cast<Real>(r.end - r.begin);
        for (uint32_t p = r.begin; p < r.end; ++p) {
            const Real* row = hidden.ptr() + static_cast<size_t>(p) * H;
            for (int j = 0; j < H; ++j) out[static_cast<size_t>(j)] += row[j] * inv;
        }
    } else {
        const Real* row = hidden.ptr() + static_cast<size_t>(r.begin) * H;
        for (int j = 0; j < H; ++j) out[static_cast<size_t>(j)] = row[j];
    }
}

struct HeadParams {
    Tensor w;  // [H, C]
    Tensor b;  // [C]
};

void head_logits(const HeadParams& head, const std::vector<Real>& rep,
                 std::vector<Real>& logits) {
    const int H = head.w.shape[0];
    const int C = head.w.shape[1];
    logits.assign(static_cast<size_t>(C), 0.0);
    for (int c = 0; c < C; ++c) logits[static_cast<size_t>(c)] = head.b.data[static_cast<size_t>(c)];
    for (int h = 0; h < H; ++h) {
        const Real x = rep[static_cast<size_t>(h)];
        if (x == 0.0) continue;
        const Real* wrow = head.w.ptr() + static_cast<size_t>(h) * C;
        for (int c = 0; c < C; ++c) logits[static_cast<size_t>(c)] += x * wrow[c];
    }
}

void softmax_inplace(std::vector<Real>& v) {
    Real maxv = -std::numeric_limits<Real>::infinity();
    for (Real x : v) maxv = std::max(maxv, x);
    Real sum = 0.0;
    for (Real& x : v) {
        x = std::exp(x - maxv);
        sum += x;
    }
    for (Real& x : v) x /= sum;
}

int argmax(const std::vector<Real>& v) {
    int best = 0;
    for (size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[static_cast<size_t>(best)]) best = static_cast<int>(i);
    }
    return best;
}

// forward + loss + gradient accumulation for one example; returns summed CE
// and labeled-word count
std::pair<Real, size_t> word_cls_pass(const EncoderState& state, const HeadParams& head,
                                      const WordClsExample& ex, bool average,
                                      bool train_mode, Rng* rng, Real scale,
                                      EncoderState* grads, HeadParams* head_grads) {
    size_t labeled = 0;
    for (int l : ex.labels) {
        if (l >= 0) ++labeled;
    }
    if (labeled == 0) return {0.0, 0};

    ForwardCache fwd = forward(state, ex.enc, train_mode, rng);
    const Tensor& hidden = fwd.hidden.back();
    const int H = hidden.shape[1];
    const int C = head.w.shape[1];

    Real sum_ce = 0.0;
    Tensor dfinal;
    if (grads != nullptr) dfinal = Tensor::zeros({fwd.seq_len, H});

    std::vector<Real> rep, logits;
    for (size_t w = 0; w < ex.enc.word_alignment.size(); ++w) {
        const int gold = w < ex.labels.size() ? ex.labels[w] : -1;
        if (gold < 0) continue;
        const WordRange r = ex.enc.word_alignment[w];
        word_rep(hidden, r, average, rep);
        head_logits(head, rep, logits);
        softmax_inplace(logits);
        sum_ce += -std::log(std::max(logits[static_cast<size_t>(gold)],
                                     std::numeric_limits<Real>::min()));
        if (grads == nullptr) continue;

        // dlogits = (probs - onehot) * scale
        std::vector<Real> dlogit = logits;
        dlogit[static_cast<size_t>(gold)] -= 1.0;
        for (Real& v : dlogit) v *= scale;

        for (int c = 0; c < C; ++c) {
            head_grads->b.data[static_cast<size_t>(c)] += dlogit[static_cast<size_t>(c)];
        }
        std::vector<Real> drep(static_cast<size_t>(H), 0.0);
        for (int h = 0; h < H; ++h) {
            Real* gw = head_grads->w.ptr() + static_cast<size_t>(h) * C;
            const Real* wrow = head.w.ptr() + static_cast<size_t>(h) * C;
            const Real x = rep[static_cast<size_t>(h)];
            Real acc = 0.0;
            for (int c = 0; c < C; ++c) {
                gw[c] += x * dlogit[static_cast<size_t>(c)];
                acc += wrow[c] * dlogit[static_cast<size_t>(c)];
            }
            drep[static_cast<size_t>(h)] = acc;
        }
        if (average) {
            const Real inv = 1.0 / static_cast<Real>(r.end - r.begin);
            for (uint32_t p = r.begin; p < r.end; ++p) {
                Real* row = dfinal.ptr() + static_cast<size_t>(p) * H;
                for (int j = 0; j < H; ++j) row[j] += drep[static_cast<size_t>(j)] * inv;
            }
        } else {
            Real* row = dfinal.ptr() + static_cast<size_t>(r.begin) * H;
            for (int j = 0; j < H; ++j) row[j] += drep[static_cast<size_t>(j)];
        }
    }
    if (grads != nullptr) {
        backward_from_hidden(state, fwd, dfinal, *grads);
    }
    return {sum_ce, labeled};
}

// per-word predictions in eval mode; words lost to truncation are absent
std::vector<int> word_cls_predict(const EncoderState& state, const HeadParams& head,
                                  const SubwordEncoding& enc, bool average) {
    if (enc.word_alignment.empty()) return {};
    ForwardCache fwd = forward(state, enc, false, nullptr);
    const Tensor& hidden = fwd.hidden.back();
    std::vector<int> preds;
    std::vector<Real> rep, logits;
    for (const WordRange& r : enc.word_alignment) {
        word_rep(hidden, r, average, rep);
        head_logits(head, rep, logits);
        preds.push_back(argmax(logits));
    }
    return preds;
}

double word_cls_accuracy(const EncoderState& state, const HeadParams& head,
                         const std::vector<WordClsExample>& examples, bool average) {
    size_t correct = 0;
    size_t total = 0;
    for (const auto& ex : examples) {
        auto preds = word_cls_predict(state, head, ex.enc, average);
        for (size_t w = 0; w < ex.labels.size(); ++w) {
            if (ex.labels[w] < 0) continue;
            ++total;
            if (w < preds.size() && preds[w] == ex.labels[w]) ++correct;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

struct FineTuned {
    EncoderState encoder;
    HeadParams head;
};

FineTuned fine_tune_word_cls(const EncoderState& base,
                             const std::vector<WordClsExample>& train,
                             const std::vector<WordClsExample>& dev, int n_classes,
                             const FineTuneOptions& opts, FineTuneReport* report) {
    if (train.empty()) throw std::invalid_argument("fine-tuning needs training examples");
    const int H = base.config.hidden_size;

    EncoderState state = base;
    HeadParams head;
    head.w = Tensor::zeros({H, n_classes});
    head.b = Tensor::zeros({n_classes});
    Rng init_rng(mix_seed(opts.seed, "head-init"));
    for (Real& v : head.w.data) v = init_rng.normal(0.0, base.config.initializer_range);

    std::vector<Tensor*> params = param_tensor_list(state);
    params.push_back(&head.w);
    params.push_back(&head.b);
    AdamOptions adam = opts.adam;
    adam.learning_rate = opts.learning_rate;
    AdamOptimizer optimizer(params, adam);

    EncoderState grads = EncoderState::zeros_like(state);
    HeadParams head_grads;
    head_grads.w = Tensor::zeros({H, n_classes});
    head_grads.b = Tensor::zeros({n_classes});
    std::vector<Tensor*> grad_list = param_tensor_list(grads);
    grad_list.push_back(&head_grads.w);
    grad_list.push_back(&head_grads.b);

    Rng rng(mix_seed(opts.seed, "fine-tune"));
    const bool use_dev = !dev.empty();
    const int epoch_cap = use_dev ? opts.max_epochs : opts.fixed_epochs;

    FineTuned best{state, head};
    double best_score = -1.0;
    int best_epoch = -1;
    uint64_t update = 0;

    std::vector<size_t> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    FineTuneReport local;
    for (int epoch = 0; epoch < epoch_cap; ++epoch) {
        rng.shuffle(order);
        Real epoch_ce = 0.0;
        size_t epoch_words = 0;
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(opts.batch_size)) {
            const size_t end =
                std::min(order.size(), start + static_cast<size_t>(opts.batch_size));
            size_t batch_words = 0;
            for (size_t i = start; i < end; ++i) {
                for (int l : train[order[i]].labels) {
                    if (l >= 0) ++batch_words;
                }
            }
            if (batch_words == 0) continue;
            grads.for_each_param([](const std::string&, Tensor& t) { t.fill(0.0); });
            head_grads.w.fill(0.0);
            head_grads.b.fill(0.0);
            const Real scale = 1.0 / static_cast<Real>(batch_words);
            for (size_t i = start; i < end; ++i) {
                auto [ce, n] = word_cls_pass(state, head, train[order[i]],
                                             opts.average_subtokens, true, &rng,
                                             scale, &grads, &head_grads);
                epoch_ce += ce;
                epoch_words += n;
            }
            optimizer.step(grad_list, opts.learning_rate, ++update);
        }
        local.epoch_losses.push_back(
            epoch_words == 0 ? 0.0 : epoch_ce / static_cast<double>(epoch_words));
        local.epochs_run = epoch + 1;

        if (use_dev) {
            const double score =
                word_cls_accuracy(state, head, dev, opts.average_subtokens);
            local.dev_scores.push_back(score);
            if (score > best_score) {
                best_score = score;
                best_epoch = epoch;
                best.encoder = state;
                best.head = head;
            }
            if (epoch - best_epoch >= opts.patience) break;
        }
    }

    local.best_epoch = best_epoch;
    if (report != nullptr) *report = local;
    if (use_dev) return best;
    return FineTuned{std::move(state), std::move(head)};
}

size_t effective_seq_len(const EncoderState& state, const FineTuneOptions& opts) {
    return opts.seq_len == 0 ? static_cast<size_t>(state.config.max_positions)
                             : opts.seq_len;
}

WordClsExample pos_example(const SubwordVocab& vocab, const TaggedSentence& s,
                           const TagSet& tags, size_t seq_len) {
    WordClsExample ex;
    ex.enc = encode_sentence(vocab, s.tokens, true, seq_len);
    for (const auto& t : s.upos) ex.labels.push_back(tags.id_or_unk(t));
    ex.labels.resize(ex.enc.word_alignment.size(), -1);
    return ex;
}

}  // namespace

PosModel train_pos(const EncoderState& base, const SubwordVocab& vocab,
                   const std::vector<TaggedSentence>& train,
                   const std::vector<TaggedSentence>* dev,
                   const FineTuneOptions& opts, FineTuneReport* report) {
    TagSet tags = TagSet::from_training(train);
    const size_t seq_len = effective_seq_len(base, opts);

    std::vector<WordClsExample> train_ex;
    train_ex.reserve(train.size());
    for (const auto& s : train) train_ex.push_back(pos_example(vocab, s, tags, seq_len));

    std::vector<WordClsExample> dev_ex;
    if (dev != nullptr) {
        for (const auto& s : *dev) {
            for (const auto& t : s.upos) {
                if (tags.id(t) < 0) {
                    std::cerr << "warning: dev tag '" << t
                              << "' unseen in training, mapped to the reserved tag\n";
                }
            }
            dev_ex.push_back(pos_example(vocab, s, tags, seq_len));
        }
    }

    FineTuned ft = fine_tune_word_cls(base, train_ex, dev_ex, tags.size(), opts, report);
    PosModel model;
    model.encoder = std::move(ft.encoder);
    model.head_w = std::move(ft.head.w);
    model.head_b = std::move(ft.head.b);
    model.tags = std::move(tags);
    model.average_subtokens = opts.average_subtokens;
    return model;
}

TagResult tag(const PosModel& model, const SubwordVocab& vocab,
              const std::vector<std::string>& tokens) {
    TagResult result;
    if (tokens.empty()) return result;
    SubwordEncoding enc = encode_sentence(
        vocab, tokens, true, static_cast<size_t>(model.encoder.config.max_positions));
    HeadParams head;
    head.w = model.head_w;
    head.b = model.head_b;
    auto preds = word_cls_predict(model.encoder, head, enc, model.average_subtokens);
    for (size_t w = 0; w < tokens.size(); ++w) {
        if (w < preds.size()) {
            result.tags.push_back(model.tags.tag(preds[w]));
        } else {
            result.tags.push_back(TagSet::kUnkTag);
            ++result.truncated_words;
        }
    }
    return result;
}

double evaluate_pos(const PosModel& model, const SubwordVocab& vocab,
                    const std::vector<TaggedSentence>& test) {
    size_t correct = 0;
    size_t total = 0;
    for (const auto& s : test) {
        auto result = tag(model, vocab, s.tokens);
        for (size_t w = 0; w < s.upos.size(); ++w) {
            ++total;
            const std::string gold = model.tags.id(s.upos[w]) < 0
                                         ? std::string(TagSet::kUnkTag)
                                         : s.upos[w];
            if (result.tags[w] == gold) ++correct;
        }
    }
    if (total == 0) throw std::invalid_argument("evaluate_pos: empty test set");
    return static_cast<double>(correct) / static_cast<double>(total);
}

namespace {

constexpr uint32_t kHeadKindPos = 1;
constexpr uint32_t kHeadKindWsd = 2;

void write_u32v(std::ostream& out, uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint32_t read_u32v(std::istream& in, const std::string& what) {
    uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
        throw std::runtime_error("truncated head section: " + what);
    }
    return v;
}
void write_string(std::ostream& out, const std::string& s) {
    write_u32v(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string read_string(std::istream& in, const std::string& what) {
    const uint32_t n = read_u32v(in, what);
    std::string s(n, '\0');
    if (!in.read(s.data(), n)) {
        throw std::runtime_error("truncated head section: " + what);
    }
    return s;
}

}  // namespace

void save_pos_model(const PosModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    save_checkpoint(model.encoder, out);
    out.write("HEAD", 4);
    write_u32v(out, kHeadKindPos);
    write_u32v(out, model.average_subtokens ? 1 : 0);
    write_u32v(out, static_cast<uint32_t>(model.tags.size()));
    for (const auto& t : model.tags.tags()) write_string(out, t);
    write_tensor(out, model.head_w);
    write_tensor(out, model.head_b);
    if (!out) throw std::runtime_error("failed writing " + path);
}

PosModel load_pos_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    PosModel model;
    model.encoder = load_checkpoint(in, path);
    char magic[4] = {};
    if (!in.read(magic, 4) || std::memcmp(magic, "HEAD", 4) != 0) {
        throw std::runtime_error(path + ": missing head section");
    }
    if (read_u32v(in, "kind") != kHeadKindPos) {
        throw std::runtime_error(path + ": not a tagging model");
    }
    model.average_subtokens = read_u32v(in, "average flag") != 0;
    const uint32_t n_tags = read_u32v(in, "tag count");
    std::vector<std::string> tags;
    for (uint32_t i = 0; i < n_tags; ++i) tags.push_back(read_string(in, "tag"));
    model.tags = TagSet(std::move(tags));
    model.head_w = read_tensor(in, path + " head_w");
    model.head_b = read_tensor(in, path + " head_b");
    return model;
}

namespace {

// first word-token index whose folded, marker-stripped surface equals the
// folded headword; -1 when absent
int find_headword_index(const std::vector<Token>& tokens, const std::string& headword) {
    const std::string target = fold_case(headword);
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (fold_case(strip_enclitic_marker(tokens[i].surface)) == target) {
            return static_cast<int>(i);
        }
    }
    return -1;
}

bool wsd_example(const SubwordVocab& vocab, const Tokenizer& tok,
                 const std::string& headword, const SenseExample& se,
                 size_t seq_len, WordClsExample& out) {
    const auto tokens = tok.tokenize(se.text);
    const int idx = find_headword_index(tokens, headword);
    if (idx < 0) return false;
    out.enc = encode_sentence(vocab, tokens, true, seq_len);
    if (static_cast<size_t>(idx) >= out.enc.word_alignment.size()) return false;
    out.labels.assign(out.enc.word_alignment.size(), -1);
    out.labels[static_cast<size_t>(idx)] = se.sense;
    return true;
}

}  // namespace

WsdModel train_wsd(const EncoderState& base, const SubwordVocab& vocab,
                   const Tokenizer& tok, const std::string& headword,
                   const std::vector<SenseExample>& examples,
                   const FineTuneOptions& opts, FineTuneReport* report,
                   uint32_t* rejected) {
    const size_t seq_len = effective_seq_len(base, opts);
    std::vector<WordClsExample> train_ex, dev_ex;
    uint32_t dropped = 0;
    for (const auto& se : examples) {
        if (se.headword != headword || se.split == Split::test) continue;
        WordClsExample ex;
        if (!wsd_example(vocab, tok, headword, se, seq_len, ex)) {
            ++dropped;
            continue;
        }
        (se.split == Split::train ? train_ex : dev_ex).push_back(std::move(ex));
    }
    if (rejected != nullptr) *rejected = dropped;

    FineTuned ft = fine_tune_word_cls(base, train_ex, dev_ex, 2, opts, report);
    WsdModel model;
    model.encoder = std::move(ft.encoder);
    model.head_w = std::move(ft.head.w);
    model.head_b = std::move(ft.head.b);
    model.headword = headword;
    model.average_subtokens = opts.average_subtokens;
    return model;
}

int classify_wsd(const WsdModel& model, const SubwordVocab& vocab,
                 const Tokenizer& tok, const std::string& text) {
    const auto tokens = tok.tokenize(text);
    const int idx = find_headword_index(tokens, model.headword);
    if (idx < 0) return -1;
    SubwordEncoding enc = encode_sentence(
        vocab, tokens, true, static_cast<size_t>(model.encoder.config.max_positions));
    if (static_cast<size_t>(idx) >= enc.word_alignment.size()) return -1;
    HeadParams head;
    head.w = model.head_w;
    head.b = model.head_b;
    auto preds = word_cls_predict(model.encoder, head, enc, model.average_subtokens);
    return preds[static_cast<size_t>(idx)];
}

WsdEvaluation evaluate_wsd(const std::vector<WsdModel>& models,
                           const SubwordVocab& vocab, const Tokenizer& tok,
                           const std::vector<SenseExample>& test) {
    std::map<std::string, const WsdModel*> by_headword;
    for (const auto& m : models) by_headword[m.headword] = &m;

    std::map<std::string, std::pair<size_t, size_t>> tallies;  // correct, total
    size_t correct = 0;
    size_t total = 0;
    for (const auto& se : test) {
        auto it = by_headword.find(se.headword);
        if (it == by_headword.end()) {
            throw std::invalid_argument("evaluate_wsd: no model for headword " +
                                        se.headword);
        }
        const int pred = classify_wsd(*it->second, vocab, tok, se.text);
        auto& tally = tallies[se.headword];
        ++tally.second;
        ++total;
        if (pred == se.sense) {
            ++tally.first;
            ++correct;
        }
    }
    WsdEvaluation eval;
    eval.overall = total == 0 ? 0.0
                              : static_cast<double>(correct) / static_cast<double>(total);
    for (const auto& [hw, tally] : tallies) {
        eval.per_headword[hw] =
            static_cast<double>(tally.first) / static_cast<double>(tally.second);
    }
    return eval;
}

void save_wsd_model(const WsdModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    save_checkpoint(model.encoder, out);
    out.write("HEAD", 4);
    write_u32v(out, kHeadKindWsd);
    write_u32v(out, model.average_subtokens ? 1 : 0);
    write_string(out, model.headword);
    write_tensor(out, model.head_w);
    write_tensor(out, model.head_b);
    if (!out) throw std::runtime_error("failed writing " + path);
}

WsdModel load_wsd_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    WsdModel model;
    model.encoder = load_checkpoint(in, path);
    char magic[4] = {};
    if (!in.read(magic, 4) || std::memcmp(magic, "HEAD", 4) != 0) {
        throw std::runtime_error(path + ": missing head section");
    }
    if (read_u32v(in, "kind") != kHeadKindWsd) {
        throw std::runtime_error(path + ": not a sense model");
    }
    model.average_subtokens = read_u32v(in, "average flag") != 0;
    model.headword = read_string(in, "headword");
    model.head_w = read_tensor(in, path + " head_w");
    model.head_b = read_tensor(in, path + " head_b");
    return model;
}

std::vector<EmbeddingDumpRecord> dump_embeddings(const EncoderState& state,
                                                 const SubwordVocab& vocab,
                                                 const std::vector<Sentence>& sentences,
                                                 const std::string& target_form,
                                                 int layer) {
    const std::string target = fold_case(target_form);
    std::vector<EmbeddingDumpRecord> records;
    for (const auto& s : sentences) {
        std::vector<uint32_t> hits;
        for (size_t i = 0; i < s.tokens.size(); ++i) {
            if (fold_case(strip_enclitic_marker(s.tokens[i].surface)) == target) {
                hits.push_back(static_cast<uint32_t>(i));
            }
        }
        if (hits.empty()) continue;
        WordEmbeddings emb = embed_words(state, vocab, s.tokens, layer);
        for (uint32_t idx : hits) {
            if (idx >= emb.words.size()) continue;  // lost to truncation
            EmbeddingDumpRecord rec;
            rec.sentence_id = s.doc_id + ":" + std::to_string(s.index);
            rec.position = idx;
            rec.vector = emb.words[idx].vector;
            records.push_back(std::move(rec));
        }
    }
    return records;
}

void write_embedding_dump_csv(const std::string& path,
                              const std::vector<EmbeddingDumpRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    const size_t dim = records.empty() ? 0 : records[0].vector.size();
    out << "sentence_id,position";
    for (size_t j = 0; j < dim; ++j) out << ",v" << j;
    out << '\n';
    out.precision(17);
    for (const auto& rec : records) {
        out << rec.sentence_id << ',' << rec.position;
        for (Real v : rec.vector) out << ',' << v;
        out << '\n';
    }
}

}  // namespace latinlm
