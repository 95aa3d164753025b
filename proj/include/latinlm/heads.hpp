#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "latinlm/datasets.hpp"
#include "latinlm/encoder.hpp"
#include "latinlm/train.hpp"

namespace latinlm {

// Tag inventory built from training data only; a reserved tag absorbs
// anything unseen there.
class TagSet {
public:
    static constexpr const char* kUnkTag = "<unk-tag>";

    TagSet() = default;
    explicit TagSet(std::vector<std::string> tags);
    static TagSet from_training(const std::vector<TaggedSentence>& train);

    int size() const { return static_cast<int>(id_to_tag_.size()); }
    int id(const std::string& tag) const;        // -1 when absent
    int id_or_unk(const std::string& tag) const;
    int unk_id() const { return size() - 1; }
    const std::string& tag(int id) const { return id_to_tag_.at(static_cast<size_t>(id)); }
    const std::vector<std::string>& tags() const { return id_to_tag_; }

private:
    std::vector<std::string> id_to_tag_;
    std::map<std::string, int> tag_to_id_;
};

struct FineTuneOptions {
    int fixed_epochs = 5;      // used when no dev set is supplied
    int max_epochs = 50;       // cap under early stopping
    int patience = 10;         // epochs without dev improvement before halting
    double learning_rate = 5e-5;
    int batch_size = 8;
    uint64_t seed = 0;
    size_t seq_len = 0;        // 0 selects the encoder's max_positions
    bool average_subtokens = true;  // word vector: mean vs first subtoken
    AdamOptions adam;          // learning_rate above overrides adam.learning_rate
};

struct FineTuneReport {
    std::vector<double> epoch_losses;
    std::vector<double> dev_scores;
    int best_epoch = -1;  // 0-based index into dev_scores
    int epochs_run = 0;
};

struct PosModel {
    EncoderState encoder;
    Tensor head_w;  // [H, n_tags]
    Tensor head_b;  // [n_tags]
    TagSet tags;
    bool average_subtokens = true;
};

// Joint fine-tuning of the encoder and a linear softmax head over
// subtoken-averaged word representations. With a dev set, training stops
// after `patience` epochs without dev-accuracy improvement and the best-dev
// snapshot is returned; otherwise it runs fixed_epochs.
PosModel train_pos(const EncoderState& base, const SubwordVocab& vocab,
                   const std::vector<TaggedSentence>& train,
                   const std::vector<TaggedSentence>* dev,
                   const FineTuneOptions& opts, FineTuneReport* report = nullptr);

struct TagResult {
    std::vector<std::string> tags;
    uint32_t truncated_words = 0;  // tagged with the reserved tag
};

TagResult tag(const PosModel& model, const SubwordVocab& vocab,
              const std::vector<std::string>& tokens);

double evaluate_pos(const PosModel& model, const SubwordVocab& vocab,
                    const std::vector<TaggedSentence>& test);

void save_pos_model(const PosModel& model, const std::string& path);
PosModel load_pos_model(const std::string& path);

struct WsdModel {
    EncoderState encoder;
    Tensor head_w;  // [H, 2]
    Tensor head_b;  // [2]
    std::string headword;
    bool average_subtokens = true;
};

// One binary model per headword, classifying from the representation of the
// headword's first occurrence (case-folded match after enclitic splitting).
// Examples whose text does not contain the headword are rejected and
// counted. Early stopping follows the same dev policy as train_pos.
WsdModel train_wsd(const EncoderState& base, const SubwordVocab& vocab,
                   const Tokenizer& tok, const std::string& headword,
                   const std::vector<SenseExample>& examples,
                   const FineTuneOptions& opts, FineTuneReport* report = nullptr,
                   uint32_t* rejected = nullptr);

// -1 when the headword cannot be located in the text
int classify_wsd(const WsdModel& model, const SubwordVocab& vocab,
                 const Tokenizer& tok, const std::string& text);

struct WsdEvaluation {
    double overall = 0.0;  // micro-average over all test examples
    std::map<std::string, double> per_headword;
};

WsdEvaluation evaluate_wsd(const std::vector<WsdModel>& models,
                           const SubwordVocab& vocab, const Tokenizer& tok,
                           const std::vector<SenseExample>& test);

void save_wsd_model(const WsdModel& model, const std::string& path);
WsdModel load_wsd_model(const std::string& path);

struct EmbeddingDumpRecord {
    std::string sentence_id;
    uint32_t position = 0;  // word index within the sentence
    std::vector<Real> vector;
};

// Subtoken-averaged vectors for every occurrence of target_form, for
// external 2-D projection. layer -1 selects the final layer.
std::vector<EmbeddingDumpRecord> dump_embeddings(const EncoderState& state,
                                                 const SubwordVocab& vocab,
                                                 const std::vector<Sentence>& sentences,
                                                 const std::string& target_form,
                                                 int layer = -1);

void write_embedding_dump_csv(const std::string& path,
                              const std::vector<EmbeddingDumpRecord>& records);

}  // namespace latinlm
