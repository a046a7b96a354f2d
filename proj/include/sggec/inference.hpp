#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sggec/checkpoint.hpp"
#include "sggec/model.hpp"

namespace sggec {

struct InferenceError : std::runtime_error {
    explicit InferenceError(const std::string& message) : std::runtime_error(message) {}
};

// A loaded checkpoint ready to decode.
struct InferenceModel {
    ModelConfig cfg;
    Parameters params;
    BpeModel bpe;
    RelationVocab relations;
};

InferenceModel inference_model_from_checkpoint(const Checkpoint& checkpoint);

// Throws unless architectures, vocabularies, and relation sets agree.
void check_ensemble_compatible(const std::vector<const InferenceModel*>& models);

// A beam-search candidate: generated token ids (EOS-terminated once
// finished) and the accumulated log-probability.
struct Hypothesis {
    std::vector<int> ids;
    double log_prob = 0.0;
    bool finished = false;

    // length-normalized score used for ranking
    double score() const {
        return ids.empty() ? -1e30 : log_prob / static_cast<double>(ids.size());
    }
};

// Per-step next-token distribution for one source sentence under an
// ensemble: each model's mixture probabilities are averaged arithmetically
// (in double) before scoring. Construction runs the encoders once.
class StepScorer {
public:
    StepScorer(std::vector<const InferenceModel*> models, const DepTree& source_tree);

    // probabilities over the vocabulary for the token after `generated`
    std::vector<float> next_probs(const std::vector<int>& generated) const;

    // per-position log of the ensemble-averaged probability of each token of
    // `candidate` (teacher-forced), including the closing EOS
    std::vector<double> sequence_log_probs(const std::vector<int>& candidate) const;

    int vocab_size() const { return models_[0]->cfg.n_tokens; }
    const BpeModel& bpe() const { return models_[0]->bpe; }

private:
    std::vector<const InferenceModel*> models_;
    std::vector<EncoderOutput> encodings_;
};

// Standard beam search over the mixture distribution. PAD/BOS are never
// generated; hypotheses reaching max_len are force-finished with a scored
// EOS. Returns up to `beam` finished candidates, best normalized score first.
std::vector<Hypothesis> beam_search(const StepScorer& scorer, int beam, int max_len);

// Step-by-step argmax decoding under the same termination rules.
Hypothesis greedy_decode(const StepScorer& scorer, int max_len);

// Mean log-probability of a candidate under the scorer.
double mean_log_prob(const StepScorer& scorer, const std::vector<int>& candidate);

// Rescores candidates by the mean of the left-to-right score and the
// right-to-left score of the word-reversed candidate, then re-sorts.
std::vector<Hypothesis> r2l_rerank(const std::vector<Hypothesis>& candidates,
                                   const StepScorer& l2r, const StepScorer& r2l);

// Convenience wrapper: full correction of one tokenized sentence.
struct CorrectionResult {
    std::vector<std::string> words;
    std::vector<Hypothesis> nbest;
};

CorrectionResult correct_sentence(const std::vector<const InferenceModel*>& models,
                                  const DepTree& source_tree, int beam, int max_len,
                                  const std::vector<const InferenceModel*>& r2l_models = {});

}  // namespace sggec
