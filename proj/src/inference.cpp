#include "sggec/inference.hpp"

#include <algorithm>
#include <cmath>

#include "sggec/training.hpp"

namespace sggec {

InferenceModel inference_model_from_checkpoint(const Checkpoint& checkpoint) {
    TrainingRun run = restore_run(checkpoint);
    InferenceModel model;
    model.cfg = run.cfg.model;
    model.params = std::move(run.params);
    model.bpe = run.bpe;
    model.relations = run.relations;
    return model;
}

void check_ensemble_compatible(const std::vector<const InferenceModel*>& models) {
    if (models.empty()) {
        throw InferenceError("no models given");
    }
    const auto& head = *models[0];
    for (std::size_t i = 1; i < models.size(); ++i) {
        const auto& other = *models[i];
        if (head.cfg.to_kv() != other.cfg.to_kv()) {
            throw InferenceError("ensemble model " + std::to_string(i) +
                                 " has a different configuration");
        }
        if (!(head.bpe == other.bpe)) {
            throw InferenceError("ensemble model " + std::to_string(i) +
                                 " has a different vocabulary");
        }
        if (!(head.relations == other.relations)) {
            throw InferenceError("ensemble model " + std::to_string(i) +
                                 " has a different relation set");
        }
    }
}

StepScorer::StepScorer(std::vector<const InferenceModel*> models, const DepTree& source_tree)
    : models_(std::move(models)) {
    check_ensemble_compatible(models_);
    NoGradGuard no_grad;
    Rng dummy(0);
    const auto encoded = models_[0]->bpe.encode(source_tree.words);
    encodings_.reserve(models_.size());
    for (const auto* model : models_) {
        encodings_.push_back(encode_source<float>(encoded.ids, encoded.spans, source_tree,
                                                  model->params, model->cfg, RunMode::Eval,
                                                  dummy));
    }
}

std::vector<float> StepScorer::next_probs(const std::vector<int>& generated) const {
    NoGradGuard no_grad;
    Rng dummy(0);
    std::vector<int> prefix;
    prefix.reserve(generated.size() + 1);
    prefix.push_back(kBosId);
    prefix.insert(prefix.end(), generated.begin(), generated.end());
    const int v = vocab_size();
    std::vector<double> acc(v, 0.0);
    for (std::size_t m = 0; m < models_.size(); ++m) {
        const auto dec = decoder_forward<float>(prefix, encodings_[m], models_[m]->params,
                                                models_[m]->cfg, RunMode::Eval, dummy);
        const auto& probs = dec.mixed.data();
        const std::size_t last = (static_cast<std::size_t>(prefix.size()) - 1) * v;
        for (int j = 0; j < v; ++j) acc[j] += static_cast<double>(probs[last + j]);
    }
    std::vector<float> out(v);
    const double inv = 1.0 / static_cast<double>(models_.size());
    for (int j = 0; j < v; ++j) out[j] = static_cast<float>(acc[j] * inv);
    return out;
}

std::vector<double> StepScorer::sequence_log_probs(const std::vector<int>& candidate) const {
    NoGradGuard no_grad;
    Rng dummy(0);
    std::vector<int> prefix;
    prefix.reserve(candidate.size() + 1);
    prefix.push_back(kBosId);
    for (int id : candidate) {
        if (id != kEosId) prefix.push_back(id);
    }
    std::vector<int> targets(prefix.begin() + 1, prefix.end());
    targets.push_back(kEosId);
    const int v = vocab_size();
    std::vector<double> acc(targets.size(), 0.0);
    for (std::size_t m = 0; m < models_.size(); ++m) {
        const auto dec = decoder_forward<float>(prefix, encodings_[m], models_[m]->params,
                                                models_[m]->cfg, RunMode::Eval, dummy);
        const auto& probs = dec.mixed.data();
        for (std::size_t i = 0; i < targets.size(); ++i) {
            acc[i] += static_cast<double>(probs[i * v + targets[i]]);
        }
    }
    const double inv = 1.0 / static_cast<double>(models_.size());
    std::vector<double> out(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) {
        out[i] = std::log(acc[i] * inv + 1e-12);
    }
    return out;
}

namespace {

bool generatable(int id) { return id != kPadId && id != kBosId; }

void sort_by_score(std::vector<Hypothesis>& hyps) {
    std::stable_sort(hyps.begin(), hyps.end(),
                     [](const Hypothesis& a, const Hypothesis& b) { return a.score() > b.score(); });
}

}  // namespace

std::vector<Hypothesis> beam_search(const StepScorer& scorer, int beam, int max_len) {
    if (beam < 1) {
        throw InferenceError("beam must be >= 1");
    }
    const int v = scorer.vocab_size();
    std::vector<Hypothesis> live{Hypothesis{}};
    std::vector<Hypothesis> finished;

    for (int step = 1; step <= max_len && !live.empty(); ++step) {
        std::vector<Hypothesis> candidates;
        candidates.reserve(live.size() * static_cast<std::size_t>(v));
        for (const auto& hyp : live) {
            const auto probs = scorer.next_probs(hyp.ids);
            if (step == max_len) {
                // length cap: force-finish with a scored EOS
                Hypothesis forced = hyp;
                forced.ids.push_back(kEosId);
                forced.log_prob += std::log(static_cast<double>(probs[kEosId]) + 1e-12);
                forced.finished = true;
                candidates.push_back(std::move(forced));
                continue;
            }
            for (int token = 0; token < v; ++token) {
                if (!generatable(token)) continue;
                Hypothesis next = hyp;
                next.ids.push_back(token);
                next.log_prob += std::log(static_cast<double>(probs[token]) + 1e-12);
                next.finished = token == kEosId;
                candidates.push_back(std::move(next));
            }
        }
        // keep the top `beam` by cumulative log-probability; finished ones
        // retire and give up their slot
        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const Hypothesis& a, const Hypothesis& b) {
                             return a.log_prob > b.log_prob;
                         });
        if (static_cast<int>(candidates.size()) > beam) {
            candidates.resize(beam);
        }
        live.clear();
        for (auto& hyp : candidates) {
            if (hyp.finished) {
                finished.push_back(std::move(hyp));
            } else {
                live.push_back(std::move(hyp));
            }
        }
    }
    sort_by_score(finished);
    if (static_cast<int>(finished.size()) > beam) {
        finished.resize(beam);
    }
    return finished;
}

Hypothesis greedy_decode(const StepScorer& scorer, int max_len) {
    const int v = scorer.vocab_size();
    Hypothesis hyp;
    for (int step = 1; step <= max_len; ++step) {
        const auto probs = scorer.next_probs(hyp.ids);
        int best = kEosId;
        if (step < max_len) {
            best = -1;
            float best_prob = 0.0f;
            for (int token = 0; token < v; ++token) {
                if (!generatable(token)) continue;
                if (best < 0 || probs[token] > best_prob) {
                    best = token;
                    best_prob = probs[token];
                }
            }
        }
        hyp.ids.push_back(best);
        hyp.log_prob += std::log(static_cast<double>(probs[best]) + 1e-12);
        if (best == kEosId) {
            hyp.finished = true;
            break;
        }
    }
    return hyp;
}

double mean_log_prob(const StepScorer& scorer, const std::vector<int>& candidate) {
    const auto log_probs = scorer.sequence_log_probs(candidate);
    double sum = 0.0;
    for (double lp : log_probs) sum += lp;
    return sum / static_cast<double>(log_probs.size());
}

std::vector<Hypothesis> r2l_rerank(const std::vector<Hypothesis>& candidates,
                                   const StepScorer& l2r, const StepScorer& r2l) {
    if (candidates.empty()) {
        throw InferenceError("r2l_rerank: no candidates");
    }
    std::vector<Hypothesis> out = candidates;
    const auto& bpe = l2r.bpe();
    for (auto& hyp : out) {
        auto words = bpe.decode(hyp.ids);
        std::reverse(words.begin(), words.end());
        const auto reversed = bpe.encode(words);
        std::vector<int> reversed_ids(reversed.ids.begin() + 1, reversed.ids.end() - 1);
        const double l2r_score = mean_log_prob(l2r, hyp.ids);
        const double r2l_score = mean_log_prob(r2l, reversed_ids);
        const double combined = 0.5 * (l2r_score + r2l_score);
        // reuse the normalized-score channel for the combined score
        hyp.log_prob = combined * static_cast<double>(hyp.ids.size());
    }
    sort_by_score(out);
    return out;
}

CorrectionResult correct_sentence(const std::vector<const InferenceModel*>& models,
                                  const DepTree& source_tree, int beam, int max_len,
                                  const std::vector<const InferenceModel*>& r2l_models) {
    StepScorer scorer(models, source_tree);
    CorrectionResult result;
    result.nbest = beam_search(scorer, beam, max_len);
    if (result.nbest.empty()) {
        throw InferenceError("beam search returned no hypotheses");
    }
    if (!r2l_models.empty()) {
        StepScorer r2l(r2l_models, source_tree);
        result.nbest = r2l_rerank(result.nbest, scorer, r2l);
    }
    result.words = models[0]->bpe.decode(result.nbest.front().ids);
    return result;
}

}  // namespace sggec
