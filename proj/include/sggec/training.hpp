#pragma once

#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "sggec/adam.hpp"
#include "sggec/checkpoint.hpp"
#include "sggec/config.hpp"
#include "sggec/model.hpp"

namespace sggec {

struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& message) : std::runtime_error(message) {}
};

struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& message) : std::runtime_error(message) {}
};

// One sentence pair with gold trees on both sides; words live in the trees.
struct TrainExample {
    DepTree src_tree;
    DepTree tgt_tree;
};

// ---------------------------------------------------------------------------
// synthetic corpus (stands in for the large augmented datasets)
// ---------------------------------------------------------------------------

// Relation labels the generator emits; a superset of what the templates use
// so fixtures parse against the same vocabulary.
const RelationVocab& synthetic_relation_vocab();

struct CorruptionProfile {
    float p_agreement = 0.25f;
    float p_tense = 0.15f;
    float p_article_drop = 0.10f;
    float p_article_insert = 0.05f;
    float p_swap = 0.05f;
    float p_delete = 0.05f;
    bool force_present = false;  // agreement-only profiles need visible flips

    static CorruptionProfile none();
    static CorruptionProfile agreement_only();
    static CorruptionProfile from_config(const RunConfig& cfg);
    static CorruptionProfile named(const std::string& name, const RunConfig& cfg);
};

// Samples grammatical sentences from a template grammar whose derivations
// carry gold dependency trees, then corrupts the source side. The source
// tree is rebuilt from the corrupted derivation.
std::vector<TrainExample> synth_corpus(const CorruptionProfile& profile, Rng& rng, int count);

// The running example sentence pair, with hand-built trees.
TrainExample case_study_pair();

// ---------------------------------------------------------------------------
// data plumbing
// ---------------------------------------------------------------------------

EncodedExample encode_example(const TrainExample& example, const BpeModel& bpe,
                              bool reverse_target);

// Token-budget batches over length-sorted examples; every batch holds at
// least one example.
std::vector<std::vector<int>> make_batches(const std::vector<EncodedExample>& examples,
                                           int batch_tokens);

// Corpus files: "<prefix>.tsv" with source<TAB>target plus
// "<prefix>.src.conllu" / "<prefix>.tgt.conllu" sidecars aligned by index.
void write_corpus(const std::string& prefix, const std::vector<TrainExample>& examples,
                  const RelationVocab& vocab);
std::vector<TrainExample> read_corpus(const std::string& prefix, const RelationVocab& vocab);

// ---------------------------------------------------------------------------
// staged training
// ---------------------------------------------------------------------------

struct Stage {
    std::string dataset;
    bool errors_only = false;  // keep only pairs whose sides differ
    int epochs = 1;
    float learning_rate = 1e-4f;
};
using StagePlan = std::vector<Stage>;

// "dataset:selector:epochs:lr[,...]" with selector in {all, errors}
StagePlan parse_stage_plan(const std::string& text);

struct TrainLogEntry {
    long step = 0;
    int stage = 0;
    double total = 0.0, gec = 0.0, rel = 0.0, dist = 0.0, anc = 0.0;
};

// Mutable training state; everything a resumed run needs.
struct TrainingRun {
    RunConfig cfg;
    BpeModel bpe;
    RelationVocab relations;
    Parameters params;
    AdamState adam;
    long global_step = 0;
    int stage_index = 0;
    int epoch_index = 0;
    int batch_index = 0;
};

// Builds a fresh run: trains the tokenizer on both sides of the corpus and
// initializes parameters from the seed.
TrainingRun init_run(const RunConfig& cfg, const RelationVocab& relations,
                     const std::vector<const std::vector<TrainExample>*>& corpora);

// Executes the plan from the run's cursor. Returns executed step count;
// stops early when step_limit (>= 0) is hit. Log lines (TSV) go to `log`
// when given; entries are appended to `entries` when given.
long run_stages(TrainingRun& run, const std::map<std::string, std::vector<TrainExample>>& datasets,
                const StagePlan& plan, long step_limit = -1, std::ostream* log = nullptr,
                std::vector<TrainLogEntry>* entries = nullptr);

// Checkpoint round trip, including optimizer state and the resume cursor.
Checkpoint make_checkpoint(const TrainingRun& run);
TrainingRun restore_run(const Checkpoint& checkpoint);

}  // namespace sggec
