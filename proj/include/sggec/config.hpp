#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace sggec {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& message) : std::runtime_error(message) {}
};

// Architecture and objective hyperparameters. Defaults follow the reference
// setup; desk-scale runs override them through the config file.
struct ModelConfig {
    int d_model = 512;
    int d_ff = 2048;
    int heads = 8;         // self-attention heads
    int graph_heads = 4;   // graph-attention heads T
    int enc_layers = 6;    // L1
    int graph_layers = 3;  // L2
    int dec_layers = 6;    // L3
    float beta = 0.5f;     // dual context aggregation weight
    float lambda_rel = 0.5f;
    float lambda_dist = 0.1f;
    float lambda_anc = 0.1f;
    float dropout = 0.1f;
    int beam = 5;
    int max_distance = 16;  // distance clamp D
    int bpe_vocab = 8000;   // requested BPE vocabulary size
    int max_len = 64;       // decoding length cap (generated tokens incl. EOS)
    bool reverse_target = false;

    // resolved against the trained tokenizer / relation vocabulary
    int n_tokens = 0;     // actual token vocabulary size
    int n_relations = 0;  // number of relation labels L

    int head_dim() const { return d_model / heads; }
    int graph_head_dim() const { return d_model / graph_heads; }

    void validate() const;

    std::string to_kv() const;
    static ModelConfig from_kv(const std::map<std::string, std::string>& kv);
};

// Full run settings: model plus training/generation knobs.
struct RunConfig {
    ModelConfig model;
    std::uint64_t seed = 1;
    float learning_rate = 1e-4f;
    int batch_tokens = 1000;
    int treecorr_pair_cap = 20;

    // corruption probabilities for the synthetic corpus
    float p_agreement = 0.25f;
    float p_tense = 0.15f;
    float p_article_drop = 0.10f;
    float p_article_insert = 0.05f;
    float p_swap = 0.05f;
    float p_delete = 0.05f;

    void validate() const;
};

// key=value text: one pair per line, '#' starts a comment, blank lines ignored.
std::map<std::string, std::string> parse_kv(const std::string& text);

// Loads a RunConfig from key=value text. Unknown keys are rejected.
RunConfig run_config_from_text(const std::string& text);

// `key description default` triples for --help output.
std::vector<std::array<std::string, 3>> run_config_key_docs();

}  // namespace sggec
