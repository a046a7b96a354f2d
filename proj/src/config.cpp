#include "sggec/config.hpp"

#include <array>
#include <sstream>

namespace sggec {

void ModelConfig::validate() const {
    if (d_model <= 0 || d_ff <= 0) {
        throw ConfigError("d_model and d_ff must be positive");
    }
    if (heads <= 0 || d_model % heads != 0) {
        throw ConfigError("d_model must be divisible by heads");
    }
    if (graph_heads <= 0 || d_model % graph_heads != 0) {
        throw ConfigError("d_model must be divisible by graph_heads");
    }
    if (enc_layers < 1 || graph_layers < 0 || dec_layers < 1) {
        throw ConfigError("layer counts must be at least 1 (graph_layers may be 0)");
    }
    if (beta < 0.0f || beta > 1.0f) {
        throw ConfigError("beta must lie in [0,1]");
    }
    if (lambda_rel < 0.0f || lambda_dist < 0.0f || lambda_anc < 0.0f) {
        throw ConfigError("lambda weights must be non-negative");
    }
    if (dropout < 0.0f || dropout >= 1.0f) {
        throw ConfigError("dropout must lie in [0,1)");
    }
    if (beam < 1) {
        throw ConfigError("beam must be at least 1");
    }
    if (max_distance < 1) {
        throw ConfigError("max_distance must be at least 1");
    }
    if (max_len < 2) {
        throw ConfigError("max_len must be at least 2");
    }
}

namespace {

int parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected integer, got '" + value + "'");
    }
}

float parse_float(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const float v = std::stof(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected number, got '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("key '" + key + "': expected true/false, got '" + value + "'");
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected unsigned integer, got '" + value + "'");
    }
}

std::string format_float(float v) {
    std::ostringstream os;
    os.precision(9);
    os << v;
    return os.str();
}

bool apply_model_key(ModelConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "d_model") cfg.d_model = parse_int(key, value);
    else if (key == "d_ff") cfg.d_ff = parse_int(key, value);
    else if (key == "heads") cfg.heads = parse_int(key, value);
    else if (key == "graph_heads") cfg.graph_heads = parse_int(key, value);
    else if (key == "enc_layers") cfg.enc_layers = parse_int(key, value);
    else if (key == "graph_layers") cfg.graph_layers = parse_int(key, value);
    else if (key == "dec_layers") cfg.dec_layers = parse_int(key, value);
    else if (key == "beta") cfg.beta = parse_float(key, value);
    else if (key == "lambda_rel") cfg.lambda_rel = parse_float(key, value);
    else if (key == "lambda_dist") cfg.lambda_dist = parse_float(key, value);
    else if (key == "lambda_anc") cfg.lambda_anc = parse_float(key, value);
    else if (key == "dropout") cfg.dropout = parse_float(key, value);
    else if (key == "beam") cfg.beam = parse_int(key, value);
    else if (key == "max_distance") cfg.max_distance = parse_int(key, value);
    else if (key == "bpe_vocab") cfg.bpe_vocab = parse_int(key, value);
    else if (key == "max_len") cfg.max_len = parse_int(key, value);
    else if (key == "reverse_target") cfg.reverse_target = parse_bool(key, value);
    else if (key == "n_tokens") cfg.n_tokens = parse_int(key, value);
    else if (key == "n_relations") cfg.n_relations = parse_int(key, value);
    else return false;
    return true;
}

}  // namespace

std::string ModelConfig::to_kv() const {
    std::ostringstream out;
    out << "d_model=" << d_model << '\n';
    out << "d_ff=" << d_ff << '\n';
    out << "heads=" << heads << '\n';
    out << "graph_heads=" << graph_heads << '\n';
    out << "enc_layers=" << enc_layers << '\n';
    out << "graph_layers=" << graph_layers << '\n';
    out << "dec_layers=" << dec_layers << '\n';
    out << "beta=" << format_float(beta) << '\n';
    out << "lambda_rel=" << format_float(lambda_rel) << '\n';
    out << "lambda_dist=" << format_float(lambda_dist) << '\n';
    out << "lambda_anc=" << format_float(lambda_anc) << '\n';
    out << "dropout=" << format_float(dropout) << '\n';
    out << "beam=" << beam << '\n';
    out << "max_distance=" << max_distance << '\n';
    out << "bpe_vocab=" << bpe_vocab << '\n';
    out << "max_len=" << max_len << '\n';
    out << "reverse_target=" << (reverse_target ? "true" : "false") << '\n';
    out << "n_tokens=" << n_tokens << '\n';
    out << "n_relations=" << n_relations << '\n';
    return out.str();
}

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
    ModelConfig cfg;
    for (const auto& [key, value] : kv) {
        apply_model_key(cfg, key, value);  // foreign keys are the caller's business
    }
    cfg.validate();
    return cfg;
}

void RunConfig::validate() const {
    model.validate();
    if (learning_rate <= 0.0f) {
        throw ConfigError("learning_rate must be positive");
    }
    if (batch_tokens < 4) {
        throw ConfigError("batch_tokens too small");
    }
    if (treecorr_pair_cap < 1) {
        throw ConfigError("treecorr_pair_cap must be at least 1");
    }
    for (float p : {p_agreement, p_tense, p_article_drop, p_article_insert, p_swap, p_delete}) {
        if (p < 0.0f || p > 1.0f) {
            throw ConfigError("corruption probabilities must lie in [0,1]");
        }
    }
}

std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream stream(text);
    std::string line;
    int line_number = 0;
    while (std::getline(stream, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError("line " + std::to_string(line_number) +
                              ": expected key=value, got '" + line + "'");
        }
        const std::string key = line.substr(0, eq);
        if (out.count(key)) {
            throw ConfigError("duplicate key '" + key + "'");
        }
        out[key] = line.substr(eq + 1);
    }
    return out;
}

RunConfig run_config_from_text(const std::string& text) {
    RunConfig cfg;
    for (const auto& [key, value] : parse_kv(text)) {
        if (apply_model_key(cfg.model, key, value)) continue;
        if (key == "seed") cfg.seed = parse_u64(key, value);
        else if (key == "learning_rate") cfg.learning_rate = parse_float(key, value);
        else if (key == "batch_tokens") cfg.batch_tokens = parse_int(key, value);
        else if (key == "treecorr_pair_cap") cfg.treecorr_pair_cap = parse_int(key, value);
        else if (key == "p_agreement") cfg.p_agreement = parse_float(key, value);
        else if (key == "p_tense") cfg.p_tense = parse_float(key, value);
        else if (key == "p_article_drop") cfg.p_article_drop = parse_float(key, value);
        else if (key == "p_article_insert") cfg.p_article_insert = parse_float(key, value);
        else if (key == "p_swap") cfg.p_swap = parse_float(key, value);
        else if (key == "p_delete") cfg.p_delete = parse_float(key, value);
        else throw ConfigError("unknown config key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

std::vector<std::array<std::string, 3>> run_config_key_docs() {
    const RunConfig d;
    return {
        {"d_model", "model width", std::to_string(d.model.d_model)},
        {"d_ff", "feed-forward inner width", std::to_string(d.model.d_ff)},
        {"heads", "self-attention heads", std::to_string(d.model.heads)},
        {"graph_heads", "graph-attention heads", std::to_string(d.model.graph_heads)},
        {"enc_layers", "sentence-encoder layers", std::to_string(d.model.enc_layers)},
        {"graph_layers", "syntax-guided encoder layers", std::to_string(d.model.graph_layers)},
        {"dec_layers", "decoder layers", std::to_string(d.model.dec_layers)},
        {"beta", "dual-context blend weight", format_float(d.model.beta)},
        {"lambda_rel", "relation-prediction loss weight", format_float(d.model.lambda_rel)},
        {"lambda_dist", "distance-prediction loss weight", format_float(d.model.lambda_dist)},
        {"lambda_anc", "ancestor-prediction loss weight", format_float(d.model.lambda_anc)},
        {"dropout", "dropout rate", format_float(d.model.dropout)},
        {"beam", "beam size", std::to_string(d.model.beam)},
        {"max_distance", "tree-distance clamp", std::to_string(d.model.max_distance)},
        {"bpe_vocab", "requested BPE vocabulary size", std::to_string(d.model.bpe_vocab)},
        {"max_len", "decoding length cap", std::to_string(d.model.max_len)},
        {"reverse_target", "train on reversed targets", "false"},
        {"seed", "master random seed", std::to_string(d.seed)},
        {"learning_rate", "Adam learning rate", format_float(d.learning_rate)},
        {"batch_tokens", "sub-word tokens per batch", std::to_string(d.batch_tokens)},
        {"treecorr_pair_cap", "overlap size above which pairs are sampled",
         std::to_string(d.treecorr_pair_cap)},
        {"p_agreement", "agreement-flip corruption probability", format_float(d.p_agreement)},
        {"p_tense", "tense-swap corruption probability", format_float(d.p_tense)},
        {"p_article_drop", "article-drop corruption probability", format_float(d.p_article_drop)},
        {"p_article_insert", "article-insert corruption probability",
         format_float(d.p_article_insert)},
        {"p_swap", "adjacent-swap corruption probability", format_float(d.p_swap)},
        {"p_delete", "leaf-deletion corruption probability", format_float(d.p_delete)},
    };
}

}  // namespace sggec
