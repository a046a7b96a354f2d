#include "sggec/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace sggec {

// ---------------------------------------------------------------------------
// data plumbing
// ---------------------------------------------------------------------------

EncodedExample encode_example(const TrainExample& example, const BpeModel& bpe,
                              bool reverse_target) {
    EncodedExample out;
    out.src_tree = example.src_tree;
    const auto src = bpe.encode(example.src_tree.words);
    out.src_ids = src.ids;
    out.src_spans = src.spans;
    out.tgt_tree = reverse_target ? reverse_tree(example.tgt_tree) : example.tgt_tree;
    const auto tgt = bpe.encode(out.tgt_tree.words);
    out.tgt_ids = tgt.ids;
    out.tgt_spans = tgt.spans;
    return out;
}

std::vector<std::vector<int>> make_batches(const std::vector<EncodedExample>& examples,
                                           int batch_tokens) {
    std::vector<int> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    auto cost = [&](int i) {
        return static_cast<int>(examples[i].src_ids.size() + examples[i].tgt_ids.size());
    };
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return cost(a) < cost(b); });
    std::vector<std::vector<int>> batches;
    std::vector<int> current;
    int current_tokens = 0;
    for (int index : order) {
        if (!current.empty() && current_tokens + cost(index) > batch_tokens) {
            batches.push_back(std::move(current));
            current = {};
            current_tokens = 0;
        }
        current.push_back(index);
        current_tokens += cost(index);
    }
    if (!current.empty()) batches.push_back(std::move(current));
    return batches;
}

namespace {

std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw TrainingError("cannot open '" + path + "'");
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

}  // namespace

void write_corpus(const std::string& prefix, const std::vector<TrainExample>& examples,
                  const RelationVocab& vocab) {
    std::ofstream tsv(prefix + ".tsv", std::ios::trunc);
    std::ofstream src(prefix + ".src.conllu", std::ios::trunc);
    std::ofstream tgt(prefix + ".tgt.conllu", std::ios::trunc);
    if (!tsv || !src || !tgt) {
        throw TrainingError("cannot write corpus files with prefix '" + prefix + "'");
    }
    for (const auto& example : examples) {
        tsv << join_words(example.src_tree.words) << '\t' << join_words(example.tgt_tree.words)
            << '\n';
        src << serialize_conllu(example.src_tree, vocab);
        tgt << serialize_conllu(example.tgt_tree, vocab);
    }
}

std::vector<TrainExample> read_corpus(const std::string& prefix, const RelationVocab& vocab) {
    const auto src_trees = parse_conllu(read_file(prefix + ".src.conllu"), vocab);
    const auto tgt_trees = parse_conllu(read_file(prefix + ".tgt.conllu"), vocab);
    const std::string tsv = read_file(prefix + ".tsv");
    std::vector<std::pair<std::string, std::string>> rows;
    std::istringstream stream(tsv);
    std::string line;
    while (std::getline(stream, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw TrainingError("corpus row without a tab: '" + line + "'");
        }
        rows.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    if (rows.size() != src_trees.size() || rows.size() != tgt_trees.size()) {
        throw TrainingError("corpus '" + prefix + "': sentence counts disagree (tsv " +
                            std::to_string(rows.size()) + ", src trees " +
                            std::to_string(src_trees.size()) + ", tgt trees " +
                            std::to_string(tgt_trees.size()) + ")");
    }
    std::vector<TrainExample> out;
    out.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (join_words(src_trees[i].words) != rows[i].first ||
            join_words(tgt_trees[i].words) != rows[i].second) {
            throw TrainingError("corpus '" + prefix + "': sentence " + std::to_string(i) +
                                " disagrees with its tree sidecar");
        }
        out.push_back(TrainExample{src_trees[i], tgt_trees[i]});
    }
    return out;
}

// ---------------------------------------------------------------------------
// stage plan
// ---------------------------------------------------------------------------

StagePlan parse_stage_plan(const std::string& text) {
    StagePlan plan;
    std::istringstream stream(text);
    std::string spec;
    while (std::getline(stream, spec, ',')) {
        if (spec.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream parts(spec);
        std::string field;
        while (std::getline(parts, field, ':')) fields.push_back(field);
        if (fields.size() != 4) {
            throw ConfigError("stage '" + spec + "': expected dataset:selector:epochs:lr");
        }
        Stage stage;
        stage.dataset = fields[0];
        if (fields[1] == "all") {
            stage.errors_only = false;
        } else if (fields[1] == "errors") {
            stage.errors_only = true;
        } else {
            throw ConfigError("stage selector '" + fields[1] + "' must be 'all' or 'errors'");
        }
        try {
            stage.epochs = std::stoi(fields[2]);
            stage.learning_rate = std::stof(fields[3]);
        } catch (const std::exception&) {
            throw ConfigError("stage '" + spec + "': bad epochs or learning rate");
        }
        if (stage.epochs < 1 || stage.learning_rate <= 0.0f) {
            throw ConfigError("stage '" + spec + "': epochs must be >= 1 and lr > 0");
        }
        plan.push_back(std::move(stage));
    }
    if (plan.empty()) {
        throw ConfigError("stage plan is empty");
    }
    return plan;
}

// ---------------------------------------------------------------------------
// the training loop
// ---------------------------------------------------------------------------

TrainingRun init_run(const RunConfig& cfg, const RelationVocab& relations,
                     const std::vector<const std::vector<TrainExample>*>& corpora) {
    TrainingRun run;
    run.cfg = cfg;
    run.relations = relations;
    std::vector<std::string> words;
    for (const auto* corpus : corpora) {
        for (const auto& example : *corpus) {
            words.insert(words.end(), example.src_tree.words.begin(),
                         example.src_tree.words.end());
            words.insert(words.end(), example.tgt_tree.words.begin(),
                         example.tgt_tree.words.end());
        }
    }
    run.bpe = BpeModel::train(words, cfg.model.bpe_vocab);
    run.cfg.model.n_tokens = run.bpe.vocab_size();
    run.cfg.model.n_relations = relations.size();
    Rng init_rng(Rng::derive(cfg.seed, 0));
    run.params = build_parameters<float>(run.cfg.model, init_rng);
    run.adam.learning_rate = cfg.learning_rate;
    return run;
}

long run_stages(TrainingRun& run, const std::map<std::string, std::vector<TrainExample>>& datasets,
                const StagePlan& plan, long step_limit, std::ostream* log,
                std::vector<TrainLogEntry>* entries) {
    if (plan.empty()) {
        throw TrainingError("stage plan is empty");
    }
    run.cfg.validate();
    long executed = 0;
    for (; run.stage_index < static_cast<int>(plan.size()); ++run.stage_index) {
        const Stage& stage = plan[run.stage_index];
        const auto it = datasets.find(stage.dataset);
        if (it == datasets.end()) {
            throw TrainingError("stage references unknown dataset '" + stage.dataset + "'");
        }
        std::vector<const TrainExample*> selected;
        for (const auto& example : it->second) {
            if (stage.errors_only && example.src_tree.words == example.tgt_tree.words) continue;
            selected.push_back(&example);
        }
        if (selected.empty()) {
            throw TrainingError("stage " + std::to_string(run.stage_index + 1) + " over '" +
                                stage.dataset + "' selected no examples");
        }
        std::vector<EncodedExample> encoded;
        encoded.reserve(selected.size());
        for (const auto* example : selected) {
            encoded.push_back(encode_example(*example, run.bpe, run.cfg.model.reverse_target));
        }
        const auto batches = make_batches(encoded, run.cfg.batch_tokens);
        run.adam.learning_rate = stage.learning_rate;

        for (; run.epoch_index < stage.epochs; ++run.epoch_index) {
            std::vector<int> order(batches.size());
            std::iota(order.begin(), order.end(), 0);
            Rng shuffle_rng(Rng::derive(run.cfg.seed,
                                        0x70ffe100ull + 1024ull * run.stage_index +
                                            static_cast<std::uint64_t>(run.epoch_index)));
            for (std::size_t i = order.size(); i > 1; --i) {
                std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
            }
            for (; run.batch_index < static_cast<int>(batches.size()); ++run.batch_index) {
                if (step_limit >= 0 && executed >= step_limit) {
                    return executed;
                }
                std::vector<const EncodedExample*> batch;
                for (int index : batches[order[run.batch_index]]) {
                    batch.push_back(&encoded[index]);
                }
                Rng step_rng(Rng::derive(run.cfg.seed, 0xadd0ull + run.global_step));
                run.params.zero_grad();
                const auto loss =
                    total_loss<float>(batch, run.bpe, run.params, run.cfg.model,
                                      run.cfg.treecorr_pair_cap, RunMode::Train, step_rng);
                if (!std::isfinite(loss.total_value)) {
                    throw DivergenceError("non-finite loss at step " +
                                          std::to_string(run.global_step + 1));
                }
                backward(loss.total);
                adam_step(run.params, run.adam);
                ++run.global_step;
                ++executed;
                TrainLogEntry entry{run.global_step, run.stage_index + 1, loss.total_value,
                                    loss.gec_value,  loss.rel_value,      loss.dist_value};
                entry.anc = loss.anc_value;
                if (entries) entries->push_back(entry);
                if (log) {
                    (*log) << entry.step << '\t' << entry.stage << '\t' << entry.total << '\t'
                           << entry.gec << '\t' << entry.rel << '\t' << entry.dist << '\t'
                           << entry.anc << '\n';
                }
            }
            run.batch_index = 0;
        }
        run.epoch_index = 0;
    }
    return executed;
}

// ---------------------------------------------------------------------------
// checkpointing
// ---------------------------------------------------------------------------

namespace {

std::string escape_newlines(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) out += (c == '\n') ? '\x1e' : c;
    return out;
}

std::string unescape_newlines(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) out += (c == '\x1e') ? '\n' : c;
    return out;
}

std::string format_float(float v) {
    std::ostringstream os;
    os.precision(9);
    os << v;
    return os.str();
}

}  // namespace

Checkpoint make_checkpoint(const TrainingRun& run) {
    Checkpoint checkpoint;
    std::ostringstream config;
    config << run.cfg.model.to_kv();
    config << "seed=" << run.cfg.seed << '\n';
    config << "learning_rate=" << format_float(run.cfg.learning_rate) << '\n';
    config << "batch_tokens=" << run.cfg.batch_tokens << '\n';
    config << "treecorr_pair_cap=" << run.cfg.treecorr_pair_cap << '\n';
    config << "p_agreement=" << format_float(run.cfg.p_agreement) << '\n';
    config << "p_tense=" << format_float(run.cfg.p_tense) << '\n';
    config << "p_article_drop=" << format_float(run.cfg.p_article_drop) << '\n';
    config << "p_article_insert=" << format_float(run.cfg.p_article_insert) << '\n';
    config << "p_swap=" << format_float(run.cfg.p_swap) << '\n';
    config << "p_delete=" << format_float(run.cfg.p_delete) << '\n';
    config << "relations=" << run.relations.serialize() << '\n';
    config << "bpe=" << escape_newlines(run.bpe.serialize()) << '\n';
    config << "optim.step=" << run.global_step << '\n';
    config << "optim.stage=" << run.stage_index << '\n';
    config << "optim.epoch=" << run.epoch_index << '\n';
    config << "optim.batch=" << run.batch_index << '\n';
    config << "optim.adam_lr=" << format_float(run.adam.learning_rate) << '\n';
    checkpoint.config = config.str();
    for (const auto& [name, tensor] : run.params) {
        checkpoint.tensors.emplace(name, Tensor::from_data(tensor.shape(), tensor.data()));
    }
    for (const auto& [name, moment] : run.adam.moment1) {
        checkpoint.tensors.emplace("optim.m." + name,
                                   Tensor::from_data({static_cast<int>(moment.size())}, moment));
    }
    for (const auto& [name, moment] : run.adam.moment2) {
        checkpoint.tensors.emplace("optim.v." + name,
                                   Tensor::from_data({static_cast<int>(moment.size())}, moment));
    }
    return checkpoint;
}

TrainingRun restore_run(const Checkpoint& checkpoint) {
    auto kv = parse_kv(checkpoint.config);
    auto take = [&](const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) {
            throw TrainingError("checkpoint config misses key '" + key + "'");
        }
        const std::string value = it->second;
        kv.erase(it);
        return value;
    };
    TrainingRun run;
    run.relations = RelationVocab::deserialize(take("relations"));
    run.bpe = BpeModel::deserialize(unescape_newlines(take("bpe")));
    run.global_step = std::stol(take("optim.step"));
    run.stage_index = std::stoi(take("optim.stage"));
    run.epoch_index = std::stoi(take("optim.epoch"));
    run.batch_index = std::stoi(take("optim.batch"));
    const float adam_lr = std::stof(take("optim.adam_lr"));

    std::string remaining;
    for (const auto& [key, value] : kv) {
        remaining += key + "=" + value + "\n";
    }
    run.cfg = run_config_from_text(remaining);
    run.params = checkpoint_model_parameters(checkpoint);
    run.adam.learning_rate = adam_lr;
    run.adam.step = run.global_step;
    for (const auto& [name, tensor] : checkpoint.tensors) {
        if (name.rfind("optim.m.", 0) == 0) {
            run.adam.moment1[name.substr(8)] = tensor.data();
        } else if (name.rfind("optim.v.", 0) == 0) {
            run.adam.moment2[name.substr(8)] = tensor.data();
        }
    }
    return run;
}

}  // namespace sggec
