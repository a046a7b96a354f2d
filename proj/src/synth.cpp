#include <algorithm>

#include "sggec/training.hpp"

namespace sggec {

// ---------------------------------------------------------------------------
// lexicon
// ---------------------------------------------------------------------------

namespace {

struct NounEntry {
    const char* sg;
    const char* pl;
};
struct VerbEntry {
    const char* base;
    const char* third;
    const char* past;
    bool transitive;
};

const NounEntry kNouns[] = {{"cat", "cats"},       {"dog", "dogs"},

                            {"boy", "boys"},       {"girl", "girls"},
                            {"teacher", "teachers"}, {"student", "students"},
                            {"farmer", "farmers"}, {"bird", "birds"}};

const VerbEntry kVerbs[] = {{"walk", "walks", "walked", false},
                            {"smile", "smiles", "smiled", false},
                            {"jump", "jumps", "jumped", false},
                            {"play", "plays", "played", false},
                            {"like", "likes", "liked", true},
                            {"help", "helps", "helped", true},
                            {"watch", "watches", "watched", true},
                            {"follow", "follows", "followed", true}};

const char* kAdjectives[] = {"small", "old", "happy", "young"};
const char* kPrepositions[] = {"in", "near", "with"};
const char* kDeterminers[] = {"the", "a"};

const char* verb_form(const VerbEntry& verb, bool past, bool plural_subject) {
    if (past) return verb.past;
    return plural_subject ? verb.base : verb.third;
}

enum class Tag { Noun, Verb, Det, Adj, Prep, Pron, Punct };

struct DerivNode {
    std::string word;
    int parent = -1;  // -1 = virtual root
    int label = 0;
    Tag tag = Tag::Noun;
    int lex = -1;
    bool plural = false;        // nouns
    bool past = false;          // verbs
    bool subj_plural = false;   // verbs: number they agree with
};

int label_id(const char* name) { return synthetic_relation_vocab().id(name); }

// ---------------------------------------------------------------------------
// derivation edits
// ---------------------------------------------------------------------------

void remove_leaf(std::vector<DerivNode>& nodes, int index) {
    nodes.erase(nodes.begin() + index);
    for (auto& node : nodes) {
        if (node.parent > index) --node.parent;
    }
}

void insert_node(std::vector<DerivNode>& nodes, int position, DerivNode node) {
    if (node.parent >= position) ++node.parent;
    for (auto& existing : nodes) {
        if (existing.parent >= position) ++existing.parent;
    }
    nodes.insert(nodes.begin() + position, std::move(node));
}

void swap_adjacent(std::vector<DerivNode>& nodes, int i) {
    std::swap(nodes[i], nodes[i + 1]);
    for (auto& node : nodes) {
        if (node.parent == i) {
            node.parent = i + 1;
        } else if (node.parent == i + 1) {
            node.parent = i;
        }
    }
}

std::vector<int> children_of(const std::vector<DerivNode>& nodes, int index) {
    std::vector<int> out;
    for (int k = 0; k < static_cast<int>(nodes.size()); ++k) {
        if (nodes[k].parent == index) out.push_back(k);
    }
    return out;
}

DepTree to_tree(const std::vector<DerivNode>& nodes) {
    DepTree tree;
    for (const auto& node : nodes) {
        tree.words.push_back(node.word);
        tree.heads.push_back(node.parent < 0 ? 0 : node.parent + 1);
        tree.labels.push_back(node.label);
    }
    tree.validate(synthetic_relation_vocab().size());
    return tree;
}

// ---------------------------------------------------------------------------
// grammar
// ---------------------------------------------------------------------------

struct SentenceBuilder {
    std::vector<DerivNode> nodes;
    Rng& rng;
    bool past;

    explicit SentenceBuilder(Rng& r, bool past_tense) : rng(r), past(past_tense) {}

    int append(DerivNode node) {
        nodes.push_back(std::move(node));
        return static_cast<int>(nodes.size()) - 1;
    }

    // Det [Adj] N, optionally bare-plural. Returns the noun index; the
    // caller patches noun.parent when the head comes later.
    int simple_np(int parent, int label) {
        const bool plural = rng.bernoulli(0.4);
        const bool bare = plural && rng.bernoulli(0.5);
        const int det_slot = bare ? -1 : static_cast<int>(rng.uniform_int(2));
        const bool with_adj = rng.bernoulli(0.35);
        int det_index = -1, adj_index = -1;
        if (det_slot >= 0) {
            det_index = append({plural ? "the" : kDeterminers[det_slot], -1, label_id("det"),
                                Tag::Det, -1, false, false, false});
        }
        if (with_adj) {
            const int a = static_cast<int>(rng.uniform_int(std::size(kAdjectives)));
            adj_index = append(
                {kAdjectives[a], -1, label_id("amod"), Tag::Adj, -1, false, false, false});
        }
        const int n = static_cast<int>(rng.uniform_int(std::size(kNouns)));
        const int noun_index =
            append({plural ? kNouns[n].pl : kNouns[n].sg, parent, label, Tag::Noun, n, plural,
                    false, false});
        if (det_index >= 0) nodes[det_index].parent = noun_index;
        if (adj_index >= 0) nodes[adj_index].parent = noun_index;
        return noun_index;
    }

    // prepositional phrase attached to `parent`
    void pp(int parent) {
        const int p = static_cast<int>(rng.uniform_int(std::size(kPrepositions)));
        const int prep_index = append(
            {kPrepositions[p], parent, label_id("prep"), Tag::Prep, -1, false, false, false});
        simple_np(prep_index, label_id("pobj"));
    }

    // "who V [NP]" modifying the noun at `noun_index`
    void relative_clause(int noun_index) {
        const int who_index =
            append({"who", -1, label_id("nsubj"), Tag::Pron, -1, false, false, false});
        const int v = static_cast<int>(rng.uniform_int(std::size(kVerbs)));
        const bool plural = nodes[noun_index].plural;
        const int verb_index = append({verb_form(kVerbs[v], past, plural), noun_index,
                                       label_id("rcmod"), Tag::Verb, v, false, past, plural});
        nodes[who_index].parent = verb_index;
        if (kVerbs[v].transitive) {
            simple_np(verb_index, label_id("dobj"));
        }
    }

    DepTree build() {
        // subject NP with at most one of {relative clause, PP}
        const int subject = simple_np(-1, label_id("nsubj"));
        const double shape = rng.uniform();
        if (shape < 0.25) {
            relative_clause(subject);
        } else if (shape < 0.5) {
            pp(subject);
        }
        const int v = static_cast<int>(rng.uniform_int(std::size(kVerbs)));
        const bool plural = nodes[subject].plural;
        const int verb_index = append({verb_form(kVerbs[v], past, plural), -1, label_id("root"),
                                       Tag::Verb, v, false, past, plural});
        nodes[subject].parent = verb_index;
        if (kVerbs[v].transitive) {
            simple_np(verb_index, label_id("dobj"));
        } else if (rng.bernoulli(0.3)) {
            pp(verb_index);
        }
        append({".", verb_index, label_id("punct"), Tag::Punct, -1, false, false, false});
        return to_tree(nodes);
    }
};

// ---------------------------------------------------------------------------
// corruption
// ---------------------------------------------------------------------------

void corrupt(std::vector<DerivNode>& nodes, const CorruptionProfile& profile, Rng& rng) {
    // subject-verb agreement flip (present-tense verbs only)
    if (rng.bernoulli(profile.p_agreement)) {
        std::vector<int> verbs;
        for (int k = 0; k < static_cast<int>(nodes.size()); ++k) {
            if (nodes[k].tag == Tag::Verb && !nodes[k].past) verbs.push_back(k);
        }
        if (!verbs.empty()) {
            auto& verb = nodes[verbs[rng.uniform_int(verbs.size())]];
            verb.word = verb_form(kVerbs[verb.lex], false, !verb.subj_plural);
        }
    }
    // tense swap
    if (rng.bernoulli(profile.p_tense)) {
        std::vector<int> verbs;
        for (int k = 0; k < static_cast<int>(nodes.size()); ++k) {
            if (nodes[k].tag == Tag::Verb) verbs.push_back(k);
        }
        if (!verbs.empty()) {
            auto& verb = nodes[verbs[rng.uniform_int(verbs.size())]];
            verb.past = !verb.past;
            verb.word = verb_form(kVerbs[verb.lex], verb.past, verb.subj_plural);
        }
    }
    // article drop
    if (rng.bernoulli(profile.p_article_drop)) {
        std::vector<int> dets;
        for (int k = 0; k < static_cast<int>(nodes.size()); ++k) {
            if (nodes[k].tag == Tag::Det) dets.push_back(k);
        }
        if (!dets.empty()) {
            remove_leaf(nodes, dets[rng.uniform_int(dets.size())]);
        }
    }
    // article insert before a bare noun
    if (rng.bernoulli(profile.p_article_insert)) {
        std::vector<int> bare;
        for (int k = 0; k < static_cast<int>(nodes.size()); ++k) {
            if (nodes[k].tag != Tag::Noun) continue;
            bool has_det = false;
            for (int c : children_of(nodes, k)) {
                if (nodes[c].tag == Tag::Det) has_det = true;
            }
            if (!has_det) bare.push_back(k);
        }
        if (!bare.empty()) {
            const int noun = bare[rng.uniform_int(bare.size())];
            int position = noun;
            for (int c : children_of(nodes, noun)) position = std::min(position, c);
            DerivNode det{kDeterminers[rng.uniform_int(2)], noun, label_id("det"), Tag::Det,
                          -1,   false,
                          false, false};
            insert_node(nodes, position, std::move(det));
        }
    }
    // adjacent word swap
    if (rng.bernoulli(profile.p_swap) && nodes.size() >= 3) {
        std::vector<int> slots;
        for (int k = 0; k + 1 < static_cast<int>(nodes.size()); ++k) {
            if (nodes[k].tag != Tag::Punct && nodes[k + 1].tag != Tag::Punct) slots.push_back(k);
        }
        if (!slots.empty()) {
            swap_adjacent(nodes, slots[rng.uniform_int(slots.size())]);
        }
    }
    // random leaf deletion
    if (rng.bernoulli(profile.p_delete)) {
        std::vector<int> leaves;
        for (int k = 0; k < static_cast<int>(nodes.size()); ++k) {
            if (nodes[k].tag == Tag::Punct || nodes[k].parent < 0) continue;
            if (children_of(nodes, k).empty()) leaves.push_back(k);
        }
        if (!leaves.empty()) {
            remove_leaf(nodes, leaves[rng.uniform_int(leaves.size())]);
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// public surface
// ---------------------------------------------------------------------------

const RelationVocab& synthetic_relation_vocab() {
    static const RelationVocab vocab = RelationVocab::from_labels(
        {"amod", "aux", "det", "dobj", "nsubj", "oprd", "pobj", "prep", "punct", "rcmod",
         "root"});
    return vocab;
}

CorruptionProfile CorruptionProfile::none() {
    CorruptionProfile p;
    p.p_agreement = p.p_tense = p.p_article_drop = p.p_article_insert = p.p_swap = p.p_delete =
        0.0f;
    return p;
}

CorruptionProfile CorruptionProfile::agreement_only() {
    CorruptionProfile p = none();
    p.p_agreement = 1.0f;
    p.force_present = true;
    return p;
}

CorruptionProfile CorruptionProfile::from_config(const RunConfig& cfg) {
    CorruptionProfile p;
    p.p_agreement = cfg.p_agreement;
    p.p_tense = cfg.p_tense;
    p.p_article_drop = cfg.p_article_drop;
    p.p_article_insert = cfg.p_article_insert;
    p.p_swap = cfg.p_swap;
    p.p_delete = cfg.p_delete;
    return p;
}

CorruptionProfile CorruptionProfile::named(const std::string& name, const RunConfig& cfg) {
    if (name == "default") return from_config(cfg);
    if (name == "none") return none();
    if (name == "agreement") return agreement_only();
    throw ConfigError("unknown corruption profile '" + name +
                      "' (expected default, none, or agreement)");
}

std::vector<TrainExample> synth_corpus(const CorruptionProfile& profile, Rng& rng, int count) {
    if (count < 1) {
        throw TrainingError("synth_corpus: count must be >= 1");
    }
    std::vector<TrainExample> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        const bool past = profile.force_present ? false : rng.bernoulli(0.3);
        SentenceBuilder builder(rng, past);
        TrainExample example;
        example.tgt_tree = builder.build();
        std::vector<DerivNode> corrupted = builder.nodes;
        corrupt(corrupted, profile, rng);
        example.src_tree = to_tree(corrupted);
        out.push_back(std::move(example));
    }
    return out;
}

TrainExample case_study_pair() {
    const auto& vocab = synthetic_relation_vocab();
    auto ids = [&](std::initializer_list<const char*> names) {
        std::vector<int> out;
        for (const char* name : names) out.push_back(vocab.id(name));
        return out;
    };
    TrainExample example;
    example.src_tree.words = {"Do", "one",  "who",  "suffered", "from", "this",
                              "disease", "keep", "it",  "a",        "secret", "?"};
    example.src_tree.heads = {8, 8, 4, 2, 4, 7, 5, 0, 8, 11, 8, 8};
    example.src_tree.labels = ids({"aux", "nsubj", "nsubj", "rcmod", "prep", "det", "pobj",
                                   "root", "dobj", "det", "oprd", "punct"});
    example.tgt_tree = example.src_tree;
    example.tgt_tree.words[0] = "Does";
    example.tgt_tree.words[3] = "suffers";
    example.src_tree.validate(vocab.size());
    example.tgt_tree.validate(vocab.size());
    return example;
}

}  // namespace sggec
