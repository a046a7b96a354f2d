#pragma once

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace sggec {

struct ParseError : std::runtime_error {
    ParseError(const std::string& message, int line)
        : std::runtime_error("line " + std::to_string(line) + ": " + message), line_number(line) {}
    int line_number;
};

struct TreeError : std::runtime_error {
    explicit TreeError(const std::string& message) : std::runtime_error(message) {}
};

// Ordered set of dependency relation labels. Index L (one past the labels)
// doubles as the NON_ADJACENT class for pair classification and as the row
// of the synthetic SELF relation in the embedding table; neither is ever a
// tree edge label.
class RelationVocab {
public:
    static RelationVocab from_labels(std::vector<std::string> labels);

    int id(const std::string& label) const;        // throws on unknown
    int find(const std::string& label) const;      // -1 on unknown
    const std::string& label(int id) const;
    int size() const { return static_cast<int>(labels_.size()); }  // L
    int non_adjacent() const { return size(); }
    int self_relation() const { return size(); }
    int num_rel_classes() const { return size() + 1; }     // L + 1
    int num_embedding_rows() const { return size() + 1; }  // labels + SELF

    const std::vector<std::string>& labels() const { return labels_; }
    std::string serialize() const;  // comma-joined
    static RelationVocab deserialize(const std::string& text);
    bool operator==(const RelationVocab& other) const { return labels_ == other.labels_; }

private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, int> index_;
};

// One sentence's dependency structure. Heads use CoNLL-U convention:
// heads[i] == 0 means word i hangs off the virtual root, otherwise heads[i]
// is the 1-based index of the head word.
struct DepTree {
    std::vector<std::string> words;
    std::vector<int> heads;
    std::vector<int> labels;

    int size() const { return static_cast<int>(words.size()); }
    int head_index(int i) const { return heads[i] - 1; }  // -1 for the root word
    int root() const;

    // Structural invariants: single root, no cycles, heads in range.
    // num_labels < 0 skips the label range check.
    void validate(int num_labels = -1) const;
};

// Reverses word order; tree edges follow their endpoints.
DepTree reverse_tree(const DepTree& tree);

enum class Direction { In, Out };

struct NeighborRelation {
    Direction dir;
    int head;       // index of the edge's head word
    int dependent;  // index of the edge's dependent word
    int label;
};

// NR(v) per node: an Out entry for each child edge and an In entry for the
// head edge. A single-word sentence gets one synthetic Out self-loop with
// the reserved SELF label so attention stays well defined.
std::vector<std::vector<NeighborRelation>> neighbor_relations(const DepTree& tree,
                                                              int self_label);

enum class AncClass { None = 0, Ancestor = 1, Descendant = 2 };

// Dense ordered-pair supervision: relation class (directed head->dependent,
// else NON_ADJACENT), clamped undirected shortest-path distance, and
// ancestor/descendant class.
struct PairTargets {
    int n = 0;
    std::vector<int> rel;
    std::vector<int> dist;
    std::vector<int> anc;

    int rel_at(int i, int j) const { return rel[i * n + j]; }
    int dist_at(int i, int j) const { return dist[i * n + j]; }
    int anc_at(int i, int j) const { return anc[i * n + j]; }
};

PairTargets pair_targets(const DepTree& tree, int max_distance, int non_adjacent_class);

// Aligned word positions shared by a decoded hypothesis and the reference:
// a longest common subsequence of exact matches.
struct OverlapPair {
    int hyp;
    int tgt;
};
using OverlapSet = std::vector<OverlapPair>;

OverlapSet overlap_align(const std::vector<std::string>& hyp,
                         const std::vector<std::string>& tgt);

// CoNLL-U ingestion (ID, FORM, HEAD, DEPREL columns; multiword/empty-node
// lines skipped). Structural errors carry the offending line number.
struct ConlluSentence {
    std::vector<std::string> words;
    std::vector<int> heads;
    std::vector<std::string> rel_labels;
};

std::vector<ConlluSentence> parse_conllu_raw(const std::string& text);

// Sorted unique DEPREL labels across sentences.
RelationVocab collect_labels(const std::vector<ConlluSentence>& sentences);

DepTree resolve(const ConlluSentence& sentence, const RelationVocab& vocab);

std::vector<DepTree> parse_conllu(const std::string& text, const RelationVocab& vocab);

std::string serialize_conllu(const DepTree& tree, const RelationVocab& vocab);
std::string serialize_conllu(const std::vector<DepTree>& trees, const RelationVocab& vocab);

}  // namespace sggec
