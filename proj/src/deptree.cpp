#include "sggec/deptree.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <sstream>

namespace sggec {

// ---------------------------------------------------------------------------
// RelationVocab
// ---------------------------------------------------------------------------

RelationVocab RelationVocab::from_labels(std::vector<std::string> labels) {
    RelationVocab vocab;
    for (const auto& label : labels) {
        if (label.empty()) {
            throw TreeError("relation label may not be empty");
        }
        for (char c : label) {
            if (c == ',' || static_cast<unsigned char>(c) < 0x21) {
                throw TreeError("relation label '" + label +
                                "' contains whitespace, comma, or control characters");
            }
        }
        if (vocab.index_.count(label)) {
            throw TreeError("duplicate relation label '" + label + "'");
        }
        vocab.index_[label] = static_cast<int>(vocab.labels_.size());
        vocab.labels_.push_back(label);
    }
    return vocab;
}

int RelationVocab::id(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end()) {
        throw TreeError("unknown relation label '" + label + "'");
    }
    return it->second;
}

int RelationVocab::find(const std::string& label) const {
    auto it = index_.find(label);
    return it == index_.end() ? -1 : it->second;
}

const std::string& RelationVocab::label(int id) const {
    if (id < 0 || id >= size()) {
        throw TreeError("relation id " + std::to_string(id) + " out of range");
    }
    return labels_[id];
}

std::string RelationVocab::serialize() const {
    std::string out;
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (i) out += ',';
        out += labels_[i];
    }
    return out;
}

RelationVocab RelationVocab::deserialize(const std::string& text) {
    std::vector<std::string> labels;
    std::string current;
    for (char c : text) {
        if (c == ',') {
            labels.push_back(current);
            current.clear();
        } else {
            current += c;
        }
    }
    if (!current.empty()) labels.push_back(current);
    return from_labels(std::move(labels));
}

// ---------------------------------------------------------------------------
// DepTree
// ---------------------------------------------------------------------------

int DepTree::root() const {
    for (int i = 0; i < size(); ++i) {
        if (heads[i] == 0) return i;
    }
    throw TreeError("tree has no root word");
}

void DepTree::validate(int num_labels) const {
    const int n = size();
    if (n == 0) {
        throw TreeError("empty tree");
    }
    if (heads.size() != words.size() || labels.size() != words.size()) {
        throw TreeError("tree field lengths disagree");
    }
    int roots = 0;
    for (int i = 0; i < n; ++i) {
        if (heads[i] < 0 || heads[i] > n) {
            throw TreeError("head index " + std::to_string(heads[i]) + " of word " +
                            std::to_string(i + 1) + " out of range");
        }
        if (heads[i] == i + 1) {
            throw TreeError("word " + std::to_string(i + 1) + " is its own head");
        }
        if (heads[i] == 0) ++roots;
        if (num_labels >= 0 && (labels[i] < 0 || labels[i] >= num_labels)) {
            throw TreeError("label id " + std::to_string(labels[i]) + " of word " +
                            std::to_string(i + 1) + " out of range");
        }
    }
    if (roots != 1) {
        throw TreeError("tree has " + std::to_string(roots) + " roots, expected exactly 1");
    }
    // every node must reach the virtual root without revisiting a node
    for (int i = 0; i < n; ++i) {
        int steps = 0;
        int cur = i;
        while (heads[cur] != 0) {
            cur = heads[cur] - 1;
            if (++steps > n) {
                throw TreeError("cycle through word " + std::to_string(i + 1));
            }
        }
    }
}

DepTree reverse_tree(const DepTree& tree) {
    const int n = tree.size();
    DepTree out;
    out.words.resize(n);
    out.heads.resize(n);
    out.labels.resize(n);
    for (int i = 0; i < n; ++i) {
        const int j = n - 1 - i;
        out.words[j] = tree.words[i];
        out.labels[j] = tree.labels[i];
        out.heads[j] = tree.heads[i] == 0 ? 0 : n + 1 - tree.heads[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// graph algebra
// ---------------------------------------------------------------------------

std::vector<std::vector<NeighborRelation>> neighbor_relations(const DepTree& tree,
                                                              int self_label) {
    tree.validate();
    const int n = tree.size();
    std::vector<std::vector<NeighborRelation>> nr(n);
    if (n == 1) {
        nr[0].push_back({Direction::Out, 0, 0, self_label});
        return nr;
    }
    for (int dep = 0; dep < n; ++dep) {
        const int head = tree.head_index(dep);
        if (head < 0) continue;  // the root word's virtual attachment is not an edge
        nr[head].push_back({Direction::Out, head, dep, tree.labels[dep]});
        nr[dep].push_back({Direction::In, head, dep, tree.labels[dep]});
    }
    return nr;
}

PairTargets pair_targets(const DepTree& tree, int max_distance, int non_adjacent_class) {
    tree.validate();
    if (max_distance < 1) {
        throw TreeError("max_distance must be >= 1");
    }
    const int n = tree.size();
    PairTargets out;
    out.n = n;
    out.rel.assign(static_cast<std::size_t>(n) * n, non_adjacent_class);
    out.dist.assign(static_cast<std::size_t>(n) * n, 0);
    out.anc.assign(static_cast<std::size_t>(n) * n, static_cast<int>(AncClass::None));

    // relation class: the head->dependent pair carries the edge label
    for (int dep = 0; dep < n; ++dep) {
        const int head = tree.head_index(dep);
        if (head >= 0) out.rel[head * n + dep] = tree.labels[dep];
    }

    // clamped undirected shortest-path distance, BFS from every node
    std::vector<std::vector<int>> adjacency(n);
    for (int dep = 0; dep < n; ++dep) {
        const int head = tree.head_index(dep);
        if (head < 0) continue;
        adjacency[head].push_back(dep);
        adjacency[dep].push_back(head);
    }
    std::vector<int> depth(n, -1);
    for (int start = 0; start < n; ++start) {
        std::fill(depth.begin(), depth.end(), -1);
        std::deque<int> queue{start};
        depth[start] = 0;
        while (!queue.empty()) {
            const int cur = queue.front();
            queue.pop_front();
            for (int next : adjacency[cur]) {
                if (depth[next] < 0) {
                    depth[next] = depth[cur] + 1;
                    queue.push_back(next);
                }
            }
        }
        for (int j = 0; j < n; ++j) {
            out.dist[start * n + j] = std::min(depth[j], max_distance);
        }
    }

    // ancestor iff i is on the root-to-j path (i != j)
    for (int j = 0; j < n; ++j) {
        int cur = tree.head_index(j);
        while (cur >= 0) {
            out.anc[cur * n + j] = static_cast<int>(AncClass::Ancestor);
            out.anc[j * n + cur] = static_cast<int>(AncClass::Descendant);
            cur = tree.head_index(cur);
        }
    }
    return out;
}

OverlapSet overlap_align(const std::vector<std::string>& hyp,
                         const std::vector<std::string>& tgt) {
    const int n = static_cast<int>(hyp.size());
    const int m = static_cast<int>(tgt.size());
    if (n == 0 || m == 0) return {};
    // lcs[i][j] = LCS length of hyp[i:], tgt[j:]
    std::vector<std::vector<int>> lcs(n + 1, std::vector<int>(m + 1, 0));
    for (int i = n - 1; i >= 0; --i) {
        for (int j = m - 1; j >= 0; --j) {
            if (hyp[i] == tgt[j]) {
                lcs[i][j] = lcs[i + 1][j + 1] + 1;
            } else {
                lcs[i][j] = std::max(lcs[i + 1][j], lcs[i][j + 1]);
            }
        }
    }
    // walk forward, taking every feasible match; on non-match ties consume the
    // target first so matched hypothesis indices stay as early as possible
    OverlapSet out;
    int i = 0, j = 0;
    while (i < n && j < m) {
        if (hyp[i] == tgt[j] && lcs[i][j] == lcs[i + 1][j + 1] + 1) {
            out.push_back({i, j});
            ++i;
            ++j;
        } else if (lcs[i][j + 1] == lcs[i][j]) {
            ++j;
        } else {
            ++i;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// CoNLL-U
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    for (char c : line) {
        if (c == '\t') {
            fields.push_back(current);
            current.clear();
        } else {
            current += c;
        }
    }
    fields.push_back(current);
    return fields;
}

void finish_sentence(std::vector<ConlluSentence>& sentences, ConlluSentence& current,
                     int block_start_line) {
    if (current.words.empty()) return;
    const int n = static_cast<int>(current.words.size());
    int roots = 0;
    for (int i = 0; i < n; ++i) {
        if (current.heads[i] < 0 || current.heads[i] > n) {
            throw ParseError("head index " + std::to_string(current.heads[i]) +
                                 " dangles outside the sentence",
                             block_start_line + i);
        }
        if (current.heads[i] == 0) ++roots;
    }
    if (roots == 0) {
        throw ParseError("sentence has no root", block_start_line);
    }
    if (roots > 1) {
        throw ParseError("sentence has multiple roots", block_start_line);
    }
    for (int i = 0; i < n; ++i) {
        int steps = 0;
        int cur = i;
        while (current.heads[cur] != 0) {
            cur = current.heads[cur] - 1;
            if (++steps > n) {
                throw ParseError("head links form a cycle through token " + std::to_string(i + 1),
                                 block_start_line + i);
            }
        }
    }
    sentences.push_back(std::move(current));
    current = ConlluSentence{};
}

}  // namespace

std::vector<ConlluSentence> parse_conllu_raw(const std::string& text) {
    std::vector<ConlluSentence> sentences;
    ConlluSentence current;
    int line_number = 0;
    int block_start = 1;
    int expected_id = 1;
    std::istringstream stream(text);
    std::string line;
    while (std::getline(stream, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            finish_sentence(sentences, current, block_start);
            expected_id = 1;
            continue;
        }
        if (line[0] == '#') continue;
        if (current.words.empty()) block_start = line_number;
        auto fields = split_tabs(line);
        if (fields.size() != 10) {
            throw ParseError("expected 10 tab-separated columns, found " +
                                 std::to_string(fields.size()),
                             line_number);
        }
        const std::string& id = fields[0];
        if (id.find('-') != std::string::npos || id.find('.') != std::string::npos) {
            continue;  // multiword token or empty node
        }
        int id_value = 0;
        try {
            id_value = std::stoi(id);
        } catch (const std::exception&) {
            throw ParseError("token id '" + id + "' is not an integer", line_number);
        }
        if (id_value != expected_id) {
            throw ParseError("token id " + std::to_string(id_value) + " out of sequence",
                             line_number);
        }
        ++expected_id;
        int head = 0;
        try {
            head = std::stoi(fields[6]);
        } catch (const std::exception&) {
            throw ParseError("head '" + fields[6] + "' is not an integer", line_number);
        }
        if (head < 0) {
            throw ParseError("negative head index", line_number);
        }
        current.words.push_back(fields[1]);
        current.heads.push_back(head);
        current.rel_labels.push_back(fields[7]);
    }
    finish_sentence(sentences, current, block_start);
    return sentences;
}

RelationVocab collect_labels(const std::vector<ConlluSentence>& sentences) {
    std::set<std::string> labels;
    for (const auto& sentence : sentences) {
        labels.insert(sentence.rel_labels.begin(), sentence.rel_labels.end());
    }
    return RelationVocab::from_labels({labels.begin(), labels.end()});
}

DepTree resolve(const ConlluSentence& sentence, const RelationVocab& vocab) {
    DepTree tree;
    tree.words = sentence.words;
    tree.heads = sentence.heads;
    tree.labels.reserve(sentence.rel_labels.size());
    for (const auto& label : sentence.rel_labels) {
        tree.labels.push_back(vocab.id(label));
    }
    tree.validate(vocab.size());
    return tree;
}

std::vector<DepTree> parse_conllu(const std::string& text, const RelationVocab& vocab) {
    std::vector<DepTree> trees;
    for (const auto& sentence : parse_conllu_raw(text)) {
        trees.push_back(resolve(sentence, vocab));
    }
    return trees;
}

std::string serialize_conllu(const DepTree& tree, const RelationVocab& vocab) {
    std::ostringstream out;
    for (int i = 0; i < tree.size(); ++i) {
        out << (i + 1) << '\t' << tree.words[i] << "\t_\t_\t_\t_\t" << tree.heads[i] << '\t'
            << vocab.label(tree.labels[i]) << "\t_\t_\n";
    }
    out << '\n';
    return out.str();
}

std::string serialize_conllu(const std::vector<DepTree>& trees, const RelationVocab& vocab) {
    std::string out;
    for (const auto& tree : trees) {
        out += serialize_conllu(tree, vocab);
    }
    return out;
}

}  // namespace sggec
