#include "sggec/evaluation.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace sggec {

namespace {

enum class Op : unsigned char { Match, Substitute, Delete, Insert };

}  // namespace

EditSet extract_edits(const std::vector<std::string>& source,
                      const std::vector<std::string>& hypothesis) {
    const int n = static_cast<int>(source.size());
    const int m = static_cast<int>(hypothesis.size());
    // cost[i][j]: edit distance between source[i:] and hypothesis[j:]
    std::vector<std::vector<int>> cost(n + 1, std::vector<int>(m + 1, 0));
    for (int i = 0; i <= n; ++i) cost[i][m] = n - i;
    for (int j = 0; j <= m; ++j) cost[n][j] = m - j;
    for (int i = n - 1; i >= 0; --i) {
        for (int j = m - 1; j >= 0; --j) {
            if (source[i] == hypothesis[j]) {
                cost[i][j] = cost[i + 1][j + 1];
            } else {
                cost[i][j] = 1 + std::min({cost[i + 1][j + 1],  // substitution
                                           cost[i + 1][j],      // deletion
                                           cost[i][j + 1]});    // insertion
            }
        }
    }

    // forward walk; preference order on ties: match/substitute, delete, insert
    std::vector<Op> ops;
    std::vector<int> op_src, op_hyp;  // positions consumed
    int i = 0, j = 0;
    while (i < n || j < m) {
        if (i < n && j < m && source[i] == hypothesis[j] && cost[i][j] == cost[i + 1][j + 1]) {
            ops.push_back(Op::Match);
            op_src.push_back(i++);
            op_hyp.push_back(j++);
        } else if (i < n && j < m && cost[i][j] == 1 + cost[i + 1][j + 1]) {
            ops.push_back(Op::Substitute);
            op_src.push_back(i++);
            op_hyp.push_back(j++);
        } else if (i < n && cost[i][j] == 1 + cost[i + 1][j]) {
            ops.push_back(Op::Delete);
            op_src.push_back(i++);
            op_hyp.push_back(-1);
        } else {
            ops.push_back(Op::Insert);
            op_src.push_back(i);
            op_hyp.push_back(j++);
        }
    }

    // merge runs of non-match operations into span edits
    EditSet edits;
    std::size_t k = 0;
    while (k < ops.size()) {
        if (ops[k] == Op::Match) {
            ++k;
            continue;
        }
        const int begin = op_src[k];
        int end = begin;
        std::vector<std::string> replacement;
        while (k < ops.size() && ops[k] != Op::Match) {
            if (ops[k] == Op::Substitute || ops[k] == Op::Delete) {
                end = op_src[k] + 1;
            }
            if (op_hyp[k] >= 0) {
                replacement.push_back(hypothesis[op_hyp[k]]);
            }
            ++k;
        }
        edits.push_back(Edit{begin, end, std::move(replacement)});
    }
    return edits;
}

std::vector<std::string> apply_edits(const std::vector<std::string>& source,
                                     const EditSet& edits) {
    std::vector<std::string> out;
    int cursor = 0;
    for (const auto& edit : edits) {
        for (; cursor < edit.begin; ++cursor) out.push_back(source[cursor]);
        out.insert(out.end(), edit.replacement.begin(), edit.replacement.end());
        cursor = edit.end;
    }
    for (; cursor < static_cast<int>(source.size()); ++cursor) out.push_back(source[cursor]);
    return out;
}

namespace {

Score score_from_counts(long matched, long hyp_count, long ref_count) {
    Score s;
    s.matched = matched;
    s.hyp_edits = hyp_count;
    s.ref_edits = ref_count;
    if (hyp_count == 0 && ref_count == 0) {
        s.precision = s.recall = s.f_half = 1.0;
        return s;
    }
    s.precision = hyp_count == 0 ? 1.0 : static_cast<double>(matched) / hyp_count;
    s.recall = ref_count == 0 ? 1.0 : static_cast<double>(matched) / ref_count;
    const double denom = 0.25 * s.precision + s.recall;
    s.f_half = denom > 0.0 ? 1.25 * s.precision * s.recall / denom : 0.0;
    return s;
}

}  // namespace

Score f_half(const EditSet& hyp, const EditSet& ref) {
    std::multiset<Edit> ref_pool(ref.begin(), ref.end());
    long matched = 0;
    for (const auto& edit : hyp) {
        auto it = ref_pool.find(edit);
        if (it != ref_pool.end()) {
            ref_pool.erase(it);
            ++matched;
        }
    }
    return score_from_counts(matched, static_cast<long>(hyp.size()),
                             static_cast<long>(ref.size()));
}

Score f_half_corpus(const std::vector<EditSet>& hyp, const std::vector<EditSet>& ref) {
    if (hyp.size() != ref.size()) {
        throw std::invalid_argument("f_half_corpus: sentence counts differ");
    }
    long matched = 0, hyp_count = 0, ref_count = 0;
    for (std::size_t i = 0; i < hyp.size(); ++i) {
        const Score s = f_half(hyp[i], ref[i]);
        matched += s.matched;
        hyp_count += s.hyp_edits;
        ref_count += s.ref_edits;
    }
    return score_from_counts(matched, hyp_count, ref_count);
}

std::string score_report(const Score& score, long sentences) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(4);
    out << "P=" << score.precision << " R=" << score.recall << " F0.5=" << score.f_half
        << " sentences=" << sentences << " edits_hyp=" << score.hyp_edits
        << " edits_ref=" << score.ref_edits;
    return out.str();
}

}  // namespace sggec
