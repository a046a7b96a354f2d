#pragma once

#include <string>
#include <vector>

namespace sggec {

// A contiguous replacement: source words [begin, end) become `replacement`.
struct Edit {
    int begin = 0;
    int end = 0;
    std::vector<std::string> replacement;

    bool operator==(const Edit& other) const {
        return begin == other.begin && end == other.end && replacement == other.replacement;
    }
    bool operator<(const Edit& other) const {
        if (begin != other.begin) return begin < other.begin;
        if (end != other.end) return end < other.end;
        return replacement < other.replacement;
    }
};

using EditSet = std::vector<Edit>;

// Minimal token edits from a Levenshtein alignment (unit costs, substitution
// preferred over insert+delete, leftmost on ties); adjacent non-match
// operations merge into one span edit.
EditSet extract_edits(const std::vector<std::string>& source,
                      const std::vector<std::string>& hypothesis);

// Applies the edit set; round-trips with extract_edits.
std::vector<std::string> apply_edits(const std::vector<std::string>& source,
                                     const EditSet& edits);

struct Score {
    double precision = 0.0;
    double recall = 0.0;
    double f_half = 0.0;
    long matched = 0;
    long hyp_edits = 0;
    long ref_edits = 0;
};

// Exact span+replacement matching of hypothesis edits against reference
// edits. Empty/empty scores 1, empty/non-empty scores 0.
Score f_half(const EditSet& hyp, const EditSet& ref);

// Micro-averaged corpus score over per-sentence edit sets.
Score f_half_corpus(const std::vector<EditSet>& hyp, const std::vector<EditSet>& ref);

// "P=<x> R=<y> F0.5=<z> sentences=<n> edits_hyp=<a> edits_ref=<b>"
std::string score_report(const Score& score, long sentences);

}  // namespace sggec
