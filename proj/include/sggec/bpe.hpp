#pragma once

#include <mutex>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sggec/ops.hpp"

namespace sggec {

// Reserved token ids shared by source and target vocabularies.
constexpr int kPadId = 0;
constexpr int kBosId = 1;
constexpr int kEosId = 2;
constexpr int kUnkId = 3;
constexpr int kNumReservedIds = 4;

struct BpeError : std::runtime_error {
    explicit BpeError(const std::string& message) : std::runtime_error(message) {}
};

// Byte-pair encoding with an explicit "</w>" end-of-word symbol. One model
// serves both sides of a sentence pair so the copy mechanism works in a
// single id space.
class BpeModel {
public:
    struct Encoded {
        std::vector<int> ids;  // BOS ... EOS
        SpanMap spans;         // per word, positions inside ids
    };

    static BpeModel train(const std::vector<std::string>& corpus_words, int vocab_size);

    BpeModel() = default;
    BpeModel(const BpeModel& other);
    BpeModel& operator=(const BpeModel& other);

    Encoded encode(const std::vector<std::string>& words) const;
    std::vector<std::string> decode(const std::vector<int>& ids) const;

    int vocab_size() const { return static_cast<int>(tokens_.size()); }
    const std::string& token(int id) const;
    int token_id(const std::string& token) const;  // -1 if absent

    std::string serialize() const;
    static BpeModel deserialize(const std::string& text);

    bool operator==(const BpeModel& other) const {
        return merges_ == other.merges_ && tokens_ == other.tokens_;
    }

private:
    std::vector<std::string> word_symbols(const std::string& word) const;

    std::vector<std::pair<std::string, std::string>> merges_;
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> token_index_;
    std::unordered_set<std::string> alphabet_;  // single-character base symbols

    mutable std::mutex cache_mutex_;
    mutable std::unordered_map<std::string, std::vector<int>> encode_cache_;
};

// Splits a UTF-8 string into character strings.
std::vector<std::string> utf8_characters(const std::string& text);

}  // namespace sggec
