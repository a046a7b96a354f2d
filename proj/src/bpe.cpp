#include "sggec/bpe.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

namespace sggec {

namespace {
const std::string kEndOfWord = "</w>";
const char* kReservedTokens[kNumReservedIds] = {"<pad>", "<s>", "</s>", "<unk>"};
}  // namespace

std::vector<std::string> utf8_characters(const std::string& text) {
    std::vector<std::string> chars;
    std::size_t i = 0;
    while (i < text.size()) {
        const unsigned char lead = static_cast<unsigned char>(text[i]);
        std::size_t len = 1;
        if ((lead & 0x80) == 0x00) {
            len = 1;
        } else if ((lead & 0xE0) == 0xC0) {
            len = 2;
        } else if ((lead & 0xF0) == 0xE0) {
            len = 3;
        } else if ((lead & 0xF8) == 0xF0) {
            len = 4;
        }
        len = std::min(len, text.size() - i);
        chars.push_back(text.substr(i, len));
        i += len;
    }
    return chars;
}

BpeModel::BpeModel(const BpeModel& other)
    : merges_(other.merges_),
      tokens_(other.tokens_),
      token_index_(other.token_index_),
      alphabet_(other.alphabet_) {}

BpeModel& BpeModel::operator=(const BpeModel& other) {
    if (this != &other) {
        merges_ = other.merges_;
        tokens_ = other.tokens_;
        token_index_ = other.token_index_;
        alphabet_ = other.alphabet_;
        std::lock_guard<std::mutex> lock(cache_mutex_);
        encode_cache_.clear();
    }
    return *this;
}

BpeModel BpeModel::train(const std::vector<std::string>& corpus_words, int vocab_size) {
    if (corpus_words.empty()) {
        throw BpeError("cannot train BPE on an empty corpus");
    }

    // word frequencies, then each distinct word as a symbol sequence
    std::map<std::string, long> word_freq;
    for (const auto& word : corpus_words) {
        if (word.empty()) continue;
        for (char c : word) {
            if (static_cast<unsigned char>(c) < 0x21 && c != '\0') {
                throw BpeError("corpus word contains whitespace or control characters: '" + word +
                               "'");
            }
        }
        ++word_freq[word];
    }
    if (word_freq.empty()) {
        throw BpeError("cannot train BPE on an empty corpus");
    }

    BpeModel model;
    std::vector<std::vector<std::string>> sequences;
    std::vector<long> freqs;
    std::set<std::string> base;
    base.insert(kEndOfWord);
    for (const auto& [word, freq] : word_freq) {
        auto chars = utf8_characters(word);
        chars.push_back(kEndOfWord);
        for (std::size_t i = 0; i + 1 < chars.size(); ++i) base.insert(chars[i]);
        sequences.push_back(std::move(chars));
        freqs.push_back(freq);
    }

    const int base_count = static_cast<int>(base.size());
    if (vocab_size <= base_count + kNumReservedIds) {
        throw BpeError("vocab_size " + std::to_string(vocab_size) + " must exceed " +
                       std::to_string(base_count + kNumReservedIds) +
                       " (base alphabet plus reserved ids)");
    }

    for (int i = 0; i < kNumReservedIds; ++i) {
        model.token_index_[kReservedTokens[i]] = i;
        model.tokens_.push_back(kReservedTokens[i]);
    }
    for (const auto& symbol : base) {
        if (!model.token_index_.count(symbol)) {
            model.token_index_[symbol] = static_cast<int>(model.tokens_.size());
            model.tokens_.push_back(symbol);
        }
        if (symbol != kEndOfWord) model.alphabet_.insert(symbol);
    }

    const int merge_budget = vocab_size - static_cast<int>(model.tokens_.size());
    for (int step = 0; step < merge_budget; ++step) {
        // count adjacent pairs, weighted by word frequency
        std::map<std::pair<std::string, std::string>, long> pair_count;
        for (std::size_t w = 0; w < sequences.size(); ++w) {
            const auto& seq = sequences[w];
            for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
                pair_count[{seq[i], seq[i + 1]}] += freqs[w];
            }
        }
        if (pair_count.empty()) break;
        // greedy best count; ties resolved by the lexicographically smallest
        // pair, which std::map's iteration order provides for free
        auto best = pair_count.begin();
        for (auto it = pair_count.begin(); it != pair_count.end(); ++it) {
            if (it->second > best->second) best = it;
        }
        const auto [left, right] = best->first;
        const std::string merged = left + right;
        model.merges_.emplace_back(left, right);
        if (!model.token_index_.count(merged)) {
            model.token_index_[merged] = static_cast<int>(model.tokens_.size());
            model.tokens_.push_back(merged);
        }
        for (auto& seq : sequences) {
            for (std::size_t i = 0; i + 1 < seq.size();) {
                if (seq[i] == left && seq[i + 1] == right) {
                    seq[i] = merged;
                    seq.erase(seq.begin() + i + 1);
                } else {
                    ++i;
                }
            }
        }
    }
    return model;
}

std::vector<std::string> BpeModel::word_symbols(const std::string& word) const {
    std::vector<std::string> symbols = utf8_characters(word);
    for (const auto& c : symbols) {
        if (!alphabet_.count(c)) {
            return {};  // out-of-alphabet word collapses to UNK
        }
    }
    symbols.push_back(kEndOfWord);
    for (const auto& [left, right] : merges_) {
        for (std::size_t i = 0; i + 1 < symbols.size();) {
            if (symbols[i] == left && symbols[i + 1] == right) {
                symbols[i] = left + right;
                symbols.erase(symbols.begin() + i + 1);
            } else {
                ++i;
            }
        }
    }
    return symbols;
}

BpeModel::Encoded BpeModel::encode(const std::vector<std::string>& words) const {
    Encoded out;
    out.ids.push_back(kBosId);
    for (const auto& word : words) {
        const int start = static_cast<int>(out.ids.size());
        std::vector<int> ids;
        {
            std::lock_guard<std::mutex> lock(cache_mutex_);
            auto it = encode_cache_.find(word);
            if (it != encode_cache_.end()) ids = it->second;
        }
        if (ids.empty()) {
            const auto symbols = word_symbols(word);
            if (symbols.empty()) {
                ids.push_back(kUnkId);
            } else {
                for (const auto& symbol : symbols) {
                    auto it = token_index_.find(symbol);
                    if (it == token_index_.end()) {
                        throw BpeError("symbol '" + symbol + "' missing from vocabulary");
                    }
                    ids.push_back(it->second);
                }
            }
            std::lock_guard<std::mutex> lock(cache_mutex_);
            encode_cache_.emplace(word, ids);
        }
        out.ids.insert(out.ids.end(), ids.begin(), ids.end());
        out.spans.emplace_back(start, static_cast<int>(out.ids.size()));
    }
    out.ids.push_back(kEosId);
    return out;
}

std::vector<std::string> BpeModel::decode(const std::vector<int>& ids) const {
    std::vector<std::string> words;
    std::string current;
    auto flush = [&]() {
        if (!current.empty()) {
            words.push_back(current);
            current.clear();
        }
    };
    for (int id : ids) {
        if (id == kPadId || id == kBosId || id == kEosId) continue;
        if (id == kUnkId) {
            flush();
            words.push_back("<unk>");
            continue;
        }
        const std::string& tok = token(id);
        if (tok.size() >= kEndOfWord.size() &&
            tok.compare(tok.size() - kEndOfWord.size(), kEndOfWord.size(), kEndOfWord) == 0) {
            current += tok.substr(0, tok.size() - kEndOfWord.size());
            flush();
        } else {
            current += tok;
        }
    }
    flush();
    return words;
}

const std::string& BpeModel::token(int id) const {
    if (id < 0 || id >= vocab_size()) {
        throw BpeError("token id " + std::to_string(id) + " out of range");
    }
    return tokens_[id];
}

int BpeModel::token_id(const std::string& token) const {
    auto it = token_index_.find(token);
    return it == token_index_.end() ? -1 : it->second;
}

std::string BpeModel::serialize() const {
    std::ostringstream out;
    out << "sgbpe v1\n";
    for (const auto& [left, right] : merges_) {
        out << left << ' ' << right << '\n';
    }
    out << "#vocab\n";
    for (std::size_t id = 0; id < tokens_.size(); ++id) {
        out << tokens_[id] << '\t' << id << '\n';
    }
    return out.str();
}

BpeModel BpeModel::deserialize(const std::string& text) {
    std::istringstream stream(text);
    std::string line;
    if (!std::getline(stream, line) || line != "sgbpe v1") {
        throw BpeError("not a BPE model file (missing 'sgbpe v1' header)");
    }
    BpeModel model;
    bool in_vocab = false;
    while (std::getline(stream, line)) {
        if (line.empty()) continue;
        if (line == "#vocab") {
            in_vocab = true;
            continue;
        }
        if (!in_vocab) {
            const auto space = line.find(' ');
            if (space == std::string::npos || space == 0 || space + 1 >= line.size()) {
                throw BpeError("malformed merge line '" + line + "'");
            }
            model.merges_.emplace_back(line.substr(0, space), line.substr(space + 1));
        } else {
            const auto tab = line.find('\t');
            if (tab == std::string::npos) {
                throw BpeError("malformed vocab line '" + line + "'");
            }
            const std::string token = line.substr(0, tab);
            const int id = std::stoi(line.substr(tab + 1));
            if (id != static_cast<int>(model.tokens_.size())) {
                throw BpeError("vocab ids must be dense and in order, got " + std::to_string(id));
            }
            model.token_index_[token] = id;
            model.tokens_.push_back(token);
        }
    }
    if (model.tokens_.size() < kNumReservedIds) {
        throw BpeError("vocab section missing reserved tokens");
    }
    // rebuild the base alphabet: single characters that are not specials
    for (std::size_t id = kNumReservedIds; id < model.tokens_.size(); ++id) {
        const auto& tok = model.tokens_[id];
        if (tok != kEndOfWord && utf8_characters(tok).size() == 1) {
            model.alphabet_.insert(tok);
        }
    }
    return model;
}

}  // namespace sggec
