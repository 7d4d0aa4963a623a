#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "tlt/errors.hpp"

namespace tlt {

// Deterministic total tokenization with an exact inverse:
// detokenize(tokenize(s)) == s for every string.
class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual std::vector<int> tokenize(std::string_view text) const = 0;
    virtual std::string detokenize(const std::vector<int>& ids) const = 0;
    virtual int vocab_size() const = 0;
};

// One token per byte; id == byte value. The reproducible default.
class ByteTokenizer final : public Tokenizer {
public:
    std::vector<int> tokenize(std::string_view text) const override {
        std::vector<int> out;
        out.reserve(text.size());
        for (unsigned char c : text) out.push_back(static_cast<int>(c));
        return out;
    }

    std::string detokenize(const std::vector<int>& ids) const override {
        std::string out;
        out.reserve(ids.size());
        for (int id : ids) {
            if (id < 0 || id > 255) throw ConfigError("byte tokenizer: id out of range");
            out += static_cast<char>(static_cast<unsigned char>(id));
        }
        return out;
    }

    int vocab_size() const override { return 256; }
};

// Greedy longest-match over a supplied vocabulary (one token per line,
// rank = line number). Bytes not covered by any entry fall back to
// per-byte tokens with ids [entries, entries+256), keeping the mapping
// total and invertible for arbitrary input.
class VocabTokenizer final : public Tokenizer {
public:
    explicit VocabTokenizer(std::vector<std::string> entries) : entries_(std::move(entries)) {
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].empty()) throw ConfigError("vocab: empty token at line " + std::to_string(i + 1));
            auto [it, inserted] = index_.emplace(entries_[i], static_cast<int>(i));
            if (!inserted)
                throw ConfigError("vocab: duplicate token '" + entries_[i] + "' at line " +
                                  std::to_string(i + 1));
            max_len_ = std::max(max_len_, entries_[i].size());
        }
    }

    static VocabTokenizer from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open vocabulary file: " + path);
        std::vector<std::string> entries;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            entries.push_back(line);
        }
        return VocabTokenizer(std::move(entries));
    }

    std::vector<int> tokenize(std::string_view text) const override {
        std::vector<int> out;
        std::size_t i = 0;
        while (i < text.size()) {
            int best = -1;
            std::size_t best_len = 0;
            const std::size_t limit = std::min(max_len_, text.size() - i);
            for (std::size_t len = limit; len >= 1; --len) {
                auto it = index_.find(std::string(text.substr(i, len)));
                if (it != index_.end()) {
                    best = it->second;
                    best_len = len;
                    break;
                }
            }
            if (best >= 0) {
                out.push_back(best);
                i += best_len;
            } else {
                out.push_back(static_cast<int>(entries_.size()) +
                              static_cast<int>(static_cast<unsigned char>(text[i])));
                ++i;
            }
        }
        return out;
    }

    std::string detokenize(const std::vector<int>& ids) const override {
        std::string out;
        const int n = static_cast<int>(entries_.size());
        for (int id : ids) {
            if (id >= 0 && id < n) {
                out += entries_[static_cast<std::size_t>(id)];
            } else if (id >= n && id < n + 256) {
                out += static_cast<char>(static_cast<unsigned char>(id - n));
            } else {
                throw ConfigError("vocab tokenizer: id out of range");
            }
        }
        return out;
    }

    int vocab_size() const override { return static_cast<int>(entries_.size()) + 256; }

private:
    std::vector<std::string> entries_;
    std::map<std::string, int> index_;
    std::size_t max_len_ = 0;
};

}  // namespace tlt
