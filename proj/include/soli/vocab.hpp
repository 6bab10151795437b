#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "soli/error.hpp"

namespace soli {

// Caption tokenizer: lowercase, punctuation to spaces, whitespace split.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        unsigned char u = static_cast<unsigned char>(ch);
        if (std::isalnum(u)) {
            cur += static_cast<char>(std::tolower(u));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

// Token <-> id map with four reserved ids. Non-reserved ids are assigned by
// descending corpus frequency, ties broken lexicographically, so the same
// corpus always yields the same vocabulary.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;
    static constexpr int kReserved = 4;

    Vocabulary() = default;

    static Vocabulary build(const std::vector<std::string>& captions, int min_frequency) {
        if (captions.empty()) throw ArgumentError("cannot build vocabulary: empty corpus");
        std::unordered_map<std::string, long> freq;
        for (const auto& cap : captions)
            for (auto& tok : tokenize(cap)) ++freq[tok];

        std::vector<std::pair<std::string, long>> kept;
        for (auto& [tok, n] : freq)
            if (n >= min_frequency) kept.emplace_back(tok, n);
        std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });

        Vocabulary v;
        v.min_frequency_ = min_frequency;
        for (auto& [tok, n] : kept) {
            (void)n;
            v.token_to_id_.emplace(tok, static_cast<int>(v.tokens_.size()) + kReserved);
            v.tokens_.push_back(tok);
        }
        return v;
    }

    int size() const { return static_cast<int>(tokens_.size()) + kReserved; }
    int min_frequency() const { return min_frequency_; }

    int id(const std::string& token) const {
        auto it = token_to_id_.find(token);
        return it == token_to_id_.end() ? kUnk : it->second;
    }

    const std::string& token(int id) const {
        static const std::string reserved[kReserved] = {"<pad>", "<bos>", "<eos>", "<unk>"};
        if (id < 0 || id >= size())
            throw ArgumentError("token id " + std::to_string(id) + " out of range [0, " +
                                std::to_string(size()) + ")");
        if (id < kReserved) return reserved[id];
        return tokens_[static_cast<std::size_t>(id) - kReserved];
    }

    std::vector<int> encode(std::string_view caption) const {
        std::vector<int> ids;
        for (auto& tok : tokenize(caption)) ids.push_back(id(tok));
        return ids;
    }

    std::vector<std::string> decode(const std::vector<int>& ids) const {
        std::vector<std::string> out;
        out.reserve(ids.size());
        for (int i : ids) out.push_back(token(i));
        return out;
    }

    // Caption words only; reserved ids are dropped.
    std::vector<std::string> decode_words(const std::vector<int>& ids) const {
        std::vector<std::string> out;
        for (int i : ids)
            if (i >= kReserved) out.push_back(token(i));
        return out;
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"min_frequency", min_frequency_}, {"tokens", tokens_}};
    }

    static Vocabulary from_json(const nlohmann::json& j) {
        Vocabulary v;
        v.min_frequency_ = j.at("min_frequency").get<int>();
        v.tokens_ = j.at("tokens").get<std::vector<std::string>>();
        for (std::size_t i = 0; i < v.tokens_.size(); ++i)
            v.token_to_id_.emplace(v.tokens_[i], static_cast<int>(i) + kReserved);
        return v;
    }

    bool operator==(const Vocabulary& o) const {
        return tokens_ == o.tokens_ && min_frequency_ == o.min_frequency_;
    }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> token_to_id_;
    int min_frequency_ = 1;
};

} // namespace soli
