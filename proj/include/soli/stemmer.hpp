#pragma once

#include <string>
#include <string_view>

namespace soli {

// Classic suffix-stripping stemmer (Porter, 1980). Lowercase ASCII input.
namespace porter {

namespace detail {

inline bool is_vowel_at(const std::string& w, std::size_t i) {
    switch (w[i]) {
    case 'a': case 'e': case 'i': case 'o': case 'u': return true;
    case 'y': return i > 0 && !is_vowel_at(w, i - 1);
    default: return false;
    }
}

// Number of VC sequences in w[0..len).
inline int measure(const std::string& w, std::size_t len) {
    int m = 0;
    bool in_vowel_run = false;
    for (std::size_t i = 0; i < len; ++i) {
        if (is_vowel_at(w, i)) {
            in_vowel_run = true;
        } else if (in_vowel_run) {
            ++m;
            in_vowel_run = false;
        }
    }
    return m;
}

inline bool has_vowel(const std::string& w, std::size_t len) {
    for (std::size_t i = 0; i < len; ++i)
        if (is_vowel_at(w, i)) return true;
    return false;
}

inline bool double_consonant(const std::string& w, std::size_t len) {
    return len >= 2 && w[len - 1] == w[len - 2] && !is_vowel_at(w, len - 1);
}

// consonant-vowel-consonant ending where the final consonant is not w, x, y.
inline bool cvc(const std::string& w, std::size_t len) {
    if (len < 3) return false;
    if (is_vowel_at(w, len - 1) || !is_vowel_at(w, len - 2) || is_vowel_at(w, len - 3))
        return false;
    const char last = w[len - 1];
    return last != 'w' && last != 'x' && last != 'y';
}

inline bool ends_with(const std::string& w, std::string_view suffix) {
    return w.size() >= suffix.size() &&
           w.compare(w.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Replace suffix when the measure of the remaining stem passes the gate.
inline bool replace_m(std::string& w, std::string_view suffix, std::string_view repl,
                      int min_m) {
    if (!ends_with(w, suffix)) return false;
    const std::size_t stem = w.size() - suffix.size();
    if (measure(w, stem) <= min_m) return true; // suffix matched, rule gate failed
    w.resize(stem);
    w.append(repl);
    return true;
}

} // namespace detail

inline std::string stem(std::string w) {
    using namespace detail;
    if (w.size() <= 2) return w;

    // Step 1a
    if (ends_with(w, "sses")) w.resize(w.size() - 2);
    else if (ends_with(w, "ies")) w.resize(w.size() - 2);
    else if (!ends_with(w, "ss") && ends_with(w, "s")) w.resize(w.size() - 1);

    // Step 1b
    bool cleanup = false;
    if (ends_with(w, "eed")) {
        if (measure(w, w.size() - 3) > 0) w.resize(w.size() - 1);
    } else if (ends_with(w, "ed") && has_vowel(w, w.size() - 2)) {
        w.resize(w.size() - 2);
        cleanup = true;
    } else if (ends_with(w, "ing") && has_vowel(w, w.size() - 3)) {
        w.resize(w.size() - 3);
        cleanup = true;
    }
    if (cleanup) {
        if (ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz")) {
            w += 'e';
        } else if (double_consonant(w, w.size()) && !ends_with(w, "l") &&
                   !ends_with(w, "s") && !ends_with(w, "z")) {
            w.resize(w.size() - 1);
        } else if (measure(w, w.size()) == 1 && cvc(w, w.size())) {
            w += 'e';
        }
    }

    // Step 1c
    if (ends_with(w, "y") && has_vowel(w, w.size() - 1)) w[w.size() - 1] = 'i';

    // Step 2
    if (!w.empty()) {
        static const std::pair<std::string_view, std::string_view> rules[] = {
            {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"}, {"anci", "ance"},
            {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},   {"entli", "ent"},
            {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
            {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
            {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},   {"biliti", "ble"},
        };
        for (const auto& [suf, rep] : rules)
            if (replace_m(w, suf, rep, 0)) break;
    }

    // Step 3
    {
        static const std::pair<std::string_view, std::string_view> rules[] = {
            {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
            {"ical", "ic"},  {"ful", ""},   {"ness", ""},
        };
        for (const auto& [suf, rep] : rules)
            if (replace_m(w, suf, rep, 0)) break;
    }

    // Step 4
    {
        static const std::string_view suffixes[] = {
            "al",  "ance", "ence", "er",  "ic",  "able", "ible", "ant", "ement",
            "ment", "ent", "ion",  "ou",  "ism", "ate",  "iti",  "ous", "ive", "ize",
        };
        for (const auto& suf : suffixes) {
            if (!ends_with(w, suf)) continue;
            const std::size_t stem_len = w.size() - suf.size();
            if (measure(w, stem_len) > 1) {
                if (suf == "ion" && stem_len > 0 && w[stem_len - 1] != 's' &&
                    w[stem_len - 1] != 't')
                    break;
                w.resize(stem_len);
            }
            break;
        }
    }

    // Step 5a
    if (ends_with(w, "e")) {
        const int m = measure(w, w.size() - 1);
        if (m > 1 || (m == 1 && !cvc(w, w.size() - 1))) w.resize(w.size() - 1);
    }
    // Step 5b
    if (measure(w, w.size()) > 1 && double_consonant(w, w.size()) && ends_with(w, "l"))
        w.resize(w.size() - 1);

    return w;
}

} // namespace porter
} // namespace soli
