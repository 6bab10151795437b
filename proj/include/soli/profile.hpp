#pragma once

#include <charconv>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "soli/error.hpp"

namespace soli {

// One degradation recipe, named by the grammar R<ratio>S<step>[_GF<sigma>].
// The literal "normal" names the identity profile {ratio 1, step 1, no blur}.
struct AugProfile {
    double ratio = 1.0;
    int step = 1;
    std::optional<double> sigma;

    // Identity means no resampling and no blur; step is irrelevant then.
    bool identity() const { return ratio == 1.0 && !sigma.has_value(); }

    std::string name() const;

    bool operator==(const AugProfile&) const = default;
};

namespace detail {

inline std::string format_number(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

inline bool parse_number(std::string_view s, double& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && !s.empty();
}

// Consumes the longest [0-9.]* run starting at pos.
inline std::string_view take_decimal(std::string_view s, std::size_t& pos) {
    std::size_t start = pos;
    while (pos < s.size() && ((s[pos] >= '0' && s[pos] <= '9') || s[pos] == '.'))
        ++pos;
    return s.substr(start, pos - start);
}

} // namespace detail

inline std::string AugProfile::name() const {
    if (ratio == 1.0 && step == 1 && !sigma.has_value()) return "normal";
    std::string out = "R" + detail::format_number(ratio) + "S" + std::to_string(step);
    if (sigma.has_value()) out += "_GF" + detail::format_number(*sigma);
    return out;
}

inline AugProfile parse_profile(std::string_view name) {
    if (name == "normal") return AugProfile{};

    auto malformed = [&] {
        return ParseError("malformed profile '" + std::string(name) +
                          "': expected R<ratio>S<step>[_GF<sigma>] or 'normal'");
    };

    std::size_t pos = 0;
    if (pos >= name.size() || name[pos] != 'R') throw malformed();
    ++pos;
    double ratio = 0.0;
    if (!detail::parse_number(detail::take_decimal(name, pos), ratio)) throw malformed();

    if (pos >= name.size() || name[pos] != 'S') throw malformed();
    ++pos;
    std::size_t digits_start = pos;
    while (pos < name.size() && name[pos] >= '0' && name[pos] <= '9') ++pos;
    if (pos == digits_start) throw malformed();
    int step = 0;
    {
        auto sv = name.substr(digits_start, pos - digits_start);
        auto [ptr, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), step);
        if (ec != std::errc() || ptr != sv.data() + sv.size()) throw malformed();
    }

    std::optional<double> sigma;
    if (pos < name.size()) {
        if (name.substr(pos, 3) != "_GF") throw malformed();
        pos += 3;
        double s = 0.0;
        if (!detail::parse_number(detail::take_decimal(name, pos), s)) throw malformed();
        if (pos != name.size()) throw malformed();
        sigma = s;
    }

    if (!(ratio > 0.0 && ratio <= 1.0))
        throw ParseError("profile '" + std::string(name) + "': ratio must be in (0, 1]");
    if (step < 1)
        throw ParseError("profile '" + std::string(name) + "': step must be >= 1");
    if (sigma.has_value() && !(*sigma > 0.0))
        throw ParseError("profile '" + std::string(name) + "': sigma must be > 0");

    return AugProfile{ratio, step, sigma};
}

inline std::string canonical_profile(std::string_view name) {
    return parse_profile(name).name();
}

// The ten stock degradation recipes, identity first.
inline const std::vector<std::string>& default_profiles() {
    static const std::vector<std::string> kProfiles = {
        "normal",     "R0.5S50", "R0.5S1",     "R0.2S50",      "R0.2S1",
        "R0.1S50",    "R0.1S1",  "R1S1_GF500", "R0.5S1_GF500", "R0.05S50",
    };
    return kProfiles;
}

} // namespace soli
