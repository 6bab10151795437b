#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "soli/dataset.hpp"
#include "soli/losses.hpp"
#include "soli/trainer.hpp"

namespace soli {

// Mean pairwise embedding distances between degradation profiles, averaged
// over the probe images, plus each profile's mean distance to an unrelated
// control image (its original version).
struct DistanceReport {
    std::vector<std::string> probe_ids;
    std::string control_id;
    std::vector<std::string> profiles;
    std::vector<double> matrix;  // profiles x profiles, row-major
    std::vector<double> control; // per profile
    std::uint64_t seed = 0;
    std::uint64_t checkpoint_id = 0;

    double at(std::size_t pa, std::size_t pb) const {
        return matrix[pa * profiles.size() + pb];
    }

    // Mean over distinct profile pairs.
    double mean_cross_profile() const {
        double sum = 0;
        long n = 0;
        for (std::size_t a = 0; a < profiles.size(); ++a)
            for (std::size_t b = a + 1; b < profiles.size(); ++b) {
                sum += at(a, b);
                ++n;
            }
        return n ? sum / static_cast<double>(n) : 0.0;
    }

    double mean_control() const {
        double sum = 0;
        for (double v : control) sum += v;
        return control.empty() ? 0.0 : sum / static_cast<double>(control.size());
    }

    bool operator==(const DistanceReport&) const = default;
};

inline DistanceReport embedding_distance_report(const CaptionModel& model,
                                                const AugmentedSet& set, int n_probes,
                                                std::uint64_t seed) {
    if (n_probes < 1) throw ArgumentError("distance report: n_probes must be >= 1");
    const auto& records = set.records();
    if (records.size() < static_cast<std::size_t>(n_probes) + 1)
        throw Error("distance report: need at least " + std::to_string(n_probes + 1) +
                    " images, have " + std::to_string(records.size()));

    // Draw n_probes distinct probes plus one control, all from the seed.
    SplitMix64 rng(seed);
    std::vector<std::size_t> chosen;
    while (chosen.size() < static_cast<std::size_t>(n_probes) + 1) {
        const auto idx = static_cast<std::size_t>(rng.uniform_index(records.size()));
        if (std::find(chosen.begin(), chosen.end(), idx) == chosen.end())
            chosen.push_back(idx);
    }

    DistanceReport report;
    report.seed = seed;
    report.profiles = set.profiles();
    for (int p = 0; p < n_probes; ++p)
        report.probe_ids.push_back(records[chosen[static_cast<std::size_t>(p)]].image_id);
    report.control_id = records[chosen.back()].image_id;

    const std::size_t P = report.profiles.size();
    detail::InputCache cache(set, model.image_side);
    auto embed = [&](const std::string& id, const std::string& profile) {
        EncTape<float> tape;
        const auto batch = stack_batch<float>({&cache.get(id, profile)});
        return encoder_forward(model.enc, model.params, batch, tape);
    };

    // probe x profile embeddings, plus the control image's original.
    std::vector<std::vector<Tensor<float>>> embs(static_cast<std::size_t>(n_probes));
    for (int p = 0; p < n_probes; ++p)
        for (const auto& prof : report.profiles)
            embs[static_cast<std::size_t>(p)].push_back(embed(report.probe_ids[p], prof));
    const Tensor<float> control_emb = embed(report.control_id, "normal");

    report.matrix.assign(P * P, 0.0);
    report.control.assign(P, 0.0);
    for (std::size_t a = 0; a < P; ++a) {
        for (std::size_t b = 0; b < P; ++b) {
            if (a == b) continue;
            double sum = 0;
            for (int p = 0; p < n_probes; ++p)
                sum += euclidean_distance(embs[static_cast<std::size_t>(p)][a],
                                          embs[static_cast<std::size_t>(p)][b])[0];
            report.matrix[a * P + b] = sum / n_probes;
        }
        double csum = 0;
        for (int p = 0; p < n_probes; ++p)
            csum += euclidean_distance(embs[static_cast<std::size_t>(p)][a], control_emb)[0];
        report.control[a] = csum / n_probes;
    }
    return report;
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

inline void write_report_csv(const DistanceReport& r, std::ostream& os) {
    os << "profile_a,profile_b,mean_distance\n";
    for (std::size_t a = 0; a < r.profiles.size(); ++a) {
        for (std::size_t b = 0; b < r.profiles.size(); ++b)
            os << r.profiles[a] << "," << r.profiles[b] << ","
               << detail::format_number(r.at(a, b)) << "\n";
        os << r.profiles[a] << ",__control__," << detail::format_number(r.control[a])
           << "\n";
    }
}

inline nlohmann::json report_to_json(const DistanceReport& r) {
    return nlohmann::json{{"probe_ids", r.probe_ids}, {"control_id", r.control_id},
                          {"profiles", r.profiles},   {"matrix", r.matrix},
                          {"control", r.control},     {"seed", r.seed},
                          {"checkpoint_id", r.checkpoint_id}};
}

inline DistanceReport report_from_json(const nlohmann::json& j) {
    DistanceReport r;
    r.probe_ids = j.at("probe_ids").get<std::vector<std::string>>();
    r.control_id = j.at("control_id").get<std::string>();
    r.profiles = j.at("profiles").get<std::vector<std::string>>();
    r.matrix = j.at("matrix").get<std::vector<double>>();
    r.control = j.at("control").get<std::vector<double>>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.checkpoint_id = j.at("checkpoint_id").get<std::uint64_t>();
    return r;
}

// Dependency-free SVG heatmap: the profile-to-profile matrix with the
// control column appended after a gap. Deterministic bytes for a
// deterministic report.
inline std::string report_to_svg(const DistanceReport& r) {
    const int P = static_cast<int>(r.profiles.size());
    const int cell = 26, label = 110, gap = 12, legend = 30;
    const int width = label + (P + 1) * cell + gap + 4;
    const int height = label + P * cell + legend;

    double vmax = 0;
    for (double v : r.matrix) vmax = std::max(vmax, v);
    for (double v : r.control) vmax = std::max(vmax, v);
    if (vmax <= 0) vmax = 1;

    auto color = [&](double v) {
        const double t = std::clamp(v / vmax, 0.0, 1.0);
        const int red = static_cast<int>(std::lround(255 * t));
        const int blue = 255 - red;
        char buf[24];
        std::snprintf(buf, sizeof(buf), "#%02x30%02x", red, blue);
        return std::string(buf);
    };

    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
       << height << "\" font-family=\"monospace\" font-size=\"9\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
       << "\" fill=\"white\"/>\n";

    for (int a = 0; a < P; ++a) {
        os << "<text x=\"" << label - 4 << "\" y=\"" << label + a * cell + cell / 2 + 3
           << "\" text-anchor=\"end\">" << r.profiles[static_cast<std::size_t>(a)]
           << "</text>\n";
        os << "<text x=\"" << label + a * cell + cell / 2 << "\" y=\"" << label - 6
           << "\" text-anchor=\"start\" transform=\"rotate(-60 " << label + a * cell + cell / 2
           << " " << label - 6 << ")\">" << r.profiles[static_cast<std::size_t>(a)]
           << "</text>\n";
    }
    os << "<text x=\"" << label + P * cell + gap + cell / 2 << "\" y=\"" << label - 6
       << "\" text-anchor=\"start\" transform=\"rotate(-60 "
       << label + P * cell + gap + cell / 2 << " " << label - 6 << ")\">control</text>\n";

    for (int a = 0; a < P; ++a) {
        for (int b = 0; b < P; ++b) {
            const double v = r.at(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
            os << "<rect x=\"" << label + b * cell << "\" y=\"" << label + a * cell
               << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"" << color(v)
               << "\"><title>" << r.profiles[static_cast<std::size_t>(a)] << " vs "
               << r.profiles[static_cast<std::size_t>(b)] << ": "
               << detail::format_number(v) << "</title></rect>\n";
        }
        const double cv = r.control[static_cast<std::size_t>(a)];
        os << "<rect x=\"" << label + P * cell + gap << "\" y=\"" << label + a * cell
           << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"" << color(cv)
           << "\"><title>" << r.profiles[static_cast<std::size_t>(a)]
           << " vs control: " << detail::format_number(cv) << "</title></rect>\n";
    }

    os << "<text x=\"4\" y=\"" << height - 10 << "\">max distance "
       << detail::format_number(vmax) << ", seed " << r.seed << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

// format is one of csv | json | svg.
inline void emit_report(const DistanceReport& r, const std::filesystem::path& path,
                        const std::string& format) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write report: " + path.string());
    if (format == "csv") {
        write_report_csv(r, out);
    } else if (format == "json") {
        out << report_to_json(r).dump(2) << "\n";
    } else if (format == "svg") {
        out << report_to_svg(r);
    } else {
        throw ArgumentError("unknown report format '" + format + "' (csv|json|svg)");
    }
    if (!out) throw IoError("short write: " + path.string());
}

} // namespace soli
