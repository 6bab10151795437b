#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "soli/error.hpp"
#include "soli/image_io.hpp"
#include "soli/imageops.hpp"
#include "soli/profile.hpp"
#include "soli/rng.hpp"

namespace soli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct CaptionRecord {
    std::string image_id;
    std::string file; // relative to the manifest directory
    std::string split; // train | val | test
    std::vector<std::string> captions;

    bool operator==(const CaptionRecord&) const = default;
};

inline const std::set<std::string>& valid_splits() {
    static const std::set<std::string> kSplits = {"train", "val", "test"};
    return kSplits;
}

// One JSON object per line: {image_id, file, split, captions}.
inline std::vector<CaptionRecord> load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path.string());

    std::vector<CaptionRecord> records;
    std::unordered_map<std::string, int> first_line;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fail = [&](const std::string& what) {
            return ParseError(path.string() + ":" + std::to_string(lineno) + ": " + what);
        };
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw fail(std::string("invalid JSON: ") + e.what());
        }
        CaptionRecord r;
        for (const char* key : {"image_id", "file", "split", "captions"})
            if (!j.contains(key)) throw fail(std::string("missing key '") + key + "'");
        try {
            r.image_id = j["image_id"].get<std::string>();
            r.file = j["file"].get<std::string>();
            r.split = j["split"].get<std::string>();
            r.captions = j["captions"].get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
            throw fail(std::string("bad field type: ") + e.what());
        }
        if (!valid_splits().count(r.split))
            throw fail("unknown split '" + r.split + "' (expected train|val|test)");
        if (r.captions.empty()) throw fail("record '" + r.image_id + "' has no captions");
        auto [it, fresh] = first_line.emplace(r.image_id, lineno);
        if (!fresh)
            throw ParseError(path.string() + ": duplicate image_id '" + r.image_id +
                             "' on lines " + std::to_string(it->second) + " and " +
                             std::to_string(lineno));
        records.push_back(std::move(r));
    }
    return records;
}

inline void save_manifest(const std::vector<CaptionRecord>& records, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open manifest for writing: " + path.string());
    for (const auto& r : records) {
        nlohmann::json j{{"image_id", r.image_id},
                         {"file", r.file},
                         {"split", r.split},
                         {"captions", r.captions}};
        out << j.dump() << "\n";
    }
}

// ---------------------------------------------------------------------------
// Dimension statistics
// ---------------------------------------------------------------------------

struct AxisStats {
    double mean = 0, std_dev = 0, median = 0;
    int min = 0, max = 0;

    bool operator==(const AxisStats&) const = default;
};

struct DimensionStats {
    AxisStats height, width, channels;
    long count = 0;

    bool operator==(const DimensionStats&) const = default;
};

namespace detail {
inline AxisStats axis_stats(std::vector<int> values) {
    AxisStats s;
    const std::size_t n = values.size();
    std::sort(values.begin(), values.end());
    s.min = values.front();
    s.max = values.back();
    s.median = n % 2 ? values[n / 2]
                     : (static_cast<double>(values[n / 2 - 1]) + values[n / 2]) / 2.0;
    double sum = 0;
    for (int v : values) sum += v;
    s.mean = sum / static_cast<double>(n);
    double var = 0;
    for (int v : values) var += (v - s.mean) * (v - s.mean);
    s.std_dev = std::sqrt(var / static_cast<double>(n)); // population
    return s;
}
} // namespace detail

// Population statistics over decoded image dimensions.
inline DimensionStats compute_stats(const std::vector<CaptionRecord>& records,
                                    const fs::path& base_dir) {
    if (records.empty()) throw ArgumentError("compute_stats: no records");
    std::vector<int> hs, ws, cs;
    for (const auto& r : records) {
        const fs::path p = base_dir / r.file;
        Image img;
        try {
            img = read_image(p);
        } catch (const Error& e) {
            throw IoError("compute_stats: cannot read '" + p.string() + "': " + e.what());
        }
        hs.push_back(img.height);
        ws.push_back(img.width);
        cs.push_back(Image::kChannels);
    }
    DimensionStats s;
    s.count = static_cast<long>(records.size());
    s.height = detail::axis_stats(std::move(hs));
    s.width = detail::axis_stats(std::move(ws));
    s.channels = detail::axis_stats(std::move(cs));
    return s;
}

inline nlohmann::json stats_to_json(const DimensionStats& s) {
    auto axis = [](const AxisStats& a) {
        return nlohmann::json{{"mean", a.mean},
                              {"std_dev", a.std_dev},
                              {"median", a.median},
                              {"min", a.min},
                              {"max", a.max}};
    };
    return nlohmann::json{{"count", s.count},
                          {"height", axis(s.height)},
                          {"width", axis(s.width)},
                          {"channels", axis(s.channels)}};
}

// ---------------------------------------------------------------------------
// Augmented set
// ---------------------------------------------------------------------------

// Manifest records plus, for every (image, profile), the on-disk location of
// that degraded variant. The identity profile maps to the original file.
class AugmentedSet {
public:
    AugmentedSet() = default;

    AugmentedSet(std::vector<CaptionRecord> records, std::vector<std::string> profiles,
                 fs::path base_dir)
        : records_(std::move(records)), base_dir_(std::move(base_dir)) {
        for (std::size_t i = 0; i < records_.size(); ++i)
            id_index_.emplace(records_[i].image_id, i);
        profiles_.reserve(profiles.size());
        for (auto& p : profiles) profiles_.push_back(canonical_profile(p));
    }

    const std::vector<CaptionRecord>& records() const { return records_; }
    const std::vector<std::string>& profiles() const { return profiles_; }
    const fs::path& base_dir() const { return base_dir_; }

    const CaptionRecord& record(const std::string& image_id) const {
        auto it = id_index_.find(image_id);
        if (it == id_index_.end()) throw ArgumentError("unknown image_id: " + image_id);
        return records_[it->second];
    }

    bool has_record(const std::string& image_id) const { return id_index_.count(image_id); }

    void add_variant(const std::string& image_id, const std::string& profile, fs::path file) {
        variants_[{image_id, canonical_profile(profile)}] = std::move(file);
    }

    fs::path variant_path(const std::string& image_id, const std::string& profile) const {
        const std::string canon = canonical_profile(profile);
        if (canon == "normal") return base_dir_ / record(image_id).file;
        auto it = variants_.find({image_id, canon});
        if (it == variants_.end())
            throw ArgumentError("no stored variant for (" + image_id + ", " + canon + ")");
        return it->second;
    }

    bool has_variant(const std::string& image_id, const std::string& profile) const {
        const std::string canon = canonical_profile(profile);
        if (canon == "normal") return has_record(image_id);
        return variants_.count({image_id, canon}) != 0;
    }

    std::size_t variant_count() const { return variants_.size(); }

private:
    std::vector<CaptionRecord> records_;
    std::vector<std::string> profiles_;
    fs::path base_dir_;
    std::unordered_map<std::string, std::size_t> id_index_;
    std::map<std::pair<std::string, std::string>, fs::path> variants_;
};

struct AugmentReport {
    long written = 0;
    long skipped = 0; // byte-identical file already present
    std::vector<std::string> errors;

    bool ok() const { return errors.empty(); }
};

// Applies every non-identity profile to every record and stores the results
// as PNG under out_dir, one file per (image, profile). Existing byte-identical
// outputs are left untouched, so re-runs rewrite nothing. Per-image failures
// are collected in the report and generation continues.
inline AugmentedSet generate_augmented_set(const std::vector<CaptionRecord>& records,
                                           const std::vector<std::string>& profile_names,
                                           const fs::path& out_dir, const fs::path& base_dir,
                                           AugmentReport& report, int kernel_size = 11,
                                           int threads = 1) {
    std::vector<std::string> canon;
    for (const auto& p : profile_names) canon.push_back(canonical_profile(p));
    fs::create_directories(out_dir);

    AugmentedSet set(records, canon, base_dir);

    struct Job {
        std::size_t record;
        long written = 0, skipped = 0;
        std::vector<std::string> errors;
        std::vector<std::pair<std::string, std::string>> produced; // (profile, filename)
    };
    std::vector<Job> jobs(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) jobs[i].record = i;

    auto run_job = [&](Job& job) {
        const CaptionRecord& rec = records[job.record];
        Image original;
        try {
            original = read_image(base_dir / rec.file);
        } catch (const Error& e) {
            job.errors.push_back(rec.image_id + ": " + e.what());
            return;
        }
        for (const auto& pname : canon) {
            if (pname == "normal") continue;
            try {
                const Image variant = apply_profile(original, parse_profile(pname), kernel_size);
                const auto bytes = encode_png(variant);
                const std::string fname = rec.image_id + "__" + pname + ".png";
                const fs::path target = out_dir / fname;
                bool identical = false;
                if (fs::exists(target) && fs::file_size(target) == bytes.size()) {
                    std::ifstream in(target, std::ios::binary);
                    std::vector<std::uint8_t> existing(
                        (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
                    identical = existing == bytes;
                }
                if (identical) {
                    ++job.skipped;
                } else {
                    std::ofstream out(target, std::ios::binary | std::ios::trunc);
                    if (!out) throw IoError("cannot write " + target.string());
                    out.write(reinterpret_cast<const char*>(bytes.data()),
                              static_cast<std::streamsize>(bytes.size()));
                    ++job.written;
                }
                job.produced.emplace_back(pname, fname);
            } catch (const Error& e) {
                job.errors.push_back(rec.image_id + " [" + pname + "]: " + e.what());
            }
        }
    };

    if (threads <= 1) {
        for (auto& job : jobs) run_job(job);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1))
                    run_job(jobs[i]);
            });
        for (auto& th : pool) th.join();
    }

    // Deterministic aggregation in record order regardless of thread count.
    std::ofstream vm(out_dir / "variants.jsonl", std::ios::trunc);
    if (!vm) throw IoError("cannot write variants manifest in " + out_dir.string());
    for (const auto& job : jobs) {
        report.written += job.written;
        report.skipped += job.skipped;
        for (const auto& e : job.errors) report.errors.push_back(e);
        for (const auto& [pname, fname] : job.produced) {
            set.add_variant(records[job.record].image_id, pname, out_dir / fname);
            vm << nlohmann::json{{"image_id", records[job.record].image_id},
                                 {"profile", pname},
                                 {"file", fname}}
                      .dump()
               << "\n";
        }
    }
    return set;
}

// Rebuilds an AugmentedSet from a previously written variants manifest.
inline AugmentedSet load_augmented_set(const std::vector<CaptionRecord>& records,
                                       const fs::path& variants_manifest,
                                       const fs::path& base_dir) {
    std::ifstream in(variants_manifest);
    if (!in) throw IoError("cannot open variants manifest: " + variants_manifest.string());
    const fs::path var_dir = variants_manifest.parent_path();

    std::vector<std::string> profiles = {"normal"};
    AugmentedSet set(records, {}, base_dir);
    std::set<std::string> seen;
    std::string line;
    int lineno = 0;
    std::vector<std::tuple<std::string, std::string, std::string>> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(variants_manifest.string() + ":" + std::to_string(lineno) +
                             ": invalid JSON: " + e.what());
        }
        rows.emplace_back(j.at("image_id").get<std::string>(),
                          j.at("profile").get<std::string>(),
                          j.at("file").get<std::string>());
    }
    AugmentedSet probe(records, {}, base_dir);
    for (const auto& [id, prof, file] : rows) {
        if (!probe.has_record(id))
            throw ParseError(variants_manifest.string() + ": variant for unknown image_id '" +
                             id + "'");
        const std::string canon = canonical_profile(prof);
        if (seen.insert(canon).second) profiles.push_back(canon);
    }
    AugmentedSet out(records, profiles, base_dir);
    for (const auto& [id, prof, file] : rows)
        out.add_variant(id, canonical_profile(prof), var_dir / file);
    return out;
}

// ---------------------------------------------------------------------------
// Siamese pair sampling
// ---------------------------------------------------------------------------

struct SiamesePair {
    std::string left_id, right_id;
    std::string left_profile, right_profile;
    int similarity = 0; // 1 same image, 0 different images
    const std::vector<std::string>* captions_left = nullptr;
    const std::vector<std::string>* captions_right = nullptr;
};

// One pair draw. The anchor (left) is always the original image; a coin with
// the given probability picks positive (same image, uniformly chosen profile
// including the identity) versus negative (uniformly chosen other image under
// a uniformly chosen profile). Draw order: coin, anchor, [other], profile.
inline SiamesePair sample_pair(const AugmentedSet& set, const std::vector<int>& pool,
                               SplitMix64& rng, double positive_prob) {
    if (positive_prob < 0.0 || positive_prob > 1.0)
        throw ArgumentError("positive_prob must be in [0,1]");
    if (pool.empty()) throw ArgumentError("sample_pair: empty image pool");
    const auto& profiles = set.profiles();
    if (profiles.empty()) throw ArgumentError("sample_pair: set has no profiles");

    const bool positive = rng.coin(positive_prob);
    const auto& records = set.records();
    const std::size_t anchor_slot = static_cast<std::size_t>(rng.uniform_index(pool.size()));
    const int anchor = pool[anchor_slot];

    SiamesePair pair;
    pair.left_id = records[static_cast<std::size_t>(anchor)].image_id;
    pair.left_profile = "normal";
    pair.captions_left = &records[static_cast<std::size_t>(anchor)].captions;

    if (positive) {
        pair.similarity = 1;
        pair.right_id = pair.left_id;
        pair.captions_right = pair.captions_left;
    } else {
        if (pool.size() < 2)
            throw Error("sample_pair: negative pair requested but fewer than 2 images");
        std::size_t pos = static_cast<std::size_t>(rng.uniform_index(pool.size() - 1));
        if (pos >= anchor_slot) ++pos; // skip the anchor slot
        const int other = pool[pos];
        pair.similarity = 0;
        pair.right_id = records[static_cast<std::size_t>(other)].image_id;
        pair.captions_right = &records[static_cast<std::size_t>(other)].captions;
    }
    pair.right_profile = profiles[static_cast<std::size_t>(rng.uniform_index(profiles.size()))];
    return pair;
}

} // namespace soli
