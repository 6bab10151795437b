#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "soli/dataset.hpp"
#include "soli/error.hpp"
#include "soli/stemmer.hpp"
#include "soli/trainer.hpp"
#include "soli/vocab.hpp"

namespace soli {

using TokenList = std::vector<std::string>;

// ---------------------------------------------------------------------------
// BLEU
// ---------------------------------------------------------------------------

namespace detail {

// n-gram multiset keyed by the joined token string.
inline std::map<std::string, long> ngram_counts(const TokenList& tokens, int n) {
    std::map<std::string, long> counts;
    if (static_cast<int>(tokens.size()) < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key;
        for (int k = 0; k < n; ++k) {
            if (k) key += '\x1f';
            key += tokens[i + static_cast<std::size_t>(k)];
        }
        ++counts[key];
    }
    return counts;
}

} // namespace detail

// Corpus-level BLEU with modified (clipped) n-gram precision, geometric mean
// over n = 1..max_n, and the closest-reference-length brevity penalty.
// No smoothing: a zero precision at any order zeroes the score.
inline double bleu(const std::vector<TokenList>& candidates,
                   const std::vector<std::vector<TokenList>>& references, int max_n) {
    if (candidates.empty()) throw ArgumentError("bleu: empty candidate list");
    if (candidates.size() != references.size())
        throw ArgumentError("bleu: candidate/reference count mismatch");
    if (max_n < 1) throw ArgumentError("bleu: max_n must be >= 1");
    for (const auto& refs : references)
        if (refs.empty()) throw ArgumentError("bleu: empty reference set");

    long cand_len = 0, ref_len = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const long c = static_cast<long>(candidates[i].size());
        cand_len += c;
        // Closest reference length; ties go to the shorter reference.
        long best = static_cast<long>(references[i][0].size());
        for (const auto& r : references[i]) {
            const long rl = static_cast<long>(r.size());
            if (std::abs(rl - c) < std::abs(best - c) ||
                (std::abs(rl - c) == std::abs(best - c) && rl < best))
                best = rl;
        }
        ref_len += best;
    }
    if (cand_len == 0) return 0.0;

    double log_precision_sum = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        long matched = 0, total = 0;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const auto cand_counts = detail::ngram_counts(candidates[i], n);
            std::map<std::string, long> max_ref;
            for (const auto& r : references[i])
                for (const auto& [gram, cnt] : detail::ngram_counts(r, n))
                    max_ref[gram] = std::max(max_ref[gram], cnt);
            for (const auto& [gram, cnt] : cand_counts) {
                auto it = max_ref.find(gram);
                matched += std::min(cnt, it == max_ref.end() ? 0L : it->second);
                total += cnt;
            }
        }
        if (matched == 0 || total == 0) return 0.0;
        log_precision_sum += std::log(static_cast<double>(matched) / total);
    }

    const double bp =
        cand_len < ref_len ? std::exp(1.0 - static_cast<double>(ref_len) / cand_len) : 1.0;
    return bp * std::exp(log_precision_sum / max_n);
}

// ---------------------------------------------------------------------------
// METEOR
// ---------------------------------------------------------------------------

namespace detail {

struct AlignedPair {
    int c; // candidate index
    int r; // reference index
};

// Maximum non-crossing matching over [c0,c1) x [r0,r1) for a pairwise
// predicate, tie-broken toward the most adjacent (c,r)->(c+1,r+1) links,
// which minimizes the chunk count among maximal alignments.
//
// dp state: g[i][j][k] is the best (matches, links) over alignments of the
// first i candidate and j reference tokens where k=1 restricts to alignments
// that pair (i-1, j-1) with each other. Links count adjacent matched pairs.
template <typename Pred>
std::vector<AlignedPair> max_noncrossing_matching(int c0, int c1, int r0, int r1,
                                                  Pred&& match) {
    const int n = c1 - c0, m = r1 - r0;
    if (n <= 0 || m <= 0) return {};

    struct Cell {
        int matches = -1; // -1: unreachable state
        int links = 0;
        signed char move = -1; // 0 skip candidate, 1 skip reference, 2 take pair
        signed char prev_k = 0;
    };
    std::vector<Cell> dp(static_cast<std::size_t>(n + 1) * (m + 1) * 2);
    auto at = [&](int i, int j, int k) -> Cell& {
        return dp[(static_cast<std::size_t>(i) * (m + 1) + j) * 2 + k];
    };
    auto better = [](const Cell& a, int matches, int links) {
        return matches > a.matches || (matches == a.matches && links > a.links);
    };

    at(0, 0, 0) = Cell{0, 0, -1, 0};
    for (int j = 1; j <= m; ++j) at(0, j, 0) = Cell{0, 0, 1, 0};
    for (int i = 1; i <= n; ++i) at(i, 0, 0) = Cell{0, 0, 0, 0};

    for (int i = 1; i <= n; ++i)
        for (int j = 1; j <= m; ++j) {
            Cell skip; // k = 0
            for (int pk = 0; pk < 2; ++pk) {
                const Cell& up = at(i - 1, j, pk);
                if (up.matches >= 0 && better(skip, up.matches, up.links))
                    skip = Cell{up.matches, up.links, 0, static_cast<signed char>(pk)};
                const Cell& left = at(i, j - 1, pk);
                if (left.matches >= 0 && better(skip, left.matches, left.links))
                    skip = Cell{left.matches, left.links, 1, static_cast<signed char>(pk)};
            }
            at(i, j, 0) = skip;

            if (match(c0 + i - 1, r0 + j - 1)) {
                Cell take;
                for (int pk = 0; pk < 2; ++pk) {
                    const Cell& diag = at(i - 1, j - 1, pk);
                    if (diag.matches < 0) continue;
                    const int matches = diag.matches + 1;
                    const int links = diag.links + pk;
                    if (better(take, matches, links))
                        take = Cell{matches, links, 2, static_cast<signed char>(pk)};
                }
                at(i, j, 1) = take;
            }
        }

    int k = 0;
    if (at(n, m, 1).matches >= 0 &&
        better(at(n, m, 0), at(n, m, 1).matches, at(n, m, 1).links))
        k = 1;

    std::vector<AlignedPair> out;
    int i = n, j = m;
    while (i > 0 || j > 0) {
        const Cell& c = at(i, j, k);
        if (c.move == 2) {
            out.push_back({c0 + i - 1, r0 + j - 1});
            k = c.prev_k;
            --i;
            --j;
        } else if (c.move == 0) {
            k = c.prev_k;
            --i;
        } else {
            k = c.prev_k;
            --j;
        }
    }
    std::reverse(out.begin(), out.end());
    return out;
}

inline int count_chunks(const std::vector<AlignedPair>& pairs) {
    if (pairs.empty()) return 0;
    int chunks = 1;
    for (std::size_t i = 1; i < pairs.size(); ++i)
        if (pairs[i].c != pairs[i - 1].c + 1 || pairs[i].r != pairs[i - 1].r + 1) ++chunks;
    return chunks;
}

} // namespace detail

// Single-reference METEOR: exact alignment first, stem alignment over the
// gaps it leaves, fragmentation penalty on the combined chunks.
inline double meteor_single(const TokenList& candidate, const TokenList& reference) {
    if (candidate.empty() || reference.empty()) return 0.0;
    const int n = static_cast<int>(candidate.size());
    const int m = static_cast<int>(reference.size());

    auto exact = [&](int c, int r) {
        return candidate[static_cast<std::size_t>(c)] == reference[static_cast<std::size_t>(r)];
    };
    auto anchors = detail::max_noncrossing_matching(0, n, 0, m, exact);

    std::vector<std::string> cand_stem(candidate.size()), ref_stem(reference.size());
    for (std::size_t i = 0; i < candidate.size(); ++i) cand_stem[i] = porter::stem(candidate[i]);
    for (std::size_t i = 0; i < reference.size(); ++i) ref_stem[i] = porter::stem(reference[i]);
    auto stems = [&](int c, int r) {
        return cand_stem[static_cast<std::size_t>(c)] == ref_stem[static_cast<std::size_t>(r)];
    };

    // Stage 2 fills the gaps between consecutive anchors, keeping the whole
    // alignment non-crossing.
    std::vector<detail::AlignedPair> all;
    int prev_c = 0, prev_r = 0;
    for (std::size_t a = 0; a <= anchors.size(); ++a) {
        const int next_c = a < anchors.size() ? anchors[a].c : n;
        const int next_r = a < anchors.size() ? anchors[a].r : m;
        for (auto& p : detail::max_noncrossing_matching(prev_c, next_c, prev_r, next_r, stems))
            all.push_back(p);
        if (a < anchors.size()) {
            all.push_back(anchors[a]);
            prev_c = anchors[a].c + 1;
            prev_r = anchors[a].r + 1;
        }
    }

    const long matches = static_cast<long>(all.size());
    if (matches == 0) return 0.0;
    const int chunks = detail::count_chunks(all);

    const double p = static_cast<double>(matches) / n;
    const double r = static_cast<double>(matches) / m;
    const double f = 10.0 * p * r / (r + 9.0 * p);
    const double frag = static_cast<double>(chunks) / static_cast<double>(matches);
    const double penalty = 0.5 * frag * frag * frag;
    return f * (1.0 - penalty);
}

// Score against each reference independently, report the maximum.
inline double meteor(const TokenList& candidate, const std::vector<TokenList>& references) {
    if (references.empty()) throw ArgumentError("meteor: empty reference set");
    double best = 0.0;
    for (const auto& ref : references) best = std::max(best, meteor_single(candidate, ref));
    return best;
}

// ---------------------------------------------------------------------------
// Checkpoint evaluation
// ---------------------------------------------------------------------------

struct EvalRow {
    std::string profile;
    double b1 = 0, b4 = 0, meteor = 0;
    long candidates = 0;
};

struct EvalResult {
    std::vector<EvalRow> rows; // one per profile, then the "Mean" row
    std::string split;
    long corpus_size = 0;
    std::uint64_t checkpoint_id = 0;
    std::vector<std::string> missing; // variant files that failed to load

    bool ok() const { return missing.empty(); }

    void write_csv(std::ostream& os) const {
        os << "profile,B1,B4,M\n";
        for (const auto& r : rows)
            os << r.profile << "," << detail::format_number(r.b1) << ","
               << detail::format_number(r.b4) << "," << detail::format_number(r.meteor)
               << "\n";
    }

    nlohmann::json to_json() const {
        nlohmann::json rows_json = nlohmann::json::array();
        for (const auto& r : rows)
            rows_json.push_back({{"profile", r.profile},
                                 {"B1", r.b1},
                                 {"B4", r.b4},
                                 {"M", r.meteor},
                                 {"candidates", r.candidates}});
        return nlohmann::json{{"rows", rows_json},
                              {"split", split},
                              {"corpus_size", corpus_size},
                              {"checkpoint_id", checkpoint_id},
                              {"missing", missing}};
    }
};

// Caption every image of the split under every profile and score against all
// of its references. Images may be captioned in parallel; scoring and row
// order are fixed, so the result is identical for any thread count.
inline EvalResult evaluate_model(const CaptionModel& model, const AugmentedSet& set,
                                 const std::vector<std::string>& profile_names,
                                 const std::string& split, int threads = 1,
                                 std::uint64_t checkpoint_id = 0) {
    std::vector<std::string> profiles;
    for (const auto& p : profile_names) profiles.push_back(canonical_profile(p));

    std::vector<const CaptionRecord*> records;
    for (const auto& r : set.records())
        if (r.split == split) records.push_back(&r);
    if (records.empty()) throw Error("evaluate: split '" + split + "' is empty");

    struct Job {
        const CaptionRecord* rec;
        const std::string* profile;
        TokenList candidate;
        bool failed = false;
        std::string error;
    };
    std::vector<Job> jobs;
    for (const auto& p : profiles)
        for (const auto* r : records) jobs.push_back(Job{r, &p, {}, false, {}});

    auto run_job = [&](Job& job) {
        fs::path path;
        try {
            path = set.variant_path(job.rec->image_id, *job.profile);
            const Image img = read_image(path);
            const auto input = preprocess<float>(img, model.image_side);
            const auto batch = stack_batch<float>({&input});
            EncTape<float> tape;
            const auto emb = encoder_forward(model.enc, model.params, batch, tape);
            const auto ids = greedy_decode(
                model.dec, model.params,
                std::span<const float>(emb.data.data(), emb.data.size()),
                model.max_caption_len);
            job.candidate = model.vocab.decode_words(ids);
        } catch (const Error& e) {
            job.failed = true;
            job.error = job.rec->image_id + " [" + *job.profile + "]: " + e.what();
        }
    };

    if (threads <= 1) {
        for (auto& j : jobs) run_job(j);
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

    EvalResult result;
    result.split = split;
    result.corpus_size = static_cast<long>(records.size());
    result.checkpoint_id = checkpoint_id;

    std::size_t job_idx = 0;
    double b1_sum = 0, b4_sum = 0, meteor_sum = 0;
    for (const auto& profile : profiles) {
        std::vector<TokenList> cands;
        std::vector<std::vector<TokenList>> refs;
        double meteor_acc = 0;
        for (std::size_t r = 0; r < records.size(); ++r) {
            Job& job = jobs[job_idx++];
            if (job.failed) {
                result.missing.push_back(job.error);
                continue;
            }
            std::vector<TokenList> ref_tokens;
            for (const auto& cap : job.rec->captions) ref_tokens.push_back(tokenize(cap));
            meteor_acc += meteor(job.candidate, ref_tokens);
            cands.push_back(std::move(job.candidate));
            refs.push_back(std::move(ref_tokens));
        }
        EvalRow row;
        row.profile = profile;
        row.candidates = static_cast<long>(cands.size());
        if (!cands.empty()) {
            row.b1 = bleu(cands, refs, 1);
            row.b4 = bleu(cands, refs, 4);
            row.meteor = meteor_acc / static_cast<double>(cands.size());
        }
        b1_sum += row.b1;
        b4_sum += row.b4;
        meteor_sum += row.meteor;
        result.rows.push_back(std::move(row));
    }

    EvalRow mean;
    mean.profile = "Mean";
    const double np = static_cast<double>(profiles.size());
    mean.b1 = b1_sum / np;
    mean.b4 = b4_sum / np;
    mean.meteor = meteor_sum / np;
    mean.candidates = static_cast<long>(records.size());
    result.rows.push_back(std::move(mean));
    return result;
}

} // namespace soli
