#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "soli/checkpoint.hpp"
#include "soli/dataset.hpp"
#include "soli/losses.hpp"
#include "soli/nn.hpp"
#include "soli/params.hpp"
#include "soli/rng.hpp"

namespace soli {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& train_modes() {
    static const std::vector<std::string> kModes = {"baseline", "soli-half", "soli-par",
                                                    "soli-con"};
    return kModes;
}

// Flat key=value configuration; -1 / empty means "use the default or the
// warm-start checkpoint's value" for the model-shape fields.
struct TrainConfig {
    std::string mode = "baseline";
    int epochs = 10;
    int batch_size = 8;
    double learning_rate = 1e-3;
    double gamma = 1.0;
    double lambda = 1.0;
    double margin = 1.0;
    double positive_prob = 0.5;
    std::uint64_t seed = 0;
    std::vector<std::string> profiles; // empty = the stock ten
    int epochs_phase_a = 0;            // soli-con only
    int epochs_phase_b = 0;

    // Model shape overrides (sentinel: unset).
    int image_side = -1;
    int embed_dim = -1;
    int hidden_dim = -1;
    int token_dim = -1;
    std::vector<int> enc_channels;
    int max_caption_len = -1;
    int min_token_freq = -1;
    int kernel_size = -1;

    void apply_kv(const std::string& key, const std::string& value);
    void validate() const;
    std::string canonical_kv() const;
    std::uint64_t config_hash() const {
        const std::string kv = canonical_kv();
        return fnv1a(kv.data(), kv.size());
    }
    std::vector<std::string> effective_profiles() const {
        std::vector<std::string> out;
        for (const auto& p : profiles.empty() ? default_profiles() : profiles)
            out.push_back(canonical_profile(p));
        return out;
    }
};

namespace detail {

inline long parse_long(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        long v = std::stol(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': not an integer: '" + value + "'");
    }
}

inline double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': not a number: '" + value + "'");
    }
}

inline std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

} // namespace detail

inline void TrainConfig::apply_kv(const std::string& key, const std::string& value) {
    if (key == "mode") mode = value;
    else if (key == "epochs") epochs = static_cast<int>(detail::parse_long(key, value));
    else if (key == "batch_size") batch_size = static_cast<int>(detail::parse_long(key, value));
    else if (key == "learning_rate") learning_rate = detail::parse_double(key, value);
    else if (key == "gamma") gamma = detail::parse_double(key, value);
    else if (key == "lambda") lambda = detail::parse_double(key, value);
    else if (key == "margin") margin = detail::parse_double(key, value);
    else if (key == "positive_prob") positive_prob = detail::parse_double(key, value);
    else if (key == "seed") seed = static_cast<std::uint64_t>(detail::parse_long(key, value));
    else if (key == "profiles") profiles = detail::split_csv(value);
    else if (key == "epochs_phase_a") epochs_phase_a = static_cast<int>(detail::parse_long(key, value));
    else if (key == "epochs_phase_b") epochs_phase_b = static_cast<int>(detail::parse_long(key, value));
    else if (key == "image_side") image_side = static_cast<int>(detail::parse_long(key, value));
    else if (key == "embed_dim") embed_dim = static_cast<int>(detail::parse_long(key, value));
    else if (key == "hidden_dim") hidden_dim = static_cast<int>(detail::parse_long(key, value));
    else if (key == "token_dim") token_dim = static_cast<int>(detail::parse_long(key, value));
    else if (key == "enc_channels") {
        enc_channels.clear();
        for (const auto& c : detail::split_csv(value))
            enc_channels.push_back(static_cast<int>(detail::parse_long(key, c)));
    } else if (key == "max_caption_len") max_caption_len = static_cast<int>(detail::parse_long(key, value));
    else if (key == "min_token_freq") min_token_freq = static_cast<int>(detail::parse_long(key, value));
    else if (key == "kernel_size") kernel_size = static_cast<int>(detail::parse_long(key, value));
    else throw ConfigError("unknown config key '" + key + "'");
}

inline TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path.string());
    TrainConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        // trim
        auto notspace = [](unsigned char c) { return !std::isspace(c); };
        line.erase(line.begin(), std::find_if(line.begin(), line.end(), notspace));
        line.erase(std::find_if(line.rbegin(), line.rend(), notspace).base(), line.end());
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": expected key=value, got '" + line + "'");
        std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        key.erase(std::find_if(key.rbegin(), key.rend(), notspace).base(), key.end());
        value.erase(value.begin(), std::find_if(value.begin(), value.end(), notspace));
        cfg.apply_kv(key, value);
    }
    return cfg;
}

inline void TrainConfig::validate() const {
    if (std::find(train_modes().begin(), train_modes().end(), mode) == train_modes().end())
        throw ConfigError("unknown mode '" + mode +
                          "' (expected baseline|soli-half|soli-par|soli-con)");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
    if (!(margin > 0)) throw ConfigError("margin must be > 0");
    if (gamma < 0 || lambda < 0) throw ConfigError("gamma and lambda must be >= 0");
    if (positive_prob < 0 || positive_prob > 1)
        throw ConfigError("positive_prob must be in [0,1]");
    if ((mode == "soli-par" || mode == "soli-con") && gamma == 0 && lambda == 0)
        throw ConfigError("gamma and lambda cannot both be zero");
    if (mode == "soli-con") {
        if (epochs_phase_a < 0 || epochs_phase_b < 0)
            throw ConfigError("soli-con phase epochs must be >= 0");
        if (epochs_phase_a + epochs_phase_b < 1)
            throw ConfigError("soli-con needs epochs_phase_a + epochs_phase_b >= 1");
    }
    for (const auto& p : effective_profiles()) (void)parse_profile(p);
    for (int c : enc_channels)
        if (c < 1) throw ConfigError("enc_channels entries must be >= 1");
    auto positive_if_set = [](int v, const char* name) {
        if (v != -1 && v < 1) throw ConfigError(std::string(name) + " must be >= 1");
    };
    positive_if_set(image_side, "image_side");
    positive_if_set(embed_dim, "embed_dim");
    positive_if_set(hidden_dim, "hidden_dim");
    positive_if_set(token_dim, "token_dim");
    positive_if_set(max_caption_len, "max_caption_len");
    positive_if_set(min_token_freq, "min_token_freq");
    positive_if_set(kernel_size, "kernel_size");
}

inline std::string TrainConfig::canonical_kv() const {
    std::ostringstream os;
    os << "batch_size=" << batch_size << "\n";
    auto num = [&](double v) { return detail::format_number(v); };
    std::string channels;
    for (std::size_t i = 0; i < enc_channels.size(); ++i)
        channels += (i ? "," : "") + std::to_string(enc_channels[i]);
    os << "enc_channels=" << channels << "\n";
    os << "embed_dim=" << embed_dim << "\n";
    os << "epochs=" << epochs << "\n";
    os << "epochs_phase_a=" << epochs_phase_a << "\n";
    os << "epochs_phase_b=" << epochs_phase_b << "\n";
    os << "gamma=" << num(gamma) << "\n";
    os << "hidden_dim=" << hidden_dim << "\n";
    os << "image_side=" << image_side << "\n";
    os << "kernel_size=" << kernel_size << "\n";
    os << "lambda=" << num(lambda) << "\n";
    os << "learning_rate=" << num(learning_rate) << "\n";
    os << "margin=" << num(margin) << "\n";
    os << "max_caption_len=" << max_caption_len << "\n";
    os << "min_token_freq=" << min_token_freq << "\n";
    os << "mode=" << mode << "\n";
    os << "positive_prob=" << num(positive_prob) << "\n";
    std::string profs;
    for (std::size_t i = 0; i < effective_profiles().size(); ++i)
        profs += (i ? "," : "") + effective_profiles()[i];
    os << "profiles=" << profs << "\n";
    os << "seed=" << seed << "\n";
    os << "token_dim=" << token_dim << "\n";
    return os.str();
}

// Model-shape defaults once a config is resolved.
struct ResolvedModelShape {
    int image_side = 64;
    int embed_dim = 64;
    int hidden_dim = 128;
    int token_dim = 32;
    std::vector<int> enc_channels = {16, 32, 64};
    int max_caption_len = 16;
    int min_token_freq = 1;
    int kernel_size = 11;
};

inline ResolvedModelShape resolve_model_shape(const TrainConfig& cfg) {
    ResolvedModelShape s;
    if (cfg.image_side != -1) s.image_side = cfg.image_side;
    if (cfg.embed_dim != -1) s.embed_dim = cfg.embed_dim;
    if (cfg.hidden_dim != -1) s.hidden_dim = cfg.hidden_dim;
    if (cfg.token_dim != -1) s.token_dim = cfg.token_dim;
    if (!cfg.enc_channels.empty()) s.enc_channels = cfg.enc_channels;
    if (cfg.max_caption_len != -1) s.max_caption_len = cfg.max_caption_len;
    if (cfg.min_token_freq != -1) s.min_token_freq = cfg.min_token_freq;
    if (cfg.kernel_size != -1) s.kernel_size = cfg.kernel_size;
    return s;
}

// ---------------------------------------------------------------------------
// Model bundle
// ---------------------------------------------------------------------------

struct CaptionModel {
    EncoderSpec enc;
    DecoderSpec dec;
    Vocabulary vocab;
    ParamStore<float> params;
    int image_side = 64;
    int max_caption_len = 16;
};

// Fresh model; parameter init consumes draws from `rng` so the training
// stream continues deterministically after it.
inline CaptionModel build_model(const TrainConfig& cfg,
                                const std::vector<std::string>& captions, SplitMix64& rng) {
    const ResolvedModelShape shape = resolve_model_shape(cfg);
    CaptionModel m;
    m.vocab = Vocabulary::build(captions, shape.min_token_freq);
    m.enc = EncoderSpec{shape.image_side, shape.enc_channels, shape.embed_dim};
    m.dec = DecoderSpec{shape.embed_dim, shape.token_dim, shape.hidden_dim, m.vocab.size()};
    m.image_side = shape.image_side;
    m.max_caption_len = shape.max_caption_len;
    register_encoder_params(m.params, m.enc);
    register_decoder_params(m.params, m.dec);
    init_params(m.params, rng);
    return m;
}

inline CaptionModel model_from_checkpoint(Checkpoint&& ck) {
    CaptionModel m;
    m.enc = ck.meta.enc;
    m.dec = ck.meta.dec;
    m.vocab = std::move(ck.meta.vocab);
    m.params = std::move(ck.params);
    m.image_side = ck.meta.image_side;
    m.max_caption_len = ck.meta.max_caption_len;
    return m;
}

// ---------------------------------------------------------------------------
// Train log
// ---------------------------------------------------------------------------

struct TrainStepRecord {
    long step = 0;
    int epoch = 0;
    std::string mode;
    double loss = 0;
    double contrastive = 0;
    double cross_entropy = 0;
    double gamma = 0;
    double lambda = 0;
    double mean_pos_d = std::numeric_limits<double>::quiet_NaN();
    double mean_neg_d = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t seed = 0;
};

struct TrainLog {
    std::vector<TrainStepRecord> records;
    std::vector<long> phase_boundaries; // first step of each later phase
    double wall_seconds = 0;            // informational; never serialized

    void write_jsonl(std::ostream& os) const {
        for (const auto& r : records) {
            nlohmann::json j{{"step", r.step},
                             {"epoch", r.epoch},
                             {"mode", r.mode},
                             {"loss", r.loss},
                             {"contrastive", r.contrastive},
                             {"cross_entropy", r.cross_entropy},
                             {"gamma", r.gamma},
                             {"lambda", r.lambda},
                             {"seed", r.seed}};
            j["mean_pos_d"] = std::isnan(r.mean_pos_d) ? nlohmann::json(nullptr)
                                                       : nlohmann::json(r.mean_pos_d);
            j["mean_neg_d"] = std::isnan(r.mean_neg_d) ? nlohmann::json(nullptr)
                                                       : nlohmann::json(r.mean_neg_d);
            os << j.dump() << "\n";
        }
    }

    // Per-epoch means.
    void write_summary_csv(std::ostream& os) const {
        os << "epoch,mode,steps,loss,contrastive,cross_entropy,mean_pos_d,mean_neg_d\n";
        std::map<std::pair<int, std::string>, std::vector<const TrainStepRecord*>> by_epoch;
        for (const auto& r : records) by_epoch[{r.epoch, r.mode}].push_back(&r);
        auto fmt = [&](double v) { return detail::format_number(v); };
        for (const auto& [key, rows] : by_epoch) {
            double loss = 0, con = 0, ce = 0, pos = 0, neg = 0;
            long npos = 0, nneg = 0;
            for (const auto* r : rows) {
                loss += r->loss;
                con += r->contrastive;
                ce += r->cross_entropy;
                if (!std::isnan(r->mean_pos_d)) { pos += r->mean_pos_d; ++npos; }
                if (!std::isnan(r->mean_neg_d)) { neg += r->mean_neg_d; ++nneg; }
            }
            const double n = static_cast<double>(rows.size());
            os << key.first << "," << key.second << "," << rows.size() << ","
               << fmt(loss / n) << "," << fmt(con / n) << "," << fmt(ce / n) << ","
               << (npos ? fmt(pos / static_cast<double>(npos)) : "") << ","
               << (nneg ? fmt(neg / static_cast<double>(nneg)) : "") << "\n";
        }
    }
};

struct TrainHooks {
    // Called after gradients are accumulated, before the optimizer step.
    std::function<void(const ParamStore<float>&, long step)> on_grads;
    // Called after each completed epoch with the live RNG state.
    std::function<void(int completed_epochs, std::uint64_t rng_state)> on_epoch_end;
};

// ---------------------------------------------------------------------------
// Training internals
// ---------------------------------------------------------------------------

namespace detail {

// Lazily decoded, preprocessed variant inputs.
class InputCache {
public:
    InputCache(const AugmentedSet& set, int side) : set_(set), side_(side) {}

    const Tensor<float>& get(const std::string& id, const std::string& profile) {
        const auto key = std::make_pair(id, profile);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        const fs::path path = set_.variant_path(id, profile);
        Image img;
        try {
            img = read_image(path);
        } catch (const Error& e) {
            throw IoError("missing variant image for (" + id + ", " + profile +
                          "): " + e.what());
        }
        auto [pos, fresh] = cache_.emplace(key, preprocess<float>(img, side_));
        return pos->second;
    }

private:
    const AugmentedSet& set_;
    int side_;
    std::map<std::pair<std::string, std::string>, Tensor<float>> cache_;
};

struct TokenPack {
    TokenBatch inputs;
    TokenBatch targets;
};

// [bos] + caption tokens (truncated) + [eos], shifted by one for targets,
// padded to the longest row.
inline TokenPack pack_captions(const Vocabulary& vocab,
                               const std::vector<std::string>& captions, int max_caption_len) {
    std::vector<std::vector<int>> fulls;
    std::size_t longest = 0;
    for (const auto& cap : captions) {
        std::vector<int> ids = vocab.encode(cap);
        if (static_cast<int>(ids.size()) > max_caption_len)
            ids.resize(static_cast<std::size_t>(max_caption_len));
        std::vector<int> full;
        full.reserve(ids.size() + 2);
        full.push_back(Vocabulary::kBos);
        full.insert(full.end(), ids.begin(), ids.end());
        full.push_back(Vocabulary::kEos);
        longest = std::max(longest, full.size());
        fulls.push_back(std::move(full));
    }
    const int B = static_cast<int>(captions.size());
    const int L = static_cast<int>(longest) - 1;
    TokenPack pack{TokenBatch(B, L), TokenBatch(B, L)};
    for (int b = 0; b < B; ++b) {
        const auto& full = fulls[static_cast<std::size_t>(b)];
        for (int t = 0; t < L; ++t) {
            pack.inputs.at(b, t) =
                t + 1 < static_cast<int>(full.size()) ? full[static_cast<std::size_t>(t)]
                                                      : Vocabulary::kPad;
            pack.targets.at(b, t) =
                t + 1 < static_cast<int>(full.size()) ? full[static_cast<std::size_t>(t) + 1]
                                                      : Vocabulary::kPad;
        }
    }
    return pack;
}

struct RegimeContext {
    const TrainConfig& cfg;
    CaptionModel& model;
    const AugmentedSet& set;
    std::vector<int> train_pool;
    InputCache& cache;
    SplitMix64& rng;
    TrainLog& log;
    const TrainHooks& hooks;
    long step = 0;
};

inline void log_step(RegimeContext& ctx, int epoch, const std::string& mode,
                     const LossValue& loss, double mean_pos, double mean_neg) {
    TrainStepRecord rec;
    rec.step = ctx.step;
    rec.epoch = epoch;
    rec.mode = mode;
    rec.loss = loss.value;
    rec.contrastive = loss.contrastive;
    rec.cross_entropy = loss.cross_entropy;
    rec.gamma = loss.gamma;
    rec.lambda = loss.lambda;
    rec.mean_pos_d = mean_pos;
    rec.mean_neg_d = mean_neg;
    rec.seed = ctx.cfg.seed;
    ctx.log.records.push_back(std::move(rec));
    ++ctx.step;
}

// Classical pipeline: teacher-forced cross-entropy over (image, profile)
// items, every parameter updated.
inline void baseline_epoch(RegimeContext& ctx, int epoch) {
    const auto profiles = ctx.cfg.effective_profiles();
    std::vector<std::pair<int, int>> items; // (record index, profile index)
    for (int r : ctx.train_pool)
        for (std::size_t p = 0; p < profiles.size(); ++p)
            items.emplace_back(r, static_cast<int>(p));
    ctx.rng.shuffle(items);

    const auto& records = ctx.set.records();
    for (std::size_t start = 0; start < items.size(); start += ctx.cfg.batch_size) {
        const std::size_t n = std::min<std::size_t>(ctx.cfg.batch_size, items.size() - start);
        std::vector<const Tensor<float>*> inputs;
        std::vector<std::string> captions;
        for (std::size_t k = 0; k < n; ++k) {
            const auto [ri, pi] = items[start + k];
            const auto& rec = records[static_cast<std::size_t>(ri)];
            inputs.push_back(&ctx.cache.get(rec.image_id, profiles[static_cast<std::size_t>(pi)]));
            captions.push_back(
                rec.captions[ctx.rng.uniform_index(rec.captions.size())]);
        }
        const Tensor<float> batch = stack_batch<float>(inputs);
        const TokenPack pack =
            pack_captions(ctx.model.vocab, captions, ctx.model.max_caption_len);

        ctx.model.params.zero_grads();
        EncTape<float> et;
        DecTape<float> dt;
        const auto emb = encoder_forward(ctx.model.enc, ctx.model.params, batch, et);
        const auto logits =
            decoder_forward(ctx.model.dec, ctx.model.params, emb, pack.inputs, dt);
        auto ce = cross_entropy(logits, pack.targets);
        const auto demb = decoder_backward(ctx.model.dec, ctx.model.params, ce.grad_logits, dt);
        encoder_backward(ctx.model.enc, ctx.model.params, demb, et);

        if (ctx.hooks.on_grads) ctx.hooks.on_grads(ctx.model.params, ctx.step);
        adam_step(ctx.model.params, ctx.cfg.learning_rate);
        log_step(ctx, epoch, "baseline", ce.loss, std::numeric_limits<double>::quiet_NaN(),
                 std::numeric_limits<double>::quiet_NaN());
    }
}

// Shared machinery for the pair regimes. One epoch draws as many pairs as
// there are training images. `combined` selects soli-par (contrastive +
// cross-entropy on both branches, all parameters) versus soli-half
// (contrastive only, encoder frozen decoder).
inline void pair_epoch(RegimeContext& ctx, int epoch, bool combined) {
    const std::size_t pairs_per_epoch = ctx.train_pool.size();

    for (std::size_t start = 0; start < pairs_per_epoch; start += ctx.cfg.batch_size) {
        const std::size_t n =
            std::min<std::size_t>(ctx.cfg.batch_size, pairs_per_epoch - start);

        std::vector<SiamesePair> pairs;
        std::vector<std::string> caps_left, caps_right;
        pairs.reserve(n);
        for (std::size_t k = 0; k < n; ++k) {
            pairs.push_back(
                sample_pair(ctx.set, ctx.train_pool, ctx.rng, ctx.cfg.positive_prob));
            if (combined) {
                const auto& pl = *pairs.back().captions_left;
                const auto& pr = *pairs.back().captions_right;
                caps_left.push_back(pl[ctx.rng.uniform_index(pl.size())]);
                caps_right.push_back(pr[ctx.rng.uniform_index(pr.size())]);
            }
        }

        // One shared-weight forward over both branches: rows [0,n) are the
        // left (original) images, rows [n,2n) the right variants.
        std::vector<const Tensor<float>*> inputs;
        inputs.reserve(2 * n);
        for (const auto& pr : pairs) inputs.push_back(&ctx.cache.get(pr.left_id, pr.left_profile));
        for (const auto& pr : pairs)
            inputs.push_back(&ctx.cache.get(pr.right_id, pr.right_profile));
        const Tensor<float> batch = stack_batch<float>(inputs);

        ctx.model.params.zero_grads();
        EncTape<float> et;
        const auto emb = encoder_forward(ctx.model.enc, ctx.model.params, batch, et);

        const int E = ctx.model.enc.embed_dim;
        ContrastiveBatch<float> cb;
        cb.a = Tensor<float>({static_cast<int>(n), E});
        cb.b = Tensor<float>({static_cast<int>(n), E});
        cb.margin = ctx.cfg.margin;
        for (std::size_t k = 0; k < n; ++k) {
            cb.labels.push_back(pairs[k].similarity);
            for (int e = 0; e < E; ++e) {
                cb.a.at(static_cast<int>(k), e) = emb.at(static_cast<int>(k), e);
                cb.b.at(static_cast<int>(k), e) = emb.at(static_cast<int>(k + n), e);
            }
        }
        auto con = contrastive(cb);

        double pos_sum = 0, neg_sum = 0;
        long pos_n = 0, neg_n = 0;
        for (std::size_t k = 0; k < n; ++k) {
            if (pairs[k].similarity == 1) { pos_sum += con.distances[k]; ++pos_n; }
            else { neg_sum += con.distances[k]; ++neg_n; }
        }
        const double mean_pos = pos_n ? pos_sum / static_cast<double>(pos_n)
                                      : std::numeric_limits<double>::quiet_NaN();
        const double mean_neg = neg_n ? neg_sum / static_cast<double>(neg_n)
                                      : std::numeric_limits<double>::quiet_NaN();

        Tensor<float> demb(emb.shape);
        LossValue loss;
        if (!combined) {
            loss = con.loss; // gamma=1, lambda=0 breakdown
            for (std::size_t k = 0; k < n; ++k)
                for (int e = 0; e < E; ++e) {
                    demb.at(static_cast<int>(k), e) = con.grad_a.at(static_cast<int>(k), e);
                    demb.at(static_cast<int>(k + n), e) = con.grad_b.at(static_cast<int>(k), e);
                }
            encoder_backward(ctx.model.enc, ctx.model.params, demb, et);
            if (ctx.hooks.on_grads) ctx.hooks.on_grads(ctx.model.params, ctx.step);
            adam_step(ctx.model.params, ctx.cfg.learning_rate, is_encoder_param);
            log_step(ctx, epoch, "soli-half", loss, mean_pos, mean_neg);
            continue;
        }

        // soli-par: cross-entropy on each branch against its own captions,
        // branch losses averaged, combined with the contrastive term.
        Tensor<float> emb_a({static_cast<int>(n), E}), emb_b({static_cast<int>(n), E});
        for (std::size_t k = 0; k < n; ++k)
            for (int e = 0; e < E; ++e) {
                emb_a.at(static_cast<int>(k), e) = emb.at(static_cast<int>(k), e);
                emb_b.at(static_cast<int>(k), e) = emb.at(static_cast<int>(k + n), e);
            }
        const TokenPack pack_a =
            pack_captions(ctx.model.vocab, caps_left, ctx.model.max_caption_len);
        const TokenPack pack_b =
            pack_captions(ctx.model.vocab, caps_right, ctx.model.max_caption_len);

        DecTape<float> dta, dtb;
        const auto logits_a =
            decoder_forward(ctx.model.dec, ctx.model.params, emb_a, pack_a.inputs, dta);
        const auto logits_b =
            decoder_forward(ctx.model.dec, ctx.model.params, emb_b, pack_b.inputs, dtb);
        auto ce_a = cross_entropy(logits_a, pack_a.targets);
        auto ce_b = cross_entropy(logits_b, pack_b.targets);
        const LossValue ce =
            make_cross_entropy_loss((ce_a.loss.value + ce_b.loss.value) / 2.0);
        loss = soli_loss(con.loss, ce, ctx.cfg.gamma, ctx.cfg.lambda);

        const float half_lambda = static_cast<float>(ctx.cfg.lambda / 2.0);
        for (auto& g : ce_a.grad_logits.data) g *= half_lambda;
        for (auto& g : ce_b.grad_logits.data) g *= half_lambda;
        const auto demb_a =
            decoder_backward(ctx.model.dec, ctx.model.params, ce_a.grad_logits, dta);
        const auto demb_b =
            decoder_backward(ctx.model.dec, ctx.model.params, ce_b.grad_logits, dtb);

        const float gammaf = static_cast<float>(ctx.cfg.gamma);
        for (std::size_t k = 0; k < n; ++k)
            for (int e = 0; e < E; ++e) {
                demb.at(static_cast<int>(k), e) =
                    gammaf * con.grad_a.at(static_cast<int>(k), e) +
                    demb_a.at(static_cast<int>(k), e);
                demb.at(static_cast<int>(k + n), e) =
                    gammaf * con.grad_b.at(static_cast<int>(k), e) +
                    demb_b.at(static_cast<int>(k), e);
            }
        encoder_backward(ctx.model.enc, ctx.model.params, demb, et);

        if (ctx.hooks.on_grads) ctx.hooks.on_grads(ctx.model.params, ctx.step);
        adam_step(ctx.model.params, ctx.cfg.learning_rate);
        log_step(ctx, epoch, "soli-par", loss, mean_pos, mean_neg);
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

// Runs the configured regime from `start_epoch` (for resumption) to the end
// of its schedule. The caller owns rng seeding: a fresh run passes a
// generator seeded with cfg.seed (after model init drew from it), a resumed
// run restores the checkpointed state.
inline TrainLog train(const TrainConfig& cfg, const AugmentedSet& set, CaptionModel& model,
                      SplitMix64& rng, int start_epoch = 0, const TrainHooks& hooks = {}) {
    cfg.validate();

    TrainLog log;
    detail::InputCache cache(set, model.image_side);

    std::vector<int> pool;
    const auto& records = set.records();
    for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].split == "train") pool.push_back(static_cast<int>(i));
    if (pool.empty()) throw Error("train: empty train split");

    detail::RegimeContext context{cfg, model, set, std::move(pool), cache, rng, log, hooks};

    const int total_epochs =
        cfg.mode == "soli-con" ? cfg.epochs_phase_a + cfg.epochs_phase_b : cfg.epochs;
    const auto t0 = std::chrono::steady_clock::now();

    // Steps are numbered globally so resumed runs continue the sequence.
    const std::size_t items_per_epoch =
        cfg.mode == "baseline"
            ? context.train_pool.size() * cfg.effective_profiles().size()
            : context.train_pool.size();
    const long steps_per_epoch = static_cast<long>(
        (items_per_epoch + static_cast<std::size_t>(cfg.batch_size) - 1) /
        static_cast<std::size_t>(cfg.batch_size));
    context.step = steps_per_epoch * start_epoch;

    for (int epoch = start_epoch; epoch < total_epochs; ++epoch) {
        if (cfg.mode == "baseline") {
            detail::baseline_epoch(context, epoch);
        } else if (cfg.mode == "soli-half") {
            detail::pair_epoch(context, epoch, false);
        } else if (cfg.mode == "soli-par") {
            detail::pair_epoch(context, epoch, true);
        } else { // soli-con
            if (epoch == cfg.epochs_phase_a && cfg.epochs_phase_a > 0 &&
                cfg.epochs_phase_b > 0)
                log.phase_boundaries.push_back(context.step);
            detail::pair_epoch(context, epoch, epoch >= cfg.epochs_phase_a);
        }
        if (hooks.on_epoch_end) hooks.on_epoch_end(epoch + 1, rng.state());
    }

    log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return log;
}

} // namespace soli
