#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "soli/error.hpp"
#include "soli/nn.hpp"
#include "soli/params.hpp"
#include "soli/rng.hpp"
#include "soli/vocab.hpp"

namespace soli {

// Where a training run stands; enough to resume it deterministically.
struct ScheduleState {
    std::string mode;         // baseline | soli-half | soli-par | soli-con
    int completed_epochs = 0; // within the current run
    int total_epochs = 0;
    std::uint64_t rng_state = 0;

    bool operator==(const ScheduleState&) const = default;
};

struct CheckpointMeta {
    EncoderSpec enc;
    DecoderSpec dec;
    Vocabulary vocab;
    std::uint64_t seed = 0;
    int image_side = 64;
    int max_caption_len = 16;
    ScheduleState schedule;

    bool operator==(const CheckpointMeta&) const = default;
};

namespace detail {

constexpr char kCheckpointMagic[8] = {'S', 'O', 'L', 'I', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

inline void append_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t read_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

inline void append_f32_block(std::vector<std::uint8_t>& out, const std::vector<float>& v) {
    static_assert(sizeof(float) == 4);
    const std::size_t base = out.size();
    out.resize(base + v.size() * 4);
    std::memcpy(out.data() + base, v.data(), v.size() * 4);
}

inline nlohmann::json enc_to_json(const EncoderSpec& s) {
    return {{"input_side", s.input_side}, {"channels", s.channels}, {"embed_dim", s.embed_dim}};
}
inline EncoderSpec enc_from_json(const nlohmann::json& j) {
    EncoderSpec s;
    s.input_side = j.at("input_side").get<int>();
    s.channels = j.at("channels").get<std::vector<int>>();
    s.embed_dim = j.at("embed_dim").get<int>();
    return s;
}
inline nlohmann::json dec_to_json(const DecoderSpec& s) {
    return {{"embed_dim", s.embed_dim},
            {"token_dim", s.token_dim},
            {"hidden_dim", s.hidden_dim},
            {"vocab_size", s.vocab_size}};
}
inline DecoderSpec dec_from_json(const nlohmann::json& j) {
    DecoderSpec s;
    s.embed_dim = j.at("embed_dim").get<int>();
    s.token_dim = j.at("token_dim").get<int>();
    s.hidden_dim = j.at("hidden_dim").get<int>();
    s.vocab_size = j.at("vocab_size").get<int>();
    return s;
}

} // namespace detail

// Layout: magic, u64 header length, header JSON, then per parameter (in
// header order) the raw little-endian f32 blocks for value / adam-m /
// adam-v, and a trailing u64 FNV-1a checksum over everything before it.
inline std::vector<std::uint8_t> serialize_checkpoint(const ParamStore<float>& params,
                                                      const CheckpointMeta& meta) {
    nlohmann::json header;
    header["version"] = detail::kCheckpointVersion;
    header["seed"] = meta.seed;
    header["adam_step"] = params.step_count;
    header["image_side"] = meta.image_side;
    header["max_caption_len"] = meta.max_caption_len;
    header["encoder"] = detail::enc_to_json(meta.enc);
    header["decoder"] = detail::dec_to_json(meta.dec);
    header["vocab"] = meta.vocab.to_json();
    header["schedule"] = {{"mode", meta.schedule.mode},
                          {"completed_epochs", meta.schedule.completed_epochs},
                          {"total_epochs", meta.schedule.total_epochs},
                          {"rng_state", meta.schedule.rng_state}};
    nlohmann::json plist = nlohmann::json::array();
    for (const auto& name : params.names())
        plist.push_back({{"name", name}, {"shape", params.value(name).shape}});
    header["params"] = plist;

    const std::string hdr = header.dump();
    std::vector<std::uint8_t> out;
    out.insert(out.end(), detail::kCheckpointMagic, detail::kCheckpointMagic + 8);
    detail::append_u64(out, hdr.size());
    out.insert(out.end(), hdr.begin(), hdr.end());
    for (const auto& name : params.names()) {
        const Param<float>& p = params.param(name);
        detail::append_f32_block(out, p.value.data);
        detail::append_f32_block(out, p.m.data);
        detail::append_f32_block(out, p.v.data);
    }
    detail::append_u64(out, fnv1a(out.data(), out.size()));
    return out;
}

inline void save_checkpoint(const ParamStore<float>& params, const CheckpointMeta& meta,
                            const std::filesystem::path& path) {
    auto bytes = serialize_checkpoint(params, meta);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write: " + path.string());
}

struct Checkpoint {
    ParamStore<float> params;
    CheckpointMeta meta;
    std::uint64_t checksum = 0; // content id
};

inline Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes,
                                         const std::string& origin) {
    if (bytes.size() < 24 || std::memcmp(bytes.data(), detail::kCheckpointMagic, 8) != 0)
        throw IoError("not a checkpoint file: " + origin);
    const std::uint64_t stored = detail::read_u64(bytes.data() + bytes.size() - 8);
    const std::uint64_t actual = fnv1a(bytes.data(), bytes.size() - 8);
    if (stored != actual)
        throw IoError("checkpoint checksum mismatch (truncated or corrupted): " + origin);

    const std::uint64_t hlen = detail::read_u64(bytes.data() + 8);
    if (16 + hlen > bytes.size() - 8)
        throw IoError("checkpoint header overruns file: " + origin);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 16,
                                       bytes.begin() + 16 + static_cast<std::ptrdiff_t>(hlen));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint header is not valid JSON: " + origin + ": " + e.what());
    }
    if (header.at("version").get<std::uint32_t>() != detail::kCheckpointVersion)
        throw IoError("unsupported checkpoint version " +
                      std::to_string(header.at("version").get<std::uint32_t>()) + ": " + origin);

    Checkpoint ck;
    ck.checksum = actual;
    ck.meta.seed = header.at("seed").get<std::uint64_t>();
    ck.meta.image_side = header.at("image_side").get<int>();
    ck.meta.max_caption_len = header.at("max_caption_len").get<int>();
    ck.meta.enc = detail::enc_from_json(header.at("encoder"));
    ck.meta.dec = detail::dec_from_json(header.at("decoder"));
    ck.meta.vocab = Vocabulary::from_json(header.at("vocab"));
    const auto& sj = header.at("schedule");
    ck.meta.schedule.mode = sj.at("mode").get<std::string>();
    ck.meta.schedule.completed_epochs = sj.at("completed_epochs").get<int>();
    ck.meta.schedule.total_epochs = sj.at("total_epochs").get<int>();
    ck.meta.schedule.rng_state = sj.at("rng_state").get<std::uint64_t>();
    ck.params.step_count = header.at("adam_step").get<std::uint64_t>();

    std::size_t off = 16 + hlen;
    const std::size_t end = bytes.size() - 8;
    for (const auto& pj : header.at("params")) {
        const auto name = pj.at("name").get<std::string>();
        const auto shape = pj.at("shape").get<std::vector<int>>();
        Tensor<float>& value = ck.params.add(name, shape);
        Param<float>& p = ck.params.param(name);
        const std::size_t block = value.numel() * 4;
        if (off + 3 * block > end)
            throw IoError("checkpoint parameter data truncated at '" + name + "': " + origin);
        std::memcpy(value.data.data(), bytes.data() + off, block);
        std::memcpy(p.m.data.data(), bytes.data() + off + block, block);
        std::memcpy(p.v.data.data(), bytes.data() + off + 2 * block, block);
        off += 3 * block;
    }
    if (off != end) throw IoError("checkpoint has trailing bytes: " + origin);
    return ck;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes, path.string());
}

// Guard for runs that pin model dimensions explicitly.
inline void require_spec_match(const CheckpointMeta& meta, const EncoderSpec& enc,
                               const DecoderSpec& dec) {
    if (!(meta.enc == enc))
        throw ConfigError("checkpoint encoder spec mismatch: stored embed_dim=" +
                          std::to_string(meta.enc.embed_dim) + " side=" +
                          std::to_string(meta.enc.input_side) + ", configured embed_dim=" +
                          std::to_string(enc.embed_dim) + " side=" +
                          std::to_string(enc.input_side));
    if (!(meta.dec == dec))
        throw ConfigError("checkpoint decoder spec mismatch: stored hidden_dim=" +
                          std::to_string(meta.dec.hidden_dim) + " vocab=" +
                          std::to_string(meta.dec.vocab_size) + ", configured hidden_dim=" +
                          std::to_string(dec.hidden_dim) + " vocab=" +
                          std::to_string(dec.vocab_size));
}

} // namespace soli
