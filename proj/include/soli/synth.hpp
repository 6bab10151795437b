#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "soli/dataset.hpp"
#include "soli/image_io.hpp"
#include "soli/rng.hpp"

namespace soli {

// Procedural caption corpus: two colored shapes in a spatial relation on a
// dark background, five template captions per image. Deterministic for a
// given (count, size, seed); splits are assigned 8/1/1 by index.
struct SynthOptions {
    int count = 64;
    int size = 96;
    std::uint64_t seed = 0;
};

namespace detail {

struct Rgb {
    std::uint8_t r, g, b;
};

struct Palette {
    const char* name;
    Rgb rgb;
};

inline const std::array<Palette, 6>& synth_colors() {
    static const std::array<Palette, 6> kColors = {{
        {"red", {220, 50, 47}},
        {"green", {60, 180, 75}},
        {"blue", {50, 90, 220}},
        {"yellow", {235, 220, 60}},
        {"purple", {150, 60, 190}},
        {"orange", {240, 140, 30}},
    }};
    return kColors;
}

inline const std::array<const char*, 3>& synth_shapes() {
    static const std::array<const char*, 3> kShapes = {"circle", "square", "triangle"};
    return kShapes;
}

inline bool inside_shape(int shape, int px, int py, int cx, int cy, int r) {
    const int dx = px - cx, dy = py - cy;
    switch (shape) {
    case 0: return dx * dx + dy * dy <= r * r;                      // circle
    case 1: return std::abs(dx) <= r && std::abs(dy) <= r;          // square
    default: {                                                      // triangle, apex up
        if (dy < -r || dy > r) return false;
        const double half = (static_cast<double>(dy) + r) / 2.0;
        return std::abs(dx) <= half;
    }
    }
}

} // namespace detail

inline std::vector<CaptionRecord> generate_synthetic_corpus(const SynthOptions& opt,
                                                            const fs::path& out_dir) {
    if (opt.count < 1) throw ArgumentError("synthetic corpus: count must be >= 1");
    if (opt.size < 16)
        throw ArgumentError("synthetic corpus: size must be >= 16 (got " +
                            std::to_string(opt.size) + "); smaller images cannot be "
                            "degraded meaningfully");
    fs::create_directories(out_dir);

    SplitMix64 rng(opt.seed);
    const auto& colors = detail::synth_colors();
    const auto& shapes = detail::synth_shapes();
    static const char* kRelations[4] = {"above", "below", "left of", "right of"};
    static const char* kInverse[4] = {"below", "above", "right of", "left of"};

    std::vector<CaptionRecord> records;
    records.reserve(static_cast<std::size_t>(opt.count));
    const int S = opt.size;

    for (int i = 0; i < opt.count; ++i) {
        const int bg_r = 12 + static_cast<int>(rng.uniform_index(20));
        const int bg_g = 12 + static_cast<int>(rng.uniform_index(20));
        const int bg_b = 12 + static_cast<int>(rng.uniform_index(20));
        const int shape1 = static_cast<int>(rng.uniform_index(shapes.size()));
        const int color1 = static_cast<int>(rng.uniform_index(colors.size()));
        const int shape2 = static_cast<int>(rng.uniform_index(shapes.size()));
        int color2 = static_cast<int>(rng.uniform_index(colors.size() - 1));
        if (color2 >= color1) ++color2; // distinct colors keep captions unambiguous
        const int rel = static_cast<int>(rng.uniform_index(4));

        // Shape centers on opposite sides of the relation axis, with jitter.
        const int quarter = S / 4;
        auto jitter = [&] { return static_cast<int>(rng.uniform_index(S / 8 + 1)) - S / 16; };
        int cx1 = S / 2 + jitter(), cy1 = S / 2 + jitter();
        int cx2 = S / 2 + jitter(), cy2 = S / 2 + jitter();
        switch (rel) {
        case 0: cy1 = quarter + jitter(); cy2 = 3 * quarter + jitter(); break; // above
        case 1: cy1 = 3 * quarter + jitter(); cy2 = quarter + jitter(); break; // below
        case 2: cx1 = quarter + jitter(); cx2 = 3 * quarter + jitter(); break; // left of
        default: cx1 = 3 * quarter + jitter(); cx2 = quarter + jitter(); break; // right of
        }
        const int r1 = S / 8 + static_cast<int>(rng.uniform_index(S / 12 + 1));
        const int r2 = S / 8 + static_cast<int>(rng.uniform_index(S / 12 + 1));

        Image img(S, S);
        for (int y = 0; y < S; ++y)
            for (int x = 0; x < S; ++x) {
                detail::Rgb px{static_cast<std::uint8_t>(bg_r),
                               static_cast<std::uint8_t>(bg_g),
                               static_cast<std::uint8_t>(bg_b)};
                if (detail::inside_shape(shape2, x, y, cx2, cy2, r2))
                    px = colors[static_cast<std::size_t>(color2)].rgb;
                if (detail::inside_shape(shape1, x, y, cx1, cy1, r1))
                    px = colors[static_cast<std::size_t>(color1)].rgb;
                img.at(x, y, 0) = px.r;
                img.at(x, y, 1) = px.g;
                img.at(x, y, 2) = px.b;
            }

        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "img%05d", i);
        const std::string id = idbuf;
        const std::string fname = id + ".png";
        write_png(img, out_dir / fname);

        const std::string c1 = colors[static_cast<std::size_t>(color1)].name;
        const std::string c2 = colors[static_cast<std::size_t>(color2)].name;
        const std::string s1 = shapes[static_cast<std::size_t>(shape1)];
        const std::string s2 = shapes[static_cast<std::size_t>(shape2)];
        const std::string rl = kRelations[rel];
        const std::string ir = kInverse[rel];

        CaptionRecord rec;
        rec.image_id = id;
        rec.file = fname;
        rec.split = (i % 10 == 8) ? "val" : (i % 10 == 9) ? "test" : "train";
        rec.captions = {
            "a " + c1 + " " + s1 + " " + rl + " a " + c2 + " " + s2,
            "the " + c1 + " " + s1 + " is " + rl + " the " + c2 + " " + s2,
            "there is a " + c1 + " " + s1 + " " + rl + " a " + c2 + " " + s2,
            "a " + c2 + " " + s2 + " " + ir + " a " + c1 + " " + s1,
            "an image of a " + c1 + " " + s1 + " and a " + c2 + " " + s2,
        };
        records.push_back(std::move(rec));
    }

    save_manifest(records, out_dir / "manifest.jsonl");
    return records;
}

} // namespace soli
