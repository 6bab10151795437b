#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "soli/error.hpp"
#include "soli/image.hpp"
#include "soli/profile.hpp"

namespace soli {

// ---------------------------------------------------------------------------
// Bilinear resize
// ---------------------------------------------------------------------------

namespace detail {

// Source coordinate for an output sample under half-pixel centers,
// clamped to the valid range. frac is the interpolation weight toward hi.
struct AxisSample {
    int lo;
    int hi;
    double frac;
};

inline AxisSample map_axis(int out_i, int out_n, int src_n) {
    double s = (out_i + 0.5) * (static_cast<double>(src_n) / out_n) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src_n - 1));
    int lo = static_cast<int>(std::floor(s));
    return AxisSample{lo, std::min(lo + 1, src_n - 1), s - lo};
}

// Round to nearest integer, ties away from zero, clamped to 8 bits.
inline std::uint8_t round_pixel(double v) {
    long r = std::lround(v);
    return static_cast<std::uint8_t>(std::clamp(r, 0L, 255L));
}

} // namespace detail

inline Image bilinear_resize(const Image& src, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1)
        throw ArgumentError("resize target must be >= 1x1, got " +
                            std::to_string(out_w) + "x" + std::to_string(out_h));

    std::vector<detail::AxisSample> xs(out_w), ys(out_h);
    for (int x = 0; x < out_w; ++x) xs[x] = detail::map_axis(x, out_w, src.width);
    for (int y = 0; y < out_h; ++y) ys[y] = detail::map_axis(y, out_h, src.height);

    Image out(out_w, out_h);
    for (int y = 0; y < out_h; ++y) {
        const auto& sy = ys[y];
        const double beta = sy.frac;
        for (int x = 0; x < out_w; ++x) {
            const auto& sx = xs[x];
            const double alpha = sx.frac;
            for (int c = 0; c < Image::kChannels; ++c) {
                double v = (1.0 - alpha) * (1.0 - beta) * src.at(sx.lo, sy.lo, c)
                         + alpha * (1.0 - beta) * src.at(sx.hi, sy.lo, c)
                         + (1.0 - alpha) * beta * src.at(sx.lo, sy.hi, c)
                         + alpha * beta * src.at(sx.hi, sy.hi, c);
                out.at(x, y, c) = detail::round_pixel(v);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gaussian filter
// ---------------------------------------------------------------------------

// Unnormalized isotropic Gaussian sampled at an integer offset from center.
inline double gaussian_point(double sigma, int x, int y) {
    const double s2 = sigma * sigma;
    return std::exp(-(static_cast<double>(x) * x + static_cast<double>(y) * y) /
                    (2.0 * s2)) /
           (2.0 * std::numbers::pi * s2);
}

// Odd-sized square kernel, weights normalized to sum 1.
struct Kernel2D {
    int size = 0;
    std::vector<double> weights; // row-major, size*size

    // Offsets in [-size/2, size/2].
    double at(int x, int y) const {
        const int h = size / 2;
        return weights[static_cast<std::size_t>(y + h) * size + (x + h)];
    }
};

inline Kernel2D gaussian_kernel(double sigma, int size) {
    if (!(sigma > 0.0))
        throw ArgumentError("gaussian sigma must be > 0, got " + std::to_string(sigma));
    if (size < 1 || size % 2 == 0)
        throw ArgumentError("gaussian kernel size must be odd and >= 1, got " +
                            std::to_string(size));

    Kernel2D k;
    k.size = size;
    k.weights.resize(static_cast<std::size_t>(size) * size);
    const int h = size / 2;
    double sum = 0.0;
    for (int y = -h; y <= h; ++y)
        for (int x = -h; x <= h; ++x) {
            double w = gaussian_point(sigma, x, y);
            k.weights[static_cast<std::size_t>(y + h) * size + (x + h)] = w;
            sum += w;
        }
    for (double& w : k.weights) w /= sum;
    return k;
}

// 2-D convolution with edge replication; channels independent.
inline Image gaussian_blur(const Image& src, double sigma, int size = 11) {
    const Kernel2D k = gaussian_kernel(sigma, size);
    const int h = size / 2;

    Image out(src.width, src.height);
    for (int y = 0; y < src.height; ++y) {
        for (int x = 0; x < src.width; ++x) {
            double acc[Image::kChannels] = {};
            for (int ky = -h; ky <= h; ++ky) {
                const int sy = std::clamp(y + ky, 0, src.height - 1);
                for (int kx = -h; kx <= h; ++kx) {
                    const int sx = std::clamp(x + kx, 0, src.width - 1);
                    const double w = k.at(kx, ky);
                    for (int c = 0; c < Image::kChannels; ++c)
                        acc[c] += w * src.at(sx, sy, c);
                }
            }
            for (int c = 0; c < Image::kChannels; ++c)
                out.at(x, y, c) = detail::round_pixel(acc[c]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Step resizing
// ---------------------------------------------------------------------------

// Successive lengths of one axis during step resizing: per-step geometric
// ratio (target/source)^(1/step), floored, never dipping below the target,
// with the final step forced exact. Stops once the target is reached.
inline std::vector<int> step_length_plan(int source, double ratio, int step) {
    if (source < 1)
        throw ArgumentError("source length must be >= 1, got " + std::to_string(source));
    const int target = static_cast<int>(std::floor(source * ratio));
    if (target < 1)
        throw ArgumentError("profile too aggressive: target length floor(" +
                            std::to_string(source) + " * " + detail::format_number(ratio) +
                            ") < 1");

    const double step_ratio =
        std::pow(static_cast<double>(target) / source, 1.0 / step);
    std::vector<int> lengths;
    int cur = source;
    for (int i = 0; i < step; ++i) {
        int next = (i == step - 1)
                       ? target
                       : std::max(target, static_cast<int>(std::floor(cur * step_ratio)));
        lengths.push_back(next);
        cur = next;
        if (cur == target) break;
    }
    return lengths;
}

struct StepResizeTrace {
    std::vector<std::pair<int, int>> dims; // after each iteration
    int resize_calls = 0;                  // actual resampling passes
};

// Optional blur, then iterative downscale per the plan above. Both axes use
// their own geometric ratio but share the loop; the loop exits as soon as
// both axes are at target. Resampling is skipped when dimensions are
// unchanged, so identity profiles return bit-identical pixels.
inline Image step_resize(const Image& src, const AugProfile& profile,
                         int kernel_size = 11, StepResizeTrace* trace = nullptr) {
    const int target_w = static_cast<int>(std::floor(src.width * profile.ratio));
    const int target_h = static_cast<int>(std::floor(src.height * profile.ratio));
    if (target_w < 1 || target_h < 1)
        throw ArgumentError("profile too aggressive for " + std::to_string(src.width) +
                            "x" + std::to_string(src.height) + " image: target " +
                            std::to_string(target_w) + "x" + std::to_string(target_h));

    Image img = profile.sigma.has_value()
                    ? gaussian_blur(src, *profile.sigma, kernel_size)
                    : src;

    const double wr = std::pow(static_cast<double>(target_w) / src.width,
                               1.0 / profile.step);
    const double hr = std::pow(static_cast<double>(target_h) / src.height,
                               1.0 / profile.step);

    for (int i = 0; i < profile.step; ++i) {
        int next_w, next_h;
        if (i == profile.step - 1) {
            next_w = target_w;
            next_h = target_h;
        } else {
            next_w = std::max(target_w, static_cast<int>(std::floor(img.width * wr)));
            next_h = std::max(target_h, static_cast<int>(std::floor(img.height * hr)));
        }
        if (next_w != img.width || next_h != img.height) {
            img = bilinear_resize(img, next_w, next_h);
            if (trace) ++trace->resize_calls;
        }
        if (trace) trace->dims.emplace_back(next_w, next_h);
        if (next_w == target_w && next_h == target_h) break;
    }
    return img;
}

// Composition wrapper: the full degradation recipe for one profile.
inline Image apply_profile(const Image& src, const AugProfile& profile,
                           int kernel_size = 11) {
    if (profile.identity()) return src;
    return step_resize(src, profile, kernel_size);
}

} // namespace soli
