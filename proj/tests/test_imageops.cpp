#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "soli/imageops.hpp"
#include "soli/rng.hpp"

using namespace soli;

namespace {

// ---------------------------------------------------------------------------
// Independent scalar oracles. These evaluate the defining formulas directly,
// one output sample at a time, with no shared code with the library.
// ---------------------------------------------------------------------------

// Four-neighbor interpolation under half-pixel centers with border clamping.
std::uint8_t oracle_bilinear_pixel(const Image& src, int out_w, int out_h,
                                   int x, int y, int c) {
    auto map = [](int i, int out_n, int src_n, int& lo, int& hi, double& frac) {
        double s = (i + 0.5) * (static_cast<double>(src_n) / out_n) - 0.5;
        if (s < 0.0) s = 0.0;
        if (s > src_n - 1) s = src_n - 1;
        lo = static_cast<int>(std::floor(s));
        hi = lo + 1 < src_n ? lo + 1 : src_n - 1;
        frac = s - lo;
    };
    int x1, x2, y1, y2;
    double alpha, beta;
    map(x, out_w, src.width, x1, x2, alpha);
    map(y, out_h, src.height, y1, y2, beta);
    double v = (1.0 - alpha) * (1.0 - beta) * src.at(x1, y1, c)
             + alpha * (1.0 - beta) * src.at(x2, y1, c)
             + (1.0 - alpha) * beta * src.at(x1, y2, c)
             + alpha * beta * src.at(x2, y2, c);
    long r = std::lround(v);
    return static_cast<std::uint8_t>(r < 0 ? 0 : (r > 255 ? 255 : r));
}

Image oracle_bilinear(const Image& src, int out_w, int out_h) {
    Image out(out_w, out_h);
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x)
            for (int c = 0; c < 3; ++c)
                out.at(x, y, c) = oracle_bilinear_pixel(src, out_w, out_h, x, y, c);
    return out;
}

// Direct O(k^2)-per-pixel convolution with replicated borders.
Image oracle_blur(const Image& src, double sigma, int size) {
    const int h = size / 2;
    std::vector<double> w(static_cast<std::size_t>(size) * size);
    double sum = 0.0;
    for (int y = -h; y <= h; ++y)
        for (int x = -h; x <= h; ++x) {
            double g = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma)) /
                       (2.0 * std::numbers::pi * sigma * sigma);
            w[static_cast<std::size_t>(y + h) * size + (x + h)] = g;
            sum += g;
        }
    for (auto& v : w) v /= sum;

    Image out(src.width, src.height);
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int ky = -h; ky <= h; ++ky)
                    for (int kx = -h; kx <= h; ++kx) {
                        int sx = std::clamp(x + kx, 0, src.width - 1);
                        int sy = std::clamp(y + ky, 0, src.height - 1);
                        acc += w[static_cast<std::size_t>(ky + h) * size + (kx + h)] *
                               src.at(sx, sy, c);
                    }
                long r = std::lround(acc);
                out.at(x, y, c) = static_cast<std::uint8_t>(r < 0 ? 0 : (r > 255 ? 255 : r));
            }
    return out;
}

Image random_image(int w, int h, SplitMix64& rng) {
    Image img(w, h);
    for (auto& b : img.data) b = static_cast<std::uint8_t>(rng.uniform_index(256));
    return img;
}

long image_sum(const Image& img) {
    return std::accumulate(img.data.begin(), img.data.end(), 0L);
}

} // namespace

// ---------------------------------------------------------------------------
// bilinear_resize
// ---------------------------------------------------------------------------

TEST_CASE("bilinear resize of a constant image is constant", "[imageops]") {
    Image src(5, 4, 7);
    for (auto [w, h] : {std::pair{1, 1}, {3, 9}, {10, 2}, {17, 17}}) {
        Image out = bilinear_resize(src, w, h);
        CHECK(out.width == w);
        CHECK(out.height == h);
        for (auto b : out.data) REQUIRE(b == 7);
    }
}

TEST_CASE("bilinear resize to the same size is bit-identical", "[imageops]") {
    SplitMix64 rng(11);
    Image src = random_image(13, 7, rng);
    CHECK(bilinear_resize(src, 13, 7) == src);
}

TEST_CASE("bilinear resize matches the hand-computed 2x2 -> 3x3 grid", "[imageops]") {
    // Single gradient pattern replicated across channels:
    //   [[  0, 100],
    //    [200, 250]]
    Image src(2, 2);
    const int px[2][2] = {{0, 100}, {200, 250}};
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x)
            for (int c = 0; c < 3; ++c)
                src.at(x, y, c) = static_cast<std::uint8_t>(px[y][x]);

    // Expected values evaluated by hand from the interpolation formula
    // (137.5 rounds away from zero to 138).
    const int expected[3][3] = {{0, 50, 100}, {100, 138, 175}, {200, 225, 250}};

    Image out = bilinear_resize(src, 3, 3);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x)
            for (int c = 0; c < 3; ++c) {
                CAPTURE(x, y, c);
                CHECK(int(out.at(x, y, c)) == expected[y][x]);
            }

    CHECK(out == oracle_bilinear(src, 3, 3));
}

TEST_CASE("bilinear resize agrees with the scalar oracle on random sizes",
          "[imageops]") {
    SplitMix64 rng(42);
    for (int iter = 0; iter < 60; ++iter) {
        int sw = 1 + static_cast<int>(rng.uniform_index(8));
        int sh = 1 + static_cast<int>(rng.uniform_index(8));
        int tw = 1 + static_cast<int>(rng.uniform_index(16));
        int th = 1 + static_cast<int>(rng.uniform_index(16));
        Image src = random_image(sw, sh, rng);
        CAPTURE(sw, sh, tw, th);
        REQUIRE(bilinear_resize(src, tw, th) == oracle_bilinear(src, tw, th));
    }
}

TEST_CASE("bilinear resize rejects zero targets", "[imageops]") {
    Image src(4, 4, 1);
    CHECK_THROWS_AS(bilinear_resize(src, 0, 4), ArgumentError);
    CHECK_THROWS_AS(bilinear_resize(src, 4, 0), ArgumentError);
}

// ---------------------------------------------------------------------------
// gaussian kernel / blur
// ---------------------------------------------------------------------------

TEST_CASE("gaussian point matches direct evaluation", "[imageops]") {
    // 1/(2*pi) at the center for sigma=1.
    CHECK(gaussian_point(1.0, 0, 0) == Catch::Approx(0.15915494309189535).epsilon(1e-12));
    CHECK(gaussian_point(1.0, 1, 0) ==
          Catch::Approx(std::exp(-0.5) / (2.0 * std::numbers::pi)).epsilon(1e-12));
}

TEST_CASE("gaussian kernels normalize and are 4-fold symmetric", "[imageops]") {
    for (double sigma : {0.4, 1.0, 2.5, 500.0}) {
        for (int size : {1, 3, 5, 11}) {
            CAPTURE(sigma, size);
            Kernel2D k = gaussian_kernel(sigma, size);
            double sum = std::accumulate(k.weights.begin(), k.weights.end(), 0.0);
            CHECK(std::abs(sum - 1.0) <= 1e-9);
            const int h = size / 2;
            for (int y = -h; y <= h; ++y)
                for (int x = -h; x <= h; ++x) {
                    REQUIRE(k.at(x, y) >= 0.0);
                    REQUIRE(k.at(x, y) == k.at(-x, y));
                    REQUIRE(k.at(x, y) == k.at(x, -y));
                }
        }
    }
}

TEST_CASE("sigma=500 kernel degenerates to a near-uniform box", "[imageops]") {
    Kernel2D k = gaussian_kernel(500.0, 11);
    auto [mn, mx] = std::minmax_element(k.weights.begin(), k.weights.end());
    CHECK(*mx / *mn < 1.0005);
}

TEST_CASE("gaussian kernel argument errors", "[imageops]") {
    CHECK_THROWS_AS(gaussian_kernel(0.0, 3), ArgumentError);
    CHECK_THROWS_AS(gaussian_kernel(-1.0, 3), ArgumentError);
    CHECK_THROWS_AS(gaussian_kernel(1.0, 4), ArgumentError);
    CHECK_THROWS_AS(gaussian_kernel(1.0, 0), ArgumentError);
    Image img(4, 4, 9);
    CHECK_THROWS_AS(gaussian_blur(img, -2.0, 3), ArgumentError);
    CHECK_THROWS_AS(gaussian_blur(img, 1.0, 6), ArgumentError);
}

TEST_CASE("blurring a constant image changes nothing", "[imageops]") {
    Image img(9, 6, 123);
    CHECK(gaussian_blur(img, 2.0, 5) == img);
}

TEST_CASE("blur spreads an isolated pixel and conserves mass", "[imageops]") {
    Image img(21, 21, 0);
    for (int c = 0; c < 3; ++c) img.at(10, 10, c) = 255;
    Image out = gaussian_blur(img, 1.0, 5);
    CHECK(int(out.at(10, 10, 0)) < 255);
    // Interior pixel, normalized kernel: the per-channel sum may move only
    // by the accumulated rounding of the 25 touched pixels.
    CHECK(std::abs(image_sum(out) - image_sum(img)) <= 3 * 25 / 2 + 3);
}

TEST_CASE("blur matches the direct-convolution oracle on a ramp", "[imageops]") {
    Image img(5, 5);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(x, y, c) = static_cast<std::uint8_t>(10 * (x + y) + 7 * c);
    CHECK(gaussian_blur(img, 2.0, 3) == oracle_blur(img, 2.0, 3));

    SplitMix64 rng(5);
    Image noisy = random_image(8, 6, rng);
    CHECK(gaussian_blur(noisy, 1.3, 5) == oracle_blur(noisy, 1.3, 5));
}

// ---------------------------------------------------------------------------
// step resizing
// ---------------------------------------------------------------------------

TEST_CASE("step plan for 500 px at ratio 0.5 step 3", "[imageops]") {
    CHECK(step_length_plan(500, 0.5, 3) == std::vector<int>{396, 314, 250});
}

TEST_CASE("step plan reaches floor(source*ratio) monotonically", "[imageops]") {
    for (int source = 1; source <= 512; ++source) {
        for (double ratio : {0.05, 0.1, 0.2, 0.5, 1.0}) {
            for (int step : {1, 3, 50}) {
                const int target = static_cast<int>(std::floor(source * ratio));
                CAPTURE(source, ratio, step);
                if (target < 1) {
                    CHECK_THROWS_AS(step_length_plan(source, ratio, step), ArgumentError);
                    continue;
                }
                auto plan = step_length_plan(source, ratio, step);
                REQUIRE(!plan.empty());
                CHECK(plan.back() == target);
                CHECK(plan.size() <= static_cast<std::size_t>(step));
                int prev = source;
                for (int len : plan) {
                    REQUIRE(len >= 1);
                    REQUIRE(len <= prev);
                    prev = len;
                }
            }
        }
    }
}

TEST_CASE("single-step halving resizes once", "[imageops]") {
    SplitMix64 rng(3);
    Image img = random_image(50, 50, rng);
    StepResizeTrace trace;
    Image out = step_resize(img, parse_profile("R0.5S1"), 11, &trace);
    CHECK(out.width == 25);
    CHECK(out.height == 25);
    CHECK(trace.resize_calls == 1);
    CHECK(out == bilinear_resize(img, 25, 25));
}

TEST_CASE("step resize respects the per-axis floor chain", "[imageops]") {
    SplitMix64 rng(17);
    Image img = random_image(100, 60, rng);
    StepResizeTrace trace;
    Image out = step_resize(img, parse_profile("R0.5S3"), 11, &trace);
    CHECK(out.width == 50);
    CHECK(out.height == 30);
    auto wplan = step_length_plan(100, 0.5, 3);
    auto hplan = step_length_plan(60, 0.5, 3);
    REQUIRE(trace.dims.size() == std::max(wplan.size(), hplan.size()));
    for (std::size_t i = 0; i < trace.dims.size(); ++i) {
        CHECK(trace.dims[i].first == wplan[std::min(i, wplan.size() - 1)]);
        CHECK(trace.dims[i].second == hplan[std::min(i, hplan.size() - 1)]);
    }
}

TEST_CASE("identity profile is bit-identical and resize-free", "[imageops]") {
    SplitMix64 rng(23);
    Image img = random_image(30, 20, rng);
    StepResizeTrace trace;
    Image out = step_resize(img, parse_profile("R1S1"), 11, &trace);
    CHECK(out == img);
    CHECK(trace.resize_calls == 0);
    CHECK(apply_profile(img, parse_profile("normal")) == img);
}

TEST_CASE("blur-only profile keeps dimensions", "[imageops]") {
    SplitMix64 rng(29);
    Image img = random_image(40, 30, rng);
    Image out = apply_profile(img, parse_profile("R1S1_GF500"));
    CHECK(out.width == 40);
    CHECK(out.height == 30);
    CHECK(out == gaussian_blur(img, 500.0, 11));
    CHECK(out != img);
}

TEST_CASE("extreme profile R0.05S50 lands on the exact target", "[imageops]") {
    SplitMix64 rng(31);
    Image img = random_image(500, 500, rng);
    Image out = apply_profile(img, parse_profile("R0.05S50"));
    CHECK(out.width == 25);
    CHECK(out.height == 25);
}

TEST_CASE("profiles below one pixel are rejected", "[imageops]") {
    Image img(10, 10, 1);
    CHECK_THROWS_AS(apply_profile(img, parse_profile("R0.05S1")), ArgumentError);
}

TEST_CASE("profile application is deterministic", "[imageops]") {
    SplitMix64 rng(37);
    Image img = random_image(64, 48, rng);
    auto p = parse_profile("R0.2S50");
    CHECK(apply_profile(img, p) == apply_profile(img, p));
}
