#pragma once

#include <cstdint>
#include <vector>

#include "soli/error.hpp"

namespace soli {

// 8-bit interleaved RGB image, row-major. The unit of augmentation.
struct Image {
    static constexpr int kChannels = 3;

    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    Image() = default;

    Image(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h),
          data(static_cast<std::size_t>(check_dims(w, h)) * kChannels, fill) {}

    std::uint8_t& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * kChannels + c];
    }
    std::uint8_t at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * kChannels + c];
    }

    std::size_t pixel_count() const {
        return static_cast<std::size_t>(width) * height;
    }

    bool operator==(const Image&) const = default;

private:
    static std::size_t check_dims(int w, int h) {
        if (w < 1 || h < 1)
            throw ArgumentError("image dimensions must be >= 1, got " +
                                std::to_string(w) + "x" + std::to_string(h));
        return static_cast<std::size_t>(w) * h;
    }
};

} // namespace soli
