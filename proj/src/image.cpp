#include "onehalf/image.hpp"

#include <cmath>
#include <string>

#include "onehalf/error.hpp"

namespace onehalf {

namespace {

void check_shape(int width, int height, int channels) {
    if (width <= 0 || height <= 0) {
        throw InvalidArgument("image dimensions must be positive, got " + std::to_string(width) +
                              "x" + std::to_string(height));
    }
    if (channels != 1 && channels != 3) {
        throw InvalidArgument("image must have 1 or 3 channels, got " + std::to_string(channels));
    }
}

}  // namespace

RasterImage::RasterImage(int width, int height, int channels)
    : width_(width), height_(height), channels_(channels) {
    check_shape(width, height, channels);
    data_.assign(pixel_count() * static_cast<std::size_t>(channels), 0);
}

RasterImage::RasterImage(int width, int height, int channels, std::vector<std::uint8_t> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    check_shape(width, height, channels);
    if (data_.size() != pixel_count() * static_cast<std::size_t>(channels)) {
        throw ShapeMismatch("image data length " + std::to_string(data_.size()) +
                            " does not match " + std::to_string(width) + "x" +
                            std::to_string(height) + "x" + std::to_string(channels));
    }
}

std::uint8_t clamp_to_u8(double v) noexcept {
    if (!(v > 0.0)) return 0;  // also maps NaN to 0
    if (v >= 255.0) return 255;
    return static_cast<std::uint8_t>(std::lround(v));
}

}  // namespace onehalf
