#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace onehalf {

/// 8-bit raster, 1 or 3 channels, row-major with interleaved channels.
///
/// The sample type enforces the [0,255] range; the constructor enforces
/// the length invariant.
class RasterImage {
public:
    RasterImage() = default;
    RasterImage(int width, int height, int channels);
    RasterImage(int width, int height, int channels, std::vector<std::uint8_t> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
    }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::uint8_t& at(int x, int y, int c = 0) noexcept {
        return data_[index(x, y, c)];
    }
    std::uint8_t at(int x, int y, int c = 0) const noexcept {
        return data_[index(x, y, c)];
    }

    std::span<std::uint8_t> data() noexcept { return data_; }
    std::span<const std::uint8_t> data() const noexcept { return data_; }

    bool same_shape(const RasterImage& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_ &&
               channels_ == other.channels_;
    }

    friend bool operator==(const RasterImage&, const RasterImage&) = default;

private:
    std::size_t index(int x, int y, int c) const noexcept {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                static_cast<std::size_t>(x)) *
                   static_cast<std::size_t>(channels_) +
               static_cast<std::size_t>(c);
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<std::uint8_t> data_;
};

/// Round to nearest and clamp to the 8-bit range.
std::uint8_t clamp_to_u8(double v) noexcept;

}  // namespace onehalf
