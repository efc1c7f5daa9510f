#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "onehalf/image.hpp"

namespace onehalf {

/// Hue and saturation of every pixel, kept in real precision so that
/// re-embedding an unmodified V channel is bit-exact.
struct HsState {
    int width = 0;
    int height = 0;
    std::vector<double> hue;         // sextant units, [0,6)
    std::vector<double> saturation;  // [0,1]
};

struct VDecomposition {
    RasterImage v;
    HsState hs;
};

/// V = max(R,G,B) plus the hue/saturation remainder. Throws on 1-channel input.
VDecomposition rgb_to_v(const RasterImage& rgb);

/// Rebuild RGB from a (possibly edited) V channel, rounding once at the end.
RasterImage v_to_rgb(const RasterImage& v, const HsState& hs);

enum class ManipulationKind { Resize, MedianFilter, ClAhe };

struct ManipulationSpec {
    ManipulationKind kind = ManipulationKind::Resize;
    double scale = 1.3;       // Resize
    int window = 3;           // MedianFilter
    double clip_limit = 0.05;  // ClAhe
    int tiles_x = 8;          // ClAhe
    int tiles_y = 8;          // ClAhe

    static ManipulationSpec resize(double scale = 1.3);
    static ManipulationSpec median(int window = 3);
    static ManipulationSpec clahe(double clip_limit = 0.05, int tiles_x = 8, int tiles_y = 8);

    /// Stable identifier, used as a cache key ("resize-1.3", "median-3", ...).
    std::string key() const;
};

std::string to_string(ManipulationKind kind);
ManipulationKind parse_manipulation_kind(const std::string& name);

/// Catmull-Rom bicubic resampling, per channel, edge-replicated borders.
RasterImage resize_bicubic(const RasterImage& img, double scale);

/// Square median filter; 3-channel input is filtered on V only.
RasterImage median_filter_v(const RasterImage& img, int window);

/// Clip-limited adaptive histogram equalization; 3-channel input on V only.
/// `clip_limit` is a fraction of the tile pixel count.
RasterImage cl_ahe_v(const RasterImage& img, double clip_limit, int tiles_x = 8, int tiles_y = 8);

RasterImage apply_manipulation(const RasterImage& img, const ManipulationSpec& spec);

/// Additive white Gaussian noise; `variance` is on the [0,1] intensity scale.
RasterImage add_gaussian_noise(const RasterImage& img, double variance, std::uint64_t seed);

/// Encode with baseline JPEG at quality `qf`, decode back.
RasterImage jpeg_cycle(const RasterImage& img, int qf);

/// Nearest-sample decimation without any filtering.
RasterImage subsample_no_interp(const RasterImage& img, int target_width, int target_height);

/// The single channel SPAM and the attack operate on: V for RGB, the image itself otherwise.
RasterImage luminance_channel(const RasterImage& img);

}  // namespace onehalf
