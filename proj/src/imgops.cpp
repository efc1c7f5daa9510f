#include "onehalf/imgops.hpp"

#include <jpeglib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <random>
#include <sstream>

#include "onehalf/error.hpp"

namespace onehalf {

// ---------------------------------------------------------------------------
// HSV decomposition

VDecomposition rgb_to_v(const RasterImage& rgb) {
    if (rgb.channels() != 3) {
        throw InvalidArgument("rgb_to_v: image is already grayscale");
    }
    const int w = rgb.width();
    const int h = rgb.height();
    VDecomposition out{RasterImage(w, h, 1), HsState{w, h, {}, {}}};
    out.hs.hue.resize(rgb.pixel_count());
    out.hs.saturation.resize(rgb.pixel_count());

    const auto src = rgb.data();
    auto dst = out.v.data();
    for (std::size_t i = 0; i < rgb.pixel_count(); ++i) {
        const double r = src[3 * i];
        const double g = src[3 * i + 1];
        const double b = src[3 * i + 2];
        const double v = std::max({r, g, b});
        const double c = v - std::min({r, g, b});
        double hue = 0.0;
        if (c > 0.0) {
            if (v == r) {
                hue = (g - b) / c;
                if (hue < 0.0) hue += 6.0;
            } else if (v == g) {
                hue = (b - r) / c + 2.0;
            } else {
                hue = (r - g) / c + 4.0;
            }
        }
        dst[i] = static_cast<std::uint8_t>(v);
        out.hs.hue[i] = hue;
        out.hs.saturation[i] = v > 0.0 ? c / v : 0.0;
    }
    return out;
}

RasterImage v_to_rgb(const RasterImage& v, const HsState& hs) {
    if (v.channels() != 1) {
        throw InvalidArgument("v_to_rgb: V channel must be single-channel");
    }
    if (v.width() != hs.width || v.height() != hs.height ||
        hs.hue.size() != v.pixel_count() || hs.saturation.size() != v.pixel_count()) {
        throw ShapeMismatch("v_to_rgb: V channel and hue/saturation state differ in size");
    }
    RasterImage out(v.width(), v.height(), 3);
    const auto src = v.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < v.pixel_count(); ++i) {
        const double value = src[i];
        const double chroma = value * hs.saturation[i];
        const double hue = hs.hue[i];
        const double x = chroma * (1.0 - std::abs(std::fmod(hue, 2.0) - 1.0));
        const double m = value - chroma;
        double r = 0, g = 0, b = 0;
        switch (static_cast<int>(hue) % 6) {
            case 0: r = chroma; g = x; break;
            case 1: r = x; g = chroma; break;
            case 2: g = chroma; b = x; break;
            case 3: g = x; b = chroma; break;
            case 4: r = x; b = chroma; break;
            default: r = chroma; b = x; break;
        }
        dst[3 * i] = clamp_to_u8(r + m);
        dst[3 * i + 1] = clamp_to_u8(g + m);
        dst[3 * i + 2] = clamp_to_u8(b + m);
    }
    return out;
}

RasterImage luminance_channel(const RasterImage& img) {
    if (img.channels() == 1) return img;
    return rgb_to_v(img).v;
}

namespace {

// Runs `op` on the V channel of an RGB image, or directly on a gray one.
template <typename Op>
RasterImage on_v_channel(const RasterImage& img, Op&& op) {
    if (img.channels() == 1) return op(img);
    auto dec = rgb_to_v(img);
    return v_to_rgb(op(dec.v), dec.hs);
}

}  // namespace

// ---------------------------------------------------------------------------
// Manipulation specs

ManipulationSpec ManipulationSpec::resize(double scale) {
    ManipulationSpec s;
    s.kind = ManipulationKind::Resize;
    s.scale = scale;
    return s;
}

ManipulationSpec ManipulationSpec::median(int window) {
    ManipulationSpec s;
    s.kind = ManipulationKind::MedianFilter;
    s.window = window;
    return s;
}

ManipulationSpec ManipulationSpec::clahe(double clip_limit, int tiles_x, int tiles_y) {
    ManipulationSpec s;
    s.kind = ManipulationKind::ClAhe;
    s.clip_limit = clip_limit;
    s.tiles_x = tiles_x;
    s.tiles_y = tiles_y;
    return s;
}

std::string ManipulationSpec::key() const {
    std::ostringstream os;
    os << to_string(kind) << '-';
    switch (kind) {
        case ManipulationKind::Resize: os << scale; break;
        case ManipulationKind::MedianFilter: os << window; break;
        case ManipulationKind::ClAhe: os << clip_limit << '-' << tiles_x << 'x' << tiles_y; break;
    }
    return os.str();
}

std::string to_string(ManipulationKind kind) {
    switch (kind) {
        case ManipulationKind::Resize: return "resize";
        case ManipulationKind::MedianFilter: return "median";
        case ManipulationKind::ClAhe: return "clahe";
    }
    return "unknown";
}

ManipulationKind parse_manipulation_kind(const std::string& name) {
    if (name == "resize") return ManipulationKind::Resize;
    if (name == "median") return ManipulationKind::MedianFilter;
    if (name == "clahe") return ManipulationKind::ClAhe;
    throw InvalidArgument("unknown manipulation '" + name + "' (expected resize|median|clahe)");
}

RasterImage apply_manipulation(const RasterImage& img, const ManipulationSpec& spec) {
    switch (spec.kind) {
        case ManipulationKind::Resize: return resize_bicubic(img, spec.scale);
        case ManipulationKind::MedianFilter: return median_filter_v(img, spec.window);
        case ManipulationKind::ClAhe:
            return cl_ahe_v(img, spec.clip_limit, spec.tiles_x, spec.tiles_y);
    }
    throw InvalidArgument("unknown manipulation kind");
}

// ---------------------------------------------------------------------------
// Bicubic resize

namespace {

double catmull_rom(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

struct Taps {
    std::vector<std::array<int, 4>> index;
    std::vector<std::array<double, 4>> weight;
};

Taps make_taps(int in_size, int out_size, double scale) {
    Taps taps;
    taps.index.resize(static_cast<std::size_t>(out_size));
    taps.weight.resize(static_cast<std::size_t>(out_size));
    for (int o = 0; o < out_size; ++o) {
        const double src = (o + 0.5) / scale - 0.5;
        const double base = std::floor(src);
        const double frac = src - base;
        for (int k = 0; k < 4; ++k) {
            const int i = static_cast<int>(base) - 1 + k;
            taps.index[o][k] = std::clamp(i, 0, in_size - 1);
            taps.weight[o][k] = catmull_rom(frac - (k - 1));
        }
    }
    return taps;
}

}  // namespace

RasterImage resize_bicubic(const RasterImage& img, double scale) {
    if (!(scale > 0.0)) {
        throw InvalidArgument("resize_bicubic: scale must be positive");
    }
    const int out_w = static_cast<int>(std::lround(img.width() * scale));
    const int out_h = static_cast<int>(std::lround(img.height() * scale));
    if (out_w <= 0 || out_h <= 0) {
        throw InvalidArgument("resize_bicubic: scale yields a zero-size image");
    }
    const int ch = img.channels();
    const Taps tx = make_taps(img.width(), out_w, scale);
    const Taps ty = make_taps(img.height(), out_h, scale);

    // horizontal pass into a real-valued buffer, then vertical
    std::vector<double> tmp(static_cast<std::size_t>(out_w) * img.height() * ch);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < out_w; ++x) {
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k) acc += tx.weight[x][k] * img.at(tx.index[x][k], y, c);
                tmp[(static_cast<std::size_t>(y) * out_w + x) * ch + c] = acc;
            }
        }
    }
    RasterImage out(out_w, out_h, ch);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k) {
                    acc += ty.weight[y][k] *
                           tmp[(static_cast<std::size_t>(ty.index[y][k]) * out_w + x) * ch + c];
                }
                out.at(x, y, c) = clamp_to_u8(acc);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Median filter

RasterImage median_filter_v(const RasterImage& img, int window) {
    if (window < 3 || window % 2 == 0) {
        throw InvalidArgument("median_filter_v: window must be odd and >= 3");
    }
    return on_v_channel(img, [window](const RasterImage& ch) {
        const int r = window / 2;
        const int w = ch.width();
        const int h = ch.height();
        RasterImage out(w, h, 1);
        std::vector<std::uint8_t> buf(static_cast<std::size_t>(window) * window);
        const auto mid = buf.begin() + static_cast<std::ptrdiff_t>(buf.size() / 2);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                std::size_t n = 0;
                for (int dy = -r; dy <= r; ++dy) {
                    const int yy = std::clamp(y + dy, 0, h - 1);
                    for (int dx = -r; dx <= r; ++dx) {
                        buf[n++] = ch.at(std::clamp(x + dx, 0, w - 1), yy);
                    }
                }
                std::nth_element(buf.begin(), mid, buf.end());
                out.at(x, y) = *mid;
            }
        }
        return out;
    });
}

// ---------------------------------------------------------------------------
// CL-AHE

namespace {

using Lut = std::array<double, 256>;

Lut tile_lut(const RasterImage& ch, int x0, int x1, int y0, int y1, double clip_limit) {
    std::array<double, 256> hist{};
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) hist[ch.at(x, y)] += 1.0;

    Lut lut{};
    const auto occupied = std::count_if(hist.begin(), hist.end(), [](double v) { return v > 0; });
    if (occupied <= 1) {
        for (int k = 0; k < 256; ++k) lut[k] = k;
        return lut;
    }

    const double total = static_cast<double>(x1 - x0) * static_cast<double>(y1 - y0);
    const double limit = clip_limit * total;
    double excess = 0.0;
    for (double& v : hist) {
        if (v > limit) {
            excess += v - limit;
            v = limit;
        }
    }
    const double share = excess / 256.0;
    double cdf = 0.0;
    for (int k = 0; k < 256; ++k) {
        cdf += hist[k] + share;
        lut[k] = 255.0 * cdf / total;
    }
    return lut;
}

// Tile boundaries and centres along one axis.
struct Grid {
    std::vector<int> begin;
    std::vector<double> centre;
};

Grid make_grid(int size, int tiles) {
    Grid g;
    for (int t = 0; t <= tiles; ++t) g.begin.push_back(static_cast<int>(static_cast<long>(t) * size / tiles));
    for (int t = 0; t < tiles; ++t) g.centre.push_back((g.begin[t] + g.begin[t + 1] - 1) / 2.0);
    return g;
}

// Index of the left neighbour tile and interpolation weight of the right one.
std::pair<int, double> locate(const Grid& g, int pos) {
    const int n = static_cast<int>(g.centre.size());
    if (pos <= g.centre.front()) return {0, 0.0};
    if (pos >= g.centre.back()) return {n - 1, 0.0};
    int t = 0;
    while (t + 1 < n && g.centre[t + 1] <= pos) ++t;
    const double span = g.centre[t + 1] - g.centre[t];
    return {t, (pos - g.centre[t]) / span};
}

}  // namespace

RasterImage cl_ahe_v(const RasterImage& img, double clip_limit, int tiles_x, int tiles_y) {
    if (!(clip_limit > 0.0 && clip_limit <= 1.0)) {
        throw InvalidArgument("cl_ahe_v: clip_limit must lie in (0,1]");
    }
    if (tiles_x < 1 || tiles_y < 1) {
        throw InvalidArgument("cl_ahe_v: tile grid must be at least 1x1");
    }
    if (tiles_x > img.width() || tiles_y > img.height()) {
        throw InvalidArgument("cl_ahe_v: tile grid finer than the image (tile larger than image)");
    }
    return on_v_channel(img, [&](const RasterImage& ch) {
        const Grid gx = make_grid(ch.width(), tiles_x);
        const Grid gy = make_grid(ch.height(), tiles_y);
        std::vector<Lut> luts;
        luts.reserve(static_cast<std::size_t>(tiles_x) * tiles_y);
        for (int ty = 0; ty < tiles_y; ++ty)
            for (int tx = 0; tx < tiles_x; ++tx)
                luts.push_back(tile_lut(ch, gx.begin[tx], gx.begin[tx + 1], gy.begin[ty],
                                        gy.begin[ty + 1], clip_limit));

        RasterImage out(ch.width(), ch.height(), 1);
        for (int y = 0; y < ch.height(); ++y) {
            const auto [ty, wy] = locate(gy, y);
            const int ty1 = std::min(ty + 1, tiles_y - 1);
            for (int x = 0; x < ch.width(); ++x) {
                const auto [tx, wx] = locate(gx, x);
                const int tx1 = std::min(tx + 1, tiles_x - 1);
                const int v = ch.at(x, y);
                const double top = (1.0 - wx) * luts[ty * tiles_x + tx][v] + wx * luts[ty * tiles_x + tx1][v];
                const double bot = (1.0 - wx) * luts[ty1 * tiles_x + tx][v] + wx * luts[ty1 * tiles_x + tx1][v];
                out.at(x, y) = clamp_to_u8((1.0 - wy) * top + wy * bot);
            }
        }
        return out;
    });
}

// ---------------------------------------------------------------------------
// Post-processing

RasterImage add_gaussian_noise(const RasterImage& img, double variance, std::uint64_t seed) {
    if (!(variance >= 0.0)) {
        throw InvalidArgument("add_gaussian_noise: variance must be non-negative");
    }
    if (variance == 0.0) return img;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, std::sqrt(variance));
    RasterImage out = img;
    for (auto& s : out.data()) s = clamp_to_u8(s + 255.0 * noise(rng));
    return out;
}

namespace {

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

}  // namespace

RasterImage jpeg_cycle(const RasterImage& img, int qf) {
    if (qf < 1 || qf > 100) {
        throw InvalidArgument("jpeg_cycle: quality factor must lie in [1,100]");
    }
    unsigned char* buffer = nullptr;
    unsigned long buffer_size = 0;
    JpegErrorManager err{};
    std::vector<std::uint8_t> decoded;
    int width = 0, height = 0, channels = 0;
    {
        jpeg_compress_struct cinfo{};
        cinfo.err = jpeg_std_error(&err.base);
        err.base.error_exit = jpeg_error_exit;
        if (setjmp(err.jump)) {
            jpeg_destroy_compress(&cinfo);
            std::free(buffer);
            throw Error(std::string("jpeg encode failed: ") + err.message);
        }
        jpeg_create_compress(&cinfo);
        jpeg_mem_dest(&cinfo, &buffer, &buffer_size);
        cinfo.image_width = static_cast<JDIMENSION>(img.width());
        cinfo.image_height = static_cast<JDIMENSION>(img.height());
        cinfo.input_components = img.channels();
        cinfo.in_color_space = img.channels() == 3 ? JCS_RGB : JCS_GRAYSCALE;
        jpeg_set_defaults(&cinfo);
        jpeg_set_quality(&cinfo, qf, TRUE);
        jpeg_start_compress(&cinfo, TRUE);
        const auto row_stride = static_cast<std::size_t>(img.width()) * img.channels();
        auto* base = const_cast<std::uint8_t*>(img.data().data());
        while (cinfo.next_scanline < cinfo.image_height) {
            JSAMPROW row = base + cinfo.next_scanline * row_stride;
            jpeg_write_scanlines(&cinfo, &row, 1);
        }
        jpeg_finish_compress(&cinfo);
        jpeg_destroy_compress(&cinfo);
    }
    {
        jpeg_decompress_struct dinfo{};
        dinfo.err = jpeg_std_error(&err.base);
        err.base.error_exit = jpeg_error_exit;
        if (setjmp(err.jump)) {
            jpeg_destroy_decompress(&dinfo);
            std::free(buffer);
            throw Error(std::string("jpeg decode failed: ") + err.message);
        }
        jpeg_create_decompress(&dinfo);
        jpeg_mem_src(&dinfo, buffer, buffer_size);
        jpeg_read_header(&dinfo, TRUE);
        jpeg_start_decompress(&dinfo);
        width = static_cast<int>(dinfo.output_width);
        height = static_cast<int>(dinfo.output_height);
        channels = dinfo.output_components;
        const auto row_stride = static_cast<std::size_t>(width) * channels;
        decoded.resize(row_stride * height);
        while (dinfo.output_scanline < dinfo.output_height) {
            JSAMPROW row = decoded.data() + dinfo.output_scanline * row_stride;
            jpeg_read_scanlines(&dinfo, &row, 1);
        }
        jpeg_finish_decompress(&dinfo);
        jpeg_destroy_decompress(&dinfo);
    }
    std::free(buffer);
    return RasterImage(width, height, channels, std::move(decoded));
}

RasterImage subsample_no_interp(const RasterImage& img, int target_width, int target_height) {
    if (target_width <= 0 || target_height <= 0) {
        throw InvalidArgument("subsample_no_interp: target size must be positive");
    }
    if (target_width > img.width() || target_height > img.height()) {
        throw InvalidArgument("subsample_no_interp: upscaling requested");
    }
    RasterImage out(target_width, target_height, img.channels());
    for (int y = 0; y < target_height; ++y) {
        const int sy = static_cast<int>(static_cast<long>(y) * img.height() / target_height);
        for (int x = 0; x < target_width; ++x) {
            const int sx = static_cast<int>(static_cast<long>(x) * img.width() / target_width);
            for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) = img.at(sx, sy, c);
        }
    }
    return out;
}

}  // namespace onehalf
