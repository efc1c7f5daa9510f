#include "onehalf/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

#include "onehalf/error.hpp"

namespace onehalf {

namespace fs = std::filesystem;

namespace {

std::string lower_extension(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw Error("cannot open '" + path.string() + "'");
    return f;
}

// ---------------------------------------------------------------------------
// PNM

// Skips whitespace and '#' comments, then reads a decimal integer.
int read_pnm_int(std::istream& in, const fs::path& path) {
    int c = in.peek();
    while (in && (std::isspace(c) || c == '#')) {
        if (c == '#') {
            std::string ignored;
            std::getline(in, ignored);
        } else {
            in.get();
        }
        c = in.peek();
    }
    int value = -1;
    if (!(in >> value) || value < 0) throw ParseError("malformed PNM header in '" + path.string() + "'");
    return value;
}

RasterImage read_pnm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    char magic[2] = {};
    in.read(magic, 2);
    if (magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
        throw ParseError("'" + path.string() + "' is not a binary PGM/PPM");
    }
    const int channels = magic[1] == '5' ? 1 : 3;
    const int width = read_pnm_int(in, path);
    const int height = read_pnm_int(in, path);
    const int maxval = read_pnm_int(in, path);
    if (maxval != 255) throw ParseError("only 8-bit PNM is supported ('" + path.string() + "')");
    in.get();  // single whitespace before raster
    std::vector<std::uint8_t> data(static_cast<std::size_t>(width) * height * channels);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (in.gcount() != static_cast<std::streamsize>(data.size())) {
        throw ParseError("truncated raster in '" + path.string() + "'");
    }
    return RasterImage(width, height, channels, std::move(data));
}

void write_pnm(const fs::path& path, const RasterImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << (img.channels() == 1 ? "P5" : "P6") << '\n'
        << img.width() << ' ' << img.height() << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data().data()),
              static_cast<std::streamsize>(img.size()));
    if (!out) throw Error("short write to '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// PNG

// Keeps libpng quiet; the message ends up in the thrown exception instead.
struct PngMessages {
    char text[256] = "";
};

void png_on_error(png_structp png, png_const_charp msg) {
    auto* m = static_cast<PngMessages*>(png_get_error_ptr(png));
    std::snprintf(m->text, sizeof m->text, "%s", msg);
    png_longjmp(png, 1);
}

void png_on_warning(png_structp, png_const_charp) {}

RasterImage read_png(const fs::path& path) {
    auto file = open_file(path, "rb");
    PngMessages msg;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &msg, png_on_error, png_on_warning);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("libpng initialisation failed");
    }
    std::vector<std::uint8_t> data;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ParseError("corrupt PNG '" + path.string() + "': " + msg.text);
    }
    png_init_io(png, file.get());
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_packing(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ParseError("unsupported PNG channel layout in '" + path.string() + "'");
    }
    const std::size_t stride = static_cast<std::size_t>(width) * channels;
    data.resize(stride * height);
    rows.resize(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) rows[y] = data.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return RasterImage(width, height, channels, std::move(data));
}

void write_png(const fs::path& path, const RasterImage& img) {
    auto file = open_file(path, "wb");
    PngMessages msg;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &msg, png_on_error, png_on_warning);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error("libpng initialisation failed");
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height()));
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("PNG encode failed for '" + path.string() + "': " + msg.text);
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()),
                 static_cast<png_uint_32>(img.height()), 8,
                 img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    const std::size_t stride = static_cast<std::size_t>(img.width()) * img.channels();
    auto* base = const_cast<std::uint8_t*>(img.data().data());
    for (int y = 0; y < img.height(); ++y) rows[y] = base + y * stride;
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

RasterImage read_image(const fs::path& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw Error("cannot open '" + path.string() + "'");
    unsigned char sig[8] = {};
    probe.read(reinterpret_cast<char*>(sig), 8);
    probe.close();
    if (png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
    if (sig[0] == 'P' && (sig[1] == '5' || sig[1] == '6')) return read_pnm(path);
    throw ParseError("unrecognised image format: '" + path.string() + "'");
}

void write_image(const fs::path& path, const RasterImage& img) {
    const std::string ext = lower_extension(path);
    if (ext == ".png") {
        write_png(path, img);
    } else if ((ext == ".pgm" && img.channels() == 1) || (ext == ".ppm" && img.channels() == 3) ||
               ext == ".pnm") {
        write_pnm(path, img);
    } else {
        throw InvalidArgument("cannot write " + std::to_string(img.channels()) +
                              "-channel image as '" + ext + "'");
    }
}

std::vector<fs::path> list_images(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error("not a directory: '" + dir.string() + "'");
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = lower_extension(entry.path());
        if (ext == ".png" || ext == ".pgm" || ext == ".ppm" || ext == ".pnm") out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace onehalf
