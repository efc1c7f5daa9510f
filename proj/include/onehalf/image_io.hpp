#pragma once

#include <filesystem>
#include <vector>

#include "onehalf/image.hpp"

namespace onehalf {

/// Load a lossless image (PNG, binary PGM `P5` or PPM `P6`). Format is
/// detected from the file signature, not the extension. 16-bit and alpha
/// PNGs are reduced to 8-bit gray/RGB.
RasterImage read_image(const std::filesystem::path& path);

/// Write by extension: `.png`, `.pgm` (1 channel) or `.ppm` (3 channels).
void write_image(const std::filesystem::path& path, const RasterImage& img);

/// Sorted list of readable image files (png/pgm/ppm/pnm) directly in `dir`.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace onehalf
