#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "onehalf/image.hpp"

namespace onehalf {

/// Procedural stand-in for a camera corpus: smooth illumination, soft-edged
/// shapes, fine texture and per-pixel sensor noise, quantised to 8 bits.
struct SynthConfig {
    int count = 400;
    int width = 96;
    int height = 96;
    int channels = 3;
    double noise_sigma_min = 2.0;  // sensor noise, 0-255 scale
    double noise_sigma_max = 9.0;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Image `index` of the corpus; depends only on (cfg, index).
RasterImage synth_image(const SynthConfig& cfg, int index);

std::string synth_image_id(int index);

/// Writes `<id>.png` files into `dir`, skipping ones already present.
/// Returns the ids in corpus order.
std::vector<std::string> write_synthetic_corpus(const std::filesystem::path& dir, const SynthConfig& cfg,
                                                int jobs = 1);

}  // namespace onehalf
