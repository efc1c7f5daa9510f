#pragma once

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "onehalf/image.hpp"
#include "onehalf/pipeline.hpp"
#include "onehalf/spam.hpp"
#include "onehalf/svm.hpp"
#include "oracles/reference.hpp"

namespace testing {

using onehalf::RasterImage;

inline RasterImage random_image(std::mt19937_64& rng, int w, int h, int channels = 1, int lo = 0, int hi = 255) {
    RasterImage img(w, h, channels);
    std::uniform_int_distribution<int> d(lo, hi);
    for (auto& s : img.data()) s = static_cast<std::uint8_t>(d(rng));
    return img;
}

/// Smooth gradient plus mild texture; JPEG and resampling behave as on photos.
inline RasterImage smooth_image(std::mt19937_64& rng, int w, int h, int channels = 3) {
    RasterImage img(w, h, channels);
    std::normal_distribution<double> n(0.0, 3.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) {
                const double v = 90 + 60 * std::sin(0.11 * x + 0.7 * c) + 40 * std::cos(0.07 * y) + n(rng);
                img.at(x, y, c) = onehalf::clamp_to_u8(v);
            }
    return img;
}

inline oracle::Gray to_gray(const RasterImage& img, int channel = 0) {
    oracle::Gray g{img.width(), img.height(), {}};
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) g.px.push_back(img.at(x, y, channel));
    return g;
}

/// Random RBF machine centred on `centres` (rows of length dim).
inline onehalf::SvmModel random_model(std::mt19937_64& rng, onehalf::SvmKind kind,
                                      const std::vector<std::vector<double>>& centres, double gamma,
                                      onehalf::ImageClass positive = onehalf::ImageClass::Pristine) {
    onehalf::SvmModel m;
    m.kind = kind;
    m.gamma = gamma;
    m.dim = static_cast<int>(centres.front().size());
    m.positive_meaning = positive;
    std::uniform_real_distribution<double> u(0.05, 1.0);
    for (const auto& c : centres) {
        m.coefficients.push_back(u(rng));
        m.support_vectors.insert(m.support_vectors.end(), c.begin(), c.end());
    }
    const double total = std::accumulate(m.coefficients.begin(), m.coefficients.end(), 0.0);
    if (kind == onehalf::SvmKind::OneClass) {
        for (double& c : m.coefficients) c /= total;
        m.bias = -0.5 / static_cast<double>(centres.size());
    } else {
        // alternate signs, then remove the mean so the coefficients sum to zero
        for (std::size_t i = 0; i < m.coefficients.size(); i += 2) m.coefficients[i] = -m.coefficients[i];
        const double mean = std::accumulate(m.coefficients.begin(), m.coefficients.end(), 0.0) /
                            static_cast<double>(m.coefficients.size());
        for (double& c : m.coefficients) c -= mean;
        m.bias = std::uniform_real_distribution<double>(-0.2, 0.2)(rng);
    }
    return m;
}

/// SPAM vectors of random images of the given size.
inline std::vector<std::vector<double>> spam_pool(std::mt19937_64& rng, int count, int w, int h, int spread = 4) {
    std::vector<std::vector<double>> out;
    for (int i = 0; i < count; ++i) {
        const int base = std::uniform_int_distribution<int>(40, 200)(rng);
        out.push_back(onehalf::spam_features(random_image(rng, w, h, 1, base - spread, base + spread)).values);
    }
    return out;
}

/// Composite detector built from random machines around SPAM vectors of
/// images shaped like the ones it will score.
inline onehalf::OneHalfClassModel random_composite(std::mt19937_64& rng, int w, int h) {
    using onehalf::SvmKind;
    onehalf::OneHalfClassModel m;
    m.two_class = random_model(rng, SvmKind::TwoClass, spam_pool(rng, 6, w, h), 2.0);
    m.oc_pristine = random_model(rng, SvmKind::OneClass, spam_pool(rng, 5, w, h), 1.5);
    m.oc_manipulated = random_model(rng, SvmKind::OneClass, spam_pool(rng, 5, w, h), 1.5,
                                    onehalf::ImageClass::Manipulated);
    std::normal_distribution<double> n(0.0, 0.3);
    std::vector<std::vector<double>> d;
    for (int i = 0; i < 4; ++i) d.push_back({n(rng), n(rng), n(rng)});
    m.combiner = random_model(rng, SvmKind::OneClass, d, 1.0);
    return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("onehalf-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing
