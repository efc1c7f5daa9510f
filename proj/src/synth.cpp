#include "onehalf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "onehalf/error.hpp"
#include "onehalf/image_io.hpp"
#include "parallel.hpp"

namespace onehalf {

void SynthConfig::validate() const {
    if (count < 1) throw InvalidArgument("synth: count must be positive");
    if (width < 16 || height < 16) throw InvalidArgument("synth: images must be at least 16x16");
    if (channels != 1 && channels != 3) throw InvalidArgument("synth: channels must be 1 or 3");
    if (!(noise_sigma_min >= 0.0 && noise_sigma_max >= noise_sigma_min)) {
        throw InvalidArgument("synth: bad sensor noise range");
    }
}

std::string synth_image_id(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "synth_%05d", index);
    return buf;
}

namespace {

struct Wave {
    double fx, fy, phase, amp;
};

struct Shape {
    double cx, cy, rx, ry, angle, offset;
    bool box;
    double tint[3];
};

double smoothstep(double e0, double e1, double x) {
    const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

}  // namespace

RasterImage synth_image(const SynthConfig& cfg, int index) {
    cfg.validate();
    if (index < 0) throw InvalidArgument("synth: negative image index");
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(index)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    auto range = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };

    const int w = cfg.width, h = cfg.height;
    const double two_pi = 2.0 * std::numbers::pi;

    const double mean = range(70.0, 180.0);
    std::vector<Wave> waves(4);
    for (auto& wv : waves) wv = {range(-3.0, 3.0), range(-3.0, 3.0), range(0.0, two_pi), range(5.0, 30.0)};

    std::vector<Shape> shapes(static_cast<std::size_t>(2 + rng() % 5));
    for (auto& s : shapes) {
        s = {range(0.0, w), range(0.0, h), range(0.08, 0.35) * w, range(0.08, 0.35) * h, range(0.0, std::numbers::pi),
             range(-60.0, 60.0), uni(rng) < 0.4, {range(0.8, 1.2), range(0.8, 1.2), range(0.8, 1.2)}};
    }

    // Band-limited texture: white noise smoothed by a 3x3 box.
    const double texture_amp = range(1.5, 6.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> white(static_cast<std::size_t>(w + 2) * (h + 2));
    for (auto& v : white) v = gauss(rng);
    auto white_at = [&](int x, int y) { return white[static_cast<std::size_t>(y) * (w + 2) + x]; };

    const double tint_global[3] = {range(0.85, 1.15), 1.0, range(0.85, 1.15)};
    const double sigma = range(cfg.noise_sigma_min, cfg.noise_sigma_max);

    RasterImage img(w, h, cfg.channels);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double lum = mean;
            for (const auto& wv : waves) {
                lum += wv.amp * std::cos(two_pi * (wv.fx * x / w + wv.fy * y / h) + wv.phase);
            }
            double tint[3] = {tint_global[0], tint_global[1], tint_global[2]};
            for (const auto& s : shapes) {
                const double dx = x - s.cx, dy = y - s.cy;
                const double c = std::cos(s.angle), sn = std::sin(s.angle);
                const double u = (c * dx + sn * dy) / s.rx, v = (-sn * dx + c * dy) / s.ry;
                const double r = s.box ? std::max(std::abs(u), std::abs(v)) : std::sqrt(u * u + v * v);
                const double inside = 1.0 - smoothstep(1.0 - 1.5 / std::min(s.rx, s.ry), 1.0, r);
                lum += inside * s.offset;
                for (int k = 0; k < 3; ++k) tint[k] += inside * (s.tint[k] - 1.0);
            }
            double tex = 0.0;
            for (int j = 0; j < 3; ++j)
                for (int i = 0; i < 3; ++i) tex += white_at(x + i, y + j);
            lum += texture_amp * tex / 3.0;
            for (int c = 0; c < cfg.channels; ++c) {
                const double base = cfg.channels == 3 ? lum * tint[c] : lum;
                img.at(x, y, c) = clamp_to_u8(base + sigma * gauss(rng));
            }
        }
    }
    return img;
}

std::vector<std::string> write_synthetic_corpus(const std::filesystem::path& dir, const SynthConfig& cfg, int jobs) {
    cfg.validate();
    std::filesystem::create_directories(dir);
    std::vector<std::string> ids(static_cast<std::size_t>(cfg.count));
    detail::parallel_for(cfg.count, jobs, [&](int i) {
        ids[static_cast<std::size_t>(i)] = synth_image_id(i);
        const auto path = dir / (ids[static_cast<std::size_t>(i)] + ".png");
        if (std::filesystem::exists(path)) return;
        const auto tmp = dir / (ids[static_cast<std::size_t>(i)] + ".partial.png");
        write_image(tmp, synth_image(cfg, i));
        std::filesystem::rename(tmp, path);
    });
    return ids;
}

}  // namespace onehalf
