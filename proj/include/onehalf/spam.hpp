#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "onehalf/image.hpp"
#include "onehalf/types.hpp"

namespace onehalf {

/// Walk direction of a residual chain. Each direction's residual is
/// `I(p) - I(p + step)` where `step` is the unit move along the walk.
enum class Direction { Right, Left, Down, Up, DownRight, UpLeft, DownLeft, UpRight };

struct Step {
    int dx;
    int dy;
};

constexpr Step step_of(Direction d) noexcept {
    switch (d) {
        case Direction::Right: return {1, 0};
        case Direction::Left: return {-1, 0};
        case Direction::Down: return {0, 1};
        case Direction::Up: return {0, -1};
        case Direction::DownRight: return {1, 1};
        case Direction::UpLeft: return {-1, -1};
        case Direction::DownLeft: return {-1, 1};
        case Direction::UpRight: return {1, -1};
    }
    return {0, 0};
}

/// Averaging groups. The order inside a group fixes the summation order.
inline constexpr std::array<Direction, 4> kStraightDirections = {
    Direction::Right, Direction::Left, Direction::Down, Direction::Up};
inline constexpr std::array<Direction, 4> kDiagonalDirections = {
    Direction::DownRight, Direction::UpLeft, Direction::DownLeft, Direction::UpRight};

/// How co-occurrence counts become tensor entries.
enum class Normalization {
    Conditional,  // P(w | u, v): Markov transition probabilities
    Joint,        // P(u, v, w): counts over all triples
};

struct SpamConfig {
    int truncation = 3;  // T
    Normalization normalization = Normalization::Conditional;

    int levels() const noexcept { return 2 * truncation + 1; }
    int tensor_size() const noexcept { return levels() * levels() * levels(); }
    int feature_size() const noexcept { return 2 * tensor_size(); }
    std::string key() const;
};

/// First-order differences stored at the pixel-pair anchor (the corner with
/// the smaller coordinates); the walk direction only fixes the sign and the
/// order in which triples are read.
struct ResidualField {
    Direction direction = Direction::Right;
    int cols = 0;
    int rows = 0;
    std::vector<int> values;

    int at(int x, int y) const noexcept { return values[static_cast<std::size_t>(y) * cols + x]; }
};

ResidualField residuals(const RasterImage& channel, Direction direction);
ResidualField truncate(ResidualField field, int truncation);

/// Occurrence counts of (u,v,w) triples along the field's walk, indexed
/// `((u+T)*L + (v+T))*L + (w+T)` with L = 2T+1.
std::vector<std::int64_t> count_triples(const ResidualField& truncated, int truncation);

/// Normalised tensor; conditional rows with no support stay zero.
std::vector<double> transition_tensor(const ResidualField& truncated, const SpamConfig& cfg);

/// Shared by the full and incremental extractors so both produce identical bits.
inline double tensor_entry(std::int64_t count, std::int64_t denominator) noexcept {
    return denominator == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(denominator);
}
inline double aggregate4(double a, double b, double c, double d) noexcept {
    return (a + b + c + d) / 4.0;
}

struct FeatureVector {
    std::vector<double> values;
    std::string source_id;
};

/// Second-order SPAM features: the straight-direction tensors averaged,
/// followed by the diagonal ones. 686 entries at T=3. Colour input uses V.
FeatureVector spam_features(const RasterImage& img, const SpamConfig& cfg = {}, std::string source_id = {});

/// Column names in persisted order: hv_<u>_<v>_<w> ..., dg_<u>_<v>_<w> ...
std::vector<std::string> feature_column_names(const SpamConfig& cfg);

struct FeatureRecord {
    std::string source_id;
    ImageClass label = ImageClass::Pristine;
    std::vector<double> values;
};

/// CSV: header `source_id,label,<columns>` then one row per image,
/// values in shortest round-trip decimal form.
void write_feature_csv(const std::filesystem::path& path, std::span<const FeatureRecord> records,
                       const SpamConfig& cfg);
std::vector<FeatureRecord> read_feature_csv(const std::filesystem::path& path, const SpamConfig& cfg);

/// SPAM state of one channel that can absorb single-pixel edits, touching
/// only the residual triples whose 4-pixel walk contains the edited pixel.
class IncrementalSpam {
public:
    IncrementalSpam(const RasterImage& channel, const SpamConfig& cfg);

    std::span<const double> features() const noexcept { return features_; }
    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::uint8_t pixel(int x, int y) const noexcept { return pixels_[index(x, y)]; }

    /// Applies the edit; returns the feature indices that were recomputed
    /// (valid until the next call).
    std::span<const int> set_pixel(int x, int y, std::uint8_t value);

    RasterImage channel() const;

private:
    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * width_ + x;
    }
    void walk_update(int x, int y, int sign);
    void refresh_rows();

    SpamConfig cfg_;
    int width_;
    int height_;
    std::vector<std::uint8_t> pixels_;
    std::array<std::vector<std::int64_t>, 8> counts_;
    std::array<std::vector<std::int64_t>, 8> row_totals_;
    std::array<std::int64_t, 8> triple_totals_{};
    std::vector<double> features_;
    std::vector<char> row_dirty_;  // per group, per (u,v)
    std::vector<int> dirty_rows_;
    std::vector<int> changed_;
};

}  // namespace onehalf
