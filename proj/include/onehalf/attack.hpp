#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "onehalf/image.hpp"
#include "onehalf/pipeline.hpp"
#include "onehalf/spam.hpp"

namespace onehalf {

struct AttackConfig {
    double rho = 0.0;             // safety margin, success once score > rho
    double pixel_fraction = 0.10;  // per-iteration pixel budget, (0,1]
    int step = 1;                 // pixel increment magnitude
    int max_iters = 100;
    std::uint64_t seed = 0;       // breaks ties between equally ranked pixels

    void validate() const;
};

enum class TargetKind { TwoClassOnly, FullComposite };

std::string to_string(TargetKind kind);
TargetKind parse_target_kind(const std::string& name);  // "2c" | "15c"

/// The score being ascended: d1 for TwoClassOnly, f for FullComposite.
/// Borrows the model, which must outlive the target.
struct AttackTarget {
    TargetKind kind = TargetKind::FullComposite;
    const OneHalfClassModel* model = nullptr;
    SpamConfig spam;

    double score(std::span<const double> features) const;
    double score(const RasterImage& img) const;
};

/// Forward differences of the target score for a +step and a -step change
/// of every pixel of the luminance channel. Moves leaving [0,255] get 0.
struct SensitivityMap {
    int width = 0;
    int height = 0;
    int step = 1;
    double base_score = 0.0;
    std::vector<double> up;
    std::vector<double> down;

    /// Best score gain for pixel i, 0 when neither direction ascends.
    double gain(std::size_t i) const noexcept;
    /// +1, -1, or 0 (no ascent).
    int direction(std::size_t i) const noexcept;
};

SensitivityMap pixel_gradient(const AttackTarget& target, const RasterImage& img, int step = 1);

struct StepResult {
    RasterImage image;  // luminance channel after the step
    bool accepted = false;
    double score_before = 0.0;
    double score_after = 0.0;
    int pixels_changed = 0;
};

/// Changes the highest-gain pixels of `channel` (a single-channel image) in
/// their ascent direction. The step is committed only if the score strictly
/// increases; otherwise the budget is halved down to one pixel. When a
/// budget crosses rho, only the shortest crossing prefix of the ranking is
/// applied. accepted == false signals a stall.
StepResult attack_step(const AttackTarget& target, const RasterImage& channel, const SensitivityMap& map,
                       const AttackConfig& cfg);

struct AttackResult {
    RasterImage attacked;
    bool success = false;
    bool stalled = false;
    int iterations = 0;
    double mse = 0.0;
    double pixel_change_fraction = 0.0;
    double initial_score = 0.0;
    double final_score = 0.0;
    Prediction final_scores;
};

/// Iterates pixel_gradient and attack_step on a manipulated image until the
/// target score exceeds rho, the search stalls or max_iters is reached.
/// RGB images are attacked on V and re-embedded.
AttackResult run_attack(const AttackTarget& target, const RasterImage& img, const AttackConfig& cfg = {});

}  // namespace onehalf
