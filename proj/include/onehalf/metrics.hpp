#pragma once

#include <span>
#include <utility>
#include <vector>

#include "onehalf/image.hpp"
#include "onehalf/types.hpp"

namespace onehalf {

/// ROC of a score where larger means "more pristine". Points are
/// (P_fa, 1 - P_md) for manipulated-flagging thresholds swept from strict to
/// lenient; equal scores form a single threshold.
struct RocCurve {
    std::vector<std::pair<double, double>> points;
    double auc = 0.0;
};

RocCurve roc_auc(std::span<const double> scores, std::span<const ImageClass> labels);

/// Mean squared sample difference on the 0-255 scale.
double mse(const RasterImage& a, const RasterImage& b);

/// Fraction of pixel positions where any channel differs.
double pixel_change_fraction(const RasterImage& a, const RasterImage& b);

/// Fraction of correct labels under score >= threshold -> `positive`.
double accuracy(std::span<const double> scores, std::span<const ImageClass> labels,
                ImageClass positive = ImageClass::Pristine, double threshold = 0.0);

}  // namespace onehalf
