#include "onehalf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "onehalf/error.hpp"

namespace onehalf {

RocCurve roc_auc(std::span<const double> scores, std::span<const ImageClass> labels) {
    if (scores.size() != labels.size()) throw ShapeMismatch("roc_auc: one label per score required");
    std::int64_t pristine = 0, manipulated = 0;
    for (auto l : labels) (l == ImageClass::Pristine ? pristine : manipulated) += 1;
    if (pristine == 0 || manipulated == 0) throw InvalidArgument("roc_auc: both classes must be present");
    for (double s : scores)
        if (std::isnan(s)) throw InvalidArgument("roc_auc: NaN score");

    // Ascending score: the most manipulated-looking samples are flagged first.
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    RocCurve roc;
    roc.points.emplace_back(0.0, 0.0);
    std::int64_t fa = 0, det = 0;
    std::int64_t twice_area = 0;  // in units of 1/(P*N)
    for (std::size_t i = 0; i < order.size();) {
        std::int64_t dfa = 0, ddet = 0;
        const double s = scores[order[i]];
        for (; i < order.size() && scores[order[i]] == s; ++i) {
            (labels[order[i]] == ImageClass::Pristine ? dfa : ddet) += 1;
        }
        twice_area += dfa * (2 * det + ddet);
        fa += dfa;
        det += ddet;
        roc.points.emplace_back(static_cast<double>(fa) / static_cast<double>(pristine),
                                static_cast<double>(det) / static_cast<double>(manipulated));
    }
    roc.auc = static_cast<double>(twice_area) / (2.0 * static_cast<double>(pristine) * static_cast<double>(manipulated));
    return roc;
}

double mse(const RasterImage& a, const RasterImage& b) {
    if (!a.same_shape(b)) throw ShapeMismatch("mse: images differ in shape");
    if (a.empty()) throw InvalidArgument("mse: empty image");
    const auto da = a.data();
    const auto db = b.data();
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < da.size(); ++i) {
        const int d = static_cast<int>(da[i]) - static_cast<int>(db[i]);
        sum += static_cast<std::uint64_t>(d * d);
    }
    return static_cast<double>(sum) / static_cast<double>(da.size());
}

double pixel_change_fraction(const RasterImage& a, const RasterImage& b) {
    if (!a.same_shape(b)) throw ShapeMismatch("pixel_change_fraction: images differ in shape");
    if (a.empty()) throw InvalidArgument("pixel_change_fraction: empty image");
    const auto da = a.data();
    const auto db = b.data();
    const auto ch = static_cast<std::size_t>(a.channels());
    std::uint64_t changed = 0;
    for (std::size_t p = 0; p < a.pixel_count(); ++p) {
        for (std::size_t c = 0; c < ch; ++c) {
            if (da[p * ch + c] != db[p * ch + c]) {
                ++changed;
                break;
            }
        }
    }
    return static_cast<double>(changed) / static_cast<double>(a.pixel_count());
}

double accuracy(std::span<const double> scores, std::span<const ImageClass> labels, ImageClass positive,
                double threshold) {
    if (scores.size() != labels.size()) throw ShapeMismatch("accuracy: one label per score required");
    if (scores.empty()) throw InvalidArgument("accuracy: no samples");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool says_positive = scores[i] >= threshold;
        if (says_positive == (labels[i] == positive)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(scores.size());
}

}  // namespace onehalf
