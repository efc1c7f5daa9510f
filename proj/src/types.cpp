#include "onehalf/types.hpp"

#include <algorithm>

#include "onehalf/error.hpp"

namespace onehalf {

std::string to_string(ImageClass c) {
    return c == ImageClass::Pristine ? "pristine" : "manipulated";
}

ImageClass parse_image_class(const std::string& s) {
    if (s == "pristine") return ImageClass::Pristine;
    if (s == "manipulated") return ImageClass::Manipulated;
    throw ParseError("unknown image class '" + s + "'");
}

void FeatureMatrix::push_back(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) cols_ = static_cast<int>(values.size());
    if (static_cast<int>(values.size()) != cols_) {
        throw ShapeMismatch("feature row has " + std::to_string(values.size()) +
                            " entries, matrix has " + std::to_string(cols_) + " columns");
    }
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
}

FeatureMatrix FeatureMatrix::select(std::span<const int> indices) const {
    FeatureMatrix out(cols_);
    for (int i : indices) out.push_back(row(i));
    return out;
}

int LabeledFeatures::count(ImageClass c) const noexcept {
    return static_cast<int>(std::count(labels.begin(), labels.end(), c));
}

}  // namespace onehalf
