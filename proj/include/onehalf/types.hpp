#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace onehalf {

/// H0 / H1.
enum class ImageClass { Pristine, Manipulated };

std::string to_string(ImageClass c);
ImageClass parse_image_class(const std::string& s);

/// Dense row-major sample matrix; every row is one feature vector.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    explicit FeatureMatrix(int cols) : cols_(cols) {}
    FeatureMatrix(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols) {}

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0; }

    std::span<const double> row(int i) const noexcept {
        return {data_.data() + static_cast<std::size_t>(i) * cols_, static_cast<std::size_t>(cols_)};
    }
    std::span<double> row(int i) noexcept {
        return {data_.data() + static_cast<std::size_t>(i) * cols_, static_cast<std::size_t>(cols_)};
    }

    /// Appends a row; the first row fixes the column count if none was given.
    void push_back(std::span<const double> values);

    /// Rows selected by index, in the given order.
    FeatureMatrix select(std::span<const int> indices) const;

    std::span<const double> flat() const noexcept { return data_; }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

/// Feature rows with their ground-truth class.
struct LabeledFeatures {
    FeatureMatrix features;
    std::vector<ImageClass> labels;

    void add(std::span<const double> x, ImageClass label) {
        features.push_back(x);
        labels.push_back(label);
    }
    int size() const noexcept { return features.rows(); }
    int count(ImageClass c) const noexcept;
};

}  // namespace onehalf
