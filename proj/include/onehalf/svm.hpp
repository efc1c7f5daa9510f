#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "onehalf/types.hpp"

namespace onehalf {

/// Distances are summed in fixed blocks of this many coordinates, block
/// partials left to right. Incremental scorers rely on this order to
/// reproduce full evaluations bit for bit.
inline constexpr int kDistanceBlock = 7;

double block_partial(std::span<const double> a, std::span<const double> b, int block) noexcept;
double squared_distance(std::span<const double> a, std::span<const double> b);

/// exp(-gamma * ||a - b||^2)
double rbf_kernel(std::span<const double> a, std::span<const double> b, double gamma);

enum class SvmKind { TwoClass, OneClass };

std::string to_string(SvmKind kind);

/// Trained RBF machine: f(x) = sum_i coef_i K(sv_i, x) + bias.
///
/// TwoClass coefficients are y_i * alpha_i with |coef| <= C and sum zero;
/// OneClass coefficients are normalised so 0 <= coef <= 1/(nu n) and they
/// sum to one. `positive_meaning` is the class on the f >= 0 side.
struct SvmModel {
    SvmKind kind = SvmKind::TwoClass;
    double gamma = 1.0;
    double bias = 0.0;
    ImageClass positive_meaning = ImageClass::Pristine;
    int dim = 0;
    std::vector<double> coefficients;
    std::vector<double> support_vectors;  // sv_count() x dim, row-major

    std::size_t sv_count() const noexcept { return coefficients.size(); }
    std::span<const double> support_vector(std::size_t i) const noexcept {
        return {support_vectors.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }

    /// Throws InvalidArgument if the structural invariants do not hold.
    void validate() const;
};

/// C (two-class) or nu (one-class), plus the kernel width.
struct HyperParams {
    double c_or_nu = 1.0;
    double gamma = 1.0;
};

struct TrainOptions {
    double tolerance = 1e-3;
    long max_iterations = 10'000'000;
    std::size_t cache_bytes = std::size_t{256} << 20;
    ImageClass positive_meaning = ImageClass::Pristine;
};

/// Training samples; `labels` is +1/-1 per row for two-class training and
/// empty for one-class training.
struct TrainingSet {
    FeatureMatrix samples;
    std::vector<int> labels;
};

/// Pairwise squared distances between the rows of two matrices.
class DistanceTable {
public:
    DistanceTable() = default;
    DistanceTable(const FeatureMatrix& rows, const FeatureMatrix& cols);
    explicit DistanceTable(const FeatureMatrix& x) : DistanceTable(x, x) {}

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    double operator()(int i, int j) const noexcept {
        return data_[static_cast<std::size_t>(i) * cols_ + j];
    }
    /// Sub-table on the given row and column index sets.
    DistanceTable subset(std::span<const int> row_idx, std::span<const int> col_idx) const;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

/// Full result of a dual solve, kept for diagnostics and oracle tests.
struct SvmSolution {
    SvmModel model;
    std::vector<double> alpha;       // dual variables, non-negative, in model scaling
    std::vector<int> sv_indices;     // training rows with alpha > 0, model order
    double objective = 0.0;          // dual objective in model scaling
    long iterations = 0;
    double max_violation = 0.0;      // final m(alpha) - M(alpha)
};

/// Soft-margin C-SVC dual (min 1/2 a'Qa - e'a, y'a = 0, 0 <= a <= C).
/// `distances`, when given, must be the n x n table of the training rows.
SvmSolution solve_two_class(const TrainingSet& data, const HyperParams& hp, const TrainOptions& opts = {},
                            const DistanceTable* distances = nullptr);
SvmModel train_two_class(const TrainingSet& data, const HyperParams& hp, const TrainOptions& opts = {},
                         const DistanceTable* distances = nullptr);

/// nu one-class dual (min 1/2 a'Ka, sum a = 1, 0 <= a <= 1/(nu n)).
SvmSolution solve_one_class(const TrainingSet& data, const HyperParams& hp, const TrainOptions& opts = {},
                            const DistanceTable* distances = nullptr);
SvmModel train_one_class(const TrainingSet& data, const HyperParams& hp, const TrainOptions& opts = {},
                         const DistanceTable* distances = nullptr);

double decision_value(const SvmModel& model, std::span<const double> x);
std::vector<double> decision_values(const SvmModel& model, const FeatureMatrix& xs);

/// Decision value of a solution at column `col` of a table whose rows are
/// the solution's training rows. Same summation order as decision_value.
double decision_value_from_table(const SvmSolution& sol, const DistanceTable& table, int col);

/// d f / d x = sum_i coef_i K(sv_i, x) (-2 gamma) (x - sv_i)
std::vector<double> decision_gradient(const SvmModel& model, std::span<const double> x);

/// Versioned text format with a CRC-32 over the support-vector body.
std::string serialize(const SvmModel& model);
SvmModel deserialize(const std::string& bytes);

void save_model(const std::string& path, const SvmModel& model);
SvmModel load_model(const std::string& path);

}  // namespace onehalf
