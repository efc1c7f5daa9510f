#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "onehalf/svm.hpp"
#include "onehalf/types.hpp"

namespace onehalf {

// ---------------------------------------------------------------------------
// Dataset splits

/// Requested split sizes. The defaults are the 7997-image protocol; the
/// combiner test split absorbs whatever is left of the corpus.
struct SplitSizes {
    int validation = 1000;      // S_V
    int training = 5000;        // S_Tr
    int comb_validation = 300;  // S_T^v
    int comb_training = 700;    // S_T^tr
    int comb_test = 997;        // S_T^t (minimum)

    SplitSizes scaled(double factor) const;
    int total() const noexcept {
        return validation + training + comb_validation + comb_training + comb_test;
    }
};

struct DatasetSplits {
    std::vector<std::string> s_v;
    std::vector<std::string> s_tr;
    std::vector<std::string> s_t_v;
    std::vector<std::string> s_t_tr;
    std::vector<std::string> s_t_t;

    /// S_T = S_T^v + S_T^tr + S_T^t
    std::vector<std::string> s_t() const;
};

/// Uniform random disjoint assignment of `corpus` (order-insensitive),
/// deterministic in `seed`.
DatasetSplits make_splits(std::vector<std::string> corpus, const SplitSizes& sizes, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Error weighting

struct ErrorWeights {
    double alpha = 0.5;  // false-alarm weight
    double beta = 0.5;   // missed-detection weight

    bool normalized() const noexcept;
    static ErrorWeights from_alpha(double alpha) { return {alpha, 1.0 - alpha}; }
};

struct ErrorRates {
    double p_fa = 0.0;  // pristine judged manipulated
    double p_md = 0.0;  // manipulated judged pristine
};

double weighted_error(const ErrorRates& rates, const ErrorWeights& w);

/// Rates of a sign-threshold decision whose f >= 0 side means `positive`.
ErrorRates error_rates(std::span<const double> decisions, std::span<const ImageClass> labels,
                       ImageClass positive);

// ---------------------------------------------------------------------------
// Grid search

struct GridConfig {
    std::vector<double> c_or_nu;  // C grid (two-class) or nu grid (one-class)
    std::vector<double> gamma;
    int folds = 5;                // two-class cross-validation only
    std::uint64_t fold_seed = 0;

    /// {2^lo, 2^(lo+step), ..., 2^hi}
    static std::vector<double> powers_of_two(int lo, int hi, int step = 1);
    static GridConfig default_two_class();
    static GridConfig default_one_class();
};

struct GridCell {
    HyperParams params;
    double error = 0.0;
    bool trained = true;  // false when the solver failed for this cell
};

struct GridSearchResult {
    HyperParams best;
    double best_error = 0.0;
    std::vector<GridCell> cells;  // gamma-major, grid order
};

/// argmin over cells; ties (within 1e-12) go to the smaller gamma, then the
/// smaller C / nu. Independent of the order of `cells`.
const GridCell& select_best_cell(std::span<const GridCell> cells);

/// v-fold cross-validated P_e with alpha = beta = 0.5.
GridSearchResult grid_search_2c(const LabeledFeatures& validation, const GridConfig& grid,
                                const TrainOptions& opts = {}, int jobs = 1);

/// Trains on all of `training` (one class) per cell and scores
/// alpha P_fa + beta P_md on `validation` (both classes); no cross-validation.
GridSearchResult grid_search_1c(const FeatureMatrix& training, ImageClass home_class,
                                const LabeledFeatures& validation, const GridConfig& grid,
                                const ErrorWeights& weights, const TrainOptions& opts = {}, int jobs = 1);

// ---------------------------------------------------------------------------
// 1.5C detector

/// Four-SVM detector. The two-class model, the pristine one-class model and
/// the combiner put pristine on the positive side; the manipulated
/// one-class model puts manipulated there.
struct OneHalfClassModel {
    SvmModel two_class;       // 2C_H0/1, d1
    SvmModel oc_pristine;     // 1C_H0,   d2
    SvmModel oc_manipulated;  // 1C_H1,   d3
    SvmModel combiner;        // 1C_H0^cmb on (d1,d2,d3)

    void validate() const;
};

struct Prediction {
    std::array<double, 3> d{};
    double f = 0.0;
    ImageClass label = ImageClass::Pristine;
};

std::array<double, 3> intermediate_scores(const OneHalfClassModel& model, std::span<const double> x);
Prediction predict_15c(const OneHalfClassModel& model, std::span<const double> x);

/// Per-image pristine / manipulated features; either may be missing.
struct ImageFeatures {
    std::optional<std::vector<double>> pristine;
    std::optional<std::vector<double>> manipulated;
};
using FeatureStore = std::map<std::string, ImageFeatures>;

struct TrainConfig {
    GridConfig grid_2c = GridConfig::default_two_class();
    GridConfig grid_1c = GridConfig::default_one_class();
    GridConfig grid_combiner = GridConfig::default_one_class();
    ErrorWeights weights_intermediate = ErrorWeights::from_alpha(0.2);
    ErrorWeights weights_combiner = ErrorWeights::from_alpha(0.1);
    TrainOptions options;
    int jobs = 1;
};

struct TrainReport {
    OneHalfClassModel model;
    GridSearchResult search_2c;
    GridSearchResult search_1c_pristine;
    GridSearchResult search_1c_manipulated;
    GridSearchResult search_combiner;
};

/// Stage names used in StageError: "2C_H01", "1C_H0", "1C_H1", "1C_H0^cmb".
TrainReport train_15c(const DatasetSplits& splits, const FeatureStore& features, const TrainConfig& cfg);

/// Four model files plus a JSON manifest of the chosen hyper-parameters.
void save_detector(const std::filesystem::path& dir, const TrainReport& report, const DatasetSplits& splits);
OneHalfClassModel load_detector(const std::filesystem::path& dir);

}  // namespace onehalf
