#include "onehalf/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include <json.hpp>

#include "onehalf/error.hpp"
#include "parallel.hpp"

namespace onehalf {

namespace fs = std::filesystem;

namespace {

constexpr double kTieTolerance = 1e-12;

const char* const kStage2C = "2C_H01";
const char* const kStage1CPristine = "1C_H0";
const char* const kStage1CManipulated = "1C_H1";
const char* const kStageCombiner = "1C_H0^cmb";

}  // namespace

// ---------------------------------------------------------------------------
// Splits

SplitSizes SplitSizes::scaled(double factor) const {
    if (!(factor > 0.0)) throw InvalidArgument("split scale factor must be positive");
    auto s = [factor](int n) { return static_cast<int>(std::lround(n * factor)); };
    return {s(validation), s(training), s(comb_validation), s(comb_training), s(comb_test)};
}

std::vector<std::string> DatasetSplits::s_t() const {
    std::vector<std::string> out = s_t_v;
    out.insert(out.end(), s_t_tr.begin(), s_t_tr.end());
    out.insert(out.end(), s_t_t.begin(), s_t_t.end());
    return out;
}

DatasetSplits make_splits(std::vector<std::string> corpus, const SplitSizes& sizes, std::uint64_t seed) {
    for (int n : {sizes.validation, sizes.training, sizes.comb_validation, sizes.comb_training, sizes.comb_test}) {
        if (n < 1) throw InvalidArgument("make_splits: every split needs at least one image");
    }
    std::sort(corpus.begin(), corpus.end());
    if (std::adjacent_find(corpus.begin(), corpus.end()) != corpus.end()) {
        throw InvalidArgument("make_splits: duplicate image ids in corpus");
    }
    if (static_cast<int>(corpus.size()) < sizes.total()) {
        throw InvalidArgument("make_splits: corpus too small (" + std::to_string(corpus.size()) +
                              " images, splits need " + std::to_string(sizes.total()) + ")");
    }
    std::mt19937_64 rng(seed);
    std::shuffle(corpus.begin(), corpus.end(), rng);

    DatasetSplits out;
    auto it = corpus.begin();
    auto take = [&it](std::vector<std::string>& dst, int n) {
        dst.assign(it, it + n);
        std::sort(dst.begin(), dst.end());
        it += n;
    };
    take(out.s_v, sizes.validation);
    take(out.s_tr, sizes.training);
    take(out.s_t_v, sizes.comb_validation);
    take(out.s_t_tr, sizes.comb_training);
    take(out.s_t_t, static_cast<int>(corpus.end() - it));
    return out;
}

// ---------------------------------------------------------------------------
// Errors

bool ErrorWeights::normalized() const noexcept {
    return alpha > 0.0 && beta > 0.0 && std::abs(alpha + beta - 1.0) <= 1e-12;
}

double weighted_error(const ErrorRates& rates, const ErrorWeights& w) {
    return w.alpha * rates.p_fa + w.beta * rates.p_md;
}

ErrorRates error_rates(std::span<const double> decisions, std::span<const ImageClass> labels,
                       ImageClass positive) {
    if (decisions.size() != labels.size()) throw ShapeMismatch("error_rates: one label per decision required");
    long pristine = 0, manipulated = 0, fa = 0, md = 0;
    for (std::size_t i = 0; i < decisions.size(); ++i) {
        const ImageClass said = decisions[i] >= 0.0
                                    ? positive
                                    : (positive == ImageClass::Pristine ? ImageClass::Manipulated
                                                                        : ImageClass::Pristine);
        if (labels[i] == ImageClass::Pristine) {
            ++pristine;
            if (said == ImageClass::Manipulated) ++fa;
        } else {
            ++manipulated;
            if (said == ImageClass::Pristine) ++md;
        }
    }
    ErrorRates r;
    r.p_fa = pristine ? static_cast<double>(fa) / static_cast<double>(pristine) : 0.0;
    r.p_md = manipulated ? static_cast<double>(md) / static_cast<double>(manipulated) : 0.0;
    return r;
}

// ---------------------------------------------------------------------------
// Grid search

std::vector<double> GridConfig::powers_of_two(int lo, int hi, int step) {
    if (step <= 0 || hi < lo) throw InvalidArgument("powers_of_two: empty exponent range");
    std::vector<double> out;
    for (int e = lo; e <= hi; e += step) out.push_back(std::ldexp(1.0, e));
    return out;
}

GridConfig GridConfig::default_two_class() {
    GridConfig g;
    g.c_or_nu = powers_of_two(-5, 15, 2);
    g.gamma = powers_of_two(-15, 3, 2);
    g.folds = 5;
    return g;
}

GridConfig GridConfig::default_one_class() {
    GridConfig g;
    g.c_or_nu = powers_of_two(-10, 0);  // nu > 1 is infeasible
    g.gamma = powers_of_two(-10, 10);
    g.folds = 0;
    return g;
}

const GridCell& select_best_cell(std::span<const GridCell> cells) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : cells)
        if (c.trained) best = std::min(best, c.error);
    const GridCell* pick = nullptr;
    for (const auto& c : cells) {
        if (!c.trained || c.error > best + kTieTolerance) continue;
        if (!pick || c.params.gamma < pick->params.gamma ||
            (c.params.gamma == pick->params.gamma && c.params.c_or_nu < pick->params.c_or_nu)) {
            pick = &c;
        }
    }
    if (!pick) throw Error("grid search: no grid cell could be trained");
    return *pick;
}

namespace {

std::vector<GridCell> enumerate_cells(const GridConfig& grid) {
    if (grid.c_or_nu.empty() || grid.gamma.empty()) throw InvalidArgument("grid search: empty grid");
    std::vector<GridCell> cells;
    for (double g : grid.gamma)
        for (double c : grid.c_or_nu) cells.push_back({{c, g}, 0.0, true});
    return cells;
}

GridSearchResult finish(std::vector<GridCell> cells) {
    GridSearchResult r;
    const GridCell& best = select_best_cell(cells);
    r.best = best.params;
    r.best_error = best.error;
    r.cells = std::move(cells);
    return r;
}

}  // namespace

GridSearchResult grid_search_2c(const LabeledFeatures& validation, const GridConfig& grid,
                                const TrainOptions& opts, int jobs) {
    auto cells = enumerate_cells(grid);
    if (grid.folds < 2) throw InvalidArgument("grid_search_2c: need at least 2 folds");
    const int n = validation.size();
    std::vector<int> pristine_idx, manipulated_idx;
    for (int i = 0; i < n; ++i)
        (validation.labels[i] == ImageClass::Pristine ? pristine_idx : manipulated_idx).push_back(i);
    if (static_cast<int>(pristine_idx.size()) < 2 || static_cast<int>(manipulated_idx.size()) < 2) {
        throw InvalidArgument("grid_search_2c: validation set needs at least two samples of each class");
    }

    // stratified folds
    std::vector<int> fold(static_cast<std::size_t>(n));
    std::mt19937_64 rng(grid.fold_seed);
    for (auto* group : {&pristine_idx, &manipulated_idx}) {
        std::vector<int> order = *group;
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t r = 0; r < order.size(); ++r) fold[order[r]] = static_cast<int>(r % grid.folds);
    }

    struct Fold {
        std::vector<int> train, test;
        TrainingSet data;
        DistanceTable train_table, cross_table;
    };
    const DistanceTable all(validation.features);
    std::vector<Fold> folds(static_cast<std::size_t>(grid.folds));
    for (int k = 0; k < grid.folds; ++k) {
        auto& f = folds[k];
        for (int i = 0; i < n; ++i) (fold[i] == k ? f.test : f.train).push_back(i);
        f.data.samples = validation.features.select(f.train);
        for (int i : f.train) f.data.labels.push_back(validation.labels[i] == ImageClass::Pristine ? 1 : -1);
        f.train_table = all.subset(f.train, f.train);
        f.cross_table = all.subset(f.train, f.test);
    }

    TrainOptions cell_opts = opts;
    cell_opts.positive_meaning = ImageClass::Pristine;
    detail::parallel_for(static_cast<int>(cells.size()), jobs, [&](int c) {
        auto& cell = cells[static_cast<std::size_t>(c)];
        std::vector<double> decisions;
        std::vector<ImageClass> labels;
        try {
            for (const auto& f : folds) {
                const SvmSolution sol = solve_two_class(f.data, cell.params, cell_opts, &f.train_table);
                for (std::size_t t = 0; t < f.test.size(); ++t) {
                    decisions.push_back(decision_value_from_table(sol, f.cross_table, static_cast<int>(t)));
                    labels.push_back(validation.labels[f.test[t]]);
                }
            }
        } catch (const ConvergenceError&) {
            cell.trained = false;
            cell.error = std::numeric_limits<double>::infinity();
            return;
        }
        cell.error = weighted_error(error_rates(decisions, labels, ImageClass::Pristine), {0.5, 0.5});
    });
    return finish(std::move(cells));
}

GridSearchResult grid_search_1c(const FeatureMatrix& training, ImageClass home_class,
                                const LabeledFeatures& validation, const GridConfig& grid,
                                const ErrorWeights& weights, const TrainOptions& opts, int jobs) {
    auto cells = enumerate_cells(grid);
    for (const auto& c : cells) {
        if (!(c.params.c_or_nu > 0.0 && c.params.c_or_nu <= 1.0)) {
            throw InvalidArgument("grid_search_1c: nu grid values must lie in (0,1]");
        }
    }
    if (training.rows() == 0) throw InvalidArgument("grid_search_1c: empty training set");
    if (validation.count(ImageClass::Pristine) == 0 || validation.count(ImageClass::Manipulated) == 0) {
        throw InvalidArgument("grid_search_1c: validation set lacks a class");
    }
    if (!(weights.alpha > 0.0 && weights.beta > 0.0)) {
        throw InvalidArgument("grid_search_1c: error weights must be positive");
    }
    TrainingSet data{training, {}};
    const DistanceTable train_table(training);
    const DistanceTable cross_table(training, validation.features);
    TrainOptions cell_opts = opts;
    cell_opts.positive_meaning = home_class;

    detail::parallel_for(static_cast<int>(cells.size()), jobs, [&](int c) {
        auto& cell = cells[static_cast<std::size_t>(c)];
        try {
            const SvmSolution sol = solve_one_class(data, cell.params, cell_opts, &train_table);
            std::vector<double> decisions;
            decisions.reserve(static_cast<std::size_t>(validation.size()));
            for (int t = 0; t < validation.size(); ++t) {
                decisions.push_back(decision_value_from_table(sol, cross_table, t));
            }
            cell.error = weighted_error(error_rates(decisions, validation.labels, home_class), weights);
        } catch (const ConvergenceError&) {
            cell.trained = false;
            cell.error = std::numeric_limits<double>::infinity();
        }
    });
    return finish(std::move(cells));
}

// ---------------------------------------------------------------------------
// 1.5C

void OneHalfClassModel::validate() const {
    two_class.validate();
    oc_pristine.validate();
    oc_manipulated.validate();
    combiner.validate();
    if (combiner.dim != 3) throw InvalidArgument("1.5C: combiner must take 3 inputs");
    if (two_class.dim != oc_pristine.dim || two_class.dim != oc_manipulated.dim) {
        throw InvalidArgument("1.5C: intermediate classifiers disagree on feature dimension");
    }
}

std::array<double, 3> intermediate_scores(const OneHalfClassModel& model, std::span<const double> x) {
    return {decision_value(model.two_class, x), decision_value(model.oc_pristine, x),
            decision_value(model.oc_manipulated, x)};
}

Prediction predict_15c(const OneHalfClassModel& model, std::span<const double> x) {
    Prediction p;
    p.d = intermediate_scores(model, x);
    p.f = decision_value(model.combiner, p.d);
    p.label = p.f >= 0.0 ? ImageClass::Pristine : ImageClass::Manipulated;
    return p;
}

namespace {

const std::vector<double>* lookup(const FeatureStore& store, const std::string& id, ImageClass c) {
    const auto it = store.find(id);
    if (it == store.end()) return nullptr;
    const auto& opt = c == ImageClass::Pristine ? it->second.pristine : it->second.manipulated;
    return opt ? &*opt : nullptr;
}

// Every id must have features of every class in `classes`.
void require(const FeatureStore& store, const std::vector<std::string>& ids,
             std::initializer_list<ImageClass> classes, const char* stage, const char* split) {
    if (ids.empty()) throw StageError(stage, std::string("split ") + split + " is empty");
    for (ImageClass c : classes) {
        for (const auto& id : ids) {
            if (!lookup(store, id, c)) {
                throw StageError(stage, "no " + to_string(c) + " features for '" + id + "' in " + split);
            }
        }
    }
}

LabeledFeatures gather(const FeatureStore& store, const std::vector<std::string>& ids) {
    LabeledFeatures out;
    for (const auto& id : ids) {
        out.add(*lookup(store, id, ImageClass::Pristine), ImageClass::Pristine);
        out.add(*lookup(store, id, ImageClass::Manipulated), ImageClass::Manipulated);
    }
    return out;
}

FeatureMatrix gather_class(const FeatureStore& store, const std::vector<std::string>& ids, ImageClass c) {
    FeatureMatrix out;
    for (const auto& id : ids) out.push_back(*lookup(store, id, c));
    return out;
}

template <typename Fn>
auto run_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(stage, e.what());
    }
}

}  // namespace

TrainReport train_15c(const DatasetSplits& splits, const FeatureStore& features, const TrainConfig& cfg) {
    // The one-class stages own the per-class S_Tr requirements, so a missing
    // class is reported against the model that is trained on it alone.
    require(features, splits.s_tr, {ImageClass::Pristine}, kStage1CPristine, "S_Tr");
    require(features, splits.s_tr, {ImageClass::Manipulated}, kStage1CManipulated, "S_Tr");
    require(features, splits.s_v, {ImageClass::Pristine, ImageClass::Manipulated}, kStage2C, "S_V");
    require(features, splits.s_t_v, {ImageClass::Pristine, ImageClass::Manipulated}, kStageCombiner, "S_T^v");
    require(features, splits.s_t_tr, {ImageClass::Pristine, ImageClass::Manipulated}, kStageCombiner, "S_T^tr");

    TrainReport report;
    const LabeledFeatures validation = gather(features, splits.s_v);
    const LabeledFeatures training = gather(features, splits.s_tr);

    // (1) two-class
    run_stage(kStage2C, [&] {
        report.search_2c = grid_search_2c(validation, cfg.grid_2c, cfg.options, cfg.jobs);
        TrainingSet data{training.features, {}};
        for (auto l : training.labels) data.labels.push_back(l == ImageClass::Pristine ? 1 : -1);
        TrainOptions o = cfg.options;
        o.positive_meaning = ImageClass::Pristine;
        report.model.two_class = train_two_class(data, report.search_2c.best, o);
        return 0;
    });

    // (2) one-class on each half of S_Tr
    auto one_class = [&](ImageClass home, const char* stage, GridSearchResult& search, SvmModel& model) {
        run_stage(stage, [&] {
            const FeatureMatrix x = gather_class(features, splits.s_tr, home);
            search = grid_search_1c(x, home, validation, cfg.grid_1c, cfg.weights_intermediate, cfg.options, cfg.jobs);
            TrainOptions o = cfg.options;
            o.positive_meaning = home;
            const DistanceTable table(x);
            model = train_one_class(TrainingSet{x, {}}, search.best, o, &table);
            return 0;
        });
    };
    one_class(ImageClass::Pristine, kStage1CPristine, report.search_1c_pristine, report.model.oc_pristine);
    one_class(ImageClass::Manipulated, kStage1CManipulated, report.search_1c_manipulated, report.model.oc_manipulated);

    // (3) soft outputs on S_T^v and S_T^tr, (4) combiner on pristine S_T^tr
    run_stage(kStageCombiner, [&] {
        auto to_d = [&](const LabeledFeatures& lf) {
            LabeledFeatures out;
            for (int i = 0; i < lf.size(); ++i) {
                const auto d = intermediate_scores(report.model, lf.features.row(i));
                out.add(d, lf.labels[i]);
            }
            return out;
        };
        const LabeledFeatures comb_val = to_d(gather(features, splits.s_t_v));
        FeatureMatrix comb_train(3);
        for (const auto& id : splits.s_t_tr) {
            const auto d = intermediate_scores(report.model, *lookup(features, id, ImageClass::Pristine));
            comb_train.push_back(d);
        }
        report.search_combiner = grid_search_1c(comb_train, ImageClass::Pristine, comb_val, cfg.grid_combiner,
                                                cfg.weights_combiner, cfg.options, cfg.jobs);
        TrainOptions o = cfg.options;
        o.positive_meaning = ImageClass::Pristine;
        report.model.combiner = train_one_class(TrainingSet{comb_train, {}}, report.search_combiner.best, o);
        return 0;
    });
    return report;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr const char* kFile2C = "two_class.model";
constexpr const char* kFile1CPristine = "oc_pristine.model";
constexpr const char* kFile1CManipulated = "oc_manipulated.model";
constexpr const char* kFileCombiner = "combiner.model";
constexpr const char* kManifest = "manifest.json";

nlohmann::json search_json(const GridSearchResult& r, const char* param_name) {
    nlohmann::json j;
    j[param_name] = r.best.c_or_nu;
    j[std::string("log2_") + param_name] = std::log2(r.best.c_or_nu);
    j["gamma"] = r.best.gamma;
    j["log2_gamma"] = std::log2(r.best.gamma);
    j["validation_error"] = r.best_error;
    j["cells"] = r.cells.size();
    return j;
}

}  // namespace

void save_detector(const fs::path& dir, const TrainReport& report, const DatasetSplits& splits) {
    report.model.validate();
    fs::create_directories(dir);
    save_model((dir / kFile2C).string(), report.model.two_class);
    save_model((dir / kFile1CPristine).string(), report.model.oc_pristine);
    save_model((dir / kFile1CManipulated).string(), report.model.oc_manipulated);
    save_model((dir / kFileCombiner).string(), report.model.combiner);

    nlohmann::json m;
    m["format"] = "onehalf-detector";
    m["version"] = 1;
    m["hyperparameters"]["2C_H01"] = search_json(report.search_2c, "C");
    m["hyperparameters"]["1C_H0"] = search_json(report.search_1c_pristine, "nu");
    m["hyperparameters"]["1C_H1"] = search_json(report.search_1c_manipulated, "nu");
    m["hyperparameters"]["1C_H0^cmb"] = search_json(report.search_combiner, "nu");
    m["support_vectors"] = {{"2C_H01", report.model.two_class.sv_count()},
                            {"1C_H0", report.model.oc_pristine.sv_count()},
                            {"1C_H1", report.model.oc_manipulated.sv_count()},
                            {"1C_H0^cmb", report.model.combiner.sv_count()}};
    m["splits"] = {{"S_V", splits.s_v},       {"S_Tr", splits.s_tr},     {"S_T^v", splits.s_t_v},
                   {"S_T^tr", splits.s_t_tr}, {"S_T^t", splits.s_t_t}};
    std::ofstream out(dir / kManifest, std::ios::binary);
    if (!out) throw Error("cannot write manifest in '" + dir.string() + "'");
    out << m.dump(2) << '\n';
}

OneHalfClassModel load_detector(const fs::path& dir) {
    OneHalfClassModel m;
    m.two_class = load_model((dir / kFile2C).string());
    m.oc_pristine = load_model((dir / kFile1CPristine).string());
    m.oc_manipulated = load_model((dir / kFile1CManipulated).string());
    m.combiner = load_model((dir / kFileCombiner).string());
    m.validate();
    return m;
}

}  // namespace onehalf
