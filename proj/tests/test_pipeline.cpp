#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include "onehalf/error.hpp"
#include "onehalf/pipeline.hpp"
#include "support.hpp"

using namespace onehalf;

namespace {

std::vector<std::string> corpus_ids(int n) {
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back("im" + std::to_string(1000 + i));
    return ids;
}

// Two well separated Gaussian clouds in a low dimension.
FeatureStore cluster_store(const std::vector<std::string>& ids, std::uint64_t seed, double gap = 3.0, int dim = 4) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.5);
    FeatureStore store;
    for (const auto& id : ids) {
        std::vector<double> p(static_cast<std::size_t>(dim)), m(static_cast<std::size_t>(dim));
        for (int k = 0; k < dim; ++k) {
            p[k] = g(rng);
            m[k] = g(rng) + (k == 0 ? gap : 0.0);
        }
        store[id] = {p, m};
    }
    return store;
}

LabeledFeatures labelled(const FeatureStore& store, const std::vector<std::string>& ids) {
    LabeledFeatures out;
    for (const auto& id : ids) {
        out.add(*store.at(id).pristine, ImageClass::Pristine);
        out.add(*store.at(id).manipulated, ImageClass::Manipulated);
    }
    return out;
}

TrainConfig small_grids() {
    TrainConfig c;
    c.grid_2c.c_or_nu = GridConfig::powers_of_two(-1, 7, 2);
    c.grid_2c.gamma = GridConfig::powers_of_two(-5, 1, 2);
    c.grid_1c.c_or_nu = GridConfig::powers_of_two(-6, -1, 1);
    c.grid_1c.gamma = GridConfig::powers_of_two(-4, 2, 2);
    c.grid_combiner = c.grid_1c;
    return c;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("split sizes and scaling") {
    const SplitSizes defaults;
    CHECK(defaults.total() == 7997);
    const auto s = make_splits(corpus_ids(7997), defaults, 3);
    CHECK(s.s_v.size() == 1000);
    CHECK(s.s_tr.size() == 5000);
    CHECK(s.s_t_v.size() == 300);
    CHECK(s.s_t_tr.size() == 700);
    CHECK(s.s_t_t.size() == 997);

    const SplitSizes tenth = defaults.scaled(0.1);
    CHECK(tenth.validation == 100);
    CHECK(tenth.training == 500);
    CHECK(tenth.comb_validation == 30);
    CHECK(tenth.comb_training == 70);
    CHECK(tenth.comb_test == 100);
    CHECK_THROWS_AS(defaults.scaled(0.0), InvalidArgument);
}

TEST_CASE("splits are disjoint, exhaustive and seeded") {
    const auto ids = corpus_ids(120);
    const SplitSizes sizes{10, 40, 8, 12, 20};
    for (std::uint64_t seed : {1u, 2u, 99u}) {
        const auto s = make_splits(ids, sizes, seed);
        std::vector<std::string> all;
        for (const auto* part : {&s.s_v, &s.s_tr, &s.s_t_v, &s.s_t_tr, &s.s_t_t}) all.insert(all.end(), part->begin(), part->end());
        CHECK(all.size() == ids.size());
        CHECK(std::set<std::string>(all.begin(), all.end()) == std::set<std::string>(ids.begin(), ids.end()));
        CHECK(s.s_t_t.size() == 50);  // absorbs the remainder
        auto st = s.s_t();
        CHECK(st.size() == s.s_t_v.size() + s.s_t_tr.size() + s.s_t_t.size());

        auto shuffled = ids;
        std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(seed));
        const auto again = make_splits(shuffled, sizes, seed);
        CHECK(again.s_v == s.s_v);
        CHECK(again.s_t_t == s.s_t_t);
    }
    CHECK(make_splits(ids, sizes, 1).s_v != make_splits(ids, sizes, 2).s_v);
    CHECK_THROWS_AS(make_splits(corpus_ids(80), sizes, 1), InvalidArgument);
    auto dup = ids;
    dup[1] = dup[0];
    CHECK_THROWS_AS(make_splits(dup, sizes, 1), InvalidArgument);
}

TEST_CASE("weighted error") {
    CHECK(weighted_error({0.1, 0.1}, ErrorWeights::from_alpha(0.5)) == doctest::Approx(0.1));
    CHECK(weighted_error({0.5, 0.0}, ErrorWeights::from_alpha(0.2)) == doctest::Approx(0.1));
    CHECK(weighted_error({0.0, 1.0}, ErrorWeights::from_alpha(0.1)) == doctest::Approx(0.9));
    CHECK(ErrorWeights::from_alpha(0.2).normalized());
    CHECK_FALSE(ErrorWeights{0.4, 0.4}.normalized());

    const std::vector<double> d{1.0, -1.0, 0.0, -0.5};
    const std::vector<ImageClass> l{ImageClass::Pristine, ImageClass::Pristine, ImageClass::Manipulated,
                                    ImageClass::Manipulated};
    const auto r = error_rates(d, l, ImageClass::Pristine);
    CHECK(r.p_fa == 0.5);
    CHECK(r.p_md == 0.5);
    const auto h1 = error_rates(d, l, ImageClass::Manipulated);
    CHECK(h1.p_fa == 0.5);
    CHECK(h1.p_md == 0.5);
}

TEST_CASE("grid helpers and tie-break") {
    const auto g = GridConfig::powers_of_two(-5, 15, 2);
    CHECK(g.size() == 11);
    CHECK(g.front() == 1.0 / 32);
    CHECK(g.back() == 32768.0);
    const auto d2 = GridConfig::default_two_class();
    CHECK(d2.gamma.front() == std::exp2(-15));
    CHECK(d2.gamma.back() == 8.0);
    CHECK(d2.folds == 5);

    // exhaustive check of the rule on random error tables
    std::mt19937_64 rng(41);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<GridCell> cells;
        std::uniform_int_distribution<int> err(0, 3);
        for (int gi = 0; gi < 4; ++gi)
            for (int ci = 0; ci < 3; ++ci)
                cells.push_back({{std::exp2(ci), std::exp2(gi - 2)}, err(rng) * 0.25, err(rng) != 0});
        if (std::none_of(cells.begin(), cells.end(), [](auto& c) { return c.trained; })) continue;
        const GridCell* want = nullptr;
        for (const auto& c : cells) {
            if (!c.trained) continue;
            if (!want || c.error < want->error ||
                (c.error == want->error && (c.params.gamma < want->params.gamma ||
                                            (c.params.gamma == want->params.gamma && c.params.c_or_nu < want->params.c_or_nu))))
                want = &c;
        }
        auto shuffled = cells;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        for (const auto* list : {&cells, &shuffled}) {
            const GridCell& got = select_best_cell(*list);
            CHECK(got.params.gamma == want->params.gamma);
            CHECK(got.params.c_or_nu == want->params.c_or_nu);
        }
    }
    std::vector<GridCell> none{{{1, 1}, 0.0, false}};
    CHECK_THROWS_AS(select_best_cell(none), Error);
}

TEST_CASE("grid searches") {
    const auto ids = corpus_ids(40);
    const FeatureStore store = cluster_store(ids, 5);
    const LabeledFeatures val = labelled(store, ids);

    GridConfig one;
    one.c_or_nu = {4.0};
    one.gamma = {0.5};
    const auto single = grid_search_2c(val, one);
    CHECK(single.best.c_or_nu == 4.0);
    CHECK(single.cells.size() == 1);

    const TrainConfig grids = small_grids();
    const auto r = grid_search_2c(val, grids.grid_2c, {}, 1);
    CHECK(r.cells.size() == grids.grid_2c.c_or_nu.size() * grids.grid_2c.gamma.size());
    CHECK(r.best_error < 0.05);
    const auto again = grid_search_2c(val, grids.grid_2c, {}, 3);
    CHECK(again.best.c_or_nu == r.best.c_or_nu);
    CHECK(again.best.gamma == r.best.gamma);
    for (std::size_t i = 0; i < r.cells.size(); ++i) CHECK(again.cells[i].error == r.cells[i].error);

    FeatureMatrix pristine(4);
    for (const auto& id : ids) pristine.push_back(*store.at(id).pristine);
    const auto oc = grid_search_1c(pristine, ImageClass::Pristine, val, grids.grid_1c, ErrorWeights::from_alpha(0.2));
    CHECK(oc.best_error < 0.2);
    // scaling both weights leaves the argmin unchanged
    const auto scaled = grid_search_1c(pristine, ImageClass::Pristine, val, grids.grid_1c, ErrorWeights{0.6, 2.4});
    CHECK(scaled.best.c_or_nu == oc.best.c_or_nu);
    CHECK(scaled.best.gamma == oc.best.gamma);

    GridConfig one_nu;
    one_nu.c_or_nu = {0.5};
    one_nu.gamma = {1e3};
    CHECK(grid_search_1c(pristine, ImageClass::Pristine, val, one_nu, ErrorWeights::from_alpha(0.2)).best.gamma == 1e3);

    GridConfig empty;
    CHECK_THROWS_AS(grid_search_2c(val, empty), InvalidArgument);
    LabeledFeatures one_class;
    for (const auto& id : ids) one_class.add(*store.at(id).pristine, ImageClass::Pristine);
    CHECK_THROWS_AS(grid_search_2c(one_class, one), InvalidArgument);
    CHECK_THROWS_AS(grid_search_1c(pristine, ImageClass::Pristine, one_class, one_nu, ErrorWeights::from_alpha(0.2)),
                    InvalidArgument);
}

TEST_CASE("1.5C training on an easy corpus") {
    const auto ids = corpus_ids(150);
    const FeatureStore store = cluster_store(ids, 7);
    const DatasetSplits splits = make_splits(ids, {20, 40, 20, 30, 40}, 11);
    const TrainReport rep = train_15c(splits, store, small_grids());
    const OneHalfClassModel& m = rep.model;
    CHECK(m.combiner.dim == 3);
    CHECK(m.two_class.dim == 4);
    CHECK(m.oc_manipulated.positive_meaning == ImageClass::Manipulated);
    CHECK(m.combiner.positive_meaning == ImageClass::Pristine);

    int correct = 0, total = 0;
    for (const auto& id : splits.s_t_t) {
        correct += predict_15c(m, *store.at(id).pristine).label == ImageClass::Pristine;
        correct += predict_15c(m, *store.at(id).manipulated).label == ImageClass::Manipulated;
        total += 2;
    }
    CHECK(static_cast<double>(correct) / total > 0.95);

    // a pristine training sample deep in every acceptance region
    std::vector<double> centre(4, 0.0);
    const Prediction p = predict_15c(m, centre);
    CHECK(p.f > 0.0);
    CHECK(p.label == ImageClass::Pristine);
    const Prediction q = predict_15c(m, centre);
    CHECK(q.f == p.f);
    CHECK(q.d == p.d);
    CHECK(intermediate_scores(m, centre) == p.d);
    CHECK_THROWS_AS(predict_15c(m, std::vector<double>(5, 0.0)), ShapeMismatch);

    // persistence
    const auto dir = testing::scratch_dir("detector");
    save_detector(dir, rep, splits);
    const OneHalfClassModel back = load_detector(dir);
    CHECK(serialize(back.combiner) == serialize(m.combiner));
    CHECK(predict_15c(back, centre).f == p.f);
    std::ifstream manifest(dir / "manifest.json");
    const std::string text((std::istreambuf_iterator<char>(manifest)), {});
    CHECK(text.find("\"1C_H0^cmb\"") != std::string::npos);
    CHECK(text.find("\"S_T^t\"") != std::string::npos);
}

TEST_CASE("label flips exactly at f = 0") {
    std::mt19937_64 rng(42);
    OneHalfClassModel m;
    const std::vector<std::vector<double>> c{{0.0, 0.0}};
    m.two_class = testing::random_model(rng, SvmKind::TwoClass, {{0.0, 0.0}, {1.0, 1.0}}, 1.0);
    m.oc_pristine = testing::random_model(rng, SvmKind::OneClass, c, 1.0);
    m.oc_manipulated = testing::random_model(rng, SvmKind::OneClass, c, 1.0, ImageClass::Manipulated);
    m.combiner = testing::random_model(rng, SvmKind::OneClass, {{0.0, 0.0, 0.0}}, 1.0);
    const std::vector<double> x{0.3, 0.1};
    const auto d = intermediate_scores(m, x);
    const double k = decision_value(m.combiner, d) - m.combiner.bias;
    m.combiner.bias = -k;  // f == 0 exactly
    CHECK(predict_15c(m, x).f == 0.0);
    CHECK(predict_15c(m, x).label == ImageClass::Pristine);
    m.combiner.bias = std::nextafter(-k, -1.0);
    CHECK(predict_15c(m, x).label == ImageClass::Manipulated);
}

TEST_CASE("missing data names the failing stage") {
    const auto ids = corpus_ids(150);
    const DatasetSplits splits = make_splits(ids, {20, 40, 20, 30, 40}, 11);
    auto expect_stage = [&](FeatureStore store, const std::string& stage) {
        try {
            train_15c(splits, store, small_grids());
            FAIL("training should have failed");
        } catch (const StageError& e) {
            CHECK(e.stage() == stage);
        }
    };
    FeatureStore no_h1 = cluster_store(ids, 3);
    for (const auto& id : splits.s_tr) no_h1[id].manipulated.reset();
    expect_stage(no_h1, "1C_H1");
    FeatureStore no_h0 = cluster_store(ids, 3);
    for (const auto& id : splits.s_tr) no_h0[id].pristine.reset();
    expect_stage(no_h0, "1C_H0");
    FeatureStore no_val = cluster_store(ids, 3);
    no_val.erase(splits.s_v.front());
    expect_stage(no_val, "2C_H01");
    FeatureStore no_cmb = cluster_store(ids, 3);
    for (const auto& id : splits.s_t_v) no_cmb[id].manipulated.reset();
    expect_stage(no_cmb, "1C_H0^cmb");
}

}
