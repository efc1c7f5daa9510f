#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "onehalf/error.hpp"
#include "onehalf/experiment.hpp"
#include "support.hpp"

using namespace onehalf;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// Small enough to run end to end in a few seconds.
ExperimentConfig tiny_config() {
    return parse_config(R"(
seed = 11
task = resize
synth.count = 60
synth.width = 32
synth.height = 32
split.validation = 6
split.training = 18
split.comb_validation = 6
split.comb_training = 10
split.comb_test = 20
grid.2c.c = 2,6
grid.2c.gamma = -2,1
grid.2c.folds = 2
grid.1c.nu = -3,-1
grid.1c.gamma = -2,1
grid.cmb.nu = -3,-1
grid.cmb.gamma = 0:2
eval.noise_variances = 1e-5
eval.jpeg_qualities = 90
attack.count = 3
attack.max_iters = 15
)");
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("defaults validate and round-trip through the text form") {
    const ExperimentConfig def;
    def.validate();
    CHECK(def.splits.total() == 7997);
    CHECK(def.grid_2c.folds == 5);

    const ExperimentConfig back = parse_config(to_config_text(def));
    CHECK(to_config_text(back) == to_config_text(def));

    ExperimentConfig c = tiny_config();
    CHECK(c.synth.count == 60);
    CHECK(c.grid_2c.c_or_nu == std::vector<double>{4.0, 64.0});
    CHECK(c.grid_combiner.gamma == std::vector<double>{1.0, 2.0, 4.0});
    CHECK(c.noise_variances == std::vector<double>{1e-5});
    CHECK(parse_config(to_config_text(c)).grid_1c.c_or_nu == c.grid_1c.c_or_nu);
    CHECK(to_config_text(parse_config(to_config_text(c))) == to_config_text(c));
}

TEST_CASE("seed handling") {
    const ExperimentConfig a = parse_config("seed = 5");
    CHECK(a.seeds.split == SeedSet::derive(5).split);
    CHECK(SeedSet::derive(5).split != SeedSet::derive(6).split);
    CHECK(SeedSet::derive(5).split != SeedSet::derive(5).noise);

    // an explicit named seed wins over the derived one, regardless of line order
    const ExperimentConfig b = parse_config("seed.noise = 42\nseed = 5");
    CHECK(b.seeds.noise == 42);
    CHECK(b.seeds.attack == SeedSet::derive(5).attack);

    ExperimentConfig c = b;
    set_master_seed(c, 9);
    CHECK(c.seeds.noise == SeedSet::derive(9).noise);
}

TEST_CASE("split.scale rescales every set") {
    const ExperimentConfig c = parse_config("split.scale = 0.1");
    CHECK(c.splits.validation == 100);
    CHECK(c.splits.training == 500);
    CHECK(c.splits.comb_test == SplitSizes{}.scaled(0.1).comb_test);
}

TEST_CASE("config errors") {
    CHECK_THROWS_AS(parse_config("nonsense = 1"), ConfigError);
    CHECK_THROWS_AS(parse_config("seed = 1\nseed = 2"), ConfigError);
    CHECK_THROWS_AS(parse_config("just words"), ConfigError);
    CHECK_THROWS_AS(parse_config("synth.count = many"), ConfigError);
    CHECK_THROWS_AS(parse_config("task = sharpen"), ConfigError);
    CHECK_THROWS_AS(parse_config("grid.2c.c = 5:1"), ConfigError);
    CHECK_THROWS_AS(parse_config("attack.targets = 2c,4c"), ConfigError);
    CHECK_THROWS_AS(parse_config("spam.normalization = other"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/onehalf.cfg"), ConfigError);

    for (const char* bad : {"spam.truncation = 0", "weights.combiner_alpha = 1", "grid.1c.nu = 1", "jobs = 0",
                            "eval.jpeg_qualities = 101", "split.training = 0", "grid.2c.folds = 1",
                            "attack.rho = -0.5", "attack.targets = 2c,2c", "eval.noise_variances = 0"}) {
        CAPTURE(bad);
        CHECK_THROWS_AS(parse_config(bad).validate(), ConfigError);
    }
    // comments and blank lines are ignored
    CHECK(parse_config("# nothing\n\n  jobs = 3   # three\n").jobs == 3);
}

TEST_CASE("record files round-trip") {
    const fs::path dir = testing::scratch_dir("records");
    std::vector<EvalRecord> eval{
        {"img-1", ImageClass::Pristine, "S_T^t", "clean", {0.25, -1e-9, 3.5}, 0.125},
        {"img-2", ImageClass::Manipulated, "S_T", "noise:1e-05", {-0.1, 2.0 / 3.0, -7e12}, -1.0 / 3.0},
    };
    write_eval_records(dir / "e.csv", eval);
    const auto e2 = read_eval_records(dir / "e.csv");
    REQUIRE(e2.size() == 2);
    for (int i = 0; i < 2; ++i) {
        CHECK(e2[i].image_id == eval[i].image_id);
        CHECK(e2[i].label == eval[i].label);
        CHECK(e2[i].set == eval[i].set);
        CHECK(e2[i].condition == eval[i].condition);
        CHECK(e2[i].d == eval[i].d);
        CHECK(e2[i].f == eval[i].f);
    }

    std::vector<AttackRecord> att(1);
    att[0] = {"x", TargetKind::FullComposite, true, false, 7, 0.0625, 0.01, -0.3, {1, 2, 3}, 0.1};
    write_attack_records(dir / "a.csv", att);
    const auto a2 = read_attack_records(dir / "a.csv");
    REQUIRE(a2.size() == 1);
    CHECK(a2[0].target == TargetKind::FullComposite);
    CHECK(a2[0].success);
    CHECK(a2[0].iterations == 7);
    CHECK(a2[0].mse == 0.0625);
    CHECK(a2[0].initial_score == -0.3);
    CHECK(a2[0].d == std::array<double, 3>{1, 2, 3});

    CHECK_THROWS_AS(read_eval_records(dir / "a.csv"), ParseError);
    CHECK_THROWS_AS(read_attack_records(dir / "e.csv"), ParseError);
}

TEST_CASE("report aggregation matches direct recomputation") {
    std::mt19937_64 rng(71);
    std::normal_distribution<double> n;
    std::vector<EvalRecord> eval;
    for (const char* cond : {"clean", "jpeg:90"})
        for (int i = 0; i < 40; ++i) {
            EvalRecord r;
            r.image_id = "i" + std::to_string(i);
            r.label = i % 3 ? ImageClass::Pristine : ImageClass::Manipulated;
            r.set = "S_T^t";
            r.condition = cond;
            r.d = {n(rng), n(rng), n(rng)};
            r.f = n(rng);
            eval.push_back(r);
        }
    std::vector<AttackRecord> att;
    for (int i = 0; i < 9; ++i) {
        AttackRecord a;
        a.image_id = "a" + std::to_string(i);
        a.target = i < 5 ? TargetKind::TwoClassOnly : TargetKind::FullComposite;
        a.success = i % 2;
        a.iterations = i;
        a.mse = 0.1 * i;
        a.pixel_fraction = 0.01 * i;
        a.d = {n(rng), n(rng), n(rng)};
        a.f = n(rng);
        att.push_back(a);
    }
    const ExperimentReport rep = build_report("resize", eval, att);

    std::array<std::vector<double>, 4> s;
    std::vector<bool> pristine;
    for (const auto& r : eval) {
        if (r.condition != "clean") continue;
        s[0].push_back(r.d[0]);
        s[1].push_back(r.d[1]);
        s[2].push_back(-r.d[2]);
        s[3].push_back(r.f);
        pristine.push_back(r.label == ImageClass::Pristine);
    }
    for (int k = 0; k < 4; ++k) CHECK(rep.auc_of(kClassifierNames[k]) == oracle::auc_pair_counting(s[k], pristine));
    CHECK_THROWS_AS(rep.auc_of("2C_H01", "S_T"), InvalidArgument);

    const RobustnessRow* jp = rep.robustness_of("jpeg:90");
    REQUIRE(jp != nullptr);
    CHECK(jp->samples == 40);
    int right = 0;
    for (const auto& r : eval)
        if (r.condition == "jpeg:90") right += (r.d[2] < 0.0) == (r.label == ImageClass::Pristine);
    CHECK(jp->accuracy[2] == right / 40.0);
    CHECK(rep.robustness_of("noise:1") == nullptr);

    const AttackRow* two = rep.attack_of(TargetKind::TwoClassOnly);
    REQUIRE(two != nullptr);
    CHECK(two->attacked == 5);
    CHECK(two->success_rate == 2.0 / 5);
    CHECK(two->mean_mse == doctest::Approx(0.2));
    CHECK(two->mean_iterations == 2.0);
    int fooled = 0;
    for (int i = 0; i < 5; ++i) fooled += att[i].f >= 0.0;
    CHECK(two->misclassified[3] == fooled / 5.0);

    const std::string csv = report_csv(rep);
    CHECK(csv.rfind("section,group,metric,value\n", 0) == 0);
    CHECK(csv.find("attack,15c,attacked,4\n") != std::string::npos);
    CHECK(report_text(rep).find("1C_H0^cmb") != std::string::npos);
}

TEST_CASE("end-to-end run with caching") {
    const fs::path dir = testing::scratch_dir("e2e");
    const Workspace ws{dir};
    const ExperimentConfig cfg = tiny_config();
    std::ostringstream log;
    const auto rep = run_experiment(cfg, ws, {}, log);
    REQUIRE(rep.has_value());
    CHECK(rep->auc.size() == 4);
    CHECK(rep->robustness.size() == 3);
    CHECK(rep->robustness_of("clean")->samples == 40);  // both versions of 20 images
    for (const char* name : kClassifierNames) {
        CHECK(rep->auc_of(name) >= 0.0);
        CHECK(rep->auc_of(name) <= 1.0);
    }
    CHECK(fs::exists(ws.model_dir()));
    CHECK(fs::exists(ws.report_dir() / "summary.txt"));
    CHECK(read_eval_records(ws.eval_records()).size() == 40 * 3);
    const auto attacks = read_attack_records(ws.attack_records());
    CHECK(attacks.size() <= 6);
    for (const auto& a : attacks) CHECK(fs::exists(ws.attack_dir() / to_string(a.target) / (a.image_id + ".png")));

    const std::string summary = slurp(ws.report_dir() / "summary.csv");
    const std::string records = slurp(ws.eval_records());

    std::ostringstream plan;
    CHECK_FALSE(run_experiment(cfg, ws, {.dry_run = true}, plan).has_value());
    for (const char* stage : {"prepare", "extract", "train", "evaluate", "attack"}) {
        CAPTURE(stage);
        const auto at = plan.str().find(stage);
        REQUIRE(at != std::string::npos);
        CHECK(plan.str().find("(cached)", at) < plan.str().find('\n', at));
    }

    // a rerun is served from the caches and reproduces the outputs
    std::ostringstream again;
    run_experiment(cfg, ws, {}, again);
    CHECK(slurp(ws.report_dir() / "summary.csv") == summary);
    CHECK(slurp(ws.eval_records()) == records);

    // changing an attack setting invalidates only the attack stage
    ExperimentConfig other = cfg;
    other.attack.rho = 0.05;
    std::ostringstream plan2;
    run_experiment(other, ws, {.dry_run = true}, plan2);
    const std::string p2 = plan2.str();
    CHECK(p2.find("(cached)", p2.find("train")) < p2.find('\n', p2.find("train")));
    CHECK(p2.find("(cached)", p2.find("attack")) == std::string::npos);

    CHECK(experiment_splits(cfg, ws).s_t_t.size() == 20);
}

TEST_CASE("corpus smaller than the splits is a configuration error") {
    const fs::path dir = testing::scratch_dir("small");
    ExperimentConfig cfg = tiny_config();
    cfg.synth.count = 30;
    std::ostringstream log;
    CHECK_THROWS_AS(run_experiment(cfg, Workspace{dir}, {}, log), ConfigError);
}

}
