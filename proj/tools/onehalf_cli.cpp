#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "onehalf/error.hpp"
#include "onehalf/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct GlobalOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    std::string out = "onehalf-out";
    std::string corpus;
};

onehalf::ExperimentConfig resolve_config(const GlobalOptions& g) {
    onehalf::ExperimentConfig cfg = g.config.empty() ? onehalf::ExperimentConfig{} : onehalf::load_config(g.config);
    if (g.seed) onehalf::set_master_seed(cfg, *g.seed);
    if (g.jobs) cfg.jobs = *g.jobs;
    if (!g.corpus.empty()) cfg.corpus_dir = g.corpus;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace onehalf;

    CLI::App app{"Train, evaluate and attack a one-and-a-half-class image manipulation detector."};
    app.require_subcommand(1);
    GlobalOptions g;
    app.add_option("--config", g.config, "Experiment config file (key = value lines)")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Master seed; re-derives every named seed");
    app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "Output directory holding every stage's artifacts")->capture_default_str();
    app.add_option("--corpus", g.corpus, "Directory of pristine images (default: synthetic corpus)");

    auto* prepare = app.add_subcommand("prepare", "Index the corpus and write the manipulated copies");
    auto* extract = app.add_subcommand("extract", "Compute SPAM features into CSV files");
    auto* train = app.add_subcommand("train", "Grid search and train the detector; writes model files and a manifest");
    auto* evaluate = app.add_subcommand("evaluate", "Score the test split, clean and post-processed");
    auto* attack = app.add_subcommand("attack", "Run the gradient attack on detected manipulated test images");
    std::string target = "both";
    attack->add_option("--target", target, "Classifier to attack")
        ->check(CLI::IsMember({"2c", "15c", "both"}))
        ->capture_default_str();
    auto* report = app.add_subcommand("report", "Aggregate per-image records into summary tables");
    auto* run = app.add_subcommand("run", "Run every stage in order, reusing cached results");
    bool dry_run = false, no_attack = false;
    run->add_flag("--dry-run", dry_run, "Validate the config and print the stage plan");
    run->add_flag("--no-attack", no_attack, "Skip the attack stage");
    auto* config = app.add_subcommand("config", "Print the fully resolved configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        ExperimentConfig cfg = resolve_config(g);
        const Workspace ws{g.out};
        if (attack->parsed() && target != "both") cfg.attack_targets = {parse_target_kind(target)};

        if (config->parsed()) {
            std::cout << to_config_text(cfg);
        } else if (prepare->parsed()) {
            const auto index = stage_prepare(cfg, ws);
            std::cout << index.size() << " images indexed; manipulated copies in "
                      << ws.manipulated_dir(cfg.manipulation).string() << '\n';
        } else if (extract->parsed()) {
            const auto store = stage_extract(cfg, ws);
            std::cout << store.size() << " image pairs; features in "
                      << ws.feature_dir(cfg.spam, cfg.manipulation).string() << '\n';
        } else if (train->parsed()) {
            stage_train(cfg, ws);
            std::cout << "model written to " << ws.model_dir().string() << " (see manifest.json)\n";
        } else if (evaluate->parsed()) {
            const auto records = stage_evaluate(cfg, ws);
            std::cout << report_text(build_report(to_string(cfg.manipulation.kind), records, {}));
        } else if (attack->parsed()) {
            const auto records = stage_attack(cfg, ws);
            const auto rep = build_report(to_string(cfg.manipulation.kind), {}, records);
            std::cout << report_text(rep);
        } else if (report->parsed()) {
            std::cout << report_text(stage_report(cfg, ws));
        } else if (run->parsed()) {
            const auto rep = run_experiment(cfg, ws, {dry_run, !no_attack}, std::cerr);
            if (rep) std::cout << '\n' << report_text(*rep);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const StageError& e) {
        std::cerr << "stage failed: " << e.what() << '\n';
        return kExitStage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitStage;
    }
    return 0;
}
