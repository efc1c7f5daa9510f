#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "onehalf/attack.hpp"
#include "onehalf/imgops.hpp"
#include "onehalf/pipeline.hpp"
#include "onehalf/spam.hpp"
#include "onehalf/synth.hpp"

namespace onehalf {

/// Named seeds; every random draw in an experiment comes from one of these.
struct SeedSet {
    std::uint64_t synth = 0;
    std::uint64_t split = 0;
    std::uint64_t folds = 0;
    std::uint64_t noise = 0;
    std::uint64_t attack = 0;

    /// Each seed derived from `master` with its own salt.
    static SeedSet derive(std::uint64_t master);
};

struct ExperimentConfig {
    std::string corpus_dir;  // empty: generate the synthetic corpus
    SynthConfig synth;
    ManipulationSpec manipulation;
    SpamConfig spam;
    SplitSizes splits;

    GridConfig grid_2c = GridConfig::default_two_class();
    GridConfig grid_1c = GridConfig::default_one_class();
    GridConfig grid_combiner = GridConfig::default_one_class();
    double alpha_intermediate = 0.2;
    double alpha_combiner = 0.1;
    TrainOptions svm;

    std::vector<double> noise_variances{5e-6, 1e-5, 1.5e-5, 2e-5};
    std::vector<int> jpeg_qualities{85, 90, 95, 98};
    bool eval_2c_full_test = false;  // also score 2C on all of S_T

    AttackConfig attack;
    int attack_count = 100;
    std::vector<TargetKind> attack_targets{TargetKind::TwoClassOnly, TargetKind::FullComposite};

    std::uint64_t seed = 1;
    SeedSet seeds = SeedSet::derive(1);
    int jobs = 1;

    /// Throws ConfigError.
    void validate() const;
    TrainConfig train_config() const;
};

/// `key = value` lines, `#` comments. Unknown keys and bad values raise
/// ConfigError. Keys absent from the text keep their defaults; `seed`
/// re-derives every named seed that is not given explicitly.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical dump of every setting (round-trips through parse_config).
std::string to_config_text(const ExperimentConfig& cfg);

/// Replaces the master seed and re-derives the named seeds.
void set_master_seed(ExperimentConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Per-image records

struct EvalRecord {
    std::string image_id;
    ImageClass label = ImageClass::Pristine;
    std::string set;        // "S_T^t" or "S_T"
    std::string condition;  // "clean", "noise:<var>", "jpeg:<qf>"
    std::array<double, 3> d{};
    double f = 0.0;
};

struct AttackRecord {
    std::string image_id;
    TargetKind target = TargetKind::TwoClassOnly;
    bool success = false;
    bool stalled = false;
    int iterations = 0;
    double mse = 0.0;
    double pixel_fraction = 0.0;
    double initial_score = 0.0;
    std::array<double, 3> d{};
    double f = 0.0;
};

void write_eval_records(const std::filesystem::path& path, std::span<const EvalRecord> records);
std::vector<EvalRecord> read_eval_records(const std::filesystem::path& path);
void write_attack_records(const std::filesystem::path& path, std::span<const AttackRecord> records);
std::vector<AttackRecord> read_attack_records(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Report

/// Classifier order used in every table.
inline constexpr std::array<const char*, 4> kClassifierNames{"2C_H01", "1C_H0", "1C_H1", "1C_H0^cmb"};

struct AucRow {
    std::string set;
    std::string classifier;
    double auc = 0.0;
};

struct RobustnessRow {
    std::string condition;
    int samples = 0;
    std::array<double, 4> accuracy{};
};

struct AttackRow {
    std::string target;
    int attacked = 0;
    double success_rate = 0.0;
    double mean_mse = 0.0;
    double mean_pixel_fraction = 0.0;
    double mean_iterations = 0.0;
    std::array<double, 4> misclassified{};  // attacked images labelled pristine, per classifier
};

struct ExperimentReport {
    std::string task;
    std::vector<AucRow> auc;
    std::vector<RobustnessRow> robustness;
    std::vector<AttackRow> attacks;

    double auc_of(const std::string& classifier, const std::string& set = "S_T^t") const;
    const RobustnessRow* robustness_of(const std::string& condition) const;
    const AttackRow* attack_of(TargetKind target) const;
};

/// Pure aggregation of the per-image records.
ExperimentReport build_report(const std::string& task, std::span<const EvalRecord> eval,
                              std::span<const AttackRecord> attacks);

std::string report_csv(const ExperimentReport& report);
std::string report_text(const ExperimentReport& report);

// ---------------------------------------------------------------------------
// Stages. Each stage caches its output under the output directory together
// with a stamp of the settings it depends on, and is skipped when the stamp
// matches.

struct Workspace {
    std::filesystem::path root;

    std::filesystem::path corpus_index() const { return root / "prepare" / "corpus.csv"; }
    std::filesystem::path synthetic_dir() const { return root / "corpus"; }
    std::filesystem::path manipulated_dir(const ManipulationSpec& spec) const {
        return root / "images" / spec.key();
    }
    std::filesystem::path feature_dir(const SpamConfig& spam, const ManipulationSpec& spec) const {
        return root / "features" / spam.key() / spec.key();
    }
    std::filesystem::path model_dir() const { return root / "model"; }
    std::filesystem::path eval_records() const { return root / "eval" / "records.csv"; }
    std::filesystem::path attack_dir() const { return root / "attack"; }
    std::filesystem::path attack_records() const { return root / "attack" / "records.csv"; }
    std::filesystem::path report_dir() const { return root / "report"; }
};

/// id -> pristine image path
using CorpusIndex = std::map<std::string, std::filesystem::path>;

CorpusIndex stage_prepare(const ExperimentConfig& cfg, const Workspace& ws);
FeatureStore stage_extract(const ExperimentConfig& cfg, const Workspace& ws);
/// Trains (or reloads) the detector; grid-search summaries land in the model manifest.
OneHalfClassModel stage_train(const ExperimentConfig& cfg, const Workspace& ws);
std::vector<EvalRecord> stage_evaluate(const ExperimentConfig& cfg, const Workspace& ws);
std::vector<AttackRecord> stage_attack(const ExperimentConfig& cfg, const Workspace& ws);
ExperimentReport stage_report(const ExperimentConfig& cfg, const Workspace& ws);

/// Splits exactly as the train stage draws them.
DatasetSplits experiment_splits(const ExperimentConfig& cfg, const Workspace& ws);

struct RunOptions {
    bool dry_run = false;
    bool attack = true;
};

/// prepare -> extract -> train -> evaluate -> (attack) -> report. In dry-run
/// mode only validates the config and writes the stage plan to `log`.
std::optional<ExperimentReport> run_experiment(const ExperimentConfig& cfg, const Workspace& ws,
                                               const RunOptions& opts, std::ostream& log);

}  // namespace onehalf
