#include "onehalf/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "csv_util.hpp"
#include "onehalf/error.hpp"
#include "onehalf/image_io.hpp"
#include "onehalf/metrics.hpp"
#include "parallel.hpp"

namespace onehalf {

namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// Write-then-rename so an interrupted run never leaves a half-written cache entry.
void write_text_atomic(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".partial";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
        out << text;
        if (!out) throw Error("short write to '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

void write_image_atomic(const fs::path& path, const RasterImage& img) {
    const fs::path tmp = path.parent_path() / (path.stem().string() + ".partial" + path.extension().string());
    write_image(tmp, img);
    fs::rename(tmp, path);
}

bool stamp_matches(const fs::path& dir, const std::string& stamp) {
    const fs::path p = dir / "stamp.txt";
    return fs::exists(p) && read_text(p) == stamp;
}

void write_stamp(const fs::path& dir, const std::string& stamp) {
    write_text_atomic(dir / "stamp.txt", stamp);
}

// Runs `body`, converting library failures into a StageError for `stage`.
template <typename Fn>
auto in_stage(const char* stage, Fn&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

SeedSet SeedSet::derive(std::uint64_t master) {
    return {splitmix64(master ^ 0x73796e7468ull), splitmix64(master ^ 0x73706c6974ull),
            splitmix64(master ^ 0x666f6c6473ull), splitmix64(master ^ 0x6e6f697365ull),
            splitmix64(master ^ 0x61747461636bull)};
}

void set_master_seed(ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.seed = seed;
    cfg.seeds = SeedSet::derive(seed);
}

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& what) { throw ConfigError(what); };
    try {
        synth.validate();
    } catch (const InvalidArgument& e) {
        fail(e.what());
    }
    if (!corpus_dir.empty() && !fs::is_directory(corpus_dir)) fail("corpus.dir '" + corpus_dir + "' is not a directory");
    switch (manipulation.kind) {
        case ManipulationKind::Resize:
            if (!(manipulation.scale > 0.0)) fail("task.scale must be positive");
            break;
        case ManipulationKind::MedianFilter:
            if (manipulation.window < 3 || manipulation.window % 2 == 0) fail("task.window must be odd and >= 3");
            break;
        case ManipulationKind::ClAhe:
            if (!(manipulation.clip_limit > 0.0 && manipulation.clip_limit <= 1.0)) fail("task.clip_limit must lie in (0,1]");
            if (manipulation.tiles_x < 1 || manipulation.tiles_y < 1) fail("task.tiles must be positive");
            break;
    }
    if (spam.truncation < 1 || spam.truncation > 10) fail("spam.truncation must lie in [1,10]");
    for (int n : {splits.validation, splits.training, splits.comb_validation, splits.comb_training, splits.comb_test}) {
        if (n < 1) fail("every split size must be positive");
    }
    auto check_grid = [&](const GridConfig& g, const char* name, bool nu) {
        if (g.c_or_nu.empty() || g.gamma.empty()) fail(std::string(name) + ": empty grid");
        for (double v : g.gamma)
            if (!(v > 0.0) || !std::isfinite(v)) fail(std::string(name) + ": gamma values must be positive");
        for (double v : g.c_or_nu) {
            if (!(v > 0.0) || !std::isfinite(v)) fail(std::string(name) + ": grid values must be positive");
            if (nu && v > 1.0) fail(std::string(name) + ": nu values must not exceed 1");
        }
    };
    check_grid(grid_2c, "grid.2c", false);
    check_grid(grid_1c, "grid.1c", true);
    check_grid(grid_combiner, "grid.cmb", true);
    if (grid_2c.folds < 2) fail("grid.2c.folds must be >= 2");
    for (double a : {alpha_intermediate, alpha_combiner}) {
        if (!(a > 0.0 && a < 1.0)) fail("error weights: alpha must lie in (0,1)");
        if (!ErrorWeights::from_alpha(a).normalized()) fail("error weights must sum to one");
    }
    if (!(svm.tolerance > 0.0)) fail("svm.tolerance must be positive");
    if (svm.max_iterations < 1) fail("svm.max_iterations must be positive");
    if (svm.cache_bytes < (std::size_t{1} << 20)) fail("svm.cache_mb must be at least 1");
    for (double v : noise_variances)
        if (!(v > 0.0) || !std::isfinite(v)) fail("eval.noise_variances must be positive");
    for (int q : jpeg_qualities)
        if (q < 1 || q > 100) fail("eval.jpeg_qualities must lie in [1,100]");
    try {
        attack.validate();
    } catch (const InvalidArgument& e) {
        fail(e.what());
    }
    if (attack_count < 0) fail("attack.count must be >= 0");
    if (attack_targets.empty()) fail("attack.targets must name at least one target");
    if (std::set<TargetKind>(attack_targets.begin(), attack_targets.end()).size() != attack_targets.size()) {
        fail("attack.targets contains duplicates");
    }
    if (jobs < 1) fail("jobs must be >= 1");
}

TrainConfig ExperimentConfig::train_config() const {
    TrainConfig t;
    t.grid_2c = grid_2c;
    t.grid_2c.fold_seed = seeds.folds;
    t.grid_1c = grid_1c;
    t.grid_combiner = grid_combiner;
    t.weights_intermediate = ErrorWeights::from_alpha(alpha_intermediate);
    t.weights_combiner = ErrorWeights::from_alpha(alpha_combiner);
    t.options = svm;
    t.jobs = jobs;
    return t;
}

namespace {

long long to_int(const std::string& key, const std::string& v) {
    try {
        return csv::parse_int(v);
    } catch (const ParseError&) {
        throw ConfigError(key + ": expected an integer, got '" + v + "'");
    }
}

int to_int32(const std::string& key, const std::string& v) {
    const long long x = to_int(key, v);
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
        throw ConfigError(key + ": value out of range");
    }
    return static_cast<int>(x);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t x = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    }
    return x;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        return csv::parse_double(v);
    } catch (const ParseError&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> to_list(const std::string& v) {
    std::vector<std::string> out;
    if (v.empty() || v == "none") return out;
    for (auto& item : csv::split(v)) out.push_back(trim(item));
    return out;
}

// "lo:hi[:step]" exponent range or a comma list of exponents; values are 2^e.
std::vector<double> to_grid(const std::string& key, const std::string& v) {
    if (v.find(':') != std::string::npos) {
        const auto parts = csv::split(v, ':');
        if (parts.size() < 2 || parts.size() > 3) throw ConfigError(key + ": expected lo:hi[:step]");
        const int lo = to_int32(key, trim(parts[0]));
        const int hi = to_int32(key, trim(parts[1]));
        const int step = parts.size() == 3 ? to_int32(key, trim(parts[2])) : 1;
        if (step < 1 || hi < lo) throw ConfigError(key + ": empty exponent range");
        return GridConfig::powers_of_two(lo, hi, step);
    }
    std::vector<double> out;
    for (const auto& e : to_list(v)) out.push_back(std::exp2(to_double(key, e)));
    if (out.empty()) throw ConfigError(key + ": empty grid");
    return out;
}

std::string grid_text(const std::vector<double>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) s += ',';
        s += csv::format_double(std::log2(values[i]));
    }
    return s;
}

template <typename T, typename Fmt>
std::string join(const std::vector<T>& items, Fmt fmt) {
    std::string s;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) s += ',';
        s += fmt(items[i]);
    }
    return s.empty() ? "none" : s;
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

const std::vector<std::pair<std::string, Setter>>& setters() {
    static const std::vector<std::pair<std::string, Setter>> table = {
        // Order matters: keys that reset groups of settings come first.
        {"seed", [](auto& c, auto& k, auto& v) { set_master_seed(c, to_u64(k, v)); }},
        {"task", [](auto& c, auto& k, auto& v) {
             try {
                 c.manipulation.kind = parse_manipulation_kind(v);
             } catch (const InvalidArgument& e) {
                 throw ConfigError(k + ": " + e.what());
             }
         }},
        {"split.scale", [](auto& c, auto& k, auto& v) {
             const double f = to_double(k, v);
             if (!(f > 0.0)) throw ConfigError(k + " must be positive");
             c.splits = SplitSizes{}.scaled(f);
         }},
        {"corpus.dir", [](auto& c, auto&, auto& v) { c.corpus_dir = v; }},
        {"synth.count", [](auto& c, auto& k, auto& v) { c.synth.count = to_int32(k, v); }},
        {"synth.width", [](auto& c, auto& k, auto& v) { c.synth.width = to_int32(k, v); }},
        {"synth.height", [](auto& c, auto& k, auto& v) { c.synth.height = to_int32(k, v); }},
        {"synth.channels", [](auto& c, auto& k, auto& v) { c.synth.channels = to_int32(k, v); }},
        {"synth.noise_min", [](auto& c, auto& k, auto& v) { c.synth.noise_sigma_min = to_double(k, v); }},
        {"synth.noise_max", [](auto& c, auto& k, auto& v) { c.synth.noise_sigma_max = to_double(k, v); }},
        {"task.scale", [](auto& c, auto& k, auto& v) { c.manipulation.scale = to_double(k, v); }},
        {"task.window", [](auto& c, auto& k, auto& v) { c.manipulation.window = to_int32(k, v); }},
        {"task.clip_limit", [](auto& c, auto& k, auto& v) { c.manipulation.clip_limit = to_double(k, v); }},
        {"task.tiles_x", [](auto& c, auto& k, auto& v) { c.manipulation.tiles_x = to_int32(k, v); }},
        {"task.tiles_y", [](auto& c, auto& k, auto& v) { c.manipulation.tiles_y = to_int32(k, v); }},
        {"spam.truncation", [](auto& c, auto& k, auto& v) { c.spam.truncation = to_int32(k, v); }},
        {"spam.normalization", [](auto& c, auto& k, auto& v) {
             if (v == "conditional") c.spam.normalization = Normalization::Conditional;
             else if (v == "joint") c.spam.normalization = Normalization::Joint;
             else throw ConfigError(k + ": expected conditional or joint");
         }},
        {"split.validation", [](auto& c, auto& k, auto& v) { c.splits.validation = to_int32(k, v); }},
        {"split.training", [](auto& c, auto& k, auto& v) { c.splits.training = to_int32(k, v); }},
        {"split.comb_validation", [](auto& c, auto& k, auto& v) { c.splits.comb_validation = to_int32(k, v); }},
        {"split.comb_training", [](auto& c, auto& k, auto& v) { c.splits.comb_training = to_int32(k, v); }},
        {"split.comb_test", [](auto& c, auto& k, auto& v) { c.splits.comb_test = to_int32(k, v); }},
        {"grid.2c.c", [](auto& c, auto& k, auto& v) { c.grid_2c.c_or_nu = to_grid(k, v); }},
        {"grid.2c.gamma", [](auto& c, auto& k, auto& v) { c.grid_2c.gamma = to_grid(k, v); }},
        {"grid.2c.folds", [](auto& c, auto& k, auto& v) { c.grid_2c.folds = to_int32(k, v); }},
        {"grid.1c.nu", [](auto& c, auto& k, auto& v) { c.grid_1c.c_or_nu = to_grid(k, v); }},
        {"grid.1c.gamma", [](auto& c, auto& k, auto& v) { c.grid_1c.gamma = to_grid(k, v); }},
        {"grid.cmb.nu", [](auto& c, auto& k, auto& v) { c.grid_combiner.c_or_nu = to_grid(k, v); }},
        {"grid.cmb.gamma", [](auto& c, auto& k, auto& v) { c.grid_combiner.gamma = to_grid(k, v); }},
        {"weights.intermediate_alpha", [](auto& c, auto& k, auto& v) { c.alpha_intermediate = to_double(k, v); }},
        {"weights.combiner_alpha", [](auto& c, auto& k, auto& v) { c.alpha_combiner = to_double(k, v); }},
        {"svm.tolerance", [](auto& c, auto& k, auto& v) { c.svm.tolerance = to_double(k, v); }},
        {"svm.max_iterations", [](auto& c, auto& k, auto& v) { c.svm.max_iterations = to_int(k, v); }},
        {"svm.cache_mb", [](auto& c, auto& k, auto& v) {
             const long long mb = to_int(k, v);
             if (mb < 1) throw ConfigError(k + " must be positive");
             c.svm.cache_bytes = static_cast<std::size_t>(mb) << 20;
         }},
        {"eval.noise_variances", [](auto& c, auto& k, auto& v) {
             c.noise_variances.clear();
             for (const auto& x : to_list(v)) c.noise_variances.push_back(to_double(k, x));
         }},
        {"eval.jpeg_qualities", [](auto& c, auto& k, auto& v) {
             c.jpeg_qualities.clear();
             for (const auto& x : to_list(v)) c.jpeg_qualities.push_back(to_int32(k, x));
         }},
        {"eval.2c_full_test", [](auto& c, auto& k, auto& v) { c.eval_2c_full_test = to_bool(k, v); }},
        {"attack.count", [](auto& c, auto& k, auto& v) { c.attack_count = to_int32(k, v); }},
        {"attack.targets", [](auto& c, auto& k, auto& v) {
             c.attack_targets.clear();
             for (const auto& x : to_list(v)) {
                 try {
                     c.attack_targets.push_back(parse_target_kind(x));
                 } catch (const InvalidArgument& e) {
                     throw ConfigError(k + ": " + e.what());
                 }
             }
         }},
        {"attack.rho", [](auto& c, auto& k, auto& v) { c.attack.rho = to_double(k, v); }},
        {"attack.pixel_fraction", [](auto& c, auto& k, auto& v) { c.attack.pixel_fraction = to_double(k, v); }},
        {"attack.step", [](auto& c, auto& k, auto& v) { c.attack.step = to_int32(k, v); }},
        {"attack.max_iters", [](auto& c, auto& k, auto& v) { c.attack.max_iters = to_int32(k, v); }},
        {"seed.synth", [](auto& c, auto& k, auto& v) { c.seeds.synth = to_u64(k, v); }},
        {"seed.split", [](auto& c, auto& k, auto& v) { c.seeds.split = to_u64(k, v); }},
        {"seed.folds", [](auto& c, auto& k, auto& v) { c.seeds.folds = to_u64(k, v); }},
        {"seed.noise", [](auto& c, auto& k, auto& v) { c.seeds.noise = to_u64(k, v); }},
        {"seed.attack", [](auto& c, auto& k, auto& v) { c.seeds.attack = to_u64(k, v); }},
        {"jobs", [](auto& c, auto& k, auto& v) { c.jobs = to_int32(k, v); }},
    };
    return table;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    std::map<std::string, std::string> entries;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        if (!entries.emplace(key, trim(line.substr(eq + 1))).second) {
            throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        }
    }
    for (const auto& [key, value] : entries) {
        const auto& table = setters();
        if (std::none_of(table.begin(), table.end(), [&](const auto& s) { return s.first == key; })) {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
    ExperimentConfig cfg;
    for (const auto& [key, set] : setters()) {
        if (const auto it = entries.find(key); it != entries.end()) set(cfg, key, it->second);
    }
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    std::string text;
    try {
        text = read_text(path);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return parse_config(text);
}

std::string to_config_text(const ExperimentConfig& c) {
    using csv::format_double;
    std::ostringstream os;
    auto kv = [&os](const std::string& k, const std::string& v) { os << k << " = " << v << '\n'; };
    kv("seed", std::to_string(c.seed));
    kv("task", to_string(c.manipulation.kind));
    kv("corpus.dir", c.corpus_dir);
    kv("synth.count", std::to_string(c.synth.count));
    kv("synth.width", std::to_string(c.synth.width));
    kv("synth.height", std::to_string(c.synth.height));
    kv("synth.channels", std::to_string(c.synth.channels));
    kv("synth.noise_min", format_double(c.synth.noise_sigma_min));
    kv("synth.noise_max", format_double(c.synth.noise_sigma_max));
    kv("task.scale", format_double(c.manipulation.scale));
    kv("task.window", std::to_string(c.manipulation.window));
    kv("task.clip_limit", format_double(c.manipulation.clip_limit));
    kv("task.tiles_x", std::to_string(c.manipulation.tiles_x));
    kv("task.tiles_y", std::to_string(c.manipulation.tiles_y));
    kv("spam.truncation", std::to_string(c.spam.truncation));
    kv("spam.normalization", c.spam.normalization == Normalization::Conditional ? "conditional" : "joint");
    kv("split.validation", std::to_string(c.splits.validation));
    kv("split.training", std::to_string(c.splits.training));
    kv("split.comb_validation", std::to_string(c.splits.comb_validation));
    kv("split.comb_training", std::to_string(c.splits.comb_training));
    kv("split.comb_test", std::to_string(c.splits.comb_test));
    kv("grid.2c.c", grid_text(c.grid_2c.c_or_nu));
    kv("grid.2c.gamma", grid_text(c.grid_2c.gamma));
    kv("grid.2c.folds", std::to_string(c.grid_2c.folds));
    kv("grid.1c.nu", grid_text(c.grid_1c.c_or_nu));
    kv("grid.1c.gamma", grid_text(c.grid_1c.gamma));
    kv("grid.cmb.nu", grid_text(c.grid_combiner.c_or_nu));
    kv("grid.cmb.gamma", grid_text(c.grid_combiner.gamma));
    kv("weights.intermediate_alpha", format_double(c.alpha_intermediate));
    kv("weights.combiner_alpha", format_double(c.alpha_combiner));
    kv("svm.tolerance", format_double(c.svm.tolerance));
    kv("svm.max_iterations", std::to_string(c.svm.max_iterations));
    kv("svm.cache_mb", std::to_string(c.svm.cache_bytes >> 20));
    kv("eval.noise_variances", join(c.noise_variances, [](double v) { return format_double(v); }));
    kv("eval.jpeg_qualities", join(c.jpeg_qualities, [](int q) { return std::to_string(q); }));
    kv("eval.2c_full_test", c.eval_2c_full_test ? "true" : "false");
    kv("attack.count", std::to_string(c.attack_count));
    kv("attack.targets", join(c.attack_targets, [](TargetKind t) { return to_string(t); }));
    kv("attack.rho", format_double(c.attack.rho));
    kv("attack.pixel_fraction", format_double(c.attack.pixel_fraction));
    kv("attack.step", std::to_string(c.attack.step));
    kv("attack.max_iters", std::to_string(c.attack.max_iters));
    kv("seed.synth", std::to_string(c.seeds.synth));
    kv("seed.split", std::to_string(c.seeds.split));
    kv("seed.folds", std::to_string(c.seeds.folds));
    kv("seed.noise", std::to_string(c.seeds.noise));
    kv("seed.attack", std::to_string(c.seeds.attack));
    kv("jobs", std::to_string(c.jobs));
    return os.str();
}

namespace {

// Subset of the canonical config a stage depends on.
std::string stage_stamp(const ExperimentConfig& cfg, std::initializer_list<const char*> prefixes) {
    std::istringstream in(to_config_text(cfg));
    std::string line, out;
    while (std::getline(in, line)) {
        for (const char* p : prefixes) {
            if (line.rfind(p, 0) == 0) {
                out += line + '\n';
                break;
            }
        }
    }
    return out;
}

#define PREPARE_KEYS "corpus.", "synth.", "seed.synth", "task"
#define EXTRACT_KEYS PREPARE_KEYS, "spam."
#define TRAIN_KEYS EXTRACT_KEYS, "split.", "grid.", "weights.", "svm.", "seed.split", "seed.folds"

std::string prepare_stamp(const ExperimentConfig& c) { return stage_stamp(c, {PREPARE_KEYS}); }
std::string extract_stamp(const ExperimentConfig& c) { return stage_stamp(c, {EXTRACT_KEYS}); }
std::string train_stamp(const ExperimentConfig& c) { return stage_stamp(c, {TRAIN_KEYS}); }
std::string evaluate_stamp(const ExperimentConfig& c) { return stage_stamp(c, {TRAIN_KEYS, "eval.", "seed.noise"}); }
std::string attack_stamp(const ExperimentConfig& c) { return stage_stamp(c, {TRAIN_KEYS, "attack.", "seed.attack"}); }

}  // namespace

// ---------------------------------------------------------------------------
// Records

void write_eval_records(const fs::path& path, std::span<const EvalRecord> records) {
    std::ostringstream os;
    os << "image_id,class,set,condition,d1,d2,d3,f\n";
    for (const auto& r : records) {
        os << r.image_id << ',' << to_string(r.label) << ',' << r.set << ',' << r.condition;
        for (double d : r.d) os << ',' << csv::format_double(d);
        os << ',' << csv::format_double(r.f) << '\n';
    }
    write_text_atomic(path, os.str());
}

std::vector<EvalRecord> read_eval_records(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::string line;
    if (!std::getline(in, line) || line != "image_id,class,set,condition,d1,d2,d3,f") {
        throw ParseError("'" + path.string() + "' is not an evaluation record file");
    }
    std::vector<EvalRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = csv::split(line);
        if (f.size() != 8) throw ParseError("'" + path.string() + "': wrong column count");
        EvalRecord r;
        r.image_id = f[0];
        r.label = parse_image_class(f[1]);
        r.set = f[2];
        r.condition = f[3];
        for (int k = 0; k < 3; ++k) r.d[k] = csv::parse_double(f[4 + k]);
        r.f = csv::parse_double(f[7]);
        out.push_back(std::move(r));
    }
    return out;
}

void write_attack_records(const fs::path& path, std::span<const AttackRecord> records) {
    std::ostringstream os;
    os << "image_id,target,success,stalled,iterations,mse,pixel_fraction,initial_score,d1,d2,d3,f\n";
    for (const auto& r : records) {
        os << r.image_id << ',' << to_string(r.target) << ',' << (r.success ? 1 : 0) << ',' << (r.stalled ? 1 : 0)
           << ',' << r.iterations << ',' << csv::format_double(r.mse) << ',' << csv::format_double(r.pixel_fraction)
           << ',' << csv::format_double(r.initial_score);
        for (double d : r.d) os << ',' << csv::format_double(d);
        os << ',' << csv::format_double(r.f) << '\n';
    }
    write_text_atomic(path, os.str());
}

std::vector<AttackRecord> read_attack_records(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::string line;
    if (!std::getline(in, line) ||
        line != "image_id,target,success,stalled,iterations,mse,pixel_fraction,initial_score,d1,d2,d3,f") {
        throw ParseError("'" + path.string() + "' is not an attack record file");
    }
    std::vector<AttackRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = csv::split(line);
        if (f.size() != 12) throw ParseError("'" + path.string() + "': wrong column count");
        AttackRecord r;
        r.image_id = f[0];
        r.target = parse_target_kind(f[1]);
        r.success = csv::parse_int(f[2]) != 0;
        r.stalled = csv::parse_int(f[3]) != 0;
        r.iterations = static_cast<int>(csv::parse_int(f[4]));
        r.mse = csv::parse_double(f[5]);
        r.pixel_fraction = csv::parse_double(f[6]);
        r.initial_score = csv::parse_double(f[7]);
        for (int k = 0; k < 3; ++k) r.d[k] = csv::parse_double(f[8 + k]);
        r.f = csv::parse_double(f[11]);
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report

namespace {

// Scores oriented so that larger means pristine, per classifier.
std::array<double, 4> pristine_scores(const std::array<double, 3>& d, double f) {
    return {d[0], d[1], -d[2], f};
}

// Sign-rule label of each classifier: the manipulated one-class model
// accepts (d3 >= 0) as manipulated.
std::array<bool, 4> says_pristine(const std::array<double, 3>& d, double f) {
    return {d[0] >= 0.0, d[1] >= 0.0, !(d[2] >= 0.0), f >= 0.0};
}

}  // namespace

double ExperimentReport::auc_of(const std::string& classifier, const std::string& set) const {
    for (const auto& r : auc)
        if (r.classifier == classifier && r.set == set) return r.auc;
    throw InvalidArgument("report has no AUC for " + classifier + " on " + set);
}

const RobustnessRow* ExperimentReport::robustness_of(const std::string& condition) const {
    for (const auto& r : robustness)
        if (r.condition == condition) return &r;
    return nullptr;
}

const AttackRow* ExperimentReport::attack_of(TargetKind target) const {
    for (const auto& r : attacks)
        if (r.target == to_string(target)) return &r;
    return nullptr;
}

ExperimentReport build_report(const std::string& task, std::span<const EvalRecord> eval,
                              std::span<const AttackRecord> attacks) {
    ExperimentReport rep;
    rep.task = task;

    std::vector<std::string> sets, conditions;
    for (const auto& r : eval) {
        if (std::find(sets.begin(), sets.end(), r.set) == sets.end()) sets.push_back(r.set);
        if (r.set == "S_T^t" && std::find(conditions.begin(), conditions.end(), r.condition) == conditions.end()) {
            conditions.push_back(r.condition);
        }
    }
    for (const auto& set : sets) {
        std::array<std::vector<double>, 4> scores;
        std::vector<ImageClass> labels;
        for (const auto& r : eval) {
            if (r.set != set || r.condition != "clean") continue;
            const auto s = pristine_scores(r.d, r.f);
            for (int k = 0; k < 4; ++k) scores[k].push_back(s[k]);
            labels.push_back(r.label);
        }
        if (labels.empty()) continue;
        for (int k = 0; k < 4; ++k) rep.auc.push_back({set, kClassifierNames[k], roc_auc(scores[k], labels).auc});
    }
    for (const auto& cond : conditions) {
        RobustnessRow row;
        row.condition = cond;
        std::array<int, 4> correct{};
        for (const auto& r : eval) {
            if (r.set != "S_T^t" || r.condition != cond) continue;
            ++row.samples;
            const auto p = says_pristine(r.d, r.f);
            for (int k = 0; k < 4; ++k) correct[k] += p[k] == (r.label == ImageClass::Pristine);
        }
        for (int k = 0; k < 4; ++k) row.accuracy[k] = static_cast<double>(correct[k]) / row.samples;
        rep.robustness.push_back(row);
    }

    std::vector<TargetKind> targets;
    for (const auto& r : attacks)
        if (std::find(targets.begin(), targets.end(), r.target) == targets.end()) targets.push_back(r.target);
    for (TargetKind t : targets) {
        AttackRow row;
        row.target = to_string(t);
        double mse_sum = 0.0, pix_sum = 0.0, iter_sum = 0.0;
        int succ = 0;
        std::array<int, 4> fooled{};
        for (const auto& r : attacks) {
            if (r.target != t) continue;
            ++row.attacked;
            succ += r.success;
            mse_sum += r.mse;
            pix_sum += r.pixel_fraction;
            iter_sum += r.iterations;
            const auto p = says_pristine(r.d, r.f);
            for (int k = 0; k < 4; ++k) fooled[k] += p[k];
        }
        const double n = row.attacked;
        row.success_rate = succ / n;
        row.mean_mse = mse_sum / n;
        row.mean_pixel_fraction = pix_sum / n;
        row.mean_iterations = iter_sum / n;
        for (int k = 0; k < 4; ++k) row.misclassified[k] = fooled[k] / n;
        rep.attacks.push_back(row);
    }
    return rep;
}

std::string report_csv(const ExperimentReport& rep) {
    using csv::format_double;
    std::ostringstream os;
    os << "section,group,metric,value\n";
    os << "task,," << rep.task << ",\n";
    for (const auto& r : rep.auc) os << "auc," << r.set << ',' << r.classifier << ',' << format_double(r.auc) << '\n';
    for (const auto& r : rep.robustness) {
        os << "accuracy," << r.condition << ",samples," << r.samples << '\n';
        for (int k = 0; k < 4; ++k) {
            os << "accuracy," << r.condition << ',' << kClassifierNames[k] << ',' << format_double(r.accuracy[k]) << '\n';
        }
    }
    for (const auto& r : rep.attacks) {
        const std::string g = "attack," + r.target + ',';
        os << g << "attacked," << r.attacked << '\n';
        os << g << "success_rate," << format_double(r.success_rate) << '\n';
        os << g << "mean_mse," << format_double(r.mean_mse) << '\n';
        os << g << "mean_pixel_fraction," << format_double(r.mean_pixel_fraction) << '\n';
        os << g << "mean_iterations," << format_double(r.mean_iterations) << '\n';
        for (int k = 0; k < 4; ++k) {
            os << g << "misclassified_" << kClassifierNames[k] << ',' << format_double(r.misclassified[k]) << '\n';
        }
    }
    return os.str();
}

std::string report_text(const ExperimentReport& rep) {
    std::ostringstream os;
    os << std::fixed;
    auto header = [&os](const char* first) {
        os << std::left << std::setw(14) << first << std::right;
        for (const char* n : kClassifierNames) os << std::setw(11) << n;
        os << '\n';
    };
    os << "task: " << rep.task << "\n\n";
    if (!rep.auc.empty()) {
        os << "AUC (no attack)\n";
        header("set");
        std::vector<std::string> sets;
        for (const auto& r : rep.auc)
            if (std::find(sets.begin(), sets.end(), r.set) == sets.end()) sets.push_back(r.set);
        for (const auto& s : sets) {
            os << std::left << std::setw(14) << s << std::right << std::setprecision(4);
            for (const char* n : kClassifierNames) os << std::setw(11) << rep.auc_of(n, s);
            os << '\n';
        }
        os << '\n';
    }
    if (!rep.robustness.empty()) {
        os << "Accuracy under post-processing (S_T^t)\n";
        header("condition");
        for (const auto& r : rep.robustness) {
            os << std::left << std::setw(14) << r.condition << std::right << std::setprecision(4);
            for (double a : r.accuracy) os << std::setw(11) << a;
            os << '\n';
        }
        os << '\n';
    }
    if (!rep.attacks.empty()) {
        os << "Attacks\n";
        os << std::left << std::setw(8) << "target" << std::right << std::setw(9) << "images" << std::setw(10)
           << "success" << std::setw(10) << "mean MSE" << std::setw(10) << "pixels %" << std::setw(8) << "iters"
           << '\n';
        for (const auto& r : rep.attacks) {
            os << std::left << std::setw(8) << r.target << std::right << std::setw(9) << r.attacked
               << std::setprecision(4) << std::setw(10) << r.success_rate << std::setw(10) << r.mean_mse
               << std::setprecision(2) << std::setw(10) << 100.0 * r.mean_pixel_fraction << std::setw(8)
               << r.mean_iterations << '\n';
        }
        os << "\nAttacked images labelled pristine\n";
        header("target");
        for (const auto& r : rep.attacks) {
            os << std::left << std::setw(14) << r.target << std::right << std::setprecision(4);
            for (double m : r.misclassified) os << std::setw(11) << m;
            os << '\n';
        }
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Stages

namespace {

// Synthetic images are listed relative to the workspace so that two
// workspaces built from the same settings hold identical files.
CorpusIndex read_corpus_index(const Workspace& ws) {
    const fs::path path = ws.corpus_index();
    std::istringstream in(read_text(path));
    std::string line;
    if (!std::getline(in, line) || line != "image_id,path") throw ParseError("bad corpus index '" + path.string() + "'");
    CorpusIndex index;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ParseError("bad corpus index line '" + line + "'");
        const fs::path p(line.substr(comma + 1));
        index.emplace(line.substr(0, comma), p.is_relative() ? ws.root / p : p);
    }
    return index;
}

std::vector<std::string> ids_of(const CorpusIndex& index) {
    std::vector<std::string> ids;
    for (const auto& [id, _] : index) ids.push_back(id);
    return ids;
}

fs::path manipulated_path(const ExperimentConfig& cfg, const Workspace& ws, const std::string& id) {
    return ws.manipulated_dir(cfg.manipulation) / (id + ".png");
}

std::uint64_t image_seed(std::uint64_t base, const std::string& id, std::uint64_t salt) {
    return splitmix64(splitmix64(base ^ fnv1a(id)) + salt);
}

}  // namespace

CorpusIndex stage_prepare(const ExperimentConfig& cfg, const Workspace& ws) {
    cfg.validate();
    return in_stage("prepare", [&] {
        const std::string stamp = prepare_stamp(cfg);
        const fs::path stage_dir = ws.corpus_index().parent_path();
        const fs::path manip_dir = ws.manipulated_dir(cfg.manipulation);
        if (!stamp_matches(stage_dir, stamp)) {
            // settings changed: earlier generated images are stale
            fs::remove_all(manip_dir);
            if (cfg.corpus_dir.empty()) fs::remove_all(ws.synthetic_dir());
            fs::remove(ws.corpus_index());
        }

        CorpusIndex index;
        if (cfg.corpus_dir.empty()) {
            SynthConfig s = cfg.synth;
            s.seed = cfg.seeds.synth;
            for (const auto& id : write_synthetic_corpus(ws.synthetic_dir(), s, cfg.jobs)) {
                index.emplace(id, fs::absolute(ws.synthetic_dir() / (id + ".png")));
            }
        } else {
            for (const auto& p : list_images(cfg.corpus_dir)) {
                const std::string id = p.stem().string();
                if (id.find(',') != std::string::npos) throw Error("image name '" + id + "' contains a comma");
                if (!index.emplace(id, fs::absolute(p)).second) {
                    throw Error("two corpus images share the id '" + id + "'");
                }
            }
            if (index.empty()) throw Error("no images found in '" + cfg.corpus_dir + "'");
        }

        fs::create_directories(manip_dir);
        const auto ids = ids_of(index);
        detail::parallel_for(static_cast<int>(ids.size()), cfg.jobs, [&](int i) {
            const auto& id = ids[static_cast<std::size_t>(i)];
            const fs::path out = manipulated_path(cfg, ws, id);
            if (fs::exists(out)) return;
            write_image_atomic(out, apply_manipulation(read_image(index.at(id)), cfg.manipulation));
        });

        std::ostringstream os;
        os << "image_id,path\n";
        for (const auto& [id, path] : index) {
            const fs::path listed = cfg.corpus_dir.empty() ? fs::path("corpus") / path.filename() : path;
            os << id << ',' << listed.generic_string() << '\n';
        }
        write_text_atomic(ws.corpus_index(), os.str());
        write_stamp(stage_dir, stamp);
        return index;
    });
}

FeatureStore stage_extract(const ExperimentConfig& cfg, const Workspace& ws) {
    const CorpusIndex index = stage_prepare(cfg, ws);
    return in_stage("extract", [&] {
        const fs::path dir = ws.feature_dir(cfg.spam, cfg.manipulation);
        const fs::path pristine_csv = dir / "pristine.csv";
        const fs::path manipulated_csv = dir / "manipulated.csv";
        const std::string stamp = extract_stamp(cfg);
        const auto ids = ids_of(index);

        FeatureStore store;
        auto fill = [&](const std::vector<FeatureRecord>& recs) {
            for (const auto& r : recs) {
                auto& slot = store[r.source_id];
                (r.label == ImageClass::Pristine ? slot.pristine : slot.manipulated) = r.values;
            }
        };
        if (stamp_matches(dir, stamp) && fs::exists(pristine_csv) && fs::exists(manipulated_csv)) {
            fill(read_feature_csv(pristine_csv, cfg.spam));
            fill(read_feature_csv(manipulated_csv, cfg.spam));
            const bool complete = store.size() == ids.size() &&
                                  std::all_of(store.begin(), store.end(), [&](const auto& kv) {
                                      return index.count(kv.first) && kv.second.pristine && kv.second.manipulated;
                                  });
            if (complete) return store;
            store.clear();
        }

        std::vector<FeatureRecord> pristine(ids.size()), manipulated(ids.size());
        detail::parallel_for(static_cast<int>(ids.size()), cfg.jobs, [&](int i) {
            const auto& id = ids[static_cast<std::size_t>(i)];
            pristine[i] = {id, ImageClass::Pristine, spam_features(read_image(index.at(id)), cfg.spam).values};
            manipulated[i] = {id, ImageClass::Manipulated,
                              spam_features(read_image(manipulated_path(cfg, ws, id)), cfg.spam).values};
        });
        fs::create_directories(dir);
        write_feature_csv(pristine_csv, pristine, cfg.spam);
        write_feature_csv(manipulated_csv, manipulated, cfg.spam);
        write_stamp(dir, stamp);
        fill(pristine);
        fill(manipulated);
        return store;
    });
}

DatasetSplits experiment_splits(const ExperimentConfig& cfg, const Workspace& ws) {
    const auto ids = ids_of(read_corpus_index(ws));
    if (static_cast<int>(ids.size()) < cfg.splits.total()) {
        throw ConfigError("corpus has " + std::to_string(ids.size()) + " images but the splits need " +
                          std::to_string(cfg.splits.total()));
    }
    return make_splits(ids, cfg.splits, cfg.seeds.split);
}

OneHalfClassModel stage_train(const ExperimentConfig& cfg, const Workspace& ws) {
    const std::string stamp = train_stamp(cfg);
    if (stamp_matches(ws.model_dir(), stamp)) {
        try {
            return load_detector(ws.model_dir());
        } catch (const Error&) {
            // fall through and retrain
        }
    }
    const FeatureStore features = stage_extract(cfg, ws);
    const DatasetSplits splits = experiment_splits(cfg, ws);
    return in_stage("train", [&] {
        fs::remove(ws.model_dir() / "stamp.txt");
        const TrainReport report = train_15c(splits, features, cfg.train_config());
        save_detector(ws.model_dir(), report, splits);
        write_stamp(ws.model_dir(), stamp);
        return report.model;
    });
}

std::vector<EvalRecord> stage_evaluate(const ExperimentConfig& cfg, const Workspace& ws) {
    const std::string stamp = evaluate_stamp(cfg);
    const fs::path dir = ws.eval_records().parent_path();
    const OneHalfClassModel model = stage_train(cfg, ws);
    if (stamp_matches(dir, stamp) && fs::exists(ws.eval_records())) {
        return in_stage("evaluate", [&] { return read_eval_records(ws.eval_records()); });
    }
    const CorpusIndex index = read_corpus_index(ws);
    const DatasetSplits splits = experiment_splits(cfg, ws);
    return in_stage("evaluate", [&] {
        struct Condition {
            std::string name;
            std::function<RasterImage(const RasterImage&, std::uint64_t seed)> apply;
        };
        std::vector<Condition> conditions{{"clean", [](const RasterImage& img, std::uint64_t) { return img; }}};
        for (double v : cfg.noise_variances) {
            conditions.push_back({"noise:" + csv::format_double(v), [v](const RasterImage& img, std::uint64_t seed) {
                                      return add_gaussian_noise(img, v, seed);
                                  }});
        }
        for (int q : cfg.jpeg_qualities) {
            conditions.push_back({"jpeg:" + std::to_string(q),
                                  [q](const RasterImage& img, std::uint64_t) { return jpeg_cycle(img, q); }});
        }

        struct Job {
            std::string set;
            std::string id;
            bool all_conditions;
        };
        std::vector<Job> jobs;
        for (const auto& id : splits.s_t_t) jobs.push_back({"S_T^t", id, true});
        if (cfg.eval_2c_full_test) {
            auto all = splits.s_t();
            std::sort(all.begin(), all.end());
            for (const auto& id : all) jobs.push_back({"S_T", id, false});
        }

        std::vector<std::vector<EvalRecord>> per_job(jobs.size());
        detail::parallel_for(static_cast<int>(jobs.size()), cfg.jobs, [&](int j) {
            const Job& job = jobs[static_cast<std::size_t>(j)];
            const RasterImage images[2] = {read_image(index.at(job.id)), read_image(manipulated_path(cfg, ws, job.id))};
            for (int c = 0; c < 2; ++c) {
                const ImageClass label = c == 0 ? ImageClass::Pristine : ImageClass::Manipulated;
                const std::size_t n_cond = job.all_conditions ? conditions.size() : 1;
                for (std::size_t k = 0; k < n_cond; ++k) {
                    const auto seed = image_seed(cfg.seeds.noise, job.id, 2 * k + static_cast<std::uint64_t>(c));
                    const RasterImage processed = conditions[k].apply(images[c], seed);
                    const Prediction p = predict_15c(model, spam_features(processed, cfg.spam).values);
                    per_job[j].push_back({job.id, label, job.set, conditions[k].name, p.d, p.f});
                }
            }
        });
        // set, condition, image, class
        std::vector<EvalRecord> records;
        for (const char* set : {"S_T^t", "S_T"}) {
            for (const auto& cond : conditions) {
                for (std::size_t j = 0; j < jobs.size(); ++j) {
                    if (jobs[j].set != set) continue;
                    for (const auto& r : per_job[j])
                        if (r.condition == cond.name) records.push_back(r);
                }
            }
        }
        write_eval_records(ws.eval_records(), records);
        write_stamp(dir, stamp);
        return records;
    });
}

std::vector<AttackRecord> stage_attack(const ExperimentConfig& cfg, const Workspace& ws) {
    const std::string stamp = attack_stamp(cfg);
    const OneHalfClassModel model = stage_train(cfg, ws);
    if (stamp_matches(ws.attack_dir(), stamp) && fs::exists(ws.attack_records())) {
        return in_stage("attack", [&] { return read_attack_records(ws.attack_records()); });
    }
    const DatasetSplits splits = experiment_splits(cfg, ws);
    return in_stage("attack", [&] {
        fs::remove(ws.attack_dir() / "stamp.txt");
        // Only images every target currently detects are attacked, so the
        // per-target distortions compare like with like.
        const auto& ids = splits.s_t_t;
        std::vector<char> detected(ids.size(), 0);
        std::vector<RasterImage> images(ids.size());
        detail::parallel_for(static_cast<int>(ids.size()), cfg.jobs, [&](int i) {
            images[i] = read_image(manipulated_path(cfg, ws, ids[i]));
            const Prediction p = predict_15c(model, spam_features(images[i], cfg.spam).values);
            bool all = true;
            for (TargetKind t : cfg.attack_targets) {
                const double s = t == TargetKind::TwoClassOnly ? p.d[0] : p.f;
                all = all && s <= cfg.attack.rho;
            }
            detected[i] = all;
        });
        std::vector<std::size_t> chosen;
        for (std::size_t i = 0; i < ids.size() && static_cast<int>(chosen.size()) < cfg.attack_count; ++i) {
            if (detected[i]) chosen.push_back(i);
        }

        const std::size_t n_t = cfg.attack_targets.size();
        std::vector<AttackRecord> records(chosen.size() * n_t);
        for (TargetKind t : cfg.attack_targets) fs::create_directories(ws.attack_dir() / to_string(t));
        detail::parallel_for(static_cast<int>(records.size()), cfg.jobs, [&](int j) {
            const std::size_t ti = static_cast<std::size_t>(j) / chosen.size();
            const std::size_t ci = chosen[static_cast<std::size_t>(j) % chosen.size()];
            const TargetKind kind = cfg.attack_targets[ti];
            AttackConfig ac = cfg.attack;
            ac.seed = image_seed(cfg.seeds.attack, ids[ci], 0);
            const AttackTarget target{kind, &model, cfg.spam};
            const AttackResult res = run_attack(target, images[ci], ac);
            write_image_atomic(ws.attack_dir() / to_string(kind) / (ids[ci] + ".png"), res.attacked);
            records[static_cast<std::size_t>(j)] = {ids[ci],
                                                    kind,
                                                    res.success,
                                                    res.stalled,
                                                    res.iterations,
                                                    res.mse,
                                                    res.pixel_change_fraction,
                                                    res.initial_score,
                                                    res.final_scores.d,
                                                    res.final_scores.f};
        });
        write_attack_records(ws.attack_records(), records);
        write_stamp(ws.attack_dir(), stamp);
        return records;
    });
}

ExperimentReport stage_report(const ExperimentConfig& cfg, const Workspace& ws) {
    return in_stage("report", [&] {
        if (!fs::exists(ws.eval_records())) throw Error("no evaluation records; run evaluate first");
        const auto eval = read_eval_records(ws.eval_records());
        std::vector<AttackRecord> attacks;
        if (fs::exists(ws.attack_records())) attacks = read_attack_records(ws.attack_records());
        ExperimentReport rep = build_report(to_string(cfg.manipulation.kind), eval, attacks);
        write_text_atomic(ws.report_dir() / "summary.csv", report_csv(rep));
        write_text_atomic(ws.report_dir() / "summary.txt", report_text(rep));
        return rep;
    });
}

std::optional<ExperimentReport> run_experiment(const ExperimentConfig& cfg, const Workspace& ws,
                                               const RunOptions& opts, std::ostream& log) {
    cfg.validate();
    struct Step {
        const char* name;
        fs::path output;
        std::string stamp;
        fs::path stamp_dir;
    };
    const std::vector<Step> plan = {
        {"prepare", ws.manipulated_dir(cfg.manipulation), prepare_stamp(cfg), ws.corpus_index().parent_path()},
        {"extract", ws.feature_dir(cfg.spam, cfg.manipulation), extract_stamp(cfg),
         ws.feature_dir(cfg.spam, cfg.manipulation)},
        {"train", ws.model_dir(), train_stamp(cfg), ws.model_dir()},
        {"evaluate", ws.eval_records(), evaluate_stamp(cfg), ws.eval_records().parent_path()},
        {"attack", ws.attack_records(), attack_stamp(cfg), ws.attack_dir()},
        {"report", ws.report_dir(), {}, {}},
    };
    if (opts.dry_run) {
        log << "config valid; stage plan:\n";
        for (const auto& s : plan) {
            if (std::string(s.name) == "attack" && !opts.attack) continue;
            const bool cached = !s.stamp.empty() && stamp_matches(s.stamp_dir, s.stamp);
            log << "  " << std::left << std::setw(9) << s.name << s.output.string() << (cached ? "  (cached)" : "")
                << '\n';
        }
        return std::nullopt;
    }
    auto timed = [&log](const char* name, auto&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log << std::left << std::setw(9) << name << std::right << std::fixed << std::setprecision(1) << secs << " s\n";
    };
    timed("prepare", [&] { stage_prepare(cfg, ws); });
    timed("extract", [&] { stage_extract(cfg, ws); });
    timed("train", [&] { stage_train(cfg, ws); });
    timed("evaluate", [&] { stage_evaluate(cfg, ws); });
    if (opts.attack) timed("attack", [&] { stage_attack(cfg, ws); });
    ExperimentReport rep;
    timed("report", [&] { rep = stage_report(cfg, ws); });
    return rep;
}

}  // namespace onehalf
