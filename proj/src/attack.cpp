#include "onehalf/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "onehalf/error.hpp"
#include "onehalf/imgops.hpp"
#include "onehalf/metrics.hpp"

namespace onehalf {

void AttackConfig::validate() const {
    if (!(rho >= 0.0)) throw InvalidArgument("attack: rho must be >= 0");
    if (!(pixel_fraction > 0.0 && pixel_fraction <= 1.0)) {
        throw InvalidArgument("attack: pixel_fraction must lie in (0,1]");
    }
    if (step < 1 || step > 255) throw InvalidArgument("attack: step must lie in [1,255]");
    if (max_iters < 0) throw InvalidArgument("attack: max_iters must be >= 0");
}

std::string to_string(TargetKind kind) {
    return kind == TargetKind::TwoClassOnly ? "2c" : "15c";
}

TargetKind parse_target_kind(const std::string& name) {
    if (name == "2c") return TargetKind::TwoClassOnly;
    if (name == "15c") return TargetKind::FullComposite;
    throw InvalidArgument("unknown attack target '" + name + "' (expected 2c or 15c)");
}

double AttackTarget::score(std::span<const double> features) const {
    if (!model) throw InvalidArgument("attack target has no model");
    if (kind == TargetKind::TwoClassOnly) return decision_value(model->two_class, features);
    return predict_15c(*model, features).f;
}

double AttackTarget::score(const RasterImage& img) const {
    return score(spam_features(img, spam).values);
}

double SensitivityMap::gain(std::size_t i) const noexcept {
    return std::max({up[i], down[i], 0.0});
}

int SensitivityMap::direction(std::size_t i) const noexcept {
    if (up[i] <= 0.0 && down[i] <= 0.0) return 0;
    return up[i] >= down[i] ? 1 : -1;
}

namespace {

std::uint8_t moved(std::uint8_t v, int delta) {
    return static_cast<std::uint8_t>(std::clamp(static_cast<int>(v) + delta, 0, 255));
}

// Keeps per-support-vector block partials of every model the target reads,
// so a single-pixel trial only recomputes the blocks whose features changed.
// Sums run in the same order as decision_value, so trial scores equal full
// recomputation bit for bit.
class ScoreEngine {
public:
    ScoreEngine(const AttackTarget& target, const RasterImage& channel)
        : target_(target), spam_(channel, target.spam) {
        if (!target.model) throw InvalidArgument("attack target has no model");
        const int dim = target.spam.feature_size();
        models_.push_back({&target.model->two_class, {}});
        if (target.kind == TargetKind::FullComposite) {
            models_.push_back({&target.model->oc_pristine, {}});
            models_.push_back({&target.model->oc_manipulated, {}});
        }
        blocks_ = (dim + kDistanceBlock - 1) / kDistanceBlock;
        const auto x = spam_.features();
        for (auto& m : models_) {
            if (m.model->dim != dim) {
                throw ShapeMismatch("attack: model expects " + std::to_string(m.model->dim) +
                                    " features, SPAM configuration yields " + std::to_string(dim));
            }
            m.partials.resize(m.model->sv_count() * static_cast<std::size_t>(blocks_));
            for (std::size_t i = 0; i < m.model->sv_count(); ++i)
                for (int b = 0; b < blocks_; ++b)
                    m.partials[i * blocks_ + b] = block_partial(m.model->support_vector(i), x, b);
        }
        dirty_.assign(static_cast<std::size_t>(blocks_), 0);
        base_ = evaluate();
    }

    double base() const noexcept { return base_; }
    std::uint8_t pixel(int x, int y) const noexcept { return spam_.pixel(x, y); }

    /// Score with pixel (x,y) set to `value`; the state is left unchanged.
    double trial(int x, int y, std::uint8_t value) {
        const std::uint8_t old = spam_.pixel(x, y);
        if (old == value) return base_;
        for (int idx : spam_.set_pixel(x, y, value)) dirty_[static_cast<std::size_t>(idx / kDistanceBlock)] = 1;
        const double s = evaluate();
        std::fill(dirty_.begin(), dirty_.end(), 0);
        spam_.set_pixel(x, y, old);
        return s;
    }

private:
    struct ModelCache {
        const SvmModel* model;
        std::vector<double> partials;  // sv x block
    };

    double decision(const ModelCache& m, std::span<const double> x) const {
        const SvmModel& model = *m.model;
        double s = 0.0;
        for (std::size_t i = 0; i < model.sv_count(); ++i) {
            const double* cached = m.partials.data() + i * blocks_;
            const auto sv = model.support_vector(i);
            double dist = 0.0;
            for (int b = 0; b < blocks_; ++b) dist += dirty_[b] ? block_partial(sv, x, b) : cached[b];
            s += model.coefficients[i] * std::exp(-model.gamma * dist);
        }
        return s + model.bias;
    }

    double evaluate() const {
        const auto x = spam_.features();
        if (target_.kind == TargetKind::TwoClassOnly) return decision(models_[0], x);
        const std::array<double, 3> d{decision(models_[0], x), decision(models_[1], x), decision(models_[2], x)};
        return decision_value(target_.model->combiner, d);
    }

    const AttackTarget& target_;
    IncrementalSpam spam_;
    std::vector<ModelCache> models_;
    int blocks_ = 0;
    std::vector<char> dirty_;
    double base_ = 0.0;
};

struct Move {
    std::size_t index;
    std::uint8_t value;
};

RasterImage apply_moves(const RasterImage& channel, std::span<const Move> moves) {
    RasterImage out = channel;
    auto px = out.data();
    for (const auto& m : moves) px[m.index] = m.value;
    return out;
}

}  // namespace

SensitivityMap pixel_gradient(const AttackTarget& target, const RasterImage& img, int step) {
    if (step < 1 || step > 255) throw InvalidArgument("pixel_gradient: step must lie in [1,255]");
    const RasterImage channel = luminance_channel(img);
    ScoreEngine engine(target, channel);
    SensitivityMap map;
    map.width = channel.width();
    map.height = channel.height();
    map.step = step;
    map.base_score = engine.base();
    map.up.assign(channel.pixel_count(), 0.0);
    map.down.assign(channel.pixel_count(), 0.0);
    for (int y = 0; y < channel.height(); ++y) {
        for (int x = 0; x < channel.width(); ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * channel.width() + x;
            const std::uint8_t v = engine.pixel(x, y);
            if (const auto hi = moved(v, step); hi != v) map.up[i] = engine.trial(x, y, hi) - map.base_score;
            if (const auto lo = moved(v, -step); lo != v) map.down[i] = engine.trial(x, y, lo) - map.base_score;
        }
    }
    return map;
}

StepResult attack_step(const AttackTarget& target, const RasterImage& channel, const SensitivityMap& map,
                       const AttackConfig& cfg) {
    cfg.validate();
    if (channel.channels() != 1) throw InvalidArgument("attack_step: expects a single-channel image");
    if (map.width != channel.width() || map.height != channel.height() ||
        map.up.size() != channel.pixel_count() || map.down.size() != channel.pixel_count()) {
        throw ShapeMismatch("attack_step: sensitivity map does not match the image");
    }
    StepResult r;
    r.image = channel;
    r.score_before = target.score(channel);
    r.score_after = r.score_before;

    const std::size_t n = channel.pixel_count();
    std::vector<std::uint64_t> tie_rank(n);
    std::iota(tie_rank.begin(), tie_rank.end(), std::uint64_t{0});
    std::shuffle(tie_rank.begin(), tie_rank.end(), std::mt19937_64(cfg.seed));

    const auto px = channel.data();
    std::vector<Move> ranked;
    for (std::size_t i = 0; i < n; ++i) {
        const int dir = map.direction(i);
        if (dir == 0) continue;
        const std::uint8_t to = moved(px[i], dir * cfg.step);
        if (to == px[i]) continue;  // already at the range limit
        ranked.push_back({i, to});
    }
    std::sort(ranked.begin(), ranked.end(), [&](const Move& a, const Move& b) {
        const double ga = map.gain(a.index), gb = map.gain(b.index);
        if (ga != gb) return ga > gb;
        return tie_rank[a.index] < tie_rank[b.index];
    });
    if (ranked.empty()) return r;

    const auto budget = static_cast<std::size_t>(std::floor(cfg.pixel_fraction * static_cast<double>(n)));
    std::size_t k = std::min(ranked.size(), std::max<std::size_t>(1, budget));
    auto score_prefix = [&](std::size_t m) {
        return target.score(apply_moves(channel, std::span(ranked).first(m)));
    };
    while (k > 0) {
        const double s = score_prefix(k);
        if (s > cfg.rho && r.score_before <= cfg.rho) {
            // shortest prefix that still crosses: lo never crosses, hi does
            std::size_t lo = 0, hi = k;
            double hi_score = s;
            while (hi - lo > 1) {
                const std::size_t mid = lo + (hi - lo) / 2;
                const double sm = score_prefix(mid);
                if (sm > cfg.rho) {
                    hi = mid;
                    hi_score = sm;
                } else {
                    lo = mid;
                }
            }
            k = hi;
            r.score_after = hi_score;
        } else if (s > r.score_before) {
            r.score_after = s;
        } else {
            k /= 2;
            continue;
        }
        r.image = apply_moves(channel, std::span(ranked).first(k));
        r.accepted = true;
        r.pixels_changed = static_cast<int>(k);
        return r;
    }
    return r;
}

AttackResult run_attack(const AttackTarget& target, const RasterImage& img, const AttackConfig& cfg) {
    cfg.validate();
    if (!target.model) throw InvalidArgument("attack target has no model");
    const bool colour = img.channels() == 3;
    VDecomposition dec;
    if (colour) dec = rgb_to_v(img);
    RasterImage channel = colour ? dec.v : img;

    AttackResult res;
    res.initial_score = target.score(channel);
    double score = res.initial_score;
    while (score <= cfg.rho && res.iterations < cfg.max_iters) {
        const SensitivityMap map = pixel_gradient(target, channel, cfg.step);
        StepResult step = attack_step(target, channel, map, cfg);
        if (!step.accepted) {
            res.stalled = true;
            break;
        }
        channel = std::move(step.image);
        score = step.score_after;
        ++res.iterations;
    }

    res.attacked = colour ? v_to_rgb(channel, dec.hs) : channel;
    if (res.iterations == 0) res.attacked = img;
    res.final_scores = predict_15c(*target.model, spam_features(res.attacked, target.spam).values);
    res.final_score = target.kind == TargetKind::TwoClassOnly ? res.final_scores.d[0] : res.final_scores.f;
    res.success = res.final_score > cfg.rho;
    res.mse = mse(res.attacked, img);
    res.pixel_change_fraction = pixel_change_fraction(res.attacked, img);
    return res;
}

}  // namespace onehalf
