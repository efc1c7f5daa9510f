#include "onehalf/spam.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "onehalf/error.hpp"
#include "onehalf/imgops.hpp"
#include "csv_util.hpp"

namespace onehalf {

std::string SpamConfig::key() const {
    return "spam-T" + std::to_string(truncation) +
           (normalization == Normalization::Conditional ? "-cond" : "-joint");
}

ResidualField residuals(const RasterImage& channel, Direction direction) {
    if (channel.channels() != 1) {
        throw InvalidArgument("residuals: expected a single-channel image");
    }
    const Step s = step_of(direction);
    const int w = channel.width();
    const int h = channel.height();
    if ((s.dx != 0 && w < 3) || (s.dy != 0 && h < 3)) {
        throw InvalidArgument("residuals: image too small along the residual direction");
    }
    ResidualField field;
    field.direction = direction;
    field.cols = w - std::abs(s.dx);
    field.rows = h - std::abs(s.dy);
    field.values.resize(static_cast<std::size_t>(field.cols) * field.rows);
    // anchor -> walk origin p, then residual I(p) - I(p + step)
    const int ox = s.dx < 0 ? 1 : 0;
    const int oy = s.dy < 0 ? 1 : 0;
    for (int y = 0; y < field.rows; ++y) {
        for (int x = 0; x < field.cols; ++x) {
            const int px = x + ox;
            const int py = y + oy;
            field.values[static_cast<std::size_t>(y) * field.cols + x] =
                int{channel.at(px, py)} - int{channel.at(px + s.dx, py + s.dy)};
        }
    }
    return field;
}

ResidualField truncate(ResidualField field, int truncation) {
    if (truncation < 1) throw InvalidArgument("truncate: T must be >= 1");
    for (int& v : field.values) v = std::clamp(v, -truncation, truncation);
    return field;
}

std::vector<std::int64_t> count_triples(const ResidualField& field, int truncation) {
    if (truncation < 1) throw InvalidArgument("count_triples: T must be >= 1");
    const int levels = 2 * truncation + 1;
    const Step s = step_of(field.direction);
    std::vector<std::int64_t> counts(static_cast<std::size_t>(levels) * levels * levels, 0);
    std::int64_t total = 0;
    for (int y = 0; y < field.rows; ++y) {
        const int y2 = y + 2 * s.dy;
        if (y2 < 0 || y2 >= field.rows) continue;
        for (int x = 0; x < field.cols; ++x) {
            const int x2 = x + 2 * s.dx;
            if (x2 < 0 || x2 >= field.cols) continue;
            const int u = field.at(x, y);
            const int v = field.at(x + s.dx, y + s.dy);
            const int w = field.at(x2, y2);
            if (std::max({std::abs(u), std::abs(v), std::abs(w)}) > truncation) {
                throw InvalidArgument("count_triples: residual field is not truncated at T");
            }
            ++counts[(static_cast<std::size_t>(u + truncation) * levels + (v + truncation)) * levels +
                     (w + truncation)];
            ++total;
        }
    }
    if (total == 0) throw InvalidArgument("transition_tensor: no residual triples available");
    return counts;
}

namespace {

std::vector<double> normalise(const std::vector<std::int64_t>& counts, const SpamConfig& cfg) {
    const int levels = cfg.levels();
    std::vector<double> out(counts.size());
    if (cfg.normalization == Normalization::Joint) {
        std::int64_t total = 0;
        for (auto c : counts) total += c;
        for (std::size_t i = 0; i < counts.size(); ++i) out[i] = tensor_entry(counts[i], total);
        return out;
    }
    for (std::size_t row = 0; row < counts.size() / levels; ++row) {
        std::int64_t total = 0;
        for (int w = 0; w < levels; ++w) total += counts[row * levels + w];
        for (int w = 0; w < levels; ++w) out[row * levels + w] = tensor_entry(counts[row * levels + w], total);
    }
    return out;
}

}  // namespace

std::vector<double> transition_tensor(const ResidualField& truncated, const SpamConfig& cfg) {
    return normalise(count_triples(truncated, cfg.truncation), cfg);
}

FeatureVector spam_features(const RasterImage& img, const SpamConfig& cfg, std::string source_id) {
    if (cfg.truncation < 1) throw InvalidArgument("spam_features: T must be >= 1");
    const RasterImage channel = luminance_channel(img);
    if (channel.width() < 4 || channel.height() < 4) {
        throw InvalidArgument("spam_features: image too small for second-order co-occurrences (need >= 4x4)");
    }
    FeatureVector fv;
    fv.source_id = std::move(source_id);
    fv.values.reserve(static_cast<std::size_t>(cfg.feature_size()));
    for (const auto& group : {kStraightDirections, kDiagonalDirections}) {
        std::array<std::vector<double>, 4> m;
        for (int d = 0; d < 4; ++d) {
            m[d] = transition_tensor(truncate(residuals(channel, group[d]), cfg.truncation), cfg);
        }
        for (std::size_t i = 0; i < m[0].size(); ++i) {
            fv.values.push_back(aggregate4(m[0][i], m[1][i], m[2][i], m[3][i]));
        }
    }
    return fv;
}

std::vector<std::string> feature_column_names(const SpamConfig& cfg) {
    std::vector<std::string> names;
    const int t = cfg.truncation;
    for (const char* prefix : {"hv", "dg"})
        for (int u = -t; u <= t; ++u)
            for (int v = -t; v <= t; ++v)
                for (int w = -t; w <= t; ++w)
                    names.push_back(std::string(prefix) + "_" + std::to_string(u) + "_" +
                                    std::to_string(v) + "_" + std::to_string(w));
    return names;
}

void write_feature_csv(const std::filesystem::path& path, std::span<const FeatureRecord> records,
                       const SpamConfig& cfg) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << "source_id,label";
    for (const auto& name : feature_column_names(cfg)) out << ',' << name;
    out << '\n';
    const auto width = static_cast<std::size_t>(cfg.feature_size());
    for (const auto& r : records) {
        if (r.values.size() != width) {
            throw ShapeMismatch("feature record '" + r.source_id + "' has wrong length");
        }
        out << r.source_id << ',' << to_string(r.label);
        for (double v : r.values) out << ',' << csv::format_double(v);
        out << '\n';
    }
    if (!out) throw Error("short write to '" + path.string() + "'");
}

std::vector<FeatureRecord> read_feature_csv(const std::filesystem::path& path, const SpamConfig& cfg) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty feature file '" + path.string() + "'");
    const auto header = csv::split(line);
    const auto names = feature_column_names(cfg);
    if (header.size() != names.size() + 2 || header[0] != "source_id" || header[1] != "label" ||
        !std::equal(names.begin(), names.end(), header.begin() + 2)) {
        throw ParseError("feature file '" + path.string() + "' does not match " + cfg.key());
    }
    std::vector<FeatureRecord> records;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = csv::split(line);
        if (fields.size() != header.size()) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": wrong column count");
        }
        FeatureRecord r;
        r.source_id = fields[0];
        r.label = parse_image_class(fields[1]);
        r.values.reserve(names.size());
        for (std::size_t i = 2; i < fields.size(); ++i) r.values.push_back(csv::parse_double(fields[i]));
        records.push_back(std::move(r));
    }
    return records;
}

// ---------------------------------------------------------------------------
// IncrementalSpam

IncrementalSpam::IncrementalSpam(const RasterImage& channel, const SpamConfig& cfg)
    : cfg_(cfg), width_(channel.width()), height_(channel.height()) {
    if (channel.channels() != 1) throw InvalidArgument("IncrementalSpam: expected a single channel");
    if (width_ < 4 || height_ < 4) {
        throw InvalidArgument("IncrementalSpam: image too small for second-order co-occurrences (need >= 4x4)");
    }
    pixels_.assign(channel.data().begin(), channel.data().end());
    const int levels = cfg_.levels();
    for (int d = 0; d < 8; ++d) {
        counts_[d].assign(static_cast<std::size_t>(cfg_.tensor_size()), 0);
        row_totals_[d].assign(static_cast<std::size_t>(levels) * levels, 0);
    }
    features_.assign(static_cast<std::size_t>(cfg_.feature_size()), 0.0);
    row_dirty_.assign(2 * static_cast<std::size_t>(levels) * levels, 0);

    // Seed counts by walking every valid 4-pixel chain once; the chain
    // starting at p0 is visited when (x,y) == p0 with k == 0.
    for (int d = 0; d < 8; ++d) {
        const Step s = step_of(d < 4 ? kStraightDirections[d] : kDiagonalDirections[d - 4]);
        for (int y = 0; y < height_; ++y) {
            for (int x = 0; x < width_; ++x) {
                const int x3 = x + 3 * s.dx;
                const int y3 = y + 3 * s.dy;
                if (x3 < 0 || x3 >= width_ || y3 < 0 || y3 >= height_) continue;
                const int t = cfg_.truncation;
                const int p0 = pixels_[index(x, y)];
                const int p1 = pixels_[index(x + s.dx, y + s.dy)];
                const int p2 = pixels_[index(x + 2 * s.dx, y + 2 * s.dy)];
                const int p3 = pixels_[index(x3, y3)];
                const int u = std::clamp(p0 - p1, -t, t) + t;
                const int v = std::clamp(p1 - p2, -t, t) + t;
                const int w = std::clamp(p2 - p3, -t, t) + t;
                ++counts_[d][(static_cast<std::size_t>(u) * levels + v) * levels + w];
                ++row_totals_[d][static_cast<std::size_t>(u) * levels + v];
                ++triple_totals_[d];
            }
        }
    }
    for (int g = 0; g < 2; ++g)
        for (int r = 0; r < levels * levels; ++r) dirty_rows_.push_back(g * levels * levels + r);
    refresh_rows();
}

void IncrementalSpam::walk_update(int x, int y, int sign) {
    const int t = cfg_.truncation;
    const int levels = cfg_.levels();
    for (int d = 0; d < 8; ++d) {
        const Step s = step_of(d < 4 ? kStraightDirections[d] : kDiagonalDirections[d - 4]);
        const int group = d < 4 ? 0 : 1;
        for (int k = 0; k < 4; ++k) {
            const int x0 = x - k * s.dx;
            const int y0 = y - k * s.dy;
            const int x3 = x0 + 3 * s.dx;
            const int y3 = y0 + 3 * s.dy;
            if (x0 < 0 || x0 >= width_ || y0 < 0 || y0 >= height_ || x3 < 0 || x3 >= width_ ||
                y3 < 0 || y3 >= height_) {
                continue;
            }
            const int p0 = pixels_[index(x0, y0)];
            const int p1 = pixels_[index(x0 + s.dx, y0 + s.dy)];
            const int p2 = pixels_[index(x0 + 2 * s.dx, y0 + 2 * s.dy)];
            const int p3 = pixels_[index(x3, y3)];
            const int u = std::clamp(p0 - p1, -t, t) + t;
            const int v = std::clamp(p1 - p2, -t, t) + t;
            const int w = std::clamp(p2 - p3, -t, t) + t;
            const int row = u * levels + v;
            counts_[d][static_cast<std::size_t>(row) * levels + w] += sign;
            row_totals_[d][static_cast<std::size_t>(row)] += sign;
            const std::size_t flag = static_cast<std::size_t>(group) * levels * levels + row;
            if (!row_dirty_[flag]) {
                row_dirty_[flag] = 1;
                dirty_rows_.push_back(static_cast<int>(flag));
            }
        }
    }
}

void IncrementalSpam::refresh_rows() {
    const int levels = cfg_.levels();
    const int plane = levels * levels;
    const bool joint = cfg_.normalization == Normalization::Joint;
    std::sort(dirty_rows_.begin(), dirty_rows_.end());
    changed_.clear();
    for (int flag : dirty_rows_) {
        row_dirty_[static_cast<std::size_t>(flag)] = 0;
        const int group = flag / plane;
        const int row = flag % plane;
        const int d0 = group * 4;
        for (int w = 0; w < levels; ++w) {
            const std::size_t cell = static_cast<std::size_t>(row) * levels + w;
            double e[4];
            for (int k = 0; k < 4; ++k) {
                const auto den = joint ? triple_totals_[d0 + k] : row_totals_[d0 + k][row];
                e[k] = tensor_entry(counts_[d0 + k][cell], den);
            }
            const int feature = group * cfg_.tensor_size() + static_cast<int>(cell);
            features_[static_cast<std::size_t>(feature)] = aggregate4(e[0], e[1], e[2], e[3]);
            changed_.push_back(feature);
        }
    }
    dirty_rows_.clear();
}

std::span<const int> IncrementalSpam::set_pixel(int x, int y, std::uint8_t value) {
    changed_.clear();
    if (x < 0 || x >= width_ || y < 0 || y >= height_) {
        throw InvalidArgument("IncrementalSpam::set_pixel: coordinates outside the image");
    }
    if (pixels_[index(x, y)] == value) return changed_;
    walk_update(x, y, -1);
    pixels_[index(x, y)] = value;
    walk_update(x, y, +1);
    refresh_rows();
    return changed_;
}

RasterImage IncrementalSpam::channel() const {
    return RasterImage(width_, height_, 1, pixels_);
}

}  // namespace onehalf
