#include "onehalf/svm.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <list>
#include <numeric>
#include <sstream>

#include "csv_util.hpp"
#include "onehalf/error.hpp"

namespace onehalf {

// ---------------------------------------------------------------------------
// Kernel

double block_partial(std::span<const double> a, std::span<const double> b, int block) noexcept {
    const std::size_t begin = static_cast<std::size_t>(block) * kDistanceBlock;
    const std::size_t end = std::min(a.size(), begin + kDistanceBlock);
    double s = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeMismatch("squared_distance: dimensions " + std::to_string(a.size()) + " and " +
                            std::to_string(b.size()) + " differ");
    }
    const int blocks = static_cast<int>((a.size() + kDistanceBlock - 1) / kDistanceBlock);
    double total = 0.0;
    for (int blk = 0; blk < blocks; ++blk) total += block_partial(a, b, blk);
    return total;
}

double rbf_kernel(std::span<const double> a, std::span<const double> b, double gamma) {
    if (!(gamma > 0.0)) throw InvalidArgument("rbf_kernel: gamma must be positive");
    return std::exp(-gamma * squared_distance(a, b));
}

std::string to_string(SvmKind kind) {
    return kind == SvmKind::TwoClass ? "two_class" : "one_class";
}

DistanceTable::DistanceTable(const FeatureMatrix& rows, const FeatureMatrix& cols)
    : rows_(rows.rows()), cols_(cols.rows()) {
    if (rows.cols() != cols.cols() && rows_ > 0 && cols_ > 0) {
        throw ShapeMismatch("DistanceTable: feature dimensions differ");
    }
    data_.resize(static_cast<std::size_t>(rows_) * cols_);
    const bool symmetric = &rows == &cols;
    for (int i = 0; i < rows_; ++i) {
        for (int j = symmetric ? i : 0; j < cols_; ++j) {
            const double d = squared_distance(rows.row(i), cols.row(j));
            data_[static_cast<std::size_t>(i) * cols_ + j] = d;
            if (symmetric) data_[static_cast<std::size_t>(j) * cols_ + i] = d;
        }
    }
}

DistanceTable DistanceTable::subset(std::span<const int> row_idx, std::span<const int> col_idx) const {
    DistanceTable out;
    out.rows_ = static_cast<int>(row_idx.size());
    out.cols_ = static_cast<int>(col_idx.size());
    out.data_.reserve(row_idx.size() * col_idx.size());
    for (int i : row_idx)
        for (int j : col_idx) out.data_.push_back((*this)(i, j));
    return out;
}

// ---------------------------------------------------------------------------
// SMO solver

namespace {

constexpr double kTau = 1e-12;

// Q_ij = y_i y_j K_ij, rows computed on demand with an LRU row cache.
class QMatrix {
public:
    QMatrix(const FeatureMatrix& x, const std::vector<signed char>& y, double gamma,
            const DistanceTable* dist, std::size_t cache_bytes)
        : x_(x), y_(y), gamma_(gamma), dist_(dist), n_(x.rows()) {
        const std::size_t row_bytes = static_cast<std::size_t>(std::max(n_, 1)) * sizeof(double);
        capacity_ = std::max<std::size_t>(2, cache_bytes / row_bytes);
        capacity_ = std::min<std::size_t>(capacity_, static_cast<std::size_t>(n_));
        slot_of_.assign(static_cast<std::size_t>(n_), -1);
        where_.resize(static_cast<std::size_t>(n_));
    }

    const double* row(int i) {
        if (slot_of_[i] >= 0) {
            lru_.splice(lru_.end(), lru_, where_[i]);
            return slots_[static_cast<std::size_t>(slot_of_[i])].data();
        }
        int slot;
        if (slots_.size() < capacity_) {
            slot = static_cast<int>(slots_.size());
            slots_.emplace_back(static_cast<std::size_t>(n_));
        } else {
            const int victim = lru_.front();
            lru_.pop_front();
            slot = slot_of_[victim];
            slot_of_[victim] = -1;
        }
        auto& r = slots_[static_cast<std::size_t>(slot)];
        for (int j = 0; j < n_; ++j) {
            const double d2 = dist_ ? (*dist_)(i, j) : squared_distance(x_.row(i), x_.row(j));
            r[j] = y_[i] * y_[j] * std::exp(-gamma_ * d2);
        }
        slot_of_[i] = slot;
        where_[i] = lru_.insert(lru_.end(), i);
        return r.data();
    }

private:
    const FeatureMatrix& x_;
    const std::vector<signed char>& y_;
    double gamma_;
    const DistanceTable* dist_;
    int n_;
    std::size_t capacity_;
    std::vector<std::vector<double>> slots_;
    std::vector<int> slot_of_;
    std::list<int> lru_;
    std::vector<std::list<int>::iterator> where_;
};

struct DualResult {
    std::vector<double> alpha;
    double rho = 0.0;
    double objective = 0.0;
    long iterations = 0;
    double violation = 0.0;
};

// min 1/2 a'Qa + p'a  s.t. y'a = const, 0 <= a <= c. Second-order working
// set selection, no shrinking. Q has unit diagonal (RBF).
DualResult smo(QMatrix& q, const std::vector<signed char>& y, const std::vector<double>& p, double c,
               std::vector<double> alpha, double tolerance, long max_iterations) {
    const int n = static_cast<int>(y.size());
    std::vector<double> grad(p);
    for (int i = 0; i < n; ++i) {
        if (alpha[i] == 0.0) continue;
        const double* qi = q.row(i);
        for (int k = 0; k < n; ++k) grad[k] += alpha[i] * qi[k];
    }
    auto upper = [&](int t) { return alpha[t] >= c; };
    auto lower = [&](int t) { return alpha[t] <= 0.0; };

    DualResult res;
    long iter = 0;
    double violation = std::numeric_limits<double>::infinity();
    while (true) {
        // working set selection
        double gmax = -std::numeric_limits<double>::infinity();
        double gmax2 = -std::numeric_limits<double>::infinity();
        int i = -1;
        for (int t = 0; t < n; ++t) {
            if (y[t] == +1) {
                if (!upper(t) && -grad[t] >= gmax) { gmax = -grad[t]; i = t; }
            } else {
                if (!lower(t) && grad[t] >= gmax) { gmax = grad[t]; i = t; }
            }
        }
        int j = -1;
        double best = std::numeric_limits<double>::infinity();
        const double* qi = i >= 0 ? q.row(i) : nullptr;
        for (int t = 0; t < n; ++t) {
            if (y[t] == +1) {
                if (lower(t)) continue;
                const double diff = gmax + grad[t];
                gmax2 = std::max(gmax2, grad[t]);
                if (diff > 0.0 && qi) {
                    const double quad = 2.0 - 2.0 * y[i] * qi[t];
                    const double obj = -(diff * diff) / (quad > 0.0 ? quad : kTau);
                    if (obj <= best) { best = obj; j = t; }
                }
            } else {
                if (upper(t)) continue;
                const double diff = gmax - grad[t];
                gmax2 = std::max(gmax2, -grad[t]);
                if (diff > 0.0 && qi) {
                    const double quad = 2.0 + 2.0 * y[i] * qi[t];
                    const double obj = -(diff * diff) / (quad > 0.0 ? quad : kTau);
                    if (obj <= best) { best = obj; j = t; }
                }
            }
        }
        violation = gmax + gmax2;
        if (violation < tolerance || j == -1) break;
        if (iter >= max_iterations) {
            throw ConvergenceError("SMO did not reach tolerance " + std::to_string(tolerance) +
                                       " within " + std::to_string(max_iterations) +
                                       " iterations (violation " + std::to_string(violation) + ")",
                                   iter, violation);
        }
        ++iter;

        qi = q.row(i);
        const double* qj = q.row(j);
        const double old_i = alpha[i];
        const double old_j = alpha[j];
        if (y[i] != y[j]) {
            double quad = 2.0 + 2.0 * qi[j];
            if (quad <= 0.0) quad = kTau;
            const double delta = (-grad[i] - grad[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0.0) {
                if (alpha[j] < 0.0) { alpha[j] = 0.0; alpha[i] = diff; }
            } else {
                if (alpha[i] < 0.0) { alpha[i] = 0.0; alpha[j] = -diff; }
            }
            if (diff > 0.0) {
                if (alpha[i] > c) { alpha[i] = c; alpha[j] = c - diff; }
            } else {
                if (alpha[j] > c) { alpha[j] = c; alpha[i] = c + diff; }
            }
        } else {
            double quad = 2.0 - 2.0 * qi[j];
            if (quad <= 0.0) quad = kTau;
            const double delta = (grad[i] - grad[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > c) {
                if (alpha[i] > c) { alpha[i] = c; alpha[j] = sum - c; }
            } else {
                if (alpha[j] < 0.0) { alpha[j] = 0.0; alpha[i] = sum; }
            }
            if (sum > c) {
                if (alpha[j] > c) { alpha[j] = c; alpha[i] = sum - c; }
            } else {
                if (alpha[i] < 0.0) { alpha[i] = 0.0; alpha[j] = sum; }
            }
        }
        const double di = alpha[i] - old_i;
        const double dj = alpha[j] - old_j;
        for (int k = 0; k < n; ++k) grad[k] += qi[k] * di + qj[k] * dj;
    }

    // rho: mean of y_i G_i over free variables, else midpoint of the feasible interval
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    int n_free = 0;
    for (int t = 0; t < n; ++t) {
        const double yg = y[t] * grad[t];
        if (upper(t)) {
            if (y[t] == -1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else if (lower(t)) {
            if (y[t] == +1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    res.rho = n_free > 0 ? sum_free / n_free : (ub + lb) / 2.0;

    double obj = 0.0;
    for (int t = 0; t < n; ++t) obj += alpha[t] * (grad[t] + p[t]);
    res.objective = obj / 2.0;
    res.alpha = std::move(alpha);
    res.iterations = iter;
    res.violation = violation;
    return res;
}

void check_training_set(const TrainingSet& data, const HyperParams& hp, const DistanceTable* dist) {
    if (data.samples.rows() == 0) throw InvalidArgument("training set is empty");
    if (!(hp.gamma > 0.0) || !std::isfinite(hp.gamma)) throw InvalidArgument("gamma must be positive");
    if (dist && (dist->rows() != data.samples.rows() || dist->cols() != data.samples.rows())) {
        throw ShapeMismatch("distance table does not match the training set");
    }
}

SvmSolution build_solution(const TrainingSet& data, SvmKind kind, const HyperParams& hp,
                           const TrainOptions& opts, const std::vector<signed char>& y,
                           const DualResult& dual, double scale) {
    SvmSolution sol;
    sol.model.kind = kind;
    sol.model.gamma = hp.gamma;
    sol.model.positive_meaning = opts.positive_meaning;
    sol.model.dim = data.samples.cols();
    sol.model.bias = -dual.rho / scale;
    sol.alpha.resize(dual.alpha.size());
    for (std::size_t i = 0; i < dual.alpha.size(); ++i) {
        sol.alpha[i] = dual.alpha[i] / scale;
        if (dual.alpha[i] > 0.0) {
            sol.sv_indices.push_back(static_cast<int>(i));
            sol.model.coefficients.push_back(y[i] * sol.alpha[i]);
            const auto row = data.samples.row(static_cast<int>(i));
            sol.model.support_vectors.insert(sol.model.support_vectors.end(), row.begin(), row.end());
        }
    }
    sol.objective = dual.objective / (scale * scale);
    sol.iterations = dual.iterations;
    sol.max_violation = dual.violation;
    return sol;
}

}  // namespace

SvmSolution solve_two_class(const TrainingSet& data, const HyperParams& hp, const TrainOptions& opts,
                            const DistanceTable* distances) {
    check_training_set(data, hp, distances);
    if (!(hp.c_or_nu > 0.0)) throw InvalidArgument("two-class training: C must be positive");
    const int n = data.samples.rows();
    if (static_cast<int>(data.labels.size()) != n) {
        throw ShapeMismatch("two-class training: one label per sample required");
    }
    std::vector<signed char> y(static_cast<std::size_t>(n));
    bool pos = false, neg = false;
    for (int i = 0; i < n; ++i) {
        if (data.labels[i] == 1) { y[i] = 1; pos = true; }
        else if (data.labels[i] == -1) { y[i] = -1; neg = true; }
        else throw InvalidArgument("two-class training: labels must be +1 or -1");
    }
    if (!pos || !neg) throw InvalidArgument("two-class training: both classes must be present");

    QMatrix q(data.samples, y, hp.gamma, distances, opts.cache_bytes);
    const std::vector<double> p(static_cast<std::size_t>(n), -1.0);
    const DualResult dual = smo(q, y, p, hp.c_or_nu, std::vector<double>(static_cast<std::size_t>(n), 0.0),
                                opts.tolerance, opts.max_iterations);
    return build_solution(data, SvmKind::TwoClass, hp, opts, y, dual, 1.0);
}

SvmModel train_two_class(const TrainingSet& data, const HyperParams& hp, const TrainOptions& opts,
                         const DistanceTable* distances) {
    return solve_two_class(data, hp, opts, distances).model;
}

SvmSolution solve_one_class(const TrainingSet& data, const HyperParams& hp, const TrainOptions& opts,
                            const DistanceTable* distances) {
    check_training_set(data, hp, distances);
    const double nu = hp.c_or_nu;
    if (!(nu > 0.0 && nu <= 1.0)) throw InvalidArgument("one-class training: nu must lie in (0,1]");
    const int n = data.samples.rows();
    const std::vector<signed char> y(static_cast<std::size_t>(n), 1);

    // Solved in the unit-box scaling (0 <= a <= 1, sum a = nu n), then
    // divided by nu n so that the coefficients sum to one.
    const double total = nu * n;
    std::vector<double> alpha(static_cast<std::size_t>(n), 0.0);
    const int full = static_cast<int>(total);
    for (int i = 0; i < full; ++i) alpha[i] = 1.0;
    if (full < n) alpha[full] = total - full;

    QMatrix q(data.samples, y, hp.gamma, distances, opts.cache_bytes);
    const std::vector<double> p(static_cast<std::size_t>(n), 0.0);
    const DualResult dual = smo(q, y, p, 1.0, std::move(alpha), opts.tolerance, opts.max_iterations);
    return build_solution(data, SvmKind::OneClass, hp, opts, y, dual, total);
}

SvmModel train_one_class(const TrainingSet& data, const HyperParams& hp, const TrainOptions& opts,
                         const DistanceTable* distances) {
    return solve_one_class(data, hp, opts, distances).model;
}

// ---------------------------------------------------------------------------
// Evaluation

double decision_value(const SvmModel& model, std::span<const double> x) {
    if (static_cast<int>(x.size()) != model.dim) {
        throw ShapeMismatch("decision_value: input has " + std::to_string(x.size()) +
                            " entries, model expects " + std::to_string(model.dim));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < model.sv_count(); ++i) {
        s += model.coefficients[i] * std::exp(-model.gamma * squared_distance(model.support_vector(i), x));
    }
    return s + model.bias;
}

std::vector<double> decision_values(const SvmModel& model, const FeatureMatrix& xs) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(xs.rows()));
    for (int i = 0; i < xs.rows(); ++i) out.push_back(decision_value(model, xs.row(i)));
    return out;
}

double decision_value_from_table(const SvmSolution& sol, const DistanceTable& table, int col) {
    const auto& m = sol.model;
    double s = 0.0;
    for (std::size_t k = 0; k < m.sv_count(); ++k) {
        s += m.coefficients[k] * std::exp(-m.gamma * table(sol.sv_indices[k], col));
    }
    return s + m.bias;
}

std::vector<double> decision_gradient(const SvmModel& model, std::span<const double> x) {
    if (static_cast<int>(x.size()) != model.dim) throw ShapeMismatch("decision_gradient: dimension mismatch");
    std::vector<double> g(x.size(), 0.0);
    for (std::size_t i = 0; i < model.sv_count(); ++i) {
        const auto sv = model.support_vector(i);
        const double w = model.coefficients[i] * std::exp(-model.gamma * squared_distance(sv, x)) *
                         (-2.0 * model.gamma);
        for (std::size_t k = 0; k < x.size(); ++k) g[k] += w * (x[k] - sv[k]);
    }
    return g;
}

void SvmModel::validate() const {
    if (dim <= 0) throw InvalidArgument("SVM model: dimension must be positive");
    if (coefficients.empty()) throw InvalidArgument("SVM model: no support vectors");
    if (support_vectors.size() != coefficients.size() * static_cast<std::size_t>(dim)) {
        throw InvalidArgument("SVM model: support vector storage does not match count x dim");
    }
    if (!(gamma > 0.0) || !std::isfinite(gamma) || !std::isfinite(bias)) {
        throw InvalidArgument("SVM model: gamma/bias not finite");
    }
    double sum = 0.0, mass = 0.0;
    for (double c : coefficients) {
        if (!std::isfinite(c)) throw InvalidArgument("SVM model: non-finite coefficient");
        if (kind == SvmKind::OneClass && c < 0.0) throw InvalidArgument("SVM model: negative one-class coefficient");
        sum += c;
        mass += std::abs(c);
    }
    const double target = kind == SvmKind::OneClass ? 1.0 : 0.0;
    if (std::abs(sum - target) > 1e-9 * std::max(1.0, mass)) {
        throw InvalidArgument("SVM model: coefficients violate the equality constraint");
    }
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr const char* kMagic = "onehalf-svm";
constexpr int kFormatVersion = 1;

std::string crc_hex(const std::string& body) {
    const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()));
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
    return buf;
}

// Reads "<key> <value>" and returns value.
std::string header_field(std::istream& in, const std::string& key) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("model: truncated header (missing '" + key + "')");
    if (line.rfind(key + ' ', 0) != 0) throw ParseError("model: malformed field, expected '" + key + "'");
    return line.substr(key.size() + 1);
}

}  // namespace

std::string serialize(const SvmModel& model) {
    model.validate();
    std::string body;
    for (std::size_t i = 0; i < model.sv_count(); ++i) {
        body += csv::format_double(model.coefficients[i]);
        for (double v : model.support_vector(i)) {
            body += ' ';
            body += csv::format_double(v);
        }
        body += '\n';
    }
    std::ostringstream os;
    os << kMagic << ' ' << kFormatVersion << '\n'
       << "kind " << to_string(model.kind) << '\n'
       << "positive " << to_string(model.positive_meaning) << '\n'
       << "dim " << model.dim << '\n'
       << "gamma " << csv::format_double(model.gamma) << '\n'
       << "bias " << csv::format_double(model.bias) << '\n'
       << "support_vectors " << model.sv_count() << '\n'
       << "crc32 " << crc_hex(body) << '\n'
       << "body\n"
       << body;
    return os.str();
}

SvmModel deserialize(const std::string& bytes) {
    std::istringstream in(bytes);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("model: empty input");
    const std::string magic = std::string(kMagic) + ' ';
    if (line.rfind(magic, 0) != 0) throw ParseError("model: not an onehalf SVM model");
    if (csv::parse_int(line.substr(magic.size())) != kFormatVersion) {
        throw ParseError("model: version mismatch (file " + line.substr(magic.size()) + ", reader " +
                         std::to_string(kFormatVersion) + ")");
    }
    SvmModel m;
    const std::string kind = header_field(in, "kind");
    if (kind == "two_class") m.kind = SvmKind::TwoClass;
    else if (kind == "one_class") m.kind = SvmKind::OneClass;
    else throw ParseError("model: malformed field 'kind'");
    m.positive_meaning = parse_image_class(header_field(in, "positive"));
    m.dim = static_cast<int>(csv::parse_int(header_field(in, "dim")));
    m.gamma = csv::parse_double(header_field(in, "gamma"));
    m.bias = csv::parse_double(header_field(in, "bias"));
    const long long count = csv::parse_int(header_field(in, "support_vectors"));
    const std::string crc = header_field(in, "crc32");
    if (!std::getline(in, line) || line != "body") throw ParseError("model: missing body marker");
    if (m.dim <= 0 || count <= 0) throw ParseError("model: malformed dimension or support vector count");

    const auto body_start = static_cast<std::size_t>(in.tellg());
    const std::string body = bytes.substr(body_start);
    if (crc_hex(body) != crc) throw ParseError("model: checksum failure");

    std::istringstream rows(body);
    for (long long i = 0; i < count; ++i) {
        if (!std::getline(rows, line)) throw ParseError("model: truncated support vector list");
        const auto fields = csv::split(line, ' ');
        if (static_cast<int>(fields.size()) != m.dim + 1) {
            throw ParseError("model: support vector " + std::to_string(i) + " has wrong length");
        }
        m.coefficients.push_back(csv::parse_double(fields[0]));
        for (std::size_t k = 1; k < fields.size(); ++k) m.support_vectors.push_back(csv::parse_double(fields[k]));
    }
    if (std::getline(rows, line) && !line.empty()) throw ParseError("model: trailing data after support vectors");
    try {
        m.validate();
    } catch (const InvalidArgument& e) {
        throw ParseError(std::string("model: ") + e.what());
    }
    return m;
}

void save_model(const std::string& path, const SvmModel& model) {
    const std::string bytes = serialize(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << bytes;
    if (!out) throw Error("short write to '" + path + "'");
}

SvmModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize(ss.str());
}

}  // namespace onehalf
