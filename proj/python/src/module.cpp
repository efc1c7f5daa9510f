#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "onehalf/attack.hpp"
#include "onehalf/error.hpp"
#include "onehalf/experiment.hpp"
#include "onehalf/image_io.hpp"
#include "onehalf/imgops.hpp"
#include "onehalf/metrics.hpp"
#include "onehalf/pipeline.hpp"
#include "onehalf/spam.hpp"
#include "onehalf/svm.hpp"

namespace py = pybind11;
using namespace onehalf;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (H, W) or (H, W, 1|3) uint8 array <-> raster
RasterImage to_raster(const U8Array& a) {
    if (a.ndim() != 2 && a.ndim() != 3) throw py::value_error("image must have shape (H, W) or (H, W, C)");
    const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
    const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
    return RasterImage(w, h, c, std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

U8Array to_array(const RasterImage& img) {
    std::vector<py::ssize_t> shape{img.height(), img.width()};
    if (img.channels() == 3) shape.push_back(3);
    U8Array out(shape);
    std::copy(img.data().begin(), img.data().end(), out.mutable_data());
    return out;
}

FeatureMatrix to_matrix(const F64Array& a) {
    if (a.ndim() != 2) throw py::value_error("samples must be a 2-D array");
    const int rows = static_cast<int>(a.shape(0)), cols = static_cast<int>(a.shape(1));
    FeatureMatrix m(rows, cols);
    const double* src = a.data();
    for (int i = 0; i < rows; ++i) std::copy(src + static_cast<std::size_t>(i) * cols, src + static_cast<std::size_t>(i + 1) * cols, m.row(i).begin());
    return m;
}

std::span<const double> as_span(const F64Array& a) {
    return {a.data(), static_cast<std::size_t>(a.size())};
}

F64Array to_array(const std::vector<double>& v) {
    return F64Array(static_cast<py::ssize_t>(v.size()), v.data());
}

ImageClass class_of(const std::string& s) {
    if (s == "pristine" || s == "H0") return ImageClass::Pristine;
    if (s == "manipulated" || s == "H1") return ImageClass::Manipulated;
    throw py::value_error("label must be 'pristine' or 'manipulated'");
}

SpamConfig spam_config(int truncation, const std::string& normalization) {
    SpamConfig cfg;
    cfg.truncation = truncation;
    if (normalization == "joint") cfg.normalization = Normalization::Joint;
    else if (normalization != "conditional") throw py::value_error("normalization must be 'conditional' or 'joint'");
    return cfg;
}

ManipulationSpec manipulation(const std::string& kind, double scale, int window, double clip_limit, int tiles) {
    switch (parse_manipulation_kind(kind)) {
        case ManipulationKind::Resize: return ManipulationSpec::resize(scale);
        case ManipulationKind::MedianFilter: return ManipulationSpec::median(window);
        case ManipulationKind::ClAhe: return ManipulationSpec::clahe(clip_limit, tiles, tiles);
    }
    return {};
}

py::dict report_dict(const ExperimentReport& rep) {
    py::dict auc, robustness, attacks;
    for (const auto& r : rep.auc) {
        if (!auc.contains(r.set)) auc[py::str(r.set)] = py::dict();
        auc[py::str(r.set)][py::str(r.classifier)] = r.auc;
    }
    for (const auto& r : rep.robustness) {
        py::dict row;
        row["samples"] = r.samples;
        for (int k = 0; k < 4; ++k) row[kClassifierNames[k]] = r.accuracy[k];
        robustness[py::str(r.condition)] = row;
    }
    for (const auto& r : rep.attacks) {
        py::dict row;
        row["attacked"] = r.attacked;
        row["success_rate"] = r.success_rate;
        row["mean_mse"] = r.mean_mse;
        row["mean_pixel_fraction"] = r.mean_pixel_fraction;
        row["mean_iterations"] = r.mean_iterations;
        py::dict mis;
        for (int k = 0; k < 4; ++k) mis[kClassifierNames[k]] = r.misclassified[k];
        row["labelled_pristine"] = mis;
        attacks[py::str(r.target)] = row;
    }
    py::dict out;
    out["task"] = rep.task;
    out["auc"] = auc;
    out["robustness"] = robustness;
    out["attacks"] = attacks;
    out["text"] = report_text(rep);
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "onehalf native core";

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
    py::register_exception<ShapeMismatch>(m, "ShapeMismatch", PyExc_ValueError);

    // images -------------------------------------------------------------
    m.def("read_image", [](const std::filesystem::path& p) { return to_array(read_image(p)); }, py::arg("path"));
    m.def("write_image", [](const std::filesystem::path& p, const U8Array& a) { write_image(p, to_raster(a)); },
          py::arg("path"), py::arg("image"));
    m.def(
        "apply_manipulation",
        [](const U8Array& a, const std::string& kind, double scale, int window, double clip_limit, int tiles) {
            return to_array(apply_manipulation(to_raster(a), manipulation(kind, scale, window, clip_limit, tiles)));
        },
        py::arg("image"), py::arg("kind"), py::arg("scale") = 1.3, py::arg("window") = 3,
        py::arg("clip_limit") = 0.05, py::arg("tiles") = 8);
    m.def(
        "add_gaussian_noise",
        [](const U8Array& a, double variance, std::uint64_t seed) {
            return to_array(add_gaussian_noise(to_raster(a), variance, seed));
        },
        py::arg("image"), py::arg("variance"), py::arg("seed") = 0);
    m.def("jpeg_cycle", [](const U8Array& a, int qf) { return to_array(jpeg_cycle(to_raster(a), qf)); },
          py::arg("image"), py::arg("quality"));

    // features -----------------------------------------------------------
    m.def(
        "spam_features",
        [](const U8Array& a, int truncation, const std::string& normalization) {
            return to_array(spam_features(to_raster(a), spam_config(truncation, normalization)).values);
        },
        py::arg("image"), py::arg("truncation") = 3, py::arg("normalization") = "conditional");

    // SVMs ---------------------------------------------------------------
    py::class_<SvmModel>(m, "SvmModel")
        .def_property_readonly("kind", [](const SvmModel& s) { return to_string(s.kind); })
        .def_readonly("gamma", &SvmModel::gamma)
        .def_readonly("bias", &SvmModel::bias)
        .def_readonly("dim", &SvmModel::dim)
        .def_property_readonly("support_vector_count", &SvmModel::sv_count)
        .def("decision", [](const SvmModel& s, const F64Array& x) {
            if (x.ndim() == 1) return py::object(py::float_(decision_value(s, as_span(x))));
            return py::object(to_array(decision_values(s, to_matrix(x))));
        }, py::arg("x"))
        .def("save", [](const SvmModel& s, const std::string& path) { save_model(path, s); }, py::arg("path"))
        .def_static("load", &load_model, py::arg("path"));

    m.def(
        "train_two_class",
        [](const F64Array& x, const std::vector<int>& labels, double c, double gamma, double tolerance) {
            TrainOptions opts;
            opts.tolerance = tolerance;
            return train_two_class(TrainingSet{to_matrix(x), labels}, {c, gamma}, opts);
        },
        py::arg("samples"), py::arg("labels"), py::arg("c"), py::arg("gamma"), py::arg("tolerance") = 1e-3);
    m.def(
        "train_one_class",
        [](const F64Array& x, double nu, double gamma, double tolerance) {
            TrainOptions opts;
            opts.tolerance = tolerance;
            return train_one_class(TrainingSet{to_matrix(x), {}}, {nu, gamma}, opts);
        },
        py::arg("samples"), py::arg("nu"), py::arg("gamma"), py::arg("tolerance") = 1e-3);

    // detector -----------------------------------------------------------
    py::class_<Prediction>(m, "Prediction")
        .def_property_readonly("d", [](const Prediction& p) { return std::vector<double>(p.d.begin(), p.d.end()); })
        .def_readonly("f", &Prediction::f)
        .def_property_readonly("label", [](const Prediction& p) { return to_string(p.label); })
        .def("__repr__", [](const Prediction& p) {
            std::ostringstream os;
            os << "Prediction(label=" << to_string(p.label) << ", f=" << p.f << ")";
            return os.str();
        });

    py::class_<OneHalfClassModel>(m, "Detector")
        .def("predict_features", [](const OneHalfClassModel& d, const F64Array& x) { return predict_15c(d, as_span(x)); },
             py::arg("features"))
        .def("predict", [](const OneHalfClassModel& d, const U8Array& a) {
            return predict_15c(d, spam_features(to_raster(a)).values);
        }, py::arg("image"))
        .def_readonly("two_class", &OneHalfClassModel::two_class)
        .def_readonly("one_class_pristine", &OneHalfClassModel::oc_pristine)
        .def_readonly("one_class_manipulated", &OneHalfClassModel::oc_manipulated)
        .def_readonly("combiner", &OneHalfClassModel::combiner);
    m.def("load_detector", &load_detector, py::arg("model_dir"));

    // attack -------------------------------------------------------------
    py::class_<AttackConfig>(m, "AttackConfig")
        .def(py::init([](double rho, double pixel_fraction, int step, int max_iters, std::uint64_t seed) {
                 AttackConfig c{rho, pixel_fraction, step, max_iters, seed};
                 c.validate();
                 return c;
             }),
             py::arg("rho") = 0.0, py::arg("pixel_fraction") = 0.10, py::arg("step") = 1, py::arg("max_iters") = 100,
             py::arg("seed") = 0)
        .def_readwrite("rho", &AttackConfig::rho)
        .def_readwrite("pixel_fraction", &AttackConfig::pixel_fraction)
        .def_readwrite("step", &AttackConfig::step)
        .def_readwrite("max_iters", &AttackConfig::max_iters)
        .def_readwrite("seed", &AttackConfig::seed);

    m.def(
        "run_attack",
        [](const OneHalfClassModel& det, const U8Array& a, const std::string& target, const AttackConfig& cfg) {
            const AttackTarget t{parse_target_kind(target), &det, {}};
            AttackResult r;
            {
                py::gil_scoped_release release;
                r = run_attack(t, to_raster(a), cfg);
            }
            py::dict out;
            out["image"] = to_array(r.attacked);
            out["success"] = r.success;
            out["stalled"] = r.stalled;
            out["iterations"] = r.iterations;
            out["mse"] = r.mse;
            out["pixel_fraction"] = r.pixel_change_fraction;
            out["initial_score"] = r.initial_score;
            out["final_score"] = r.final_score;
            out["prediction"] = r.final_scores;
            return out;
        },
        py::arg("detector"), py::arg("image"), py::arg("target") = "15c", py::arg("config") = AttackConfig{});

    // metrics ------------------------------------------------------------
    m.def(
        "roc_auc",
        [](const F64Array& scores, const std::vector<std::string>& labels) {
            std::vector<ImageClass> l;
            for (const auto& s : labels) l.push_back(class_of(s));
            return roc_auc(as_span(scores), l).auc;
        },
        py::arg("scores"), py::arg("labels"));
    m.def("mse", [](const U8Array& a, const U8Array& b) { return mse(to_raster(a), to_raster(b)); });
    m.def("pixel_change_fraction",
          [](const U8Array& a, const U8Array& b) { return pixel_change_fraction(to_raster(a), to_raster(b)); });

    // experiments --------------------------------------------------------
    py::class_<ExperimentConfig>(m, "ExperimentConfig")
        .def(py::init<>())
        .def_static("parse", &parse_config, py::arg("text"))
        .def_static("load", &load_config, py::arg("path"))
        .def("to_text", &to_config_text)
        .def("set_seed", &set_master_seed, py::arg("seed"))
        .def("validate", &ExperimentConfig::validate)
        .def_readwrite("jobs", &ExperimentConfig::jobs);

    m.def(
        "run_experiment",
        [](const ExperimentConfig& cfg, const std::filesystem::path& out, bool attack) {
            std::ostringstream log;
            std::optional<ExperimentReport> rep;
            {
                py::gil_scoped_release release;
                rep = run_experiment(cfg, Workspace{out}, RunOptions{false, attack}, log);
            }
            py::dict d = report_dict(*rep);
            d["log"] = log.str();
            return d;
        },
        py::arg("config"), py::arg("out"), py::arg("attack") = true);
}
