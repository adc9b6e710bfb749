#include "sdadda/cli.hpp"
#include "sdadda/data_io.hpp"
#include "sdadda/error.hpp"
#include "sdadda/evaluation.hpp"
#include "sdadda/kernel_stats.hpp"
#include "sdadda/net.hpp"
#include "sdadda/schedules.hpp"
#include "sdadda/signal_features.hpp"
#include "sdadda/trainer.hpp"

#include <pybind11/eigen.h>
#include <pybind11/iostream.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace sdadda;

namespace {

kernel::KernelConfig kernel_config(std::optional<double> sigma) {
  return sigma ? kernel::KernelConfig::fixed(*sigma) : kernel::KernelConfig::median();
}

trainer::TrainConfig train_config(const std::string& variant, int epochs, int batch_size, std::uint64_t seed) {
  trainer::TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch_size;
  cfg.seed = seed;
  cfg.ablation = eval::ablation_for(eval::parse_variant(variant));
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Semi-supervised domain adaptation with dynamic distribution alignment";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("differential_entropy", &features::differential_entropy, py::arg("variance"));
  m.def(
      "band_variance",
      [](const Eigen::MatrixXd& samples, double fs, double lo, double hi, Eigen::Index channel) {
        return features::band_variance({samples, fs}, {"band", lo, hi}, channel);
      },
      py::arg("samples"), py::arg("fs"), py::arg("lo_hz"), py::arg("hi_hz"), py::arg("channel") = 0,
      "Band-limited variance of one channel; samples are [channels x time].");
  m.def(
      "de_features",
      [](const Eigen::MatrixXd& samples, double fs) {
        return Eigen::VectorXd(features::build_feature_vector({samples, fs}, features::default_bands()).values);
      },
      py::arg("samples"), py::arg("fs"), "Five-band DE feature vector, channel-major.");

  m.def("median_bandwidth", &kernel::median_bandwidth, py::arg("pooled"));
  m.def(
      "mmd",
      [](const Eigen::MatrixXd& xs, const Eigen::MatrixXd& xt, std::optional<double> sigma) {
        return kernel::mmd(xs, xt, kernel_config(sigma));
      },
      py::arg("xs"), py::arg("xt"), py::arg("sigma") = py::none(),
      "Gaussian-kernel MMD; median-heuristic bandwidth unless sigma is given.");
  m.def(
      "cmmd",
      [](const Eigen::MatrixXd& xs, std::vector<int> ys, const Eigen::MatrixXd& xt, std::vector<int> yt, int classes,
         std::optional<double> sigma) {
        return kernel::cmmd({xs, std::move(ys)}, {xt, std::move(yt)}, kernel_config(sigma), classes);
      },
      py::arg("xs"), py::arg("ys"), py::arg("xt"), py::arg("yt"), py::arg("classes"), py::arg("sigma") = py::none());

  m.def("parameter_count", [](int input_dim, int hidden1, int hidden2, int classes) {
    return net::parameter_count(net::Architecture{input_dim, hidden1, hidden2, classes});
  }, py::arg("input_dim") = 310, py::arg("hidden1") = 64, py::arg("hidden2") = 64, py::arg("classes") = 3);

  m.def("alpha_at", [](int epoch, int total_epochs) {
    schedule::ScheduleConfig cfg;
    cfg.total_epochs = total_epochs;
    return schedule::alpha_at(epoch, cfg);
  }, py::arg("epoch"), py::arg("total_epochs") = 100);
  m.def("beta_of", [](double l_ds) { return schedule::beta_of(l_ds, {}); }, py::arg("source_loss"));
  m.def("confidence_threshold", [](int epoch) { return schedule::confidence_threshold(epoch, {}); },
        py::arg("epoch"));

  py::class_<net::ModelParams>(m, "Model")
      .def_readonly("w1", &net::ModelParams::w1)
      .def_readonly("b1", &net::ModelParams::b1)
      .def_readonly("w2", &net::ModelParams::w2)
      .def_readonly("b2", &net::ModelParams::b2)
      .def_readonly("wc", &net::ModelParams::wc)
      .def_readonly("bc", &net::ModelParams::bc)
      .def("predict_proba", [](const net::ModelParams& p, const Eigen::MatrixXd& x) { return net::predict_proba(x, p); })
      .def("save", [](const net::ModelParams& p, const std::filesystem::path& path) { net::save_checkpoint(p, path); })
      .def_static("load", &net::load_checkpoint)
      .def_property_readonly("fingerprint", &net::ModelParams::fingerprint);

  m.def(
      "train",
      [](const Eigen::MatrixXd& xs, std::vector<int> ys, const Eigen::MatrixXd& xt, int classes,
         const std::string& variant, int epochs, int batch_size, std::uint64_t seed) {
        const auto cfg = train_config(variant, epochs, batch_size, seed);
        trainer::TrainResult r;
        {
          py::gil_scoped_release release;
          r = trainer::train({xs, std::move(ys)}, {xt}, classes, cfg);
        }
        py::list history;
        for (const auto& h : r.history) {
          history.append(py::dict(py::arg("step") = h.step, py::arg("epoch") = h.epoch, py::arg("l_ds") = h.loss.l_ds,
                                  py::arg("l_mmd") = h.loss.l_mmd, py::arg("l_cmmd") = h.loss.l_cmmd,
                                  py::arg("total") = h.loss.total, py::arg("alpha") = h.loss.alpha,
                                  py::arg("beta") = h.loss.beta, py::arg("tau") = h.schedule.tau));
        }
        return py::make_tuple(r.params, history);
      },
      py::arg("xs"), py::arg("ys"), py::arg("xt"), py::arg("classes") = 3, py::arg("variant") = "EXP6",
      py::arg("epochs") = 100, py::arg("batch_size") = 128, py::arg("seed") = 3,
      "Trains one model. Returns (model, per-step history).");
  m.def("accuracy", [](const net::ModelParams& p, const Eigen::MatrixXd& x, std::vector<int> y) {
    return eval::evaluate(p, x, y).accuracy;
  }, py::arg("model"), py::arg("x"), py::arg("y"));

  m.def(
      "synth_shift",
      [](int dim, double domain_shift, double rotation_deg, int n_per_class, std::uint64_t seed) {
        io::SynthShiftConfig cfg;
        cfg.dim = dim;
        cfg.domain_shift = domain_shift;
        cfg.rotation_deg = rotation_deg;
        cfg.n_per_class_source = n_per_class;
        cfg.n_per_class_target = n_per_class;
        cfg.seed = seed;
        auto s = io::generate_synth_shift(cfg);
        return py::make_tuple(s.source.features, s.source.labels, s.target.features, s.target_labels);
      },
      py::arg("dim") = 16, py::arg("domain_shift") = 9.0, py::arg("rotation_deg") = 30.0, py::arg("n_per_class") = 200,
      py::arg("seed") = 3, "Returns (xs, ys, xt, yt); yt is for evaluation only.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the sdadda command line in-process. Returns (exit_code, stdout, stderr).");
}
