#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "distmatch/app.hpp"
#include "distmatch/charfn.hpp"
#include "distmatch/error.hpp"
#include "distmatch/loss.hpp"
#include "distmatch/numerics.hpp"
#include "distmatch/oracle.hpp"
#include "distmatch/rollout.hpp"
#include "distmatch/trainer.hpp"

namespace py = pybind11;
using namespace distmatch;

namespace {

using RealArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ComplexArray = py::array_t<Complex, py::array::c_style | py::array::forcecast>;

std::span<const double> view(const RealArray& a) {
  if (a.ndim() != 1) throw py::value_error("expected a one-dimensional array");
  return {a.data(), static_cast<std::size_t>(a.size())};
}

std::vector<Complex> to_vector(const ComplexArray& a) {
  if (a.ndim() != 1) throw py::value_error("expected a one-dimensional array");
  return {a.data(), a.data() + a.size()};
}

RealArray real_array(const std::vector<double>& v) { return RealArray(v.size(), v.data()); }
ComplexArray complex_array(const std::vector<Complex>& v) { return ComplexArray(v.size(), v.data()); }

CFTable table_on(const FrequencyGrid& grid, const ComplexArray& values) {
  CFTable t{grid.nodes, to_vector(values)};
  if (t.values.size() != grid.size()) throw py::value_error("CF values do not match the grid size");
  return t;
}

TargetSpec target_spec(const std::string& kind, const py::kwargs& kw) {
  auto get = [&](const char* key, double fallback) {
    return kw.contains(key) ? kw[key].cast<double>() : fallback;
  };
  if (kind == "standard-normal") return StandardNormal{};
  if (kind == "epanechnikov") return Epanechnikov{};
  if (kind == "dirac-at") return DiracAt{get("location", 0.0)};
  if (kind == "wrapped-gaussian") return WrappedGaussian{get("mean", 0.0), get("variance", 1.0)};
  throw py::value_error("unknown closed-form target '" + kind + "'");
}

py::dict report_dict(const TrainReport& r) {
  std::vector<double> loss, grad_norm, alpha;
  for (const auto& rec : r.records) {
    loss.push_back(rec.loss);
    grad_norm.push_back(rec.grad_norm);
    alpha.push_back(rec.alpha);
  }
  py::dict d;
  d["loss"] = real_array(loss);
  d["grad_norm"] = real_array(grad_norm);
  d["alpha"] = real_array(alpha);
  d["converged"] = r.converged;
  d["stalled"] = r.stalled;
  d["restarts"] = r.restarts;
  d["best_loss"] = r.best_loss;
  d["theta"] = real_array(r.final_params.theta);
  return d;
}

}  // namespace

PYBIND11_MODULE(_distmatch, m) {
  m.doc() = "Distribution matching of cumulative rewards by characteristic functions";

  static py::exception<Error> base(m, "DistmatchError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(base.ptr(), e.what());
    }
  });

  py::class_<FrequencyGrid>(m, "FrequencyGrid")
      .def(py::init(&build_uniform_grid), py::arg("k_max"), py::arg("n_nodes"), py::arg("alpha"))
      .def_readonly("k_max", &FrequencyGrid::k_max)
      .def_readonly("n_nodes", &FrequencyGrid::n_nodes)
      .def_readonly("alpha", &FrequencyGrid::alpha)
      .def_property_readonly("nodes", [](const FrequencyGrid& g) { return real_array(g.nodes); })
      .def_property_readonly("weights", [](const FrequencyGrid& g) { return real_array(g.weights); })
      .def("__len__", &FrequencyGrid::size);

  m.def("bessel_j", &bessel_j, py::arg("order"), py::arg("x"));
  m.def("wasserstein1", [](const RealArray& x, const RealArray& y) { return wasserstein1(view(x), view(y)); },
        py::arg("x"), py::arg("y"));
  m.def("standard_normal",
        [](std::uint64_t seed, std::uint64_t stream, std::size_t n) {
          return real_array(standard_normal(RandomStream{seed, stream}, n));
        },
        py::arg("seed"), py::arg("stream"), py::arg("n"));

  m.def("empirical_cf",
        [](const RealArray& samples, const FrequencyGrid& grid) {
          return complex_array(empirical_cf(view(samples), grid).values);
        },
        py::arg("samples"), py::arg("grid"));
  m.def("target_cf",
        [](const std::string& kind, const FrequencyGrid& grid, const py::kwargs& kw) {
          return complex_array(target_cf(target_spec(kind, kw), grid).values);
        },
        py::arg("kind"), py::arg("grid"));
  m.def("cf_tail_mass", &cf_tail_mass, py::arg("k_max"), py::arg("alpha"));

  m.def("cf_loss",
        [](const RealArray& returns, const ComplexArray& target, const FrequencyGrid& grid) {
          return cf_loss(view(returns), table_on(grid, target), grid);
        },
        py::arg("returns"), py::arg("target"), py::arg("grid"));
  m.def("gradient_weights",
        [](const RealArray& returns, const ComplexArray& target, const FrequencyGrid& grid) {
          const auto residual = cf_residual(view(returns), table_on(grid, target), grid);
          return real_array(gradient_weights(view(returns), residual, grid));
        },
        py::arg("returns"), py::arg("target"), py::arg("grid"));
  m.def("epps_pulley_loss", [](const RealArray& x) { return epps_pulley_loss(view(x)); }, py::arg("samples"));
  m.def("bernoulli_loss", &bernoulli_loss, py::arg("p"), py::arg("grid"));

  m.def("config_hash",
        [](const std::string& json_text) { return app::config_hash(nlohmann::json::parse(json_text)); },
        py::arg("json_text"));
  m.def("train_preset",
        [](const std::filesystem::path& path, std::optional<std::string> scale,
           std::optional<std::uint64_t> seed) {
          app::Overrides o;
          o.scale = scale;
          o.seed = seed;
          const auto cfg = app::load_run_config(path, o);
          const auto grid = app::make_grid(cfg.grid);
          const auto target = app::target_table(cfg.target, cfg.env, grid);
          TrainReport report;
          {
            py::gil_scoped_release release;
            report = train(cfg.env, cfg.policy, target, grid, cfg.train);
          }
          return report_dict(report);
        },
        py::arg("config"), py::arg("scale") = py::none(), py::arg("seed") = py::none());
  m.def("simulate_returns",
        [](const std::filesystem::path& path, const RealArray& theta, std::size_t m, std::uint64_t seed) {
          const auto cfg = app::load_run_config(path);
          PolicyParams params = init_params(cfg.policy);
          const auto t = view(theta);
          if (t.size() != params.theta.size()) throw py::value_error("theta length does not match the policy");
          params.theta.assign(t.begin(), t.end());
          RolloutOptions opts;
          opts.with_grad = false;
          return real_array(simulate_batch(cfg.env, params, m, RandomStream{seed, 0}, cfg.train.good, opts).returns);
        },
        py::arg("config"), py::arg("theta"), py::arg("m"), py::arg("seed") = 0);
  m.def("run",
        [](const std::string& command, const std::filesystem::path& path, std::optional<std::string> scale) {
          app::Overrides o;
          o.scale = scale;
          std::ostringstream log;
          int code;
          if (command == "train") {
            code = app::cmd_train(path, o, log);
          } else if (command == "oracle") {
            code = app::cmd_oracle(path, o, log);
          } else if (command == "report") {
            code = app::cmd_report(path, log);
          } else {
            throw py::value_error("unknown command '" + command + "'");
          }
          return py::make_tuple(code, log.str());
        },
        py::arg("command"), py::arg("path"), py::arg("scale") = py::none());

  m.def("solve_jacobi_anger",
        [](const FrequencyGrid& grid, const ComplexArray& target, double s0, double sigma, double amplitude,
           int k_modes) {
          JacobiAngerProblem p;
          p.s0 = s0;
          p.sigma = sigma;
          p.amplitude = amplitude;
          p.k_modes = k_modes;
          p.grid = grid;
          const auto sol = solve_modes(p, table_on(grid, target));
          py::dict d;
          d["x"] = real_array(sol.x);
          d["psi"] = complex_array(sol.psi);
          d["residual_norm"] = sol.residual_norm;
          d["odd_mode_max"] = sol.odd_mode_max;
          d["ridge_used"] = sol.ridge_used;
          return d;
        },
        py::arg("grid"), py::arg("target"), py::arg("s0") = 0.0, py::arg("sigma") = 0.1,
        py::arg("amplitude") = 1.0, py::arg("k_modes") = 16);
  m.def("wrapped_gaussian_modes",
        [](double mean, double variance, int n_max) {
          return complex_array(wrapped_gaussian_modes(mean, variance, n_max));
        },
        py::arg("mean"), py::arg("variance"), py::arg("n_max"));
  m.def("torus_deconvolve",
        [](const ComplexArray& modes, double s0, double sigma) {
          return complex_array(torus_deconvolve(to_vector(modes), s0, sigma));
        },
        py::arg("modes"), py::arg("s0"), py::arg("sigma"));
}
