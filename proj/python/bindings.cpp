#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "signtrack/cli.hpp"

namespace py = pybind11;
using namespace signtrack;

namespace {

RunConfig resolve(const std::string& preset_or_json) {
    if (!preset_or_json.empty() && preset_or_json.front() == '{') return parse_config(preset_or_json);
    return preset(preset_or_json);
}

RegimeModel regime_for(const Matrix& generator, double epsilon) {
    const auto m = generator.rows();
    std::vector<Vector> states;
    for (Eigen::Index i = 0; i < m; ++i) states.push_back(Vector::Constant(1, static_cast<double>(i)));
    return RegimeModel(std::move(states), GeneratorMatrix::validate(generator), epsilon,
                       Vector::Constant(m, 1.0 / static_cast<double>(m)));
}

SignalModel gaussian_signal(const Matrix& cov, double noise_variance) { return SignalModel::gaussian(cov, noise_variance); }

}  // namespace

PYBIND11_MODULE(_signtrack, m) {
    m.doc() = "Sign-error adaptive filtering of Markov-modulated parameters";

    static PyObject* error_type = nullptr;
    error_type = PyErr_NewException("signtrack._signtrack.Error", PyExc_ValueError, nullptr);
    m.attr("Error") = py::handle(error_type);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            PyErr_SetString(error_type, (std::string(to_string(e.code())) + ": " + e.what()).c_str());
        }
    });

    m.def("stationary_distribution",
          [](const Matrix& q) { return stationary_distribution(GeneratorMatrix::validate(q)); }, py::arg("generator"));
    m.def("transition_matrix", [](const Matrix& q, double eps) { return transition_matrix(regime_for(q, eps)); },
          py::arg("generator"), py::arg("epsilon"));
    m.def("mean_parameter", &mean_parameter, py::arg("states"), py::arg("distribution"));

    m.def("sign", &sign, py::arg("x"));
    m.def("se_step", &se_step, py::arg("theta"), py::arg("phi"), py::arg("y"), py::arg("mu"));
    m.def("sr_step", &sr_step, py::arg("theta"), py::arg("phi"), py::arg("y"), py::arg("mu"));
    m.def("lms_step", &lms_step, py::arg("theta"), py::arg("phi"), py::arg("y"), py::arg("mu"));

    m.def("effective_matrix",
          [](const Matrix& cov, double noise_variance) {
              return effective_matrix_closed_form(gaussian_signal(cov, noise_variance));
          },
          py::arg("regressor_covariance"), py::arg("noise_variance"));
    m.def("effective_matrix_monte_carlo",
          [](const Matrix& cov, double noise_variance, long samples, double fd_step, std::uint64_t seed) {
              RandomStream rng(seed);
              const auto mc = effective_matrix_monte_carlo(gaussian_signal(cov, noise_variance), samples, fd_step, rng);
              return py::make_tuple(mc.value, mc.std_error);
          },
          py::arg("regressor_covariance"), py::arg("noise_variance"), py::arg("samples"), py::arg("fd_step") = 0.01,
          py::arg("seed") = kDefaultSeed);
    m.def("lyapunov_solve", &lyapunov_solve, py::arg("a"), py::arg("sigma"));
    m.def("matrix_sqrt_psd", &matrix_sqrt_psd, py::arg("sigma"));

    m.def("mse_bound", &mse_bound, py::arg("mu"), py::arg("epsilon"));
    m.def("burn_in_default", &burn_in_default, py::arg("mu"));

    m.def("preset_names", &preset_names);
    m.def("preset_config", [](const std::string& name) { return preset(name).to_json().dump(); }, py::arg("name"));

    m.def("track",
          [](const std::string& config, const std::string& algorithm, std::optional<std::uint64_t> seed) {
              RunConfig c = resolve(config);
              if (seed) c.master_seed = *seed;
              const Scenario s = c.scenario(parse_algorithm(algorithm));
              RandomStream rng = s.stream(0);
              Trajectory traj;
              {
                  py::gil_scoped_release release;
                  traj = run_tracking(s.regime(), s.signal, s.filter, s.n_steps, rng);
              }
              const auto len = static_cast<Eigen::Index>(traj.thetas.size());
              const auto r = static_cast<Eigen::Index>(traj.thetas.front().size());
              Matrix alpha(len, r), theta(len, r);
              for (Eigen::Index n = 0; n < len; ++n) {
                  alpha.row(n) = traj.alpha(static_cast<int>(n)).transpose();
                  theta.row(n) = traj.thetas[static_cast<std::size_t>(n)].transpose();
              }
              Vector y = Eigen::Map<const Vector>(traj.observations.data(), static_cast<Eigen::Index>(traj.observations.size()));
              py::dict out;
              out["alpha"] = alpha;
              out["theta"] = theta;
              out["y"] = y;
              out["chain"] = traj.chain.indices;
              out["mu"] = traj.mu;
              out["epsilon"] = traj.epsilon;
              return out;
          },
          py::arg("config") = "e_eq_mu", py::arg("algorithm") = "SE", py::arg("seed") = py::none());

    m.def("mse_curve",
          [](const std::string& config, const std::string& algorithm, int replications, int threads) {
              RunConfig c = resolve(config);
              c.replications = replications;
              const Scenario s = c.scenario(parse_algorithm(algorithm), threads);
              MseCurve curve;
              {
                  py::gil_scoped_release release;
                  curve = mse_curve(s);
              }
              py::object se = py::none();
              if (curve.std_error) se = py::cast(Eigen::Map<const Vector>(curve.std_error->data(), static_cast<Eigen::Index>(curve.std_error->size())).eval());
              return py::make_tuple(Eigen::Map<const Vector>(curve.mean.data(), static_cast<Eigen::Index>(curve.mean.size())).eval(), se);
          },
          py::arg("config") = "e_eq_mu", py::arg("algorithm") = "SE", py::arg("replications") = 100,
          py::arg("threads") = 1);

    m.def("run_command",
          [](const std::string& command, const std::string& config, const std::filesystem::path& out, int threads,
             std::optional<std::uint64_t> seed, std::optional<int> replications) {
              RunConfig c = resolve(config);
              c.command = command;
              if (seed) c.master_seed = *seed;
              if (replications) c.replications = *replications;
              CommandResult result;
              {
                  py::gil_scoped_release release;
                  result = run_command(command, c, out, threads);
              }
              return py::make_tuple(result.files, result.passed);
          },
          py::arg("command"), py::arg("config"), py::arg("out"), py::arg("threads") = 1, py::arg("seed") = py::none(),
          py::arg("replications") = py::none());
}
