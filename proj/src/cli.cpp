#include "signtrack/cli.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace signtrack {

using nlohmann::ordered_json;

namespace {

[[noreturn]] void config_error(const std::string& path, const std::string& message) {
    throw Error(ErrorCode::ConfigError, path + ": " + message);
}

// Walks one JSON object, remembering which keys were read so leftovers can
// be reported as unknown.
class ObjectReader {
public:
    ObjectReader(const ordered_json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) config_error(path_, "expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const ordered_json& at(const std::string& key) {
        seen_.insert(key);
        if (!j_.contains(key)) config_error(child(key), "missing required field");
        return j_.at(key);
    }

    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    template <class T>
    T get(const std::string& key) {
        const ordered_json& v = at(key);
        return convert<T>(v, child(key));
    }

    template <class T>
    T get_or(const std::string& key, T fallback) {
        if (!has(key)) {
            seen_.insert(key);
            return fallback;
        }
        return get<T>(key);
    }

    template <class T>
    std::optional<T> get_optional(const std::string& key) {
        seen_.insert(key);
        if (!has(key) || j_.at(key).is_null()) return std::nullopt;
        return convert<T>(j_.at(key), child(key));
    }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.count(item.key())) config_error(child(item.key()), "unknown key");
        }
    }

    template <class T>
    static T convert(const ordered_json& v, const std::string& path) {
        if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number()) config_error(path, "expected a number");
            return v.get<double>();
        } else if constexpr (std::is_same_v<T, int>) {
            if (!v.is_number_integer()) config_error(path, "expected an integer");
            return v.get<int>();
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
                config_error(path, "expected a nonnegative integer");
            }
            return v.get<std::uint64_t>();
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) config_error(path, "expected true or false");
            return v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) config_error(path, "expected a string");
            return v.get<std::string>();
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
            if (!v.is_array()) config_error(path, "expected an array of numbers");
            std::vector<double> out;
            for (std::size_t i = 0; i < v.size(); ++i) out.push_back(convert<double>(v[i], path + "[" + std::to_string(i) + "]"));
            return out;
        } else if constexpr (std::is_same_v<T, std::vector<std::vector<double>>>) {
            if (!v.is_array()) config_error(path, "expected an array of arrays");
            std::vector<std::vector<double>> out;
            for (std::size_t i = 0; i < v.size(); ++i) {
                out.push_back(convert<std::vector<double>>(v[i], path + "[" + std::to_string(i) + "]"));
            }
            return out;
        } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
            if (!v.is_array()) config_error(path, "expected an array of strings");
            std::vector<std::string> out;
            for (std::size_t i = 0; i < v.size(); ++i) out.push_back(convert<std::string>(v[i], path + "[" + std::to_string(i) + "]"));
            return out;
        }
    }

private:
    const ordered_json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

ordered_json optional_json(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

Matrix to_matrix(const std::vector<std::vector<double>>& rows, const std::string& path) {
    if (rows.empty()) config_error(path, "matrix is empty");
    const auto cols = rows.front().size();
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != cols) config_error(path, "row " + std::to_string(i) + " has the wrong length");
        for (std::size_t j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    return m;
}

Vector to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

DistKind parse_kind(const std::string& kind, const std::string& path) {
    if (kind == "gaussian") return DistKind::gaussian;
    if (kind == "truncated_gaussian") return DistKind::truncated_gaussian;
    config_error(path, "unknown distribution kind '" + kind + "'");
}

Coupling parse_coupling(const CouplingConfig& c) {
    if (c.kind == "proportional") return Coupling::proportional(c.parameter);
    if (c.kind == "slow") return Coupling::slow(c.parameter);
    if (c.kind == "fast") return Coupling::fast(c.parameter);
    config_error("coupling.kind", "unknown coupling '" + c.kind + "' (expected proportional, slow or fast)");
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// ---- output helpers -------------------------------------------------------

std::vector<std::string> component_names(const std::string& base, int r) {
    if (r == 1) return {base};
    std::vector<std::string> out;
    for (int k = 1; k <= r; ++k) out.push_back(base + "_" + std::to_string(k));
    return out;
}

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const RunConfig& config, const std::string& what,
              const std::vector<std::string>& columns)
        : out_(path, std::ios::binary) {
        if (!out_) throw Error(ErrorCode::ConfigError, "cannot open " + path.string() + " for writing");
        out_ << "# signtrack " << what << " config_hash=" << config.hash() << " master_seed=" << config.master_seed
             << "\n";
        for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
        out_ << "\n";
    }

    CsvWriter& cell(double x) { return raw(format_number(x)); }
    CsvWriter& cell(long x) { return raw(std::to_string(x)); }
    CsvWriter& cell(int x) { return raw(std::to_string(x)); }
    CsvWriter& cell(const Vector& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) cell(v[i]);
        return *this;
    }
    CsvWriter& raw(const std::string& s) {
        if (!first_) out_ << ",";
        out_ << s;
        first_ = false;
        return *this;
    }
    void end_row() {
        out_ << "\n";
        first_ = true;
    }

private:
    std::ofstream out_;
    bool first_ = true;
};

ordered_json matrix_json(const Matrix& m) {
    ordered_json rows = ordered_json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        ordered_json row = ordered_json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

ordered_json vector_json(const Vector& v) {
    ordered_json out = ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

ordered_json summary_header(const RunConfig& config, const std::string& command) {
    ordered_json j;
    j["command"] = command;
    j["config_hash"] = config.hash();
    j["master_seed"] = config.master_seed;
    return j;
}

void write_json(const std::filesystem::path& path, const ordered_json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::ConfigError, "cannot open " + path.string() + " for writing");
    out << j.dump(2) << "\n";
}

std::filesystem::path prepare(const std::filesystem::path& out) {
    std::filesystem::create_directories(out);
    return out;
}

double elapsed_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

// ---- RunConfig ------------------------------------------------------------

ordered_json RunConfig::to_json() const {
    ordered_json j;
    j["command"] = command;
    j["regime"] = {{"states", regime.states},
                   {"generator", regime.generator},
                   {"initial_distribution", regime.initial_distribution}};
    j["signal"] = {
        {"regressor", {{"kind", regressor.kind}, {"covariance", regressor.covariance}, {"clip", optional_json(regressor.clip)}}},
        {"noise", {{"kind", noise.kind}, {"variance", noise.variance}, {"clip", optional_json(noise.clip)}}}};
    j["filter"] = {{"algorithms", filter.algorithms},
                   {"mu", filter.mu},
                   {"theta0", filter.theta0},
                   {"divergence_guard", filter.divergence_guard}};
    j["coupling"] = {{"kind", coupling.kind}, {"parameter", coupling.parameter}};
    j["n_steps"] = n_steps;
    j["replications"] = replications;
    j["master_seed"] = master_seed;
    j["burn_in"] = burn_in ? ordered_json(*burn_in) : ordered_json(nullptr);
    j["mu_grid"] = mu_grid;
    j["limits"] = {{"dt_ode", limits.dt_ode}, {"horizon", limits.horizon}, {"halving", limits.halving}};
    j["output"] = {{"directory", output.directory}, {"formats", output.formats}};
    return j;
}

RunConfig RunConfig::from_json(const ordered_json& j) {
    RunConfig c;
    ObjectReader root(j, "");
    c.command = root.get_or<std::string>("command", c.command);
    {
        ObjectReader r(root.at("regime"), "regime");
        c.regime.states = r.get<std::vector<std::vector<double>>>("states");
        c.regime.generator = r.get<std::vector<std::vector<double>>>("generator");
        c.regime.initial_distribution = r.get<std::vector<double>>("initial_distribution");
        r.finish();
    }
    {
        ObjectReader s(root.at("signal"), "signal");
        ObjectReader reg(s.at("regressor"), "signal.regressor");
        c.regressor.kind = reg.get_or<std::string>("kind", c.regressor.kind);
        c.regressor.covariance = reg.get<std::vector<std::vector<double>>>("covariance");
        c.regressor.clip = reg.get_optional<double>("clip");
        reg.finish();
        ObjectReader noise(s.at("noise"), "signal.noise");
        c.noise.kind = noise.get_or<std::string>("kind", c.noise.kind);
        c.noise.variance = noise.get<double>("variance");
        c.noise.clip = noise.get_optional<double>("clip");
        noise.finish();
        s.finish();
    }
    {
        ObjectReader f(root.at("filter"), "filter");
        c.filter.algorithms = f.get_or<std::vector<std::string>>("algorithms", c.filter.algorithms);
        c.filter.mu = f.get<double>("mu");
        c.filter.theta0 = f.get<std::vector<double>>("theta0");
        c.filter.divergence_guard = f.get_or<double>("divergence_guard", c.filter.divergence_guard);
        f.finish();
    }
    {
        ObjectReader k(root.at("coupling"), "coupling");
        c.coupling.kind = k.get<std::string>("kind");
        c.coupling.parameter = k.get<double>("parameter");
        k.finish();
    }
    c.n_steps = root.get_or<int>("n_steps", c.n_steps);
    c.replications = root.get_or<int>("replications", c.replications);
    c.master_seed = root.get_or<std::uint64_t>("master_seed", c.master_seed);
    c.burn_in = root.get_optional<int>("burn_in");
    c.mu_grid = root.get_or<std::vector<double>>("mu_grid", c.mu_grid);
    if (root.has("limits")) {
        ObjectReader l(root.at("limits"), "limits");
        c.limits.dt_ode = l.get_or<double>("dt_ode", c.limits.dt_ode);
        c.limits.horizon = l.get_or<double>("horizon", c.limits.horizon);
        c.limits.halving = l.get_or<bool>("halving", c.limits.halving);
        l.finish();
    }
    if (root.has("output")) {
        ObjectReader o(root.at("output"), "output");
        c.output.directory = o.get_or<std::string>("directory", c.output.directory);
        c.output.formats = o.get_or<std::vector<std::string>>("formats", c.output.formats);
        o.finish();
    }
    root.finish();

    for (const auto& f : c.output.formats) {
        if (f != "csv" && f != "json") config_error("output.formats", "unknown format '" + f + "'");
    }
    if (c.n_steps < 0) config_error("n_steps", "must be nonnegative");
    if (c.replications < 1) config_error("replications", "must be at least 1");
    if (c.filter.algorithms.empty()) config_error("filter.algorithms", "must list at least one algorithm");
    for (double mu : c.mu_grid) {
        if (!(mu > 0.0 && mu < 1.0)) config_error("mu_grid", "entries must lie in (0, 1)");
    }
    if (!(c.limits.dt_ode > 0.0)) config_error("limits.dt_ode", "must be positive");
    if (!(c.limits.horizon > 0.0)) config_error("limits.horizon", "must be positive");
    return c;
}

std::string RunConfig::hash() const {
    ordered_json j = to_json();
    j.erase("output");
    return fmt::format("{:016x}", fnv1a(j.dump()));
}

std::vector<Algorithm> RunConfig::algorithms() const {
    std::vector<Algorithm> out;
    for (const auto& name : filter.algorithms) out.push_back(parse_algorithm(name));
    return out;
}

bool RunConfig::wants(const std::string& format) const {
    for (const auto& f : output.formats) {
        if (f == format) return true;
    }
    return false;
}

Scenario RunConfig::scenario(Algorithm alg, int threads) const {
    try {
        std::vector<Vector> states;
        for (const auto& s : regime.states) states.push_back(to_vector(s));
        RegressorDist reg{parse_kind(regressor.kind, "signal.regressor.kind"),
                          to_matrix(regressor.covariance, "signal.regressor.covariance"), regressor.clip.value_or(0.0)};
        NoiseDist nd{parse_kind(noise.kind, "signal.noise.kind"), noise.variance, noise.clip.value_or(0.0)};
        FilterConfig fc{alg, filter.mu, to_vector(filter.theta0), filter.divergence_guard};
        Scenario s{std::move(states),
                   GeneratorMatrix::validate(to_matrix(regime.generator, "regime.generator")),
                   to_vector(regime.initial_distribution),
                   SignalModel(reg, nd),
                   fc,
                   parse_coupling(coupling),
                   n_steps,
                   replications,
                   master_seed,
                   burn_in,
                   threads};
        s.validate();
        return s;
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ConfigError) throw;
        throw Error(ErrorCode::ConfigError, e.what(), e.index());
    }
}

RunConfig parse_config(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::ConfigError, e.what());
    }
    return RunConfig::from_json(j);
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::ConfigError, "cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const Error& e) {
        throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
    }
}

std::vector<std::string> preset_names() { return {"e_eq_mu", "e_ll_mu", "e_gg_mu"}; }

RunConfig preset(const std::string& name) {
    RunConfig c;
    c.regime.states = {{-1.0}, {0.0}, {1.0}};
    c.regime.generator = {{-0.6, 0.4, 0.2}, {0.2, -0.5, 0.3}, {0.4, 0.1, -0.5}};
    c.regime.initial_distribution = {0.75, 0.125, 0.125};
    c.regressor.covariance = {{1.0}};
    c.noise.variance = 0.25;
    c.filter.mu = 0.05;
    c.filter.theta0 = {0.0};
    c.replications = 500;
    if (name == "e_eq_mu") {
        c.coupling = {"proportional", 0.6};
        c.n_steps = 1000;
    } else if (name == "e_ll_mu") {
        c.coupling = {"slow", 1.0};
        c.n_steps = 10000;
    } else if (name == "e_gg_mu") {
        c.coupling = {"fast", 0.5};
        c.n_steps = 1000;
    } else {
        throw Error(ErrorCode::ConfigError, "unknown preset '" + name + "' (expected e_eq_mu, e_ll_mu or e_gg_mu)");
    }
    return c;
}

std::string format_number(double x) { return fmt::format("{:.17g}", x); }

// ---- commands -------------------------------------------------------------

CommandResult run_track(const RunConfig& config, const std::filesystem::path& out) {
    CommandResult result;
    result.report.config_hash = config.hash();
    result.report.master_seed = config.master_seed;
    prepare(out);
    const int r = static_cast<int>(config.filter.theta0.size());
    std::vector<std::string> cols{"n", "t"};
    for (const auto& c : component_names("alpha", r)) cols.push_back(c);
    for (const auto& c : component_names("theta", r)) cols.push_back(c);
    cols.push_back("y");
    for (Algorithm alg : config.algorithms()) {
        const Scenario s = config.scenario(alg);
        RandomStream rng = s.stream(0);
        const Trajectory traj = run_tracking(s.regime(), s.signal, s.filter, s.n_steps, rng);
        if (!config.wants("csv")) continue;
        const auto path = out / fmt::format("track_{}.csv", to_string(alg));
        CsvWriter csv(path, config, fmt::format("track algorithm={}", to_string(alg)), cols);
        for (int n = 0; n < traj.n_steps(); ++n) {
            csv.cell(n).cell(n * traj.mu).cell(traj.alpha(n)).cell(traj.thetas[static_cast<std::size_t>(n)]);
            csv.cell(traj.observations[static_cast<std::size_t>(n)]).end_row();
        }
        result.files.push_back(path);
    }
    return result;
}

CommandResult run_mse(const RunConfig& config, const std::filesystem::path& out, int threads) {
    const auto start = std::chrono::steady_clock::now();
    CommandResult result;
    result.report.config_hash = config.hash();
    result.report.master_seed = config.master_seed;
    prepare(out);
    const Algorithm alg = config.algorithms().front();
    const Scenario base = config.scenario(alg, threads);
    std::vector<double> grid = config.mu_grid.empty() ? std::vector<double>{config.filter.mu} : config.mu_grid;

    std::optional<CsvWriter> csv;
    if (config.wants("csv")) {
        result.files.push_back(out / "mse.csv");
        csv.emplace(result.files.back(), config, fmt::format("mse algorithm={}", to_string(alg)),
                    std::vector<std::string>{"mu", "n", "mse", "std_error"});
    }
    ordered_json rows = ordered_json::array();
    std::vector<double> mus, steadies;
    std::optional<double> fitted_c;
    bool bound_holds = true;
    for (double mu : grid) {
        const Scenario s = base.with_mu(mu);
        s.validate();
        const MseCurve curve = mse_curve(s);
        const int burn = s.effective_burn_in();
        const SteadyState ss = steady_state(curve, burn);
        const double eps = s.epsilon();
        std::optional<double> bound;
        if (eps > 0.0) bound = mse_bound(mu, eps);
        if (bound && !fitted_c) fitted_c = ss.mse / *bound;
        if (bound && fitted_c && ss.mse > *fitted_c * *bound * (1.0 + 1e-12)) bound_holds = false;
        if (csv) {
            for (std::size_t n = 0; n < curve.mean.size(); ++n) {
                csv->cell(mu).cell(static_cast<long>(n)).cell(curve.mean[n]);
                if (curve.std_error) {
                    csv->cell((*curve.std_error)[n]);
                } else {
                    csv->raw("");
                }
                csv->end_row();
            }
        }
        ordered_json row;
        row["mu"] = mu;
        row["epsilon"] = eps;
        row["burn_in"] = burn;
        row["steady_state_mse"] = ss.mse;
        row["bound"] = bound ? ordered_json(*bound) : ordered_json(nullptr);
        row["plateau"] = ss.plateau;
        rows.push_back(row);
        mus.push_back(mu);
        steadies.push_back(ss.mse);
        result.report.mse = curve;
        result.report.steady = ss;
        result.report.bound = bound;
    }

    ordered_json summary = summary_header(config, "mse");
    summary["algorithm"] = to_string(alg);
    summary["replications"] = config.replications;
    summary["rows"] = rows;
    summary["fitted_C"] = fitted_c ? ordered_json(*fitted_c) : ordered_json(nullptr);
    summary["bound_holds_with_fitted_C"] = bound_holds;
    summary["loglog_slope"] = mus.size() >= 2 ? ordered_json(loglog_slope(mus, steadies)) : ordered_json(nullptr);
    if (config.wants("json")) {
        result.files.push_back(out / "mse_summary.json");
        write_json(result.files.back(), summary);
    }
    result.report.wall_clock_seconds = elapsed_since(start);
    return result;
}

CommandResult run_limits(const RunConfig& config, const std::filesystem::path& out, int threads) {
    const auto start = std::chrono::steady_clock::now();
    CommandResult result;
    result.report.config_hash = config.hash();
    result.report.master_seed = config.master_seed;
    prepare(out);
    const Algorithm alg = config.algorithms().front();
    const Scenario s = config.scenario(alg, threads);
    const double mu = s.filter.mu;
    const LimitSystem sys = limit_system(s);
    const int r = sys.dim();

    // Deviation between interpolated iterates and the limit ODE.
    const DeviationReport dev = ode_deviation(s, config.limits.dt_ode, config.limits.horizon);
    std::optional<DeviationReport> dev_half;
    if (config.limits.halving) dev_half = ode_deviation(s.with_mu(mu / 2.0), config.limits.dt_ode, config.limits.horizon);
    result.report.deviation = dev;

    const Centering centering = matching_centering(s.coupling);
    const DiffusionReport diff = diffusion_check(s, centering);
    result.report.diffusion = diff;

    if (config.wants("csv")) {
        result.files.push_back(out / "deviation.csv");
        std::vector<std::string> cols{"replication", "deviation_mu"};
        if (dev_half) cols.push_back("deviation_half_mu");
        CsvWriter csv(result.files.back(), config, "limits deviation", cols);
        for (std::size_t i = 0; i < dev.per_replication.size(); ++i) {
            csv.cell(static_cast<long>(i)).cell(dev.per_replication[i]);
            if (dev_half) csv.cell(dev_half->per_replication[i]);
            csv.end_row();
        }

        // Replication 0 path: interpolated iterates against the ODE solution.
        RandomStream rng = s.stream(0);
        const int n_steps = static_cast<int>(std::ceil(config.limits.horizon / mu - 1e-9)) + 1;
        const Trajectory traj = run_tracking(s.regime(), s.signal, s.filter, n_steps, rng);
        const SampledPath ode = limit_path_for(s, traj, config.limits.dt_ode, config.limits.horizon);
        result.files.push_back(out / "deviation_path.csv");
        std::vector<std::string> pcols{"t"};
        for (const auto& c : component_names("alpha", r)) pcols.push_back(c);
        for (const auto& c : component_names("theta_mu", r)) pcols.push_back(c);
        for (const auto& c : component_names("theta_ode", r)) pcols.push_back(c);
        CsvWriter path_csv(result.files.back(), config, "limits deviation_path replication=0", pcols);
        for (std::size_t k = 0; k < ode.times.size(); ++k) {
            const double t = ode.times[k];
            const int n = std::min(static_cast<int>(std::floor(t / mu)), traj.n_steps() - 1);
            path_csv.cell(t).cell(traj.alpha(n)).cell(interpolate(traj, t)).cell(ode.values[k]).end_row();
        }

        // Replication 0 scaled-error series.
        RandomStream rng_z = s.stream(0);
        const Trajectory ztraj = run_tracking(s.regime(), s.signal, s.filter, s.n_steps, rng_z);
        const ScaledErrorSeries series =
            scaled_error(ztraj, centering, centering_reference(s, centering), s.effective_burn_in());
        const char* symbol = centering == Centering::chain ? "u" : centering == Centering::initial_mean ? "v" : "z";
        result.files.push_back(out / "scaled_error.csv");
        std::vector<std::string> zcols{"n"};
        for (const auto& c : component_names(symbol, r)) zcols.push_back(c);
        CsvWriter z_csv(result.files.back(), config, fmt::format("limits scaled_error centering={}", to_string(centering)),
                        zcols);
        for (std::size_t k = 0; k < series.values.size(); ++k) {
            z_csv.cell(static_cast<long>(series.burn_in + static_cast<int>(k))).cell(series.values[k]).end_row();
        }
    }

    if (config.wants("json")) {
        ordered_json summary = summary_header(config, "limits");
        summary["algorithm"] = to_string(alg);
        summary["limit_kind"] = to_string(sys.kind);
        summary["mu"] = mu;
        summary["epsilon"] = s.epsilon();
        summary["effective_matrix"] = matrix_json(sys.matrices.front());

        ordered_json eq;
        if (sys.kind == RegimeKind::switched) {
            ordered_json per_state = ordered_json::array();
            for (int i = 0; i < sys.num_states(); ++i) {
                const auto k = static_cast<std::size_t>(i);
                per_state.push_back({{"state", i}, {"equilibrium", vector_json(sys.states[k])},
                                     {"field_norm", switched_field(sys, i, sys.states[k]).norm()}});
            }
            eq["per_state"] = per_state;
        } else {
            const Vector target = mean_parameter(sys.states, sys.distribution);
            const Vector field = sys.kind == RegimeKind::slow ? slow_field(sys, target) : fast_field(sys, target);
            eq["equilibrium"] = vector_json(target);
            eq["field_norm"] = field.norm();
        }
        summary["equilibrium"] = eq;

        ordered_json d;
        d["dt_ode"] = config.limits.dt_ode;
        d["horizon"] = config.limits.horizon;
        d["mean_deviation_mu"] = dev.mean;
        if (dev_half) {
            long decreased = 0;
            for (std::size_t i = 0; i < dev.per_replication.size(); ++i) {
                if (dev_half->per_replication[i] < dev.per_replication[i]) ++decreased;
            }
            d["mean_deviation_half_mu"] = dev_half->mean;
            d["fraction_decreased"] = static_cast<double>(decreased) / static_cast<double>(dev.per_replication.size());
        }
        summary["deviation"] = d;

        ordered_json df;
        df["centering"] = to_string(centering);
        df["burn_in"] = s.effective_burn_in();
        df["samples"] = diff.samples;
        df["drift"] = matrix_json(diff.drift);
        df["noise_cov"] = matrix_json(diff.noise.sigma);
        df["empirical_mean"] = vector_json(diff.empirical_mean);
        df["empirical_cov"] = matrix_json(diff.empirical_cov);
        df["reference_cov"] = matrix_json(diff.reference_cov);
        df["rel_discrepancy"] = diff.rel_discrepancy;
        if (!diff.per_regime.empty()) {
            ordered_json per = ordered_json::array();
            for (const auto& rc : diff.per_regime) {
                per.push_back({{"state", rc.state}, {"samples", rc.samples}, {"empirical_cov", matrix_json(rc.empirical)},
                               {"reference_cov", matrix_json(rc.reference)}, {"rel_discrepancy", rc.rel_discrepancy}});
            }
            df["per_regime"] = per;
        }
        summary["diffusion"] = df;
        result.files.push_back(out / "limits_summary.json");
        write_json(result.files.back(), summary);
    }
    result.report.wall_clock_seconds = elapsed_since(start);
    return result;
}

CommandResult run_cumavg(const RunConfig& config, const std::filesystem::path& out) {
    CommandResult result;
    result.report.config_hash = config.hash();
    result.report.master_seed = config.master_seed;
    prepare(out);
    const auto algs = config.algorithms();
    std::vector<Trajectory> trajs;
    for (Algorithm alg : algs) {
        const Scenario s = config.scenario(alg);
        RandomStream rng = s.stream(0);
        trajs.push_back(run_tracking(s.regime(), s.signal, s.filter, s.n_steps, rng));
    }
    if (!config.wants("csv")) return result;
    const int r = static_cast<int>(config.filter.theta0.size());
    std::vector<std::string> cols{"n"};
    for (const auto& c : component_names("cumavg_alpha", r)) cols.push_back(c);
    for (Algorithm alg : algs) {
        for (const auto& c : component_names(fmt::format("cumavg_theta_{}", to_string(alg)), r)) cols.push_back(c);
    }
    result.files.push_back(out / "cumavg.csv");
    CsvWriter csv(result.files.back(), config, "cumavg", cols);
    Vector alpha_sum = Vector::Zero(r);
    std::vector<Vector> theta_sum(algs.size(), Vector::Zero(r));
    const int len = config.n_steps + 1;
    for (int n = 0; n < len; ++n) {
        const double count = n + 1;
        alpha_sum += trajs.front().alpha(n);
        csv.cell(n).cell(Vector(alpha_sum / count));
        for (std::size_t a = 0; a < algs.size(); ++a) {
            theta_sum[a] += trajs[a].thetas[static_cast<std::size_t>(n)];
            csv.cell(Vector(theta_sum[a] / count));
        }
        csv.end_row();
    }
    return result;
}

namespace {

// Probability of alpha_n by summing the weight of every path of length n.
Vector enumerate_paths(const Matrix& p, const Vector& p0, int n) {
    const int m0 = static_cast<int>(p.rows());
    Vector out = Vector::Zero(m0);
    std::vector<int> path(static_cast<std::size_t>(n) + 1, 0);
    while (true) {
        double w = p0[path[0]];
        for (int k = 0; k < n; ++k) w *= p(path[static_cast<std::size_t>(k)], path[static_cast<std::size_t>(k) + 1]);
        out[path.back()] += w;
        int k = n;
        while (k >= 0 && ++path[static_cast<std::size_t>(k)] == m0) path[static_cast<std::size_t>(k--)] = 0;
        if (k < 0) break;
    }
    return out;
}

}  // namespace

CommandResult run_selftest(const RunConfig& config, const std::filesystem::path& out, int threads) {
    CommandResult result;
    result.report.config_hash = config.hash();
    result.report.master_seed = config.master_seed;
    prepare(out);
    ordered_json checks = ordered_json::array();
    auto record = [&](const std::string& name, double value, double tolerance, bool passed) {
        checks.push_back({{"name", name}, {"value", value}, {"tolerance", tolerance}, {"passed", passed}});
        result.passed = result.passed && passed;
    };

    const Scenario s = config.scenario(config.algorithms().front(), threads);
    const RegimeModel regime = s.regime();

    const Vector nu = stationary_distribution(s.generator);
    const double residual = (nu.transpose() * s.generator.entries()).cwiseAbs().maxCoeff();
    record("stationary_residual", residual, 1e-10, residual <= 1e-10);

    const Matrix p = transition_matrix(regime);
    const double row_err = (p.rowwise().sum().array() - 1.0).abs().maxCoeff();
    record("transition_row_sums", row_err, 1e-12, row_err <= 1e-12 && p.minCoeff() >= 0.0);

    const int n_enum = std::min(8, std::max(1, static_cast<int>(std::floor(12.0 / std::log2(regime.num_states() + 1.0)))));
    Vector power = s.initial_dist;
    for (int k = 0; k < n_enum; ++k) power = (power.transpose() * p).transpose();
    const double enum_err = (enumerate_paths(p, s.initial_dist, n_enum) - power).cwiseAbs().maxCoeff();
    record("enumeration_oracle", enum_err, 1e-12, enum_err <= 1e-12);

    if (s.signal.is_gaussian()) {
        RandomStream rng = RandomStream::derive(s.master_seed, 0xE1E1ull << 32);
        const Matrix closed = effective_matrix_closed_form(s.signal);
        const MonteCarloJacobian mc = effective_matrix_monte_carlo(s.signal, 1'000'000, 0.01, rng);
        const double rel = (mc.value - closed).cwiseAbs().maxCoeff() / closed.norm();
        record("effective_matrix_monte_carlo", rel, 0.05, rel <= 0.05);

        const Matrix lyap = lyapunov_solve(closed, s.signal.regressor().covariance);
        const double lres =
            (closed * lyap + lyap * closed.transpose() - s.signal.regressor().covariance).cwiseAbs().maxCoeff();
        record("lyapunov_residual", lres, 1e-10, lres <= 1e-10);
    }

    // Parallel and serial MSE must agree bit for bit.
    Scenario small = s;
    small.n_replications = std::min(s.n_replications, 64);
    small.n_steps = std::min(s.n_steps, 400);
    small.threads = 1;
    const MseCurve serial = mse_curve(small);
    small.threads = std::max(threads, 2);
    const MseCurve parallel = mse_curve(small);
    const bool identical = serial.mean == parallel.mean && serial.std_error == parallel.std_error;
    record("thread_count_invariance", identical ? 0.0 : 1.0, 0.0, identical);

    auto files = run_track(config, out).files;
    result.files.insert(result.files.end(), files.begin(), files.end());

    if (config.wants("csv")) {
        result.files.push_back(out / "selftest_mse.csv");
        CsvWriter csv(result.files.back(), config, "selftest mse", {"n", "mse"});
        for (std::size_t n = 0; n < serial.mean.size(); ++n) csv.cell(static_cast<long>(n)).cell(serial.mean[n]).end_row();
    }
    ordered_json summary = summary_header(config, "selftest");
    summary["checks"] = checks;
    summary["passed"] = result.passed;
    result.files.push_back(out / "selftest.json");
    write_json(result.files.back(), summary);
    return result;
}

CommandResult run_command(const std::string& command, const RunConfig& config, const std::filesystem::path& out,
                          int threads) {
    if (command == "track") return run_track(config, out);
    if (command == "mse") return run_mse(config, out, threads);
    if (command == "limits") return run_limits(config, out, threads);
    if (command == "cumavg") return run_cumavg(config, out);
    if (command == "selftest") return run_selftest(config, out, threads);
    throw Error(ErrorCode::ConfigError, "unknown command '" + command + "'");
}

}  // namespace signtrack
