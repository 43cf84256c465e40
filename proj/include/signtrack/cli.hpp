#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "signtrack/experiment.hpp"

namespace signtrack {

inline constexpr std::uint64_t kDefaultSeed = 20110905;

struct RegimeConfig {
    std::vector<std::vector<double>> states;
    std::vector<std::vector<double>> generator;
    std::vector<double> initial_distribution;
    bool operator==(const RegimeConfig&) const = default;
};

struct RegressorConfig {
    std::string kind = "gaussian";
    std::vector<std::vector<double>> covariance;
    std::optional<double> clip;
    bool operator==(const RegressorConfig&) const = default;
};

struct NoiseConfig {
    std::string kind = "gaussian";
    double variance = 1.0;
    std::optional<double> clip;
    bool operator==(const NoiseConfig&) const = default;
};

struct FilterSection {
    std::vector<std::string> algorithms{"SE", "SR", "LMS"};
    double mu = 0.05;
    std::vector<double> theta0;
    double divergence_guard = 1e6;
    bool operator==(const FilterSection&) const = default;
};

struct CouplingConfig {
    std::string kind = "proportional";
    double parameter = 1.0;
    bool operator==(const CouplingConfig&) const = default;
};

struct LimitsConfig {
    double dt_ode = 0.0125;
    double horizon = 10.0;
    bool halving = true;  // also run the ode deviation at mu / 2 on paired seeds
    bool operator==(const LimitsConfig&) const = default;
};

struct OutputConfig {
    std::string directory = "out";
    std::vector<std::string> formats{"csv", "json"};
    bool operator==(const OutputConfig&) const = default;
};

/// Everything one CLI run needs. Parsing rejects unknown keys and names the
/// offending field; `to_json` writes every field so parse -> serialize ->
/// parse is the identity.
struct RunConfig {
    std::string command = "track";
    RegimeConfig regime;
    RegressorConfig regressor;
    NoiseConfig noise;
    FilterSection filter;
    CouplingConfig coupling;
    int n_steps = 1000;
    int replications = 1;
    std::uint64_t master_seed = kDefaultSeed;
    std::optional<int> burn_in;
    std::vector<double> mu_grid;
    LimitsConfig limits;
    OutputConfig output;

    bool operator==(const RunConfig&) const = default;

    nlohmann::ordered_json to_json() const;
    static RunConfig from_json(const nlohmann::ordered_json& j);

    /// Hex FNV-1a digest of the canonical serialization without the output
    /// section.
    std::string hash() const;

    std::vector<Algorithm> algorithms() const;
    /// Builds and validates the scenario for `alg`; semantic errors surface
    /// as Error(ConfigError).
    Scenario scenario(Algorithm alg, int threads = 1) const;
    bool wants(const std::string& format) const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

std::vector<std::string> preset_names();
/// e_eq_mu (eps = 0.6 mu), e_ll_mu (eps = mu^2), e_gg_mu (eps = sqrt(mu)).
RunConfig preset(const std::string& name);

/// Fixed-precision (17 significant digits) number formatting used in CSVs.
std::string format_number(double x);

struct CommandResult {
    std::vector<std::filesystem::path> files;
    bool passed = true;  // selftest verdict; always true for other commands
    ExperimentReport report;
};

CommandResult run_track(const RunConfig& config, const std::filesystem::path& out);
CommandResult run_mse(const RunConfig& config, const std::filesystem::path& out, int threads);
CommandResult run_limits(const RunConfig& config, const std::filesystem::path& out, int threads);
CommandResult run_cumavg(const RunConfig& config, const std::filesystem::path& out);
CommandResult run_selftest(const RunConfig& config, const std::filesystem::path& out, int threads);

CommandResult run_command(const std::string& command, const RunConfig& config, const std::filesystem::path& out,
                          int threads);

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitDivergence = 3, kExitSelftestFailed = 4 };

}  // namespace signtrack
