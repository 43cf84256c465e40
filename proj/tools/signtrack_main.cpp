#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "signtrack/cli.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::string preset_name;
    std::optional<std::uint64_t> seed;
    std::optional<int> reps;
    std::string out;
    int threads = 1;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    auto* cfg = cmd->add_option("--config", flags.config_path, "JSON run configuration");
    cmd->add_option("--preset", flags.preset_name, "named scenario: e_eq_mu, e_ll_mu, e_gg_mu")->excludes(cfg);
    cmd->add_option("--seed", flags.seed, "master seed override");
    cmd->add_option("--reps", flags.reps, "replication count override")->check(CLI::PositiveNumber);
    cmd->add_option("--out", flags.out, "output directory (overrides output.directory)");
    cmd->add_option("--threads", flags.threads, "worker threads for replications")->check(CLI::PositiveNumber);
}

int run(const std::string& command, const CommonFlags& flags) {
    using namespace signtrack;
    try {
        RunConfig config = !flags.config_path.empty() ? load_config(flags.config_path)
                                                      : preset(flags.preset_name.empty() ? "e_eq_mu" : flags.preset_name);
        config.command = command;
        if (flags.seed) config.master_seed = *flags.seed;
        if (flags.reps) config.replications = *flags.reps;
        if (!flags.out.empty()) config.output.directory = flags.out;

        const CommandResult result = run_command(command, config, config.output.directory, flags.threads);
        for (const auto& f : result.files) std::cout << f.string() << "\n";
        std::cerr << "config_hash=" << config.hash() << " master_seed=" << config.master_seed
                  << " wall_clock_s=" << result.report.wall_clock_seconds << "\n";
        if (!result.passed) {
            std::cerr << "selftest failed; see selftest.json\n";
            return kExitSelftestFailed;
        }
        return kExitOk;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        if (e.code() == ErrorCode::DivergenceDetected) return kExitDivergence;
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sign-error adaptive filtering of Markov-modulated parameters: simulation and limit checks"};
    app.require_subcommand(1);

    struct Entry {
        const char* name;
        const char* help;
    };
    const Entry entries[] = {
        {"track", "write one trajectory CSV per algorithm"},
        {"mse", "per-iterate mean-square error and bound summary"},
        {"limits", "ODE deviation and scaled-error diffusion checks"},
        {"cumavg", "cumulative averages of the chain and every estimate"},
        {"selftest", "quick internal consistency checks"},
    };
    CommonFlags flags;
    std::string chosen;
    for (const auto& e : entries) {
        auto* cmd = app.add_subcommand(e.name, e.help);
        add_common(cmd, flags);
        cmd->callback([&chosen, name = std::string(e.name)] { chosen = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : signtrack::kExitConfig;
    }
    return run(chosen, flags);
}
