#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "signtrack/filter.hpp"
#include "signtrack/limits.hpp"

namespace signtrack {

/// Rule eps(mu) tying the chain's transition scale to the filter stepsize.
struct Coupling {
    enum class Kind { proportional, slow, fast };

    Kind kind = Kind::proportional;
    double parameter = 1.0;  // c, Delta or gamma

    static Coupling proportional(double c) { return {Kind::proportional, c}; }
    static Coupling slow(double delta) { return {Kind::slow, delta}; }
    static Coupling fast(double gamma) { return {Kind::fast, gamma}; }

    /// c > 0 for proportional, Delta > 0 for slow, 1/2 <= gamma < 1 for fast.
    void validate() const;
    double epsilon(double mu) const;
    RegimeKind limit_kind() const;
};

const char* to_string(Coupling::Kind kind);

struct Scenario {
    std::vector<Vector> states;
    GeneratorMatrix generator;
    Vector initial_dist;
    SignalModel signal;
    FilterConfig filter;
    Coupling coupling;
    int n_steps = 1000;
    int n_replications = 1;
    std::uint64_t master_seed = 0;
    std::optional<int> burn_in;  // overrides burn_in_default(mu)
    int threads = 1;

    void validate() const;
    double epsilon() const { return coupling.epsilon(filter.mu); }
    RegimeModel regime() const;
    int effective_burn_in() const;
    /// Same scenario with stepsize `mu`; the coupling recomputes eps.
    Scenario with_mu(double mu) const;
    RandomStream stream(int replication) const {
        return RandomStream::derive(master_seed, static_cast<std::uint64_t>(replication));
    }
};

/// mu + eps + eps^2/mu: the shape of the mean-square error bound, constant 1.
double mse_bound(double mu, double epsilon);

/// ceil(5 / mu).
int burn_in_default(double mu);

struct MseCurve {
    std::vector<double> mean;                      // per iterate n = 0..n_steps
    std::optional<std::vector<double>> std_error;  // absent for one replication
    int replications = 0;
};

/// Per-iterate E|alpha_n - theta_n|^2 over independent replications.
/// Output is bitwise independent of `scenario.threads`.
MseCurve mse_curve(const Scenario& scenario);

struct SteadyState {
    double mse = 0.0;
    double third_quarter = 0.0;
    double fourth_quarter = 0.0;
    bool plateau = false;  // last two quarters within 10%
};

/// Mean over the final half of the iterates after `burn_in`.
SteadyState steady_state(const MseCurve& curve, int burn_in);

/// Piecewise-constant interpolation theta(t) = theta_floor(t / mu).
Vector interpolate(const Trajectory& traj, double t);

/// Effective matrices from the scenario's signal model, assembled for the
/// limit its coupling selects.
LimitSystem limit_system(const Scenario& scenario);

struct DeviationReport {
    RegimeKind kind = RegimeKind::switched;
    std::vector<double> per_replication;  // sup_t |theta^mu(t) - theta(t)|
    double mean = 0.0;
};

/// Sup-norm distance between the interpolated iterates and the limit ODE on
/// [0, horizon]. For the switched kind the ODE is driven by the same chain
/// realization, holding alpha_n on [n mu, (n + 1) mu).
DeviationReport ode_deviation(const Scenario& scenario, double dt_ode, double horizon);

/// Deviation path for a single trajectory, exposed for plotting.
SampledPath limit_path_for(const Scenario& scenario, const Trajectory& traj, double dt_ode, double horizon);

enum class Centering { chain, initial_mean, stationary_mean };

const char* to_string(Centering c);

/// The centering that matches the coupling (proportional -> chain,
/// slow -> initial_mean, fast -> stationary_mean).
Centering matching_centering(const Coupling& coupling);

/// alpha_* (initial_mean) or alpha-bar (stationary_mean); empty for chain.
Vector centering_reference(const Scenario& scenario, Centering centering);

struct ScaledErrorSeries {
    std::vector<Vector> values;  // iterates burn_in..n_steps
    std::vector<int> regimes;    // chain index at each retained iterate
    Centering centering = Centering::chain;
    int burn_in = 0;
};

/// (center - theta_n) / sqrt(mu) after dropping the first `burn_in`
/// iterates; center is alpha_n for chain centering.
ScaledErrorSeries scaled_error(const Trajectory& traj, Centering centering, const Vector& reference, int burn_in);

struct RegimeCovariance {
    int state = 0;
    long samples = 0;
    Matrix empirical;
    Matrix reference;
    double rel_discrepancy = 0.0;
};

struct DiffusionReport {
    Centering centering = Centering::chain;
    Matrix drift;  // A^(*) or A-bar; per-regime matrices for chain centering
    NoiseCovariance noise;
    Vector empirical_mean;
    Matrix empirical_cov;
    Matrix reference_cov;
    double rel_discrepancy = 0.0;  // Frobenius, relative to the reference
    long samples = 0;
    std::vector<RegimeCovariance> per_regime;  // chain centering only
};

/// Pooled covariance of the scaled-error tail (final half after burn-in)
/// across replications against the stationary covariance of the OU limit.
DiffusionReport diffusion_check(const Scenario& scenario, Centering centering);

struct ExperimentReport {
    std::optional<MseCurve> mse;
    std::optional<SteadyState> steady;
    std::optional<double> bound;
    std::optional<DeviationReport> deviation;
    std::optional<DiffusionReport> diffusion;
    std::string config_hash;
    std::uint64_t master_seed = 0;
    double wall_clock_seconds = 0.0;
};

}  // namespace signtrack
