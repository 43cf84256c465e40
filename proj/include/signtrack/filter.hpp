#pragma once

#include <vector>

#include "signtrack/regime.hpp"
#include "signtrack/signal.hpp"

namespace signtrack {

enum class Algorithm { SE, SR, LMS };

const char* to_string(Algorithm alg);
Algorithm parse_algorithm(const std::string& name);

struct FilterConfig {
    Algorithm algorithm = Algorithm::SE;
    double mu = 0.05;
    Vector theta0;
    double divergence_guard = 1e6;

    void validate() const;
};

/// One tracking replication. `thetas` and `chain.indices` have n + 1 entries,
/// `observations` has n.
struct Trajectory {
    std::vector<Vector> thetas;
    DiscreteChainPath chain;
    std::vector<double> observations;
    std::vector<Vector> states;
    double mu = 0.0;
    double epsilon = 0.0;

    int n_steps() const { return static_cast<int>(observations.size()); }
    const Vector& alpha(int n) const { return states[static_cast<std::size_t>(chain.indices[static_cast<std::size_t>(n)])]; }
};

/// sgn(x) = 1{x > 0} - 1{x < 0}; sgn(0) = 0.
inline int sign(double x) { return (x > 0.0) - (x < 0.0); }

/// theta + mu * phi * sgn(y - phi' theta).
Vector se_step(const Vector& theta, const Vector& phi, double y, double mu);
/// theta + mu * sgn(phi) * (y - phi' theta), sign taken componentwise.
Vector sr_step(const Vector& theta, const Vector& phi, double y, double mu);
/// theta + mu * phi * (y - phi' theta).
Vector lms_step(const Vector& theta, const Vector& phi, double y, double mu);

Vector filter_step(Algorithm alg, const Vector& theta, const Vector& phi, double y, double mu);

/// Draws the whole chain path first, then one signal pair per step, so runs
/// with different algorithms on equal streams see identical chain and signal
/// draws.
Trajectory run_tracking(const RegimeModel& regime, const SignalModel& signal, const FilterConfig& filter, int n_steps,
                        RandomStream& rng);

}  // namespace signtrack
