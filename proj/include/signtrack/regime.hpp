#pragma once

#include <vector>

#include "signtrack/core.hpp"

namespace signtrack {

/// Irreducible generator of a continuous-time Markov chain on m0 >= 2 states.
class GeneratorMatrix {
public:
    /// Checks off-diagonal signs, zero row sums (1e-12) and strong
    /// connectivity; throws naming the offending row or entry.
    static GeneratorMatrix validate(const Matrix& entries);

    const Matrix& entries() const { return q_; }
    int size() const { return static_cast<int>(q_.rows()); }
    double max_exit_rate() const;

private:
    explicit GeneratorMatrix(Matrix q) : q_(std::move(q)) {}
    Matrix q_;
};

/// Finite-state parameter chain with transition matrix I + epsilon * Q.
class RegimeModel {
public:
    RegimeModel(std::vector<Vector> states, GeneratorMatrix generator, double epsilon, Vector initial_dist);

    const std::vector<Vector>& states() const { return states_; }
    const GeneratorMatrix& generator() const { return generator_; }
    double epsilon() const { return epsilon_; }
    const Vector& initial_dist() const { return initial_dist_; }
    int num_states() const { return generator_.size(); }
    int dim() const { return static_cast<int>(states_.front().size()); }

private:
    std::vector<Vector> states_;
    GeneratorMatrix generator_;
    double epsilon_;
    Vector initial_dist_;
};

struct DiscreteChainPath {
    std::vector<int> indices;  // 0-based state index per step
};

/// Piecewise-constant path on [0, horizon]: `states[0]` holds from time 0 and
/// `states[k + 1]` from `jump_times[k]` on.
struct ContinuousChainPath {
    std::vector<double> jump_times;
    std::vector<int> states;
    double horizon = 0.0;

    int state_at(double t) const;
    /// Continuous path that switches at step boundaries k * step_length.
    static ContinuousChainPath from_discrete(const DiscreteChainPath& path, double step_length);
};

/// Throws InvalidDistribution unless `p` is a probability vector of length n.
void validate_distribution(const Vector& p, int n, const char* what);

Matrix transition_matrix(const RegimeModel& model);

Vector stationary_distribution(const GeneratorMatrix& gen);

DiscreteChainPath sample_dtmc(const RegimeModel& model, int n_steps, RandomStream& rng);

ContinuousChainPath sample_ctmc(const GeneratorMatrix& gen, const Vector& p0, double horizon, RandomStream& rng);

/// p(t) = p0 exp(Qt) by classical RK4 on dp/dt = pQ.
Vector evolve_probability(const Vector& p0, const GeneratorMatrix& gen, double t);

Vector mean_parameter(const std::vector<Vector>& states, const Vector& dist);

}  // namespace signtrack
