#include "signtrack/regime.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace signtrack {

namespace {

constexpr double kRowSumTol = 1e-12;
constexpr double kDistTol = 1e-12;

std::vector<bool> reachable(const Matrix& q, bool forward) {
    const int n = static_cast<int>(q.rows());
    std::vector<bool> seen(n, false);
    std::vector<int> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
        const int i = stack.back();
        stack.pop_back();
        for (int j = 0; j < n; ++j) {
            const double rate = forward ? q(i, j) : q(j, i);
            if (j != i && rate > 0.0 && !seen[j]) {
                seen[j] = true;
                stack.push_back(j);
            }
        }
    }
    return seen;
}

}  // namespace

GeneratorMatrix GeneratorMatrix::validate(const Matrix& entries) {
    if (entries.rows() != entries.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "generator must be square");
    }
    const int n = static_cast<int>(entries.rows());
    if (n < 2) throw Error(ErrorCode::InvalidArgument, "generator needs at least two states");
    if (!entries.allFinite()) throw Error(ErrorCode::InvalidArgument, "generator has non-finite entries");
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i != j && entries(i, j) < 0.0) {
                throw Error(ErrorCode::NegativeOffDiagonal,
                            "q(" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ") < 0", i + 1);
            }
        }
    }
    for (int i = 0; i < n; ++i) {
        const double s = entries.row(i).sum();
        if (std::abs(s) > kRowSumTol) {
            throw Error(ErrorCode::RowSumNonzero,
                        "row " + std::to_string(i + 1) + " sums to " + std::to_string(s), i + 1);
        }
    }
    const auto fwd = reachable(entries, true);
    const auto bwd = reachable(entries, false);
    for (int i = 0; i < n; ++i) {
        if (!fwd[i] || !bwd[i]) {
            throw Error(ErrorCode::NotIrreducible,
                        "state " + std::to_string(i + 1) + " is not strongly connected to state 1", i + 1);
        }
    }
    return GeneratorMatrix(entries);
}

double GeneratorMatrix::max_exit_rate() const { return (-q_.diagonal()).maxCoeff(); }

void validate_distribution(const Vector& p, int n, const char* what) {
    if (p.size() != n) {
        throw Error(ErrorCode::DimensionMismatch,
                    std::string(what) + " has length " + std::to_string(p.size()) + ", expected " + std::to_string(n));
    }
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(p[i]) || p[i] < 0.0) {
            throw Error(ErrorCode::InvalidDistribution, std::string(what) + " has a negative entry", i + 1);
        }
    }
    if (std::abs(p.sum() - 1.0) > kDistTol) {
        throw Error(ErrorCode::InvalidDistribution, std::string(what) + " does not sum to 1");
    }
}

RegimeModel::RegimeModel(std::vector<Vector> states, GeneratorMatrix generator, double epsilon, Vector initial_dist)
    : states_(std::move(states)),
      generator_(std::move(generator)),
      epsilon_(epsilon),
      initial_dist_(std::move(initial_dist)) {
    const int m0 = generator_.size();
    if (static_cast<int>(states_.size()) != m0) {
        throw Error(ErrorCode::DimensionMismatch, "number of states does not match the generator");
    }
    const auto r = states_.front().size();
    if (r == 0) throw Error(ErrorCode::InvalidArgument, "states must have positive dimension");
    for (int i = 0; i < m0; ++i) {
        if (states_[i].size() != r) {
            throw Error(ErrorCode::DimensionMismatch, "state " + std::to_string(i + 1) + " has the wrong dimension", i + 1);
        }
        for (int j = 0; j < i; ++j) {
            if (states_[i] == states_[j]) {
                throw Error(ErrorCode::InvalidArgument,
                            "states " + std::to_string(j + 1) + " and " + std::to_string(i + 1) + " coincide", i + 1);
            }
        }
    }
    validate_distribution(initial_dist_, m0, "initial distribution");
    if (!std::isfinite(epsilon_) || epsilon_ < 0.0) {
        throw Error(ErrorCode::InadmissibleEpsilon, "epsilon must be finite and nonnegative");
    }
    if (epsilon_ * generator_.max_exit_rate() > 1.0) {
        throw Error(ErrorCode::InadmissibleEpsilon, "epsilon * max|q_ii| exceeds 1");
    }
}

int ContinuousChainPath::state_at(double t) const {
    const auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
    return states[static_cast<std::size_t>(it - jump_times.begin())];
}

ContinuousChainPath ContinuousChainPath::from_discrete(const DiscreteChainPath& path, double step_length) {
    ContinuousChainPath out;
    out.states.push_back(path.indices.front());
    for (std::size_t k = 1; k < path.indices.size(); ++k) {
        if (path.indices[k] != path.indices[k - 1]) {
            out.jump_times.push_back(static_cast<double>(k) * step_length);
            out.states.push_back(path.indices[k]);
        }
    }
    out.horizon = static_cast<double>(path.indices.size()) * step_length;
    return out;
}

Matrix transition_matrix(const RegimeModel& model) {
    const int m0 = model.num_states();
    Matrix p = Matrix::Identity(m0, m0) + model.epsilon() * model.generator().entries();
    // Each diagonal is 1 - sum of its off-diagonals, so rows sum to 1 exactly
    // up to one rounding.
    for (int i = 0; i < m0; ++i) {
        double off = 0.0;
        for (int j = 0; j < m0; ++j) {
            if (j != i) off += p(i, j);
        }
        p(i, i) = 1.0 - off;
    }
    return p;
}

Vector stationary_distribution(const GeneratorMatrix& gen) {
    const int m0 = gen.size();
    // nu Q = 0 with one balance equation replaced by the normalization.
    Matrix system = gen.entries().transpose();
    system.row(m0 - 1).setOnes();
    Vector rhs = Vector::Zero(m0);
    rhs[m0 - 1] = 1.0;
    Eigen::PartialPivLU<Matrix> lu(system);
    if (!(lu.rcond() > 1e-14)) {
        throw Error(ErrorCode::SingularSystem, "stationary system is numerically singular");
    }
    Vector nu = lu.solve(rhs);
    if (!nu.allFinite()) throw Error(ErrorCode::SingularSystem, "stationary solve produced non-finite values");
    nu = nu.cwiseMax(0.0);
    nu /= nu.sum();
    return nu;
}

DiscreteChainPath sample_dtmc(const RegimeModel& model, int n_steps, RandomStream& rng) {
    if (n_steps < 0) throw Error(ErrorCode::InvalidArgument, "n_steps must be nonnegative");
    const Matrix p = transition_matrix(model);
    DiscreteChainPath path;
    path.indices.reserve(static_cast<std::size_t>(n_steps) + 1);
    int state = sample_categorical(model.initial_dist(), rng.uniform());
    path.indices.push_back(state);
    for (int k = 0; k < n_steps; ++k) {
        state = sample_categorical(p.row(state).transpose(), rng.uniform());
        path.indices.push_back(state);
    }
    return path;
}

ContinuousChainPath sample_ctmc(const GeneratorMatrix& gen, const Vector& p0, double horizon, RandomStream& rng) {
    if (!(horizon > 0.0)) throw Error(ErrorCode::InvalidArgument, "horizon must be positive");
    const int m0 = gen.size();
    validate_distribution(p0, m0, "initial distribution");
    const Matrix& q = gen.entries();

    ContinuousChainPath path;
    path.horizon = horizon;
    int state = sample_categorical(p0, rng.uniform());
    path.states.push_back(state);
    double t = 0.0;
    Vector jump(m0);
    while (true) {
        const double rate = -q(state, state);
        t += -std::log1p(-rng.uniform()) / rate;
        if (t > horizon) break;
        for (int j = 0; j < m0; ++j) jump[j] = j == state ? 0.0 : q(state, j) / rate;
        state = sample_categorical(jump, rng.uniform());
        path.jump_times.push_back(t);
        path.states.push_back(state);
    }
    return path;
}

Vector evolve_probability(const Vector& p0, const GeneratorMatrix& gen, double t) {
    validate_distribution(p0, gen.size(), "initial distribution");
    if (!(t >= 0.0)) throw Error(ErrorCode::InvalidArgument, "t must be nonnegative");
    if (t == 0.0) return p0;
    const Matrix& q = gen.entries();
    const double max_step = 1e-3 / gen.max_exit_rate();
    const auto n = static_cast<long>(std::ceil(t / max_step));
    const double h = t / static_cast<double>(n);

    Eigen::RowVectorXd p = p0.transpose();
    for (long k = 0; k < n; ++k) {
        const Eigen::RowVectorXd k1 = p * q;
        const Eigen::RowVectorXd k2 = (p + 0.5 * h * k1) * q;
        const Eigen::RowVectorXd k3 = (p + 0.5 * h * k2) * q;
        const Eigen::RowVectorXd k4 = (p + h * k3) * q;
        p += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    p = p.cwiseMax(0.0);
    p /= p.sum();
    return p.transpose();
}

Vector mean_parameter(const std::vector<Vector>& states, const Vector& dist) {
    if (states.empty() || static_cast<Eigen::Index>(states.size()) != dist.size()) {
        throw Error(ErrorCode::DimensionMismatch, "states and distribution lengths differ");
    }
    Vector mean = Vector::Zero(states.front().size());
    for (std::size_t i = 0; i < states.size(); ++i) {
        if (states[i].size() != mean.size()) throw Error(ErrorCode::DimensionMismatch, "states differ in dimension");
        mean += dist[static_cast<Eigen::Index>(i)] * states[i];
    }
    return mean;
}

}  // namespace signtrack
