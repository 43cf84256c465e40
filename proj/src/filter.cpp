#include "signtrack/filter.hpp"

#include <cmath>
#include <string>

namespace signtrack {

namespace {

void check_dims(const Vector& theta, const Vector& phi) {
    if (theta.size() != phi.size()) {
        throw Error(ErrorCode::DimensionMismatch, "estimate and regressor dimensions differ");
    }
}

// In-place update shared by the public step functions and the driver.
void apply_step(Algorithm alg, Vector& theta, const Vector& phi, double y, double mu) {
    const double residual = y - phi.dot(theta);
    switch (alg) {
        case Algorithm::SE: {
            const int s = sign(residual);
            if (s != 0) theta += (mu * s) * phi;
            break;
        }
        case Algorithm::SR:
            for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] += mu * sign(phi[i]) * residual;
            break;
        case Algorithm::LMS:
            theta += (mu * residual) * phi;
            break;
    }
}

}  // namespace

const char* to_string(Algorithm alg) {
    switch (alg) {
        case Algorithm::SE: return "SE";
        case Algorithm::SR: return "SR";
        case Algorithm::LMS: return "LMS";
    }
    return "?";
}

Algorithm parse_algorithm(const std::string& name) {
    if (name == "SE") return Algorithm::SE;
    if (name == "SR") return Algorithm::SR;
    if (name == "LMS") return Algorithm::LMS;
    throw Error(ErrorCode::ConfigError, "unknown algorithm '" + name + "' (expected SE, SR or LMS)");
}

void FilterConfig::validate() const {
    if (!std::isfinite(mu) || mu < 0.0) throw Error(ErrorCode::InvalidArgument, "mu must be finite and nonnegative");
    if (theta0.size() == 0 || !theta0.allFinite()) throw Error(ErrorCode::InvalidArgument, "theta0 must be finite");
    if (!(divergence_guard > 0.0)) throw Error(ErrorCode::InvalidArgument, "divergence guard must be positive");
}

Vector filter_step(Algorithm alg, const Vector& theta, const Vector& phi, double y, double mu) {
    check_dims(theta, phi);
    Vector next = theta;
    apply_step(alg, next, phi, y, mu);
    return next;
}

Vector se_step(const Vector& theta, const Vector& phi, double y, double mu) {
    return filter_step(Algorithm::SE, theta, phi, y, mu);
}

Vector sr_step(const Vector& theta, const Vector& phi, double y, double mu) {
    return filter_step(Algorithm::SR, theta, phi, y, mu);
}

Vector lms_step(const Vector& theta, const Vector& phi, double y, double mu) {
    return filter_step(Algorithm::LMS, theta, phi, y, mu);
}

Trajectory run_tracking(const RegimeModel& regime, const SignalModel& signal, const FilterConfig& filter, int n_steps,
                        RandomStream& rng) {
    filter.validate();
    if (regime.dim() != signal.dim() || regime.dim() != filter.theta0.size()) {
        throw Error(ErrorCode::DimensionMismatch, "regime, signal and filter dimensions disagree");
    }

    Trajectory traj;
    traj.chain = sample_dtmc(regime, n_steps, rng);
    traj.states = regime.states();
    traj.mu = filter.mu;
    traj.epsilon = regime.epsilon();
    traj.thetas.reserve(static_cast<std::size_t>(n_steps) + 1);
    traj.observations.reserve(static_cast<std::size_t>(n_steps));

    Vector theta = filter.theta0;
    Vector phi(regime.dim());
    traj.thetas.push_back(theta);
    for (int n = 0; n < n_steps; ++n) {
        const double e = signal.sample(rng, phi);
        const double y = phi.dot(traj.alpha(n)) + e;
        traj.observations.push_back(y);
        apply_step(filter.algorithm, theta, phi, y, filter.mu);
        if (!theta.allFinite() || theta.norm() > filter.divergence_guard) {
            throw Error(ErrorCode::DivergenceDetected,
                        "estimate norm exceeded " + std::to_string(filter.divergence_guard) + " at step " +
                            std::to_string(n + 1),
                        n + 1);
        }
        traj.thetas.push_back(theta);
    }
    return traj;
}

}  // namespace signtrack
