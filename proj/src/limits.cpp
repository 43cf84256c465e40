#include "signtrack/limits.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <unsupported/Eigen/KroneckerProduct>

#include "signtrack/filter.hpp"

namespace signtrack {

namespace {

bool negated_hurwitz(const Matrix& a) {
    const Eigen::VectorXcd eig = a.eigenvalues();
    for (Eigen::Index i = 0; i < eig.size(); ++i) {
        if (!(eig[i].real() > 0.0)) return false;
    }
    return true;
}

void check_kind(const LimitSystem& sys, RegimeKind kind) {
    if (sys.kind != kind) {
        throw Error(ErrorCode::InvalidArgument,
                    std::string("field requires a ") + to_string(kind) + " system, got " + to_string(sys.kind));
    }
}

void check_theta(const LimitSystem& sys, const Vector& theta) {
    if (theta.size() != sys.dim()) throw Error(ErrorCode::DimensionMismatch, "theta has the wrong dimension");
}

Vector weighted_field(const LimitSystem& sys, const Vector& theta) {
    check_theta(sys, theta);
    Vector out = Vector::Zero(sys.dim());
    for (int i = 0; i < sys.num_states(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        out += sys.distribution[i] * (sys.matrices[k] * (sys.states[k] - theta));
    }
    return out;
}

std::vector<double> uniform_grid(double dt, double horizon) {
    if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "dt must be positive");
    if (!(horizon >= 0.0)) throw Error(ErrorCode::InvalidArgument, "horizon must be nonnegative");
    const auto n = static_cast<long>(std::ceil(horizon / dt - 1e-9));
    std::vector<double> t;
    t.reserve(static_cast<std::size_t>(n) + 1);
    for (long k = 0; k <= n; ++k) t.push_back(std::min(static_cast<double>(k) * dt, horizon));
    return t;
}

template <class Field>
void rk4_step(Vector& theta, double h, const Field& field) {
    const Vector k1 = field(theta);
    const Vector k2 = field(theta + 0.5 * h * k1);
    const Vector k3 = field(theta + 0.5 * h * k2);
    const Vector k4 = field(theta + h * k3);
    theta += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

const char* to_string(RegimeKind kind) {
    switch (kind) {
        case RegimeKind::switched: return "switched";
        case RegimeKind::slow: return "slow";
        case RegimeKind::fast: return "fast";
    }
    return "?";
}

void LimitSystem::validate() const {
    if (states.empty()) throw Error(ErrorCode::InvalidArgument, "limit system has no states");
    if (matrices.size() != states.size()) {
        throw Error(ErrorCode::DimensionMismatch, "one effective matrix per state is required");
    }
    const auto r = states.front().size();
    for (std::size_t i = 0; i < states.size(); ++i) {
        if (states[i].size() != r || matrices[i].rows() != r || matrices[i].cols() != r) {
            throw Error(ErrorCode::DimensionMismatch, "state or matrix " + std::to_string(i + 1) + " has the wrong shape",
                        static_cast<long>(i) + 1);
        }
        if (!negated_hurwitz(matrices[i])) {
            throw Error(ErrorCode::NotStable,
                        "A(" + std::to_string(i + 1) + ") has an eigenvalue with nonpositive real part",
                        static_cast<long>(i) + 1);
        }
    }
    if (kind != RegimeKind::switched) {
        validate_distribution(distribution, num_states(), kind == RegimeKind::slow ? "p0" : "nu");
    }
}

LimitSystem LimitSystem::uniform(RegimeKind kind, std::vector<Vector> states, const Matrix& a, Vector distribution) {
    LimitSystem sys;
    sys.matrices.assign(states.size(), a);
    sys.states = std::move(states);
    sys.kind = kind;
    sys.distribution = std::move(distribution);
    sys.validate();
    return sys;
}

Matrix effective_matrix_closed_form(const SignalModel& signal) {
    if (!signal.is_gaussian()) {
        throw Error(ErrorCode::NonGaussianClosedForm, "closed form needs Gaussian regressors and noise");
    }
    return std::sqrt(2.0 / std::numbers::pi) / signal.noise_sd() * signal.regressor().covariance;
}

MonteCarloJacobian effective_matrix_monte_carlo(const SignalModel& signal, long samples, double fd_step,
                                                RandomStream& rng) {
    if (samples < 2) throw Error(ErrorCode::InvalidArgument, "need at least two samples");
    if (!(fd_step > 0.0)) throw Error(ErrorCode::InvalidArgument, "fd_step must be positive");
    const int r = signal.dim();
    Matrix sum = Matrix::Zero(r, r);
    Matrix sum_sq = Matrix::Zero(r, r);
    Vector phi(r);
    const double scale = 1.0 / (2.0 * fd_step);
    for (long k = 0; k < samples; ++k) {
        const double e = signal.sample(rng, phi);
        for (int j = 0; j < r; ++j) {
            const double shift = fd_step * phi[j];
            const int diff = sign(shift + e) - sign(-shift + e);
            if (diff == 0) continue;
            const double w = diff * scale;
            for (int i = 0; i < r; ++i) {
                const double d = w * phi[i];
                sum(i, j) += d;
                sum_sq(i, j) += d * d;
            }
        }
    }
    const double n = static_cast<double>(samples);
    MonteCarloJacobian out;
    out.value = sum / n;
    const Matrix var = ((sum_sq / n) - out.value.cwiseProduct(out.value)).cwiseMax(0.0) * (n / (n - 1.0));
    out.std_error = (var / n).cwiseSqrt();
    const double norm = out.value.norm();
    if (!(norm > 0.0) || !(out.std_error.maxCoeff() <= 0.05 * norm)) {
        throw Error(ErrorCode::MonteCarloVarianceTooHigh,
                    "standard error " + std::to_string(out.std_error.maxCoeff()) + " exceeds 5% of |A| = " +
                        std::to_string(norm));
    }
    return out;
}

Vector switched_field(const LimitSystem& sys, int state_index, const Vector& theta) {
    check_kind(sys, RegimeKind::switched);
    check_theta(sys, theta);
    if (state_index < 0 || state_index >= sys.num_states()) {
        throw Error(ErrorCode::UnknownState, "state index " + std::to_string(state_index) + " out of range",
                    state_index);
    }
    const auto k = static_cast<std::size_t>(state_index);
    return sys.matrices[k] * (sys.states[k] - theta);
}

Vector slow_field(const LimitSystem& sys, const Vector& theta) {
    check_kind(sys, RegimeKind::slow);
    return weighted_field(sys, theta);
}

Vector fast_field(const LimitSystem& sys, const Vector& theta) {
    check_kind(sys, RegimeKind::fast);
    return weighted_field(sys, theta);
}

SampledPath integrate_ode(const LimitSystem& sys, const ContinuousChainPath& chain, const Vector& theta0, double dt,
                          double horizon) {
    check_kind(sys, RegimeKind::switched);
    check_theta(sys, theta0);
    if (chain.horizon < horizon - 1e-9) throw Error(ErrorCode::InvalidArgument, "chain path does not cover the horizon");

    SampledPath out;
    out.times = uniform_grid(dt, horizon);
    out.values.reserve(out.times.size());
    Vector theta = theta0;
    out.values.push_back(theta);
    auto jump = chain.jump_times.begin();
    for (std::size_t k = 1; k < out.times.size(); ++k) {
        double t = out.times[k - 1];
        const double t_end = out.times[k];
        while (jump != chain.jump_times.end() && *jump <= t) ++jump;
        while (t < t_end) {
            const double stop = (jump != chain.jump_times.end() && *jump < t_end) ? *jump : t_end;
            const int state = chain.state_at(t);
            rk4_step(theta, stop - t, [&](const Vector& x) { return switched_field(sys, state, x); });
            t = stop;
            if (jump != chain.jump_times.end() && *jump <= t) ++jump;
        }
        out.values.push_back(theta);
    }
    return out;
}

SampledPath integrate_ode(const LimitSystem& sys, const Vector& theta0, double dt, double horizon) {
    if (sys.kind == RegimeKind::switched) {
        throw Error(ErrorCode::InvalidArgument, "switched system needs a driving chain path");
    }
    check_theta(sys, theta0);
    SampledPath out;
    out.times = uniform_grid(dt, horizon);
    out.values.reserve(out.times.size());
    Vector theta = theta0;
    out.values.push_back(theta);
    for (std::size_t k = 1; k < out.times.size(); ++k) {
        rk4_step(theta, out.times[k] - out.times[k - 1], [&](const Vector& x) { return weighted_field(sys, x); });
        out.values.push_back(theta);
    }
    return out;
}

Matrix matrix_sqrt_psd(const Matrix& sigma) {
    if (sigma.rows() != sigma.cols()) throw Error(ErrorCode::DimensionMismatch, "covariance must be square");
    const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
    if (!sigma.allFinite() || (sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw Error(ErrorCode::NotPositiveSemidefinite, "covariance is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (sigma + sigma.transpose()));
    Vector values = eig.eigenvalues();
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (values[i] < -1e-10) {
            throw Error(ErrorCode::NotPositiveSemidefinite, "eigenvalue " + std::to_string(values[i]) + " < 0");
        }
    }
    values = values.cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
}

NoiseCovariance NoiseCovariance::from_matrix(const Matrix& sigma) {
    NoiseCovariance out;
    out.sqrt = matrix_sqrt_psd(sigma);
    out.sigma = 0.5 * (sigma + sigma.transpose());
    return out;
}

NoiseCovariance noise_covariance_closed_form(const SignalModel& signal) {
    return NoiseCovariance::from_matrix(signal.regressor().covariance);
}

EmpiricalNoiseCovariance noise_covariance_empirical(const SignalModel& signal, int lag_cutoff, long samples,
                                                    RandomStream& rng) {
    if (lag_cutoff < 0) throw Error(ErrorCode::InvalidArgument, "lag cutoff must be nonnegative");
    if (samples <= lag_cutoff + 1) throw Error(ErrorCode::InvalidArgument, "too few samples for the lag cutoff");
    const int r = signal.dim();
    Matrix w(r, samples);
    Vector phi(r);
    for (long k = 0; k < samples; ++k) {
        const double e = signal.sample(rng, phi);
        w.col(k) = phi * sign(e);
    }
    const Vector mean = w.rowwise().mean();
    w.colwise() -= mean;

    auto lagged = [&](int lag, Matrix& se) {
        const long n = samples - lag;
        const auto lead = w.rightCols(n);
        const auto trail = w.leftCols(n);
        Matrix c = (lead * trail.transpose()) / static_cast<double>(n);
        // Entrywise standard error from the per-sample products.
        se = Matrix::Zero(r, r);
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < r; ++j) {
                const Eigen::ArrayXd prod = lead.row(i).array() * trail.row(j).array();
                const double var = (prod - c(i, j)).square().sum() / static_cast<double>(n - 1);
                se(i, j) = std::sqrt(var / static_cast<double>(n));
            }
        }
        return c;
    };

    EmpiricalNoiseCovariance out;
    Matrix se;
    Matrix total = lagged(0, se);
    for (int lag = 1; lag <= lag_cutoff; ++lag) {
        Matrix c = lagged(lag, se);
        total += c + c.transpose();
        out.lag_terms.push_back(std::move(c));
        out.lag_std_errors.push_back(se);
    }
    total = 0.5 * (total + total.transpose());
    out.covariance = NoiseCovariance::from_matrix(total);
    return out;
}

Matrix lyapunov_solve(const Matrix& a, const Matrix& sigma) {
    const auto r = a.rows();
    if (a.cols() != r || sigma.rows() != r || sigma.cols() != r) {
        throw Error(ErrorCode::DimensionMismatch, "Lyapunov operands must be square and of equal size");
    }
    if (!negated_hurwitz(a)) {
        throw Error(ErrorCode::SingularLyapunov, "A must have eigenvalues with positive real part");
    }
    const Matrix eye = Matrix::Identity(r, r);
    const Matrix op = Eigen::kroneckerProduct(eye, a) + Eigen::kroneckerProduct(a, eye);
    const Eigen::Map<const Vector> rhs(sigma.data(), r * r);
    Eigen::PartialPivLU<Matrix> lu(op);
    const Vector x = lu.solve(rhs);
    Matrix s = Eigen::Map<const Matrix>(x.data(), r, r);
    s = 0.5 * (s + s.transpose());
    const double residual = (a * s + s * a.transpose() - sigma).cwiseAbs().maxCoeff();
    if (!(residual <= 1e-10 * std::max(1.0, sigma.cwiseAbs().maxCoeff()))) {
        throw Error(ErrorCode::SingularLyapunov, "residual " + std::to_string(residual) + " too large");
    }
    return s;
}

namespace {

template <class DriftAt>
SampledPath euler_maruyama(const DriftAt& drift_at, const Matrix& sqrt_cov, const Vector& z0, double dt,
                           double horizon, RandomStream& rng) {
    const auto r = z0.size();
    if (sqrt_cov.rows() != r || sqrt_cov.cols() != r) {
        throw Error(ErrorCode::DimensionMismatch, "diffusion matrix has the wrong shape");
    }
    SampledPath out;
    out.times = uniform_grid(dt, horizon);
    out.values.reserve(out.times.size());
    Vector z = z0;
    Vector xi(r);
    out.values.push_back(z);
    for (std::size_t k = 1; k < out.times.size(); ++k) {
        const double h = out.times[k] - out.times[k - 1];
        for (Eigen::Index i = 0; i < r; ++i) xi[i] = rng.normal();
        const Matrix& a = drift_at(out.times[k - 1]);
        z = z - h * (a * z) + std::sqrt(h) * (sqrt_cov * xi);
        out.values.push_back(z);
    }
    return out;
}

}  // namespace

SampledPath simulate_ou(const Matrix& a, const Matrix& sqrt_cov, const Vector& z0, double dt, double horizon,
                        RandomStream& rng) {
    if (a.rows() != z0.size() || a.cols() != z0.size()) {
        throw Error(ErrorCode::DimensionMismatch, "drift matrix has the wrong shape");
    }
    return euler_maruyama([&](double) -> const Matrix& { return a; }, sqrt_cov, z0, dt, horizon, rng);
}

SampledPath simulate_ou(const LimitSystem& sys, const ContinuousChainPath& chain, const Matrix& sqrt_cov,
                        const Vector& z0, double dt, double horizon, RandomStream& rng) {
    sys.validate();
    check_theta(sys, z0);
    if (chain.horizon < horizon - 1e-9) throw Error(ErrorCode::InvalidArgument, "chain path does not cover the horizon");
    return euler_maruyama(
        [&](double t) -> const Matrix& { return sys.matrices[static_cast<std::size_t>(chain.state_at(t))]; }, sqrt_cov,
        z0, dt, horizon, rng);
}

}  // namespace signtrack
