#pragma once

#include <vector>

#include "signtrack/regime.hpp"
#include "signtrack/signal.hpp"

namespace signtrack {

/// Which limit the stepsize/transition-rate coupling leads to: eps = mu
/// (switched ODE), eps << mu (chain frozen at its initial law) or
/// eps >> mu (chain averaged under its stationary law).
enum class RegimeKind { switched, slow, fast };

const char* to_string(RegimeKind kind);

/// Effective matrices A^(i) attached to the states a_i. `distribution` is
/// the initial law p0 for the slow kind, the stationary law nu for the fast
/// kind, and unused for the switched kind.
struct LimitSystem {
    std::vector<Vector> states;
    std::vector<Matrix> matrices;
    RegimeKind kind = RegimeKind::switched;
    Vector distribution;

    /// Throws unless shapes agree and every -A^(i) is Hurwitz.
    void validate() const;

    /// Same matrix for every state.
    static LimitSystem uniform(RegimeKind kind, std::vector<Vector> states, const Matrix& a, Vector distribution = {});

    int dim() const { return static_cast<int>(states.front().size()); }
    int num_states() const { return static_cast<int>(states.size()); }
};

/// sqrt(2/pi) * Sigma_phi / sigma_e, the Jacobian of
/// x -> E[phi sgn(phi' x + e)] at x = 0 for Gaussian phi and e.
Matrix effective_matrix_closed_form(const SignalModel& signal);

struct MonteCarloJacobian {
    Matrix value;
    Matrix std_error;
};

/// Central finite-difference Jacobian of the mean field at zero error. The
/// +/- perturbations of every column reuse the same draws.
MonteCarloJacobian effective_matrix_monte_carlo(const SignalModel& signal, long samples, double fd_step,
                                                RandomStream& rng);

/// A^(i) (a_i - theta).
Vector switched_field(const LimitSystem& sys, int state_index, const Vector& theta);
/// sum_i p0_i A^(i) (a_i - theta).
Vector slow_field(const LimitSystem& sys, const Vector& theta);
/// sum_j nu_j A^(j) (a_j - theta).
Vector fast_field(const LimitSystem& sys, const Vector& theta);

struct SampledPath {
    std::vector<double> times;
    std::vector<Vector> values;
};

/// RK4 for the switched field along `chain`. Steps are cut at every jump
/// time so the regime is constant within each substep. Output on the grid
/// 0, dt, 2dt, ..., T.
SampledPath integrate_ode(const LimitSystem& sys, const ContinuousChainPath& chain, const Vector& theta0, double dt,
                          double horizon);

/// RK4 for the autonomous slow or fast field.
SampledPath integrate_ode(const LimitSystem& sys, const Vector& theta0, double dt, double horizon);

struct NoiseCovariance {
    Matrix sigma;
    Matrix sqrt;  // sqrt * sqrt' == sigma

    static NoiseCovariance from_matrix(const Matrix& sigma);
};

/// i.i.d. signals with continuous noise: sgn(e)^2 = 1 and cross-lag terms
/// vanish, so the covariance of phi sgn(e) is Sigma_phi.
NoiseCovariance noise_covariance_closed_form(const SignalModel& signal);

struct EmpiricalNoiseCovariance {
    NoiseCovariance covariance;
    std::vector<Matrix> lag_terms;       // C_l for l = 1..lag_cutoff
    std::vector<Matrix> lag_std_errors;  // entrywise standard errors of C_l
};

/// C_0 + sum_{l=1}^{L} (C_l + C_l') from a simulated sequence of
/// phi_k sgn(e_k).
EmpiricalNoiseCovariance noise_covariance_empirical(const SignalModel& signal, int lag_cutoff, long samples,
                                                    RandomStream& rng);

Matrix matrix_sqrt_psd(const Matrix& sigma);

/// Solves A S + S A' = sigma for S.
Matrix lyapunov_solve(const Matrix& a, const Matrix& sigma);

/// Euler-Maruyama for dz = -A z dt + sqrt_cov dW.
SampledPath simulate_ou(const Matrix& a, const Matrix& sqrt_cov, const Vector& z0, double dt, double horizon,
                        RandomStream& rng);

/// Switched variant: the drift matrix is A^(state at t_k) over each step.
SampledPath simulate_ou(const LimitSystem& sys, const ContinuousChainPath& chain, const Matrix& sqrt_cov,
                        const Vector& z0, double dt, double horizon, RandomStream& rng);

}  // namespace signtrack
