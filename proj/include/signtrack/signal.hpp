#pragma once

#include <optional>

#include "signtrack/core.hpp"

namespace signtrack {

enum class DistKind { gaussian, truncated_gaussian };

const char* to_string(DistKind kind);

struct RegressorDist {
    DistKind kind = DistKind::gaussian;
    Matrix covariance;   // Sigma_phi, symmetric positive definite
    double clip = 0.0;   // componentwise bound B, truncated only
};

struct NoiseDist {
    DistKind kind = DistKind::gaussian;
    double variance = 1.0;
    double clip = 0.0;
};

/// i.i.d. regressor/noise pair, independent of each other and of the chain.
/// Truncated variants re-draw until the sample falls inside [-B, B].
class SignalModel {
public:
    SignalModel(RegressorDist regressor, NoiseDist noise);

    static SignalModel gaussian(const Matrix& regressor_cov, double noise_variance);

    int dim() const { return static_cast<int>(regressor_.covariance.rows()); }
    const RegressorDist& regressor() const { return regressor_; }
    const NoiseDist& noise() const { return noise_; }
    double noise_sd() const { return noise_sd_; }
    bool is_gaussian() const {
        return regressor_.kind == DistKind::gaussian && noise_.kind == DistKind::gaussian;
    }

    /// Fills `phi` (resized to dim()) and returns the noise draw.
    double sample(RandomStream& rng, Vector& phi) const;

private:
    RegressorDist regressor_;
    NoiseDist noise_;
    Matrix chol_;
    double noise_sd_;
};

struct SignalSample {
    Vector phi;
    double noise;
};

SignalSample sample_signal(const SignalModel& model, RandomStream& rng);

/// y = phi' a + e.
double observe(const Vector& phi, const Vector& a, double e);

}  // namespace signtrack
