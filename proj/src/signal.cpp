#include "signtrack/signal.hpp"

#include <cmath>

namespace signtrack {

const char* to_string(DistKind kind) {
    return kind == DistKind::gaussian ? "gaussian" : "truncated_gaussian";
}

SignalModel::SignalModel(RegressorDist regressor, NoiseDist noise)
    : regressor_(std::move(regressor)), noise_(std::move(noise)) {
    const Matrix& cov = regressor_.covariance;
    if (cov.rows() == 0 || cov.rows() != cov.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "regressor covariance must be square and nonempty");
    }
    if (!cov.allFinite() || !cov.isApprox(cov.transpose(), 1e-12)) {
        throw Error(ErrorCode::InvalidArgument, "regressor covariance must be symmetric");
    }
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorCode::InvalidArgument, "regressor covariance is not positive definite");
    }
    chol_ = llt.matrixL();
    if (!(noise_.variance > 0.0) || !std::isfinite(noise_.variance)) {
        throw Error(ErrorCode::InvalidArgument, "noise variance must be positive");
    }
    noise_sd_ = std::sqrt(noise_.variance);
    if (regressor_.kind == DistKind::truncated_gaussian && !(regressor_.clip > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "regressor clip bound must be positive");
    }
    if (noise_.kind == DistKind::truncated_gaussian && !(noise_.clip > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "noise clip bound must be positive");
    }
}

SignalModel SignalModel::gaussian(const Matrix& regressor_cov, double noise_variance) {
    return SignalModel(RegressorDist{DistKind::gaussian, regressor_cov, 0.0},
                       NoiseDist{DistKind::gaussian, noise_variance, 0.0});
}

double SignalModel::sample(RandomStream& rng, Vector& phi) const {
    const int r = dim();
    Vector xi(r);
    while (true) {
        for (int i = 0; i < r; ++i) xi[i] = rng.normal();
        phi.noalias() = chol_ * xi;
        if (regressor_.kind == DistKind::gaussian || phi.cwiseAbs().maxCoeff() <= regressor_.clip) break;
    }
    while (true) {
        const double e = noise_sd_ * rng.normal();
        if (noise_.kind == DistKind::gaussian || std::abs(e) <= noise_.clip) return e;
    }
}

SignalSample sample_signal(const SignalModel& model, RandomStream& rng) {
    SignalSample s;
    s.noise = model.sample(rng, s.phi);
    return s;
}

double observe(const Vector& phi, const Vector& a, double e) {
    if (phi.size() != a.size()) throw Error(ErrorCode::DimensionMismatch, "regressor and parameter dimensions differ");
    return phi.dot(a) + e;
}

}  // namespace signtrack
