#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace signtrack {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class ErrorCode {
    InvalidArgument,
    DimensionMismatch,
    NegativeOffDiagonal,
    RowSumNonzero,
    NotIrreducible,
    InvalidDistribution,
    InadmissibleEpsilon,
    SingularSystem,
    NonGaussianClosedForm,
    MonteCarloVarianceTooHigh,
    UnknownState,
    NotPositiveSemidefinite,
    SingularLyapunov,
    NotStable,
    DivergenceDetected,
    OutOfHorizon,
    ConfigError,
};

const char* to_string(ErrorCode code);

/// Library-wide exception. `index()` carries the offending row, state or
/// replication when one applies, otherwise -1.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, long index = -1);

    ErrorCode code() const noexcept { return code_; }
    long index() const noexcept { return index_; }

private:
    ErrorCode code_;
    long index_;
};

/// Seeded random stream owned by one replication. Copies are independent
/// snapshots of the generator state.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed);

    /// Stream for replication `index` of a run seeded with `master_seed`.
    static RandomStream derive(std::uint64_t master_seed, std::uint64_t index);

    double uniform() { return uniform_(engine_); }
    double normal() { return normal_(engine_); }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Index drawn from the categorical distribution `probs` using one uniform.
int sample_categorical(const Eigen::Ref<const Vector>& probs, double u);

}  // namespace signtrack
