#include "signtrack/core.hpp"

#include <array>

namespace signtrack {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::NegativeOffDiagonal: return "NegativeOffDiagonal";
        case ErrorCode::RowSumNonzero: return "RowSumNonzero";
        case ErrorCode::NotIrreducible: return "NotIrreducible";
        case ErrorCode::InvalidDistribution: return "InvalidDistribution";
        case ErrorCode::InadmissibleEpsilon: return "InadmissibleEpsilon";
        case ErrorCode::SingularSystem: return "SingularSystem";
        case ErrorCode::NonGaussianClosedForm: return "NonGaussianClosedForm";
        case ErrorCode::MonteCarloVarianceTooHigh: return "MonteCarloVarianceTooHigh";
        case ErrorCode::UnknownState: return "UnknownState";
        case ErrorCode::NotPositiveSemidefinite: return "NotPositiveSemidefinite";
        case ErrorCode::SingularLyapunov: return "SingularLyapunov";
        case ErrorCode::NotStable: return "NotStable";
        case ErrorCode::DivergenceDetected: return "DivergenceDetected";
        case ErrorCode::OutOfHorizon: return "OutOfHorizon";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message, long index)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), index_(index) {}

RandomStream::RandomStream(std::uint64_t seed) : engine_(seed) {}

RandomStream RandomStream::derive(std::uint64_t master_seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                      0x5eedu};
    std::array<std::uint32_t, 2> words{};
    seq.generate(words.begin(), words.end());
    return RandomStream((static_cast<std::uint64_t>(words[0]) << 32) | words[1]);
}

int sample_categorical(const Eigen::Ref<const Vector>& probs, double u) {
    double acc = 0.0;
    const int n = static_cast<int>(probs.size());
    for (int i = 0; i < n; ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    // u landed in the rounding slack above the cumulative sum; take the last
    // state with positive mass.
    for (int i = n - 1; i >= 0; --i) {
        if (probs[i] > 0.0) return i;
    }
    return n - 1;
}

}  // namespace signtrack
