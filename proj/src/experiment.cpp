#include "signtrack/experiment.hpp"

#include <cmath>
#include <string>

#include "parallel.hpp"

namespace signtrack {

namespace {

// Replications are grouped in fixed-size chunks; each chunk reduces in
// replication order and chunks are combined in chunk order, so sums do not
// depend on the worker count.
constexpr int kChunk = 32;

int chunk_count(int reps) { return (reps + kChunk - 1) / kChunk; }

Trajectory replicate(const Scenario& scenario, const RegimeModel& regime, int rep, int n_steps) {
    RandomStream rng = scenario.stream(rep);
    try {
        return run_tracking(regime, scenario.signal, scenario.filter, n_steps, rng);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::DivergenceDetected) {
            throw Error(ErrorCode::DivergenceDetected,
                        "replication " + std::to_string(rep) + ": " + e.what(), rep);
        }
        throw;
    }
}

Matrix weighted_matrix(const LimitSystem& sys, const Vector& weights) {
    Matrix out = Matrix::Zero(sys.dim(), sys.dim());
    for (int i = 0; i < sys.num_states(); ++i) out += weights[i] * sys.matrices[static_cast<std::size_t>(i)];
    return out;
}

double rel_frobenius(const Matrix& empirical, const Matrix& reference) {
    return (empirical - reference).norm() / reference.norm();
}

struct Moments {
    long count = 0;
    Vector sum;
    Matrix outer;

    explicit Moments(int r) : sum(Vector::Zero(r)), outer(Matrix::Zero(r, r)) {}
    void add(const Vector& v) {
        ++count;
        sum += v;
        outer.noalias() += v * v.transpose();
    }
    void merge(const Moments& o) {
        count += o.count;
        sum += o.sum;
        outer += o.outer;
    }
    Vector mean() const { return sum / static_cast<double>(count); }
    Matrix covariance() const {
        const Vector m = mean();
        return (outer - static_cast<double>(count) * m * m.transpose()) / static_cast<double>(count - 1);
    }
};

}  // namespace

const char* to_string(Coupling::Kind kind) {
    switch (kind) {
        case Coupling::Kind::proportional: return "proportional";
        case Coupling::Kind::slow: return "slow";
        case Coupling::Kind::fast: return "fast";
    }
    return "?";
}

void Coupling::validate() const {
    const bool ok = std::isfinite(parameter) && [&] {
        switch (kind) {
            case Kind::proportional: return parameter >= 0.0;
            case Kind::slow: return parameter > 0.0;
            case Kind::fast: return parameter >= 0.5 && parameter < 1.0;
        }
        return false;
    }();
    if (!ok) {
        throw Error(ErrorCode::InvalidArgument,
                    std::string("coupling parameter out of range for kind ") + to_string(kind));
    }
}

double Coupling::epsilon(double mu) const {
    switch (kind) {
        case Kind::proportional: return parameter * mu;
        case Kind::slow: return std::pow(mu, 1.0 + parameter);
        case Kind::fast: return std::pow(mu, parameter);
    }
    return 0.0;
}

RegimeKind Coupling::limit_kind() const {
    switch (kind) {
        case Kind::proportional: return RegimeKind::switched;
        case Kind::slow: return RegimeKind::slow;
        case Kind::fast: return RegimeKind::fast;
    }
    return RegimeKind::switched;
}

void Scenario::validate() const {
    coupling.validate();
    filter.validate();
    if (n_steps < 0) throw Error(ErrorCode::InvalidArgument, "n_steps must be nonnegative");
    if (n_replications < 1) throw Error(ErrorCode::InvalidArgument, "n_replications must be at least 1");
    if (threads < 1) throw Error(ErrorCode::InvalidArgument, "threads must be at least 1");
    if (burn_in && *burn_in < 0) throw Error(ErrorCode::InvalidArgument, "burn_in must be nonnegative");
    const RegimeModel model = regime();
    if (model.dim() != signal.dim() || model.dim() != filter.theta0.size()) {
        throw Error(ErrorCode::DimensionMismatch, "regime, signal and filter dimensions disagree");
    }
}

RegimeModel Scenario::regime() const { return RegimeModel(states, generator, epsilon(), initial_dist); }

int Scenario::effective_burn_in() const { return burn_in ? *burn_in : burn_in_default(filter.mu); }

Scenario Scenario::with_mu(double mu) const {
    Scenario out = *this;
    out.filter.mu = mu;
    return out;
}

double mse_bound(double mu, double epsilon) {
    if (!(mu > 0.0) || !(epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "mu and epsilon must be positive");
    return mu + epsilon + epsilon * epsilon / mu;
}

int burn_in_default(double mu) {
    if (!(mu > 0.0) || !(mu < 1.0)) throw Error(ErrorCode::InvalidArgument, "burn-in needs 0 < mu < 1");
    return static_cast<int>(std::ceil(5.0 / mu - 1e-9));
}

MseCurve mse_curve(const Scenario& scenario) {
    scenario.validate();
    const RegimeModel regime = scenario.regime();
    const int reps = scenario.n_replications;
    const auto len = static_cast<std::size_t>(scenario.n_steps) + 1;

    struct ChunkSums {
        std::vector<double> sum, sum_sq;
    };
    std::vector<ChunkSums> chunks(static_cast<std::size_t>(chunk_count(reps)));
    detail::parallel_for(chunk_count(reps), scenario.threads, [&](int c) {
        ChunkSums& acc = chunks[static_cast<std::size_t>(c)];
        acc.sum.assign(len, 0.0);
        acc.sum_sq.assign(len, 0.0);
        const int end = std::min(reps, (c + 1) * kChunk);
        for (int rep = c * kChunk; rep < end; ++rep) {
            const Trajectory traj = replicate(scenario, regime, rep, scenario.n_steps);
            for (std::size_t n = 0; n < len; ++n) {
                const double sq = (traj.alpha(static_cast<int>(n)) - traj.thetas[n]).squaredNorm();
                acc.sum[n] += sq;
                acc.sum_sq[n] += sq * sq;
            }
        }
    });

    std::vector<double> sum(len, 0.0), sum_sq(len, 0.0);
    for (const auto& c : chunks) {
        for (std::size_t n = 0; n < len; ++n) {
            sum[n] += c.sum[n];
            sum_sq[n] += c.sum_sq[n];
        }
    }
    MseCurve curve;
    curve.replications = reps;
    curve.mean.resize(len);
    const double r = reps;
    for (std::size_t n = 0; n < len; ++n) curve.mean[n] = sum[n] / r;
    if (reps > 1) {
        std::vector<double> se(len);
        for (std::size_t n = 0; n < len; ++n) {
            const double var = std::max(0.0, (sum_sq[n] - r * curve.mean[n] * curve.mean[n]) / (r - 1.0));
            se[n] = std::sqrt(var / r);
        }
        curve.std_error = std::move(se);
    }
    return curve;
}

SteadyState steady_state(const MseCurve& curve, int burn_in) {
    const auto len = static_cast<long>(curve.mean.size());
    if (burn_in < 0 || len - burn_in < 4) {
        throw Error(ErrorCode::InvalidArgument, "need at least four iterates after burn-in");
    }
    auto mean_of = [&](long from, long to) {
        double s = 0.0;
        for (long n = from; n < to; ++n) s += curve.mean[static_cast<std::size_t>(n)];
        return s / static_cast<double>(to - from);
    };
    const long post = len - burn_in;
    SteadyState out;
    out.mse = mean_of(burn_in + post / 2, len);
    out.third_quarter = mean_of(burn_in + post / 2, burn_in + (3 * post) / 4);
    out.fourth_quarter = mean_of(burn_in + (3 * post) / 4, len);
    out.plateau = std::abs(out.third_quarter - out.fourth_quarter) < 0.1 * out.fourth_quarter;
    return out;
}

Vector interpolate(const Trajectory& traj, double t) {
    const double horizon = traj.n_steps() * traj.mu;
    if (!(t >= 0.0) || !(t < horizon)) {
        throw Error(ErrorCode::OutOfHorizon, "t = " + std::to_string(t) + " outside [0, " + std::to_string(horizon) + ")");
    }
    const auto n = std::min(static_cast<long>(std::floor(t / traj.mu)), static_cast<long>(traj.n_steps()) - 1);
    return traj.thetas[static_cast<std::size_t>(n)];
}

LimitSystem limit_system(const Scenario& scenario) {
    Matrix a;
    if (scenario.signal.is_gaussian()) {
        a = effective_matrix_closed_form(scenario.signal);
    } else {
        RandomStream rng = RandomStream::derive(scenario.master_seed, 0xA3A3A3A3ull << 16);
        a = effective_matrix_monte_carlo(scenario.signal, 1'000'000, 0.01, rng).value;
    }
    const RegimeKind kind = scenario.coupling.limit_kind();
    Vector dist;
    if (kind == RegimeKind::slow) dist = scenario.initial_dist;
    if (kind == RegimeKind::fast) dist = stationary_distribution(scenario.generator);
    return LimitSystem::uniform(kind, scenario.states, a, dist);
}

SampledPath limit_path_for(const Scenario& scenario, const Trajectory& traj, double dt_ode, double horizon) {
    const LimitSystem sys = limit_system(scenario);
    if (sys.kind == RegimeKind::switched) {
        const auto chain = ContinuousChainPath::from_discrete(traj.chain, traj.mu);
        return integrate_ode(sys, chain, scenario.filter.theta0, dt_ode, horizon);
    }
    return integrate_ode(sys, scenario.filter.theta0, dt_ode, horizon);
}

DeviationReport ode_deviation(const Scenario& scenario, double dt_ode, double horizon) {
    scenario.validate();
    const double mu = scenario.filter.mu;
    if (!(mu > 0.0)) throw Error(ErrorCode::InvalidArgument, "ode_deviation needs mu > 0");
    if (!(horizon > 0.0)) throw Error(ErrorCode::InvalidArgument, "horizon must be positive");
    const int n_steps = static_cast<int>(std::ceil(horizon / mu - 1e-9)) + 1;
    const RegimeModel regime = scenario.regime();
    const LimitSystem sys = limit_system(scenario);
    std::optional<SampledPath> autonomous;
    if (sys.kind != RegimeKind::switched) autonomous = integrate_ode(sys, scenario.filter.theta0, dt_ode, horizon);

    DeviationReport report;
    report.kind = sys.kind;
    report.per_replication.assign(static_cast<std::size_t>(scenario.n_replications), 0.0);
    detail::parallel_for(scenario.n_replications, scenario.threads, [&](int rep) {
        const Trajectory traj = replicate(scenario, regime, rep, n_steps);
        SampledPath switched;
        const SampledPath* limit = autonomous ? &*autonomous : nullptr;
        if (!limit) {
            const auto chain = ContinuousChainPath::from_discrete(traj.chain, mu);
            switched = integrate_ode(sys, chain, scenario.filter.theta0, dt_ode, horizon);
            limit = &switched;
        }
        double sup = 0.0;
        for (std::size_t k = 0; k < limit->times.size(); ++k) {
            sup = std::max(sup, (interpolate(traj, limit->times[k]) - limit->values[k]).norm());
        }
        report.per_replication[static_cast<std::size_t>(rep)] = sup;
    });
    double total = 0.0;
    for (double d : report.per_replication) total += d;
    report.mean = total / static_cast<double>(scenario.n_replications);
    return report;
}

const char* to_string(Centering c) {
    switch (c) {
        case Centering::chain: return "chain";
        case Centering::initial_mean: return "initial_mean";
        case Centering::stationary_mean: return "stationary_mean";
    }
    return "?";
}

Centering matching_centering(const Coupling& coupling) {
    switch (coupling.kind) {
        case Coupling::Kind::proportional: return Centering::chain;
        case Coupling::Kind::slow: return Centering::initial_mean;
        case Coupling::Kind::fast: return Centering::stationary_mean;
    }
    return Centering::chain;
}

Vector centering_reference(const Scenario& scenario, Centering centering) {
    switch (centering) {
        case Centering::chain: return {};
        case Centering::initial_mean: return mean_parameter(scenario.states, scenario.initial_dist);
        case Centering::stationary_mean:
            return mean_parameter(scenario.states, stationary_distribution(scenario.generator));
    }
    return {};
}

ScaledErrorSeries scaled_error(const Trajectory& traj, Centering centering, const Vector& reference, int burn_in) {
    const int len = static_cast<int>(traj.thetas.size());
    if (burn_in < 0 || burn_in >= len) throw Error(ErrorCode::InvalidArgument, "burn-in must be below the series length");
    if (!(traj.mu > 0.0)) throw Error(ErrorCode::InvalidArgument, "scaled errors need mu > 0");
    if (centering != Centering::chain && reference.size() != traj.thetas.front().size()) {
        throw Error(ErrorCode::DimensionMismatch, "centering reference has the wrong dimension");
    }
    const double scale = 1.0 / std::sqrt(traj.mu);
    ScaledErrorSeries out;
    out.centering = centering;
    out.burn_in = burn_in;
    out.values.reserve(static_cast<std::size_t>(len - burn_in));
    out.regimes.reserve(static_cast<std::size_t>(len - burn_in));
    for (int n = burn_in; n < len; ++n) {
        const Vector& center = centering == Centering::chain ? traj.alpha(n) : reference;
        out.values.push_back(scale * (center - traj.thetas[static_cast<std::size_t>(n)]));
        out.regimes.push_back(traj.chain.indices[static_cast<std::size_t>(n)]);
    }
    return out;
}

DiffusionReport diffusion_check(const Scenario& scenario, Centering centering) {
    scenario.validate();
    if (centering != matching_centering(scenario.coupling)) {
        throw Error(ErrorCode::InvalidArgument, std::string("centering ") + to_string(centering) +
                                                    " does not match the " + to_string(scenario.coupling.kind) +
                                                    " coupling");
    }
    const RegimeModel regime = scenario.regime();
    const int r = regime.dim();
    const int m0 = regime.num_states();
    const int burn_in = scenario.effective_burn_in();
    const Vector reference = centering_reference(scenario, centering);

    LimitSystem sys = limit_system(scenario);
    DiffusionReport report;
    report.centering = centering;
    report.noise = scenario.signal.is_gaussian()
                       ? noise_covariance_closed_form(scenario.signal)
                       : [&] {
                             RandomStream rng = RandomStream::derive(scenario.master_seed, 0xB5B5B5B5ull << 16);
                             return noise_covariance_empirical(scenario.signal, 5, 1'000'000, rng).covariance;
                         }();

    struct ChunkMoments {
        Moments pooled;
        std::vector<Moments> by_regime;
    };
    const int reps = scenario.n_replications;
    std::vector<ChunkMoments> chunks;
    chunks.reserve(static_cast<std::size_t>(chunk_count(reps)));
    for (int c = 0; c < chunk_count(reps); ++c) chunks.push_back({Moments(r), std::vector<Moments>(m0, Moments(r))});

    detail::parallel_for(chunk_count(reps), scenario.threads, [&](int c) {
        ChunkMoments& acc = chunks[static_cast<std::size_t>(c)];
        const int end = std::min(reps, (c + 1) * kChunk);
        for (int rep = c * kChunk; rep < end; ++rep) {
            const Trajectory traj = replicate(scenario, regime, rep, scenario.n_steps);
            const ScaledErrorSeries series = scaled_error(traj, centering, reference, burn_in);
            const std::size_t tail = series.values.size() / 2;
            for (std::size_t k = tail; k < series.values.size(); ++k) {
                acc.pooled.add(series.values[k]);
                acc.by_regime[static_cast<std::size_t>(series.regimes[k])].add(series.values[k]);
            }
        }
    });

    Moments pooled(r);
    std::vector<Moments> by_regime(static_cast<std::size_t>(m0), Moments(r));
    for (const auto& c : chunks) {
        pooled.merge(c.pooled);
        for (int i = 0; i < m0; ++i) by_regime[static_cast<std::size_t>(i)].merge(c.by_regime[static_cast<std::size_t>(i)]);
    }
    if (pooled.count < 2) throw Error(ErrorCode::InvalidArgument, "too few tail samples for a covariance");
    report.samples = pooled.count;
    report.empirical_mean = pooled.mean();
    report.empirical_cov = pooled.covariance();

    if (centering == Centering::chain) {
        Matrix weighted = Matrix::Zero(r, r);
        Matrix drift = Matrix::Zero(r, r);
        report.rel_discrepancy = 0.0;
        for (int i = 0; i < m0; ++i) {
            const Moments& m = by_regime[static_cast<std::size_t>(i)];
            const Matrix& a = sys.matrices[static_cast<std::size_t>(i)];
            const double w = static_cast<double>(m.count) / static_cast<double>(pooled.count);
            weighted += w * lyapunov_solve(a, report.noise.sigma);
            drift += w * a;
            if (m.count < 2) continue;
            RegimeCovariance rc;
            rc.state = i;
            rc.samples = m.count;
            rc.empirical = m.covariance();
            rc.reference = lyapunov_solve(a, report.noise.sigma);
            rc.rel_discrepancy = rel_frobenius(rc.empirical, rc.reference);
            report.rel_discrepancy = std::max(report.rel_discrepancy, rc.rel_discrepancy);
            report.per_regime.push_back(std::move(rc));
        }
        report.drift = drift;
        report.reference_cov = weighted;
    } else {
        const Vector& weights = sys.distribution;
        report.drift = weighted_matrix(sys, weights);
        report.reference_cov = lyapunov_solve(report.drift, report.noise.sigma);
        report.rel_discrepancy = rel_frobenius(report.empirical_cov, report.reference_cov);
    }
    return report;
}

}  // namespace signtrack
