#include <doctest.h>

#include <cmath>

#include "signtrack/filter.hpp"

using namespace signtrack;

namespace {

Vector v1(double x) { return Vector::Constant(1, x); }
Vector v2(double x, double y) {
    Vector v(2);
    v << x, y;
    return v;
}

Matrix example_q() {
    Matrix q(3, 3);
    q << -0.6, 0.4, 0.2, 0.2, -0.5, 0.3, 0.4, 0.1, -0.5;
    return q;
}

RegimeModel single_state(double a, double eps = 0.0) {
    Matrix q(2, 2);
    q << -1, 1, 1, -1;
    return RegimeModel({v1(a), v1(a + 10.0)}, GeneratorMatrix::validate(q), eps, v2(1.0, 0.0));
}

}  // namespace

TEST_CASE("sign") {
    CHECK(sign(3.2) == 1);
    CHECK(sign(-0.1) == -1);
    CHECK(sign(0.0) == 0);
    CHECK(sign(-0.0) == 0);
    for (double x : {1e-300, 0.5, 7.0, 1e300}) CHECK(sign(-x) == -sign(x));
}

TEST_CASE("se_step examples") {
    CHECK(se_step(v1(0), v1(1), 0.5, 0.05)[0] == doctest::Approx(0.05));
    CHECK(se_step(v2(0.3, -1), v2(2, 1), 2 * 0.3 - 1, 0.1) == v2(0.3, -1));
    const Vector next = se_step(v2(0, 0), v2(1, 2), -1.0, 0.1);
    CHECK(next[0] == doctest::Approx(-0.1));
    CHECK(next[1] == doctest::Approx(-0.2));
    CHECK_THROWS_AS(se_step(v1(0), v2(1, 1), 0.0, 0.1), Error);
}

TEST_CASE("sr_step examples") {
    CHECK(sr_step(v1(0), v1(2), 0.5, 0.1)[0] == doctest::Approx(0.05));
    CHECK(sr_step(v2(0.4, 0.2), v2(0, 0), 3.0, 0.1) == v2(0.4, 0.2));
    const Vector next = sr_step(v2(0, 0), v2(-1, 3), 1.0, 0.1);
    CHECK(next[0] == doctest::Approx(-0.1));
    CHECK(next[1] == doctest::Approx(0.1));
}

TEST_CASE("lms_step examples") {
    CHECK(lms_step(v1(0), v1(1), 0.5, 0.1)[0] == doctest::Approx(0.05));
    CHECK(lms_step(v2(1, 2), v2(1, 1), 3.0, 0.3) == v2(1, 2));
    CHECK(lms_step(v1(1), v1(1), 0.0, 0.5)[0] == doctest::Approx(0.5));
}

TEST_CASE("SE increments are residual-scale invariant with norm mu |phi|") {
    RandomStream rng(10);
    for (int k = 0; k < 1000; ++k) {
        const Vector theta = v2(rng.normal(), rng.normal());
        const Vector phi = v2(rng.normal(), rng.normal());
        const double y = rng.normal();
        const double mu = 0.01 + rng.uniform();
        const double c = 0.1 + 10 * rng.uniform();
        const double residual = y - phi.dot(theta);
        // Scaling the residual by c leaves the increment unchanged.
        const double y_scaled = phi.dot(theta) + c * residual;
        const Vector inc = se_step(theta, phi, y, mu) - theta;
        CHECK((se_step(theta, phi, y_scaled, mu) - theta - inc).norm() < 1e-12);
        CHECK(inc.norm() == doctest::Approx(mu * phi.norm()).epsilon(1e-12));
        // LMS increment scales with the residual instead.
        const Vector lms_inc = lms_step(theta, phi, y_scaled, mu) - theta;
        CHECK(lms_inc.norm() == doctest::Approx(mu * std::abs(c * residual) * phi.norm()).epsilon(1e-9));
    }
}

TEST_CASE("run_tracking with zero stepsize keeps theta0") {
    const RegimeModel regime({v1(-1), v1(0), v1(1)}, GeneratorMatrix::validate(example_q()), 0.03,
                             Vector::Constant(3, 1.0 / 3.0));
    const auto signal = SignalModel::gaussian(Matrix::Identity(1, 1), 0.25);
    RandomStream rng(1);
    const auto traj = run_tracking(regime, signal, FilterConfig{Algorithm::SE, 0.0, v1(0.3)}, 50, rng);
    CHECK(traj.thetas.size() == 51);
    CHECK(traj.chain.indices.size() == 51);
    CHECK(traj.observations.size() == 50);
    for (const auto& t : traj.thetas) CHECK(t[0] == 0.3);
}

TEST_CASE("noiseless SE with unit regressor climbs then chatters around the target") {
    // theta_n = 0.05 n until it reaches 1, then stays within one step of it.
    Vector theta = v1(0.0);
    const double mu = 0.05;
    for (int n = 1; n <= 60; ++n) {
        theta = se_step(theta, v1(1.0), 1.0, mu);
        if (n <= 20) {
            CHECK(theta[0] == doctest::Approx(0.05 * n));
        } else {
            CHECK(theta[0] >= 0.95 - 1e-9);
            CHECK(theta[0] <= 1.05 + 1e-9);
        }
    }
}

TEST_CASE("LMS contraction in the scalar noiseless fixed-parameter case") {
    const double mu = 0.2, a = 1.5;
    Vector theta = v1(-0.4);
    double err = a - theta[0];
    for (int n = 0; n < 30; ++n) {
        theta = lms_step(theta, v1(1.0), a, mu);
        const double next = a - theta[0];
        CHECK(next == doctest::Approx((1.0 - mu) * err).epsilon(1e-12));
        err = next;
    }
}

TEST_CASE("run_tracking per-step increment bound and common random numbers") {
    const RegimeModel regime({v1(-1), v1(0), v1(1)}, GeneratorMatrix::validate(example_q()), 0.03,
                             Vector::Constant(3, 1.0 / 3.0));
    const auto signal = SignalModel::gaussian(Matrix::Identity(1, 1), 0.25);
    const double mu = 0.05;
    std::vector<Trajectory> runs;
    for (Algorithm alg : {Algorithm::SE, Algorithm::SR, Algorithm::LMS}) {
        RandomStream rng(1234);
        runs.push_back(run_tracking(regime, signal, FilterConfig{alg, mu, v1(0.0)}, 2000, rng));
    }
    CHECK(runs[0].chain.indices == runs[1].chain.indices);
    CHECK(runs[0].chain.indices == runs[2].chain.indices);
    CHECK(runs[0].observations == runs[1].observations);
    CHECK(runs[0].observations == runs[2].observations);

    // Replay the stream to recover phi_n.
    RandomStream replay(1234);
    const auto chain = sample_dtmc(regime, 2000, replay);
    CHECK(chain.indices == runs[0].chain.indices);
    Vector phi;
    for (int n = 0; n < 2000; ++n) {
        const double e = signal.sample(replay, phi);
        CHECK(runs[0].observations[static_cast<std::size_t>(n)] == phi[0] * runs[0].alpha(n)[0] + e);
        const double step = (runs[0].thetas[static_cast<std::size_t>(n) + 1] - runs[0].thetas[static_cast<std::size_t>(n)]).norm();
        CHECK(step <= mu * phi.norm() * (1 + 1e-12));
    }

    RandomStream again(1234);
    const auto repeat = run_tracking(regime, signal, FilterConfig{Algorithm::SE, mu, v1(0.0)}, 2000, again);
    CHECK(repeat.thetas == runs[0].thetas);
}

TEST_CASE("run_tracking on the proportional scenario stays within five bound units") {
    const double mu = 0.05, eps = 0.03;
    const RegimeModel regime({v1(-1), v1(0), v1(1)}, GeneratorMatrix::validate(example_q()), eps,
                             Vector::Constant(3, 1.0 / 3.0));
    const auto signal = SignalModel::gaussian(Matrix::Identity(1, 1), 0.25);
    const int reps = 400, n = 1000;
    double acc = 0.0;
    long count = 0;
    for (int rep = 0; rep < reps; ++rep) {
        RandomStream rng = RandomStream::derive(77, static_cast<std::uint64_t>(rep));
        const auto traj = run_tracking(regime, signal, FilterConfig{Algorithm::SE, mu, v1(0.0)}, n, rng);
        for (int k = n / 2; k <= n; ++k) {
            acc += (traj.alpha(k) - traj.thetas[static_cast<std::size_t>(k)]).squaredNorm();
            ++count;
        }
    }
    CHECK(acc / count < 5.0 * (mu + eps + eps * eps / mu));
}

TEST_CASE("divergence guard and dimension checks") {
    const RegimeModel regime({v1(-1), v1(0), v1(1)}, GeneratorMatrix::validate(example_q()), 0.03,
                             Vector::Constant(3, 1.0 / 3.0));
    const auto signal = SignalModel::gaussian(Matrix::Identity(1, 1), 0.25);
    RandomStream rng(3);
    // LMS with mu = 5 is unstable for unit-variance regressors.
    try {
        run_tracking(regime, signal, FilterConfig{Algorithm::LMS, 5.0, v1(0.0), 1e3}, 500, rng);
        FAIL("expected divergence");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DivergenceDetected);
        CHECK(e.index() > 0);
    }
    RandomStream rng2(3);
    CHECK_THROWS_AS(run_tracking(regime, signal, FilterConfig{Algorithm::SE, 0.1, v2(0, 0)}, 10, rng2), Error);
    CHECK_THROWS_AS(run_tracking(single_state(1.0), signal, FilterConfig{Algorithm::SE, -0.1, v1(0)}, 10, rng2), Error);
}

TEST_CASE("algorithm names round-trip") {
    for (Algorithm a : {Algorithm::SE, Algorithm::SR, Algorithm::LMS}) CHECK(parse_algorithm(to_string(a)) == a);
    CHECK_THROWS_AS(parse_algorithm("NLMS"), Error);
}
