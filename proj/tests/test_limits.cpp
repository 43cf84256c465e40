#include <doctest.h>

#include <cmath>
#include <numbers>

#include "signtrack/limits.hpp"

using namespace signtrack;

namespace {

const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

Vector v1(double x) { return Vector::Constant(1, x); }

Matrix diag(std::initializer_list<double> d) {
    Vector v(static_cast<Eigen::Index>(d.size()));
    Eigen::Index i = 0;
    for (double x : d) v[i++] = x;
    return v.asDiagonal();
}

std::vector<Vector> example_states() { return {v1(-1), v1(0), v1(1)}; }

Vector p0() {
    Vector p(3);
    p << 0.75, 0.125, 0.125;
    return p;
}

}  // namespace

TEST_CASE("closed-form effective matrix") {
    const Matrix a = effective_matrix_closed_form(SignalModel::gaussian(Matrix::Identity(1, 1), 0.25));
    CHECK(a(0, 0) == doctest::Approx(1.5957691216).epsilon(1e-9));
    const Matrix wide = effective_matrix_closed_form(SignalModel::gaussian(Matrix::Identity(1, 1), 1.0));
    CHECK(wide(0, 0) == a(0, 0) / 2.0);
    const Matrix d = effective_matrix_closed_form(SignalModel::gaussian(diag({1, 4}), 1.0));
    CHECK((d - kSqrt2OverPi * diag({1, 4})).norm() < 1e-14);
    const SignalModel trunc(RegressorDist{DistKind::truncated_gaussian, Matrix::Identity(1, 1), 3.0},
                            NoiseDist{DistKind::gaussian, 1.0, 0.0});
    try {
        effective_matrix_closed_form(trunc);
        FAIL("expected NonGaussianClosedForm");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonGaussianClosedForm);
    }
}

TEST_CASE("Monte Carlo Jacobian matches the closed form") {
    RandomStream rng(2024);
    const auto scalar = SignalModel::gaussian(Matrix::Identity(1, 1), 0.25);
    const auto mc = effective_matrix_monte_carlo(scalar, 10'000'000, 0.01, rng);
    CHECK(std::abs(mc.value(0, 0) - std::sqrt(2.0 / std::numbers::pi) / 0.5) <= 0.02 * 1.5958);

    const auto wide = SignalModel::gaussian(diag({1, 4}), 1.0);
    const auto mc2 = effective_matrix_monte_carlo(wide, 10'000'000, 0.01, rng);
    const Matrix ref = effective_matrix_closed_form(wide);
    CHECK((mc2.value - ref).cwiseAbs().maxCoeff() <= 0.02 * ref.norm());
}

TEST_CASE("Monte Carlo Jacobian rejects noisy estimates") {
    RandomStream rng(1);
    try {
        effective_matrix_monte_carlo(SignalModel::gaussian(Matrix::Identity(1, 1), 0.25), 200, 0.001, rng);
        FAIL("expected MonteCarloVarianceTooHigh");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MonteCarloVarianceTooHigh);
    }
}

TEST_CASE("switched field") {
    const auto sys = LimitSystem::uniform(RegimeKind::switched, {v1(1), v1(-2)}, Matrix::Constant(1, 1, 2.0));
    CHECK(switched_field(sys, 0, v1(0))[0] == 2.0);
    CHECK(switched_field(sys, 0, v1(1))[0] == 0.0);
    CHECK(switched_field(sys, 1, v1(-2))[0] == 0.0);
    const Vector t1 = v1(0.3), t2 = v1(-1.7);
    CHECK((switched_field(sys, 1, t1) + switched_field(sys, 1, t2) - switched_field(sys, 1, v1(0)))[0] ==
          doctest::Approx(switched_field(sys, 1, t1 + t2)[0]));
    CHECK_THROWS_AS(switched_field(sys, 2, v1(0)), Error);
    CHECK_THROWS_AS(switched_field(sys, -1, v1(0)), Error);
    const auto slow = LimitSystem::uniform(RegimeKind::slow, {v1(1), v1(-2)}, Matrix::Constant(1, 1, 2.0),
                                           Vector::Constant(2, 0.5));
    CHECK_THROWS_AS(switched_field(slow, 0, v1(0)), Error);
}

TEST_CASE("slow field equilibria") {
    const Matrix a = Matrix::Constant(1, 1, 1.5958);
    const auto sys = LimitSystem::uniform(RegimeKind::slow, example_states(), a, p0());
    CHECK(std::abs(slow_field(sys, v1(-0.625))[0]) < 1e-14);
    CHECK(slow_field(sys, v1(0))[0] == doctest::Approx(1.5958 * -0.625));

    Vector unit(3);
    unit << 0, 0, 1;
    const auto point = LimitSystem::uniform(RegimeKind::slow, example_states(), a, unit);
    const auto sw = LimitSystem::uniform(RegimeKind::switched, example_states(), a);
    CHECK(slow_field(point, v1(0.4))[0] == doctest::Approx(switched_field(sw, 2, v1(0.4))[0]));
    CHECK_THROWS_AS(fast_field(sys, v1(0)), Error);
}

TEST_CASE("fast field equilibria") {
    const auto sys = LimitSystem::uniform(RegimeKind::fast, example_states(), Matrix::Identity(1, 1),
                                          Vector::Constant(3, 1.0 / 3.0));
    for (double th : {-2.0, -0.3, 0.0, 0.9}) CHECK(fast_field(sys, v1(th))[0] == doctest::Approx(-th));
    CHECK(std::abs(fast_field(sys, v1(0))[0]) < 1e-15);

    const auto one = LimitSystem::uniform(RegimeKind::fast, {v1(0.7)}, Matrix::Constant(1, 1, 3.0), Vector::Ones(1));
    const auto sw = LimitSystem::uniform(RegimeKind::switched, {v1(0.7)}, Matrix::Constant(1, 1, 3.0));
    CHECK(fast_field(one, v1(-0.2))[0] == doctest::Approx(switched_field(sw, 0, v1(-0.2))[0]));
}

TEST_CASE("LimitSystem validation") {
    CHECK_THROWS_AS(LimitSystem::uniform(RegimeKind::switched, example_states(), Matrix::Constant(1, 1, -1.0)), Error);
    Matrix rot(2, 2);
    rot << 0, 1, -1, 0;
    try {
        LimitSystem::uniform(RegimeKind::switched, {Vector::Zero(2)}, rot);
        FAIL("expected NotStable");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NotStable);
    }
    CHECK_THROWS_AS(LimitSystem::uniform(RegimeKind::slow, example_states(), Matrix::Identity(1, 1), Vector::Ones(2)),
                    Error);
}

TEST_CASE("RK4 on the constant-regime closed form") {
    const auto sys = LimitSystem::uniform(RegimeKind::switched, {v1(1), v1(-1)}, Matrix::Identity(1, 1));
    ContinuousChainPath chain{{}, {0}, 5.0};
    auto max_err = [&](double dt) {
        const auto path = integrate_ode(sys, chain, v1(0), dt, 5.0);
        double err = 0.0;
        for (std::size_t k = 0; k < path.times.size(); ++k)
            err = std::max(err, std::abs(path.values[k][0] - (1.0 - std::exp(-path.times[k]))));
        return err;
    };
    CHECK(max_err(1e-3) <= 1e-8);
    const double coarse = max_err(0.2), fine = max_err(0.1);
    CHECK(coarse / fine >= 12.0);
    const auto path = integrate_ode(sys, chain, v1(0), 0.3, 1.0);
    CHECK(path.times.size() == 5);
    CHECK(path.times.back() == 1.0);
}

TEST_CASE("switched RK4 honours jump times") {
    // Piecewise closed form: theta relaxes toward a_i at rate A on each segment.
    const double a = 1.7;
    const auto sys = LimitSystem::uniform(RegimeKind::switched, example_states(), Matrix::Constant(1, 1, a));
    ContinuousChainPath chain{{0.37, 1.111, 2.5}, {2, 0, 1, 0}, 4.0};
    const auto path = integrate_ode(sys, chain, v1(0.25), 1e-3, 4.0);
    auto exact = [&](double t) {
        const std::vector<double> bounds = {0.0, 0.37, 1.111, 2.5, 4.0};
        double th = 0.25;
        for (std::size_t s = 0; s + 1 < bounds.size(); ++s) {
            const double target = example_states()[static_cast<std::size_t>(chain.states[s])][0];
            const double end = std::min(t, bounds[s + 1]);
            th = target + (th - target) * std::exp(-a * (end - bounds[s]));
            if (t <= bounds[s + 1]) break;
        }
        return th;
    };
    double err = 0.0;
    for (std::size_t k = 0; k < path.times.size(); ++k) err = std::max(err, std::abs(path.values[k][0] - exact(path.times[k])));
    CHECK(err <= 1e-8);
}

TEST_CASE("slow field ODE approaches -0.625 monotonically") {
    const auto sys = LimitSystem::uniform(RegimeKind::slow, example_states(), Matrix::Constant(1, 1, 1.5958), p0());
    const auto path = integrate_ode(sys, v1(0), 0.01, 10.0);
    for (std::size_t k = 1; k < path.values.size(); ++k) {
        CHECK(path.values[k][0] < path.values[k - 1][0]);
        CHECK(path.values[k][0] > -0.625);
        const double t = path.times[k];
        CHECK(path.values[k][0] == doctest::Approx(-0.625 * (1 - std::exp(-1.5958 * t))).epsilon(1e-8));
    }
    CHECK(path.values.back()[0] == doctest::Approx(-0.625).epsilon(1e-6));
}

TEST_CASE("noise covariance closed form and empirical") {
    RandomStream rng(8);
    const auto unit = SignalModel::gaussian(Matrix::Identity(1, 1), 0.25);
    CHECK(noise_covariance_closed_form(unit).sigma == Matrix::Identity(1, 1));
    const auto emp = noise_covariance_empirical(unit, 3, 1'000'000, rng);
    CHECK(std::abs(emp.covariance.sigma(0, 0) - 1.0) <= 0.02);
    REQUIRE(emp.lag_terms.size() == 3);
    for (std::size_t l = 0; l < 3; ++l)
        CHECK(std::abs(emp.lag_terms[l](0, 0)) <= 4.0 * emp.lag_std_errors[l](0, 0));

    const auto wide = SignalModel::gaussian(diag({1, 4}), 2.0);
    const Matrix closed = noise_covariance_closed_form(wide).sigma;
    CHECK((closed - diag({1, 4})).norm() < 1e-15);
    const auto emp2 = noise_covariance_empirical(wide, 0, 1'000'000, rng);
    CHECK((emp2.covariance.sigma - closed).cwiseAbs().maxCoeff() <= 0.02 * closed.norm());
    const auto& nc = emp2.covariance;
    CHECK((nc.sqrt * nc.sqrt.transpose() - nc.sigma).norm() <= 1e-10);
}

TEST_CASE("matrix square root") {
    CHECK((matrix_sqrt_psd(Matrix::Identity(3, 3)) - Matrix::Identity(3, 3)).norm() < 1e-14);
    CHECK((matrix_sqrt_psd(diag({4, 9})) - diag({2, 3})).norm() < 1e-14);
    RandomStream rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix b(4, 3);
        for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = rng.normal();
        const Matrix sigma = b * b.transpose();
        const Matrix s = matrix_sqrt_psd(sigma);
        CHECK((s * s.transpose() - sigma).norm() <= 1e-10);
    }
    try {
        matrix_sqrt_psd(diag({1, -0.1}));
        FAIL("expected NotPositiveSemidefinite");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NotPositiveSemidefinite);
    }
    CHECK(matrix_sqrt_psd(diag({1, -1e-12}))(1, 1) == 0.0);
    Matrix asym(2, 2);
    asym << 1, 0.5, 0, 1;
    CHECK_THROWS_AS(matrix_sqrt_psd(asym), Error);
}

TEST_CASE("Lyapunov solver") {
    CHECK(lyapunov_solve(Matrix::Constant(1, 1, 2.5), Matrix::Constant(1, 1, 3.0))(0, 0) == doctest::Approx(0.6));
    CHECK((lyapunov_solve(Matrix::Identity(2, 2), diag({2, 4})) - diag({1, 2})).norm() < 1e-14);
    RandomStream rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix m(3, 3), b(3, 3);
        for (Eigen::Index i = 0; i < 9; ++i) {
            m.data()[i] = rng.normal();
            b.data()[i] = rng.normal();
        }
        // Shift so every eigenvalue has positive real part.
        const double shift = m.eigenvalues().real().minCoeff();
        const Matrix a = m + (1.0 - shift) * Matrix::Identity(3, 3);
        const Matrix sigma = b * b.transpose() + 0.1 * Matrix::Identity(3, 3);
        const Matrix s = lyapunov_solve(a, sigma);
        CHECK((a * s + s * a.transpose() - sigma).norm() <= 1e-10);
        CHECK((s - s.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(s).eigenvalues().minCoeff() > 0.0);
    }
    try {
        lyapunov_solve(diag({1, -1}), Matrix::Identity(2, 2));
        FAIL("expected SingularLyapunov");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SingularLyapunov);
    }
}

TEST_CASE("OU deterministic decay converges at first order") {
    RandomStream rng(0);
    const Matrix a = Matrix::Identity(1, 1), zero = Matrix::Zero(1, 1);
    auto err = [&](double dt) {
        const auto path = simulate_ou(a, zero, v1(1), dt, 2.0, rng);
        double e = 0.0;
        for (std::size_t k = 0; k < path.times.size(); ++k)
            e = std::max(e, std::abs(path.values[k][0] - std::exp(-path.times[k])));
        return e;
    };
    const double e1 = err(0.01), e2 = err(0.005);
    CHECK(e1 < 0.01);
    CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("OU stationary variance matches the Lyapunov solution") {
    const Matrix a = Matrix::Identity(1, 1), s = Matrix::Identity(1, 1);
    double acc = 0.0;
    long count = 0;
    for (int rep = 0; rep < 200; ++rep) {
        RandomStream rng = RandomStream::derive(5, static_cast<std::uint64_t>(rep));
        const auto path = simulate_ou(a, s, v1(0), 0.01, 50.0, rng);
        for (std::size_t k = 0; k < path.times.size(); ++k) {
            if (path.times[k] < 10.0) continue;
            acc += path.values[k][0] * path.values[k][0];
            ++count;
        }
    }
    const double reference = lyapunov_solve(a, s)(0, 0);
    CHECK(reference == doctest::Approx(0.5));
    CHECK(std::abs(acc / count - reference) <= 0.1 * reference);

    const Matrix stiff = Matrix::Constant(1, 1, 20.0);
    double acc2 = 0.0;
    long count2 = 0;
    RandomStream rng(6);
    const auto path = simulate_ou(stiff, s, v1(0), 0.001, 200.0, rng);
    for (const auto& v : path.values) {
        acc2 += v[0] * v[0];
        ++count2;
    }
    CHECK(std::abs(acc2 / count2 - 1.0 / 40.0) <= 0.1 / 40.0);
}

TEST_CASE("switched OU uses the regime drift") {
    const auto sys = LimitSystem::uniform(RegimeKind::switched, {v1(0), v1(1)}, Matrix::Identity(1, 1));
    LimitSystem two = sys;
    two.matrices[1] = Matrix::Constant(1, 1, 3.0);
    ContinuousChainPath chain{{1.0}, {0, 1}, 2.0};
    RandomStream rng(0);
    const auto path = simulate_ou(two, chain, Matrix::Zero(1, 1), v1(1), 1e-4, 2.0, rng);
    CHECK(path.values.back()[0] == doctest::Approx(std::exp(-1.0 - 3.0)).epsilon(1e-3));
    RandomStream r1(4), r2(4);
    const auto p1 = simulate_ou(two, chain, Matrix::Identity(1, 1), v1(0), 0.01, 2.0, r1);
    const auto p2 = simulate_ou(two, chain, Matrix::Identity(1, 1), v1(0), 0.01, 2.0, r2);
    CHECK(p1.values == p2.values);
}
