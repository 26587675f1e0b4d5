// Integrator contract: adaptive Dopri5 against closed-form solutions, step
// control failure modes, and the fixed-step RK4 used for frame-averaged runs.
#include <catch2/catch_amalgamated.hpp>

#include <qed/errors.hpp>
#include <qed/ode.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <vector>

using Catch::Approx;
using cplx = std::complex<double>;

TEST_CASE("dopri5 matches closed-form solutions", "[ode]") {
    SECTION("scalar exponential decay") {
        auto f = [](double, const Eigen::VectorXd& y) -> Eigen::VectorXd { return -y; };
        Eigen::VectorXd y0(1);
        y0 << 1.0;
        qed::Dopri5Options opt;
        opt.abs_tol = 1e-10;
        const Eigen::VectorXd yT = qed::dopri5(f, y0, 0.0, 2.0, opt);
        CHECK(yT(0) == Approx(std::exp(-2.0)).margin(1e-8));
    }

    SECTION("harmonic oscillator position and velocity") {
        const double w = 3.0;
        auto f = [w](double, const Eigen::VectorXd& y) -> Eigen::VectorXd {
            Eigen::VectorXd dy(2);
            dy << y(1), -w * w * y(0);
            return dy;
        };
        Eigen::VectorXd y0(2);
        y0 << 1.0, 0.0;
        qed::Dopri5Options opt;
        opt.abs_tol = 1e-10;
        const double T = 5.0;
        const Eigen::VectorXd yT = qed::dopri5(f, y0, 0.0, T, opt);
        CHECK(yT(0) == Approx(std::cos(w * T)).margin(1e-6));
        CHECK(yT(1) == Approx(-w * std::sin(w * T)).margin(1e-6));
    }

    SECTION("complex phase rotation conserves modulus") {
        const double w = 2.5;
        auto f = [w](double, const Eigen::VectorXcd& y) -> Eigen::VectorXcd {
            return cplx(0.0, w) * y;
        };
        Eigen::VectorXcd y0(1);
        y0 << cplx(1.0, 0.0);
        qed::Dopri5Options opt;
        opt.abs_tol = 1e-11;
        const double T = 4.0;
        const Eigen::VectorXcd yT = qed::dopri5(f, y0, 0.0, T, opt);
        CHECK(yT(0).real() == Approx(std::cos(w * T)).margin(1e-7));
        CHECK(yT(0).imag() == Approx(std::sin(w * T)).margin(1e-7));
        CHECK(std::abs(yT(0)) == Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("dopri5 validates the integration interval", "[ode]") {
    auto f = [](double, const Eigen::VectorXd& y) -> Eigen::VectorXd { return -y; };
    Eigen::VectorXd y0(1);
    y0 << 0.7;

    SECTION("reversed interval is rejected") {
        CHECK_THROWS_AS(qed::dopri5(f, y0, 1.0, 0.0), qed::InvalidParameterError);
    }

    SECTION("empty interval returns the state unchanged") {
        const Eigen::VectorXd yT = qed::dopri5(f, y0, 2.0, 2.0);
        CHECK((yT - y0).norm() == 0.0);
    }
}

TEST_CASE("dopri5 reports stiffness instead of looping", "[ode]") {
    // An explicit method cannot take a stable step for this rate with the
    // default floor; the controller must shrink to h_min and give up, even
    // though trial steps overflow to non-finite values along the way.
    auto f = [](double, const Eigen::VectorXd& y) -> Eigen::VectorXd { return -1e20 * y; };
    Eigen::VectorXd y0(1);
    y0 << 1.0;
    CHECK_THROWS_AS(qed::dopri5(f, y0, 0.0, 1.0), qed::StiffnessError);
}

TEST_CASE("rk4_fixed preserves fixed points of affine flows exactly", "[ode]") {
    auto f = [](double, const double& y) -> double { return -(y - 3.0); };

    SECTION("starting on the fixed point stays there bitwise") {
        const double yT = qed::rk4_fixed(f, 3.0, 0.0, 40.0, 0.5);
        CHECK(yT == 3.0);
    }

    SECTION("long integration converges onto the fixed point") {
        const double yT = qed::rk4_fixed(f, 0.0, 0.0, 40.0, 0.01);
        CHECK(yT == Approx(3.0).margin(1e-12));
    }
}

TEST_CASE("rk4_fixed callback sequencing and validation", "[ode]") {
    auto f = [](double, const double& y) -> double { return -y; };

    SECTION("callback fires at t0 and after every step") {
        std::vector<double> times;
        std::vector<double> values;
        qed::rk4_fixed(
            f, 1.0, 0.0, 1.0, 0.1, [&](double t, const double& y) {
                times.push_back(t);
                values.push_back(y);
            });
        REQUIRE(times.size() == 11);
        CHECK(times.front() == 0.0);
        CHECK(times.back() == Approx(1.0).margin(1e-12));
        for (std::size_t i = 1; i < times.size(); ++i) CHECK(times[i] > times[i - 1]);
        CHECK(values.front() == 1.0);
        CHECK(values.back() == Approx(std::exp(-1.0)).margin(1e-7));
    }

    SECTION("nonpositive step is rejected") {
        CHECK_THROWS_AS(qed::rk4_fixed(f, 1.0, 0.0, 1.0, 0.0), qed::InvalidParameterError);
        CHECK_THROWS_AS(qed::rk4_fixed(f, 1.0, 0.0, 1.0, -0.1), qed::InvalidParameterError);
    }
}

TEST_CASE("rk4_fixed converges at fourth order", "[ode]") {
    auto f = [](double, const double& y) -> double { return -y; };
    const double exact = std::exp(-2.0);
    const double err_coarse = std::abs(qed::rk4_fixed(f, 1.0, 0.0, 2.0, 0.2) - exact);
    const double err_fine = std::abs(qed::rk4_fixed(f, 1.0, 0.0, 2.0, 0.1) - exact);
    REQUIRE(err_fine > 0.0);
    const double ratio = err_coarse / err_fine;
    CHECK(ratio > 14.0);
    CHECK(ratio < 18.0);
}
