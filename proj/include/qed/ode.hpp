#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "qed/errors.hpp"

// Generic ODE drivers used across the library.
//
// dopri5: adaptive Dormand-Prince 5(4) with per-component absolute error
// control. The state type S must support Eigen-style arithmetic
// (+, scalar *, cwiseAbs().maxCoeff()); MatrixXcd, VectorXcd and small
// fixed-size vectors all qualify. Right-hand sides are callables
// S f(double t, const S& y).
//
// rk4_fixed: classical fourth-order Runge-Kutta with a fixed step, used where
// a fast oscillating coefficient must be resolved explicitly and
// reproducibility of the step sequence matters more than adaptivity.

namespace qed {

struct Dopri5Options {
    double abs_tol = 1e-8;  ///< local error bound per state component
    double rel_tol = 0.0;   ///< optional relative addition to the bound
    double h_init = 1e-4;   ///< initial trial step, ns
    double h_min = 1e-13;   ///< below this the system is declared stiff
    double safety = 0.9;
    double grow_max = 5.0;
    double shrink_min = 0.2;
};

/// Integrate y' = f(t, y) from t0 to t1 (t1 >= t0). Returns y(t1).
/// Error per component is bounded by abs_tol + rel_tol*|y|; steps violating
/// the bound are rejected and retried. Throws StiffnessError on step-size
/// underflow.
template <class S, class F>
S dopri5(F&& f, S y, double t0, double t1, const Dopri5Options& opt = {}) {
    // Dormand-Prince RK5(4)7M coefficients.
    constexpr double a21 = 1.0 / 5;
    constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                     a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                     a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                     b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    // b(5th) - b(4th): coefficients of the embedded error estimate.
    constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                     e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

    if (t1 < t0) throw InvalidParameterError("dopri5: t1 < t0");
    if (t1 == t0) return y;

    double t = t0;
    double h = std::min(opt.h_init, t1 - t0);
    S k1 = f(t, y); // FSAL: reused across accepted steps

    while (t < t1) {
        // h is the controller's preferred step; the stiffness verdict applies
        // to it, not to the tail step clamped against the interval end.
        if (h < opt.h_min)
            throw StiffnessError("dopri5: step size underflow at t = " + std::to_string(t) +
                                 " ns (h = " + std::to_string(h) + ")");
        const double hs = std::min(h, t1 - t);

        S k2 = f(t + hs / 5.0, S(y + hs * (a21 * k1)));
        S k3 = f(t + 3.0 * hs / 10.0, S(y + hs * (a31 * k1 + a32 * k2)));
        S k4 = f(t + 4.0 * hs / 5.0, S(y + hs * (a41 * k1 + a42 * k2 + a43 * k3)));
        S k5 = f(t + 8.0 * hs / 9.0,
                 S(y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4)));
        S k6 = f(t + hs,
                 S(y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5)));
        S ynew = y + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        S k7 = f(t + hs, ynew);

        S err = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        double scale = opt.abs_tol;
        if (opt.rel_tol > 0.0)
            scale += opt.rel_tol * std::max(y.cwiseAbs().maxCoeff(), ynew.cwiseAbs().maxCoeff());
        const double err_ratio = err.cwiseAbs().maxCoeff() / scale;

        if (err_ratio <= 1.0) { // NaN compares false: non-finite steps are rejected
            t += hs;
            y = std::move(ynew);
            k1 = std::move(k7);
        }
        double factor;
        if (!std::isfinite(err_ratio))
            factor = opt.shrink_min; // overflowed trial step: shrink hard
        else if (err_ratio > 0.0)
            factor = opt.safety * std::pow(err_ratio, -0.2);
        else
            factor = opt.grow_max;
        h = hs * std::clamp(factor, opt.shrink_min, opt.grow_max);
    }
    return y;
}

/// Classical RK4 with fixed step h from t0 to t1; n = round((t1-t0)/h) steps
/// of exactly h each. The callback, if provided, observes (t, y) after every
/// step (and once for the initial condition).
template <class S, class F, class CB>
S rk4_fixed(F&& f, S y, double t0, double t1, double h, CB&& callback) {
    if (!(h > 0.0)) throw InvalidParameterError("rk4_fixed: step must be positive");
    const long n = std::lround((t1 - t0) / h);
    callback(t0, y);
    double t = t0;
    for (long i = 0; i < n; ++i) {
        S k1 = f(t, y);
        S k2 = f(t + h / 2.0, S(y + (h / 2.0) * k1));
        S k3 = f(t + h / 2.0, S(y + (h / 2.0) * k2));
        S k4 = f(t + h, S(y + h * k3));
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t = t0 + double(i + 1) * h;
        callback(t, y);
    }
    return y;
}

template <class S, class F>
S rk4_fixed(F&& f, S y, double t0, double t1, double h) {
    return rk4_fixed(std::forward<F>(f), std::move(y), t0, t1, h, [](double, const S&) {});
}

} // namespace qed
