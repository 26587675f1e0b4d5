#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <utility>
#include <vector>

#include "qed/errors.hpp"
#include "qed/ode.hpp"
#include "qed/operators.hpp"
#include "qed/params.hpp"

// Reduced models for two-photon (parametric) driving of the resonator by a
// gate-charge modulation at twice the resonator frequency,
// N_g(t) = 1/2 + (Omega / 4 E_C) cos(2 omega0 t), with the circuit biased at
// the charge sweet spot and theta_ex = pi/2.
//
// Two layers are covered, each in a laboratory-frame form (fast 2 omega0
// coefficients retained) and a rotating-wave form:
//
//  * the driven dissipative qubit alone: populations rho11 and coherence
//    rho10, whose stationary rotating-frame coherence -i*lambda sets the
//    strength of the effective parametric drive on the field;
//  * the Gaussian field moments <a>, <a^2>, <a^dag a>, which close among
//    themselves once the qubit is adiabatically eliminated.
//
// All rates and frequencies are angular (rad/ns); time is in ns.

namespace qed {

struct DriveParams {
    double Omega = 0.0;        ///< gate-drive amplitude in energy units, rad/ns
    double omega0 = 0.0;       ///< resonator frequency, rad/ns
    double E_J_over_hbar = 0.0;///< Josephson energy, rad/ns
    double theta_L = 0.0;      ///< zero-point phase coupling (dimensionless)
    double gamma_minus = 0.0;  ///< qubit relaxation rate, rad/ns
    double gamma_phi = 0.0;    ///< qubit pure-dephasing rate, rad/ns
    double kappa = 0.0;        ///< photon loss rate, rad/ns

    double ratio() const { return Omega / (2.0 * omega0); }

    void validate() const {
        if (!(omega0 > 0.0)) throw InvalidParameterError("DriveParams: omega0 must be > 0");
        if (Omega < 0.0) throw InvalidParameterError("DriveParams: Omega must be >= 0");
        if (E_J_over_hbar < 0.0)
            throw InvalidParameterError("DriveParams: E_J_over_hbar must be >= 0");
        if (theta_L < 0.0) throw InvalidParameterError("DriveParams: theta_L must be >= 0");
        if (gamma_minus < 0.0 || gamma_phi < 0.0 || kappa < 0.0)
            throw InvalidParameterError("DriveParams: rates must be >= 0");
    }
};

/// Effective two-photon Rabi coupling g = (Omega / 2 omega0) * (E_J / 4 hbar).
inline double g_eff(const DriveParams& p) {
    return p.ratio() * p.E_J_over_hbar / 4.0;
}

/// Total rotating-frame coherence decay Gamma' = gamma_-/2 + gamma_phi.
inline double gamma_prime(const DriveParams& p) {
    return 0.5 * p.gamma_minus + p.gamma_phi;
}

/// Stationary coherence amplitude lambda = gamma_- g / (gamma_- Gamma' + 4 g^2):
/// the rotating-frame qubit coherence saturates at rho10 = -i*lambda.
inline double lambda_ss(const DriveParams& p) {
    p.validate();
    const double g = g_eff(p);
    const double denom = p.gamma_minus * gamma_prime(p) + 4.0 * g * g;
    if (!(denom > 0.0))
        throw InvalidParameterError("lambda_ss: gamma_- Gamma' + 4 g^2 must be positive");
    return p.gamma_minus * g / denom;
}

/// Stationary excited-state population 2 g^2 / (gamma_- Gamma' + 4 g^2).
inline double rho11_ss(const DriveParams& p) {
    p.validate();
    const double g = g_eff(p);
    const double denom = p.gamma_minus * gamma_prime(p) + 4.0 * g * g;
    if (!(denom > 0.0))
        throw InvalidParameterError("rho11_ss: gamma_- Gamma' + 4 g^2 must be positive");
    return 2.0 * g * g / denom;
}

// ---------------------------------------------------------------------------
// Driven qubit
// ---------------------------------------------------------------------------

/// Two-level state: excited population and the 1-0 coherence. In the
/// laboratory frame rho10 carries the fast e^{-i 2 omega0 t} rotation; in the
/// rotating frame it is the slow envelope rho10_tilde.
struct ReducedQubitState {
    double rho11 = 0.0;
    cplx rho10{0.0, 0.0};
};

struct QubitSample {
    double t = 0.0;
    ReducedQubitState state;
};

using QubitSeries = std::vector<QubitSample>;

/// Frame factor linking the two pictures:
/// rho10_lab = rho10_tilde * exp(-i 2 omega0 t - i (Omega/2 omega0) sin 2 omega0 t).
inline cplx qubit_frame_phase(const DriveParams& p, double t) {
    const double arg = -2.0 * p.omega0 * t - p.ratio() * std::sin(2.0 * p.omega0 * t);
    return std::exp(cplx(0.0, arg));
}

namespace detail {

inline Eigen::Vector2cd pack_qubit(const ReducedQubitState& s) {
    return Eigen::Vector2cd(cplx(s.rho11, 0.0), s.rho10);
}

inline ReducedQubitState unpack_qubit(const Eigen::Vector2cd& y) {
    return {y(0).real(), y(1)};
}

} // namespace detail

/// Laboratory-frame master equation of the driven qubit:
///   d rho11/dt = -gamma_- rho11 + i (E_J / 2 hbar)(rho10^* - rho10)
///   d rho10/dt = (-gamma_-/2 - gamma_phi - i 2 omega0 - i Omega cos 2 omega0 t) rho10
///                + i (E_J / 2 hbar)(1 - 2 rho11)
/// integrated with fixed-step RK4 at 200 steps per 2 omega0 period, sampling
/// every step.
inline QubitSeries integrate_qubit_full(const DriveParams& p, const ReducedQubitState& s0,
                                        double t_end) {
    p.validate();
    if (!(t_end > 0.0)) throw InvalidParameterError("integrate_qubit_full: t_end must be > 0");
    const double V = 0.5 * p.E_J_over_hbar;
    const double h = (pi / p.omega0) / 200.0; // 2 omega0 period / 200
    QubitSeries out;
    out.reserve(static_cast<size_t>(t_end / h) + 2);
    auto rhs = [&](double t, const Eigen::Vector2cd& y) -> Eigen::Vector2cd {
        const cplx r11 = y(0);
        const cplx r10 = y(1);
        Eigen::Vector2cd d;
        d(0) = -p.gamma_minus * r11 + cplx(0.0, V) * (std::conj(r10) - r10);
        d(1) = cplx(-0.5 * p.gamma_minus - p.gamma_phi,
                    -2.0 * p.omega0 - p.Omega * std::cos(2.0 * p.omega0 * t)) *
                   r10 +
               cplx(0.0, V) * (1.0 - 2.0 * r11);
        return d;
    };
    rk4_fixed(rhs, detail::pack_qubit(s0), 0.0, t_end, h,
              [&](double t, const Eigen::Vector2cd& y) {
                  out.push_back({t, detail::unpack_qubit(y)});
              });
    return out;
}

/// Rotating-wave form after the transformation
/// rho10 = rho10_tilde exp(-i 2 omega0 t - i (Omega/2 omega0) sin 2 omega0 t)
/// and discarding all oscillating terms:
///   d rho11/dt       = -gamma_- rho11 - i g (rho10_tilde^* - rho10_tilde)
///   d rho10_tilde/dt = -Gamma' rho10_tilde - i g (1 - 2 rho11).
inline QubitSeries integrate_qubit_rwa(const DriveParams& p, const ReducedQubitState& s0,
                                       double t_end, double h = 1e-3) {
    p.validate();
    if (!(t_end > 0.0)) throw InvalidParameterError("integrate_qubit_rwa: t_end must be > 0");
    const double g = g_eff(p);
    const double gp = gamma_prime(p);
    QubitSeries out;
    out.reserve(static_cast<size_t>(t_end / h) + 2);
    auto rhs = [&](double, const Eigen::Vector2cd& y) -> Eigen::Vector2cd {
        const cplx r11 = y(0);
        const cplx r10 = y(1);
        Eigen::Vector2cd d;
        d(0) = -p.gamma_minus * r11 - cplx(0.0, g) * (std::conj(r10) - r10);
        d(1) = -gp * r10 - cplx(0.0, g) * (1.0 - 2.0 * r11);
        return d;
    };
    rk4_fixed(rhs, detail::pack_qubit(s0), 0.0, t_end, h,
              [&](double t, const Eigen::Vector2cd& y) {
                  out.push_back({t, detail::unpack_qubit(y)});
              });
    return out;
}

/// Average of f(state) over the trailing n_cycles periods of the 2 omega0
/// modulation (trapezoid-free simple mean over the recorded samples).
template <class F>
double cycle_average(const QubitSeries& series, double period, int n_cycles, F&& f) {
    if (series.size() < 2) throw InvalidParameterError("cycle_average: series too short");
    const double t_end = series.back().t;
    const double t_from = t_end - double(n_cycles) * period;
    if (t_from < series.front().t)
        throw InvalidParameterError("cycle_average: averaging window exceeds the series");
    double sum = 0.0;
    long count = 0;
    for (const auto& s : series)
        if (s.t >= t_from) {
            sum += f(s);
            ++count;
        }
    return sum / double(count);
}

/// Estimate lambda from a laboratory-frame run: transform the coherence back
/// to the rotating frame and average -Im(rho10_tilde) over the trailing
/// n_cycles drive periods.
inline double lambda_from_full_run(const DriveParams& p, const QubitSeries& lab_series,
                                   int n_cycles = 10) {
    const double period = pi / p.omega0;
    return cycle_average(lab_series, period, n_cycles, [&](const QubitSample& s) {
        const cplx tilde = s.state.rho10 * std::conj(qubit_frame_phase(p, s.t));
        return -tilde.imag();
    });
}

// ---------------------------------------------------------------------------
// Gaussian field moments
// ---------------------------------------------------------------------------

/// First and second field moments: A = <a>, B = <a^2>, N_p = <a^dag a>.
/// Frame conventions follow the integrator that produced them.
struct FieldMoments {
    cplx A{0.0, 0.0};
    cplx B{0.0, 0.0};
    double N_p = 0.0;
};

struct FieldSample {
    double t = 0.0;
    FieldMoments m;
};

using FieldSeries = std::vector<FieldSample>;

/// Dimensionless pump strength mu = lambda theta_L^2 E_J / (hbar kappa);
/// the parametric instability threshold sits at mu = 1.
inline double drive_mu(const DriveParams& p, double lambda) {
    if (!(p.kappa > 0.0)) throw InvalidParameterError("drive_mu: kappa must be > 0");
    return lambda * p.theta_L * p.theta_L * p.E_J_over_hbar / p.kappa;
}

/// Frame factors for the moments:
/// A = A_tilde exp(-i omega0 t),
/// B = B_tilde exp(-i 2 omega0 t - i (lambda theta_L^2 E_J / hbar omega0) cos 2 omega0 t).
inline cplx field_frame_phase_A(const DriveParams& p, double t) {
    return std::exp(cplx(0.0, -p.omega0 * t));
}

inline cplx field_frame_phase_B(const DriveParams& p, double lambda, double t) {
    const double chi = lambda * p.theta_L * p.theta_L * p.E_J_over_hbar / p.omega0;
    const double arg = -2.0 * p.omega0 * t - chi * std::cos(2.0 * p.omega0 * t);
    return std::exp(cplx(0.0, arg));
}

namespace detail {

inline Eigen::Vector3cd pack_field(const FieldMoments& m) {
    return Eigen::Vector3cd(m.A, m.B, cplx(m.N_p, 0.0));
}

inline FieldMoments unpack_field(const Eigen::Vector3cd& y) {
    return {y(0), y(1), y(2).real()};
}

inline void check_field_bounded(const Eigen::Vector3cd& y, double t) {
    if (!y.allFinite() || y(2).real() > 1e12)
        throw InstabilityError("field moments diverged at t = " + std::to_string(t) +
                               " ns (pump beyond the parametric threshold?)");
}

} // namespace detail

/// Laboratory-frame moment equations with the qubit adiabatically eliminated
/// (coherence pinned at -i lambda); c = lambda theta_L^2 E_J / hbar:
///   dA/dt   = (-kappa/2 - i omega0) A + i c (A^* + A) sin 2 omega0 t
///   dB/dt   = (-kappa - i 2 omega0 + i 2 c sin 2 omega0 t) B
///             + i c (2 N_p + 1) sin 2 omega0 t
///   dN_p/dt = -kappa N_p + i c (B^* - B) sin 2 omega0 t
/// integrated with fixed-step RK4 at 200 steps per 2 omega0 period.
inline FieldSeries integrate_field_full(const DriveParams& p, const FieldMoments& m0,
                                        double lambda, double t_end) {
    p.validate();
    if (!(t_end > 0.0)) throw InvalidParameterError("integrate_field_full: t_end must be > 0");
    const double c = lambda * p.theta_L * p.theta_L * p.E_J_over_hbar;
    const double h = (pi / p.omega0) / 200.0;
    FieldSeries out;
    out.reserve(static_cast<size_t>(t_end / h) + 2);
    auto rhs = [&](double t, const Eigen::Vector3cd& y) -> Eigen::Vector3cd {
        const cplx A = y(0);
        const cplx B = y(1);
        const cplx Np = y(2);
        const double s = std::sin(2.0 * p.omega0 * t);
        Eigen::Vector3cd d;
        d(0) = cplx(-0.5 * p.kappa, -p.omega0) * A + cplx(0.0, c * s) * (std::conj(A) + A);
        d(1) = (cplx(-p.kappa, -2.0 * p.omega0) + cplx(0.0, 2.0 * c * s)) * B +
               cplx(0.0, c * s) * (2.0 * Np + 1.0);
        d(2) = -p.kappa * Np + cplx(0.0, c * s) * (std::conj(B) - B);
        return d;
    };
    rk4_fixed(rhs, detail::pack_field(m0), 0.0, t_end, h,
              [&](double t, const Eigen::Vector3cd& y) {
                  detail::check_field_bounded(y, t);
                  out.push_back({t, detail::unpack_field(y)});
              });
    return out;
}

/// Rotating-wave moment equations with G = (lambda theta_L^2 / 2)(E_J/hbar)
/// = kappa mu / 2:
///   dA_tilde/dt = -(kappa/2) A_tilde - G A_tilde^*
///   dB_tilde/dt = -kappa B_tilde - G (2 N_p + 1)
///   dN_p/dt     = -kappa N_p - G (B_tilde^* + B_tilde).
inline FieldSeries integrate_field_rwa(const DriveParams& p, const FieldMoments& m0,
                                       double lambda, double t_end, double h = 1e-3) {
    p.validate();
    if (!(t_end > 0.0)) throw InvalidParameterError("integrate_field_rwa: t_end must be > 0");
    const double G = 0.5 * lambda * p.theta_L * p.theta_L * p.E_J_over_hbar;
    FieldSeries out;
    out.reserve(static_cast<size_t>(t_end / h) + 2);
    auto rhs = [&](double, const Eigen::Vector3cd& y) -> Eigen::Vector3cd {
        const cplx A = y(0);
        const cplx B = y(1);
        const cplx Np = y(2);
        Eigen::Vector3cd d;
        d(0) = -0.5 * p.kappa * A - G * std::conj(A);
        d(1) = -p.kappa * B - G * (2.0 * Np + 1.0);
        d(2) = -p.kappa * Np - G * (std::conj(B) + B);
        return d;
    };
    rk4_fixed(rhs, detail::pack_field(m0), 0.0, t_end, h,
              [&](double t, const Eigen::Vector3cd& y) {
                  detail::check_field_bounded(y, t);
                  out.push_back({t, detail::unpack_field(y)});
              });
    return out;
}

/// Stationary rotating-frame moments below threshold (0 <= mu < 1):
/// A_tilde = 0, B_tilde = -(mu/2)/(1 - mu^2), N_p = mu^2 / (2 (1 - mu^2)).
inline FieldMoments field_ss(double mu) {
    if (mu < 0.0) throw InvalidParameterError("field_ss: mu must be >= 0");
    if (mu >= 1.0)
        throw InstabilityError("field_ss: no stationary state at or above the parametric "
                               "threshold mu = 1");
    FieldMoments m;
    m.A = 0.0;
    m.B = cplx(-0.5 * mu / (1.0 - mu * mu), 0.0);
    m.N_p = 0.5 * mu * mu / (1.0 - mu * mu);
    return m;
}

/// Stationary quadrature spreads Delta X1 = 1/(2 sqrt(1+mu)) (squeezed) and
/// Delta X2 = 1/(2 sqrt(1-mu)) (anti-squeezed).
struct QuadraturePair {
    double dX1 = 0.0;
    double dX2 = 0.0;
};

inline QuadraturePair quadrature_ss(double mu) {
    if (mu < 0.0) throw InvalidParameterError("quadrature_ss: mu must be >= 0");
    if (mu >= 1.0)
        throw InstabilityError("quadrature_ss: no stationary state at or above mu = 1");
    return {0.5 / std::sqrt(1.0 + mu), 0.5 / std::sqrt(1.0 - mu)};
}

/// Largest pump strength compatible with a mean photon cap n:
/// mu_max = sqrt(2n / (1 + 2n)), the inverse of the stationary N_p(mu).
inline double mu_max(double n_p_cap) {
    if (!(n_p_cap > 0.0)) throw InvalidParameterError("mu_max: photon cap must be > 0");
    return std::sqrt(2.0 * n_p_cap / (1.0 + 2.0 * n_p_cap));
}

/// Photon loss rate that realizes a requested pump strength,
/// kappa = lambda theta_L^2 E_J / (hbar mu_target), and the resonator quality
/// factor Q = omega0/kappa it implies.
struct RequiredKappa {
    double kappa = 0.0;
    double Q_factor = 0.0;
};

inline RequiredKappa required_kappa_for(double mu_target, double lambda, double theta_L,
                                        double E_J_over_hbar, double omega0) {
    if (!(mu_target > 0.0))
        throw InvalidParameterError("required_kappa_for: mu_target must be > 0");
    if (!(lambda > 0.0) || !(theta_L > 0.0) || !(E_J_over_hbar > 0.0) || !(omega0 > 0.0))
        throw InvalidParameterError("required_kappa_for: lambda, theta_L, E_J, omega0 must "
                                    "be > 0");
    RequiredKappa r;
    r.kappa = lambda * theta_L * theta_L * E_J_over_hbar / mu_target;
    r.Q_factor = omega0 / r.kappa;
    return r;
}

/// Slow-frame quadrature variances from second moments at laboratory time t:
/// var X1 = 1/4 (1 + 2 N_p) + 1/2 Re(B e^{2 i omega0 t}) - Re(A e^{i omega0 t})^2
/// and the conjugate with flipped signs.
inline QuadraturePair quadratures_from_moments(const FieldMoments& m, double omega0,
                                               double t) {
    const cplx ph = std::exp(cplx(0.0, omega0 * t));
    const double x1 = (m.A * ph).real();
    const double x2 = (m.A * ph).imag();
    const double common = 0.25 * (1.0 + 2.0 * m.N_p);
    const double cross = 0.5 * (m.B * ph * ph).real();
    return {std::sqrt(std::max(0.0, common + cross - x1 * x1)),
            std::sqrt(std::max(0.0, common - cross - x2 * x2))};
}

} // namespace qed
