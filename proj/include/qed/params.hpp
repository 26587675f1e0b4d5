#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "qed/errors.hpp"

// Parameter handling.
//
// Internal unit system: hbar = 1, time in ns, angular frequencies and rates
// in rad/ns, energies expressed as angular frequencies (E/hbar). External
// inputs use laboratory units: capacitance in aF, inductance in nH,
// frequencies in cyclic GHz (multiply by 2*pi to get rad/ns). The conversion
// happens exactly once, in derive_params(); everything downstream is rad/ns.
//
// Conversion sanity: 1 GHz (cyclic) = 2*pi rad/ns; omega0 = 1/sqrt(L C) with
// L in H and C in F gives rad/s, and 1 rad/s = 1e-9 rad/ns.

namespace qed {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// SI constants (2019 redefinition; e is exact).
inline constexpr double hbar_SI = 1.054571817e-34; // J*s
inline constexpr double e_SI = 1.602176634e-19;    // C

/// Raw circuit parameters, in lab units except where noted.
struct PhysicalParams {
    double C_g = 300.0;  ///< gate capacitance, aF
    double C_j = 50.0;   ///< junction capacitance, aF
    double E_J_over_hbar = two_pi * 10.0; ///< Josephson energy / hbar, rad/ns
    double L = 100.0;    ///< resonator inductance, nH
    double C = 500.0;    ///< resonator capacitance, aF
    double xi = 1.0;     ///< flux fraction threading the qubit loop, in [0,1]
    double theta_ex = 0.0;              ///< external flux phase, rad, in [0, pi/2]
    double gamma_minus = two_pi * 0.06; ///< qubit energy relaxation rate, rad/ns
    double gamma_phi = two_pi * 0.13;   ///< qubit pure dephasing rate, rad/ns
    double Q_factor = 5.0e3;            ///< resonator quality factor, > 0

    /// Throws InvalidParameterError if any invariant is violated.
    void validate() const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0))
                throw InvalidParameterError(std::string(name) + " must be strictly positive");
        };
        positive(C_g, "C_g");
        positive(C_j, "C_j");
        positive(L, "L");
        positive(C, "C");
        positive(Q_factor, "Q_factor");
        if (!(xi >= 0.0 && xi <= 1.0))
            throw InvalidParameterError("xi must lie in [0, 1]");
        if (!(theta_ex >= 0.0 && theta_ex <= pi / 2.0))
            throw InvalidParameterError("theta_ex must lie in [0, pi/2]");
        if (!(E_J_over_hbar >= 0.0))
            throw InvalidParameterError("E_J_over_hbar must be non-negative");
        if (!(gamma_minus >= 0.0) || !(gamma_phi >= 0.0))
            throw InvalidParameterError("decay rates must be non-negative");
    }
};

/// Quantities derived from PhysicalParams, all in internal units
/// (rad/ns for energies/rates) except the zero-point flux/charge which are SI.
struct DerivedParams {
    double E_C_over_hbar = 0.0;   ///< charging energy / hbar, rad/ns
    double omega0 = 0.0;          ///< resonator angular frequency, rad/ns
    double Phi_r = 0.0;           ///< resonator zero-point flux, Wb
    double Q_r = 0.0;             ///< resonator zero-point charge, C
    double theta_L = 0.0;         ///< inductive phase amplitude pi*xi*Phi_r/Phi0, rad
    double kappa = 0.0;           ///< photon loss rate omega0/Q, rad/ns
    double n_p_max_physical = 0.0; ///< E_C/(hbar*omega0), validity bound of the charge-qubit picture
};

/// Convert raw circuit values to internal units.
///
/// E_C = (2e)^2 / (2 (C_g + 2 C_j))   [island charging energy for Cooper pairs]
/// omega0 = 1/sqrt(L C)
/// Phi_r = sqrt(hbar Z / 2), Q_r = sqrt(hbar / (2 Z)) with Z = sqrt(L / C)
/// theta_L = pi * xi * Phi_r / Phi_0 with Phi_0 = pi hbar / e  (h / 2e)
/// kappa = omega0 / Q
inline DerivedParams derive_params(const PhysicalParams& p) {
    p.validate();
    DerivedParams d;

    const double C_sigma = (p.C_g + 2.0 * p.C_j) * 1e-18; // aF -> F
    const double E_C_joule = (2.0 * e_SI) * (2.0 * e_SI) / (2.0 * C_sigma);
    d.E_C_over_hbar = E_C_joule / hbar_SI * 1e-9; // rad/s -> rad/ns

    const double L_SI = p.L * 1e-9;  // nH -> H
    const double C_SI = p.C * 1e-18; // aF -> F
    d.omega0 = 1.0 / std::sqrt(L_SI * C_SI) * 1e-9; // rad/s -> rad/ns

    const double Z = std::sqrt(L_SI / C_SI); // ohm
    d.Phi_r = std::sqrt(hbar_SI * Z / 2.0);
    d.Q_r = std::sqrt(hbar_SI / (2.0 * Z));

    const double Phi0 = pi * hbar_SI / e_SI; // superconducting flux quantum h/2e
    d.theta_L = pi * p.xi * d.Phi_r / Phi0;

    d.kappa = d.omega0 / p.Q_factor;
    d.n_p_max_physical = d.E_C_over_hbar / d.omega0;
    return d;
}

/// Basis truncation of the charge x Fock product space.
/// Flat index convention (stable contract): idx = n_c * (n_p_max + 1) + n_p,
/// i.e. charge-major ordering with the Fock index fastest.
struct Truncation {
    int n_c_max = 1;  ///< charge states 0..n_c_max
    int n_p_max = 30; ///< Fock states 0..n_p_max

    void validate() const {
        if (n_c_max < 1 || n_p_max < 1)
            throw InvalidParameterError("truncation indices must be >= 1");
    }
    int dim_charge() const { return n_c_max + 1; }
    int dim_fock() const { return n_p_max + 1; }
    int dim() const { return dim_charge() * dim_fock(); }
    int flat_index(int n_c, int n_p) const { return n_c * dim_fock() + n_p; }
    bool operator==(const Truncation&) const = default;
};

} // namespace qed
