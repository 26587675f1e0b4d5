#pragma once

#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qed/errors.hpp"
#include "qed/operators.hpp"

// Eigenvalue sweeps versus the gate charge N_g and refinement of avoided
// crossings. Levels are indexed by sorted order per grid point (no adiabatic
// continuation); anticrossings are quantified as local minima of the gap of
// an adjacent-index pair, refined by golden-section search.

namespace qed {

/// Ascending eigenvalues and matching orthonormal eigenvectors of a
/// Hermitian operator.
inline std::pair<Eigen::VectorXd, Matrix> eigensystem(const OperatorMatrix& H) {
    if (H.hermiticity_defect() > 1e-10)
        throw NumericError("eigensystem: input violates the Hermiticity contract");
    Eigen::SelfAdjointEigenSolver<Matrix> es(H.entries);
    if (es.info() != Eigen::Success)
        throw NumericError("eigensystem: eigensolver did not converge");
    return {es.eigenvalues(), es.eigenvectors()};
}

/// Eigenvalue sweep over a gate-charge grid at fixed theta_ex.
struct SpectrumResult {
    std::vector<double> sweep_values;      ///< N_g grid, ascending
    Eigen::MatrixXd levels;                ///< (grid point) x (level index), rad/ns, each row ascending
    double theta_ex = 0.0;
    Truncation trunc;
};

inline SpectrumResult sweep_spectrum(const DerivedParams& d, double E_J_over_hbar,
                                     double theta_ex, const std::vector<double>& Ng_grid,
                                     const Truncation& t) {
    if (Ng_grid.empty())
        throw InvalidParameterError("sweep_spectrum: empty N_g grid");
    for (std::size_t i = 1; i < Ng_grid.size(); ++i)
        if (!(Ng_grid[i] > Ng_grid[i - 1]))
            throw InvalidParameterError("sweep_spectrum: N_g grid must be strictly ascending");

    SpectrumResult r;
    r.sweep_values = Ng_grid;
    r.theta_ex = theta_ex;
    r.trunc = t;
    r.levels.resize(static_cast<Eigen::Index>(Ng_grid.size()), t.dim());
    for (std::size_t i = 0; i < Ng_grid.size(); ++i) {
        auto H = build_hamiltonian(d, E_J_over_hbar, theta_ex, Ng_grid[i], t);
        auto [w, V] = eigensystem(H);
        r.levels.row(static_cast<Eigen::Index>(i)) = w.transpose();
    }
    return r;
}

/// Diabatic (bare-basis) label of a dressed level: the dominant product-basis
/// component, or "mixed" when no component reaches weight 0.5.
struct DiabaticLabel {
    int n_c = 0;
    int n_p = 0;
    bool mixed = false;
};

struct Anticrossing {
    double location_Ng = 0.0;     ///< refined gap-minimum position
    double gap = 0.0;             ///< eigenvalue difference at the minimum, rad/ns
    std::pair<int, int> level_pair; ///< adjacent sorted-order indices (k, k+1)
    DiabaticLabel labels[2];      ///< assigned just outside the bracket (lower edge)
};

/// Golden-section minimization of a scalar function on [lo, hi].
/// The gap is smooth and unimodal inside a proper bracket; tol is on the
/// argument. Returns (argmin, min).
inline std::pair<double, double> golden_minimize(const std::function<double(double)>& f,
                                                 double lo, double hi, double tol) {
    constexpr double invphi = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - invphi * (b - a);
    double x2 = a + invphi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > tol) {
        if (f1 < f2) {
            b = x2; x2 = x1; f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = f(x1);
        } else {
            a = x1; x1 = x2; f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = f(x2);
        }
    }
    const double xm = 0.5 * (a + b);
    return {xm, f(xm)};
}

/// Locate an avoided crossing: minimize the gap between the sorted levels
/// (k, k+1) over N_g inside [bracket_lo, bracket_hi]. The caller supplies a
/// bracket containing exactly one local minimum (coarse-scan assisted).
/// Diabatic labels come from the dominant basis component of each eigenvector
/// at the lower bracket edge, where the pair is far from hybridization.
inline Anticrossing find_anticrossing(const DerivedParams& d, double E_J_over_hbar,
                                      double theta_ex, std::pair<int, int> level_pair,
                                      std::pair<double, double> bracket, const Truncation& t,
                                      double tol = 1e-5) {
    const auto [k_lo, k_hi] = level_pair;
    if (k_hi != k_lo + 1 || k_lo < 0 || k_hi >= t.dim())
        throw InvalidParameterError("find_anticrossing: level_pair must be adjacent sorted indices in range");
    const auto [lo, hi] = bracket;
    if (!(lo < hi))
        throw InvalidParameterError("find_anticrossing: empty bracket");

    auto gap_at = [&](double Ng) {
        auto H = build_hamiltonian(d, E_J_over_hbar, theta_ex, Ng, t);
        auto [w, V] = eigensystem(H);
        return w(k_hi) - w(k_lo);
    };

    // Reject brackets whose minimum sits at an edge (no interior minimum).
    const double f_lo = gap_at(lo), f_hi = gap_at(hi);
    auto [xm, fm] = golden_minimize(gap_at, lo, hi, tol);
    if (fm >= f_lo || fm >= f_hi)
        throw SearchFailureError("find_anticrossing: no interior gap minimum in the bracket");

    Anticrossing ac;
    ac.location_Ng = xm;
    ac.gap = fm;
    ac.level_pair = level_pair;

    auto Hedge = build_hamiltonian(d, E_J_over_hbar, theta_ex, lo, t);
    auto [w, V] = eigensystem(Hedge);
    for (int which = 0; which < 2; ++which) {
        const int k = (which == 0) ? k_lo : k_hi;
        Eigen::Index imax = 0;
        double wmax = 0.0;
        for (Eigen::Index i = 0; i < V.rows(); ++i) {
            const double wgt = std::norm(V(i, k));
            if (wgt > wmax) { wmax = wgt; imax = i; }
        }
        DiabaticLabel lab;
        lab.n_c = static_cast<int>(imax) / t.dim_fock();
        lab.n_p = static_cast<int>(imax) % t.dim_fock();
        lab.mixed = (wmax < 0.5);
        ac.labels[which] = lab;
    }
    return ac;
}

} // namespace qed
