#pragma once

#include <complex>

#include <Eigen/Dense>

#include "qed/errors.hpp"
#include "qed/params.hpp"

// Operator construction on the truncated charge x Fock product basis.
// All matrices are dense complex; dimensions stay <= a few hundred, so dense
// eigendecompositions are the workhorse (matrix functions of the quadrature
// are evaluated spectrally, never by Taylor series -- theta_L ~ 1.3 at xi = 1
// makes the series truncation-fragile).

namespace qed {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

/// Dense operator tagged with its basis metadata.
struct OperatorMatrix {
    Matrix entries;
    Truncation trunc;
    bool hermitian_flag = false;

    int dim() const { return static_cast<int>(entries.rows()); }

    /// max |M - M^dagger| entry; the hermitian_flag contract is < 1e-12.
    double hermiticity_defect() const {
        return (entries - entries.adjoint()).cwiseAbs().maxCoeff();
    }
};

/// Kronecker product helper (charge factor first: result = A (x) B acts on
/// the flat index a*cols(B)+b, matching Truncation::flat_index).
inline Matrix kron(const Matrix& A, const Matrix& B) {
    Matrix out(A.rows() * B.rows(), A.cols() * B.cols());
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j)
            out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    return out;
}

/// Annihilation operator on the bare Fock factor: a|n> = sqrt(n)|n-1>.
inline Matrix fock_annihilation(int n_p_max) {
    Matrix a = Matrix::Zero(n_p_max + 1, n_p_max + 1);
    for (int n = 1; n <= n_p_max; ++n) a(n - 1, n) = std::sqrt(double(n));
    return a;
}

/// Field operators embedded in the product space: annihilation a = I_c (x) a_p
/// and the quadrature x = a^dag + a (real symmetric tridiagonal on the Fock
/// factor).
inline std::pair<OperatorMatrix, OperatorMatrix> build_field_ops(const Truncation& t) {
    t.validate();
    const Matrix Ic = Matrix::Identity(t.dim_charge(), t.dim_charge());
    const Matrix a_p = fock_annihilation(t.n_p_max);
    OperatorMatrix a{kron(Ic, a_p), t, false};
    OperatorMatrix x{kron(Ic, Matrix(a_p.adjoint() + a_p)), t, true};
    return {std::move(a), std::move(x)};
}

/// Charge operators embedded in the product space: the Cooper-pair number
/// N = diag(0..n_c_max) (x) I_p and the nearest-neighbor hopping matrix
/// with unit off-diagonals, hop = sum_n (|n><n+1| + |n+1><n|) (x) I_p.
/// The physical 1/2 of cos(delta) = (e^{i delta} + e^{-i delta})/2 is applied
/// by build_hamiltonian as part of the E_J/2 prefactor, so that the two-level
/// restriction carries the conventional -(E_J/2)(sigma_-^dag + sigma_-) form.
inline std::pair<OperatorMatrix, OperatorMatrix> build_charge_ops(const Truncation& t) {
    t.validate();
    const int dc = t.dim_charge();
    Matrix N = Matrix::Zero(dc, dc);
    for (int n = 0; n <= t.n_c_max; ++n) N(n, n) = double(n);
    Matrix hop = Matrix::Zero(dc, dc);
    for (int n = 0; n < t.n_c_max; ++n) {
        hop(n, n + 1) = 1.0;
        hop(n + 1, n) = 1.0;
    }
    const Matrix Ip = Matrix::Identity(t.dim_fock(), t.dim_fock());
    OperatorMatrix Nop{kron(N, Ip), t, true};
    OperatorMatrix hopop{kron(hop, Ip), t, true};
    return {std::move(Nop), std::move(hopop)};
}

/// cos(theta_ex + theta_L * x) evaluated by spectral decomposition of the
/// Hermitian quadrature x: diagonalize x, apply the scalar cosine to the
/// eigenvalues, reassemble. Expanded as
/// cos(theta_ex) cos(theta_L x) - sin(theta_ex) sin(theta_L x).
inline OperatorMatrix coupling_operator(double theta_ex, double theta_L, const OperatorMatrix& x) {
    if (x.hermiticity_defect() > 1e-12)
        throw NumericError("coupling_operator: quadrature operand is not Hermitian");
    Eigen::SelfAdjointEigenSolver<Matrix> es(x.entries);
    if (es.info() != Eigen::Success)
        throw NumericError("coupling_operator: eigendecomposition of the quadrature failed");
    const Eigen::VectorXd lam = es.eigenvalues();
    const Matrix& V = es.eigenvectors();
    Eigen::VectorXd f(lam.size());
    for (Eigen::Index k = 0; k < lam.size(); ++k)
        f(k) = std::cos(theta_ex + theta_L * lam(k));
    Matrix out = V * f.asDiagonal() * V.adjoint();
    // Symmetrize away the roundoff skew part so downstream Hermiticity
    // contracts hold with margin.
    out = 0.5 * (out + Matrix(out.adjoint()));
    return {std::move(out), x.trunc, true};
}

/// Full Hamiltonian in internal units (rad/ns):
///   H = E_C (N - N_g)^2 + omega0 a^dag a - (E_J/2) cos(theta_ex + theta_L x) hop
/// The E_J/2 reflects cos(delta) = (1/2) sum_n (|n><n+1| + h.c.); on the
/// two-level restriction this reduces to the standard charge-qubit form
/// E_C(1/2 - N_g) sigma_z - (E_J/2)(sigma_-^dag + sigma_-) up to a constant.
inline OperatorMatrix build_hamiltonian(const DerivedParams& d, double E_J_over_hbar,
                                        double theta_ex, double N_g, const Truncation& t) {
    auto [a, x] = build_field_ops(t);
    auto [N, hop] = build_charge_ops(t);
    OperatorMatrix coup = coupling_operator(theta_ex, d.theta_L, x);
    if (coup.trunc != t || N.trunc != t)
        throw DimensionError("build_hamiltonian: operand truncation mismatch");

    const int dim = t.dim();
    Matrix H = Matrix::Zero(dim, dim);
    Matrix shifted = N.entries - N_g * Matrix::Identity(dim, dim);
    H += d.E_C_over_hbar * shifted * shifted;
    H += d.omega0 * (a.entries.adjoint() * a.entries);
    // The coupling factor and the hopping factor act on different tensor
    // slots, so the product is slot-order independent.
    H -= 0.5 * E_J_over_hbar * (coup.entries * hop.entries);
    H = 0.5 * (H + Matrix(H.adjoint()));
    return {std::move(H), t, true};
}

/// Photon-number parity (-1)^(a^dag a) embedded in the product space.
inline OperatorMatrix photon_parity(const Truncation& t) {
    t.validate();
    Matrix P = Matrix::Zero(t.dim_fock(), t.dim_fock());
    for (int n = 0; n <= t.n_p_max; ++n) P(n, n) = (n % 2 == 0) ? 1.0 : -1.0;
    const Matrix Ic = Matrix::Identity(t.dim_charge(), t.dim_charge());
    return {kron(Ic, P), t, true};
}

/// Projector onto the even-photon-number sector.
inline OperatorMatrix even_parity_projector(const Truncation& t) {
    t.validate();
    Matrix P = Matrix::Zero(t.dim_fock(), t.dim_fock());
    for (int n = 0; n <= t.n_p_max; n += 2) P(n, n) = 1.0;
    const Matrix Ic = Matrix::Identity(t.dim_charge(), t.dim_charge());
    return {kron(Ic, P), t, true};
}

} // namespace qed
