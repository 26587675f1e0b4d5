#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qed/errors.hpp"
#include "qed/ode.hpp"
#include "qed/operators.hpp"
#include "qed/params.hpp"
#include "qed/spectrum.hpp"

// Open-system dynamics of the charge-qubit/resonator circuit.
//
// The dissipative model is a Lindblad master equation with three channels:
// qubit relaxation (rate gamma_minus, operator sigma_-), pure qubit dephasing
// (rate gamma_phi/2, operator sigma_z) and single-photon loss from the
// resonator (rate kappa = omega0/Q, operator a). All rates are angular
// (rad/ns). Superoperators use column-stacking vectorization,
// vec(rho)[i + j*D] = rho(i,j), under which A rho B maps to (B^T kron A).

namespace qed {

using SparseCMatrix = Eigen::SparseMatrix<cplx>;

// ---------------------------------------------------------------------------
// Collapse channels
// ---------------------------------------------------------------------------

/// One Lindblad dissipator rate*D[op]. The label identifies the physical
/// channel for jump bookkeeping ("qubit_decay", "qubit_dephase",
/// "photon_loss" for the standard set).
struct CollapseOp {
    double rate = 0.0; ///< angular rate, rad/ns
    Matrix op;         ///< jump operator on the product basis
    std::string label;
};

/// The standard three-channel dissipator set of the circuit. sigma_- and
/// sigma_z act on the lowest two charge states (higher charge states, when
/// retained in the truncation, are left untouched by sigma_- and weighted +1
/// by sigma_z so that the two-level restriction is exact at n_c_max = 1).
inline std::vector<CollapseOp> standard_collapse_ops(const PhysicalParams& p,
                                                     const DerivedParams& d,
                                                     const Truncation& t) {
    const int dc = t.dim_charge();
    const int df = t.dim_fock();
    if (dc < 2)
        throw InvalidParameterError("standard_collapse_ops: need at least two charge states");

    Matrix sm = Matrix::Zero(dc, dc); // |0><1| on charge
    sm(0, 1) = 1.0;
    Matrix sz = Matrix::Identity(dc, dc);
    sz(0, 0) = -1.0;

    const Matrix id_f = Matrix::Identity(df, df);
    std::vector<CollapseOp> ops;
    ops.push_back({p.gamma_minus, kron(sm, id_f), "qubit_decay"});
    ops.push_back({0.5 * p.gamma_phi, kron(sz, id_f), "qubit_dephase"});
    ops.push_back({d.kappa, kron(Matrix::Identity(dc, dc), fock_annihilation(t.n_p_max)),
                   "photon_loss"});
    return ops;
}

// ---------------------------------------------------------------------------
// Density matrices
// ---------------------------------------------------------------------------

struct DensityMatrix {
    Matrix entries;
    Truncation trunc;

    int dim() const { return static_cast<int>(entries.rows()); }

    static DensityMatrix pure(const Vector& psi, const Truncation& t) {
        if (psi.size() != t.dim())
            throw DimensionError("DensityMatrix::pure: state size does not match truncation");
        DensityMatrix rho{Matrix(psi * psi.adjoint()), t};
        const double n2 = psi.squaredNorm();
        if (n2 <= 0.0)
            throw InvalidParameterError("DensityMatrix::pure: zero state vector");
        rho.entries /= n2;
        return rho;
    }

    /// rho = |n_c, n_p><n_c, n_p|
    static DensityMatrix basis_state(int n_c, int n_p, const Truncation& t) {
        Vector psi = Vector::Zero(t.dim());
        psi(t.flat_index(n_c, n_p)) = 1.0;
        return pure(psi, t);
    }

    double trace_real() const { return entries.trace().real(); }
    double trace_defect() const { return std::abs(entries.trace() - cplx(1.0, 0.0)); }
    double hermiticity_defect() const {
        return (entries - entries.adjoint()).cwiseAbs().maxCoeff();
    }
    double purity() const { return (entries * entries).trace().real(); }
    double min_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (entries + entries.adjoint()),
                                                 Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff();
    }
};

/// tr(rho * op) for a dimension-matched operator.
inline cplx expectation(const DensityMatrix& rho, const Matrix& op) {
    if (op.rows() != rho.entries.rows())
        throw DimensionError("expectation: operator/state dimension mismatch");
    return (rho.entries * op).trace();
}

/// Diagonal populations of the photon number, traced over charge:
/// P[n] = sum_c rho[(c,n),(c,n)]. Clipped tiny negatives are kept as-is so
/// callers can see numerical noise.
inline std::vector<double> photon_distribution(const DensityMatrix& rho) {
    const int dc = rho.trunc.dim_charge();
    const int df = rho.trunc.dim_fock();
    std::vector<double> dist(static_cast<size_t>(df), 0.0);
    for (int n = 0; n < df; ++n)
        for (int c = 0; c < dc; ++c) {
            const int k = rho.trunc.flat_index(c, n);
            dist[static_cast<size_t>(n)] += rho.entries(k, k).real();
        }
    return dist;
}

/// Charge-state populations, traced over photons.
inline std::vector<double> charge_populations(const DensityMatrix& rho) {
    const int dc = rho.trunc.dim_charge();
    const int df = rho.trunc.dim_fock();
    std::vector<double> pop(static_cast<size_t>(dc), 0.0);
    for (int c = 0; c < dc; ++c)
        for (int n = 0; n < df; ++n) {
            const int k = rho.trunc.flat_index(c, n);
            pop[static_cast<size_t>(c)] += rho.entries(k, k).real();
        }
    return pop;
}

/// Mandel Q = (<n^2> - <n>^2 - <n>)/<n>. Undefined (nullopt) when the mean
/// photon number is numerically zero.
inline std::optional<double> mandel_q(const DensityMatrix& rho, double n_floor = 1e-9) {
    const auto dist = photon_distribution(rho);
    double n1 = 0.0, n2 = 0.0;
    for (size_t n = 0; n < dist.size(); ++n) {
        n1 += double(n) * dist[n];
        n2 += double(n) * double(n) * dist[n];
    }
    if (n1 < n_floor) return std::nullopt;
    return (n2 - n1 * n1 - n1) / n1;
}

/// Variances of the slowly rotating quadratures
/// X1 = (a e^{i w0 t} + a^dag e^{-i w0 t})/2 and the conjugate X2,
/// evaluated at laboratory time t_now.
struct QuadratureVariances {
    double var_X1 = 0.0;
    double var_X2 = 0.0;
};

inline QuadratureVariances quadrature_variances(const DensityMatrix& rho, double omega0,
                                                double t_now) {
    const auto [a_op, x_op] = build_field_ops(rho.trunc);
    (void)x_op;
    const Matrix& a = a_op.entries;
    const cplx ea = expectation(rho, a);
    const cplx eaa = expectation(rho, Matrix(a * a));
    const double en = expectation(rho, Matrix(a.adjoint() * a)).real();

    const cplx ph1 = std::exp(cplx(0.0, omega0 * t_now));
    const cplx ph2 = ph1 * ph1;
    const double x1 = (ea * ph1).real();
    const double x2 = (ea * ph1).imag();
    const double x1sq = 0.25 * (1.0 + 2.0 * en) + 0.5 * (eaa * ph2).real();
    const double x2sq = 0.25 * (1.0 + 2.0 * en) - 0.5 * (eaa * ph2).real();
    return {x1sq - x1 * x1, x2sq - x2 * x2};
}

// ---------------------------------------------------------------------------
// Liouvillian assembly (column-stacking vectorization)
// ---------------------------------------------------------------------------

namespace detail {

/// Append coeff * (A kron B) to a triplet list (A indexes the outer factor).
inline void kron_append(std::vector<Eigen::Triplet<cplx>>& trips, const Matrix& A,
                        const Matrix& B, cplx coeff) {
    struct Nz {
        int i, j;
        cplx v;
    };
    std::vector<Nz> nza, nzb;
    for (int j = 0; j < A.cols(); ++j)
        for (int i = 0; i < A.rows(); ++i)
            if (A(i, j) != cplx(0.0, 0.0)) nza.push_back({i, j, A(i, j)});
    for (int j = 0; j < B.cols(); ++j)
        for (int i = 0; i < B.rows(); ++i)
            if (B(i, j) != cplx(0.0, 0.0)) nzb.push_back({i, j, B(i, j)});
    const int rb = static_cast<int>(B.rows());
    const int cb = static_cast<int>(B.cols());
    for (const auto& a : nza)
        for (const auto& b : nzb)
            trips.emplace_back(a.i * rb + b.i, a.j * cb + b.j, coeff * a.v * b.v);
}

} // namespace detail

/// Sparse Liouvillian L acting on vec(rho) with vec(rho)[i + j*D] = rho(i,j):
///   L = -i (I kron H - H^T kron I)
///       + sum_k r_k [ conj(c_k) kron c_k
///                     - 1/2 I kron (c_k^dag c_k) - 1/2 (c_k^dag c_k)^T kron I ].
inline SparseCMatrix build_liouvillian(const OperatorMatrix& H,
                                       const std::vector<CollapseOp>& collapse) {
    const int D = H.dim();
    for (const auto& c : collapse)
        if (c.op.rows() != D || c.op.cols() != D)
            throw DimensionError("build_liouvillian: collapse operator dimension mismatch");

    const Matrix id = Matrix::Identity(D, D);
    std::vector<Eigen::Triplet<cplx>> trips;
    trips.reserve(static_cast<size_t>(3 * D) * static_cast<size_t>(D) * 2);

    detail::kron_append(trips, id, H.entries, cplx(0.0, -1.0));
    detail::kron_append(trips, H.entries.transpose(), id, cplx(0.0, 1.0));
    for (const auto& c : collapse) {
        if (c.rate == 0.0) continue;
        const Matrix cdc = c.op.adjoint() * c.op;
        detail::kron_append(trips, c.op.conjugate(), c.op, cplx(c.rate, 0.0));
        detail::kron_append(trips, id, cdc, cplx(-0.5 * c.rate, 0.0));
        detail::kron_append(trips, cdc.transpose(), id, cplx(-0.5 * c.rate, 0.0));
    }

    SparseCMatrix L(D * D, D * D);
    L.setFromTriplets(trips.begin(), trips.end());
    L.prune([](int, int, const cplx& v) { return v != cplx(0.0, 0.0); });
    L.makeCompressed();
    return L;
}

/// Max-row-sum (infinity) norm of a sparse matrix.
inline double sparse_inf_norm(const SparseCMatrix& M) {
    Eigen::VectorXd row_sums = Eigen::VectorXd::Zero(M.rows());
    for (int k = 0; k < M.outerSize(); ++k)
        for (SparseCMatrix::InnerIterator it(M, k); it; ++it)
            row_sums(it.row()) += std::abs(it.value());
    return row_sums.size() > 0 ? row_sums.maxCoeff() : 0.0;
}

// ---------------------------------------------------------------------------
// Steady state
// ---------------------------------------------------------------------------

struct SteadyStateResult {
    DensityMatrix rho;
    double residual = 0.0; ///< ||L vec(rho)||_inf / ||L||_inf
    double min_eigenvalue = 0.0;
};

namespace detail {

/// Count near-null singular directions of L (dense SVD); only attempted for
/// small systems. Returns 0 if the system is too large to enumerate.
inline int null_space_dimension(const SparseCMatrix& L) {
    if (L.rows() > 640) return 0;
    Matrix dense = Matrix(L);
    Eigen::JacobiSVD<Matrix> svd(dense);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0) return 0;
    const double cutoff = 1e-10 * sv(0);
    int count = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) < cutoff) ++count;
    return count;
}

} // namespace detail

/// Unique steady state of L: solve M x = e0 where M is L with its first row
/// replaced by the trace functional, so that tr(rho) = 1 is imposed and
/// L rho = 0 holds on the remaining rows. Throws DegenerateSteadyStateError
/// when the kernel of L is multi-dimensional (conserved quantities split the
/// state space) and NumericError when the solve fails for other reasons.
inline SteadyStateResult steady_state(const OperatorMatrix& H,
                                      const std::vector<CollapseOp>& collapse,
                                      double residual_tol = 1e-10) {
    const int D = H.dim();
    const int n = D * D;
    const SparseCMatrix L = build_liouvillian(H, collapse);
    const double L_norm = sparse_inf_norm(L);
    if (L_norm == 0.0)
        throw DegenerateSteadyStateError("steady_state: Liouvillian is identically zero");

    // Rebuild with row 0 -> trace row.
    std::vector<Eigen::Triplet<cplx>> trips;
    trips.reserve(static_cast<size_t>(L.nonZeros()) + static_cast<size_t>(D));
    for (int k = 0; k < L.outerSize(); ++k)
        for (SparseCMatrix::InnerIterator it(L, k); it; ++it)
            if (it.row() != 0) trips.emplace_back(static_cast<int>(it.row()),
                                                  static_cast<int>(it.col()), it.value());
    for (int k = 0; k < D; ++k) trips.emplace_back(0, k * D + k, cplx(1.0, 0.0));
    SparseCMatrix M(n, n);
    M.setFromTriplets(trips.begin(), trips.end());
    M.makeCompressed();

    Vector rhs = Vector::Zero(n);
    rhs(0) = 1.0;

    Eigen::SparseLU<SparseCMatrix> lu;
    lu.analyzePattern(M);
    lu.factorize(M);
    bool solved = (lu.info() == Eigen::Success);
    Vector x;
    if (solved) {
        x = lu.solve(rhs);
        solved = (lu.info() == Eigen::Success) && x.allFinite();
    }

    double residual = std::numeric_limits<double>::infinity();
    if (solved) residual = (L * x).cwiseAbs().maxCoeff() / L_norm;

    if (!solved || residual > residual_tol) {
        const int null_dim = detail::null_space_dimension(L);
        if (null_dim >= 2)
            throw DegenerateSteadyStateError(
                "steady_state: Liouvillian kernel is " + std::to_string(null_dim) +
                "-dimensional; the stationary state is not unique");
        if (!solved)
            throw DegenerateSteadyStateError(
                "steady_state: trace-constrained solve is singular (conserved sectors "
                "likely make the stationary state non-unique; kernel not enumerated for "
                "this dimension)");
        throw NumericError("steady_state: residual " + std::to_string(residual) +
                           " exceeds tolerance " + std::to_string(residual_tol));
    }

    DensityMatrix rho{Eigen::Map<const Matrix>(x.data(), D, D), H.trunc};
    rho.entries = 0.5 * (rho.entries + rho.entries.adjoint()).eval();
    const double tr = rho.trace_real();
    if (std::abs(tr) < 1e-14)
        throw NumericError("steady_state: vanishing trace after solve");
    rho.entries /= tr;

    Eigen::SelfAdjointEigenSolver<Matrix> es(rho.entries, Eigen::EigenvaluesOnly);
    const double min_ev = es.eigenvalues().minCoeff();
    if (min_ev < -1e-8)
        throw NumericError("steady_state: solution not positive semidefinite (min eigenvalue " +
                           std::to_string(min_ev) + ")");
    return {std::move(rho), residual, min_ev};
}

// ---------------------------------------------------------------------------
// Model bundle
// ---------------------------------------------------------------------------

/// Validated parameter bundle shared by the dynamics, trajectory and CLI
/// layers: physical inputs, derived frequencies and the basis truncation.
struct SystemModel {
    PhysicalParams phys;
    DerivedParams drv;
    Truncation trunc;

    static SystemModel make(PhysicalParams p, Truncation t) {
        p.validate();
        t.validate();
        DerivedParams d = derive_params(p);
        return SystemModel{p, d, t};
    }

    OperatorMatrix hamiltonian(double N_g) const {
        return build_hamiltonian(drv, phys.E_J_over_hbar, phys.theta_ex, N_g, trunc);
    }

    std::vector<CollapseOp> collapse_ops() const {
        return standard_collapse_ops(phys, drv, trunc);
    }
};

/// Steady state at a single (N_g, theta_ex) working point.
inline SteadyStateResult steady_state_at(const SystemModel& m, double N_g) {
    auto res = steady_state(m.hamiltonian(N_g), m.collapse_ops());
    res.rho.trunc = m.trunc;
    return res;
}

/// Steady-state observables over a grid of gate charges and drive phases.
struct SteadySweepResult {
    std::vector<double> Ng_values;
    std::vector<double> theta_values;
    Eigen::MatrixXd N_c;            ///< rows: N_g index, cols: theta index
    Eigen::MatrixXd N_p;            ///< mean photon number
    Eigen::MatrixXd residual;       ///< normalized solve residuals
    Eigen::MatrixXd min_eigenvalue; ///< smallest eigenvalue of each steady rho
};

inline SteadySweepResult sweep_steady(const PhysicalParams& base, const Truncation& t,
                                      const std::vector<double>& Ng_grid,
                                      const std::vector<double>& theta_grid) {
    if (Ng_grid.empty() || theta_grid.empty())
        throw InvalidParameterError("sweep_steady: empty grid");
    SteadySweepResult out;
    out.Ng_values = Ng_grid;
    out.theta_values = theta_grid;
    const int nr = static_cast<int>(Ng_grid.size());
    const int nc = static_cast<int>(theta_grid.size());
    out.N_c.resize(nr, nc);
    out.N_p.resize(nr, nc);
    out.residual.resize(nr, nc);
    out.min_eigenvalue.resize(nr, nc);

    const auto [a_op, x_op] = build_field_ops(t);
    (void)x_op;
    const Matrix n_phot = a_op.entries.adjoint() * a_op.entries;
    const auto [N_op, hop_op] = build_charge_ops(t);
    (void)hop_op;

    for (int jt = 0; jt < nc; ++jt) {
        PhysicalParams p = base;
        p.theta_ex = theta_grid[static_cast<size_t>(jt)];
        SystemModel m = SystemModel::make(p, t);
        for (int ig = 0; ig < nr; ++ig) {
            auto res = steady_state_at(m, Ng_grid[static_cast<size_t>(ig)]);
            out.N_c(ig, jt) = expectation(res.rho, N_op.entries).real();
            out.N_p(ig, jt) = expectation(res.rho, n_phot).real();
            out.residual(ig, jt) = res.residual;
            out.min_eigenvalue(ig, jt) = res.min_eigenvalue;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Time evolution
// ---------------------------------------------------------------------------

/// Piecewise-constant gate-charge drive. Each segment holds N_g fixed for
/// `duration` ns; zero-duration segments are allowed (instantaneous ramps).
struct PulseSegment {
    double duration = 0.0;
    double N_g = 0.0;
};

struct PulseSchedule {
    std::vector<PulseSegment> segments;

    void validate() const {
        if (segments.empty())
            throw InvalidParameterError("PulseSchedule: at least one segment required");
        for (const auto& s : segments) {
            if (!(s.duration >= 0.0) || !std::isfinite(s.duration))
                throw InvalidParameterError("PulseSchedule: segment durations must be >= 0");
            if (!(s.N_g >= 0.0 && s.N_g <= 1.0))
                throw InvalidParameterError("PulseSchedule: N_g must lie in [0, 1]");
        }
    }

    double total_duration() const {
        double T = 0.0;
        for (const auto& s : segments) T += s.duration;
        return T;
    }
};

/// Sampled observables along a trajectory of the master equation. mandel_Q
/// is NaN wherever the mean photon number vanishes.
struct ObservableSeries {
    std::vector<double> times;
    std::vector<double> N_c;
    std::vector<double> N_p;
    std::vector<double> mandel_Q;
    std::vector<double> trace_defect;
};

struct EvolveResult {
    ObservableSeries series;
    DensityMatrix final_state;
};

struct EvolveOptions {
    double abs_tol = 1e-8; ///< per-component local error bound for the integrator
    double h_init = 2e-5;
    /// Optional observer invoked at every recorded instant with (t, rho).
    std::function<void(double, const Matrix&)> on_record;
};

/// Integrate d rho/dt = -i[H(N_g), rho] + sum_k r_k D[c_k] rho through the
/// schedule, sampling observables every sample_dt (plus the initial and final
/// instants). The trace is never renormalized: the integrator preserves the
/// linear invariant to within its own tolerance, and the recorded
/// trace_defect exposes the drift. sample_dt = 0 records segment boundaries
/// only.
inline EvolveResult evolve(const SystemModel& m, const DensityMatrix& rho0,
                           const PulseSchedule& schedule, double sample_dt,
                           const EvolveOptions& opt = {}) {
    schedule.validate();
    if (rho0.entries.rows() != m.trunc.dim())
        throw DimensionError("evolve: initial state does not match model truncation");
    if (sample_dt < 0.0) throw InvalidParameterError("evolve: sample_dt must be >= 0");

    const auto collapse = m.collapse_ops();
    std::vector<SparseCMatrix> c_sp, cdag_sp;
    Matrix damping = Matrix::Zero(m.trunc.dim(), m.trunc.dim());
    for (const auto& c : collapse) {
        c_sp.emplace_back(c.op.sparseView());
        cdag_sp.emplace_back(Matrix(c.op.adjoint()).sparseView());
        damping -= 0.5 * c.rate * (c.op.adjoint() * c.op);
    }

    const auto [a_op, x_op] = build_field_ops(m.trunc);
    (void)x_op;
    const Matrix n_phot = a_op.entries.adjoint() * a_op.entries;
    const Matrix n_phot2 = n_phot * n_phot;
    const auto [N_op, hop_op] = build_charge_ops(m.trunc);
    (void)hop_op;

    EvolveResult out{ObservableSeries{}, DensityMatrix{rho0.entries, m.trunc}};
    Matrix& rho = out.final_state.entries;

    auto record = [&](double t) {
        out.series.times.push_back(t);
        const cplx tr = rho.trace();
        out.series.trace_defect.push_back(std::abs(tr - cplx(1.0, 0.0)));
        out.series.N_c.push_back((rho * N_op.entries).trace().real());
        const double n1 = (rho * n_phot).trace().real();
        const double n2 = (rho * n_phot2).trace().real();
        out.series.N_p.push_back(n1);
        out.series.mandel_Q.push_back(n1 < 1e-9 ? std::numeric_limits<double>::quiet_NaN()
                                                : (n2 - n1 * n1 - n1) / n1);
        if (opt.on_record) opt.on_record(t, rho);
    };

    Dopri5Options ode_opt;
    ode_opt.abs_tol = opt.abs_tol;
    ode_opt.h_init = opt.h_init;

    const double T = schedule.total_duration();
    record(0.0);
    double t_global = 0.0;
    long next_sample = 1;
    for (const auto& seg : schedule.segments) {
        if (seg.duration == 0.0) continue;
        const OperatorMatrix H = m.hamiltonian(seg.N_g);
        const Matrix F = cplx(0.0, -1.0) * H.entries + damping;
        const Matrix F_adj = F.adjoint();
        auto rhs = [&](double, const Matrix& r) -> Matrix {
            Matrix d = F * r;
            d.noalias() += r * F_adj;
            for (size_t k = 0; k < c_sp.size(); ++k) {
                if (collapse[k].rate == 0.0) continue;
                d.noalias() += collapse[k].rate * Matrix(c_sp[k] * Matrix(r * cdag_sp[k]));
            }
            return d;
        };

        const double t_seg_end = t_global + seg.duration;
        const double eps_t = 1e-12 * std::max(1.0, std::abs(t_seg_end));
        while (t_global < t_seg_end - eps_t) {
            double t_next = t_seg_end;
            bool is_sample = false;
            if (sample_dt > 0.0) {
                const double ts = double(next_sample) * sample_dt;
                if (ts < t_seg_end - eps_t) {
                    t_next = ts;
                    is_sample = true;
                }
            }
            rho = dopri5(rhs, std::move(rho), t_global, t_next, ode_opt);
            t_global = t_next;
            if (is_sample) {
                record(t_global);
                ++next_sample;
            }
        }
        if (sample_dt > 0.0) {
            // Skip samples that coincide with the boundary we just recorded.
            while (double(next_sample) * sample_dt <= t_global + eps_t) ++next_sample;
        }
        record(t_global);
    }
    (void)T;
    return out;
}

// ---------------------------------------------------------------------------
// Maser protocol
// ---------------------------------------------------------------------------

/// Photon-number targets of the pulsed single-atom-maser protocol: the k-th
/// anticrossing transfers the qubit excitation into the k-photon Fock state.
enum class MaserTarget { A1 = 1, A2 = 2, A3 = 3 };

/// Bias-point data for one target: the drive phase that opens the gap, the
/// adjacent sorted-level pair that anticrosses, and a search bracket around
/// the closed-form estimate N_g ~ 1/2 - k hbar*omega0 / (2 E_C).
struct MaserSetup {
    double theta_ex = 0.0;
    std::pair<int, int> level_pair;
    std::pair<double, double> bracket;
};

inline MaserSetup maser_setup(const DerivedParams& d, MaserTarget target) {
    const int k = static_cast<int>(target);
    const double center = 0.5 - double(k) * d.omega0 / (2.0 * d.E_C_over_hbar);
    if (center <= 0.05 || center >= 0.95)
        throw InvalidParameterError("maser_setup: anticrossing estimate outside the charge "
                                    "dispersion range; check E_C/omega0");
    MaserSetup s;
    s.theta_ex = (k % 2 == 1) ? 0.5 * pi : 0.0;
    s.level_pair = {k, k + 1};
    s.bracket = {center - 0.04, center + 0.04};
    return s;
}

struct MaserOutcome {
    double N_g_star = 0.0; ///< refined anticrossing location
    double gap = 0.0;      ///< minimal gap, rad/ns
    double tau_pi = 0.0;   ///< pi-pulse duration pi/gap, ns
    double tau = 0.0;      ///< dwell time actually used, ns
    double P_target = 0.0; ///< population of the target Fock level
    double N_c = 0.0;
    double N_p = 0.0;
    double mandel_Q = 0.0; ///< NaN if undefined
    std::vector<double> photon_dist;
    DensityMatrix final_state;
};

/// One shot of the pulsed protocol: start from |n_c = 1, n_p = 0> at
/// N_g = 0, ramp instantaneously to the refined anticrossing N_g*, dwell for
/// tau (default: the pi time pi/gap), ramp back. Dissipation acts throughout.
/// The drive phase theta_ex is fixed by the target (the model's own value is
/// ignored).
inline MaserOutcome maser_protocol(const PhysicalParams& phys, const Truncation& t,
                                   MaserTarget target,
                                   std::optional<double> tau_opt = std::nullopt) {
    PhysicalParams p = phys;
    const DerivedParams d0 = derive_params(p);
    const MaserSetup setup = maser_setup(d0, target);
    p.theta_ex = setup.theta_ex;
    SystemModel m = SystemModel::make(p, t);

    const Anticrossing ac = find_anticrossing(m.drv, p.E_J_over_hbar, p.theta_ex,
                                              setup.level_pair, setup.bracket, t);
    MaserOutcome out;
    out.N_g_star = ac.location_Ng;
    out.gap = ac.gap;
    out.tau_pi = pi / ac.gap;
    out.tau = tau_opt.value_or(out.tau_pi);
    if (!(out.tau >= 0.0))
        throw InvalidParameterError("maser_protocol: dwell time must be >= 0");

    const DensityMatrix rho0 = DensityMatrix::basis_state(1, 0, t);
    PulseSchedule sched{{{0.0, 0.0}, {out.tau, out.N_g_star}, {0.0, 0.0}}};
    EvolveResult ev = evolve(m, rho0, sched, 0.0);

    out.final_state = std::move(ev.final_state);
    out.photon_dist = photon_distribution(out.final_state);
    const int k = static_cast<int>(target);
    out.P_target = (k < static_cast<int>(out.photon_dist.size()))
                       ? out.photon_dist[static_cast<size_t>(k)]
                       : 0.0;
    out.N_c = ev.series.N_c.back();
    out.N_p = ev.series.N_p.back();
    out.mandel_Q = ev.series.mandel_Q.back();
    return out;
}

/// Dwell-time scan of the protocol. Because the ramps are instantaneous and
/// the return segment has zero duration, the state after a dwell of tau
/// equals the state of one continuous evolution at N_g* sampled at tau; the
/// scan therefore runs a single evolution and reads it out at the requested
/// dwell times.
struct MaserScanRow {
    double tau = 0.0;
    double P_target = 0.0;
    double N_c = 0.0;
    double N_p = 0.0;
    double mandel_Q = 0.0; ///< NaN if undefined
};

struct MaserScanResult {
    double N_g_star = 0.0;
    double gap = 0.0;
    double tau_pi = 0.0;
    std::vector<MaserScanRow> rows; ///< one per requested dwell time, ascending
};

/// tau_values are sorted, deduplicated (1e-12 ns) and must be >= 0; a leading
/// tau = 0 row reports the initial state.
inline MaserScanResult maser_scan(const PhysicalParams& phys, const Truncation& t,
                                  MaserTarget target, std::vector<double> tau_values) {
    if (tau_values.empty())
        throw InvalidParameterError("maser_scan: need at least one dwell time");
    std::sort(tau_values.begin(), tau_values.end());
    if (tau_values.front() < 0.0)
        throw InvalidParameterError("maser_scan: dwell times must be >= 0");
    tau_values.erase(std::unique(tau_values.begin(), tau_values.end(),
                                 [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                     tau_values.end());

    PhysicalParams p = phys;
    const DerivedParams d0 = derive_params(p);
    const MaserSetup setup = maser_setup(d0, target);
    p.theta_ex = setup.theta_ex;
    SystemModel m = SystemModel::make(p, t);

    const Anticrossing ac = find_anticrossing(m.drv, p.E_J_over_hbar, p.theta_ex,
                                              setup.level_pair, setup.bracket, t);
    MaserScanResult out;
    out.N_g_star = ac.location_Ng;
    out.gap = ac.gap;
    out.tau_pi = pi / ac.gap;

    // One segment per consecutive dwell-time gap; evolve records every
    // segment boundary, which is exactly the requested tau grid.
    PulseSchedule sched;
    double prev = 0.0;
    for (double tau : tau_values) {
        sched.segments.push_back({tau - prev, ac.location_Ng});
        prev = tau;
    }

    const int k = static_cast<int>(target);
    std::vector<double> p_target;
    EvolveOptions opt;
    opt.on_record = [&](double, const Matrix& rho) {
        double pk = 0.0;
        for (int c = 0; c < t.dim_charge(); ++c) {
            const int idx = t.flat_index(c, k);
            pk += rho(idx, idx).real();
        }
        p_target.push_back(pk);
    };

    const DensityMatrix rho0 = DensityMatrix::basis_state(1, 0, t);
    EvolveResult ev = evolve(m, rho0, sched, 0.0, opt);

    // The series always begins with t = 0; drop it when 0 was not requested.
    if (ev.series.times.size() != tau_values.size() &&
        ev.series.times.size() != tau_values.size() + 1)
        throw NumericError("maser_scan: sample bookkeeping mismatch");
    const size_t offset = ev.series.times.size() - tau_values.size();
    for (size_t i = 0; i < tau_values.size(); ++i) {
        const size_t s = i + offset;
        out.rows.push_back({tau_values[i], p_target[s], ev.series.N_c[s], ev.series.N_p[s],
                            ev.series.mandel_Q[s]});
    }
    return out;
}

} // namespace qed
