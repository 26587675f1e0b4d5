#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "qed/lindblad.hpp"

using namespace qed;
using Catch::Approx;

namespace {

Matrix random_hermitian(int n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix M(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) M(i, j) = cplx(u(rng), u(rng));
    return 0.5 * (M + Matrix(M.adjoint()));
}

Matrix random_general(int n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix M(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) M(i, j) = cplx(u(rng), u(rng));
    return M;
}

} // namespace

TEST_CASE("standard collapse channels", "[lindblad]") {
    PhysicalParams p;
    const DerivedParams d = derive_params(p);
    Truncation t{1, 3};
    auto ops = standard_collapse_ops(p, d, t);

    REQUIRE(ops.size() == 3);
    CHECK(ops[0].label == "qubit_decay");
    CHECK(ops[0].rate == Approx(p.gamma_minus));
    CHECK(ops[1].label == "qubit_dephase");
    CHECK(ops[1].rate == Approx(0.5 * p.gamma_phi)); // gamma_phi/2 * D[sigma_z]
    CHECK(ops[2].label == "photon_loss");
    CHECK(ops[2].rate == Approx(d.omega0 / p.Q_factor));

    SECTION("operator structure on the product basis") {
        // sigma_-: |0,n><1,n|
        for (int n = 0; n <= t.n_p_max; ++n)
            CHECK(std::abs(ops[0].op(t.flat_index(0, n), t.flat_index(1, n)) - 1.0) <
                  1e-15);
        CHECK(ops[0].op.cwiseAbs().sum() == Approx(double(t.dim_fock())));
        // sigma_z: diagonal -1 on charge 0, +1 on charge 1
        CHECK(ops[1].op(t.flat_index(0, 1), t.flat_index(0, 1)).real() == Approx(-1.0));
        CHECK(ops[1].op(t.flat_index(1, 1), t.flat_index(1, 1)).real() == Approx(1.0));
        // photon loss: sqrt(n) ladder within each charge sector
        CHECK(std::abs(ops[2].op(t.flat_index(1, 1), t.flat_index(1, 2)) -
                       std::sqrt(2.0)) < 1e-15);
    }
}

TEST_CASE("density-matrix helpers", "[lindblad]") {
    Truncation t{1, 4};

    SECTION("pure states normalize and report unit purity") {
        Vector psi = Vector::Zero(t.dim());
        psi(t.flat_index(0, 2)) = 2.0; // unnormalized on purpose
        auto rho = DensityMatrix::pure(psi, t);
        CHECK(rho.trace_real() == Approx(1.0).margin(1e-14));
        CHECK(rho.purity() == Approx(1.0).margin(1e-14));
        CHECK(rho.hermiticity_defect() < 1e-15);
        CHECK(rho.min_eigenvalue() == Approx(0.0).margin(1e-14));
    }
    SECTION("invalid pure states are rejected") {
        CHECK_THROWS_AS(DensityMatrix::pure(Vector::Zero(3), t), DimensionError);
        CHECK_THROWS_AS(DensityMatrix::pure(Vector::Zero(t.dim()), t),
                        InvalidParameterError);
    }
    SECTION("basis states and the traced distributions") {
        auto rho = DensityMatrix::basis_state(1, 3, t);
        auto pd = photon_distribution(rho);
        auto cp = charge_populations(rho);
        REQUIRE(pd.size() == size_t(t.dim_fock()));
        REQUIRE(cp.size() == 2);
        CHECK(pd[3] == Approx(1.0));
        CHECK(cp[1] == Approx(1.0));
        double sum = 0.0;
        for (double v : pd) sum += v;
        CHECK(sum == Approx(1.0).margin(1e-14));
    }
    SECTION("maximally mixed purity is 1/D") {
        DensityMatrix rho{Matrix::Identity(t.dim(), t.dim()) / double(t.dim()), t};
        CHECK(rho.purity() == Approx(1.0 / t.dim()).margin(1e-14));
    }
    SECTION("expectation rejects mismatched operators") {
        auto rho = DensityMatrix::basis_state(0, 0, t);
        CHECK_THROWS_AS(expectation(rho, Matrix::Identity(3, 3)), DimensionError);
    }
}

TEST_CASE("Mandel Q", "[lindblad]") {
    Truncation t{1, 12};
    SECTION("Fock state: Q = -1 exactly") {
        auto rho = DensityMatrix::basis_state(0, 1, t);
        auto q = mandel_q(rho);
        REQUIRE(q.has_value());
        CHECK(*q == Approx(-1.0).margin(1e-12));
        auto rho3 = DensityMatrix::basis_state(1, 3, t);
        CHECK(*mandel_q(rho3) == Approx(-1.0).margin(1e-12));
    }
    SECTION("vacuum: undefined") {
        auto rho = DensityMatrix::basis_state(0, 0, t);
        CHECK_FALSE(mandel_q(rho).has_value());
    }
    SECTION("coherent state: Q = 0 (Poissonian)") {
        const double alpha = 0.5;
        Vector psi = Vector::Zero(t.dim());
        double lognfact = 0.0;
        for (int n = 0; n <= t.n_p_max; ++n) {
            if (n > 0) lognfact += std::log(double(n));
            psi(t.flat_index(0, n)) =
                std::exp(-0.5 * alpha * alpha + n * std::log(alpha) - 0.5 * lognfact);
        }
        auto rho = DensityMatrix::pure(psi, t);
        auto q = mandel_q(rho);
        REQUIRE(q.has_value());
        CHECK(*q == Approx(0.0).margin(1e-6)); // truncation residue only
    }
}

TEST_CASE("quadrature variances", "[lindblad]") {
    Truncation t{1, 12};
    const double omega0 = 141.0;
    SECTION("vacuum: 1/4 each, at any reference time") {
        auto rho = DensityMatrix::basis_state(0, 0, t);
        for (double tt : {0.0, 0.3}) {
            auto v = quadrature_variances(rho, omega0, tt);
            CHECK(v.var_X1 == Approx(0.25).margin(1e-12));
            CHECK(v.var_X2 == Approx(0.25).margin(1e-12));
        }
    }
    SECTION("Fock n = 1: (2n+1)/4 = 3/4 each") {
        auto rho = DensityMatrix::basis_state(0, 1, t);
        auto v = quadrature_variances(rho, omega0, 0.17);
        CHECK(v.var_X1 == Approx(0.75).margin(1e-12));
        CHECK(v.var_X2 == Approx(0.75).margin(1e-12));
    }
}

TEST_CASE("Liouvillian matches the direct master-equation right-hand side",
          "[lindblad]") {
    Truncation t{1, 2};
    const int D = t.dim();
    OperatorMatrix H{random_hermitian(D, 11u) * 50.0, t, true};
    std::vector<CollapseOp> collapse;
    collapse.push_back({0.3, random_general(D, 22u), "c1"});
    collapse.push_back({1.7, random_general(D, 33u), "c2"});

    const SparseCMatrix L = build_liouvillian(H, collapse);
    REQUIRE(L.rows() == D * D);

    const Matrix rho = random_hermitian(D, 44u);
    // direct RHS
    Matrix rhs = cplx(0.0, -1.0) * (H.entries * rho - rho * H.entries);
    for (const auto& c : collapse) {
        const Matrix cdc = c.op.adjoint() * c.op;
        rhs += c.rate * (c.op * rho * c.op.adjoint() - 0.5 * (cdc * rho + rho * cdc));
    }
    // vectorized RHS (column stacking = Eigen column-major layout)
    Eigen::Map<const Vector> vec_rho(rho.data(), D * D);
    Vector vec_out = L * vec_rho;
    Eigen::Map<const Matrix> out(vec_out.data(), D, D);

    CHECK((out - rhs).cwiseAbs().maxCoeff() < 1e-11 * rhs.cwiseAbs().maxCoeff());

    SECTION("trace is conserved by construction: columns of L sum to zero on the "
            "diagonal-projection") {
        // tr(L rho) = 0 for arbitrary rho: the trace functional is a left
        // null vector of L.
        Eigen::RowVectorXcd trace_fn = Eigen::RowVectorXcd::Zero(D * D);
        for (int k = 0; k < D; ++k) trace_fn(k * D + k) = 1.0;
        CHECK((trace_fn * L).cwiseAbs().maxCoeff() < 1e-12 * sparse_inf_norm(L));
    }
    SECTION("dimension mismatch is rejected") {
        std::vector<CollapseOp> bad;
        bad.push_back({1.0, Matrix::Identity(D + 1, D + 1), "bad"});
        CHECK_THROWS_AS(build_liouvillian(H, bad), DimensionError);
    }
}

TEST_CASE("sparse infinity norm", "[lindblad]") {
    SparseCMatrix M(2, 2);
    std::vector<Eigen::Triplet<cplx>> tr{{0, 0, cplx(3.0, 4.0)}, {1, 0, cplx(0.0, 2.0)},
                                         {1, 1, cplx(-1.0, 0.0)}};
    M.setFromTriplets(tr.begin(), tr.end());
    CHECK(sparse_inf_norm(M) == Approx(5.0)); // row 0: |3+4i| = 5; row 1: 2+1 = 3
}

TEST_CASE("steady state of the reference circuit", "[lindblad]") {
    PhysicalParams p; // theta_ex = 0
    Truncation t{1, 14};
    SystemModel m = SystemModel::make(p, t);

    SECTION("charge sweet spot N_g = 0.5") {
        auto res = steady_state_at(m, 0.5);
        CHECK(res.residual < 1e-10);
        CHECK(res.min_eigenvalue > -1e-8);
        CHECK(res.rho.trace_real() == Approx(1.0).margin(1e-12));
        CHECK(res.rho.hermiticity_defect() < 1e-12);
        const auto [a_op, x_op] = build_field_ops(t);
        const Matrix n_phot = a_op.entries.adjoint() * a_op.entries;
        const auto [N_op, hop_op] = build_charge_ops(t);
        CHECK(expectation(res.rho, n_phot).real() == Approx(0.43528).margin(5e-5));
        CHECK(expectation(res.rho, N_op.entries).real() == Approx(0.49865).margin(5e-5));
    }
    SECTION("detuned point N_g = 0.1 is nearly empty") {
        auto res = steady_state_at(m, 0.1);
        const auto [a_op, x_op] = build_field_ops(t);
        const Matrix n_phot = a_op.entries.adjoint() * a_op.entries;
        CHECK(expectation(res.rho, n_phot).real() == Approx(0.03462).margin(5e-5));
    }
    SECTION("junction off: steady state is the ground product state") {
        PhysicalParams p0 = p;
        p0.E_J_over_hbar = 0.0;
        SystemModel m0 = SystemModel::make(p0, Truncation{1, 4});
        auto res = steady_state_at(m0, 0.3);
        CHECK(res.rho.entries(0, 0).real() == Approx(1.0).margin(1e-10));
        CHECK(res.rho.purity() == Approx(1.0).margin(1e-10));
    }
}

TEST_CASE("steady-state degeneracy detection", "[lindblad]") {
    SECTION("conserved charge sectors (no qubit relaxation, no junction)") {
        PhysicalParams p;
        p.E_J_over_hbar = 0.0;
        p.gamma_minus = 0.0;
        SystemModel m = SystemModel::make(p, Truncation{1, 2});
        CHECK_THROWS_AS(steady_state_at(m, 0.3), DegenerateSteadyStateError);
    }
    SECTION("conserved photon sectors (loss channel removed by hand)") {
        PhysicalParams p;
        p.E_J_over_hbar = 0.0;
        const DerivedParams d = derive_params(p);
        Truncation t{1, 2};
        auto H = build_hamiltonian(d, 0.0, 0.0, 0.3, t);
        auto ops = standard_collapse_ops(p, d, t);
        ops.resize(2); // keep qubit decay + dephasing, drop photon loss
        CHECK_THROWS_AS(steady_state(H, ops), DegenerateSteadyStateError);
    }
    SECTION("zero Liouvillian") {
        Truncation t{1, 1};
        OperatorMatrix H{Matrix::Zero(t.dim(), t.dim()), t, true};
        CHECK_THROWS_AS(steady_state(H, {}), DegenerateSteadyStateError);
    }
}

TEST_CASE("steady-state sweep agrees with pointwise solves", "[lindblad]") {
    PhysicalParams p;
    Truncation t{1, 8};
    std::vector<double> Ng{0.3, 0.4, 0.5};
    std::vector<double> th{0.0, 0.5 * pi};
    auto sweep = sweep_steady(p, t, Ng, th);

    REQUIRE(sweep.N_p.rows() == 3);
    REQUIRE(sweep.N_p.cols() == 2);
    for (int j = 0; j < 2; ++j) {
        PhysicalParams pj = p;
        pj.theta_ex = th[size_t(j)];
        SystemModel m = SystemModel::make(pj, t);
        for (int i = 0; i < 3; ++i) {
            auto res = steady_state_at(m, Ng[size_t(i)]);
            const auto [a_op, x_op] = build_field_ops(t);
            const Matrix n_phot = a_op.entries.adjoint() * a_op.entries;
            CHECK(sweep.N_p(i, j) ==
                  Approx(expectation(res.rho, n_phot).real()).margin(1e-12));
            CHECK(sweep.residual(i, j) < 1e-10);
            CHECK(sweep.min_eigenvalue(i, j) > -1e-8);
        }
    }
    CHECK_THROWS_AS(sweep_steady(p, t, {}, th), InvalidParameterError);
}

TEST_CASE("pulse schedules validate their segments", "[lindblad]") {
    CHECK_THROWS_AS(PulseSchedule{}.validate(), InvalidParameterError);
    CHECK_THROWS_AS((PulseSchedule{{{-1.0, 0.3}}}.validate()), InvalidParameterError);
    CHECK_THROWS_AS((PulseSchedule{{{1.0, 1.0001}}}.validate()), InvalidParameterError);
    CHECK_NOTHROW((PulseSchedule{{{0.0, 0.5}, {2.0, 0.38}}}.validate()));
    CHECK((PulseSchedule{{{0.5, 0.1}, {1.25, 0.2}}}.total_duration()) == Approx(1.75));
}

TEST_CASE("master-equation evolution: exactly solvable qubit decay", "[lindblad]") {
    PhysicalParams p;
    p.E_J_over_hbar = 0.0; // diagonal Hamiltonian, analytic dissipative motion
    Truncation t{1, 2};
    SystemModel m = SystemModel::make(p, t);
    const double T = 3.0;

    SECTION("population relaxation at gamma_minus") {
        auto rho0 = DensityMatrix::basis_state(1, 0, t);
        auto ev = evolve(m, rho0, PulseSchedule{{{T, 0.1}}}, 0.5);
        CHECK(ev.series.N_c.back() ==
              Approx(std::exp(-p.gamma_minus * T)).margin(1e-7));
        // sample grid: t = 0, 0.5, ..., 2.5, then the final boundary 3.0
        REQUIRE(ev.series.times.size() == 7);
        CHECK(ev.series.times.front() == 0.0);
        CHECK(ev.series.times[3] == Approx(1.5));
        CHECK(ev.series.times.back() == Approx(T));
        // intermediate points follow the same exponential
        for (size_t i = 0; i < ev.series.times.size(); ++i)
            CHECK(ev.series.N_c[i] ==
                  Approx(std::exp(-p.gamma_minus * ev.series.times[i])).margin(1e-7));
        // trace is preserved without renormalization
        for (double d : ev.series.trace_defect) CHECK(d < 1e-10);
    }
    SECTION("coherence decay at gamma_minus/2 + gamma_phi") {
        Vector psi = Vector::Zero(t.dim());
        psi(t.flat_index(0, 0)) = 1.0 / std::sqrt(2.0);
        psi(t.flat_index(1, 0)) = 1.0 / std::sqrt(2.0);
        auto ev = evolve(m, DensityMatrix::pure(psi, t), PulseSchedule{{{T, 0.1}}}, 0.0);
        const cplx c01 = ev.final_state.entries(t.flat_index(0, 0), t.flat_index(1, 0));
        const double expect = 0.5 * std::exp(-(0.5 * p.gamma_minus + p.gamma_phi) * T);
        CHECK(std::abs(c01) == Approx(expect).margin(1e-5));
    }
    SECTION("argument validation") {
        auto rho0 = DensityMatrix::basis_state(0, 0, t);
        CHECK_THROWS_AS(evolve(m, rho0, PulseSchedule{{{1.0, 0.1}}}, -0.5),
                        InvalidParameterError);
        auto rho_bad = DensityMatrix::basis_state(0, 0, Truncation{1, 5});
        CHECK_THROWS_AS(evolve(m, rho_bad, PulseSchedule{{{1.0, 0.1}}}, 0.0),
                        DimensionError);
    }
}

TEST_CASE("long evolution relaxes onto the algebraic steady state", "[lindblad]") {
    PhysicalParams p;
    p.Q_factor = 50.0; // fast photon loss so 25 ns covers many lifetimes
    Truncation t{1, 8};
    SystemModel m = SystemModel::make(p, t);
    auto ss = steady_state_at(m, 0.5);
    auto ev = evolve(m, DensityMatrix::basis_state(1, 0, t), PulseSchedule{{{25.0, 0.5}}},
                     0.0);
    CHECK((ev.final_state.entries - ss.rho.entries).cwiseAbs().maxCoeff() < 2e-6);
    CHECK(ev.final_state.min_eigenvalue() > -1e-8);
}

TEST_CASE("maser bias-point setup", "[lindblad]") {
    PhysicalParams p;
    const DerivedParams d = derive_params(p);

    auto s1 = maser_setup(d, MaserTarget::A1);
    CHECK(s1.theta_ex == Approx(0.5 * pi));
    CHECK(s1.level_pair == std::pair<int, int>{1, 2});
    CHECK(s1.bracket.first == Approx(0.44186 - 0.04).margin(5e-3));

    auto s2 = maser_setup(d, MaserTarget::A2);
    CHECK(s2.theta_ex == 0.0);
    CHECK(s2.level_pair == std::pair<int, int>{2, 3});

    auto s3 = maser_setup(d, MaserTarget::A3);
    CHECK(s3.theta_ex == Approx(0.5 * pi));
    CHECK(s3.level_pair == std::pair<int, int>{3, 4});

    // a circuit whose resonator quantum exceeds the charge dispersion cannot
    // host the anticrossing inside the gate-charge window
    PhysicalParams tiny = p;
    tiny.C_g = 30000.0; // E_C collapses
    CHECK_THROWS_AS(maser_setup(derive_params(tiny), MaserTarget::A3),
                    InvalidParameterError);
}

TEST_CASE("pulsed maser shot at the single-photon anticrossing", "[lindblad][slow]") {
    PhysicalParams p;
    Truncation t{1, 30};
    auto out = maser_protocol(p, t, MaserTarget::A1);

    CHECK(out.N_g_star == Approx(0.44186).margin(2e-4));
    CHECK(out.gap / p.E_J_over_hbar == Approx(0.55393).epsilon(1e-3));
    CHECK(out.tau_pi == Approx(0.09026).margin(2e-4));
    CHECK(out.tau == Approx(out.tau_pi));
    CHECK(out.P_target == Approx(0.9623).margin(5e-4));
    CHECK(out.N_p == Approx(0.9699).margin(5e-4));
    CHECK(out.N_c == Approx(0.0183).margin(5e-4));
    CHECK(out.mandel_Q == Approx(-0.9502).margin(5e-4));
    CHECK(out.final_state.trace_defect() < 1e-9);
    CHECK(out.final_state.min_eigenvalue() > -1e-8);

    SECTION("zero dwell returns the initial state") {
        auto still = maser_protocol(p, t, MaserTarget::A1, 0.0);
        CHECK(still.N_p == Approx(0.0).margin(1e-12));
        CHECK(still.P_target == Approx(0.0).margin(1e-12));
    }
}

TEST_CASE("dwell-time scan equals repeated single shots", "[lindblad][slow]") {
    PhysicalParams p;
    Truncation t{1, 30};
    auto scan = maser_scan(p, t, MaserTarget::A2, {0.0, 0.05, 0.09728, 0.13});

    REQUIRE(scan.rows.size() == 4);
    CHECK(scan.tau_pi == Approx(0.09728).margin(2e-4));
    CHECK(scan.rows[0].tau == 0.0);
    CHECK(scan.rows[0].P_target == Approx(0.0).margin(1e-12));
    CHECK(std::isnan(scan.rows[0].mandel_Q)); // no photons yet

    // frozen landmarks of the scan
    CHECK(scan.rows[1].P_target == Approx(0.508191).margin(1e-5));
    CHECK(scan.rows[2].P_target == Approx(0.957158).margin(1e-5));
    CHECK(scan.rows[2].N_p == Approx(1.921852).margin(1e-5));
    CHECK(scan.rows[3].P_target == Approx(0.715848).margin(1e-5));

    // equivalence with one-shot protocol runs (instantaneous ramps)
    for (size_t i : {size_t(1), size_t(2)}) {
        auto one = maser_protocol(p, t, MaserTarget::A2, scan.rows[i].tau);
        CHECK(scan.rows[i].P_target == Approx(one.P_target).margin(1e-7));
        CHECK(scan.rows[i].N_p == Approx(one.N_p).margin(1e-6));
    }

    SECTION("scan input validation") {
        CHECK_THROWS_AS(maser_scan(p, t, MaserTarget::A2, {}), InvalidParameterError);
        CHECK_THROWS_AS(maser_scan(p, t, MaserTarget::A2, {-0.1, 0.2}),
                        InvalidParameterError);
    }
}
