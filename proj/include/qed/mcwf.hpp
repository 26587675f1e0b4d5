#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "qed/errors.hpp"
#include "qed/lindblad.hpp"
#include "qed/operators.hpp"

// Monte Carlo wave-function (quantum-jump) unravelling of the master
// equation. Between jumps the state evolves under the non-Hermitian
// H_eff = H - (i/2) sum_k r_k c_k^dag c_k; the squared norm of the
// unnormalized state decays monotonically and a jump fires when it crosses a
// pre-drawn uniform threshold. Jump times are localized by dyadic bisection:
// the propagator over the sample interval dt is precomputed together with
// its dyadic roots U_j = exp(-i H_eff dt / 2^j), built by squaring up from
// the finest level so that U_j = U_{j+1}^2 holds exactly. This keeps the
// no-jump map a fixed linear operator (block-structure-preserving, e.g. for
// photon parity) and resolves jump times to dt / 2^J.

namespace qed {

/// Resolution of a single trajectory's RNG stream: one uniform threshold per
/// no-jump stretch, one uniform per jump for channel selection, consumed in
/// event order from a per-trajectory mt19937_64 seeded with `seed`.
struct McwfOptions {
    double sample_dt = 0.1;      ///< observable sampling interval, ns
    double jump_resolution = 1e-6; ///< upper bound on jump-time quantization, ns
};

struct JumpEvent {
    double time = 0.0;    ///< ns, quantized to the dyadic grid
    int channel = 0;      ///< index into the collapse-op list
    std::string label;    ///< label of that collapse op
    double pre_jump_Np = 0.0;
    double post_jump_Np = 0.0;
};

struct TrajectoryRecord {
    std::uint64_t seed = 0;
    std::vector<double> times;
    std::vector<double> N_c;
    std::vector<double> N_p;
    std::vector<double> parity_even; ///< weight in the even-photon sector
    std::vector<double> norm; ///< pre-normalization survival norm (resets to 1 at jumps)
    std::vector<JumpEvent> jumps;
    Vector final_state; ///< normalized
};

namespace detail {

/// 53-bit uniform in [0, 1) from a 64-bit draw.
inline double uniform53(std::mt19937_64& rng) {
    return double(rng() >> 11) * 0x1.0p-53;
}

} // namespace detail

/// Evolve one trajectory from the normalized pure state psi0 under H with
/// the given collapse channels, recording observables every sample_dt up to
/// t_end (t_end is rounded to a whole number of sample intervals).
inline TrajectoryRecord run_trajectory(const OperatorMatrix& H,
                                       const std::vector<CollapseOp>& collapse,
                                       const Vector& psi0, double t_end,
                                       std::uint64_t seed, const McwfOptions& opt = {}) {
    const int D = H.dim();
    if (psi0.size() != D)
        throw DimensionError("run_trajectory: state dimension does not match Hamiltonian");
    if (!(opt.sample_dt > 0.0) || !(t_end > 0.0))
        throw InvalidParameterError("run_trajectory: need positive sample_dt and t_end");
    if (!(opt.jump_resolution > 0.0))
        throw InvalidParameterError("run_trajectory: jump_resolution must be positive");
    for (const auto& c : collapse)
        if (c.op.rows() != D || c.op.cols() != D)
            throw DimensionError("run_trajectory: collapse operator dimension mismatch");

    // Effective non-Hermitian generator.
    Matrix H_eff = H.entries;
    for (const auto& c : collapse)
        H_eff -= cplx(0.0, 0.5) * (c.rate * (c.op.adjoint() * c.op));

    const long n_samples = std::lround(t_end / opt.sample_dt);
    if (n_samples < 1)
        throw InvalidParameterError("run_trajectory: t_end shorter than one sample interval");
    const double dt = opt.sample_dt;

    // Dyadic propagator family: U[j] spans dt / 2^j, built so U[j] = U[j+1]^2
    // exactly. J is chosen so the finest step is below jump_resolution.
    int J = 0;
    while (dt / std::pow(2.0, J) > opt.jump_resolution) ++J;
    std::vector<Matrix> U(static_cast<size_t>(J) + 1);
    {
        const double sliver = dt / std::pow(2.0, J);
        Matrix gen = cplx(0.0, -1.0) * sliver * H_eff;
        U[static_cast<size_t>(J)] = gen.exp();
        for (int j = J - 1; j >= 0; --j)
            U[static_cast<size_t>(j)] =
                U[static_cast<size_t>(j + 1)] * U[static_cast<size_t>(j + 1)];
    }
    const double sliver = dt / std::pow(2.0, J);
    const std::int64_t slivers_per_sample = std::int64_t(1) << J;

    // Observables.
    const Truncation& tr = H.trunc;
    const auto [a_op, x_op] = build_field_ops(tr);
    (void)x_op;
    const Matrix n_phot = a_op.entries.adjoint() * a_op.entries;
    const auto [N_op, hop_op] = build_charge_ops(tr);
    (void)hop_op;
    const Matrix P_even = even_parity_projector(tr).entries;

    std::mt19937_64 rng(seed);
    TrajectoryRecord rec;
    rec.seed = seed;

    Vector psi = psi0.normalized(); // unnormalized between jumps from here on
    double threshold = detail::uniform53(rng);

    auto do_jump = [&](Vector& state, double t_now) {
        Vector norm_state = state.normalized();
        const double pre_Np = norm_state.dot(n_phot * norm_state).real();
        std::vector<double> w(collapse.size(), 0.0);
        double w_sum = 0.0;
        std::vector<Vector> jumped(collapse.size());
        for (size_t k = 0; k < collapse.size(); ++k) {
            jumped[k] = collapse[k].op * norm_state;
            w[k] = collapse[k].rate * jumped[k].squaredNorm();
            w_sum += w[k];
        }
        if (!(w_sum > 0.0))
            throw NumericError("run_trajectory: norm threshold crossed but all jump weights "
                               "vanish at t = " + std::to_string(t_now));
        const double u = detail::uniform53(rng) * w_sum;
        size_t pick = 0;
        double acc = 0.0;
        for (size_t k = 0; k < collapse.size(); ++k) {
            acc += w[k];
            if (u < acc || k == collapse.size() - 1) {
                pick = k;
                break;
            }
        }
        state = jumped[pick].normalized();
        JumpEvent ev;
        ev.time = t_now;
        ev.channel = static_cast<int>(pick);
        ev.label = collapse[pick].label;
        ev.pre_jump_Np = pre_Np;
        ev.post_jump_Np = state.dot(n_phot * state).real();
        rec.jumps.push_back(ev);
        threshold = detail::uniform53(rng);
    };

    auto record_sample = [&](double t_now) {
        Vector norm_state = psi.normalized();
        rec.times.push_back(t_now);
        rec.norm.push_back(psi.norm());
        rec.N_c.push_back(norm_state.dot(N_op.entries * norm_state).real());
        rec.N_p.push_back(norm_state.dot(n_phot * norm_state).real());
        rec.parity_even.push_back(norm_state.dot(P_even * norm_state).real());
    };

    record_sample(0.0);
    for (long s = 0; s < n_samples; ++s) {
        const double t_base = double(s) * dt;
        // Advance one sample interval, measured in slivers, greedily taking
        // the largest dyadic block that does not cross the threshold.
        std::int64_t pos = 0;
        while (pos < slivers_per_sample) {
            std::int64_t remaining = slivers_per_sample - pos;
            // Largest power of two <= remaining that also keeps the block
            // dyadically aligned at `pos` (pos is always a multiple of the
            // block size by construction of the greedy descent).
            std::int64_t block = std::int64_t(1) << J;
            while (block > remaining || (pos % block) != 0) block >>= 1;
            for (;;) {
                const int j = J - static_cast<int>(std::llround(std::log2(double(block))));
                Vector cand = U[static_cast<size_t>(j)] * psi;
                if (cand.squaredNorm() >= threshold) {
                    psi = std::move(cand);
                    pos += block;
                    break;
                }
                if (block == 1) {
                    // Crossing inside one sliver: jump at its upper edge.
                    psi = std::move(cand);
                    pos += 1;
                    do_jump(psi, t_base + double(pos) * sliver);
                    break;
                }
                block >>= 1;
            }
        }
        record_sample(double(s + 1) * dt);
    }

    rec.final_state = psi.normalized();
    return rec;
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

/// Mean and standard error of N_p and N_c across trajectories, per sample
/// time. Seeds are seed0, seed0+1, ..., seed0+n_traj-1.
struct EnsembleSeries {
    int n_traj = 0;
    std::vector<double> times;
    std::vector<double> mean_N_p;
    std::vector<double> se_N_p;
    std::vector<double> mean_N_c;
    std::vector<double> se_N_c;
};

inline EnsembleSeries ensemble_average(const OperatorMatrix& H,
                                       const std::vector<CollapseOp>& collapse,
                                       const Vector& psi0, double t_end, int n_traj,
                                       std::uint64_t seed0, const McwfOptions& opt = {}) {
    if (n_traj < 1) throw InvalidParameterError("ensemble_average: n_traj must be >= 1");
    EnsembleSeries out;
    out.n_traj = n_traj;
    std::vector<double> m_p, m2_p, m_c, m2_c;
    for (int k = 0; k < n_traj; ++k) {
        TrajectoryRecord rec =
            run_trajectory(H, collapse, psi0, t_end, seed0 + std::uint64_t(k), opt);
        if (k == 0) {
            out.times = rec.times;
            m_p.assign(rec.times.size(), 0.0);
            m2_p.assign(rec.times.size(), 0.0);
            m_c.assign(rec.times.size(), 0.0);
            m2_c.assign(rec.times.size(), 0.0);
        }
        // Welford updates per sample index.
        for (size_t i = 0; i < rec.times.size(); ++i) {
            const double n = double(k + 1);
            double d = rec.N_p[i] - m_p[i];
            m_p[i] += d / n;
            m2_p[i] += d * (rec.N_p[i] - m_p[i]);
            d = rec.N_c[i] - m_c[i];
            m_c[i] += d / n;
            m2_c[i] += d * (rec.N_c[i] - m_c[i]);
        }
    }
    const size_t ns = out.times.size();
    out.mean_N_p.resize(ns);
    out.se_N_p.resize(ns);
    out.mean_N_c.resize(ns);
    out.se_N_c.resize(ns);
    for (size_t i = 0; i < ns; ++i) {
        out.mean_N_p[i] = m_p[i];
        out.mean_N_c[i] = m_c[i];
        const double var_p = n_traj > 1 ? m2_p[i] / double(n_traj - 1) : 0.0;
        const double var_c = n_traj > 1 ? m2_c[i] / double(n_traj - 1) : 0.0;
        out.se_N_p[i] = std::sqrt(var_p / double(n_traj));
        out.se_N_c[i] = std::sqrt(var_c / double(n_traj));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Jump statistics
// ---------------------------------------------------------------------------

struct JumpSummary {
    std::vector<int> counts_per_channel;
    std::vector<double> delta_N_p; ///< post - pre photon number, one per jump
};

/// Tally jumps by channel and collect the photon-number change each jump
/// produced. n_channels fixes the count vector length (jump channel indices
/// beyond it throw).
inline JumpSummary classify_jumps(const std::vector<JumpEvent>& jumps, int n_channels) {
    if (n_channels < 1) throw InvalidParameterError("classify_jumps: n_channels must be >= 1");
    JumpSummary s;
    s.counts_per_channel.assign(static_cast<size_t>(n_channels), 0);
    for (const auto& j : jumps) {
        if (j.channel < 0 || j.channel >= n_channels)
            throw InvalidParameterError("classify_jumps: jump channel index out of range");
        ++s.counts_per_channel[static_cast<size_t>(j.channel)];
        s.delta_N_p.push_back(j.post_jump_Np - j.pre_jump_Np);
    }
    return s;
}

} // namespace qed
