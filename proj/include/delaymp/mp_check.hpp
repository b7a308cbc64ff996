#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "adjoint_first.hpp"
#include "adjoint_second.hpp"
#include "core.hpp"
#include "forward.hpp"
#include "hamiltonian.hpp"
#include "problem.hpp"
#include "state.hpp"
#include "variational.hpp"

namespace delaymp {

/// One (node, control-alternative) cell of the maximum-condition scan.
struct ScanEntry {
    int node = 0;
    int v_index = 0;
    double value = 0.0;
    double se = 0.0;  // Monte Carlo standard error, 0 for one path
};

struct ScanReport {
    TimeGrid grid;
    std::vector<ScanEntry> entries;  // node-major, control enumeration inner
    double min_value = 0.0;
    double min_se = 0.0;
    int argmin_node = 0;
    int argmin_v = 0;
    double base_tol = 0.0;
    bool pass = true;
    /// Largest magnitude the delayed branch contributed anywhere; the scan
    /// is only meaningful for delayed costs/dynamics when this is nonzero.
    double max_delayed_abs = 0.0;
};

namespace detail {

inline void require_same_grid(const TimeGrid& a, const TimeGrid& b, const char* what) {
    require(a.n_steps == b.n_steps && a.history_steps == b.history_steps &&
                std::abs(a.dt - b.dt) <= 1e-12 * (1.0 + std::abs(a.dt)),
            ErrorKind::parameter, what);
}

}  // namespace detail

/// Scans every grid node tau in [0, T) against every admissible alternative
/// v and evaluates dH(tau) + E[dH~(tau + delta)] * 1_{[0, T - delta)}(tau),
/// where dH swaps the instantaneous control and dH~ swaps the delayed slot
/// at the shifted node.  The expectation is the per-path value for a single
/// path (deterministic regime) and an unconditional path average otherwise.
/// A cell fails when its value drops below -(base_tol + 3 se); ties for the
/// minimum keep the earliest node and lowest control-enumeration index.
inline ScanReport max_condition_scan(const ProblemSpec& spec, const std::vector<StatePath>& paths,
                                     const ControlProcess& candidate, const FirstOrderAdjoint& adj,
                                     const CurlyP& curly, double base_tol = 1e-6) {
    require(!paths.empty(), ErrorKind::parameter, "scan needs at least one state path");
    const TimeGrid& g = paths.front().grid;
    detail::require_same_grid(g, candidate.grid, "candidate control grid mismatch");
    detail::require_same_grid(g, adj.grid, "first-order adjoint grid mismatch");
    detail::require_same_grid(g, curly.grid, "curvature grid mismatch");
    const int N = g.n_steps, k = g.history_steps;
    const int M = static_cast<int>(paths.size());
    const std::vector<Vec> alternatives = spec.controls.enumerate();

    ScanReport rep;
    rep.grid = g;
    rep.base_tol = base_tol;
    rep.entries.reserve(static_cast<std::size_t>(N) * alternatives.size());
    bool first = true;
    std::vector<double> per_path(static_cast<std::size_t>(M));

    for (int i = 0; i < N; ++i) {
        const bool live = i < N - k;
        const Vec& u_star = candidate.u(i);
        const Vec& mu_star = candidate.mu(i);
        for (int vi = 0; vi < static_cast<int>(alternatives.size()); ++vi) {
            const Vec& v = alternatives[static_cast<std::size_t>(vi)];
            double delayed_abs = 0.0;
            for (int pth = 0; pth < M; ++pth) {
                const StatePath& sp = paths[static_cast<std::size_t>(pth)];
                HamiltonianInputs in;
                in.t = g.time(i);
                in.x = sp.x(i);
                in.y = sp.y(i);
                in.z = sp.z(i);
                in.p = adj.p[static_cast<std::size_t>(i)];
                in.curly = curly.value[static_cast<std::size_t>(i)];
                in.u_star = u_star;
                in.mu_star = mu_star;
                double val = eval_hamiltonian(spec, in, v, mu_star) -
                             eval_hamiltonian(spec, in, u_star, mu_star);
                if (live) {
                    const int s = i + k;
                    HamiltonianInputs sh;
                    sh.t = g.time(s);
                    sh.x = sp.x(s);
                    sh.y = sp.y(s);
                    sh.z = sp.z(s);
                    sh.p = adj.p[static_cast<std::size_t>(s)];
                    sh.curly = curly.value[static_cast<std::size_t>(s)];
                    sh.u_star = candidate.u(s);
                    sh.mu_star = candidate.mu(s);
                    const double dtil = eval_hamiltonian(spec, sh, sh.u_star, v) -
                                        eval_hamiltonian(spec, sh, sh.u_star, sh.mu_star);
                    val += dtil;
                    delayed_abs = std::max(delayed_abs, std::abs(dtil));
                }
                per_path[static_cast<std::size_t>(pth)] = val;
            }
            double mean = 0.0;
            for (double w : per_path) mean += w;
            mean /= M;
            double se = 0.0;
            if (M > 1) {
                double ss = 0.0;
                for (double w : per_path) ss += (w - mean) * (w - mean);
                se = std::sqrt(ss / (M - 1)) / std::sqrt(static_cast<double>(M));
            }
            rep.entries.push_back({i, vi, mean, se});
            rep.max_delayed_abs = std::max(rep.max_delayed_abs, delayed_abs);
            if (mean < -(base_tol + 3.0 * se)) rep.pass = false;
            if (first || mean < rep.min_value) {
                first = false;
                rep.min_value = mean;
                rep.min_se = se;
                rep.argmin_node = i;
                rep.argmin_v = vi;
            }
        }
    }
    return rep;
}

/// One spike-expansion trial: finite cost difference against the predicted
/// first-plus-second order expansion at (tau, eps).
struct ExpansionLeg {
    double tau = 0.0;
    double eps = 0.0;
    double fd = 0.0;        // J(u^eps) - J(u*), common random numbers
    double fd_se = 0.0;
    double prediction = 0.0;
    double residual = 0.0;  // fd - prediction
    double residual_se = 0.0;
    double residual_over_eps = 0.0;
};

struct ExpansionReport {
    std::vector<ExpansionLeg> legs;
};

namespace detail {

/// Spike and delayed-copy node windows, clamped to [0, N).  The clamp on the
/// delayed window is exactly the half-open indicator on tau: the copy is
/// empty iff tau >= T - delta.
struct SpikeWindows {
    int start = 0, len = 0, k = 0, N = 0;
    bool in_spike(int i) const { return i >= start && i < start + len; }
    bool in_copy(int i) const { return i >= start + k && i < std::min(start + k + len, N); }
};

}  // namespace detail

/// Compares J(u^eps) - J(u*) on common random numbers with the expansion
///   int_S dG + int_S' dG~ + (1/2) sum_j int Tr[dsigma^j' P dsigma^j]
/// where S = [tau, tau+eps), S' is its delay shift, and the quadratic leg
/// runs over both windows.  The residual standard error comes from per-path
/// differences, so noise cancellation is preserved.
inline ExpansionReport spike_expansion_check(const ProblemSpec& spec,
                                             const ControlProcess& candidate, const Vec& v,
                                             const std::vector<double>& taus,
                                             const std::vector<double>& eps_schedule,
                                             const FirstOrderAdjoint& adj, const CurlyP& curly,
                                             const BrownianBundle& bundle, int threads = 1) {
    const TimeGrid& g = candidate.grid;
    detail::require_same_grid(g, adj.grid, "first-order adjoint grid mismatch");
    detail::require_same_grid(g, curly.grid, "curvature grid mismatch");
    const int N = g.n_steps, k = g.history_steps;
    const StateBatch base = simulate_sdde(spec, candidate, bundle, threads);
    const int M = static_cast<int>(base.paths.size());

    ExpansionReport rep;
    for (double tau : taus) {
        for (double eps : eps_schedule) {
            const SpikePlan plan = make_spike_plan(g, spec.controls, v, tau, eps);
            detail::SpikeWindows w{plan.start, plan.len, k, N};
            const ControlProcess spiked = spike_perturb(candidate, v, tau, eps);
            const StateBatch bumped = simulate_sdde(spec, spiked, bundle, threads);
            const CostEstimate fd =
                evaluate_cost_difference(spec, bumped, spiked, base, candidate, threads);

            std::vector<double> pred(static_cast<std::size_t>(M), 0.0);
            for (int pth = 0; pth < M; ++pth) {
                const StatePath& sp = base.paths[static_cast<std::size_t>(pth)];
                double acc = 0.0;
                for (int i = 0; i < N; ++i) {
                    const bool s_hit = w.in_spike(i), c_hit = w.in_copy(i);
                    if (!s_hit && !c_hit) continue;
                    const Vec& us = candidate.u(i);
                    const Vec& ms = candidate.mu(i);
                    const Vec& ue = spiked.u(i);
                    const Vec& me = spiked.mu(i);
                    const Vec& p = adj.p[static_cast<std::size_t>(i)];
                    acc += g.dt * (eval_G(spec, g.time(i), sp.x(i), sp.y(i), sp.z(i), p, Mat(),
                                          ue, me) -
                                   eval_G(spec, g.time(i), sp.x(i), sp.y(i), sp.z(i), p, Mat(),
                                          us, ms));
                    CoeffPoint at, ref;
                    at.t = ref.t = g.time(i);
                    at.x = ref.x = sp.x(i);
                    at.y = ref.y = sp.y(i);
                    at.z = ref.z = sp.z(i);
                    at.u = ue;
                    at.mu = me;
                    ref.u = us;
                    ref.mu = ms;
                    const Mat ds = spec.coeffs.diffusion(at) - spec.coeffs.diffusion(ref);
                    const Mat& P = curly.value[static_cast<std::size_t>(i)];
                    for (int j = 0; j < ds.cols(); ++j)
                        acc += 0.5 * g.dt * ds.col(j).dot(P * ds.col(j));
                }
                pred[static_cast<std::size_t>(pth)] = acc;
            }

            ExpansionLeg leg;
            leg.tau = tau;
            leg.eps = eps;
            leg.fd = fd.mean;
            leg.fd_se = fd.stderr_;
            double pmean = 0.0;
            for (double w2 : pred) pmean += w2;
            pmean /= M;
            leg.prediction = pmean;
            double rmean = 0.0, rss = 0.0;
            for (int pth = 0; pth < M; ++pth)
                rmean += fd.per_path[static_cast<std::size_t>(pth)] -
                         pred[static_cast<std::size_t>(pth)];
            rmean /= M;
            if (M > 1) {
                for (int pth = 0; pth < M; ++pth) {
                    const double r = fd.per_path[static_cast<std::size_t>(pth)] -
                                     pred[static_cast<std::size_t>(pth)] - rmean;
                    rss += r * r;
                }
                leg.residual_se = std::sqrt(rss / (M - 1)) / std::sqrt(static_cast<double>(M));
            }
            leg.residual = rmean;
            leg.residual_over_eps = rmean / eps;
            rep.legs.push_back(leg);
        }
    }
    return rep;
}

/// Curvature leg of the expansion recomputed from the raw two-time kernel
/// blocks instead of the assembled pointwise weight.  The lifted diffusion
/// difference at (theta, t) places dsigma in the top row and repeats it in
/// the delayed row when theta - t > delta, so every kernel contraction
/// reduces to indicator-gated block sums.  Deterministic-coefficient checks
/// compare this against (1/2) dt sum Tr[dsigma' P dsigma].
inline double expansion_curvature_raw(const SecondOrderKernels& K, const ProblemSpec& spec,
                                      const std::vector<int>& nodes,
                                      const std::vector<Mat>& dsig) {
    require(nodes.size() == dsig.size(), ErrorKind::parameter,
            "one diffusion difference per node is required");
    const TimeGrid& g = K.grid;
    const int N = g.n_steps, k = g.history_steps, n = K.n;
    const double dt = g.dt;
    double total = 0.0;
    auto gated = [&](const Mat& M, bool row_del, bool col_del) {
        Mat b = kernel_block(M, 0, 0, n);
        if (col_del) b += kernel_block(M, 0, 1, n);
        if (row_del) b += kernel_block(M, 1, 0, n);
        if (row_del && col_del) b += kernel_block(M, 1, 1, n);
        return b;
    };
    for (std::size_t idx = 0; idx < nodes.size(); ++idx) {
        const int t = nodes[idx];
        require(t >= 0 && t < N, ErrorKind::parameter, "expansion node outside [0, T)");
        const bool tdel = t < N - k;  // theta = T row indicator
        Mat acc = gated(K.P1, tdel, tdel);
        for (int th = t + 1; th <= N; ++th) {
            const bool d1 = th - t > k;
            const Mat& P2 = K.P2[static_cast<std::size_t>(th)];
            acc += dt * (gated(P2.transpose(), tdel, d1) + gated(P2, d1, tdel) +
                         gated(K.P3[static_cast<std::size_t>(th)], d1, d1));
            for (int tp = t + 1; tp <= N; ++tp) {
                const bool d2 = tp - t > k;
                acc += dt * dt * gated(K.P4_at(tp, th), d1, d2);
            }
        }
        const Mat& dsg = dsig[idx];
        require(dsg.rows() == n && dsg.cols() == spec.d, ErrorKind::dimension,
                "diffusion difference must be n x d");
        for (int j = 0; j < dsg.cols(); ++j)
            total += 0.5 * dt * dsg.col(j).dot(acc * dsg.col(j));
    }
    return total;
}

}  // namespace delaymp
