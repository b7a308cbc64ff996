#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "adjoint_first.hpp"
#include "brownian.hpp"
#include "core.hpp"
#include "forward.hpp"
#include "lift.hpp"
#include "parallel.hpp"
#include "problem.hpp"
#include "time_grid.hpp"
#include "trace.hpp"
#include "variational.hpp"

namespace delaymp {

/// Backward-equation drivers reconstructed from the solved (p, ptilde) pair
/// and the traced coefficients, deterministic mode.  Component 0 pairs with
/// the instantaneous block, 1 with the pointwise-delay block, 2 with the
/// sliding-average block.
struct AdjointDrivers {
    std::vector<Vec> y0, y1, y2;  // nodes 0..N
};

inline AdjointDrivers reconstruct_adjoint_drivers(const ProblemSpec& spec, const TimeGrid& g,
                                                  const PathTrace& trace,
                                                  const FirstOrderAdjoint& adj) {
    const int N = g.n_steps;
    require(static_cast<int>(adj.p.size()) == N + 1, ErrorKind::parameter,
            "adjoint solution does not match the grid");
    const double lambda = spec.delay.lambda;
    const double decay = std::exp(-lambda * g.delta);
    AdjointDrivers out;
    out.y0.resize(static_cast<std::size_t>(N) + 1);
    out.y1.resize(static_cast<std::size_t>(N) + 1);
    out.y2.resize(static_cast<std::size_t>(N) + 1);
    for (int m = 0; m <= N; ++m) {
        const auto sm = static_cast<std::size_t>(m);
        const Vec& pm = adj.p[sm];
        const Vec& ptm = adj.ptilde[sm];
        out.y0[sm] = trace.lx(m) + trace.bx(m).transpose() * pm + ptm;
        out.y1[sm] = trace.ly(m) + trace.by(m).transpose() * pm - decay * ptm;
        out.y2[sm] = trace.lz(m) + trace.bz(m).transpose() * pm - lambda * ptm;
    }
    return out;
}

struct DualityReport {
    double lhs = 0.0;              // E[ sum dt <cost gradient, X> + <terminal gradient, X(T)> ]
    double rhs = 0.0;              // E[ sum dt <phi, Y> + <terminal gradient, phi(T)> ]
    double lhs_stderr = 0.0;
    double rhs_stderr = 0.0;
    double gap = 0.0;              // lhs - rhs
    double gap_stderr = 0.0;       // paired, common random numbers
    double combined_stderr = 0.0;  // sqrt(lhs_se^2 + rhs_se^2)
    int paths = 0;
    bool pass = false;             // |gap| <= 3 * combined_stderr
};

/// Both sides of the first-order pairing between the lifted variations and
/// the backward drivers, estimated on common random numbers.
///
/// Left side: the cost gradients against the lifted combined variation.
/// Right side: the inhomogeneous input sums phi (drift and diffusion
/// differences plus the quadratic second-order inputs) against the drivers
/// reconstructed from (p, ptilde), with the right-endpoint rule's terminal
/// cell corrected: the boundary part of the terminal driver is already
/// counted inside the terminal-gradient pairing, so its extra dt-cell is
/// removed against the realized lifted state at the horizon.  With that
/// correction the two sides agree path by path up to a discrete martingale
/// with exactly zero mean, so the gap is pure Monte Carlo noise (and is
/// identically zero when the diffusion vanishes).
inline DualityReport check_duality(const ProblemSpec& spec, const ControlProcess& ctrl,
                                   const SpikePlan& plan, const BrownianBundle& bundle,
                                   int threads = 1) {
    const TimeGrid& g = bundle.grid();
    require(ctrl.grid.n_steps == g.n_steps && std::abs(ctrl.grid.dt - g.dt) < 1e-15,
            ErrorKind::alignment, "control grid does not match the bundle grid");
    require(bundle.n_noise() == spec.d, ErrorKind::dimension,
            "bundle noise dimension does not match the problem");
    const int M = bundle.n_paths(), N = g.n_steps, k = g.history_steps, n = spec.n, d = spec.d;
    const double dt = g.dt;

    // Solve the adjoint once from a handful of probe traces; the solver
    // rejects path-dependent coefficient derivatives (mode error).
    const int probes = std::min(M, 4);
    std::vector<PathTrace> probe_traces(static_cast<std::size_t>(probes));
    for (int p = 0; p < probes; ++p) {
        StatePath path = simulate_sdde_path(spec, ctrl, bundle, p);
        probe_traces[static_cast<std::size_t>(p)] =
            eval_coefficients_along(spec, path, ctrl, true);
    }
    const FirstOrderAdjoint adj = solve_first_adjoint(spec, g, probe_traces);
    const PathTrace& tr = probe_traces.front();
    const AdjointDrivers drv = reconstruct_adjoint_drivers(spec, g, tr, adj);

    // Boundary part of the terminal driver (driver minus its cost-gradient
    // part); the terminal quadrature cell drops it against the state at T.
    const auto sN = static_cast<std::size_t>(N);
    const Vec over0 = drv.y0[sN] - tr.lx(N);
    const Vec over1 = drv.y1[sN] - tr.ly(N);
    const Vec over2 = drv.y2[sN] - tr.lz(N);

    std::vector<double> lhs_vals(static_cast<std::size_t>(M), 0.0);
    std::vector<double> rhs_vals(static_cast<std::size_t>(M), 0.0);

    parallel_for(M, threads, [&](int p) {
        StatePath path = simulate_sdde_path(spec, ctrl, bundle, p);
        PathTrace local = eval_coefficients_along(spec, path, ctrl, true);
        SpikeDeltas deltas = eval_spike_deltas(spec, g, local, path, ctrl, plan, true);
        // Kernels read the shared derivatives so both sides see the exact
        // coefficients the adjoint was solved with; the spike differences
        // stay path-local.
        LiftedPath lp = lift_path(spec, g, tr, deltas, bundle, p, true);
        KernelSet ks = build_kernels(tr, deltas, g, n, d, spec.delay.lambda);

        std::vector<Vec> phi0(static_cast<std::size_t>(N) + 1, Vec::Zero(n));
        for (int l = 0; l < N; ++l) {
            const auto sl = static_cast<std::size_t>(l);
            const Vec X1l = lp.X1(l);
            Vec step = dt * (ks.B(l, l).head(n) + ks.Bbar(l, l, X1l).head(n));
            for (int j = 0; j < d; ++j)
                step += bundle.increment(p, l, j) *
                        (ks.D(l, l, j).head(n) + ks.Dbar(l, l, j, X1l).head(n));
            phi0[sl + 1] = phi0[sl] + step;
        }

        double lhs = 0.0, rhs = 0.0;
        Vec xt_top, xt_mid, xt_bot;
        for (int m = 1; m <= N; ++m) {
            const auto sm = static_cast<std::size_t>(m);
            const Vec top = lp.top[sm] + lp.top2[sm];
            const Vec mid = lp.mid(m) + lp.mid2(m);
            const Vec bot = lp.bot[sm] + lp.bot2[sm];
            lhs += dt * (tr.lx(m).dot(top) + tr.ly(m).dot(mid) + tr.lz(m).dot(bot));
            const Vec& phi1 = phi0[static_cast<std::size_t>(std::max(m - k, 0))];
            // The sliding-block input sum is identically zero, so the third
            // driver never contributes here.
            rhs += dt * (drv.y0[sm].dot(phi0[sm]) + drv.y1[sm].dot(phi1));
            if (m == N) {
                xt_top = top;
                xt_mid = mid;
                xt_bot = bot;
            }
        }
        lhs += tr.hx().dot(xt_top) + tr.hy().dot(xt_mid) + tr.hz().dot(xt_bot);
        rhs += tr.hx().dot(phi0[sN]) + tr.hy().dot(phi0[static_cast<std::size_t>(N - k)]);
        rhs -= dt * (over0.dot(xt_top) + over1.dot(xt_mid) + over2.dot(xt_bot));
        lhs_vals[static_cast<std::size_t>(p)] = lhs;
        rhs_vals[static_cast<std::size_t>(p)] = rhs;
    });

    auto stats = [M](const std::vector<double>& v, double& mean, double& se) {
        double sum = 0.0;
        for (double x : v) sum += x;
        mean = sum / M;
        se = 0.0;
        if (M >= 2) {
            double ss = 0.0;
            for (double x : v) ss += (x - mean) * (x - mean);
            se = std::sqrt(ss / (M - 1)) / std::sqrt(static_cast<double>(M));
        }
    };
    DualityReport rep;
    rep.paths = M;
    stats(lhs_vals, rep.lhs, rep.lhs_stderr);
    stats(rhs_vals, rep.rhs, rep.rhs_stderr);
    std::vector<double> gaps(static_cast<std::size_t>(M));
    for (int p = 0; p < M; ++p)
        gaps[static_cast<std::size_t>(p)] =
            lhs_vals[static_cast<std::size_t>(p)] - rhs_vals[static_cast<std::size_t>(p)];
    stats(gaps, rep.gap, rep.gap_stderr);
    rep.combined_stderr =
        std::sqrt(rep.lhs_stderr * rep.lhs_stderr + rep.rhs_stderr * rep.rhs_stderr);
    // The floor absorbs pure roundoff: with a vanishing diffusion every path
    // coincides, both standard errors are exactly zero, and the two sides
    // differ only by operation order.
    const double floor_ = 1e-12 * (1.0 + std::abs(rep.lhs) + std::abs(rep.rhs));
    rep.pass = std::abs(rep.gap) <= 3.0 * rep.combined_stderr + floor_;
    return rep;
}

}  // namespace delaymp
