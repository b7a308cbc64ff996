#pragma once

#include <cmath>
#include <vector>

#include "brownian.hpp"
#include "core.hpp"
#include "forward.hpp"
#include "parallel.hpp"
#include "problem.hpp"
#include "state.hpp"
#include "trace.hpp"
#include "variational.hpp"

namespace delaymp {

/// Mean-square magnitudes at one spike width.
struct OrderSample {
    double eps = 0.0;
    double first_moment = 0.0;      // E sup_t |x1(t)|^2
    double remainder_moment = 0.0;  // E sup_t |x^eps(t) - x*(t) - x1(t)|^2
};

struct OrderReport {
    std::vector<OrderSample> samples;
    double slope_first = 0.0;      // log-log slope over the eps schedule
    double slope_remainder = 0.0;
};

/// Least-squares slope of log y against log x.
inline double fit_loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    require(xs.size() == ys.size() && xs.size() >= 2, ErrorKind::parameter,
            "slope fit needs at least two matched samples");
    const int m = static_cast<int>(xs.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (int i = 0; i < m; ++i) {
        require(xs[static_cast<std::size_t>(i)] > 0.0 && ys[static_cast<std::size_t>(i)] > 0.0,
                ErrorKind::parameter, "slope fit needs positive samples");
        const double lx = std::log(xs[static_cast<std::size_t>(i)]);
        const double ly = std::log(ys[static_cast<std::size_t>(i)]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double denom = m * sxx - sx * sx;
    require(std::abs(denom) > 1e-14, ErrorKind::parameter, "slope fit abscissae are degenerate");
    return (m * sxy - sx * sy) / denom;
}

/// Measures how E sup|x1|^2 and E sup|x^eps - x* - x1|^2 shrink with the
/// spike width.  Each path is simulated, traced, varied and discarded in one
/// pass, so memory stays flat in the path count; sums are reduced in path
/// order, which keeps the result independent of the worker count.
inline OrderReport empirical_order_check(const ProblemSpec& spec, const ControlProcess& candidate,
                                         const Vec& v, double tau,
                                         const std::vector<double>& eps_schedule,
                                         const BrownianBundle& bundle, int threads = 1) {
    const TimeGrid& g = candidate.grid;
    require(!eps_schedule.empty(), ErrorKind::parameter, "empty spike-width schedule");
    const int E = static_cast<int>(eps_schedule.size());
    const int M = bundle.n_paths();
    const int N = g.n_steps;

    std::vector<SpikePlan> plans;
    std::vector<ControlProcess> spiked;
    plans.reserve(static_cast<std::size_t>(E));
    spiked.reserve(static_cast<std::size_t>(E));
    for (double eps : eps_schedule) {
        plans.push_back(make_spike_plan(g, spec.controls, v, tau, eps));
        spiked.push_back(spike_perturb(candidate, v, tau, eps));
    }

    std::vector<std::vector<double>> sup1(static_cast<std::size_t>(E)),
        supr(static_cast<std::size_t>(E));
    for (int e = 0; e < E; ++e) {
        sup1[static_cast<std::size_t>(e)].assign(static_cast<std::size_t>(M), 0.0);
        supr[static_cast<std::size_t>(e)].assign(static_cast<std::size_t>(M), 0.0);
    }

    parallel_for(M, threads, [&](int p) {
        const StatePath base = simulate_sdde_path(spec, candidate, bundle, p);
        const PathTrace trace = eval_coefficients_along(spec, base, candidate, false);
        for (int e = 0; e < E; ++e) {
            const auto se = static_cast<std::size_t>(e);
            const SpikeDeltas deltas =
                eval_spike_deltas(spec, g, trace, base, candidate, plans[se], false);
            const PathVariation var = solve_variations(spec, g, trace, deltas, bundle, p, false);
            const StatePath bumped = simulate_sdde_path(spec, spiked[se], bundle, p);
            double m1 = 0.0, mr = 0.0;
            for (int i = 0; i <= N; ++i) {
                const Vec& x1 = var.x1[static_cast<std::size_t>(i)];
                m1 = std::max(m1, x1.squaredNorm());
                mr = std::max(mr, (bumped.x(i) - base.x(i) - x1).squaredNorm());
            }
            sup1[se][static_cast<std::size_t>(p)] = m1;
            supr[se][static_cast<std::size_t>(p)] = mr;
        }
    });

    OrderReport rep;
    std::vector<double> m1(static_cast<std::size_t>(E)), mr(static_cast<std::size_t>(E));
    for (int e = 0; e < E; ++e) {
        const auto se = static_cast<std::size_t>(e);
        double a = 0.0, b = 0.0;
        for (int p = 0; p < M; ++p) {
            a += sup1[se][static_cast<std::size_t>(p)];
            b += supr[se][static_cast<std::size_t>(p)];
        }
        m1[se] = a / M;
        mr[se] = b / M;
        rep.samples.push_back({eps_schedule[se], m1[se], mr[se]});
    }
    rep.slope_first = fit_loglog_slope(eps_schedule, m1);
    rep.slope_remainder = fit_loglog_slope(eps_schedule, mr);
    return rep;
}

}  // namespace delaymp
