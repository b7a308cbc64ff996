#pragma once

#include <vector>

#include "brownian.hpp"
#include "core.hpp"
#include "forward.hpp"
#include "parallel.hpp"
#include "problem.hpp"
#include "state.hpp"
#include "time_grid.hpp"
#include "trace.hpp"

namespace delaymp {

/// Grid-resolved spike perturbation: the candidate control is replaced by v
/// on nodes [start, start+len).  The delayed slot sees the spike k nodes
/// later, and the two windows never overlap because len < k.
struct SpikePlan {
    int start = 0;
    int len = 0;
    Vec v;

    bool covers(int node) const { return node >= start && node < start + len; }
    bool covers_delayed(int node, int k) const { return covers(node - k); }
};

inline SpikePlan make_spike_plan(const TimeGrid& g, const ControlSet& controls, const Vec& v,
                                 double tau, double eps) {
    require(v.size() == controls.dim(), ErrorKind::dimension,
            "spike value dimension does not match the control dimension");
    require(controls.contains(v), ErrorKind::parameter, "spike value is outside the control set");
    SpikePlan plan;
    plan.start = g.index_of(tau, "spike start");
    require(plan.start >= 0, ErrorKind::parameter, "spike start must be >= 0");
    const double len_real = eps / g.dt;
    plan.len = static_cast<int>(std::lround(len_real));
    require(std::abs(len_real - plan.len) <= 1e-9 * std::max(1.0, std::abs(len_real)),
            ErrorKind::alignment, "spike width is not a multiple of the step");
    require(plan.len >= 1, ErrorKind::parameter, "spike width must cover at least one step");
    require(plan.len < g.history_steps, ErrorKind::parameter,
            "spike width must be smaller than the delay");
    require(plan.start + plan.len <= g.n_steps, ErrorKind::parameter,
            "spike window must end by the horizon");
    plan.v = v;
    return plan;
}

/// Spike-induced coefficient differences along one base path, stored only on
/// the nodes where they are nonzero (the spike window and its delayed copy).
struct SpikeDeltas {
    std::vector<int> nodes;               // ascending
    std::vector<Vec> db;                  // drift difference, size n
    std::vector<double> dl;               // running-cost difference
    std::vector<Mat> dsig;                // n x d, column j = diffusion difference
    std::vector<std::vector<Mat>> djac;   // [idx][j]: n x 3n diffusion jacobian difference

    int find(int node) const {
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (nodes[i] == node) return static_cast<int>(i);
        return -1;
    }
};

/// Evaluates the coefficient differences between the spiked and the candidate
/// control along the candidate state path.  `jacobians` additionally stores
/// the diffusion-jacobian differences needed by the second variation.
inline SpikeDeltas eval_spike_deltas(const ProblemSpec& spec, const TimeGrid& g,
                                     const PathTrace& trace, const StatePath& base,
                                     const ControlProcess& ctrl, const SpikePlan& plan,
                                     bool jacobians) {
    const int k = g.history_steps, N = g.n_steps, d = spec.d;
    SpikeDeltas out;
    for (int i = 0; i < N; ++i) {
        const bool live = plan.covers(i);
        const bool delayed = plan.covers_delayed(i, k);
        if (!live && !delayed) continue;
        CoeffPoint pt;
        pt.t = g.time(i);
        pt.x = base.x(i);
        pt.y = base.y(i);
        pt.z = base.z(i);
        pt.u = live ? plan.v : ctrl.u(i);
        pt.mu = delayed ? plan.v : ctrl.mu(i);
        out.nodes.push_back(i);
        out.db.push_back(spec.coeffs.drift(pt) - trace.drift[static_cast<std::size_t>(i)]);
        out.dl.push_back(spec.coeffs.running_cost(pt) - trace.run_cost[static_cast<std::size_t>(i)]);
        out.dsig.push_back(spec.coeffs.diffusion(pt) - trace.diffusion[static_cast<std::size_t>(i)]);
        if (jacobians) {
            std::vector<Mat> dj(static_cast<std::size_t>(d));
            for (int j = 0; j < d; ++j)
                dj[static_cast<std::size_t>(j)] =
                    spec.coeffs.diffusion_jac(pt, j) -
                    trace.diffusion_jac[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            out.djac.push_back(std::move(dj));
        }
    }
    return out;
}

/// First and (optionally) second variation of the state along one path,
/// with the pointwise-delay and sliding-average companions cached per node.
/// All six arrays are indexed by node 0..N; the variations vanish on the
/// history interval, so y1(i) is simply x1(i-k) clamped to zero.
struct PathVariation {
    std::vector<Vec> x1, y1, z1;
    std::vector<Vec> x2, y2, z2;

    Vec stacked1(int i) const {
        Vec out(3 * x1[static_cast<std::size_t>(i)].size());
        out << x1[static_cast<std::size_t>(i)], y1[static_cast<std::size_t>(i)],
            z1[static_cast<std::size_t>(i)];
        return out;
    }
    Vec stacked2(int i) const {
        Vec out(3 * x2[static_cast<std::size_t>(i)].size());
        out << x2[static_cast<std::size_t>(i)], y2[static_cast<std::size_t>(i)],
            z2[static_cast<std::size_t>(i)];
        return out;
    }
};

/// Euler sweep of the first (and second) variational dynamics on one path.
/// The first variation picks up the drift/diffusion differences on the spike
/// nodes; the second variation carries the quadratic terms in both parts and
/// the diffusion-jacobian differences in the martingale part only.
inline PathVariation solve_variations(const ProblemSpec& spec, const TimeGrid& g,
                                      const PathTrace& trace, const SpikeDeltas& deltas,
                                      const BrownianBundle& bundle, int path,
                                      bool second_order) {
    const int n = spec.n, d = spec.d, N = g.n_steps, k = g.history_steps;
    const double lambda = spec.delay.lambda;
    PathVariation var;
    var.x1.assign(static_cast<std::size_t>(N) + 1, Vec::Zero(n));
    var.y1.assign(static_cast<std::size_t>(N) + 1, Vec::Zero(n));
    var.z1.assign(static_cast<std::size_t>(N) + 1, Vec::Zero(n));
    if (second_order) {
        require(!trace.run_cost_hess.empty(), ErrorKind::parameter,
                "second variation requires a trace with second-order data");
        var.x2.assign(static_cast<std::size_t>(N) + 1, Vec::Zero(n));
        var.y2.assign(static_cast<std::size_t>(N) + 1, Vec::Zero(n));
        var.z2.assign(static_cast<std::size_t>(N) + 1, Vec::Zero(n));
    }
    SlidingIntegral z1int(g, lambda), z2int(g, lambda);
    auto x1_at = [&](int node) {
        return node <= 0 ? Vec(Vec::Zero(n)) : var.x1[static_cast<std::size_t>(node)];
    };
    auto x2_at = [&](int node) {
        return node <= 0 ? Vec(Vec::Zero(n)) : var.x2[static_cast<std::size_t>(node)];
    };
    z1int.reset(x1_at, 0);
    if (second_order) z2int.reset(x2_at, 0);

    for (int i = 0; i < N; ++i) {
        const auto su = static_cast<std::size_t>(i);
        const Mat& Jb = trace.drift_jac[su];
        Vec X1 = var.stacked1(i);
        const int di = deltas.find(i);

        Vec next1 = var.x1[su] + g.dt * (Jb * X1);
        if (di >= 0) next1 += g.dt * deltas.db[static_cast<std::size_t>(di)];
        Vec next2;
        if (second_order) {
            Vec X2 = var.stacked2(i);
            next2 = var.x2[su] + g.dt * (Jb * X2);
            for (int c = 0; c < n; ++c)
                next2[c] += 0.5 * g.dt * X1.dot(trace.drift_hess[su][static_cast<std::size_t>(c)] * X1);
        }
        for (int j = 0; j < d; ++j) {
            const double dw = bundle.increment(path, i, j);
            const Mat& Js = trace.diffusion_jac[su][static_cast<std::size_t>(j)];
            next1 += dw * (Js * X1);
            if (di >= 0) next1 += dw * deltas.dsig[static_cast<std::size_t>(di)].col(j);
            if (second_order) {
                Vec X2 = var.stacked2(i);
                next2 += dw * (Js * X2);
                for (int c = 0; c < n; ++c)
                    next2[c] += 0.5 * dw *
                                X1.dot(trace.diffusion_hess[su][static_cast<std::size_t>(j)]
                                                            [static_cast<std::size_t>(c)] *
                                       X1);
                if (di >= 0)
                    next2 += dw * (deltas.djac[static_cast<std::size_t>(di)]
                                              [static_cast<std::size_t>(j)] *
                                   X1);
            }
        }
        const auto nu = static_cast<std::size_t>(i + 1);
        var.x1[nu] = next1;
        var.y1[nu] = x1_at(i + 1 - k);
        z1int.advance(x1_at(i + 1 - k), var.x1[nu]);
        var.z1[nu] = z1int.value();
        if (second_order) {
            var.x2[nu] = next2;
            var.y2[nu] = x2_at(i + 1 - k);
            z2int.advance(x2_at(i + 1 - k), var.x2[nu]);
            var.z2[nu] = z2int.value();
        }
    }
    return var;
}

/// Everything the spike-expansion and duality pipelines need, path by path:
/// the candidate batch, its coefficient traces, the per-path spike
/// differences and the solved variations.
struct VariationBatch {
    const BrownianBundle* bundle = nullptr;
    TimeGrid grid;
    SpikePlan plan;
    StateBatch base;
    std::vector<PathTrace> traces;
    std::vector<SpikeDeltas> deltas;
    std::vector<PathVariation> vars;
};

inline VariationBatch simulate_variations(const ProblemSpec& spec, const ControlProcess& ctrl,
                                          const SpikePlan& plan, const BrownianBundle& bundle,
                                          int threads = 1, bool second_order = true) {
    VariationBatch out;
    out.grid = bundle.grid();
    out.plan = plan;
    out.base = simulate_sdde(spec, ctrl, bundle, threads);
    const int paths = bundle.n_paths();
    out.traces.resize(static_cast<std::size_t>(paths));
    out.deltas.resize(static_cast<std::size_t>(paths));
    out.vars.resize(static_cast<std::size_t>(paths));
    out.bundle = &bundle;
    parallel_for(paths, threads, [&](int p) {
        const auto sp = static_cast<std::size_t>(p);
        out.traces[sp] =
            eval_coefficients_along(spec, out.base.paths[sp], ctrl, second_order);
        out.deltas[sp] = eval_spike_deltas(spec, out.grid, out.traces[sp], out.base.paths[sp],
                                           ctrl, plan, second_order);
        out.vars[sp] = solve_variations(spec, out.grid, out.traces[sp], out.deltas[sp], bundle,
                                        p, second_order);
    });
    return out;
}

}  // namespace delaymp
