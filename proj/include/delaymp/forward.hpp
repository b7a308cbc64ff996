#pragma once

#include <cmath>
#include <vector>

#include "brownian.hpp"
#include "core.hpp"
#include "parallel.hpp"
#include "problem.hpp"
#include "state.hpp"

namespace delaymp {

/// Path batch produced by one forward sweep; keeps the identity of the
/// driving bundle so downstream common-random-number consumers can verify
/// they share noise.
struct StateBatch {
    const BrownianBundle* bundle = nullptr;
    std::vector<StatePath> paths;
};

/// Euler-Maruyama with left-endpoint coefficients on one path:
///   x_{i+1} = x_i + b(t_i, x_i, y_i, z_i, u_i, mu_i) dt + sum_j sigma^j(...) dW^j_i.
/// y is the pointwise delay, z the sliding integral (trapezoid), both cached.
inline StatePath simulate_sdde_path(const ProblemSpec& spec, const ControlProcess& ctrl,
                                    const BrownianBundle& bundle, int p) {
    const TimeGrid& g = bundle.grid();
    const int N = g.n_steps, k = g.history_steps;
    StatePath path;
    path.grid = g;
    path.values.resize(static_cast<std::size_t>(k + N + 1));
    path.y_cache.resize(static_cast<std::size_t>(N + 1));
    path.z_cache.resize(static_cast<std::size_t>(N + 1));
    for (int i = -k; i <= 0; ++i) {
        Vec xi = spec.initial.state_history(g.time(i));
        require(static_cast<int>(xi.size()) == spec.n, ErrorKind::dimension,
                "state history returned wrong dimension");
        path.values[static_cast<std::size_t>(i + k)] = std::move(xi);
    }
    SlidingIntegral z(g, spec.delay.lambda);
    z.reset([&](int i) -> const Vec& { return path.x(i); }, 0);
    for (int i = 0; i <= N; ++i) {
        path.y_cache[i] = path.x(i - k);
        path.z_cache[i] = z.value();
        if (i == N) break;
        CoeffPoint pt;
        pt.t = g.time(i);
        pt.x = path.x(i);
        pt.y = path.y_cache[i];
        pt.z = path.z_cache[i];
        pt.u = ctrl.u(i);
        pt.mu = ctrl.mu(i);
        Vec next = pt.x + g.dt * spec.coeffs.drift(pt);
        const Mat sig = spec.coeffs.diffusion(pt);
        require(sig.rows() == spec.n && sig.cols() == spec.d, ErrorKind::dimension,
                "diffusion returned wrong shape");
        for (int j = 0; j < spec.d; ++j) next += bundle.increment(p, i, j) * sig.col(j);
        for (int c = 0; c < spec.n; ++c)
            require(std::isfinite(next[c]), ErrorKind::diverged,
                    "state became non-finite at node " + std::to_string(i + 1) + " of path " +
                        std::to_string(p));
        path.values[static_cast<std::size_t>(i + 1 + k)] = next;
        z.advance(path.x(i + 1 - k), path.x(i + 1));
    }
    return path;
}

inline StateBatch simulate_sdde(const ProblemSpec& spec, const ControlProcess& ctrl,
                                const BrownianBundle& bundle, int threads = 1) {
    const TimeGrid& g = bundle.grid();
    require(ctrl.grid.n_steps == g.n_steps && std::abs(ctrl.grid.dt - g.dt) < 1e-15,
            ErrorKind::alignment, "control grid does not match the bundle grid");
    require(bundle.n_noise() == spec.d, ErrorKind::dimension,
            "bundle noise dimension does not match the problem");
    StateBatch out;
    out.bundle = &bundle;
    out.paths.resize(static_cast<std::size_t>(bundle.n_paths()));
    parallel_for(bundle.n_paths(), threads, [&](int p) {
        out.paths[static_cast<std::size_t>(p)] = simulate_sdde_path(spec, ctrl, bundle, p);
    });
    return out;
}

struct CostEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;               // sample std / sqrt(M); 0 for M = 1
    std::vector<double> per_path;       // pathwise cost values
};

/// Monte Carlo cost: left-endpoint running-cost quadrature plus terminal
/// cost, averaged over the batch in path order.
inline CostEstimate evaluate_cost(const ProblemSpec& spec, const StateBatch& batch,
                                  const ControlProcess& ctrl, int threads = 1) {
    const int M = static_cast<int>(batch.paths.size());
    require(M >= 1, ErrorKind::parameter, "empty batch");
    const TimeGrid& g = batch.paths.front().grid;
    CostEstimate est;
    est.per_path.assign(static_cast<std::size_t>(M), 0.0);
    parallel_for(M, threads, [&](int p) {
        const StatePath& path = batch.paths[static_cast<std::size_t>(p)];
        double acc = 0.0;
        for (int i = 0; i < g.n_steps; ++i) {
            CoeffPoint pt;
            pt.t = g.time(i);
            pt.x = path.x(i);
            pt.y = path.y(i);
            pt.z = path.z(i);
            pt.u = ctrl.u(i);
            pt.mu = ctrl.mu(i);
            acc += g.dt * spec.coeffs.running_cost(pt);
        }
        acc += spec.coeffs.terminal_cost(path.x(g.n_steps), path.y(g.n_steps), path.z(g.n_steps));
        est.per_path[static_cast<std::size_t>(p)] = acc;
    });
    double sum = 0.0;
    for (double c : est.per_path) sum += c;
    est.mean = sum / M;
    if (M >= 2) {
        double ss = 0.0;
        for (double c : est.per_path) ss += (c - est.mean) * (c - est.mean);
        est.stderr_ = std::sqrt(ss / (M - 1)) / std::sqrt(static_cast<double>(M));
    }
    return est;
}

/// Paired cost difference J(a) - J(b) over batches driven by the same noise.
/// The difference is formed node by node before summing, so nodes where both
/// integrands coincide contribute exactly zero and common-random-number
/// variance cancellation happens at full floating-point precision.
inline CostEstimate evaluate_cost_difference(const ProblemSpec& spec, const StateBatch& batch_a,
                                             const ControlProcess& ctrl_a,
                                             const StateBatch& batch_b,
                                             const ControlProcess& ctrl_b, int threads = 1) {
    const int M = static_cast<int>(batch_a.paths.size());
    require(M >= 1, ErrorKind::parameter, "empty batch");
    require(static_cast<int>(batch_b.paths.size()) == M, ErrorKind::parameter,
            "paired batches must have equal path counts");
    require(batch_a.bundle == batch_b.bundle, ErrorKind::bundle_identity,
            "paired batches must share one noise bundle");
    const TimeGrid& g = batch_a.paths.front().grid;
    CostEstimate est;
    est.per_path.assign(static_cast<std::size_t>(M), 0.0);
    parallel_for(M, threads, [&](int p) {
        const StatePath& pa = batch_a.paths[static_cast<std::size_t>(p)];
        const StatePath& pb = batch_b.paths[static_cast<std::size_t>(p)];
        double acc = 0.0;
        for (int i = 0; i < g.n_steps; ++i) {
            CoeffPoint qa, qb;
            qa.t = qb.t = g.time(i);
            qa.x = pa.x(i); qa.y = pa.y(i); qa.z = pa.z(i);
            qa.u = ctrl_a.u(i); qa.mu = ctrl_a.mu(i);
            qb.x = pb.x(i); qb.y = pb.y(i); qb.z = pb.z(i);
            qb.u = ctrl_b.u(i); qb.mu = ctrl_b.mu(i);
            acc += g.dt * (spec.coeffs.running_cost(qa) - spec.coeffs.running_cost(qb));
        }
        const int N = g.n_steps;
        acc += spec.coeffs.terminal_cost(pa.x(N), pa.y(N), pa.z(N)) -
               spec.coeffs.terminal_cost(pb.x(N), pb.y(N), pb.z(N));
        est.per_path[static_cast<std::size_t>(p)] = acc;
    });
    double sum = 0.0;
    for (double c : est.per_path) sum += c;
    est.mean = sum / M;
    if (M >= 2) {
        double ss = 0.0;
        for (double c : est.per_path) ss += (c - est.mean) * (c - est.mean);
        est.stderr_ = std::sqrt(ss / (M - 1)) / std::sqrt(static_cast<double>(M));
    }
    return est;
}

}  // namespace delaymp
