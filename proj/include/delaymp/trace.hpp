#pragma once

#include <vector>

#include "core.hpp"
#include "problem.hpp"
#include "state.hpp"

namespace delaymp {

/// Coefficient values and derivatives frozen along one trajectory/control
/// pair.  Node index runs over [0, N]; the control slots at node N reuse the
/// last control node, which only matters for display since the cost stops at
/// N-1 and the dynamics never read them.
struct PathTrace {
    int n = 0, m = 0, d = 0;
    bool with_second_order = false;

    std::vector<Vec> drift;                         // [i] n
    std::vector<Mat> diffusion;                     // [i] n x d
    std::vector<double> run_cost;                   // [i]
    std::vector<Mat> drift_jac;                     // [i] n x 3n
    std::vector<std::vector<Mat>> diffusion_jac;    // [i][j] n x 3n
    std::vector<Vec> run_cost_grad;                 // [i] 3n

    std::vector<std::vector<Mat>> drift_hess;       // [i][c] 3n x 3n
    std::vector<std::vector<std::vector<Mat>>> diffusion_hess;  // [i][j][c]
    std::vector<Mat> run_cost_hess;                 // [i] 3n x 3n

    double terminal = 0.0;
    Vec terminal_grad;   // 3n
    Mat terminal_hess;   // 3n x 3n

    Mat jac_b(int i) const { return drift_jac[static_cast<std::size_t>(i)]; }

    // Convenience block views of the packed [f_x | f_y | f_z] jacobians.
    Mat bx(int i) const { return drift_jac[i].middleCols(0, n); }
    Mat by(int i) const { return drift_jac[i].middleCols(n, n); }
    Mat bz(int i) const { return drift_jac[i].middleCols(2 * n, n); }
    Mat sx(int i, int j) const { return diffusion_jac[i][j].middleCols(0, n); }
    Mat sy(int i, int j) const { return diffusion_jac[i][j].middleCols(n, n); }
    Mat sz(int i, int j) const { return diffusion_jac[i][j].middleCols(2 * n, n); }
    Vec lx(int i) const { return run_cost_grad[i].segment(0, n); }
    Vec ly(int i) const { return run_cost_grad[i].segment(n, n); }
    Vec lz(int i) const { return run_cost_grad[i].segment(2 * n, n); }
    Vec hx() const { return terminal_grad.segment(0, n); }
    Vec hy() const { return terminal_grad.segment(n, n); }
    Vec hz() const { return terminal_grad.segment(2 * n, n); }
};

namespace detail {

inline Mat eval_hess(const std::function<Mat(const CoeffPoint&, int)>& f, const CoeffPoint& pt,
                     int c, int q3) {
    if (!f) return Mat::Zero(q3, q3);
    return f(pt, c);
}

}  // namespace detail

/// Evaluate every coefficient family along (path, control).  Second-order
/// data is filled only when `second_order` is set.
inline PathTrace eval_coefficients_along(const ProblemSpec& spec, const StatePath& path,
                                         const ControlProcess& ctrl, bool second_order) {
    const TimeGrid& g = path.grid;
    const int N = g.n_steps;
    const int n = spec.n, d = spec.d;
    const int q3 = 3 * n;
    PathTrace tr;
    tr.n = n;
    tr.m = spec.m;
    tr.d = d;
    tr.with_second_order = second_order;
    tr.drift.resize(N + 1);
    tr.diffusion.resize(N + 1);
    tr.run_cost.resize(N + 1);
    tr.drift_jac.resize(N + 1);
    tr.diffusion_jac.assign(N + 1, std::vector<Mat>(d));
    tr.run_cost_grad.resize(N + 1);
    if (second_order) {
        tr.drift_hess.assign(N + 1, std::vector<Mat>(n));
        tr.diffusion_hess.assign(N + 1, std::vector<std::vector<Mat>>(d, std::vector<Mat>(n)));
        tr.run_cost_hess.resize(N + 1);
    }
    const auto& C = spec.coeffs;
    for (int i = 0; i <= N; ++i) {
        CoeffPoint pt;
        pt.t = g.time(i);
        pt.x = path.x(i);
        pt.y = path.y(i);
        pt.z = path.z(i);
        const int iu = std::min(i, N - 1);
        pt.u = ctrl.u(iu);
        pt.mu = ctrl.mu(iu);
        tr.drift[i] = C.drift(pt);
        tr.diffusion[i] = C.diffusion(pt);
        tr.run_cost[i] = C.running_cost(pt);
        tr.drift_jac[i] = C.drift_jac(pt);
        for (int j = 0; j < d; ++j) tr.diffusion_jac[i][j] = C.diffusion_jac(pt, j);
        tr.run_cost_grad[i] = C.running_cost_grad(pt);
        if (second_order) {
            for (int c = 0; c < n; ++c) tr.drift_hess[i][c] = detail::eval_hess(C.drift_hess, pt, c, q3);
            for (int j = 0; j < d; ++j)
                for (int c = 0; c < n; ++c) {
                    if (C.diffusion_hess)
                        tr.diffusion_hess[i][j][c] = C.diffusion_hess(pt, j, c);
                    else
                        tr.diffusion_hess[i][j][c] = Mat::Zero(q3, q3);
                }
            tr.run_cost_hess[i] = C.running_cost_hess ? C.running_cost_hess(pt) : Mat::Zero(q3, q3);
        }
    }
    const Vec& xT = path.x(N);
    const Vec& yT = path.y(N);
    const Vec& zT = path.z(N);
    tr.terminal = C.terminal_cost(xT, yT, zT);
    tr.terminal_grad = C.terminal_cost_grad(xT, yT, zT);
    tr.terminal_hess =
        C.terminal_cost_hess ? C.terminal_cost_hess(xT, yT, zT) : Mat::Zero(q3, q3);
    return tr;
}

/// Maximum node-wise spread of derivative data across a batch of traces.
/// Near-zero spread certifies the deterministic-coefficient regime.
inline double trace_derivative_spread(const std::vector<PathTrace>& traces) {
    if (traces.size() < 2) return 0.0;
    double spread = 0.0;
    const PathTrace& a = traces.front();
    for (std::size_t p = 1; p < traces.size(); ++p) {
        const PathTrace& b = traces[p];
        for (std::size_t i = 0; i < a.drift_jac.size(); ++i) {
            spread = std::max(spread, (a.drift_jac[i] - b.drift_jac[i]).cwiseAbs().maxCoeff());
            spread = std::max(spread,
                              (a.run_cost_grad[i] - b.run_cost_grad[i]).cwiseAbs().maxCoeff());
            for (std::size_t j = 0; j < a.diffusion_jac[i].size(); ++j)
                spread = std::max(
                    spread, (a.diffusion_jac[i][j] - b.diffusion_jac[i][j]).cwiseAbs().maxCoeff());
            if (i < a.run_cost_hess.size())
                spread = std::max(spread,
                                  (a.run_cost_hess[i] - b.run_cost_hess[i]).cwiseAbs().maxCoeff());
            if (i < a.drift_hess.size())
                for (std::size_t c = 0; c < a.drift_hess[i].size(); ++c)
                    spread = std::max(
                        spread, (a.drift_hess[i][c] - b.drift_hess[i][c]).cwiseAbs().maxCoeff());
            if (i < a.diffusion_hess.size())
                for (std::size_t j = 0; j < a.diffusion_hess[i].size(); ++j)
                    for (std::size_t c = 0; c < a.diffusion_hess[i][j].size(); ++c)
                        spread = std::max(spread, (a.diffusion_hess[i][j][c] -
                                                   b.diffusion_hess[i][j][c])
                                                      .cwiseAbs()
                                                      .maxCoeff());
        }
        spread = std::max(spread, (a.terminal_grad - b.terminal_grad).cwiseAbs().maxCoeff());
        if (a.terminal_hess.size() > 0)
            spread = std::max(spread, (a.terminal_hess - b.terminal_hess).cwiseAbs().maxCoeff());
    }
    return spread;
}

}  // namespace delaymp
