#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/QR>

#include "brownian.hpp"
#include "core.hpp"
#include "forward.hpp"
#include "problem.hpp"
#include "state.hpp"
#include "time_grid.hpp"
#include "trace.hpp"

namespace delaymp {

/// First-order adjoint pair on the grid, deterministic mode: both martingale
/// kernels vanish, so p and the sliding-average companion are plain arrays.
struct FirstOrderAdjoint {
    TimeGrid grid;
    std::vector<Vec> p;        // nodes 0..N
    std::vector<Vec> ptilde;   // nodes 0..N
    bool deterministic = true;
};

namespace detail {

inline void require_deterministic_trace(const std::vector<PathTrace>& traces) {
    require(!traces.empty(), ErrorKind::parameter, "at least one coefficient trace is required");
    const double spread = trace_derivative_spread(traces);
    require(spread <= 1e-10, ErrorKind::mode,
            "deterministic mode requires path-independent coefficient derivatives");
}

}  // namespace detail

/// Coupled backward sweep of the anticipated-BSDE system: the companion
/// process (terminal h_z) and p (terminal h_x) advance together, the
/// generator is evaluated at the later node, the pointwise-delay branch adds
/// the anticipated bracket read k nodes ahead, and h_y enters as a jump when
/// the sweep crosses T - delta.  Unrolling the recursion reproduces the
/// integral representation of p exactly, including the closed-bracket
/// quadrature of the anticipated integral.
inline FirstOrderAdjoint solve_first_adjoint(const ProblemSpec& spec, const TimeGrid& g,
                                             const std::vector<PathTrace>& traces) {
    detail::require_deterministic_trace(traces);
    const PathTrace& tr = traces.front();
    const int N = g.n_steps, k = g.history_steps, n = spec.n;
    const double lambda = spec.delay.lambda;
    const double decay = std::exp(-lambda * g.delta);
    FirstOrderAdjoint out;
    out.grid = g;
    out.p.assign(static_cast<std::size_t>(N) + 1, Vec::Zero(n));
    out.ptilde.assign(static_cast<std::size_t>(N) + 1, Vec::Zero(n));
    out.p[static_cast<std::size_t>(N)] = tr.hx();
    out.ptilde[static_cast<std::size_t>(N)] = tr.hz();
    for (int l = N; l >= 1; --l) {
        const auto sl = static_cast<std::size_t>(l);
        const Vec& pl = out.p[sl];
        const Vec& ptl = out.ptilde[sl];
        // q == 0 in this mode, so the sigma^T q terms drop from both drivers.
        Vec drv_pt = tr.bz(l).transpose() * pl + tr.lz(l) - lambda * ptl;
        Vec drv_p = tr.bx(l).transpose() * pl + tr.lx(l) + ptl;
        if (l <= N - k) {
            const int a = l + k;
            drv_p += tr.by(a).transpose() * out.p[static_cast<std::size_t>(a)] + tr.ly(a) -
                     decay * out.ptilde[static_cast<std::size_t>(a)];
        }
        out.ptilde[sl - 1] = ptl + g.dt * drv_pt;
        out.p[sl - 1] = pl + g.dt * drv_p;
        if (l == N - k) out.p[sl - 1] += tr.hy();
    }
    return out;
}

/// Unified backward-SVIE route for p: terminal gradients enter through
/// explicit prefactors -- h_y gated strictly before T - delta, h_z weighted
/// by (1/lambda)(1 - exp(lambda((-delta) v (t-T)))) -- and the sliding
/// channel contributes through an inner exponentially weighted integral of
/// the z-slope terms over [0, delta ^ (T-s)].  The lambda = 0 limit of the
/// h_z weight, delta ^ (T-t), is a mandatory branch.
inline std::vector<Vec> solve_first_adjoint_svie(const ProblemSpec& spec, const TimeGrid& g,
                                                 const std::vector<PathTrace>& traces) {
    detail::require_deterministic_trace(traces);
    const PathTrace& tr = traces.front();
    const int N = g.n_steps, k = g.history_steps, n = spec.n;
    const double lambda = spec.delay.lambda, T = g.horizon, delta = g.delta;
    const Vec hx = tr.hx(), hy = tr.hy(), hz = tr.hz();
    auto hz_weight = [&](double t) {
        if (lambda == 0.0) return std::min(delta, T - t);
        return (1.0 - std::exp(lambda * std::max(-delta, t - T))) / lambda;
    };
    std::vector<Vec> p(static_cast<std::size_t>(N) + 1, Vec::Zero(n));
    p[static_cast<std::size_t>(N)] = hx;  // both prefactors and the integral vanish at T
    // Inner integral at node l: left-endpoint quadrature over theta = 0, dt,
    // ..., covering delta ^ (T - t_l); consumes p at nodes >= l only.
    auto inner = [&](int l) {
        const int cells = std::min(k, N - l);
        Vec acc = Vec::Zero(n);
        for (int m = 0; m < cells; ++m) {
            const int node = l + m;
            acc += std::exp(-lambda * m * g.dt) *
                   (tr.bz(node).transpose() * p[static_cast<std::size_t>(node)] + tr.lz(node));
        }
        return Vec(g.dt * acc);
    };
    Vec run = Vec::Zero(n);
    for (int i = N - 1; i >= 0; --i) {
        const int l = i + 1;
        Vec term = tr.bx(l).transpose() * p[static_cast<std::size_t>(l)] + tr.lx(l) + inner(l);
        if (l <= N - k) {
            const int a = l + k;
            term += tr.by(a).transpose() * p[static_cast<std::size_t>(a)] + tr.ly(a);
        }
        run += g.dt * term;
        p[static_cast<std::size_t>(i)] = hx + hz_weight(g.time(i)) * hz + run;
        if (i < N - k) p[static_cast<std::size_t>(i)] += hy;
    }
    return p;
}

/// --- Regression mode -------------------------------------------------------

struct RegressionOptions {
    int basis_degree = 2;  // polynomial degree over the stacked (x, y, z) state
};

/// Least-squares conditional-expectation operator at one node: polynomial
/// features of the stacked state, near-constant columns dropped, remaining
/// collinearity reported as a basis error.
class NodeRegression {
  public:
    NodeRegression(const Mat& state, int degree) {
        const int paths = static_cast<int>(state.rows());
        const int vars = static_cast<int>(state.cols());
        require(degree == 1 || degree == 2, ErrorKind::basis,
                "regression basis degree must be 1 or 2");
        Mat raw(paths, n_raw_features(vars, degree));
        int c = 0;
        for (int v = 0; v < vars; ++v) raw.col(c++) = state.col(v);
        if (degree == 2)
            for (int v = 0; v < vars; ++v)
                for (int w = v; w < vars; ++w)
                    raw.col(c++) = state.col(v).cwiseProduct(state.col(w));
        // Standardize and keep only columns that actually vary across paths;
        // at nodes where the state is nonrandom everything collapses to the
        // constant feature and the fit is a plain cross-sectional mean.
        std::vector<int> keep;
        Mat design(paths, raw.cols() + 1);
        design.col(0).setOnes();
        for (int v = 0; v < raw.cols(); ++v) {
            const double mean = raw.col(v).mean();
            const double sd = std::sqrt((raw.col(v).array() - mean).square().sum() /
                                        std::max(1, paths - 1));
            if (sd > 1e-12 * (1.0 + std::abs(mean))) {
                design.col(static_cast<int>(keep.size()) + 1) = (raw.col(v).array() - mean) / sd;
                keep.push_back(v);
            }
        }
        const int cols = static_cast<int>(keep.size()) + 1;
        require(10 * cols <= paths, ErrorKind::basis,
                "regression feature count exceeds one tenth of the path count");
        design_ = design.leftCols(cols);
        qr_.compute(design_);
        require(qr_.rank() == cols, ErrorKind::basis,
                "regression design matrix is rank deficient");
    }

    /// Fitted conditional expectation per path for each target column.
    Mat fit(const Mat& targets) const { return design_ * qr_.solve(targets); }

    int features() const { return static_cast<int>(design_.cols()); }

  private:
    static int n_raw_features(int vars, int degree) {
        return degree == 1 ? vars : vars + vars * (vars + 1) / 2;
    }
    Mat design_;
    Eigen::ColPivHouseholderQR<Mat> qr_;
};

/// Regression-mode output: per-path fitted trajectories plus the node-0
/// statistics used by sanity checks (at node 0 the estimator is the plain
/// mean, so the standard error is sd/sqrt(M)).
struct FirstOrderAdjointRegression {
    TimeGrid grid;
    std::vector<std::vector<Vec>> p_vals;     // [path][node 0..N]
    std::vector<std::vector<Vec>> pt_vals;    // [path][node 0..N]
    std::vector<std::vector<Mat>> q_vals;     // [path][node 0..N-1], n x d
    Vec p0, p0_se;
    int max_features = 0;
};

namespace detail {

struct NodeJacobians {
    Mat bj;               // n x 3n
    std::vector<Mat> sj;  // per noise column, n x 3n
    Vec lg;               // 3n
};

inline NodeJacobians eval_jacobians(const ProblemSpec& spec, const StatePath& path,
                                    const ControlProcess& ctrl, int node, int n_steps) {
    CoeffPoint pt;
    pt.t = path.grid.time(node);
    pt.x = path.x(node);
    pt.y = path.y(node);
    pt.z = path.z(node);
    const int iu = std::min(node, n_steps - 1);
    pt.u = ctrl.u(iu);
    pt.mu = ctrl.mu(iu);
    NodeJacobians out;
    out.bj = spec.coeffs.drift_jac(pt);
    out.sj.resize(static_cast<std::size_t>(spec.d));
    for (int j = 0; j < spec.d; ++j) out.sj[static_cast<std::size_t>(j)] = spec.coeffs.diffusion_jac(pt, j);
    out.lg = spec.coeffs.running_cost_grad(pt);
    return out;
}

}  // namespace detail

/// Least-squares Monte Carlo sweep of the same system.  Conditional
/// expectations (including the anticipated bracket, via the tower property)
/// are estimated by regressing raw one-step targets on the state basis; the
/// martingale kernel q is recovered by regressing p(t+dt) dW / dt.
inline FirstOrderAdjointRegression solve_first_adjoint_regression(
    const ProblemSpec& spec, const StateBatch& batch, const ControlProcess& ctrl,
    const RegressionOptions& opts = {}) {
    require(batch.bundle != nullptr, ErrorKind::bundle_identity, "state batch has no bundle");
    const BrownianBundle& bundle = *batch.bundle;
    const TimeGrid g = bundle.grid();
    const int N = g.n_steps, k = g.history_steps, n = spec.n, d = spec.d;
    const int M = static_cast<int>(batch.paths.size());
    const double lambda = spec.delay.lambda;
    const double decay = std::exp(-lambda * g.delta);

    FirstOrderAdjointRegression out;
    out.grid = g;
    out.p_vals.assign(static_cast<std::size_t>(M),
                      std::vector<Vec>(static_cast<std::size_t>(N) + 1, Vec::Zero(n)));
    out.pt_vals = out.p_vals;
    out.q_vals.assign(static_cast<std::size_t>(M),
                      std::vector<Mat>(static_cast<std::size_t>(N), Mat::Zero(n, d)));

    // Terminal values are per-path gradients of the terminal cost.
    std::vector<Vec> hy_term(static_cast<std::size_t>(M));
    for (int pth = 0; pth < M; ++pth) {
        const StatePath& sp = batch.paths[static_cast<std::size_t>(pth)];
        const Vec grad = spec.coeffs.terminal_cost_grad(sp.x(N), sp.y(N), sp.z(N));
        out.p_vals[static_cast<std::size_t>(pth)][static_cast<std::size_t>(N)] = grad.head(n);
        out.pt_vals[static_cast<std::size_t>(pth)][static_cast<std::size_t>(N)] = grad.tail(n);
        hy_term[static_cast<std::size_t>(pth)] = grad.segment(n, n);
    }

    // Cached per-path jacobians at the working node; refreshed as the sweep
    // moves so each node is evaluated once.
    std::vector<std::vector<detail::NodeJacobians>> jac(static_cast<std::size_t>(N) + 1);
    for (int node = 0; node <= N; ++node) {
        jac[static_cast<std::size_t>(node)].reserve(static_cast<std::size_t>(M));
        for (int pth = 0; pth < M; ++pth)
            jac[static_cast<std::size_t>(node)].push_back(detail::eval_jacobians(
                spec, batch.paths[static_cast<std::size_t>(pth)], ctrl, node, N));
    }

    auto state_matrix = [&](int node) {
        Mat s(M, 3 * n);
        for (int pth = 0; pth < M; ++pth) {
            const StatePath& sp = batch.paths[static_cast<std::size_t>(pth)];
            s.row(pth).segment(0, n) = sp.x(node).transpose();
            s.row(pth).segment(n, n) = sp.y(node).transpose();
            s.row(pth).segment(2 * n, n) = sp.z(node).transpose();
        }
        return s;
    };

    for (int l = N; l >= 1; --l) {
        const NodeRegression reg(state_matrix(l - 1), opts.basis_degree);
        out.max_features = std::max(out.max_features, reg.features());

        // Martingale kernel at node l-1 from the increment over [l-1, l).
        {
            Mat targets(M, n * d);
            for (int pth = 0; pth < M; ++pth)
                for (int j = 0; j < d; ++j)
                    targets.row(pth).segment(j * n, n) =
                        (out.p_vals[static_cast<std::size_t>(pth)][static_cast<std::size_t>(l)] *
                         (bundle.increment(pth, l - 1, j) / g.dt))
                            .transpose();
            const Mat fitted = reg.fit(targets);
            for (int pth = 0; pth < M; ++pth)
                for (int j = 0; j < d; ++j)
                    out.q_vals[static_cast<std::size_t>(pth)][static_cast<std::size_t>(l - 1)]
                        .col(j) = fitted.row(pth).segment(j * n, n).transpose();
        }

        Mat targets(M, 2 * n);
        for (int pth = 0; pth < M; ++pth) {
            const auto sp = static_cast<std::size_t>(pth);
            const auto sl = static_cast<std::size_t>(l);
            const detail::NodeJacobians& J = jac[sl][sp];
            const Vec& pl = out.p_vals[sp][sl];
            const Vec& ptl = out.pt_vals[sp][sl];
            Vec sq_x = Vec::Zero(n), sq_z = Vec::Zero(n);
            if (l < N) {
                const Mat& ql = out.q_vals[sp][sl];
                for (int j = 0; j < d; ++j) {
                    sq_x += J.sj[static_cast<std::size_t>(j)].middleCols(0, n).transpose() * ql.col(j);
                    sq_z += J.sj[static_cast<std::size_t>(j)].middleCols(2 * n, n).transpose() * ql.col(j);
                }
            }
            Vec drv_pt = J.bj.middleCols(2 * n, n).transpose() * pl + sq_z + J.lg.segment(2 * n, n) -
                         lambda * ptl;
            Vec drv_p = J.bj.middleCols(0, n).transpose() * pl + sq_x + J.lg.head(n) + ptl;
            if (l <= N - k) {
                const int a = l + k;
                const auto sa = static_cast<std::size_t>(a);
                const detail::NodeJacobians& Ja = jac[sa][sp];
                Vec sq_y = Vec::Zero(n);
                if (a < N) {
                    const Mat& qa = out.q_vals[sp][sa];
                    for (int j = 0; j < d; ++j)
                        sq_y += Ja.sj[static_cast<std::size_t>(j)].middleCols(n, n).transpose() *
                                qa.col(j);
                }
                drv_p += Ja.bj.middleCols(n, n).transpose() * out.p_vals[sp][sa] + sq_y +
                         Ja.lg.segment(n, n) - decay * out.pt_vals[sp][sa];
            }
            Vec tp = pl + g.dt * drv_p;
            if (l == N - k) tp += hy_term[sp];
            targets.row(pth).head(n) = tp.transpose();
            targets.row(pth).tail(n) = (ptl + g.dt * drv_pt).transpose();
        }
        const Mat fitted = reg.fit(targets);
        for (int pth = 0; pth < M; ++pth) {
            out.p_vals[static_cast<std::size_t>(pth)][static_cast<std::size_t>(l - 1)] =
                fitted.row(pth).head(n).transpose();
            out.pt_vals[static_cast<std::size_t>(pth)][static_cast<std::size_t>(l - 1)] =
                fitted.row(pth).tail(n).transpose();
        }
        if (l == 1) {
            out.p0 = Vec::Zero(n);
            out.p0_se = Vec::Zero(n);
            for (int c = 0; c < n; ++c) {
                const double mean = targets.col(c).mean();
                const double sd = std::sqrt((targets.col(c).array() - mean).square().sum() /
                                            std::max(1, M - 1));
                out.p0[c] = mean;
                out.p0_se[c] = sd / std::sqrt(static_cast<double>(M));
            }
        }
    }
    return out;
}

}  // namespace delaymp
