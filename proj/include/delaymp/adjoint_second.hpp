#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "adjoint_first.hpp"
#include "core.hpp"
#include "problem.hpp"
#include "time_grid.hpp"
#include "trace.hpp"

namespace delaymp {

/// n x n sub-block (i, l) of a stacked 3n x 3n kernel, i, l in {0, 1, 2}
/// indexing the state / pointwise-delay / sliding-average directions.
inline Mat kernel_block(const Mat& M, int i, int l, int n) {
    return M.block(i * n, l * n, n, n);
}

namespace detail {

// n x 3n row band i of a stacked kernel.
inline Mat kernel_rows(const Mat& M, int i, int n) { return M.middleRows(i * n, n); }

// Spread of the second-order coefficient data only: jacobians and Hessians.
// First-order cost gradients may be random (they never enter the curvature
// sweep), so they are deliberately not inspected here.
inline double curvature_trace_spread(const std::vector<PathTrace>& traces) {
    if (traces.size() < 2) return 0.0;
    double spread = 0.0;
    const PathTrace& a = traces.front();
    for (std::size_t p = 1; p < traces.size(); ++p) {
        const PathTrace& b = traces[p];
        for (std::size_t i = 0; i < a.drift_jac.size(); ++i) {
            spread = std::max(spread, (a.drift_jac[i] - b.drift_jac[i]).cwiseAbs().maxCoeff());
            for (std::size_t j = 0; j < a.diffusion_jac[i].size(); ++j)
                spread = std::max(
                    spread, (a.diffusion_jac[i][j] - b.diffusion_jac[i][j]).cwiseAbs().maxCoeff());
            spread = std::max(spread,
                              (a.run_cost_hess[i] - b.run_cost_hess[i]).cwiseAbs().maxCoeff());
            for (std::size_t c = 0; c < a.drift_hess[i].size(); ++c)
                spread = std::max(spread,
                                  (a.drift_hess[i][c] - b.drift_hess[i][c]).cwiseAbs().maxCoeff());
            for (std::size_t j = 0; j < a.diffusion_hess[i].size(); ++j)
                for (std::size_t c = 0; c < a.diffusion_hess[i][j].size(); ++c)
                    spread = std::max(spread, (a.diffusion_hess[i][j][c] -
                                               b.diffusion_hess[i][j][c]).cwiseAbs().maxCoeff());
        }
        spread = std::max(spread, (a.terminal_hess - b.terminal_hess).cwiseAbs().maxCoeff());
    }
    return spread;
}

}  // namespace detail

/// Curvature kernel stack on the grid, deterministic-coefficient mode: the
/// terminal kernel is the constant terminal Hessian, the martingale kernels
/// all vanish, and the remaining three families obey backward Volterra
/// recursions with the sliding-decay column map [I; -e^{-lambda*delta} I;
/// -lambda I] acting on their closing terms.  The two-time family is stored
/// as the upper triangle theta >= r only; reads below the diagonal go
/// through the transpose rule.
struct SecondOrderKernels {
    TimeGrid grid;
    int n = 0;
    Mat P1;                 // 3n x 3n, constant: the terminal Hessian
    std::vector<Mat> P2;    // [r] 3n x 3n
    std::vector<Mat> P3;    // [r] 3n x 3n, symmetric
    std::vector<Mat> P4;    // packed triangle, theta >= r

    std::size_t tri_index(int theta, int r) const {
        require(theta >= r && r >= 0 && theta <= grid.n_steps, ErrorKind::parameter,
                "two-time kernel index outside the stored triangle");
        return static_cast<std::size_t>(theta) * (static_cast<std::size_t>(theta) + 1) / 2 +
               static_cast<std::size_t>(r);
    }
    const Mat& P4_upper(int theta, int r) const { return P4[tri_index(theta, r)]; }
    Mat P4_at(int theta, int r) const {
        if (theta >= r) return P4_upper(theta, r);
        return P4_upper(r, theta).transpose();
    }
    Mat p2_block(int r, int i, int l) const { return kernel_block(P2[r], i, l, n); }
    Mat p3_block(int r, int i, int l) const { return kernel_block(P3[r], i, l, n); }
    Mat p4_block(int theta, int r, int i, int l) const {
        return kernel_block(P4_at(theta, r), i, l, n);
    }
};

/// Curvature matrix entering the Hamiltonian, one symmetric n x n value per
/// grid node.
struct CurlyP {
    TimeGrid grid;
    std::vector<Mat> value;  // [r] n x n
};

namespace detail {

// Backward level sums shared by the kernel sweep and the curvature
// assembly.  "Level r" means every sum runs over node indices strictly
// greater than r, which is the backward left-endpoint quadrature of the
// (r, T] integrals; the quadrature excludes the diagonal, so each node's
// value depends on later nodes only.  All sums are plain (no dt factors);
// readers scale by dt or dt^2.
struct KernelLevelSums {
    int N = 0, n = 0, k = 0;
    std::vector<Mat> W2;    // [r] sum of P2 over theta > r
    std::vector<Mat> W3;    // [r] sum of P3 over theta > r
    std::vector<Mat> T2;    // [r] double sum of P4 over (theta', theta) both > r
    Mat T2b;                // double sum, rows > r + k, columns > r, at the current level
    std::vector<Mat> SB;    // [theta] sum of P4(theta, theta') over theta' > r
    std::vector<Mat> SBd;   // [theta] same with theta' > r + k

    void init(const TimeGrid& g, int n_) {
        N = g.n_steps;
        k = g.history_steps;
        n = n_;
        const int q3 = 3 * n;
        const Mat z = Mat::Zero(q3, q3);
        W2.assign(static_cast<std::size_t>(N) + 1, z);
        W3.assign(static_cast<std::size_t>(N) + 1, z);
        T2.assign(static_cast<std::size_t>(N) + 1, z);
        T2b = z;
        SB.assign(static_cast<std::size_t>(N) + 1, z);
        SBd.assign(static_cast<std::size_t>(N) + 1, z);
    }

    // Curvature at node r assembled from the level-r sums, following the
    // full display: terminal Hessian blocks, the single-integral bands, the
    // two-time double sums, and the generator-kernel integrals, with every
    // delayed term gated by the half-open window r < N - k.
    Mat curly_display(const Mat& H, int r, double dt) const {
        const bool live = r < N - k;
        Mat out = kernel_block(H, 0, 0, n);
        if (live)
            out += kernel_block(H, 1, 0, n) + kernel_block(H, 0, 1, n) + kernel_block(H, 1, 1, n);
        const Mat& w2 = W2[static_cast<std::size_t>(r)];
        Mat b = kernel_block(w2, 0, 0, n);
        out += dt * (b.transpose() + b);
        if (live) {
            b = kernel_block(w2, 0, 1, n);
            out += dt * (b.transpose() + b);
            const Mat& w2d = W2[static_cast<std::size_t>(r + k)];
            b = kernel_block(w2d, 1, 0, n);
            out += dt * (b.transpose() + b);
            b = kernel_block(w2d, 1, 1, n);
            out += dt * (b.transpose() + b);
        }
        const double dt2 = dt * dt;
        out += dt2 * kernel_block(T2[static_cast<std::size_t>(r)], 0, 0, n);
        if (live) {
            b = kernel_block(T2b, 0, 1, n);
            out += dt2 * (b + b.transpose());
            out += dt2 * kernel_block(T2[static_cast<std::size_t>(r + k)], 1, 1, n);
        }
        out += dt * kernel_block(W3[static_cast<std::size_t>(r)], 0, 0, n);
        if (live) {
            const Mat& w3d = W3[static_cast<std::size_t>(r + k)];
            out += dt * (kernel_block(w3d, 1, 0, n) + kernel_block(w3d, 0, 1, n) +
                         kernel_block(w3d, 1, 1, n));
        }
        return out;
    }

    // Fold the completed node r into the sums, moving them to level r - 1.
    void absorb(const SecondOrderKernels& K, int r) {
        if (r == 0) return;
        const auto sr = static_cast<std::size_t>(r);
        W2[sr - 1] = W2[sr] + K.P2[sr];
        W3[sr - 1] = W3[sr] + K.P3[sr];
        Mat V = Mat::Zero(3 * n, 3 * n);
        Mat Vd = Mat::Zero(3 * n, 3 * n);
        for (int th = r + 1; th <= N; ++th) {
            const Mat& col = K.P4_upper(th, r);
            V += col;
            if (th > r + k) Vd += col;
        }
        // Completed rows gain the freshly written column; the new row r gets
        // its full sum at once, since its above-diagonal entries only became
        // readable (as transposes of column r) at this stage.
        for (int th = r + 1; th <= N; ++th) SB[static_cast<std::size_t>(th)] += K.P4_at(th, r);
        SB[static_cast<std::size_t>(r)] = K.P4_upper(r, r) + V.transpose();
        if (r + k <= N) {
            for (int th = r + 1; th <= N; ++th)
                SBd[static_cast<std::size_t>(th)] += K.P4_at(th, r + k);
            SBd[static_cast<std::size_t>(r)] = (Vd + K.P4_upper(r + k, r)).transpose();
            // The diagonal entry joins T2b symmetrized: the two delayed
            // rectangles are read as a transpose pair, and averaging the
            // (discretely asymmetric) diagonal keeps their sum exact.
            const Mat& dgd = K.P4_upper(r + k, r + k);
            T2b += Vd + SB[static_cast<std::size_t>(r + k)] +
                   0.5 * (dgd.transpose() - dgd);
        }
        // The diagonal entry enters the double sum symmetrized; analytically
        // it is symmetric already, so this only removes the O(dt) discrete
        // asymmetry that would otherwise leak into the curvature matrix.
        const Mat& diag = K.P4_upper(r, r);
        T2[sr - 1] = T2[sr] + V + V.transpose() + 0.5 * (diag + diag.transpose());
    }
};

}  // namespace detail

/// Backward sweep of the coupled curvature-kernel system in the
/// deterministic-coefficient regime.  Per node, in dependency order: the
/// curvature matrix from strictly later data, then the generator-Hessian
/// kernel, then the one-time kernel, then the two-time column down to its
/// diagonal.  The costate enters the generator Hessian only when the drift
/// has curvature; the sigma^T q terms vanish in this mode.
inline SecondOrderKernels solve_kernels(const ProblemSpec& spec, const TimeGrid& g,
                                        const std::vector<PathTrace>& traces) {
    require(!traces.empty(), ErrorKind::parameter, "at least one coefficient trace is required");
    require(traces.front().with_second_order, ErrorKind::parameter,
            "curvature kernels need second-order traced coefficients");
    require(detail::curvature_trace_spread(traces) <= 1e-10, ErrorKind::mode,
            "deterministic mode requires path-independent coefficient curvature");
    const PathTrace& tr = traces.front();
    const int N = g.n_steps, k = g.history_steps, n = spec.n, d = spec.d;
    const int q3 = 3 * n;
    const double dt = g.dt;
    const double lambda = spec.delay.lambda;
    const double decay = std::exp(-lambda * g.delta);

    bool drift_bends = false;
    for (int i = 0; i <= N && !drift_bends; ++i)
        for (int c = 0; c < n && !drift_bends; ++c)
            if (tr.drift_hess[i][c].cwiseAbs().maxCoeff() > 0.0) drift_bends = true;
    std::vector<Vec> costate;
    if (drift_bends) costate = solve_first_adjoint(spec, g, traces).p;

    Mat Elam = Mat::Zero(q3, n);
    Elam.topRows(n) = Mat::Identity(n, n);
    Elam.middleRows(n, n) = -decay * Mat::Identity(n, n);
    Elam.bottomRows(n) = -lambda * Mat::Identity(n, n);

    SecondOrderKernels K;
    K.grid = g;
    K.n = n;
    K.P1 = tr.terminal_hess;
    K.P2.assign(static_cast<std::size_t>(N) + 1, Mat::Zero(q3, q3));
    K.P3.assign(static_cast<std::size_t>(N) + 1, Mat::Zero(q3, q3));
    K.P4.assign(static_cast<std::size_t>(N + 1) * static_cast<std::size_t>(N + 2) / 2,
                Mat::Zero(q3, q3));

    detail::KernelLevelSums sums;
    sums.init(g, n);

    const Mat& H = K.P1;
    for (int r = N; r >= 0; --r) {
        const auto sr = static_cast<std::size_t>(r);
        const bool live = r < N - k;
        const Mat curly = sums.curly_display(H, r, dt);

        Mat P3r = tr.run_cost_hess[sr];
        if (drift_bends)
            for (int c = 0; c < n; ++c) P3r += costate[sr][c] * tr.drift_hess[sr][c];
        for (int j = 0; j < d; ++j) {
            const Mat& S = tr.diffusion_jac[sr][j];  // n x 3n stacked slopes
            P3r += S.transpose() * curly * S;
        }
        K.P3[sr] = P3r;

        Mat G2 = detail::kernel_rows(H, 0, n) + dt * detail::kernel_rows(sums.W2[sr], 0, n);
        if (live)
            G2 += detail::kernel_rows(H, 1, n) +
                  dt * detail::kernel_rows(sums.W2[static_cast<std::size_t>(r + k)], 1, n);
        const Mat K2 =
            detail::kernel_rows(H, 2, n) + dt * detail::kernel_rows(sums.W2[sr], 2, n);
        const Mat JbT = tr.jac_b(r).transpose();  // 3n x n
        K.P2[sr] = JbT * G2 + Elam * K2;

        for (int th = N; th > r; --th) {
            const auto sth = static_cast<std::size_t>(th);
            const Mat P2t = K.P2[sth].transpose();
            Mat G4 = detail::kernel_rows(P2t, 0, n) + detail::kernel_rows(K.P3[sth], 0, n) +
                     dt * detail::kernel_rows(sums.SB[sth], 0, n);
            if (th > r + k) G4 += detail::kernel_rows(K.P3[sth], 1, n);
            if (live)
                G4 += detail::kernel_rows(P2t, 1, n) +
                      dt * detail::kernel_rows(sums.SBd[sth], 1, n);
            const Mat K4 = detail::kernel_rows(P2t, 2, n) +
                           detail::kernel_rows(K.P3[sth], 2, n) +
                           dt * detail::kernel_rows(sums.SB[sth], 2, n);
            K.P4[K.tri_index(th, r)] = JbT * G4 + Elam * K4;
        }

        // Diagonal entry: the freshly written column provides its own row
        // sums via the transpose rule.
        Mat V = Mat::Zero(q3, q3);
        Mat Vd = Mat::Zero(q3, q3);
        for (int th = r + 1; th <= N; ++th) {
            const Mat& col = K.P4_upper(th, r);
            V += col;
            if (th > r + k) Vd += col;
        }
        {
            const Mat P2t = K.P2[sr].transpose();
            const Mat Vt = V.transpose();
            Mat G4 = detail::kernel_rows(P2t, 0, n) + detail::kernel_rows(K.P3[sr], 0, n) +
                     dt * detail::kernel_rows(Vt, 0, n);
            if (live)
                G4 += detail::kernel_rows(P2t, 1, n) +
                      dt * detail::kernel_rows(Vd.transpose(), 1, n);
            const Mat K4 = detail::kernel_rows(P2t, 2, n) +
                           detail::kernel_rows(K.P3[sr], 2, n) + dt * detail::kernel_rows(Vt, 2, n);
            K.P4[K.tri_index(r, r)] = JbT * G4 + Elam * K4;
        }
        sums.absorb(K, r);
    }
    return K;
}

/// Curvature matrix per node, rebuilt from the stored kernels by the same
/// display-form aggregation and level sums the sweep used internally.
inline CurlyP assemble_curly_P(const SecondOrderKernels& K, const ProblemSpec& spec) {
    const TimeGrid& g = K.grid;
    const int N = g.n_steps;
    require(spec.n == K.n, ErrorKind::dimension, "kernel stack does not match the problem size");
    CurlyP out;
    out.grid = g;
    out.value.assign(static_cast<std::size_t>(N) + 1, Mat::Zero(K.n, K.n));
    detail::KernelLevelSums sums;
    sums.init(g, K.n);
    for (int r = N; r >= 0; --r) {
        out.value[static_cast<std::size_t>(r)] = sums.curly_display(K.P1, r, g.dt);
        sums.absorb(K, r);
    }
    return out;
}

/// Cross-check assembly of the curvature matrix through the compact
/// closing-kernel identity: the one-time closing band plus the integral of
/// the two-time closing band, with the delayed pair gated by the half-open
/// window.  Agrees with the display-form assembly to quadrature round-off.
inline CurlyP assemble_curly_P_compact(const SecondOrderKernels& K, const ProblemSpec& spec) {
    const TimeGrid& g = K.grid;
    const int N = g.n_steps, k = g.history_steps, n = K.n;
    const double dt = g.dt;
    require(spec.n == K.n, ErrorKind::dimension, "kernel stack does not match the problem size");
    CurlyP out;
    out.grid = g;
    out.value.assign(static_cast<std::size_t>(N) + 1, Mat::Zero(n, n));
    detail::KernelLevelSums sums;
    sums.init(g, n);
    const Mat& H = K.P1;
    for (int r = N; r >= 0; --r) {
        const bool live = r < N - k;
        Mat G2_1 = kernel_block(H, 0, 0, n) +
                   dt * kernel_block(sums.W2[static_cast<std::size_t>(r)], 0, 0, n);
        Mat acc = G2_1;
        if (live) {
            const Mat& w2d = sums.W2[static_cast<std::size_t>(r + k)];
            acc += kernel_block(H, 1, 0, n) + dt * kernel_block(w2d, 1, 0, n);  // delayed closing row
            acc += kernel_block(H, 0, 1, n) + dt * kernel_block(sums.W2[static_cast<std::size_t>(r)], 0, 1, n);
            acc += kernel_block(H, 1, 1, n) + dt * kernel_block(w2d, 1, 1, n);
        }
        for (int th = r + 1; th <= N; ++th) {
            const auto sth = static_cast<std::size_t>(th);
            Mat g41 = kernel_block(K.P2[sth], 0, 0, n).transpose() +
                      kernel_block(K.P3[sth], 0, 0, n) +
                      dt * kernel_block(sums.SB[sth], 0, 0, n);
            if (th > r + k) g41 += kernel_block(K.P3[sth], 1, 0, n);
            if (live)
                g41 += kernel_block(K.P2[sth], 0, 1, n).transpose() +
                       dt * kernel_block(sums.SBd[sth], 1, 0, n);
            acc += dt * g41;
            if (live && th > r + k) {
                Mat g42 = kernel_block(K.P2[sth], 1, 0, n).transpose() +
                          kernel_block(K.P3[sth], 0, 1, n) + kernel_block(K.P3[sth], 1, 1, n) +
                          kernel_block(K.P2[sth], 1, 1, n).transpose() +
                          dt * kernel_block(sums.SB[sth], 0, 1, n) +
                          dt * kernel_block(sums.SBd[sth], 1, 1, n);
                acc += dt * g42;
            }
        }
        out.value[static_cast<std::size_t>(r)] = acc;
        sums.absorb(K, r);
    }
    return out;
}

/// Four-part split of the curvature matrix at one node, each part summed
/// directly from its own kernel family.  Exists as an independent code path
/// for the raw block-form expansion checks; the parts add up to the
/// display-form curvature.
struct CurlyPartSums {
    Mat terminal_part;   // from the constant terminal kernel
    Mat single_part;     // one-time kernel band integrals
    Mat double_part;     // two-time double integrals
    Mat generator_part;  // generator-kernel integrals
    Mat total() const { return terminal_part + single_part + double_part + generator_part; }
};

inline CurlyPartSums curly_quadratic_parts(const SecondOrderKernels& K, int r) {
    const TimeGrid& g = K.grid;
    const int N = g.n_steps, k = g.history_steps, n = K.n;
    const double dt = g.dt;
    const bool live = r < N - k;
    CurlyPartSums out;
    const Mat& H = K.P1;
    out.terminal_part = kernel_block(H, 0, 0, n);
    if (live)
        out.terminal_part +=
            kernel_block(H, 0, 1, n) + kernel_block(H, 1, 0, n) + kernel_block(H, 1, 1, n);
    out.single_part = Mat::Zero(n, n);
    out.generator_part = Mat::Zero(n, n);
    for (int th = r + 1; th <= N; ++th) {
        const auto sth = static_cast<std::size_t>(th);
        Mat b = kernel_block(K.P2[sth], 0, 0, n);
        out.single_part += dt * (b.transpose() + b);
        out.generator_part += dt * kernel_block(K.P3[sth], 0, 0, n);
        if (live) {
            b = kernel_block(K.P2[sth], 0, 1, n);
            out.single_part += dt * (b.transpose() + b);
            if (th > r + k) {
                b = kernel_block(K.P2[sth], 1, 0, n);
                out.single_part += dt * (b.transpose() + b);
                b = kernel_block(K.P2[sth], 1, 1, n);
                out.single_part += dt * (b.transpose() + b);
                out.generator_part +=
                    dt * (kernel_block(K.P3[sth], 0, 1, n) + kernel_block(K.P3[sth], 1, 0, n) +
                          kernel_block(K.P3[sth], 1, 1, n));
            }
        }
    }
    out.double_part = Mat::Zero(n, n);
    for (int tp = r + 1; tp <= N; ++tp)
        for (int th = r + 1; th <= N; ++th) {
            Mat q = K.P4_at(tp, th);
            // Diagonal entries enter double sums under the symmetrized
            // convention (redistributes between the mixed slots without
            // changing their sum).
            if (tp == th) q = 0.5 * (q + q.transpose()).eval();
            out.double_part += kernel_block(q, 0, 0, n);
            if (live) {
                if (tp > r + k) out.double_part += kernel_block(q, 0, 1, n);
                if (th > r + k) out.double_part += kernel_block(q, 1, 0, n);
                if (tp > r + k && th > r + k) out.double_part += kernel_block(q, 1, 1, n);
            }
        }
    out.double_part *= dt * dt;
    return out;
}

/// Classical (delay-free) curvature ODE, solved backward with fourth-order
/// steps on the trace grid; coefficient curves are sampled at nodes and
/// averaged at half-steps.  The martingale kernel vanishes in this mode, so
/// the equation is a plain matrix ODE ending at the terminal Hessian.
inline std::vector<Mat> solve_classical_P_bsde(const ProblemSpec& spec, const TimeGrid& g,
                                               const std::vector<PathTrace>& traces) {
    require(!traces.empty(), ErrorKind::parameter, "at least one coefficient trace is required");
    require(traces.front().with_second_order, ErrorKind::parameter,
            "the curvature ODE needs second-order traced coefficients");
    require(detail::curvature_trace_spread(traces) <= 1e-10, ErrorKind::mode,
            "deterministic mode requires path-independent coefficient curvature");
    const PathTrace& tr = traces.front();
    const int N = g.n_steps, n = spec.n, d = spec.d;
    double coupling = 0.0;
    for (int i = 0; i <= N; ++i) {
        coupling = std::max(coupling, tr.by(i).cwiseAbs().maxCoeff());
        coupling = std::max(coupling, tr.bz(i).cwiseAbs().maxCoeff());
        for (int j = 0; j < d; ++j) {
            coupling = std::max(coupling, tr.sy(i, j).cwiseAbs().maxCoeff());
            coupling = std::max(coupling, tr.sz(i, j).cwiseAbs().maxCoeff());
        }
        Mat off = tr.run_cost_hess[static_cast<std::size_t>(i)];
        off.block(0, 0, n, n).setZero();
        coupling = std::max(coupling, off.cwiseAbs().maxCoeff());
    }
    Mat offT = tr.terminal_hess;
    offT.block(0, 0, n, n).setZero();
    coupling = std::max(coupling, offT.cwiseAbs().maxCoeff());
    require(coupling <= 1e-12, ErrorKind::mode,
            "classical curvature ODE requires all delay couplings to vanish");

    bool drift_bends = false;
    for (int i = 0; i <= N && !drift_bends; ++i)
        for (int c = 0; c < n && !drift_bends; ++c)
            if (tr.drift_hess[i][c].cwiseAbs().maxCoeff() > 0.0) drift_bends = true;
    std::vector<Vec> costate;
    if (drift_bends) costate = solve_first_adjoint(spec, g, traces).p;

    // Node-wise ODE data: state slope of drift and diffusion, running-cost
    // curvature, and the costate-weighted drift curvature.
    std::vector<Mat> bx(N + 1), lxx(N + 1);
    std::vector<std::vector<Mat>> sx(N + 1, std::vector<Mat>(d));
    for (int i = 0; i <= N; ++i) {
        bx[i] = tr.bx(i);
        for (int j = 0; j < d; ++j) sx[i][j] = tr.sx(i, j);
        lxx[i] = tr.run_cost_hess[static_cast<std::size_t>(i)].block(0, 0, n, n);
        if (drift_bends)
            for (int c = 0; c < n; ++c)
                lxx[i] += costate[static_cast<std::size_t>(i)][c] *
                          tr.drift_hess[static_cast<std::size_t>(i)][c].block(0, 0, n, n);
    }
    auto rhs = [&](const Mat& P, const Mat& bxv, const std::vector<Mat>& sxv, const Mat& lv) {
        Mat f = bxv.transpose() * P + P * bxv + lv;
        for (int j = 0; j < d; ++j) f += sxv[j].transpose() * P * sxv[j];
        return f;
    };
    std::vector<Mat> P(static_cast<std::size_t>(N) + 1);
    P[static_cast<std::size_t>(N)] = tr.terminal_hess.block(0, 0, n, n);
    const double h = g.dt;
    for (int i = N; i >= 1; --i) {
        const Mat& bxm = bx[i - 1];
        Mat bxh = 0.5 * (bx[i] + bxm);
        std::vector<Mat> sxh(d);
        for (int j = 0; j < d; ++j) sxh[j] = 0.5 * (sx[i][j] + sx[i - 1][j]);
        Mat lh = 0.5 * (lxx[i] + lxx[i - 1]);
        const Mat& Pi = P[static_cast<std::size_t>(i)];
        Mat k1 = rhs(Pi, bx[i], sx[i], lxx[i]);
        Mat k2 = rhs(Pi + 0.5 * h * k1, bxh, sxh, lh);
        Mat k3 = rhs(Pi + 0.5 * h * k2, bxh, sxh, lh);
        Mat k4 = rhs(Pi + h * k3, bxm, sx[i - 1], lxx[i - 1]);
        P[static_cast<std::size_t>(i) - 1] = Pi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return P;
}

/// Coefficients of the linear-quadratic curvature ODE with one delayed
/// feedback term: -P'(s) = A^T P + P A + Qnow + [Qdel + Cdel^T P(s+delta)
/// Cdel] on the half-open window s < T - delta, P(T) = terminal.
struct LqOdeParams {
    Mat drift_gain;       // A
    Mat delay_gain;       // Cdel, delayed-state slope of the diffusion
    Mat running_weight;   // Qnow
    Mat delayed_weight;   // Qdel
    Mat terminal_weight;  // P(T)
    double horizon = 1.0;
    double delta = 0.25;
    double step = 1e-3;
};

/// Backward curvature trajectory on the ODE step grid.
struct LqCurvaturePath {
    double step = 0.0;
    std::vector<Mat> value;  // [i] at s = i * step
    Mat at(double s) const {
        const double pos = s / step;
        const auto i = static_cast<long>(std::llround(pos));
        require(i >= 0 && i < static_cast<long>(value.size()) &&
                    std::abs(pos - static_cast<double>(i)) <= 1e-9,
                ErrorKind::alignment, "query time is not on the ODE step grid");
        return value[static_cast<std::size_t>(i)];
    }
};

/// Method-of-steps backward solve of the delayed curvature ODE with
/// fourth-order stepping.  Each step cell carries the one-sided right-hand
/// side of its own delay segment, so the indicator jump at T - delta never
/// straddles an integration cell; the advanced argument is read from the
/// already-solved region, at nodes directly and at half-steps through cubic
/// interpolation with the cell-consistent slopes.
inline LqCurvaturePath solve_lq_P_ode(const LqOdeParams& par) {
    const double T = par.horizon, delta = par.delta, h = par.step;
    require(h > 0.0 && T > 0.0 && delta > 0.0, ErrorKind::parameter,
            "horizon, delay and step must be positive");
    const auto M = static_cast<int>(std::llround(T / h));
    const auto kh = static_cast<int>(std::llround(delta / h));
    require(M >= 1 && std::abs(M * h - T) <= 1e-9 * std::max(1.0, T), ErrorKind::alignment,
            "step must divide the horizon");
    require(kh >= 1 && std::abs(kh * h - delta) <= 1e-9 * std::max(1.0, delta),
            ErrorKind::alignment, "step must divide the delay");
    const auto n = static_cast<int>(par.terminal_weight.rows());
    require(par.drift_gain.rows() == n && par.drift_gain.cols() == n &&
                par.delay_gain.rows() == n && par.delay_gain.cols() == n &&
                par.running_weight.rows() == n && par.running_weight.cols() == n &&
                par.delayed_weight.rows() == n && par.delayed_weight.cols() == n &&
                par.terminal_weight.cols() == n,
            ErrorKind::dimension, "all coefficient matrices must be n x n");

    const Mat& A = par.drift_gain;
    const Mat& C = par.delay_gain;
    const Mat zero = Mat::Zero(n, n);
    auto slope = [&](const Mat& P, bool delayed, const Mat& Padv) {
        Mat f = A.transpose() * P + P.transpose() * A + par.running_weight;
        if (delayed) f += par.delayed_weight + C.transpose() * Padv * C;
        return Mat(-f);  // d/ds of the backward trajectory
    };
    LqCurvaturePath out;
    out.step = h;
    out.value.assign(static_cast<std::size_t>(M) + 1, zero);
    out.value[static_cast<std::size_t>(M)] = par.terminal_weight;
    std::vector<Mat> mid(static_cast<std::size_t>(M), zero);  // [c] at s = (c + 1/2) h
    for (int c = M - 1; c >= 0; --c) {
        const bool delayed = (c + 1) <= M - kh;  // cell inside the delayed window
        const Mat& Pup = out.value[static_cast<std::size_t>(c) + 1];
        Mat adv_up = zero, adv_mid = zero, adv_lo = zero;
        if (delayed) {
            adv_up = out.value[static_cast<std::size_t>(c + 1 + kh)];
            adv_mid = mid[static_cast<std::size_t>(c + kh)];
            adv_lo = out.value[static_cast<std::size_t>(c + kh)];
        }
        Mat k1 = slope(Pup, delayed, adv_up);
        Mat k2 = slope(Pup - 0.5 * h * k1, delayed, adv_mid);
        Mat k3 = slope(Pup - 0.5 * h * k2, delayed, adv_mid);
        Mat k4 = slope(Pup - h * k3, delayed, adv_lo);
        Mat Plo = Pup - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.value[static_cast<std::size_t>(c)] = Plo;
        const Mat f_lo = slope(Plo, delayed, adv_lo);
        const Mat f_up = slope(Pup, delayed, adv_up);
        mid[static_cast<std::size_t>(c)] = 0.5 * (Plo + Pup) + (h / 8.0) * (f_lo - f_up);
    }
    return out;
}

}  // namespace delaymp
