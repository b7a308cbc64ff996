#pragma once

#include <vector>

#include "brownian.hpp"
#include "core.hpp"
#include "parallel.hpp"
#include "problem.hpp"
#include "time_grid.hpp"
#include "trace.hpp"
#include "variational.hpp"

namespace delaymp {

/// Two-time kernel views over one path's traced coefficients.  Row layout of
/// every 3n-valued object: (instantaneous, pointwise-delay copy, sliding
/// average).  The delay gate 1(t-s > delta) is open, so it evaluates to zero
/// when t-s equals delta exactly.
struct KernelSet {
    const PathTrace* trace = nullptr;
    const SpikeDeltas* deltas = nullptr;
    const TimeGrid* grid = nullptr;
    int n = 0, d = 0;

    bool gate(int i, int l) const { return i - l > grid->history_steps; }

    Mat A(int i, int l) const {
        const auto sl = static_cast<std::size_t>(l);
        Mat out = Mat::Zero(3 * n, 3 * n);
        out.topRows(n) = trace->drift_jac[sl];
        if (gate(i, l)) out.middleRows(n, n) = trace->drift_jac[sl];
        out.block(2 * n, 0, n, n) = Mat::Identity(n, n);
        out.block(2 * n, n, n, n) = -std::exp(-grid->delta * lambda_) * Mat::Identity(n, n);
        out.block(2 * n, 2 * n, n, n) = -lambda_ * Mat::Identity(n, n);
        return out;
    }

    Mat C(int i, int l, int j) const {
        const auto sl = static_cast<std::size_t>(l);
        Mat out = Mat::Zero(3 * n, 3 * n);
        out.topRows(n) = trace->diffusion_jac[sl][static_cast<std::size_t>(j)];
        if (gate(i, l)) out.middleRows(n, n) = trace->diffusion_jac[sl][static_cast<std::size_t>(j)];
        return out;
    }

    Vec B(int i, int l) const {
        Vec out = Vec::Zero(3 * n);
        const int di = deltas->find(l);
        if (di < 0) return out;
        out.head(n) = deltas->db[static_cast<std::size_t>(di)];
        if (gate(i, l)) out.segment(n, n) = deltas->db[static_cast<std::size_t>(di)];
        return out;
    }

    Vec D(int i, int l, int j) const {
        Vec out = Vec::Zero(3 * n);
        const int di = deltas->find(l);
        if (di < 0) return out;
        out.head(n) = deltas->dsig[static_cast<std::size_t>(di)].col(j);
        if (gate(i, l)) out.segment(n, n) = deltas->dsig[static_cast<std::size_t>(di)].col(j);
        return out;
    }

    /// Quadratic drift input 0.5 * X1' d2b X1 in the top row (gated copy in
    /// the middle); X1l is the lifted first variation at node l.
    Vec Bbar(int i, int l, const Vec& X1l) const {
        const auto sl = static_cast<std::size_t>(l);
        Vec out = Vec::Zero(3 * n);
        for (int c = 0; c < n; ++c)
            out[c] = 0.5 * X1l.dot(trace->drift_hess[sl][static_cast<std::size_t>(c)] * X1l);
        if (gate(i, l)) out.segment(n, n) = out.head(n);
        return out;
    }

    /// Quadratic diffusion input plus the jacobian-difference action on X1.
    Vec Dbar(int i, int l, int j, const Vec& X1l) const {
        const auto sl = static_cast<std::size_t>(l);
        Vec out = Vec::Zero(3 * n);
        for (int c = 0; c < n; ++c)
            out[c] = 0.5 * X1l.dot(trace->diffusion_hess[sl][static_cast<std::size_t>(j)]
                                                       [static_cast<std::size_t>(c)] *
                                   X1l);
        const int di = deltas->find(l);
        if (di >= 0)
            out.head(n) += deltas->djac[static_cast<std::size_t>(di)][static_cast<std::size_t>(j)] *
                           X1l;
        if (gate(i, l)) out.segment(n, n) = out.head(n);
        return out;
    }

    double lambda_ = 0.0;
};

inline KernelSet build_kernels(const PathTrace& trace, const SpikeDeltas& deltas,
                               const TimeGrid& grid, int n, int d, double lambda) {
    KernelSet ks;
    ks.trace = &trace;
    ks.deltas = &deltas;
    ks.grid = &grid;
    ks.n = n;
    ks.d = d;
    ks.lambda_ = lambda;
    return ks;
}

/// Delay-free Volterra form of the variations on one path.  Only the running
/// block sums are stored: the instantaneous block (top), the sliding block
/// (bot), and the delayed block read as a shifted top.  This makes a full
/// two-time evaluation available at O(1) per query while construction stays
/// O(N) per path.
struct LiftedPath {
    int n = 0, k = 0;
    std::vector<Vec> top, bot;    // first variation, nodes 0..N
    std::vector<Vec> top2, bot2;  // second variation when built

    bool has_second() const { return !top2.empty(); }

    Vec mid(int i) const {
        return i > k ? top[static_cast<std::size_t>(i - k)] : Vec::Zero(n);
    }
    Vec mid2(int i) const {
        return i > k ? top2[static_cast<std::size_t>(i - k)] : Vec::Zero(n);
    }

    Vec X1(int i) const {
        Vec out(3 * n);
        out << top[static_cast<std::size_t>(i)], mid(i), bot[static_cast<std::size_t>(i)];
        return out;
    }
    Vec X2(int i) const {
        Vec out(3 * n);
        out << top2[static_cast<std::size_t>(i)], mid2(i), bot2[static_cast<std::size_t>(i)];
        return out;
    }

    /// Partial Volterra integral of the first variation up to node r with the
    /// kernel clock at node i; aux1(i, i) reproduces X1(i) exactly.
    Vec aux1(int i, int r) const {
        Vec out(3 * n);
        const int m = std::min(r, i - k > 0 ? i - k : 0);
        out << top[static_cast<std::size_t>(r)], top[static_cast<std::size_t>(m)],
            bot[static_cast<std::size_t>(r)];
        return out;
    }
};

/// Builds the lifted variations by accumulating the per-node inputs once.
/// The middle block never needs its own recursion: the gated rows of A, C,
/// B, D are copies of the top rows restricted to s < t - delta, so the
/// middle running sum is the top sum k nodes earlier.
inline LiftedPath lift_path(const ProblemSpec& spec, const TimeGrid& g, const PathTrace& trace,
                            const SpikeDeltas& deltas, const BrownianBundle& bundle, int path,
                            bool second_order) {
    const int n = spec.n, d = spec.d, N = g.n_steps, k = g.history_steps;
    const double lambda = spec.delay.lambda;
    const double decay = std::exp(-lambda * g.delta);
    LiftedPath lp;
    lp.n = n;
    lp.k = k;
    lp.top.assign(static_cast<std::size_t>(N) + 1, Vec::Zero(n));
    lp.bot.assign(static_cast<std::size_t>(N) + 1, Vec::Zero(n));
    if (second_order) {
        lp.top2.assign(static_cast<std::size_t>(N) + 1, Vec::Zero(n));
        lp.bot2.assign(static_cast<std::size_t>(N) + 1, Vec::Zero(n));
    }
    for (int l = 0; l < N; ++l) {
        const auto sl = static_cast<std::size_t>(l);
        const Vec X1l = lp.X1(l);
        const int di = deltas.find(l);

        Vec f = trace.drift_jac[sl] * X1l * g.dt;
        if (di >= 0) f += deltas.db[static_cast<std::size_t>(di)] * g.dt;
        Vec f2;
        if (second_order) {
            const Vec X2l = lp.X2(l);
            f2 = trace.drift_jac[sl] * X2l * g.dt;
            for (int c = 0; c < n; ++c)
                f2[c] += 0.5 * g.dt *
                         X1l.dot(trace.drift_hess[sl][static_cast<std::size_t>(c)] * X1l);
        }
        for (int j = 0; j < d; ++j) {
            const double dw = bundle.increment(path, l, j);
            const Mat& Js = trace.diffusion_jac[sl][static_cast<std::size_t>(j)];
            f += dw * (Js * X1l);
            if (di >= 0) f += dw * deltas.dsig[static_cast<std::size_t>(di)].col(j);
            if (second_order) {
                const Vec X2l = lp.X2(l);
                f2 += dw * (Js * X2l);
                for (int c = 0; c < n; ++c)
                    f2[c] += 0.5 * dw *
                             X1l.dot(trace.diffusion_hess[sl][static_cast<std::size_t>(j)]
                                                         [static_cast<std::size_t>(c)] *
                                     X1l);
                if (di >= 0)
                    f2 += dw * (deltas.djac[static_cast<std::size_t>(di)]
                                           [static_cast<std::size_t>(j)] *
                                X1l);
            }
        }
        const auto nu = static_cast<std::size_t>(l + 1);
        lp.top[nu] = lp.top[sl] + f;
        lp.bot[nu] =
            lp.bot[sl] + g.dt * (lp.top[sl] - decay * lp.mid(l) - lambda * lp.bot[sl]);
        if (second_order) {
            lp.top2[nu] = lp.top2[sl] + f2;
            lp.bot2[nu] =
                lp.bot2[sl] + g.dt * (lp.top2[sl] - decay * lp.mid2(l) - lambda * lp.bot2[sl]);
        }
    }
    return lp;
}

struct LiftedBatch {
    TimeGrid grid;
    const BrownianBundle* bundle = nullptr;
    std::vector<LiftedPath> paths;
};

inline LiftedBatch simulate_lifted(const ProblemSpec& spec, const VariationBatch& vb,
                                   int threads = 1, bool second_order = true) {
    require(vb.bundle != nullptr, ErrorKind::bundle_identity, "variation batch has no bundle");
    LiftedBatch out;
    out.grid = vb.grid;
    out.bundle = vb.bundle;
    const int paths = vb.bundle->n_paths();
    out.paths.resize(static_cast<std::size_t>(paths));
    parallel_for(paths, threads, [&](int p) {
        const auto sp = static_cast<std::size_t>(p);
        out.paths[sp] = lift_path(spec, vb.grid, vb.traces[sp], vb.deltas[sp], *vb.bundle, p,
                                  second_order);
    });
    return out;
}

/// Distance between the lifted first variation and the directly simulated
/// one on identical noise.  The sliding blocks follow different but
/// consistent quadratures, so the gap is O(dt); the reported bound is
/// 5*dt*(1 + max |x1|).
struct LiftFidelity {
    double max_gap = 0.0;
    double bound = 0.0;
    bool pass = false;
};

inline LiftFidelity check_lift_fidelity(const LiftedBatch& lb, const VariationBatch& vb) {
    require(lb.bundle == vb.bundle, ErrorKind::bundle_identity,
            "lifted and direct batches use different noise bundles");
    LiftFidelity out;
    double max_x1 = 0.0;
    const int N = lb.grid.n_steps;
    for (std::size_t p = 0; p < lb.paths.size(); ++p) {
        const LiftedPath& lp = lb.paths[p];
        const PathVariation& pv = vb.vars[p];
        for (int i = 0; i <= N; ++i) {
            const auto si = static_cast<std::size_t>(i);
            max_x1 = std::max(max_x1, pv.x1[si].cwiseAbs().maxCoeff());
            const double gap_top = (lp.top[si] - pv.x1[si]).cwiseAbs().maxCoeff();
            const Vec y_gated = i > lp.k ? pv.y1[si] : Vec::Zero(lp.n);
            const double gap_mid = (lp.mid(i) - y_gated).cwiseAbs().maxCoeff();
            const double gap_bot = (lp.bot[si] - pv.z1[si]).cwiseAbs().maxCoeff();
            out.max_gap = std::max({out.max_gap, gap_top, gap_mid, gap_bot});
        }
    }
    out.bound = 5.0 * lb.grid.dt * (1.0 + max_x1);
    out.pass = out.max_gap <= out.bound;
    return out;
}

}  // namespace delaymp
