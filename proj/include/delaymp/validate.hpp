#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "core.hpp"
#include "problem.hpp"
#include "rng.hpp"
#include "time_grid.hpp"

namespace delaymp {

/// Summary of the probe-based checks run by validate_problem.  Hard failures
/// throw; the report only carries statistics for the checks that ran.
struct ValidationReport {
    int points_checked = 0;
    double max_jacobian_err = 0.0;   // worst relative FD mismatch, first order
    double max_hessian_err = 0.0;    // worst relative FD mismatch, second order
    double max_hessian_asym = 0.0;   // worst |H - H^T| entry over provided hessians
    bool second_order_checked = false;
};

namespace detail {

inline void check_dim(bool ok, const std::string& coeff, const std::string& what) {
    require(ok, ErrorKind::dimension, coeff + ": " + what);
}

inline void check_finite(double v, const std::string& coeff) {
    require(std::isfinite(v), ErrorKind::parameter, coeff + ": non-finite value at probe point");
}

inline void check_finite(const Eigen::Ref<const Mat>& v, const std::string& coeff) {
    require(v.allFinite(), ErrorKind::parameter, coeff + ": non-finite value at probe point");
}

// Returns a copy of `p` with coordinate `i` of slot `slot` (0 = x, 1 = y,
// 2 = z) shifted by `h`.
inline CoeffPoint shift_point(const CoeffPoint& p, int slot, int i, double h) {
    CoeffPoint q = p;
    if (slot == 0) q.x[i] += h;
    else if (slot == 1) q.y[i] += h;
    else q.z[i] += h;
    return q;
}

}  // namespace detail

/// Checks a problem before any simulation touches it: dimensions of every
/// coefficient output, finiteness at random probe points, first-order
/// derivatives against central finite differences (relative tolerance 1e-4),
/// and, where second-order data is supplied, hessian symmetry and a looser
/// FD cross-check.  The grid implied by `steps` is also constructed, which
/// enforces the delay/step alignment rules.  Throws Error on any violation,
/// naming the offending coefficient.
inline ValidationReport validate_problem(const ProblemSpec& spec, int steps = 0,
                                         int probe_points = 8, std::uint64_t seed = 12345) {
    using detail::check_dim;
    using detail::check_finite;
    const int n = spec.n, m = spec.m, d = spec.d;
    require(n >= 1 && m >= 1 && d >= 1, ErrorKind::parameter, "state/control/noise dims must be >= 1");
    const TimeGrid grid = TimeGrid::make(spec.delay.horizon, spec.delay.delta,
                                         steps > 0 ? steps : spec.default_steps);
    (void)grid;
    require(spec.delay.lambda >= 0.0, ErrorKind::parameter, "memory rate lambda must be >= 0");
    require(spec.controls.dim() == m, ErrorKind::dimension,
            "control set dimension does not match control dim");
    require(static_cast<bool>(spec.initial.state_history), ErrorKind::parameter,
            "state history function is required");
    require(static_cast<bool>(spec.initial.control_history), ErrorKind::parameter,
            "control history function is required");
    require(static_cast<bool>(spec.coeffs.drift), ErrorKind::parameter, "drift is required");
    require(static_cast<bool>(spec.coeffs.diffusion), ErrorKind::parameter, "diffusion is required");
    require(static_cast<bool>(spec.coeffs.running_cost), ErrorKind::parameter,
            "running cost is required");
    require(static_cast<bool>(spec.coeffs.terminal_cost), ErrorKind::parameter,
            "terminal cost is required");
    require(static_cast<bool>(spec.coeffs.drift_jac), ErrorKind::parameter,
            "drift jacobian is required");
    require(static_cast<bool>(spec.coeffs.diffusion_jac), ErrorKind::parameter,
            "diffusion jacobian is required");
    require(static_cast<bool>(spec.coeffs.running_cost_grad), ErrorKind::parameter,
            "running cost gradient is required");
    require(static_cast<bool>(spec.coeffs.terminal_cost_grad), ErrorKind::parameter,
            "terminal cost gradient is required");

    ValidationReport rep;
    NormalStream rng(seed, 0);
    const auto& C = spec.coeffs;
    const std::vector<Vec> controls = spec.controls.enumerate();
    const double fd_tol = 1e-4, fd2_tol = 1e-3, sym_tol = 1e-8;

    auto fd_step = [](double scale) { return 1e-5 * (1.0 + std::abs(scale)); };

    for (int pt = 0; pt < probe_points; ++pt) {
        CoeffPoint p;
        p.t = rng.uniform() * spec.delay.horizon;
        p.x = Vec::NullaryExpr(n, [&](Eigen::Index) { return rng.normal(); });
        p.y = Vec::NullaryExpr(n, [&](Eigen::Index) { return rng.normal(); });
        p.z = Vec::NullaryExpr(n, [&](Eigen::Index) { return rng.normal(); });
        p.u = controls[static_cast<std::size_t>(rng.next() % controls.size())];
        p.mu = controls[static_cast<std::size_t>(rng.next() % controls.size())];

        const Vec b = C.drift(p);
        check_dim(b.size() == n, "drift", "expected output of size n");
        check_finite(b, "drift");
        const Mat sig = C.diffusion(p);
        check_dim(sig.rows() == n && sig.cols() == d, "diffusion", "expected an n x d matrix");
        check_finite(sig, "diffusion");
        const double l = C.running_cost(p);
        check_finite(l, "running cost");
        const double h = C.terminal_cost(p.x, p.y, p.z);
        check_finite(h, "terminal cost");

        const Mat bj = C.drift_jac(p);
        check_dim(bj.rows() == n && bj.cols() == 3 * n, "drift jacobian",
                  "expected an n x 3n matrix");
        check_finite(bj, "drift jacobian");
        std::vector<Mat> sj(static_cast<std::size_t>(d));
        for (int j = 0; j < d; ++j) {
            sj[static_cast<std::size_t>(j)] = C.diffusion_jac(p, j);
            check_dim(sj[static_cast<std::size_t>(j)].rows() == n &&
                          sj[static_cast<std::size_t>(j)].cols() == 3 * n,
                      "diffusion jacobian", "expected an n x 3n matrix");
            check_finite(sj[static_cast<std::size_t>(j)], "diffusion jacobian");
        }
        const Vec lg = C.running_cost_grad(p);
        check_dim(lg.size() == 3 * n, "running cost gradient", "expected output of size 3n");
        check_finite(lg, "running cost gradient");
        const Vec hg = C.terminal_cost_grad(p.x, p.y, p.z);
        check_dim(hg.size() == 3 * n, "terminal cost gradient", "expected output of size 3n");
        check_finite(hg, "terminal cost gradient");

        // First-order FD cross-checks, one coordinate per slot block.
        for (int slot = 0; slot < 3; ++slot) {
            for (int i = 0; i < n; ++i) {
                const double base = slot == 0 ? p.x[i] : slot == 1 ? p.y[i] : p.z[i];
                const double step = fd_step(base);
                const CoeffPoint pp = detail::shift_point(p, slot, i, step);
                const CoeffPoint pm = detail::shift_point(p, slot, i, -step);
                const Vec fd_b = (C.drift(pp) - C.drift(pm)) / (2.0 * step);
                for (int c = 0; c < n; ++c) {
                    const double want = bj(c, slot * n + i);
                    const double err = std::abs(fd_b[c] - want) / (1.0 + std::abs(want));
                    rep.max_jacobian_err = std::max(rep.max_jacobian_err, err);
                    require(err <= fd_tol, ErrorKind::parameter,
                            "drift jacobian disagrees with finite differences");
                }
                for (int j = 0; j < d; ++j) {
                    const Mat fd_s = (C.diffusion(pp) - C.diffusion(pm)) / (2.0 * step);
                    for (int c = 0; c < n; ++c) {
                        const double want = sj[static_cast<std::size_t>(j)](c, slot * n + i);
                        const double err = std::abs(fd_s(c, j) - want) / (1.0 + std::abs(want));
                        rep.max_jacobian_err = std::max(rep.max_jacobian_err, err);
                        require(err <= fd_tol, ErrorKind::parameter,
                                "diffusion jacobian disagrees with finite differences");
                    }
                }
                const double fd_l = (C.running_cost(pp) - C.running_cost(pm)) / (2.0 * step);
                {
                    const double want = lg[slot * n + i];
                    const double err = std::abs(fd_l - want) / (1.0 + std::abs(want));
                    rep.max_jacobian_err = std::max(rep.max_jacobian_err, err);
                    require(err <= fd_tol, ErrorKind::parameter,
                            "running cost gradient disagrees with finite differences");
                }
                const double fd_h = (C.terminal_cost(pp.x, pp.y, pp.z) -
                                     C.terminal_cost(pm.x, pm.y, pm.z)) /
                                    (2.0 * step);
                {
                    const double want = hg[slot * n + i];
                    const double err = std::abs(fd_h - want) / (1.0 + std::abs(want));
                    rep.max_jacobian_err = std::max(rep.max_jacobian_err, err);
                    require(err <= fd_tol, ErrorKind::parameter,
                            "terminal cost gradient disagrees with finite differences");
                }
            }
        }

        // Second-order checks for whichever hessians are supplied.
        auto check_hess = [&](const Mat& H, const std::string& coeff,
                              const std::function<Vec(const CoeffPoint&)>& grad_fn) {
            check_dim(H.rows() == 3 * n && H.cols() == 3 * n, coeff, "expected a 3n x 3n matrix");
            check_finite(H, coeff);
            const double asym = (H - H.transpose()).cwiseAbs().maxCoeff();
            rep.max_hessian_asym = std::max(rep.max_hessian_asym, asym);
            require(asym <= sym_tol, ErrorKind::parameter, coeff + " is not symmetric");
            rep.second_order_checked = true;
            for (int slot = 0; slot < 3; ++slot) {
                for (int i = 0; i < n; ++i) {
                    const double base = slot == 0 ? p.x[i] : slot == 1 ? p.y[i] : p.z[i];
                    const double step = fd_step(base);
                    const Vec gp = grad_fn(detail::shift_point(p, slot, i, step));
                    const Vec gm = grad_fn(detail::shift_point(p, slot, i, -step));
                    const Vec fd = (gp - gm) / (2.0 * step);
                    for (int r = 0; r < 3 * n; ++r) {
                        const double want = H(r, slot * n + i);
                        const double err = std::abs(fd[r] - want) / (1.0 + std::abs(want));
                        rep.max_hessian_err = std::max(rep.max_hessian_err, err);
                        require(err <= fd2_tol, ErrorKind::parameter,
                                coeff + " disagrees with finite differences of the gradient");
                    }
                }
            }
        };
        if (C.drift_hess) {
            for (int c = 0; c < n; ++c) {
                const int cc = c;
                check_hess(C.drift_hess(p, c), "drift hessian", [&, cc](const CoeffPoint& q) {
                    return Vec(C.drift_jac(q).row(cc).transpose());
                });
            }
        }
        if (C.diffusion_hess) {
            for (int j = 0; j < d; ++j) {
                for (int c = 0; c < n; ++c) {
                    const int jj = j, cc = c;
                    check_hess(C.diffusion_hess(p, j, c), "diffusion hessian",
                               [&, jj, cc](const CoeffPoint& q) {
                                   return Vec(C.diffusion_jac(q, jj).row(cc).transpose());
                               });
                }
            }
        }
        if (C.running_cost_hess) {
            check_hess(C.running_cost_hess(p), "running cost hessian",
                       [&](const CoeffPoint& q) { return C.running_cost_grad(q); });
        }
        if (C.terminal_cost_hess) {
            check_hess(C.terminal_cost_hess(p.x, p.y, p.z), "terminal cost hessian",
                       [&](const CoeffPoint& q) {
                           return C.terminal_cost_grad(q.x, q.y, q.z);
                       });
        }
        ++rep.points_checked;
    }
    return rep;
}

}  // namespace delaymp
