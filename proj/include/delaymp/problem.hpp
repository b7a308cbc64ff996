#pragma once

#include <functional>
#include <string>
#include <vector>

#include "core.hpp"

namespace delaymp {

/// Delay structure of the dynamics: the state enters pointwise as
/// y(t) = x(t - delta), as the exponentially weighted sliding integral
/// z(t) = int_{-delta}^0 e^{lambda s} x(t + s) ds, and the control enters
/// delayed as mu(t) = u(t - delta).
struct DelayModel {
    double delta = 0.25;
    double lambda = 0.0;
    double horizon = 1.0;  // T
};

/// Admissible control values: either a finite list or an axis-aligned box
/// with a per-axis scan resolution used by enumeration.
struct ControlSet {
    enum class Kind { finite, box } kind = Kind::box;
    std::vector<Vec> values;  // finite case, enumeration order as given
    Vec lo, hi;               // box case
    int scan_points = 11;     // per-axis grid count for box enumeration

    static ControlSet finite(std::vector<Vec> vals) {
        ControlSet c;
        c.kind = Kind::finite;
        c.values = std::move(vals);
        require(!c.values.empty(), ErrorKind::parameter, "finite control set is empty");
        return c;
    }
    static ControlSet box(Vec lo, Vec hi, int scan_points = 11) {
        ControlSet c;
        c.kind = Kind::box;
        c.lo = std::move(lo);
        c.hi = std::move(hi);
        c.scan_points = scan_points;
        require(c.lo.size() == c.hi.size(), ErrorKind::dimension, "control box bounds disagree");
        require((c.lo.array() <= c.hi.array()).all(), ErrorKind::parameter,
                "control box has empty axis");
        require(scan_points >= 2, ErrorKind::parameter, "control box needs >= 2 scan points");
        return c;
    }

    int dim() const { return kind == Kind::finite ? static_cast<int>(values[0].size())
                                                 : static_cast<int>(lo.size()); }

    bool contains(const Vec& u, double tol = 1e-12) const {
        if (static_cast<int>(u.size()) != dim()) return false;
        if (kind == Kind::finite) {
            for (const auto& v : values)
                if ((u - v).cwiseAbs().maxCoeff() <= tol) return true;
            return false;
        }
        return (u.array() >= lo.array() - tol).all() && (u.array() <= hi.array() + tol).all();
    }

    /// Deterministic enumeration used by scans; finite sets keep their given
    /// order, boxes walk a lexicographic per-axis grid.
    std::vector<Vec> enumerate() const {
        if (kind == Kind::finite) return values;
        const int m = dim();
        std::vector<Vec> out;
        std::vector<int> idx(m, 0);
        while (true) {
            Vec u(m);
            for (int a = 0; a < m; ++a) {
                const double w = scan_points == 1
                                     ? 0.0
                                     : static_cast<double>(idx[a]) / (scan_points - 1);
                u[a] = lo[a] + w * (hi[a] - lo[a]);
            }
            out.push_back(u);
            int a = m - 1;
            while (a >= 0 && ++idx[a] == scan_points) idx[a--] = 0;
            if (a < 0) break;
        }
        return out;
    }
};

/// Deterministic history data on [-delta, 0]: initial state segment xi and
/// control history eta (mu(t) = eta(t - delta) for t < delta).
struct InitialPaths {
    std::function<Vec(double)> state_history;    // xi(t), t in [-delta, 0]
    std::function<Vec(double)> control_history;  // eta(t), t in [-delta, 0)
};

/// Evaluation point for coefficients: time, state, pointwise delay, sliding
/// integral, control and delayed control.
struct CoeffPoint {
    double t = 0.0;
    Vec x, y, z;
    Vec u, mu;
};

/// All model coefficients and their first two derivative families with
/// respect to the state arguments (x, y, z).  Jacobians are packed as
/// n x 3n blocks [f_x | f_y | f_z]; second derivatives are one 3n x 3n
/// symmetric matrix per scalar output component.  Empty std::functions for
/// the second-derivative slots mean identically zero.
struct CoefficientBundle {
    std::function<Vec(const CoeffPoint&)> drift;                    // b, size n
    std::function<Mat(const CoeffPoint&)> diffusion;                // n x d, column j = sigma^j
    std::function<double(const CoeffPoint&)> running_cost;          // l
    std::function<double(const Vec&, const Vec&, const Vec&)> terminal_cost;  // h(x, y, z)

    std::function<Mat(const CoeffPoint&)> drift_jac;                // n x 3n
    std::function<Mat(const CoeffPoint&, int)> diffusion_jac;       // (pt, j) -> n x 3n
    std::function<Vec(const CoeffPoint&)> running_cost_grad;        // size 3n
    std::function<Vec(const Vec&, const Vec&, const Vec&)> terminal_cost_grad;  // size 3n

    std::function<Mat(const CoeffPoint&, int)> drift_hess;          // (pt, component) -> 3n x 3n
    std::function<Mat(const CoeffPoint&, int, int)> diffusion_hess; // (pt, j, component)
    std::function<Mat(const CoeffPoint&)> running_cost_hess;        // 3n x 3n
    std::function<Mat(const Vec&, const Vec&, const Vec&)> terminal_cost_hess;  // 3n x 3n
};

/// Complete problem description at desk scale.
struct ProblemSpec {
    std::string name;
    int n = 1;  // state dimension
    int m = 1;  // control dimension
    int d = 1;  // noise dimension
    DelayModel delay;
    ControlSet controls = ControlSet::box(Vec::Constant(1, -1.0), Vec::Constant(1, 1.0));
    InitialPaths initial;
    CoefficientBundle coeffs;
    int default_steps = 200;  // preferred simulation grid size for this spec
};

}  // namespace delaymp
