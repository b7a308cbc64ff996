#pragma once

#include <cmath>
#include <vector>

#include "core.hpp"
#include "problem.hpp"
#include "time_grid.hpp"

namespace delaymp {

/// Trapezoid quadrature of int_{-delta}^0 e^{lambda s} x(t_i + s) ds on grid
/// nodes.  `node` may reach back into the history segment; underflow past
/// -history_steps is an error.
template <class At>
inline Vec distributed_delay_at(const At& x_at, int node, double lambda, const TimeGrid& g) {
    const int k = g.history_steps;
    require(node - k >= -k, ErrorKind::history_underflow,
            "sliding integral reaches before the recorded history");
    Vec acc = 0.5 * std::exp(-lambda * g.delta) * x_at(node - k);
    for (int j = 1; j < k; ++j) acc += std::exp(lambda * (j - k) * g.dt) * x_at(node - k + j);
    acc += 0.5 * x_at(node);
    return g.dt * acc;
}

/// Grid-sampled state trajectory including the history segment
/// [-delta, 0].  y and z values for i >= 0 are cached at fill time.
struct StatePath {
    TimeGrid grid;
    std::vector<Vec> values;  // index i + history_steps, i in [-k, N]
    std::vector<Vec> y_cache; // i in [0, N]
    std::vector<Vec> z_cache; // i in [0, N]

    const Vec& x(int i) const {
        require(i >= -grid.history_steps && i <= grid.n_steps, ErrorKind::history_underflow,
                "state node outside [-delta, T]");
        return values[static_cast<std::size_t>(i + grid.history_steps)];
    }
    const Vec& y(int i) const { return y_cache[static_cast<std::size_t>(i)]; }
    const Vec& z(int i) const { return z_cache[static_cast<std::size_t>(i)]; }

    /// Recompute z(i) from scratch; the cache must match this exactly.
    Vec z_direct(int i, double lambda) const {
        return distributed_delay_at([&](int j) -> const Vec& { return x(j); }, i, lambda, grid);
    }
};

/// Free-function form of the sliding-integral quadrature over an explicit
/// node array laid out like StatePath::values.
inline Vec distributed_delay(const std::vector<Vec>& values_with_history, int node, double lambda,
                             const TimeGrid& g) {
    const int k = g.history_steps;
    auto at = [&](int i) -> const Vec& {
        require(i + k >= 0 && i + k < static_cast<int>(values_with_history.size()),
                ErrorKind::history_underflow, "node array too short for the requested window");
        return values_with_history[static_cast<std::size_t>(i + k)];
    };
    return distributed_delay_at(at, node, lambda, g);
}

/// Incremental update of the sliding integral: advances the trapezoid sum by
/// one node in O(n) instead of re-walking the k-node window.
class SlidingIntegral {
  public:
    SlidingIntegral(const TimeGrid& g, double lambda) : g_(g), lambda_(lambda) {}

    /// Seed at node i0 given random access to nodes [i0 - k, i0].
    template <class At>
    void reset(const At& x_at, int i0) {
        const int k = g_.history_steps;
        node_ = i0;
        interior_ = Vec::Zero(x_at(i0).size());
        for (int j = 1; j < k; ++j)
            interior_ += std::exp(lambda_ * (j - k) * g_.dt) * x_at(i0 - k + j);
        edge_old_ = x_at(i0 - k);
        edge_new_ = x_at(i0);
    }

    Vec value() const {
        return g_.dt * (0.5 * std::exp(-lambda_ * g_.delta) * edge_old_ + interior_ +
                        0.5 * edge_new_);
    }

    /// Slide the window from node i to i+1; needs x at nodes i+1-k and i+1.
    void advance(const Vec& x_enter_tail, const Vec& x_new_head) {
        const int k = g_.history_steps;
        const double shrink = std::exp(-lambda_ * g_.dt);
        // interior nodes shift one slot toward -delta; the old head joins them
        interior_ = shrink * (interior_ - std::exp(lambda_ * (1 - k) * g_.dt) * x_enter_tail +
                              edge_new_);
        edge_old_ = x_enter_tail;
        edge_new_ = x_new_head;
        ++node_;
    }

    int node() const { return node_; }

  private:
    TimeGrid g_;
    double lambda_;
    int node_ = 0;
    Vec interior_, edge_old_, edge_new_;
};

/// Grid-aligned control trajectory; node i covers [t_i, t_{i+1}) and the
/// history segment carries eta.
struct ControlProcess {
    TimeGrid grid;
    std::vector<Vec> values;  // index i + history_steps, i in [-k, N-1]

    const Vec& u(int i) const {
        require(i >= -grid.history_steps && i <= grid.n_steps - 1, ErrorKind::history_underflow,
                "control node outside [-delta, T)");
        return values[static_cast<std::size_t>(i + grid.history_steps)];
    }
    const Vec& mu(int i) const { return u(i - grid.history_steps); }

    static ControlProcess from_functions(const TimeGrid& g,
                                         const std::function<Vec(double)>& history,
                                         const std::function<Vec(double)>& plan) {
        ControlProcess c;
        c.grid = g;
        c.values.resize(static_cast<std::size_t>(g.history_steps + g.n_steps));
        for (int i = -g.history_steps; i < 0; ++i)
            c.values[static_cast<std::size_t>(i + g.history_steps)] = history(g.time(i));
        for (int i = 0; i < g.n_steps; ++i)
            c.values[static_cast<std::size_t>(i + g.history_steps)] = plan(g.time(i));
        return c;
    }

    static ControlProcess constant(const TimeGrid& g, const Vec& hist, const Vec& val) {
        return from_functions(g, [&](double) { return hist; }, [&](double) { return val; });
    }
};

/// Needle perturbation: replace the control by v on the half-open window
/// [tau, tau + eps); history and all other nodes are untouched.  The window
/// must be grid-aligned, fit inside [0, T), and eps must stay below delta.
inline ControlProcess spike_perturb(const ControlProcess& base, const Vec& v, double tau,
                                    double eps) {
    const TimeGrid& g = base.grid;
    const int i_tau = g.index_of(tau, "spike start");
    const int n_eps = g.index_of(eps, "spike width");
    require(i_tau >= 0, ErrorKind::parameter, "spike must start at or after 0");
    require(n_eps >= 1, ErrorKind::parameter, "spike width must cover at least one step");
    require(n_eps < g.history_steps, ErrorKind::parameter,
            "spike width must be strictly smaller than the delay");
    require(i_tau + n_eps <= g.n_steps, ErrorKind::parameter, "spike window exceeds the horizon");
    ControlProcess out = base;
    for (int i = i_tau; i < i_tau + n_eps; ++i)
        out.values[static_cast<std::size_t>(i + g.history_steps)] = v;
    return out;
}

}  // namespace delaymp
