#pragma once

#include <cmath>

#include "core.hpp"

namespace delaymp {

/// Uniform grid on [-delta, T] with step dt = T / n_steps.  The delay must be
/// an exact multiple of the step: delta = history_steps * dt.  Node index i
/// ranges over [-history_steps, n_steps] and maps to time i * dt.
struct TimeGrid {
    double horizon = 0.0;       // T
    double delta = 0.0;         // delay
    int n_steps = 0;            // N
    int history_steps = 0;      // k, delta / dt
    double dt = 0.0;

    static TimeGrid make(double horizon, double delta, int n_steps) {
        require(horizon > 0.0, ErrorKind::parameter, "grid horizon must be positive");
        require(n_steps >= 2, ErrorKind::parameter, "grid needs at least 2 steps");
        require(delta > 0.0 && delta < horizon, ErrorKind::parameter,
                "delay must lie strictly inside (0, horizon)");
        TimeGrid g;
        g.horizon = horizon;
        g.delta = delta;
        g.n_steps = n_steps;
        g.dt = horizon / n_steps;
        const double ratio = delta / g.dt;
        const double rounded = std::round(ratio);
        require(std::abs(ratio - rounded) <= 1e-9 * (1.0 + std::abs(ratio)), ErrorKind::alignment,
                "delay is not an integer multiple of the grid step");
        g.history_steps = static_cast<int>(rounded);
        require(g.history_steps >= 1 && g.history_steps < n_steps, ErrorKind::alignment,
                "delay must span at least one full step and be shorter than the horizon");
        return g;
    }

    double time(int i) const { return i * dt; }

    /// Node index of a grid-aligned time; rejects off-grid values.
    int index_of(double t, const char* what = "time") const {
        const double ratio = t / dt;
        const double rounded = std::round(ratio);
        require(std::abs(ratio - rounded) <= 1e-9 * (1.0 + std::abs(ratio)), ErrorKind::alignment,
                std::string(what) + " is not grid-aligned");
        const int i = static_cast<int>(rounded);
        require(i >= -history_steps && i <= n_steps, ErrorKind::parameter,
                std::string(what) + " lies outside the grid");
        return i;
    }
};

}  // namespace delaymp
