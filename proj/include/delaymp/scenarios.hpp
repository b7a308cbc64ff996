#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "core.hpp"
#include "problem.hpp"

namespace delaymp {

/// A named problem together with the default candidate control, spike value
/// and spike location used by the verification pipelines.
struct Scenario {
    ProblemSpec spec;
    Vec candidate;        // constant candidate control u*
    Vec candidate_hist;   // constant control history eta
    Vec spike;            // default perturbation value v
    double tau = 0.3;     // default spike start
};

inline std::vector<std::string> scenario_names() {
    return {"lq-scalar", "consumption", "pointwise-cost", "no-delay-classical", "delayed-drift"};
}

namespace detail {

inline Vec c1(double v) { return Vec::Constant(1, v); }

// Packs scalar partials into the 1 x 3 jacobian layout [f_x f_y f_z].
inline Mat jac1(double fx, double fy, double fz) {
    Mat j(1, 3);
    j << fx, fy, fz;
    return j;
}

inline Vec grad1(double fx, double fy, double fz) {
    Vec g(3);
    g << fx, fy, fz;
    return g;
}

inline Mat hess_xx(double v) {
    Mat h = Mat::Zero(3, 3);
    h(0, 0) = v;
    return h;
}

}  // namespace detail

/// Scalar linear-quadratic problem with state, delayed state and delayed
/// control in both drift and diffusion.  The candidate u* = 0 with zero
/// history is exactly optimal (the cost is nonnegative and vanishes there),
/// so the maximum-condition scan should be clean on it.
inline Scenario scenario_lq_scalar() {
    using detail::c1;
    const double A = 0.5, B = 1.0, Bd = 0.3;   // drift: A x + B u + Bd mu
    const double Cd = 0.4, D = 0.5, Dd = 0.2;  // diffusion: Cd y + D u + Dd mu
    const double Q00 = 1.0, Q11 = 2.0, R00 = 1.0, R11 = 0.5, G = 1.0;
    Scenario s;
    s.spec.name = "lq-scalar";
    s.spec.n = s.spec.m = s.spec.d = 1;
    s.spec.delay = {0.25, 0.0, 1.0};
    s.spec.controls = ControlSet::box(c1(-1.0), c1(1.0), 21);
    s.spec.initial.state_history = [](double) { return detail::c1(0.0); };
    s.spec.initial.control_history = [](double) { return detail::c1(0.0); };
    auto& C = s.spec.coeffs;
    C.drift = [=](const CoeffPoint& p) { return c1(A * p.x[0] + B * p.u[0] + Bd * p.mu[0]); };
    C.diffusion = [=](const CoeffPoint& p) {
        return Mat::Constant(1, 1, Cd * p.y[0] + D * p.u[0] + Dd * p.mu[0]);
    };
    C.running_cost = [=](const CoeffPoint& p) {
        return 0.5 * (Q00 * p.x[0] * p.x[0] + Q11 * p.y[0] * p.y[0] + R00 * p.u[0] * p.u[0] +
                      R11 * p.mu[0] * p.mu[0]);
    };
    C.terminal_cost = [=](const Vec& x, const Vec&, const Vec&) { return 0.5 * G * x[0] * x[0]; };
    C.drift_jac = [=](const CoeffPoint&) { return detail::jac1(A, 0.0, 0.0); };
    C.diffusion_jac = [=](const CoeffPoint&, int) { return detail::jac1(0.0, Cd, 0.0); };
    C.running_cost_grad = [=](const CoeffPoint& p) {
        return detail::grad1(Q00 * p.x[0], Q11 * p.y[0], 0.0);
    };
    C.terminal_cost_grad = [=](const Vec& x, const Vec&, const Vec&) {
        return detail::grad1(G * x[0], 0.0, 0.0);
    };
    C.running_cost_hess = [=](const CoeffPoint&) {
        Mat h = Mat::Zero(3, 3);
        h(0, 0) = Q00;
        h(1, 1) = Q11;
        return h;
    };
    C.terminal_cost_hess = [=](const Vec&, const Vec&, const Vec&) { return detail::hess_xx(G); };
    s.candidate = c1(0.0);
    s.candidate_hist = c1(0.0);
    s.spike = c1(0.6);
    s.tau = 0.3;
    return s;
}

/// Consumption-style problem: wealth with a sliding-average feedback term,
/// concave consumption utility, linear terminal reward.  All state
/// derivatives along any candidate are constants, so the adjoint systems run
/// in the deterministic-coefficient mode even though paths are random.
inline Scenario scenario_consumption() {
    using detail::c1;
    const double c1f = 0.1, c2 = 0.3, s0 = 0.2, gamma = 0.5;
    Scenario s;
    s.spec.name = "consumption";
    s.spec.n = s.spec.m = s.spec.d = 1;
    s.spec.delay = {0.25, 1.0, 1.0};
    s.spec.controls = ControlSet::box(c1(0.05), c1(1.0), 20);
    s.spec.initial.state_history = [](double) { return detail::c1(1.0); };
    s.spec.initial.control_history = [](double) { return detail::c1(0.2); };
    auto& C = s.spec.coeffs;
    C.drift = [=](const CoeffPoint& p) { return c1(c1f * p.x[0] + c2 * p.z[0] - p.u[0]); };
    C.diffusion = [=](const CoeffPoint& p) { return Mat::Constant(1, 1, s0 * p.x[0]); };
    C.running_cost = [=](const CoeffPoint& p) { return -std::pow(p.u[0], gamma) / gamma; };
    C.terminal_cost = [](const Vec& x, const Vec&, const Vec&) { return -x[0]; };
    C.drift_jac = [=](const CoeffPoint&) { return detail::jac1(c1f, 0.0, c2); };
    C.diffusion_jac = [=](const CoeffPoint&, int) { return detail::jac1(s0, 0.0, 0.0); };
    C.running_cost_grad = [](const CoeffPoint&) { return detail::grad1(0.0, 0.0, 0.0); };
    C.terminal_cost_grad = [](const Vec&, const Vec&, const Vec&) {
        return detail::grad1(-1.0, 0.0, 0.0);
    };
    s.candidate = c1(0.2);
    s.candidate_hist = c1(0.2);
    s.spike = c1(0.8);
    s.tau = 0.3;
    return s;
}

/// Control-free dynamics with a separable control penalty in both the live
/// and the delayed slot.  The pointwise argmin u* = 0.3 satisfies the
/// maximum condition; any other constant candidate violates it.
inline Scenario scenario_pointwise_cost() {
    using detail::c1;
    Scenario s;
    s.spec.name = "pointwise-cost";
    s.spec.n = s.spec.m = s.spec.d = 1;
    s.spec.delay = {0.25, 0.0, 1.0};
    s.spec.controls = ControlSet::finite({c1(0.0), c1(0.3), c1(1.0)});
    s.spec.initial.state_history = [](double) { return detail::c1(1.0); };
    s.spec.initial.control_history = [](double) { return detail::c1(0.3); };
    auto& C = s.spec.coeffs;
    C.drift = [](const CoeffPoint& p) { return detail::c1(-0.2 * p.x[0] + 0.1 * p.y[0]); };
    C.diffusion = [](const CoeffPoint&) { return Mat::Zero(1, 1); };
    C.running_cost = [](const CoeffPoint& p) {
        const double a = p.u[0] - 0.3, b = p.mu[0] - 0.3;
        return a * a + b * b;
    };
    C.terminal_cost = [](const Vec&, const Vec&, const Vec&) { return 0.0; };
    C.drift_jac = [](const CoeffPoint&) { return detail::jac1(-0.2, 0.1, 0.0); };
    C.diffusion_jac = [](const CoeffPoint&, int) { return detail::jac1(0.0, 0.0, 0.0); };
    C.running_cost_grad = [](const CoeffPoint&) { return detail::grad1(0.0, 0.0, 0.0); };
    C.terminal_cost_grad = [](const Vec&, const Vec&, const Vec&) {
        return detail::grad1(0.0, 0.0, 0.0);
    };
    s.candidate = c1(0.3);
    s.candidate_hist = c1(0.3);
    s.spike = c1(1.0);
    s.tau = 0.3;
    return s;
}

/// No delay dependence at all (the delay only shapes the grid): drift is the
/// control, diffusion is the state.  Matches the classical-case reduction
/// with b_x = 0, sigma_x = 1, h_xx = 1.
inline Scenario scenario_no_delay_classical() {
    using detail::c1;
    Scenario s;
    s.spec.name = "no-delay-classical";
    s.spec.n = s.spec.m = s.spec.d = 1;
    s.spec.delay = {0.25, 0.0, 1.0};
    s.spec.controls = ControlSet::box(c1(-1.0), c1(1.0), 11);
    s.spec.initial.state_history = [](double) { return detail::c1(0.0); };
    s.spec.initial.control_history = [](double) { return detail::c1(0.0); };
    auto& C = s.spec.coeffs;
    C.drift = [](const CoeffPoint& p) { return p.u; };
    C.diffusion = [](const CoeffPoint& p) { return Mat::Constant(1, 1, p.x[0]); };
    C.running_cost = [](const CoeffPoint& p) { return p.u[0] * p.u[0]; };
    C.terminal_cost = [](const Vec& x, const Vec&, const Vec&) { return 0.5 * x[0] * x[0]; };
    C.drift_jac = [](const CoeffPoint&) { return detail::jac1(0.0, 0.0, 0.0); };
    C.diffusion_jac = [](const CoeffPoint&, int) { return detail::jac1(1.0, 0.0, 0.0); };
    C.running_cost_grad = [](const CoeffPoint&) { return detail::grad1(0.0, 0.0, 0.0); };
    C.terminal_cost_grad = [](const Vec& x, const Vec&, const Vec&) {
        return detail::grad1(x[0], 0.0, 0.0);
    };
    C.terminal_cost_hess = [](const Vec&, const Vec&, const Vec&) { return detail::hess_xx(1.0); };
    s.candidate = c1(0.0);
    s.candidate_hist = c1(0.0);
    s.spike = c1(0.5);
    s.tau = 0.3;
    return s;
}

/// Nonlinear drift with pointwise and sliding delays, and a diffusion whose
/// state slope depends on the control.  Built for the needle-variation order
/// checks: the first variation is noise-dominated (order eps in mean square)
/// while the remainder after subtracting it is of higher order.
inline Scenario scenario_delayed_drift() {
    using detail::c1;
    const double a0 = 0.5, a1 = 1.0, a2 = 0.3;       // drift: a0 y + a2 sin(x) + a1 u + 0.2 z
    const double s0 = 0.2, s1 = 0.1, s2 = 0.4, s3 = 0.2;  // sigma: s0 x + s1 sin(x) + (s2 + s3 x) u
    Scenario s;
    s.spec.name = "delayed-drift";
    s.spec.n = s.spec.m = s.spec.d = 1;
    s.spec.delay = {0.25, 0.5, 1.0};
    s.spec.controls = ControlSet::box(c1(-1.0), c1(1.0), 11);
    s.spec.initial.state_history = [](double) { return detail::c1(1.0); };
    s.spec.initial.control_history = [](double) { return detail::c1(0.1); };
    auto& C = s.spec.coeffs;
    C.drift = [=](const CoeffPoint& p) {
        return c1(a0 * p.y[0] + 0.2 * p.z[0] + a2 * std::sin(p.x[0]) + a1 * p.u[0]);
    };
    C.diffusion = [=](const CoeffPoint& p) {
        return Mat::Constant(1, 1,
                             s0 * p.x[0] + s1 * std::sin(p.x[0]) + (s2 + s3 * p.x[0]) * p.u[0]);
    };
    C.running_cost = [](const CoeffPoint& p) {
        return 0.5 * (p.u[0] * p.u[0] + p.x[0] * p.x[0]);
    };
    C.terminal_cost = [](const Vec& x, const Vec&, const Vec&) { return 0.5 * x[0] * x[0]; };
    C.drift_jac = [=](const CoeffPoint& p) {
        return detail::jac1(a2 * std::cos(p.x[0]), a0, 0.2);
    };
    C.diffusion_jac = [=](const CoeffPoint& p, int) {
        return detail::jac1(s0 + s1 * std::cos(p.x[0]) + s3 * p.u[0], 0.0, 0.0);
    };
    C.running_cost_grad = [](const CoeffPoint& p) { return detail::grad1(p.x[0], 0.0, 0.0); };
    C.terminal_cost_grad = [](const Vec& x, const Vec&, const Vec&) {
        return detail::grad1(x[0], 0.0, 0.0);
    };
    C.drift_hess = [=](const CoeffPoint& p, int) { return detail::hess_xx(-a2 * std::sin(p.x[0])); };
    C.diffusion_hess = [=](const CoeffPoint& p, int, int) {
        return detail::hess_xx(-s1 * std::sin(p.x[0]));
    };
    C.running_cost_hess = [](const CoeffPoint&) { return detail::hess_xx(1.0); };
    C.terminal_cost_hess = [](const Vec&, const Vec&, const Vec&) { return detail::hess_xx(1.0); };
    s.candidate = c1(0.1);
    s.candidate_hist = c1(0.1);
    s.spike = c1(0.8);
    s.tau = 0.3;
    return s;
}

inline Scenario make_scenario(const std::string& name) {
    if (name == "lq-scalar") return scenario_lq_scalar();
    if (name == "consumption") return scenario_consumption();
    if (name == "pointwise-cost") return scenario_pointwise_cost();
    if (name == "no-delay-classical") return scenario_no_delay_classical();
    if (name == "delayed-drift") return scenario_delayed_drift();
    fail(ErrorKind::config, "unknown scenario '" + name + "'");
}

}  // namespace delaymp
