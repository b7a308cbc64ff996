#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "../support/test_problems.hpp"
#include "delaymp/adjoint_second.hpp"
#include "delaymp/scenarios.hpp"

using namespace delaymp;
using testprob::traced;

namespace {

double sup_rel_vs_ode(const TimeGrid& g, const CurlyP& cp, const LqCurvaturePath& ode) {
    double sup_diff = 0.0, sup_ref = 0.0;
    for (int r = 0; r <= g.n_steps; ++r) {
        const double ref = ode.at(g.time(r))(0, 0);
        sup_ref = std::max(sup_ref, std::abs(ref));
        sup_diff = std::max(sup_diff, std::abs(cp.value[static_cast<std::size_t>(r)](0, 0) - ref));
    }
    return sup_diff / (1.0 + sup_ref);
}

double max_asym(const CurlyP& cp) {
    double worst = 0.0;
    for (const auto& M : cp.value) {
        const double norm = 1.0 + M.cwiseAbs().maxCoeff();
        worst = std::max(worst, (M - M.transpose()).cwiseAbs().maxCoeff() / norm);
    }
    return worst;
}

double max_diff(const CurlyP& a, const CurlyP& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.value.size(); ++i)
        worst = std::max(worst, (a.value[i] - b.value[i]).cwiseAbs().maxCoeff());
    return worst;
}

LqOdeParams scalar_params(double a, double c, double q0, double q1, double gw) {
    LqOdeParams par;
    par.drift_gain = Mat::Constant(1, 1, a);
    par.delay_gain = Mat::Constant(1, 1, c);
    par.running_weight = Mat::Constant(1, 1, q0);
    par.delayed_weight = Mat::Constant(1, 1, q1);
    par.terminal_weight = Mat::Constant(1, 1, gw);
    par.horizon = 1.0;
    par.delta = 0.25;
    par.step = 1e-3;
    return par;
}

}  // namespace

TEST_CASE("piecewise-linear curvature ODE reproduces its closed form") {
    // With zero gains the delayed indicator is the only structure: the path
    // is 1 + (T - t) before the last delay window plus 2 * delta inside it.
    LqOdeParams par = scalar_params(0.0, 0.0, 1.0, 2.0, 1.0);
    LqCurvaturePath ode = solve_lq_P_ode(par);
    CHECK(std::abs(ode.at(0.9)(0, 0) - 1.1) <= 1e-10);
    CHECK(std::abs(ode.at(0.75)(0, 0) - 1.25) <= 1e-10);
    CHECK(std::abs(ode.at(0.5)(0, 0) - 2.0) <= 1e-10);
    CHECK(std::abs(ode.at(1.0)(0, 0) - 1.0) <= 1e-12);
}

TEST_CASE("kernel assembly approaches the delayed curvature ODE") {
    Scenario sc = make_scenario("lq-scalar");
    LqOdeParams par = scalar_params(0.5, 0.4, 1.0, 2.0, 1.0);
    LqCurvaturePath ode = solve_lq_P_ode(par);
    auto t = traced(sc.spec, sc.candidate_hist, sc.candidate, 200, 2, 11, true);
    SecondOrderKernels K = solve_kernels(sc.spec, t.g, t.traces);
    CurlyP cp = assemble_curly_P(K, sc.spec);
    const double err = sup_rel_vs_ode(t.g, cp, ode);
    INFO("sup relative error at N=200: " << err);
    CHECK(err <= 0.02);
    CHECK(max_asym(cp) <= 1e-10);
    CHECK(max_diff(cp, assemble_curly_P_compact(K, sc.spec)) <= 1e-12);
    double worst_parts = 0.0;
    for (int r = 0; r <= 200; r += 25) {
        CurlyPartSums ps = curly_quadratic_parts(K, r);
        worst_parts = std::max(worst_parts,
                               (ps.total() - cp.value[static_cast<std::size_t>(r)])
                                   .cwiseAbs()
                                   .maxCoeff());
    }
    CHECK(worst_parts <= 1e-12);
}

TEST_CASE("delay-free problem collapses to the classical backward ODE") {
    Scenario sc = make_scenario("no-delay-classical");
    auto t = traced(sc.spec, sc.candidate_hist, sc.candidate, 200, 3, 21, true);
    SecondOrderKernels K = solve_kernels(sc.spec, t.g, t.traces);
    CurlyP cp = assemble_curly_P(K, sc.spec);
    const double e1 = std::exp(1.0);
    // the discrete product form is exact for this problem
    CHECK(std::abs(cp.value[0](0, 0) - std::pow(1.0 + t.g.dt, 200)) <= 1e-10);
    CHECK(std::abs(cp.value[0](0, 0) - e1) / e1 <= 0.02);
    std::vector<Mat> P = solve_classical_P_bsde(sc.spec, t.g, t.traces);
    CHECK(std::abs(P[0](0, 0) - e1) <= 1e-4);
    double worst = 0.0;
    for (int r = 0; r <= 200; ++r)
        worst = std::max(worst, std::abs(cp.value[static_cast<std::size_t>(r)](0, 0) -
                                         P[static_cast<std::size_t>(r)](0, 0)));
    CHECK(worst / (1.0 + e1) <= 0.02);
    // nothing may leak out of the instantaneous block without delay terms
    double off = 0.0;
    for (int r = 0; r <= 200; ++r) {
        Mat m2 = K.P2[static_cast<std::size_t>(r)], m3 = K.P3[static_cast<std::size_t>(r)];
        m2(0, 0) = 0.0;
        m3(0, 0) = 0.0;
        off = std::max({off, m2.cwiseAbs().maxCoeff(), m3.cwiseAbs().maxCoeff()});
    }
    CHECK(off <= 1e-12);
}

TEST_CASE("control-only delay kills the cross block of the two-time kernel") {
    Scenario sc = testprob::control_delay_only();
    auto t = traced(sc.spec, sc.candidate_hist, sc.candidate, 80, 2, 31, true);
    SecondOrderKernels K = solve_kernels(sc.spec, t.g, t.traces);
    double cross = 0.0;
    for (int th = 0; th <= 80; ++th)
        for (int r = 0; r <= th; ++r)
            cross = std::max(cross, std::abs(K.p4_block(th, r, 0, 1)(0, 0)));
    CHECK(cross <= 1e-10);
    CurlyP cp = assemble_curly_P(K, sc.spec);
    CHECK(max_diff(cp, assemble_curly_P_compact(K, sc.spec)) <= 1e-12);
    CHECK(max_asym(cp) <= 1e-10);
}

TEST_CASE("curvature-free costs produce exactly zero kernels") {
    Scenario sc = make_scenario("consumption");
    auto t = traced(sc.spec, sc.candidate_hist, sc.candidate, 60, 2, 41, true);
    SecondOrderKernels K = solve_kernels(sc.spec, t.g, t.traces);
    double worst = K.P1.cwiseAbs().maxCoeff();
    for (const auto& M : K.P2) worst = std::max(worst, M.cwiseAbs().maxCoeff());
    for (const auto& M : K.P3) worst = std::max(worst, M.cwiseAbs().maxCoeff());
    for (const auto& M : K.P4) worst = std::max(worst, M.cwiseAbs().maxCoeff());
    CHECK(worst == 0.0);
}

TEST_CASE("nonlinear drift keeps all three curvature assemblies in agreement") {
    Scenario sc = testprob::bent_drift();
    auto t = traced(sc.spec, sc.candidate_hist, sc.candidate, 80, 2, 51, true);
    SecondOrderKernels K = solve_kernels(sc.spec, t.g, t.traces);
    CurlyP cp = assemble_curly_P(K, sc.spec);
    CHECK(max_diff(cp, assemble_curly_P_compact(K, sc.spec)) <= 1e-12);
    double worst_parts = 0.0;
    for (int r = 0; r <= 80; r += 8) {
        CurlyPartSums ps = curly_quadratic_parts(K, r);
        worst_parts = std::max(worst_parts,
                               (ps.total() - cp.value[static_cast<std::size_t>(r)])
                                   .cwiseAbs()
                                   .maxCoeff());
    }
    CHECK(worst_parts <= 1e-12);
    CHECK(max_asym(cp) <= 1e-10);
}

TEST_CASE("classical reduction refuses delayed coefficients") {
    Scenario sc = make_scenario("lq-scalar");  // delayed drift and diffusion gains
    auto t = traced(sc.spec, sc.candidate_hist, sc.candidate, 60, 2, 61, true);
    CHECK_THROWS_AS(solve_classical_P_bsde(sc.spec, t.g, t.traces), Error);
    try {
        solve_classical_P_bsde(sc.spec, t.g, t.traces);
    } catch (const Error& e) {
        CHECK(e.kind == ErrorKind::mode);
    }
}

TEST_CASE("curvature ODE steps must divide the delay window") {
    LqOdeParams par = scalar_params(0.0, 0.0, 1.0, 2.0, 1.0);
    par.step = 0.3;  // does not divide delta = 0.25
    CHECK_THROWS_AS(solve_lq_P_ode(par), Error);
}
