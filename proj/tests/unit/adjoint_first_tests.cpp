#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "../support/test_problems.hpp"
#include "delaymp/adjoint_first.hpp"
#include "delaymp/scenarios.hpp"

using namespace delaymp;
using testprob::c1;
using testprob::traced;

TEST_CASE("flat problem has an identically zero costate pair") {
    ProblemSpec spec = testprob::plain_effort().spec;  // gradients all zero
    auto t = traced(spec, c1(0.0), c1(0.0), 60, 1, 1, false);
    FirstOrderAdjoint adj = solve_first_adjoint(spec, t.g, t.traces);
    double sup = 0.0;
    for (int i = 0; i <= 60; ++i)
        sup = std::max({sup, adj.p[i].cwiseAbs().maxCoeff(), adj.ptilde[i].cwiseAbs().maxCoeff()});
    CHECK(sup == 0.0);
}

TEST_CASE("sliding-only terminal cost pins the companion and ramps the costate") {
    const double c = 0.7;
    ProblemSpec spec = testprob::sliding_terminal(c);
    auto t = traced(spec, c1(0.0), c1(0.0), 80, 1, 2, false);
    FirstOrderAdjoint adj = solve_first_adjoint(spec, t.g, t.traces);
    double worst_pt = 0.0, worst_p = 0.0;
    for (int i = 0; i <= 80; ++i) {
        worst_pt = std::max(worst_pt, std::abs(adj.ptilde[i][0] - c));
        const double expect = c * std::min(spec.delay.delta, t.g.horizon - t.g.time(i));
        worst_p = std::max(worst_p, std::abs(adj.p[i][0] - expect));
    }
    CHECK(worst_pt <= 1e-14);
    CHECK(worst_p <= 1e-12);
    // the integral route reproduces the same ramp through its weight factor
    std::vector<Vec> svie = solve_first_adjoint_svie(spec, t.g, t.traces);
    double gap = 0.0;
    for (int i = 0; i <= 80; ++i) gap = std::max(gap, std::abs(svie[i][0] - adj.p[i][0]));
    CHECK(gap <= 1e-12);
}

TEST_CASE("exponential-growth costate compounds to (1 + dt)^N") {
    ProblemSpec spec = testprob::exp_growth();
    auto t = traced(spec, c1(0.0), c1(0.0), 400, 1, 3, false);
    FirstOrderAdjoint adj = solve_first_adjoint(spec, t.g, t.traces);
    CHECK(adj.p[0][0] == Catch::Approx(std::pow(1.0 + t.g.dt, 400)).epsilon(1e-13));
    CHECK(std::abs(adj.p[0][0] - std::exp(1.0)) <= 5e-3);  // coarse grid, first order
}

TEST_CASE("both costate routes agree on the deterministic scenarios") {
    for (const std::string& name :
         {std::string("lq-scalar"), std::string("consumption"), std::string("pointwise-cost"),
          std::string("no-delay-classical")}) {
        Scenario sc = make_scenario(name);
        auto t = traced(sc.spec, sc.candidate_hist, sc.candidate, 100, 2, 7, false);
        FirstOrderAdjoint adj = solve_first_adjoint(sc.spec, t.g, t.traces);
        std::vector<Vec> svie = solve_first_adjoint_svie(sc.spec, t.g, t.traces);
        double gap = 0.0, scale = 0.0;
        for (int i = 0; i <= 100; ++i) {
            gap = std::max(gap, (adj.p[i] - svie[i]).cwiseAbs().maxCoeff());
            scale = std::max(scale, adj.p[i].cwiseAbs().maxCoeff());
        }
        INFO(name << ": route gap " << gap << " scale " << scale);
        CHECK(gap <= 10.0 * t.g.dt * (1.0 + scale));
    }
}

TEST_CASE("vanishing decay rate matches a small positive one") {
    ProblemSpec zero = testprob::sliding_terminal(0.7);
    ProblemSpec tiny = zero;
    tiny.delay.lambda = 1e-6;
    auto tz = traced(zero, c1(0.0), c1(0.0), 80, 1, 4, false);
    auto tt = traced(tiny, c1(0.0), c1(0.0), 80, 1, 4, false);
    std::vector<Vec> pz = solve_first_adjoint_svie(zero, tz.g, tz.traces);
    std::vector<Vec> pt = solve_first_adjoint_svie(tiny, tt.g, tt.traces);
    double gap = 0.0;
    for (int i = 0; i <= 80; ++i) gap = std::max(gap, (pz[i] - pt[i]).cwiseAbs().maxCoeff());
    CHECK(gap <= 1e-4);
}

TEST_CASE("path-dependent derivatives are refused in deterministic mode") {
    Scenario sc = make_scenario("delayed-drift");  // sin(x) bends the jacobians
    auto t = traced(sc.spec, sc.candidate_hist, sc.candidate, 60, 4, 9, false);
    CHECK_THROWS_AS(solve_first_adjoint(sc.spec, t.g, t.traces), Error);
    try {
        solve_first_adjoint(sc.spec, t.g, t.traces);
    } catch (const Error& e) {
        CHECK(e.kind == ErrorKind::mode);
    }
}

TEST_CASE("terminal values load the stated gradients") {
    ProblemSpec spec = testprob::linear_det();
    auto t = traced(spec, c1(1.0), c1(0.1), 80, 1, 11, false);
    FirstOrderAdjoint adj = solve_first_adjoint(spec, t.g, t.traces);
    const PathTrace& tr = t.traces.front();
    CHECK((adj.p[80] - tr.hx()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((adj.ptilde[80] - tr.hz()).cwiseAbs().maxCoeff() == 0.0);
}
