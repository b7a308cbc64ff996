#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "../support/test_problems.hpp"
#include "delaymp/adjoint_first.hpp"
#include "delaymp/adjoint_second.hpp"
#include "delaymp/diagnostics.hpp"
#include "delaymp/duality.hpp"
#include "delaymp/mp_check.hpp"
#include "delaymp/scenarios.hpp"

using namespace delaymp;
using testprob::c1;
using testprob::traced;

TEST_CASE("control-free dynamics make the expansion exact") {
    Scenario sc = testprob::plain_effort();
    auto t = traced(sc.spec, sc.candidate_hist, sc.candidate, 80, 1, 3, true);
    FirstOrderAdjoint adj = solve_first_adjoint(sc.spec, t.g, t.traces);
    SecondOrderKernels K = solve_kernels(sc.spec, t.g, t.traces);
    CurlyP curly = assemble_curly_P(K, sc.spec);
    ExpansionReport rep = spike_expansion_check(sc.spec, t.ctrl, sc.spike, {0.3},
                                                {0.1, 0.05, 0.025}, adj, curly, *t.bundle, 1);
    REQUIRE(rep.legs.size() == 3);
    for (const ExpansionLeg& leg : rep.legs) {
        // J(u^eps) - J(u*) = eps * v^2 exactly under the shared quadrature
        CHECK(leg.fd == Catch::Approx(leg.eps * 1.0).margin(1e-14));
        CHECK(std::abs(leg.residual) <= 1e-14);
        CHECK(leg.residual_se <= 1e-14);
    }
}

TEST_CASE("spiking with the candidate value predicts nothing and costs nothing") {
    Scenario sc = make_scenario("lq-scalar");
    auto t = traced(sc.spec, sc.candidate_hist, sc.candidate, 80, 8, 5, true);
    FirstOrderAdjoint adj = solve_first_adjoint(sc.spec, t.g, t.traces);
    SecondOrderKernels K = solve_kernels(sc.spec, t.g, t.traces);
    CurlyP curly = assemble_curly_P(K, sc.spec);
    ExpansionReport rep = spike_expansion_check(sc.spec, t.ctrl, sc.candidate, {0.3}, {0.05},
                                                adj, curly, *t.bundle, 1);
    REQUIRE(rep.legs.size() == 1);
    CHECK(rep.legs[0].fd == 0.0);
    CHECK(rep.legs[0].prediction == 0.0);
}

TEST_CASE("residual over eps shrinks on the noisy quadratic scenario") {
    Scenario sc = make_scenario("lq-scalar");
    auto t = traced(sc.spec, sc.candidate_hist, sc.candidate, 100, 4000, 7, true);
    FirstOrderAdjoint adj = solve_first_adjoint(sc.spec, t.g, t.traces);
    SecondOrderKernels K = solve_kernels(sc.spec, t.g, t.traces);
    CurlyP curly = assemble_curly_P(K, sc.spec);
    ExpansionReport rep = spike_expansion_check(sc.spec, t.ctrl, sc.spike, {sc.tau},
                                                {0.04, 0.02, 0.01}, adj, curly, *t.bundle, 1);
    REQUIRE(rep.legs.size() == 3);
    CHECK(std::abs(rep.legs[1].residual_over_eps) < std::abs(rep.legs[0].residual_over_eps));
    CHECK(std::abs(rep.legs[2].residual_over_eps) < std::abs(rep.legs[1].residual_over_eps));
}

TEST_CASE("raw two-time contraction matches the assembled quadratic leg") {
    Scenario sc = make_scenario("lq-scalar");
    auto t = traced(sc.spec, sc.candidate_hist, sc.candidate, 80, 2, 9, true);
    SecondOrderKernels K = solve_kernels(sc.spec, t.g, t.traces);
    CurlyP curly = assemble_curly_P(K, sc.spec);
    SpikePlan plan = make_spike_plan(t.g, sc.spec.controls, sc.spike, sc.tau, 0.05);
    const int k = t.g.history_steps, N = t.g.n_steps;
    std::vector<int> nodes;
    std::vector<Mat> dsig;
    const StatePath& path = t.batch.paths.front();
    auto sigma_at = [&](int i, const Vec& u, const Vec& mu) {
        CoeffPoint pt;
        pt.t = t.g.time(i);
        pt.x = path.x(i);
        pt.y = path.y(i);
        pt.z = path.z(i);
        pt.u = u;
        pt.mu = mu;
        return sc.spec.coeffs.diffusion(pt);
    };
    for (int i = plan.start; i < plan.start + plan.len; ++i) {
        nodes.push_back(i);
        dsig.push_back(sigma_at(i, sc.spike, t.ctrl.mu(i)) -
                       sigma_at(i, t.ctrl.u(i), t.ctrl.mu(i)));
    }
    for (int i = plan.start + k; i < std::min(plan.start + k + plan.len, N); ++i) {
        nodes.push_back(i);
        dsig.push_back(sigma_at(i, t.ctrl.u(i), sc.spike) -
                       sigma_at(i, t.ctrl.u(i), t.ctrl.mu(i)));
    }
    const double raw = expansion_curvature_raw(K, sc.spec, nodes, dsig);
    double assembled = 0.0;
    for (std::size_t s = 0; s < nodes.size(); ++s) {
        const Mat& P = curly.value[static_cast<std::size_t>(nodes[s])];
        for (int j = 0; j < sc.spec.d; ++j)
            assembled += 0.5 * t.g.dt * (dsig[s].col(j).transpose() * P * dsig[s].col(j))(0, 0);
    }
    CHECK(std::abs(raw - assembled) <= 10.0 * t.g.dt);
    CHECK(std::abs(raw - assembled) <= 1e-10);  // deterministic coefficients: near machine
}

TEST_CASE("duality gap vanishes under deterministic quadrature") {
    ProblemSpec spec = testprob::linear_det();
    TimeGrid g = TimeGrid::make(1.0, 0.25, 200);
    BrownianBundle bundle(g, 2, 1, 99, 1);
    auto ctrl = ControlProcess::constant(g, c1(0.1), c1(0.1));
    SpikePlan plan = make_spike_plan(g, spec.controls, c1(0.9), 0.3, 0.1);
    DualityReport rep = check_duality(spec, ctrl, plan, bundle, 1);
    CHECK(std::abs(rep.gap) <= 1e-10);
    CHECK(rep.pass);
}

TEST_CASE("duality gap stays within noise for random coefficients") {
    ProblemSpec spec = testprob::lq_linear_cost();
    TimeGrid g = TimeGrid::make(1.0, 0.25, 100);
    BrownianBundle bundle(g, 800, 1, 424242, 1);
    auto ctrl = ControlProcess::constant(g, c1(0.1), c1(0.1));
    SpikePlan plan = make_spike_plan(g, spec.controls, c1(0.7), 0.3, 2.0 * g.dt);
    DualityReport rep = check_duality(spec, ctrl, plan, bundle, 1);
    INFO("gap " << rep.gap << " combined se " << rep.combined_stderr);
    CHECK(rep.pass);
}

TEST_CASE("slope fit recovers exact power laws and rejects degeneracy") {
    CHECK(fit_loglog_slope({1.0, 2.0, 4.0}, {1.0, 4.0, 16.0}) ==
          Catch::Approx(2.0).margin(1e-12));
    CHECK(fit_loglog_slope({0.5, 0.25}, {0.5, 0.25}) == Catch::Approx(1.0).margin(1e-12));
    CHECK_THROWS_AS(fit_loglog_slope({1.0, 1.0}, {1.0, 2.0}), Error);
    CHECK_THROWS_AS(fit_loglog_slope({1.0, -2.0}, {1.0, 2.0}), Error);
    CHECK_THROWS_AS(fit_loglog_slope({1.0}, {1.0}), Error);
}

TEST_CASE("empirical orders separate the first variation from the remainder") {
    Scenario sc = make_scenario("delayed-drift");
    TimeGrid g = TimeGrid::make(1.0, 0.25, 100);
    BrownianBundle bundle(g, 800, sc.spec.d, 1234, 1);
    auto ctrl = ControlProcess::constant(g, sc.candidate_hist, sc.candidate);
    OrderReport rep =
        empirical_order_check(sc.spec, ctrl, sc.spike, sc.tau, {0.08, 0.04, 0.02}, bundle, 1);
    REQUIRE(rep.samples.size() == 3);
    INFO("slopes " << rep.slope_first << " / " << rep.slope_remainder);
    CHECK(rep.slope_first > 0.75);
    CHECK(rep.slope_first < 1.25);
    CHECK(rep.slope_remainder > 1.2);
    for (const OrderSample& s : rep.samples) {
        CHECK(s.first_moment > 0.0);
        CHECK(s.remainder_moment < s.first_moment);
    }
}
