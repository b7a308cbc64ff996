#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "adjoint_first.hpp"
#include "adjoint_second.hpp"
#include "brownian.hpp"
#include "config.hpp"
#include "core.hpp"
#include "diagnostics.hpp"
#include "duality.hpp"
#include "forward.hpp"
#include "mp_check.hpp"
#include "report.hpp"
#include "scenarios.hpp"
#include "state.hpp"
#include "trace.hpp"
#include "variational.hpp"

namespace delaymp {

inline std::vector<std::string> pipeline_names() {
    return {"simulate", "order-check", "expansion", "adjoint1",
            "adjoint2", "duality",     "verify-mp", "all"};
}

/// Scenario with all config overrides applied and the shared grid resolved.
struct ConfiguredRun {
    ScenarioConfig cfg;
    Scenario scenario;
    TimeGrid grid;
    std::vector<double> taus;
};

namespace detail {

inline Vec to_vec(const std::vector<double>& v) {
    Vec out(static_cast<int>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<int>(i)] = v[i];
    return out;
}

}  // namespace detail

inline ConfiguredRun configure_run(const ScenarioConfig& cfg) {
    ConfiguredRun run;
    run.cfg = cfg;
    run.scenario = make_scenario(cfg.scenario);
    ProblemSpec& sp = run.scenario.spec;
    if (cfg.delta) sp.delay.delta = *cfg.delta;
    if (cfg.lambda) sp.delay.lambda = *cfg.lambda;
    if (cfg.horizon) sp.delay.horizon = *cfg.horizon;
    require(sp.delay.delta < sp.delay.horizon, ErrorKind::config,
            "delay must be smaller than the horizon");
    if (!cfg.candidate.empty()) {
        require(static_cast<int>(cfg.candidate.size()) == sp.m, ErrorKind::config,
                "config key 'candidate' has the wrong dimension");
        run.scenario.candidate = detail::to_vec(cfg.candidate);
    }
    if (!cfg.candidate_history.empty()) {
        require(static_cast<int>(cfg.candidate_history.size()) == sp.m, ErrorKind::config,
                "config key 'candidate_history' has the wrong dimension");
        run.scenario.candidate_hist = detail::to_vec(cfg.candidate_history);
    }
    if (!cfg.spike.empty()) {
        require(static_cast<int>(cfg.spike.size()) == sp.m, ErrorKind::config,
                "config key 'spike' has the wrong dimension");
        run.scenario.spike = detail::to_vec(cfg.spike);
    }
    require(sp.controls.contains(run.scenario.candidate), ErrorKind::config,
            "candidate control is outside the admissible set");
    require(sp.controls.contains(run.scenario.spike), ErrorKind::config,
            "spike value is outside the admissible set");
    for (double e : cfg.eps_schedule)
        require(e < sp.delay.delta, ErrorKind::config,
                "spike widths must stay below the delay");
    const int N = cfg.n_steps != 0 ? cfg.n_steps : sp.default_steps;
    run.grid = TimeGrid::make(sp.delay.horizon, sp.delay.delta, N);
    run.taus = cfg.tau_list.empty() ? std::vector<double>{run.scenario.tau} : cfg.tau_list;
    return run;
}

namespace detail {

/// Shared lazily-built state for one pipeline invocation.
struct PipelineContext {
    const ConfiguredRun& run;
    std::filesystem::path out;
    BrownianBundle bundle;
    ControlProcess ctrl;
    std::optional<StateBatch> batch;
    std::vector<PathTrace> traces;
    std::optional<FirstOrderAdjoint> adj;
    std::optional<SecondOrderKernels> kernels;
    std::optional<CurlyP> curly;

    explicit PipelineContext(const ConfiguredRun& r)
        : run(r),
          out(r.cfg.out_dir),
          bundle(r.grid, r.cfg.n_paths, r.scenario.spec.d, r.cfg.seed, r.cfg.threads),
          ctrl(ControlProcess::constant(r.grid, r.scenario.candidate_hist,
                                        r.scenario.candidate)) {}

    const StateBatch& ensure_batch() {
        if (!batch) batch = simulate_sdde(run.scenario.spec, ctrl, bundle, run.cfg.threads);
        return *batch;
    }

    const std::vector<PathTrace>& ensure_traces() {
        if (traces.empty()) {
            const StateBatch& b = ensure_batch();
            traces.resize(b.paths.size());
            parallel_for(static_cast<int>(b.paths.size()), run.cfg.threads, [&](int p) {
                traces[static_cast<std::size_t>(p)] = eval_coefficients_along(
                    run.scenario.spec, b.paths[static_cast<std::size_t>(p)], ctrl, true);
            });
        }
        return traces;
    }

    const FirstOrderAdjoint& ensure_adjoint() {
        if (!adj) adj = solve_first_adjoint(run.scenario.spec, run.grid, ensure_traces());
        return *adj;
    }

    const SecondOrderKernels& ensure_kernels() {
        if (!kernels) kernels = solve_kernels(run.scenario.spec, run.grid, ensure_traces());
        return *kernels;
    }

    const CurlyP& ensure_curly() {
        if (!curly) curly = assemble_curly_P(ensure_kernels(), run.scenario.spec);
        return *curly;
    }

    std::string path(const std::string& file) const { return (out / file).string(); }
};

inline void pipeline_simulate(PipelineContext& ctx, RunReport& rep) {
    const ProblemSpec& spec = ctx.run.scenario.spec;
    const TimeGrid& g = ctx.run.grid;
    const StateBatch& b = ctx.ensure_batch();
    const int M = static_cast<int>(b.paths.size());
    std::vector<std::string> cols = {"node", "time"};
    for (int c = 0; c < spec.n; ++c) cols.push_back("x" + std::to_string(c) + "_mean");
    for (int c = 0; c < spec.n; ++c) cols.push_back("y" + std::to_string(c) + "_mean");
    for (int c = 0; c < spec.n; ++c) cols.push_back("z" + std::to_string(c) + "_mean");
    CsvWriter csv(ctx.path("simulate.csv"), cols);
    double max_abs = 0.0;
    for (int i = 0; i <= g.n_steps; ++i) {
        Vec xm = Vec::Zero(spec.n), ym = Vec::Zero(spec.n), zm = Vec::Zero(spec.n);
        for (int p = 0; p < M; ++p) {
            const StatePath& sp = b.paths[static_cast<std::size_t>(p)];
            xm += sp.x(i);
            ym += sp.y(i);
            zm += sp.z(i);
            max_abs = std::max(max_abs, sp.x(i).cwiseAbs().maxCoeff());
        }
        std::vector<double> row = {static_cast<double>(i), g.time(i)};
        for (int c = 0; c < spec.n; ++c) row.push_back(xm[c] / M);
        for (int c = 0; c < spec.n; ++c) row.push_back(ym[c] / M);
        for (int c = 0; c < spec.n; ++c) row.push_back(zm[c] / M);
        csv.row(row);
    }
    const CostEstimate cost = evaluate_cost(spec, b, ctx.ctrl, ctx.run.cfg.threads);
    rep.extra["cost_mean"] = cost.mean;
    rep.extra["cost_stderr"] = cost.stderr_;
    rep.checks.push_back({"simulate/paths-finite", std::isfinite(max_abs), max_abs, 0.0, 0.0});
}

inline void pipeline_order_check(PipelineContext& ctx, RunReport& rep) {
    const ConfiguredRun& run = ctx.run;
    require(run.cfg.eps_schedule.size() >= 2, ErrorKind::config,
            "order check needs at least two spike widths");
    const OrderReport ord =
        empirical_order_check(run.scenario.spec, ctx.ctrl, run.scenario.spike, run.taus.front(),
                              run.cfg.eps_schedule, ctx.bundle, run.cfg.threads);
    CsvWriter csv(ctx.path("order.csv"), {"eps", "first_moment", "remainder_moment"});
    for (const auto& s : ord.samples) csv.row({s.eps, s.first_moment, s.remainder_moment});
    rep.checks.push_back({"order/first-variation-slope",
                          ord.slope_first >= 0.85 && ord.slope_first <= 1.15, ord.slope_first,
                          0.15, 0.0});
    rep.checks.push_back(
        {"order/remainder-slope", ord.slope_remainder >= 1.3, ord.slope_remainder, 1.3, 0.0});
}

inline void pipeline_expansion(PipelineContext& ctx, RunReport& rep) {
    const ConfiguredRun& run = ctx.run;
    const ExpansionReport ex =
        spike_expansion_check(run.scenario.spec, ctx.ctrl, run.scenario.spike, run.taus,
                              run.cfg.eps_schedule, ctx.ensure_adjoint(), ctx.ensure_curly(),
                              ctx.bundle, run.cfg.threads);
    CsvWriter csv(ctx.path("expansion.csv"),
                  {"tau", "eps", "fd", "fd_stderr", "prediction", "residual", "residual_stderr",
                   "residual_over_eps"});
    for (const auto& l : ex.legs)
        csv.row({l.tau, l.eps, l.fd, l.fd_se, l.prediction, l.residual, l.residual_se,
                 l.residual_over_eps});
    const std::size_t per_tau = run.cfg.eps_schedule.size();
    bool monotone = true;
    double first_ratio = 0.0, last_ratio = 0.0;
    for (std::size_t t0 = 0; t0 < ex.legs.size(); t0 += per_tau) {
        for (std::size_t e = 1; e < per_tau; ++e) {
            const double prev = std::abs(ex.legs[t0 + e - 1].residual_over_eps);
            const double cur = std::abs(ex.legs[t0 + e].residual_over_eps);
            if (cur >= prev) monotone = false;
        }
        first_ratio = std::abs(ex.legs[t0].residual_over_eps);
        last_ratio = std::abs(ex.legs[t0 + per_tau - 1].residual_over_eps);
    }
    rep.checks.push_back(
        {"expansion/residual-over-eps-shrinks", monotone, last_ratio, first_ratio, 0.0});
}

inline void pipeline_adjoint1(PipelineContext& ctx, RunReport& rep) {
    const ConfiguredRun& run = ctx.run;
    const TimeGrid& g = run.grid;
    const FirstOrderAdjoint& adj = ctx.ensure_adjoint();
    const std::vector<Vec> p_svie =
        solve_first_adjoint_svie(run.scenario.spec, g, ctx.ensure_traces());
    std::vector<std::string> cols = {"node", "time"};
    for (int c = 0; c < run.scenario.spec.n; ++c) cols.push_back("p" + std::to_string(c));
    for (int c = 0; c < run.scenario.spec.n; ++c) cols.push_back("ptilde" + std::to_string(c));
    CsvWriter csv(ctx.path("adjoint1.csv"), cols);
    double gap = 0.0;
    for (int i = 0; i <= g.n_steps; ++i) {
        const auto si = static_cast<std::size_t>(i);
        gap = std::max(gap, (adj.p[si] - p_svie[si]).cwiseAbs().maxCoeff());
        std::vector<double> row = {static_cast<double>(i), g.time(i)};
        for (int c = 0; c < run.scenario.spec.n; ++c) row.push_back(adj.p[si][c]);
        for (int c = 0; c < run.scenario.spec.n; ++c) row.push_back(adj.ptilde[si][c]);
        csv.row(row);
    }
    rep.checks.push_back({"adjoint1/route-gap", gap <= 10.0 * g.dt, gap, 10.0 * g.dt, 0.0});
}

inline void pipeline_adjoint2(PipelineContext& ctx, RunReport& rep) {
    const ConfiguredRun& run = ctx.run;
    const TimeGrid& g = run.grid;
    const ProblemSpec& spec = run.scenario.spec;
    const std::string& mode = run.cfg.case_select;
    if (mode == "general") {
        const CurlyP& curly = ctx.ensure_curly();
        const CurlyP compact = assemble_curly_P_compact(ctx.ensure_kernels(), spec);
        std::vector<std::string> cols = {"node", "time"};
        for (int r = 0; r < spec.n; ++r)
            for (int c = 0; c < spec.n; ++c)
                cols.push_back("curly" + std::to_string(r) + std::to_string(c));
        CsvWriter csv(ctx.path("adjoint2.csv"), cols);
        double asym = 0.0, scale = 0.0, assembly = 0.0;
        for (int i = 0; i <= g.n_steps; ++i) {
            const Mat& P = curly.value[static_cast<std::size_t>(i)];
            asym = std::max(asym, (P - P.transpose()).cwiseAbs().maxCoeff());
            scale = std::max(scale, P.cwiseAbs().maxCoeff());
            assembly = std::max(
                assembly,
                (P - compact.value[static_cast<std::size_t>(i)]).cwiseAbs().maxCoeff());
            std::vector<double> row = {static_cast<double>(i), g.time(i)};
            for (int r = 0; r < spec.n; ++r)
                for (int c = 0; c < spec.n; ++c) row.push_back(P(r, c));
            csv.row(row);
        }
        const double tol = 1e-10 * (1.0 + scale);
        rep.checks.push_back({"adjoint2/curly-symmetric", asym <= tol, asym, tol, 0.0});
        rep.checks.push_back(
            {"adjoint2/assembly-consistent", assembly <= tol, assembly, tol, 0.0});
    } else if (mode == "classical") {
        const std::vector<Mat> P = solve_classical_P_bsde(spec, g, ctx.ensure_traces());
        std::vector<std::string> cols = {"node", "time"};
        for (int r = 0; r < spec.n; ++r)
            for (int c = 0; c < spec.n; ++c)
                cols.push_back("p" + std::to_string(r) + std::to_string(c));
        CsvWriter csv(ctx.path("adjoint2.csv"), cols);
        for (int i = 0; i <= g.n_steps; ++i) {
            std::vector<double> row = {static_cast<double>(i), g.time(i)};
            const Mat& Pi = P[static_cast<std::size_t>(i)];
            for (int r = 0; r < spec.n; ++r)
                for (int c = 0; c < spec.n; ++c) row.push_back(Pi(r, c));
            csv.row(row);
        }
        const PathTrace& tr = ctx.ensure_traces().front();
        const Mat want = tr.terminal_hess.block(0, 0, spec.n, spec.n);
        const double diff = (P.back() - want).cwiseAbs().maxCoeff();
        rep.checks.push_back({"adjoint2/classical-terminal", diff <= 1e-12, diff, 1e-12, 0.0});
    } else {  // lq
        require(run.cfg.scenario == "lq-scalar", ErrorKind::config,
                "case 'lq' is only defined for the lq-scalar scenario");
        const CurlyP& curly = ctx.ensure_curly();
        // Reduction coefficients read off the scenario along its candidate.
        LqOdeParams par;
        par.drift_gain = Mat::Constant(1, 1, 0.5);
        par.delay_gain = Mat::Constant(1, 1, 0.4);
        par.running_weight = Mat::Constant(1, 1, 1.0);
        par.delayed_weight = Mat::Constant(1, 1, 2.0);
        par.terminal_weight = Mat::Constant(1, 1, 1.0);
        par.horizon = spec.delay.horizon;
        par.delta = spec.delay.delta;
        par.step = g.dt / std::max(1.0, std::round(g.dt / 1e-3));
        const LqCurvaturePath ode = solve_lq_P_ode(par);
        CsvWriter csv(ctx.path("adjoint2.csv"), {"node", "time", "kernel_value", "ode_value"});
        double rel = 0.0;
        for (int i = 0; i <= g.n_steps; ++i) {
            const double kv = curly.value[static_cast<std::size_t>(i)](0, 0);
            const double ov = ode.at(g.time(i))(0, 0);
            rel = std::max(rel, std::abs(kv - ov) / (1.0 + std::abs(ov)));
            csv.row({static_cast<double>(i), g.time(i), kv, ov});
        }
        rep.checks.push_back({"adjoint2/lq-kernel-vs-ode", rel <= 0.02, rel, 0.02, 0.0});
    }
}

inline void pipeline_duality(PipelineContext& ctx, RunReport& rep) {
    const ConfiguredRun& run = ctx.run;
    const SpikePlan plan =
        make_spike_plan(run.grid, run.scenario.spec.controls, run.scenario.spike,
                        run.taus.front(), run.cfg.eps_schedule.front());
    const DualityReport d =
        check_duality(run.scenario.spec, ctx.ctrl, plan, ctx.bundle, run.cfg.threads);
    CsvWriter csv(ctx.path("duality.csv"),
                  {"lhs", "rhs", "gap", "gap_stderr", "combined_stderr", "paths"});
    csv.row({d.lhs, d.rhs, d.gap, d.gap_stderr, d.combined_stderr,
             static_cast<double>(d.paths)});
    const double tol = 3.0 * d.combined_stderr + 1e-12;
    rep.checks.push_back({"duality/identity-gap", d.pass, std::abs(d.gap), tol, 0.0});
}

inline void pipeline_verify_mp(PipelineContext& ctx, RunReport& rep) {
    const ConfiguredRun& run = ctx.run;
    const ScanReport scan =
        max_condition_scan(run.scenario.spec, ctx.ensure_batch().paths, ctx.ctrl,
                           ctx.ensure_adjoint(), ctx.ensure_curly(), run.cfg.scan_tolerance);
    CsvWriter csv(ctx.path("verify-mp.csv"), {"tau", "v_index", "value", "stderr"});
    for (const auto& e : scan.entries)
        csv.row({run.grid.time(e.node), static_cast<double>(e.v_index), e.value, e.se});
    rep.extra["scan_min"] = scan.min_value;
    rep.extra["scan_argmin_node"] = scan.argmin_node;
    rep.extra["scan_argmin_v"] = scan.argmin_v;
    rep.extra["scan_max_delayed_abs"] = scan.max_delayed_abs;
    rep.checks.push_back({"verify-mp/scan-minimum", scan.pass, scan.min_value,
                          run.cfg.scan_tolerance + 3.0 * scan.min_se, 0.0});
}

}  // namespace detail

/// Executes one pipeline (or `all`) for a validated config, writing CSV and
/// JSON artifacts into the config's output directory.
inline RunReport run_pipeline(const ScenarioConfig& cfg, const std::string& pipeline) {
    bool known = false;
    for (const auto& p : pipeline_names()) known = known || p == pipeline;
    require(known, ErrorKind::config, "unknown pipeline '" + pipeline + "'");

    const ConfiguredRun run = configure_run(cfg);
    std::filesystem::create_directories(cfg.out_dir);
    detail::PipelineContext ctx(run);

    RunReport rep;
    rep.scenario = cfg.scenario;
    rep.pipeline = pipeline;
    rep.seed = cfg.seed;
    rep.n_steps = run.grid.n_steps;
    rep.n_paths = cfg.n_paths;
    rep.dt = run.grid.dt;

    const std::vector<std::string> order =
        pipeline == "all" ? std::vector<std::string>{"simulate", "order-check", "expansion",
                                                     "adjoint1", "adjoint2", "duality",
                                                     "verify-mp"}
                          : std::vector<std::string>{pipeline};
    for (const auto& name : order) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::size_t first_check = rep.checks.size();
        if (name == "simulate")
            detail::pipeline_simulate(ctx, rep);
        else if (name == "order-check")
            detail::pipeline_order_check(ctx, rep);
        else if (name == "expansion")
            detail::pipeline_expansion(ctx, rep);
        else if (name == "adjoint1")
            detail::pipeline_adjoint1(ctx, rep);
        else if (name == "adjoint2")
            detail::pipeline_adjoint2(ctx, rep);
        else if (name == "duality")
            detail::pipeline_duality(ctx, rep);
        else
            detail::pipeline_verify_mp(ctx, rep);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        for (std::size_t c = first_check; c < rep.checks.size(); ++c)
            rep.checks[c].runtime_s = secs;
    }
    write_json_summary(ctx.path(pipeline + "-summary.json"), rep);
    return rep;
}

}  // namespace delaymp
