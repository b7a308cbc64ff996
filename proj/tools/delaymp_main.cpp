// Command-line front end: runs one verification pipeline for a configured
// scenario and reports pass/fail through the exit code.
//   0  all checks passed
//   1  at least one check violated
//   2  configuration or execution error

#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "delaymp/delaymp.hpp"

namespace {

struct SubcommandArgs {
    std::string config_path;
    std::string seed_override;
    std::string out_override;
};

void attach(CLI::App& app, const std::string& name, const std::string& desc,
            SubcommandArgs& args, std::string& chosen) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", args.config_path, "scenario config file (JSON)")
        ->required();
    sub->add_option("--seed", args.seed_override, "override the config seed");
    sub->add_option("--out", args.out_override, "override the output directory");
    sub->callback([&chosen, name] { chosen = name; });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Verification toolkit for delayed stochastic control problems"};
    app.require_subcommand(1);

    SubcommandArgs args;
    std::string chosen;
    attach(app, "simulate", "simulate the candidate control and dump state statistics", args,
           chosen);
    attach(app, "order-check", "measure spike-variation convergence orders", args, chosen);
    attach(app, "expansion", "compare cost differences against the spike expansion", args,
           chosen);
    attach(app, "adjoint1", "solve the first-order adjoint by both routes", args, chosen);
    attach(app, "adjoint2", "solve the curvature kernels (case: general, classical or lq)", args,
           chosen);
    attach(app, "duality", "check the variational duality identity", args, chosen);
    attach(app, "verify-mp", "scan the maximum condition over all control alternatives", args,
           chosen);
    attach(app, "all", "run every pipeline in sequence", args, chosen);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        delaymp::ScenarioConfig cfg = delaymp::load_config(args.config_path);
        if (!args.seed_override.empty()) {
            std::size_t used = 0;
            const unsigned long long s = std::stoull(args.seed_override, &used);
            if (used != args.seed_override.size())
                throw delaymp::Error(delaymp::ErrorKind::config, "--seed must be an integer");
            cfg.seed = static_cast<std::uint64_t>(s);
        }
        if (!args.out_override.empty()) cfg.out_dir = args.out_override;

        const delaymp::RunReport rep = delaymp::run_pipeline(cfg, chosen);
        for (const auto& c : rep.checks)
            std::printf("[%s] %-40s value=%.6g tol=%.6g (%.2fs)\n", c.pass ? "PASS" : "FAIL",
                        c.name.c_str(), c.value, c.tolerance, c.runtime_s);
        return rep.all_pass() ? 0 : 1;
    } catch (const delaymp::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
