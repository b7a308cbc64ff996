#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>

#include "delaymp/runner.hpp"

using namespace delaymp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("delaymp_test_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return s;
}

}  // namespace

TEST_CASE("unknown pipeline names are rejected") {
    ScenarioConfig cfg;
    cfg.scenario = "pointwise-cost";
    CHECK_THROWS_AS(run_pipeline(cfg, "no-such-pipeline"), Error);
}

TEST_CASE("configured runs enforce control-set membership and spike width") {
    ScenarioConfig cfg;
    cfg.scenario = "pointwise-cost";
    cfg.candidate = {0.77};  // not in the finite set {0, 0.3, 1}
    CHECK_THROWS_AS(configure_run(cfg), Error);

    ScenarioConfig wide;
    wide.scenario = "lq-scalar";
    wide.eps_schedule = {0.3};  // wider than delta = 0.25
    CHECK_THROWS_AS(configure_run(wide), Error);
}

TEST_CASE("scan pipeline passes the optimal candidate and writes its artifacts") {
    TempDir dir("scan_pass");
    ScenarioConfig cfg;
    cfg.scenario = "pointwise-cost";
    cfg.n_steps = 40;
    cfg.n_paths = 1;
    cfg.out_dir = dir.path.string();
    RunReport rep = run_pipeline(cfg, "verify-mp");
    CHECK(rep.all_pass());
    const std::string csv = read_file(dir.path / "verify-mp.csv");
    CHECK(csv.rfind("tau,v_index,value,stderr\n", 0) == 0);
    CHECK(fs::exists(dir.path / "verify-mp-summary.json"));
}

TEST_CASE("scan pipeline flags a suboptimal candidate") {
    TempDir dir("scan_fail");
    ScenarioConfig cfg;
    cfg.scenario = "pointwise-cost";
    cfg.n_steps = 40;
    cfg.n_paths = 1;
    cfg.candidate = {0.0};
    cfg.candidate_history = {0.0};
    cfg.out_dir = dir.path.string();
    RunReport rep = run_pipeline(cfg, "verify-mp");
    CHECK_FALSE(rep.all_pass());
}

TEST_CASE("simulate pipeline reruns are byte-identical") {
    TempDir a("sim_a"), b("sim_b");
    ScenarioConfig cfg;
    cfg.scenario = "lq-scalar";
    cfg.n_steps = 40;
    cfg.n_paths = 50;
    cfg.seed = 31;
    cfg.out_dir = a.path.string();
    run_pipeline(cfg, "simulate");
    cfg.out_dir = b.path.string();
    cfg.threads = 3;  // worker count must not leak into artifacts
    run_pipeline(cfg, "simulate");
    CHECK(read_file(a.path / "simulate.csv") == read_file(b.path / "simulate.csv"));
}

TEST_CASE("adjoint pipeline rejects stochastic-derivative scenarios by mode") {
    TempDir dir("adj_mode");
    ScenarioConfig cfg;
    cfg.scenario = "delayed-drift";  // sin(x) jacobians vary across paths
    cfg.n_steps = 40;
    cfg.n_paths = 4;
    cfg.out_dir = dir.path.string();
    try {
        run_pipeline(cfg, "adjoint1");
        FAIL("expected a mode error");
    } catch (const Error& e) {
        CHECK(e.kind == ErrorKind::mode);
    }
}

TEST_CASE("lq case is tied to the lq scenario") {
    TempDir dir("lq_case");
    ScenarioConfig cfg;
    cfg.scenario = "consumption";
    cfg.case_select = "lq";
    cfg.n_steps = 40;
    cfg.n_paths = 1;
    cfg.out_dir = dir.path.string();
    CHECK_THROWS_AS(run_pipeline(cfg, "adjoint2"), Error);
}
