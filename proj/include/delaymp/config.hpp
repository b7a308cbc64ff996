#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"
#include "json.hpp"

namespace delaymp {

/// One run request: scenario selection plus the numeric knobs every pipeline
/// shares.  Optional fields fall back to the scenario's own defaults when
/// not set.  Unknown keys in a config file are rejected by name.
struct ScenarioConfig {
    std::string scenario;
    int n_steps = 0;  // 0 => scenario default
    int n_paths = 1000;
    std::uint64_t seed = 12345;
    int threads = 1;
    std::optional<double> delta;
    std::optional<double> lambda;
    std::optional<double> horizon;
    std::vector<double> eps_schedule = {0.04, 0.02, 0.01};
    std::vector<double> tau_list;              // empty => scenario default tau
    double scan_tolerance = 1e-6;
    std::string case_select = "general";       // adjoint2: general | classical | lq
    std::string out_dir = "out";
    std::vector<double> candidate;             // empty => scenario default
    std::vector<double> candidate_history;
    std::vector<double> spike;

    bool operator==(const ScenarioConfig&) const = default;
};

namespace detail {

inline std::vector<double> as_double_list(const nlohmann::json& v, const std::string& key) {
    require(v.is_array(), ErrorKind::config, "config key '" + key + "' must be an array");
    std::vector<double> out;
    for (const auto& e : v) {
        require(e.is_number(), ErrorKind::config,
                "config key '" + key + "' must contain numbers only");
        out.push_back(e.get<double>());
    }
    return out;
}

inline double as_double(const nlohmann::json& v, const std::string& key) {
    require(v.is_number(), ErrorKind::config, "config key '" + key + "' must be a number");
    return v.get<double>();
}

inline int as_int(const nlohmann::json& v, const std::string& key) {
    require(v.is_number_integer(), ErrorKind::config,
            "config key '" + key + "' must be an integer");
    return v.get<int>();
}

}  // namespace detail

inline ScenarioConfig parse_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::config, std::string("config is not valid JSON: ") + e.what());
    }
    require(j.is_object(), ErrorKind::config, "config root must be a JSON object");

    ScenarioConfig cfg;
    bool have_scenario = false;
    for (const auto& [key, val] : j.items()) {
        if (key == "scenario") {
            require(val.is_string(), ErrorKind::config, "config key 'scenario' must be a string");
            cfg.scenario = val.get<std::string>();
            have_scenario = true;
        } else if (key == "n_steps") {
            cfg.n_steps = detail::as_int(val, key);
            require(cfg.n_steps >= 2, ErrorKind::config, "config key 'n_steps' must be >= 2");
        } else if (key == "n_paths") {
            cfg.n_paths = detail::as_int(val, key);
            require(cfg.n_paths >= 1, ErrorKind::config, "config key 'n_paths' must be >= 1");
        } else if (key == "seed") {
            require(val.is_number_integer() && val.get<std::int64_t>() >= 0, ErrorKind::config,
                    "config key 'seed' must be a nonnegative integer");
            cfg.seed = val.get<std::uint64_t>();
        } else if (key == "threads") {
            cfg.threads = detail::as_int(val, key);
            require(cfg.threads >= 1, ErrorKind::config, "config key 'threads' must be >= 1");
        } else if (key == "delta") {
            cfg.delta = detail::as_double(val, key);
            require(*cfg.delta > 0.0, ErrorKind::config, "config key 'delta' must be positive");
        } else if (key == "lambda") {
            cfg.lambda = detail::as_double(val, key);
        } else if (key == "horizon") {
            cfg.horizon = detail::as_double(val, key);
            require(*cfg.horizon > 0.0, ErrorKind::config,
                    "config key 'horizon' must be positive");
        } else if (key == "eps_schedule") {
            cfg.eps_schedule = detail::as_double_list(val, key);
            require(!cfg.eps_schedule.empty(), ErrorKind::config,
                    "config key 'eps_schedule' must not be empty");
            for (double e : cfg.eps_schedule)
                require(e > 0.0, ErrorKind::config,
                        "config key 'eps_schedule' entries must be positive");
        } else if (key == "tau_list") {
            cfg.tau_list = detail::as_double_list(val, key);
        } else if (key == "scan_tolerance") {
            cfg.scan_tolerance = detail::as_double(val, key);
            require(cfg.scan_tolerance >= 0.0, ErrorKind::config,
                    "config key 'scan_tolerance' must be nonnegative");
        } else if (key == "case") {
            require(val.is_string(), ErrorKind::config, "config key 'case' must be a string");
            cfg.case_select = val.get<std::string>();
            require(cfg.case_select == "general" || cfg.case_select == "classical" ||
                        cfg.case_select == "lq",
                    ErrorKind::config, "config key 'case' must be general, classical or lq");
        } else if (key == "out_dir") {
            require(val.is_string(), ErrorKind::config, "config key 'out_dir' must be a string");
            cfg.out_dir = val.get<std::string>();
        } else if (key == "candidate") {
            cfg.candidate = detail::as_double_list(val, key);
        } else if (key == "candidate_history") {
            cfg.candidate_history = detail::as_double_list(val, key);
        } else if (key == "spike") {
            cfg.spike = detail::as_double_list(val, key);
        } else {
            fail(ErrorKind::config, "unknown config key '" + key + "'");
        }
    }
    require(have_scenario, ErrorKind::config, "config key 'scenario' is required");
    if (cfg.delta && cfg.horizon)
        require(*cfg.delta < *cfg.horizon, ErrorKind::config,
                "config key 'delta' must be smaller than 'horizon'");
    return cfg;
}

inline ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::io, "cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

/// Serializes a config so that parse_config(emit_config(c)) == c.
inline std::string emit_config(const ScenarioConfig& cfg) {
    nlohmann::json j;
    j["scenario"] = cfg.scenario;
    if (cfg.n_steps != 0) j["n_steps"] = cfg.n_steps;
    j["n_paths"] = cfg.n_paths;
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    if (cfg.delta) j["delta"] = *cfg.delta;
    if (cfg.lambda) j["lambda"] = *cfg.lambda;
    if (cfg.horizon) j["horizon"] = *cfg.horizon;
    j["eps_schedule"] = cfg.eps_schedule;
    if (!cfg.tau_list.empty()) j["tau_list"] = cfg.tau_list;
    j["scan_tolerance"] = cfg.scan_tolerance;
    j["case"] = cfg.case_select;
    j["out_dir"] = cfg.out_dir;
    if (!cfg.candidate.empty()) j["candidate"] = cfg.candidate;
    if (!cfg.candidate_history.empty()) j["candidate_history"] = cfg.candidate_history;
    if (!cfg.spike.empty()) j["spike"] = cfg.spike;
    return j.dump(2);
}

}  // namespace delaymp
