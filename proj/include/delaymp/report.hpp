#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "core.hpp"
#include "json.hpp"

namespace delaymp {

inline constexpr const char* kVersion = "0.1.0";

/// One executed check: pass/fail, the measured value and the tolerance it
/// was held against.
struct CheckRecord {
    std::string name;
    bool pass = true;
    double value = 0.0;
    double tolerance = 0.0;
    double runtime_s = 0.0;
};

struct RunReport {
    std::string scenario;
    std::string pipeline;
    std::uint64_t seed = 0;
    int n_steps = 0;
    int n_paths = 0;
    double dt = 0.0;
    std::vector<CheckRecord> checks;
    nlohmann::json extra = nlohmann::json::object();  // pipeline-specific details

    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

/// Shortest decimal form that round-trips a double; always uses '.' as the
/// decimal separator regardless of the process locale.
inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    for (char* c = buf; *c; ++c)
        if (*c == ',') *c = '.';
    return buf;
}

/// Column-checked CSV emitter with a mandatory header row.
class CsvWriter {
public:
    CsvWriter(const std::string& path, std::vector<std::string> columns)
        : out_(path), n_cols_(columns.size()) {
        require(out_.good(), ErrorKind::io, "cannot open CSV file '" + path + "'");
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (i) out_ << ',';
            out_ << columns[i];
        }
        out_ << '\n';
    }

    void row(const std::vector<double>& values) {
        require(values.size() == n_cols_, ErrorKind::io, "CSV row width mismatch");
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) out_ << ',';
            out_ << format_number(values[i]);
        }
        out_ << '\n';
    }

private:
    std::ofstream out_;
    std::size_t n_cols_;
};

inline void write_json_summary(const std::string& path, const RunReport& rep) {
    nlohmann::json j;
    j["scenario"] = rep.scenario;
    j["pipeline"] = rep.pipeline;
    j["seed"] = rep.seed;
    j["n_steps"] = rep.n_steps;
    j["n_paths"] = rep.n_paths;
    j["dt"] = rep.dt;
    j["version"] = kVersion;
    j["pass"] = rep.all_pass();
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : rep.checks) {
        nlohmann::json e;
        e["name"] = c.name;
        e["pass"] = c.pass;
        e["value"] = c.value;
        e["tolerance"] = c.tolerance;
        e["runtime_s"] = c.runtime_s;
        checks.push_back(e);
    }
    j["checks"] = checks;
    if (!rep.extra.empty()) j["extra"] = rep.extra;
    std::ofstream out(path);
    require(out.good(), ErrorKind::io, "cannot open summary file '" + path + "'");
    out << j.dump(2) << '\n';
}

}  // namespace delaymp
