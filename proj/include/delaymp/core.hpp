#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace delaymp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Failure categories used across the library. The CLI maps `config` to
/// exit code 2 and check violations to exit code 1.
enum class ErrorKind {
    parameter,
    alignment,
    history_underflow,
    dimension,
    mode,
    bundle_identity,
    diverged,
    basis,
    config,
    io,
};

struct Error : std::runtime_error {
    ErrorKind kind;
    Error(ErrorKind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

inline const char* error_kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::parameter: return "parameter";
        case ErrorKind::alignment: return "alignment";
        case ErrorKind::history_underflow: return "history-underflow";
        case ErrorKind::dimension: return "dimension";
        case ErrorKind::mode: return "mode";
        case ErrorKind::bundle_identity: return "bundle-identity";
        case ErrorKind::diverged: return "simulation-diverged";
        case ErrorKind::basis: return "basis";
        case ErrorKind::config: return "config";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

[[noreturn]] inline void fail(ErrorKind k, const std::string& msg) {
    throw Error(k, std::string(error_kind_name(k)) + ": " + msg);
}

inline void require(bool cond, ErrorKind k, const std::string& msg) {
    if (!cond) fail(k, msg);
}

}  // namespace delaymp
