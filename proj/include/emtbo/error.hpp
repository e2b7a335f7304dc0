#pragma once

#include <stdexcept>
#include <string>

namespace emtbo {

enum class Errc {
    invalid_argument,
    dimension_mismatch,
    not_positive_definite,
    nonconvergence,
    out_of_support,
    grid_exhausted,
    lookup_miss,
    parse_error,
    objective_failure,
    config_error,
    io_error,
};

const char* to_string(Errc code) noexcept;

// Single exception type for the library; callers switch on code() when they
// need to distinguish failure classes (the CLI maps them to exit codes).
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

inline const char* to_string(Errc code) noexcept {
    switch (code) {
        case Errc::invalid_argument: return "invalid argument";
        case Errc::dimension_mismatch: return "dimension mismatch";
        case Errc::not_positive_definite: return "not positive definite";
        case Errc::nonconvergence: return "nonconvergence";
        case Errc::out_of_support: return "out of prior support";
        case Errc::grid_exhausted: return "grid exhausted";
        case Errc::lookup_miss: return "lookup miss";
        case Errc::parse_error: return "parse error";
        case Errc::objective_failure: return "objective failure";
        case Errc::config_error: return "config error";
        case Errc::io_error: return "i/o error";
    }
    return "unknown";
}

}  // namespace emtbo
