#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace evansbif::cli {

inline constexpr const char* toolkit_version = "0.1.0";

enum ExitCode : int {
    Ok = 0,
    ConfigFailure = 1,
    NumericalFailure = 2,
    MorseMismatch = 3,
    EndpointCritical = 4,
    SeedingFailure = 5,
};

/// Shortest decimal that reads back to the same double ("nan", "inf", "-inf" otherwise).
std::string format_number(double v);

/// Runs `evansbif <subcommand> ...`; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace evansbif::cli
