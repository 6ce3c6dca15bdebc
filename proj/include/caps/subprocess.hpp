#pragma once

#include <string>

namespace caps {

struct CommandResult {
    int exit_code = -1;
    bool timed_out = false;
    double wall_seconds = 0.0;
    double cpu_seconds = 0.0; // user+sys of the child, when the platform reports it
    std::string output;      // combined stdout+stderr, capped
};

/// Runs a shell command, capturing combined output. timeout_seconds <= 0
/// disables the timeout; on expiry the process group is killed and
/// timed_out is set.
CommandResult run_command(const std::string& command, double timeout_seconds);

/// True when `name` resolves to an executable on PATH.
bool command_exists(const std::string& name);

} // namespace caps
