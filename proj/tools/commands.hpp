#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "config.hpp"

namespace ecgsal::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

const std::vector<std::string>& verbs();

/// Runs one verb against a validated configuration; maps library errors to
/// exit codes and reports them on `err`.
int run(const std::string& verb, const ExperimentConfig& config, std::ostream& log, std::ostream& err);

}  // namespace ecgsal::cli
