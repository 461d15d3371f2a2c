#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace beamtomo::cli {

enum ExitCode { kOk = 0, kConfigError = 2, kNumericFailure = 3 };

const std::vector<std::string>& kinds();

// Closest valid name for a misspelled key, or "" if nothing is close.
std::string suggest(const std::string& key, const std::vector<std::string>& valid);

// Validates a JSON config and fills in defaults; throws ConfigError naming the offending key.
std::string resolve_config(const std::string& text);

// Example config for a kind (the resolved defaults).
std::string example_config(const std::string& kind);

// Executes the pipeline of a config file; out_dir overrides the config's "output".
// Writes report.json (deterministic), timing.json and the kind's tables/fields.
int run(const std::string& config_path, const std::string& out_dir, std::ostream& log);
int describe(const std::string& kind, std::ostream& out);
// Cheap closed-form checks; one PASS/FAIL line each.
int selftest(std::ostream& out);

}  // namespace beamtomo::cli
