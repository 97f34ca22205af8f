#pragma once

#include "ccml/structure.hpp"

#include <json.hpp>
#include <optional>
#include <ostream>

namespace ccml::cli {

// Exit codes of a run.
enum ExitCode { kPass = 0, kConfigError = 1, kPropertyFailure = 2, kNumericalFailure = 3 };

struct RunRequest {
  std::string command;       // info, hormander, norm, approx, distance, speed, validate
  nlohmann::json config;     // parsed config document
  std::string out_dir;
  unsigned long long seed = 0;
  int jobs = 1;
};

const std::vector<std::string>& commands();

// Structure from {"builtin": name} or a custom polynomial spec; path is the
// JSON pointer used in error messages.
StructurePtr structure_from_json(const nlohmann::json& j, const std::string& path = "/structure");

// Validates the document against the schema of the command and materializes
// every default. Throws ConfigError naming the offending JSON pointer.
nlohmann::json resolve_config(const std::string& command, const nlohmann::json& config, unsigned long long seed,
                              int jobs);

// Resolves, echoes config.resolved.json into out_dir, runs, writes CSV and
// summary.json. Progress goes to log, errors to err.
int run(const RunRequest& req, std::ostream& log, std::ostream& err);

// Reads and parses a config file; throws ConfigError on I/O or syntax errors.
nlohmann::json read_config(const std::string& path);

// 17 significant digits, "inf" and "nan" spelled out.
std::string fmt(double v);

}  // namespace ccml::cli
