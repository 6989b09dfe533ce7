#pragma once

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tda::cli {

// Known commands: gen-data, attribute, train-airrep, eval, select, classify.
bool is_command(const std::string& name);
std::vector<std::string> command_names();

// Full default config for a command; every legal key appears here, so the
// defaults double as the schema for unknown-key rejection.
nlohmann::json default_config(const std::string& command);

// defaults <- config file <- dotted-key overrides. Unknown keys anywhere in
// the file or overrides are rejected. Override values parse as JSON when
// possible, otherwise as strings.
nlohmann::json resolve_config(const std::string& command,
                              const std::optional<std::filesystem::path>& config_file,
                              const std::vector<std::pair<std::string, std::string>>& overrides);

// Runs the command; returns the process exit code (0 on success). The caller
// maps UsageError / NumericError to exit codes 1 / 2.
int run_command(const std::string& command, const nlohmann::json& cfg);

}  // namespace tda::cli
