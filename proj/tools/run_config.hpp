#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

namespace vslp::tools {

/// Bad arguments or configuration; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fills options of `cmd` that were not given on the command line from a flat
/// JSON object keyed by long option names. Unknown keys are rejected.
void apply_config(CLI::App& cmd, const nlohmann::json& config);

/// Effective option values of `cmd` (given, configured or default), in the
/// same flat layout apply_config reads. Excludes --config and --help.
nlohmann::json effective_config(const CLI::App& cmd);

void require_option(const CLI::App& cmd, const std::string& name);
void require_existing(const std::filesystem::path& path,
                      const std::string& what);

}  // namespace vslp::tools
