#include "run_config.hpp"

namespace vslp::tools {

namespace {

bool skipped(const CLI::Option* opt) {
  const std::string& name = opt->get_lnames().empty()
                                ? std::string()
                                : opt->get_lnames().front();
  return name.empty() || name == "help" || name == "config";
}

std::string scalar_text(const nlohmann::json& v, const std::string& key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number_float()) return v.dump();
  throw UsageError("config key '" + key + "' must be a scalar");
}

}  // namespace

void apply_config(CLI::App& cmd, const nlohmann::json& config) {
  if (!config.is_object()) throw UsageError("config must be a JSON object");
  for (const auto& [key, value] : config.items()) {
    CLI::Option* opt = nullptr;
    for (CLI::Option* o : cmd.get_options()) {
      if (!skipped(o) && o->check_lname(key)) opt = o;
    }
    if (opt == nullptr) {
      throw UsageError("unknown config key '" + key + "' for " +
                       cmd.get_name());
    }
    if (opt->count() > 0) continue;  // command line wins
    try {
      opt->add_result(scalar_text(value, key));
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw UsageError("config key '" + key + "': " + e.what());
    }
  }
}

nlohmann::json effective_config(const CLI::App& cmd) {
  nlohmann::json out = nlohmann::json::object();
  for (const CLI::Option* o : cmd.get_options()) {
    if (skipped(o)) continue;
    const std::string& name = o->get_lnames().front();
    std::string value;
    if (o->count() > 0) {
      value = o->results().back();
    } else {
      value = o->get_default_str();
    }
    if (value.empty()) continue;
    out[name] = value;
  }
  return out;
}

void require_option(const CLI::App& cmd, const std::string& name) {
  const CLI::Option* opt = cmd.get_option_no_throw("--" + name);
  if (opt == nullptr || (opt->count() == 0 && opt->get_default_str().empty())) {
    throw UsageError(cmd.get_name() + ": --" + name + " is required");
  }
}

void require_existing(const std::filesystem::path& path,
                      const std::string& what) {
  if (path.empty() || !std::filesystem::exists(path)) {
    throw UsageError(what + " not found: " + path.string());
  }
}

}  // namespace vslp::tools
