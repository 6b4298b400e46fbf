#pragma once

// nlohmann/json adapters shared by the checkpoint and run-config code.

#include <json.hpp>

#include "distmatch/policy.hpp"

namespace distmatch {

nlohmann::json policy_config_to_json(const PolicyConfig& config);

/// Parses a policy block; `path` prefixes error messages (e.g. "policy").
PolicyConfig policy_config_from_json(const nlohmann::json& j, const std::string& path);

}  // namespace distmatch
