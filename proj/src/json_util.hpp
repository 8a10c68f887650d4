#pragma once

#include <initializer_list>
#include <string>

#include <json.hpp>

#include "signet/error.hpp"
#include "signet/model.hpp"

namespace signet {

// Strict object parsing: every present key must be in the allowed set.
inline void reject_unknown_keys(const nlohmann::json& obj,
                                std::initializer_list<const char*> allowed,
                                const std::string& context) {
  if (!obj.is_object()) {
    throw Error(ErrorKind::config, context + " must be a JSON object");
  }
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    bool known = false;
    for (const char* a : allowed) {
      if (key == a) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw Error(ErrorKind::config,
                  "unknown key \"" + key + "\" in " + context);
    }
  }
}

nlohmann::json model_config_to_json_obj(const ModelConfig& config);
ModelConfig model_config_from_json_obj(const nlohmann::json& obj);

}  // namespace signet
