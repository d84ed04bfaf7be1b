#pragma once

#include <initializer_list>
#include <string>

#include <json.hpp>

#include "fcp/errors.hpp"

namespace fcp {

using json = nlohmann::json;

inline constexpr const char* kFormatTag = "fcp/1";

inline json parse_json(const std::string& text, const char* what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ParseError(std::string(what) + ": malformed JSON");
  return j;
}

/// Every file format carries a top-level {"format": "fcp/1"}; unknown versions rejected.
inline void require_format(const json& j, const char* what) {
  if (!j.is_object()) throw ParseError(std::string(what) + ": expected a JSON object");
  auto it = j.find("format");
  if (it == j.end() || !it->is_string())
    throw ParseError(std::string(what) + ": missing \"format\" field");
  if (it->get<std::string>() != kFormatTag)
    throw ParseError(std::string(what) + ": unsupported format \"" +
                     it->get<std::string>() + "\" (expected \"" + kFormatTag + "\")");
}

inline void reject_unknown_fields(const json& j, std::initializer_list<const char*> allowed,
                                  const char* what) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* a : allowed) {
      if (it.key() == a) {
        known = true;
        break;
      }
    }
    if (!known) throw ParseError(std::string(what) + ": unknown field \"" + it.key() + "\"");
  }
}

inline const json& require_field(const json& j, const char* field, const char* what) {
  auto it = j.find(field);
  if (it == j.end()) throw ParseError(std::string(what) + ": missing field \"" + field + "\"");
  return *it;
}

}  // namespace fcp
