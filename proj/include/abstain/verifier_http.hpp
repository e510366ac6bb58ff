// SPDX-License-Identifier: Apache-2.0
#pragma once

// HTTP transport for the remote judge backend. Kept separate so the httplib
// include (and its socket machinery) stays in one place.

#include <httplib.h>

#include <cstdlib>
#include <optional>
#include <string>

#include <json.hpp>

namespace abstain::detail {

inline std::optional<std::string> remote_complete_once(const JudgeBackendConfig& backend,
                                                       const std::string& prompt,
                                                       std::string* diagnostic) {
  const EndpointParts parts = split_endpoint(backend.endpoint);
  httplib::Client client(parts.base);
  client.set_connection_timeout(0, backend.timeout_ms * 1000);
  client.set_read_timeout(0, backend.timeout_ms * 1000);
  client.set_write_timeout(0, backend.timeout_ms * 1000);
  if (!backend.api_key_env.empty()) {
    if (const char* token = std::getenv(backend.api_key_env.c_str()))
      client.set_bearer_token_auth(token);
  }

  nlohmann::json request = {
      {"model", backend.model},
      {"messages", {{{"role", "user"}, {"content", prompt}}}},
  };
  const auto result = client.Post(parts.path, request.dump(), "application/json");
  if (!result) {
    if (diagnostic) *diagnostic = "transport error: " + httplib::to_string(result.error());
    return std::nullopt;
  }
  if (result->status < 200 || result->status >= 300) {
    if (diagnostic) *diagnostic = "http status " + std::to_string(result->status);
    return std::nullopt;
  }
  const auto body = nlohmann::json::parse(result->body, nullptr, false);
  if (body.is_discarded()) {
    if (diagnostic) *diagnostic = "response body is not JSON";
    return std::nullopt;
  }
  try {
    return body.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const std::exception& e) {
    if (diagnostic) *diagnostic = std::string("unexpected response shape: ") + e.what();
    return std::nullopt;
  }
}

}  // namespace abstain::detail
