// Copyright 2026 The cpg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Live provider adapters. Wire formats stay in this header; the rest of the
// library only sees ChatRequest and response text.

#pragma once

#include <cstdlib>
#include <memory>
#include <string>
#include <utility>

#include "cpg/gateway.hpp"
#include "httplib.h"

namespace cpg {

namespace wire {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // empty when the URL has no path
};

inline Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw InvalidArgumentError("endpoint '" + url + "' lacks a scheme");
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, ""};
  std::string path = url.substr(slash);
  if (path == "/") path.clear();
  return {url.substr(0, slash), path};
}

inline const std::string& model_name(const BackendConfig& c) {
  return c.model.empty() ? c.backend_id : c.model;
}

// OpenAI-compatible chat completions.
inline json openai_body(const BackendConfig& c, const ChatRequest& r) {
  json messages = json::array();
  if (!r.system_role.empty()) messages.push_back({{"role", "system"}, {"content", r.system_role}});
  messages.push_back({{"role", "user"}, {"content", r.user_text}});
  json body{{"model", model_name(c)}, {"messages", messages}};
  for (const auto& [k, v] : r.sampling) body[k] = v;
  return body;
}

inline std::string openai_text(const json& body) {
  try {
    const auto& content = body.at("choices").at(0).at("message").at("content");
    if (content.is_string()) return content.get<std::string>();
  } catch (const json::exception&) {
  }
  throw TransportError("unexpected chat-completions response shape", "");
}

// Anthropic messages API.
inline json anthropic_body(const BackendConfig& c, const ChatRequest& r) {
  json body{{"model", model_name(c)},
            {"max_tokens", c.max_tokens},
            {"messages", json::array({{{"role", "user"}, {"content", r.user_text}}})}};
  if (!r.system_role.empty()) body["system"] = r.system_role;
  for (const auto& [k, v] : r.sampling) body[k] = v;
  return body;
}

inline std::string anthropic_text(const json& body) {
  std::string out;
  if (auto it = body.find("content"); it != body.end() && it->is_array()) {
    for (const auto& block : *it) {
      if (block.value("type", "") == "text" && block.contains("text")) out += block["text"].get<std::string>();
    }
    return out;
  }
  throw TransportError("unexpected messages response shape", "");
}

}  // namespace wire

class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(BackendConfig config) : config_(std::move(config)) {
    if (config_.adapter != "openai" && config_.adapter != "anthropic") {
      throw InvalidArgumentError("HttpBackend: unsupported adapter '" + config_.adapter + "'");
    }
    if (config_.endpoint.empty()) throw InvalidArgumentError("HttpBackend: endpoint required");
    endpoint_ = wire::split_endpoint(config_.endpoint);
    if (endpoint_.path.empty()) {
      endpoint_.path = config_.adapter == "openai" ? "/v1/chat/completions" : "/v1/messages";
    }
  }

  bool offline() const noexcept override { return false; }

  Completion send(const ChatRequest& request) override {
    httplib::Headers headers;
    if (!config_.auth_env.empty()) {
      const char* key = std::getenv(config_.auth_env.c_str());
      if (!key || !*key) {
        throw AuthError("credential variable " + config_.auth_env + " is not set", request.fingerprint);
      }
      if (config_.adapter == "openai") {
        headers.emplace("Authorization", std::string("Bearer ") + key);
      } else {
        headers.emplace("x-api-key", key);
      }
    }
    json body;
    if (config_.adapter == "openai") {
      body = wire::openai_body(config_, request);
    } else {
      body = wire::anthropic_body(config_, request);
      headers.emplace("anthropic-version", "2023-06-01");
    }

    httplib::Client client(endpoint_.origin);
    const auto secs = config_.request_timeout.count() / 1000;
    const auto usecs = (config_.request_timeout.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    auto res = client.Post(endpoint_.path, headers, body.dump(), "application/json");
    if (!res) {
      throw TransportError("HTTP request failed: " + httplib::to_string(res.error()), request.fingerprint);
    }
    if (res->status == 401 || res->status == 403) {
      throw AuthError("HTTP " + std::to_string(res->status) + " from " + endpoint_.origin, request.fingerprint);
    }
    if (res->status == 429 || res->status >= 500) {
      throw TransportError("HTTP " + std::to_string(res->status), request.fingerprint);
    }
    if (res->status != 200) {
      throw BackendError("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200),
                         request.fingerprint);
    }
    json parsed = json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) throw TransportError("response body is not JSON", request.fingerprint);
    std::string text = config_.adapter == "openai" ? wire::openai_text(parsed) : wire::anthropic_text(parsed);
    return {std::move(text), utc_now_iso8601()};
  }

 private:
  BackendConfig config_;
  wire::Endpoint endpoint_;
};

}  // namespace cpg
