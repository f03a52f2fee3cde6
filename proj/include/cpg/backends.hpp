// Copyright 2026 The cpg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <mutex>

#include "cpg/gateway.hpp"
#include "cpg/http_backend.hpp"
#include "cpg/pipeline.hpp"
#include "cpg/synthetic.hpp"

namespace cpg {

struct BackendOptions {
  bool offline = false;    // live adapters are served from the cassette
  bool synthetic = false;  // live adapters are answered by SyntheticBackend
  std::filesystem::path cassette;
};

// Adapter resolution:
//   replay                  -> cassette
//   openai|anthropic        -> cassette when offline, SyntheticBackend when
//                              synthetic, HTTP otherwise
//   synthetic               -> SyntheticBackend
// The cassette is loaded once and shared.
inline BackendFactory make_backend_factory(BackendOptions opts) {
  auto replay = std::make_shared<std::shared_ptr<ReplayBackend>>();
  auto mu = std::make_shared<std::mutex>();
  return [opts, replay, mu](const BackendConfig& c) -> std::shared_ptr<Backend> {
    auto cassette = [&]() -> std::shared_ptr<Backend> {
      std::lock_guard lock(*mu);
      if (!*replay) {
        if (opts.cassette.empty()) throw UsageError("backend '" + c.backend_id + "' needs a cassette to replay");
        *replay = replay_cassette(opts.cassette);
      }
      return *replay;
    };
    if (c.adapter == "replay") return cassette();
    if (c.adapter == "synthetic") return std::make_shared<SyntheticBackend>(c.backend_id);
    if (c.adapter == "openai" || c.adapter == "anthropic") {
      if (opts.offline) return cassette();
      if (opts.synthetic) return std::make_shared<SyntheticBackend>(c.backend_id);
      return std::make_shared<HttpBackend>(c);
    }
    throw SchemaError("backend.adapter", "adapter '" + c.adapter + "' cannot be built from a config file");
  };
}

// Recording is on whenever a cassette is named and calls are not replayed.
inline std::shared_ptr<CassetteRecorder> make_recorder(const BackendOptions& opts) {
  if (opts.offline || opts.cassette.empty()) return nullptr;
  return record_cassette(opts.cassette);
}

}  // namespace cpg
