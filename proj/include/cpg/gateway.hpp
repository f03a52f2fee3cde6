// Copyright 2026 The cpg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Uniform access to text-generation backends. Callers build a ChatRequest and
// hand it to a Gateway, which applies per-backend admission control, bounded
// retries with exponential backoff, and optional cassette recording.

#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cpg/error.hpp"
#include "cpg/io.hpp"

namespace cpg {

// Absent keys mean "provider default".
using Sampling = std::map<std::string, double>;

struct BackendConfig {
  std::string backend_id;      // e.g. "gpt-4o-20240806"
  std::string adapter = "openai";  // openai | anthropic | mock | replay | synthetic
  std::string endpoint;        // base URL for live adapters
  std::string model;           // provider model name; defaults to backend_id
  std::string auth_env;        // environment variable holding the credential
  std::size_t max_concurrent = 1;
  std::chrono::milliseconds request_timeout{60000};
  Sampling sampling;
  unsigned max_attempts = 3;
  std::chrono::milliseconds backoff_base{500};
  unsigned max_tokens = 2048;

  void validate() const {
    if (backend_id.empty()) throw InvalidArgumentError("backend_id must be nonempty");
    if (max_concurrent < 1) throw InvalidArgumentError("max_concurrent must be >= 1");
    if (request_timeout.count() <= 0) throw InvalidArgumentError("request_timeout must be > 0");
    if (max_attempts < 1) throw InvalidArgumentError("max_attempts must be >= 1");
  }
};

struct ChatRequest {
  std::string backend_id;
  std::string system_role;
  std::string user_text;
  Sampling sampling;
  // Distinguishes repeated draws of an identical prompt. Not sent to providers.
  std::uint32_t sample_index = 0;
  std::string fingerprint;
};

inline json request_identity(const ChatRequest& r) {
  json j{{"backend_id", r.backend_id},
         {"system_role", r.system_role},
         {"user_text", r.user_text},
         {"sampling", json::object()},
         {"sample_index", r.sample_index}};
  for (const auto& [k, v] : r.sampling) j["sampling"][k] = v;
  return j;
}

inline std::string compute_fingerprint(const ChatRequest& r) {
  return sha256_hex(request_identity(r).dump());
}

inline ChatRequest make_request(const BackendConfig& config, std::string system_role,
                                std::string user_text, std::uint32_t sample_index = 0) {
  ChatRequest r{config.backend_id, std::move(system_role), std::move(user_text),
                config.sampling, sample_index, {}};
  r.fingerprint = compute_fingerprint(r);
  return r;
}

struct Completion {
  std::string text;
  std::string timestamp;  // ISO-8601 UTC
};

inline constexpr std::string_view kEpochTimestamp = "1970-01-01T00:00:00Z";

inline std::string utc_now_iso8601() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Backend {
 public:
  virtual ~Backend() = default;
  virtual Completion send(const ChatRequest& request) = 0;
  // True when the backend never touches the network.
  virtual bool offline() const noexcept { return true; }
};

// ---------------------------------------------------------------------------
// Transcripts and cassettes
// ---------------------------------------------------------------------------

struct Transcript {
  std::string fingerprint;
  ChatRequest request;
  std::string response_text;
  std::int64_t latency_ms = 0;
  std::string timestamp;
  unsigned attempts = 1;
};

inline json to_json(const Transcript& t) {
  return json{{"fingerprint", t.fingerprint},
              {"request", request_identity(t.request)},
              {"response_text", t.response_text},
              {"latency_ms", t.latency_ms},
              {"timestamp", t.timestamp},
              {"attempts", t.attempts}};
}

inline Transcript transcript_from_json(const json& j, const std::string& path, std::size_t line) {
  auto fail = [&](const std::string& what) -> CassetteError { return {path, line, what}; };
  auto str = [&](const json& obj, const char* key) -> std::string {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) throw fail(std::string("missing string field '") + key + "'");
    return it->get<std::string>();
  };
  Transcript t;
  t.fingerprint = str(j, "fingerprint");
  auto req = j.find("request");
  if (req == j.end() || !req->is_object()) throw fail("missing object field 'request'");
  t.request.backend_id = str(*req, "backend_id");
  t.request.system_role = str(*req, "system_role");
  t.request.user_text = str(*req, "user_text");
  if (auto s = req->find("sampling"); s != req->end()) {
    if (!s->is_object()) throw fail("'request.sampling' must be an object");
    for (auto it = s->begin(); it != s->end(); ++it) {
      if (!it->is_number()) throw fail("sampling values must be numbers");
      t.request.sampling[it.key()] = it->get<double>();
    }
  }
  if (auto s = req->find("sample_index"); s != req->end()) {
    if (!s->is_number_unsigned()) throw fail("'request.sample_index' must be a non-negative integer");
    t.request.sample_index = s->get<std::uint32_t>();
  }
  t.request.fingerprint = compute_fingerprint(t.request);
  if (t.request.fingerprint != t.fingerprint) throw fail("fingerprint does not match request");
  t.response_text = str(j, "response_text");
  if (t.response_text.empty()) throw fail("empty response_text");
  t.timestamp = j.value("timestamp", std::string(kEpochTimestamp));
  t.latency_ms = j.value("latency_ms", std::int64_t{0});
  t.attempts = j.value("attempts", 1u);
  return t;
}

// Read-only fingerprint index over a cassette file.
class Cassette {
 public:
  Cassette() = default;

  static Cassette load(const std::filesystem::path& path) {
    Cassette c;
    c.path_ = path;
    if (!std::filesystem::exists(path)) throw MissingInputError("cassette '" + path.string() + "' not found");
    for (auto& [line_no, value] : read_jsonl(path)) {
      Transcript t = transcript_from_json(value, path.string(), line_no);
      if (c.by_fingerprint_.count(t.fingerprint)) {
        throw CassetteError(path.string(), line_no, "duplicate fingerprint " + t.fingerprint);
      }
      c.order_.push_back(t.fingerprint);
      c.by_fingerprint_.emplace(t.fingerprint, std::move(t));
    }
    return c;
  }

  const Transcript* find(const std::string& fingerprint) const {
    auto it = by_fingerprint_.find(fingerprint);
    return it == by_fingerprint_.end() ? nullptr : &it->second;
  }
  std::size_t size() const noexcept { return by_fingerprint_.size(); }
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::vector<std::string> order_;
  std::unordered_map<std::string, Transcript> by_fingerprint_;
};

// Serves responses by fingerprint; never performs network access.
class ReplayBackend final : public Backend {
 public:
  explicit ReplayBackend(Cassette cassette) : cassette_(std::move(cassette)) {}

  Completion send(const ChatRequest& request) override {
    const Transcript* t = cassette_.find(request.fingerprint);
    if (!t) throw ReplayMissError(request.fingerprint);
    return {t->response_text, t->timestamp};
  }

  const Cassette& cassette() const noexcept { return cassette_; }

 private:
  Cassette cassette_;
};

inline std::shared_ptr<ReplayBackend> replay_cassette(const std::filesystem::path& path) {
  return std::make_shared<ReplayBackend>(Cassette::load(path));
}

// Appends transcripts to a cassette, keeping one response per fingerprint.
// Existing entries are preserved and indexed on open.
class CassetteRecorder {
 public:
  explicit CassetteRecorder(const std::filesystem::path& path) : path_(path) {
    if (std::filesystem::exists(path)) {
      for (auto& [line_no, value] : read_jsonl(path)) {
        Transcript t = transcript_from_json(value, path.string(), line_no);
        if (!seen_.insert(t.fingerprint).second) {
          throw CassetteError(path.string(), line_no, "duplicate fingerprint " + t.fingerprint);
        }
      }
    }
    writer_ = std::make_unique<JsonlWriter>(path, /*truncate=*/false);
  }

  // Returns false when the fingerprint was already recorded.
  bool append(const Transcript& t) {
    {
      std::lock_guard lock(mu_);
      if (!seen_.insert(t.fingerprint).second) return false;
    }
    writer_->append(to_json(t));
    return true;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return seen_.size();
  }
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::set<std::string> seen_;
  std::unique_ptr<JsonlWriter> writer_;
};

inline std::shared_ptr<CassetteRecorder> record_cassette(const std::filesystem::path& path) {
  return std::make_shared<CassetteRecorder>(path);
}

// ---------------------------------------------------------------------------
// Scripted mock
// ---------------------------------------------------------------------------

struct MockRule {
  std::function<bool(const ChatRequest&)> matches;
  std::function<std::string(const ChatRequest&)> respond;
};

inline std::function<bool(const ChatRequest&)> contains(std::string needle) {
  return [needle = std::move(needle)](const ChatRequest& r) {
    return r.user_text.find(needle) != std::string::npos;
  };
}

inline std::function<std::string(const ChatRequest&)> reply(std::string text) {
  return [text = std::move(text)](const ChatRequest&) { return text; };
}

// Responds per the first matching rule; unmatched requests raise
// NoMatchingRuleError.
class MockBackend final : public Backend {
 public:
  MockBackend() = default;
  explicit MockBackend(std::vector<MockRule> rules) : rules_(std::move(rules)) {}

  MockBackend& on(std::function<bool(const ChatRequest&)> m,
                  std::function<std::string(const ChatRequest&)> r) {
    rules_.push_back({std::move(m), std::move(r)});
    return *this;
  }
  MockBackend& on(std::string needle, std::string response) {
    return on(contains(std::move(needle)), reply(std::move(response)));
  }

  Completion send(const ChatRequest& request) override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    for (const auto& rule : rules_) {
      if (rule.matches(request)) return {rule.respond(request), std::string(kEpochTimestamp)};
    }
    throw NoMatchingRuleError(request.fingerprint);
  }

  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  std::vector<MockRule> rules_;
  std::atomic<std::size_t> calls_{0};
};

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

struct GatewayResult {
  std::string text;
  unsigned attempts = 1;
  std::string timestamp;
};

class Gateway {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  Gateway(BackendConfig config, std::shared_ptr<Backend> backend,
          std::shared_ptr<CassetteRecorder> recorder = nullptr, Sleeper sleeper = {})
      : config_(std::move(config)),
        backend_(std::move(backend)),
        recorder_(std::move(recorder)),
        sleeper_(sleeper ? std::move(sleeper)
                         : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })) {
    config_.validate();
    if (!backend_) throw InvalidArgumentError("gateway requires a backend");
  }

  const BackendConfig& config() const noexcept { return config_; }
  Backend& backend() const noexcept { return *backend_; }

  ChatRequest request(std::string user_text, std::uint32_t sample_index = 0,
                      std::string system_role = {}) const {
    return make_request(config_, std::move(system_role), std::move(user_text), sample_index);
  }

  GatewayResult complete(const ChatRequest& request) {
    Admission admission(*this);
    const auto start = std::chrono::steady_clock::now();
    unsigned attempt = 0;
    while (true) {
      ++attempt;
      try {
        Completion c = backend_->send(request);
        if (c.text.empty()) throw TransportError("empty response", request.fingerprint, attempt);
        if (recorder_) {
          const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
              std::chrono::steady_clock::now() - start);
          recorder_->append({request.fingerprint, request, c.text, elapsed.count(), c.timestamp, attempt});
        }
        total_calls_.fetch_add(attempt, std::memory_order_relaxed);
        return {std::move(c.text), attempt, std::move(c.timestamp)};
      } catch (const TransportError& e) {
        if (attempt >= config_.max_attempts) {
          total_calls_.fetch_add(attempt, std::memory_order_relaxed);
          throw TransportError(std::string("transport failure after ") + std::to_string(attempt) +
                                   " attempts: " + e.what(),
                               request.fingerprint, attempt);
        }
        sleeper_(config_.backoff_base * (1LL << (attempt - 1)));
      }
    }
  }

  // Total backend attempts made through this gateway.
  std::size_t attempts_made() const noexcept { return total_calls_.load(); }

 private:
  // Blocks until fewer than max_concurrent requests are in flight.
  class Admission {
   public:
    explicit Admission(Gateway& g) : g_(g) {
      std::unique_lock lock(g_.mu_);
      g_.cv_.wait(lock, [&] { return g_.in_flight_ < g_.config_.max_concurrent; });
      ++g_.in_flight_;
    }
    ~Admission() {
      {
        std::lock_guard lock(g_.mu_);
        --g_.in_flight_;
      }
      g_.cv_.notify_one();
    }
    Admission(const Admission&) = delete;
    Admission& operator=(const Admission&) = delete;

   private:
    Gateway& g_;
  };

  BackendConfig config_;
  std::shared_ptr<Backend> backend_;
  std::shared_ptr<CassetteRecorder> recorder_;
  Sleeper sleeper_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t in_flight_ = 0;
  std::atomic<std::size_t> total_calls_{0};
};

inline std::shared_ptr<MockBackend> mock_backend(std::vector<MockRule> rules) {
  return std::make_shared<MockBackend>(std::move(rules));
}

// ---------------------------------------------------------------------------
// Config (de)serialization
// ---------------------------------------------------------------------------

inline BackendConfig backend_config_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("backend", "expected an object");
  BackendConfig c;
  auto get_str = [&](const char* k, std::string& out) {
    if (auto it = j.find(k); it != j.end()) {
      if (!it->is_string()) throw SchemaError(std::string("backend.") + k, "expected a string");
      out = it->get<std::string>();
    }
  };
  get_str("backend_id", c.backend_id);
  get_str("adapter", c.adapter);
  get_str("endpoint", c.endpoint);
  get_str("model", c.model);
  get_str("auth_env", c.auth_env);
  if (c.backend_id.empty()) throw SchemaError("backend.backend_id", "missing field");
  c.max_concurrent = j.value("max_concurrent", std::size_t{1});
  c.request_timeout = std::chrono::milliseconds(j.value("timeout_ms", std::int64_t{60000}));
  c.max_attempts = j.value("max_attempts", 3u);
  c.backoff_base = std::chrono::milliseconds(j.value("backoff_ms", std::int64_t{500}));
  c.max_tokens = j.value("max_tokens", 2048u);
  if (auto it = j.find("sampling"); it != j.end()) {
    if (!it->is_object()) throw SchemaError("backend.sampling", "expected an object");
    for (auto s = it->begin(); s != it->end(); ++s) {
      if (!s->is_number()) throw SchemaError("backend.sampling." + s.key(), "expected a number");
      c.sampling[s.key()] = s->get<double>();
    }
  }
  c.validate();
  return c;
}

// Secret-free snapshot for manifests.
inline json to_json(const BackendConfig& c) {
  json s = json::object();
  for (const auto& [k, v] : c.sampling) s[k] = v;
  return json{{"backend_id", c.backend_id},   {"adapter", c.adapter},
              {"endpoint", c.endpoint},       {"model", c.model},
              {"auth_env", c.auth_env},       {"max_concurrent", c.max_concurrent},
              {"timeout_ms", c.request_timeout.count()}, {"max_attempts", c.max_attempts},
              {"backoff_ms", c.backoff_base.count()},    {"max_tokens", c.max_tokens},
              {"sampling", s}};
}

}  // namespace cpg
