// Copyright 2026 The cpg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "cpg/gateway.hpp"
#include "cpg/http_backend.hpp"
#include "fixtures.hpp"

using namespace cpg;
using cpg::testing::mock_config;
using cpg::testing::TempDir;
using namespace std::chrono_literals;

namespace {

// Records requested sleeps instead of sleeping.
struct FakeSleeper {
  std::shared_ptr<std::vector<std::chrono::milliseconds>> slept = std::make_shared<std::vector<std::chrono::milliseconds>>();
  Gateway::Sleeper fn() {
    auto s = slept;
    return [s](std::chrono::milliseconds d) { s->push_back(d); };
  }
};

// Fails the first `failures` calls with a transport error.
class FlakyBackend final : public Backend {
 public:
  explicit FlakyBackend(int failures) : failures_(failures) {}
  Completion send(const ChatRequest& r) override {
    if (calls_++ < failures_) throw TransportError("simulated 503", r.fingerprint);
    return {"ok after " + std::to_string(calls_.load()), std::string(kEpochTimestamp)};
  }
  int calls() const { return calls_; }

 private:
  int failures_;
  std::atomic<int> calls_{0};
};

// Tracks the peak number of concurrent send() calls.
class ProbeBackend final : public Backend {
 public:
  Completion send(const ChatRequest&) override {
    const int now = ++active_;
    int seen = peak_.load();
    while (now > seen && !peak_.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(5ms);
    --active_;
    return {"done", std::string(kEpochTimestamp)};
  }
  int peak() const { return peak_; }

 private:
  std::atomic<int> active_{0};
  std::atomic<int> peak_{0};
};

}  // namespace

TEST(Fingerprint, StableAndSensitive) {
  auto c = mock_config("m");
  c.sampling["temperature"] = 0.7;
  const auto a = make_request(c, "", "hello", 0);
  const auto b = make_request(c, "", "hello", 0);
  EXPECT_EQ(a.fingerprint, b.fingerprint);
  EXPECT_EQ(a.fingerprint.size(), 64u);
  EXPECT_NE(a.fingerprint, make_request(c, "", "hello!", 0).fingerprint);
  EXPECT_NE(a.fingerprint, make_request(c, "sys", "hello", 0).fingerprint);
  EXPECT_NE(a.fingerprint, make_request(c, "", "hello", 1).fingerprint);
  auto c2 = c;
  c2.sampling["temperature"] = 0.2;
  EXPECT_NE(a.fingerprint, make_request(c2, "", "hello", 0).fingerprint);
  auto c3 = c;
  c3.backend_id = "other";
  EXPECT_NE(a.fingerprint, make_request(c3, "", "hello", 0).fingerprint);
  EXPECT_EQ(a.fingerprint, compute_fingerprint(a));
}

TEST(Mock, FirstMatchingRuleAndCallCount) {
  auto m = std::make_shared<MockBackend>();
  m->on("alpha", "A").on("a", "generic");
  Gateway gw(mock_config("m"), m);
  EXPECT_EQ(gw.complete(gw.request("alpha beta")).text, "A");
  EXPECT_EQ(gw.complete(gw.request("a b")).text, "generic");
  EXPECT_THROW(gw.complete(gw.request("zzz")), NoMatchingRuleError);
  EXPECT_EQ(m->calls(), 3u);
}

TEST(Gateway, RetriesTransportErrorsWithExponentialBackoff) {
  auto cfg = mock_config("flaky");
  cfg.max_attempts = 4;
  cfg.backoff_base = 100ms;
  auto backend = std::make_shared<FlakyBackend>(2);
  FakeSleeper sleeper;
  Gateway gw(cfg, backend, nullptr, sleeper.fn());
  const auto r = gw.complete(gw.request("x"));
  EXPECT_EQ(r.text, "ok after 3");
  EXPECT_EQ(r.attempts, 3u);
  EXPECT_EQ(*sleeper.slept, (std::vector<std::chrono::milliseconds>{100ms, 200ms}));
  EXPECT_EQ(gw.attempts_made(), 3u);
}

TEST(Gateway, GivesUpAfterMaxAttempts) {
  auto cfg = mock_config("flaky");
  cfg.max_attempts = 3;
  auto backend = std::make_shared<FlakyBackend>(10);
  FakeSleeper sleeper;
  Gateway gw(cfg, backend, nullptr, sleeper.fn());
  try {
    gw.complete(gw.request("x"));
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_EQ(e.attempts(), 3u);
  }
  EXPECT_EQ(backend->calls(), 3);
  EXPECT_EQ(sleeper.slept->size(), 2u);
}

TEST(Gateway, NonTransportErrorsAreNotRetried) {
  class Denied final : public Backend {
   public:
    int calls = 0;
    Completion send(const ChatRequest& r) override {
      ++calls;
      throw AuthError("denied", r.fingerprint);
    }
  };
  auto backend = std::make_shared<Denied>();
  Gateway gw(mock_config("d"), backend, nullptr, [](auto) {});
  EXPECT_THROW(gw.complete(gw.request("x")), AuthError);
  EXPECT_EQ(backend->calls, 1);
}

TEST(Gateway, EmptyResponseIsRetryable) {
  auto m = std::make_shared<MockBackend>();
  m->on("x", "");
  auto cfg = mock_config("m");
  cfg.max_attempts = 2;
  Gateway gw(cfg, m, nullptr, [](auto) {});
  EXPECT_THROW(gw.complete(gw.request("x")), TransportError);
  EXPECT_EQ(m->calls(), 2u);
}

TEST(Gateway, ConcurrencyBoundedByMaxConcurrent) {
  for (std::size_t bound : {1u, 3u}) {
    auto probe = std::make_shared<ProbeBackend>();
    Gateway gw(mock_config("p", bound), probe);
    std::vector<std::thread> threads;
    for (int i = 0; i < 12; ++i) {
      threads.emplace_back([&, i] { gw.complete(gw.request("q" + std::to_string(i))); });
    }
    for (auto& t : threads) t.join();
    EXPECT_LE(probe->peak(), static_cast<int>(bound));
    EXPECT_GE(probe->peak(), 1);
  }
}

TEST(Gateway, ConfigValidation) {
  auto c = mock_config("x");
  c.max_concurrent = 0;
  EXPECT_THROW(Gateway(c, std::make_shared<MockBackend>()), InvalidArgumentError);
  EXPECT_THROW(Gateway(mock_config("x"), nullptr), InvalidArgumentError);
}

TEST(Cassette, RecordThenReplay) {
  TempDir dir;
  const auto path = dir / "c.jsonl";
  auto m = std::make_shared<MockBackend>();
  m->on(contains("q"), [](const ChatRequest& r) { return "answer to " + r.user_text; });
  std::vector<std::string> recorded;
  {
    auto rec = record_cassette(path);
    Gateway gw(mock_config("m"), m, rec);
    for (int i = 0; i < 5; ++i) recorded.push_back(gw.complete(gw.request("q" + std::to_string(i))).text);
    gw.complete(gw.request("q0"));  // duplicate fingerprint is not re-recorded
    EXPECT_EQ(rec->size(), 5u);
  }
  EXPECT_EQ(read_jsonl(path).size(), 5u);
  Gateway replay(mock_config("m"), replay_cassette(path));
  for (int i = 0; i < 5; ++i) EXPECT_EQ(replay.complete(replay.request("q" + std::to_string(i))).text, recorded[i]);
  EXPECT_EQ(m->calls(), 6u);  // replay never reaches the mock
  try {
    replay.complete(replay.request("q9"));
    FAIL();
  } catch (const ReplayMissError& e) {
    EXPECT_EQ(e.fingerprint(), replay.request("q9").fingerprint);
  }
}

TEST(Cassette, RecorderAppendsToExisting) {
  TempDir dir;
  const auto path = dir / "c.jsonl";
  auto m = std::make_shared<MockBackend>();
  m->on("q", "r");
  {
    Gateway gw(mock_config("m"), m, record_cassette(path));
    gw.complete(gw.request("q1"));
  }
  {
    Gateway gw(mock_config("m"), m, record_cassette(path));
    gw.complete(gw.request("q1"));
    gw.complete(gw.request("q2"));
  }
  EXPECT_EQ(Cassette::load(path).size(), 2u);
}

TEST(Cassette, CorruptFilesNameTheLine) {
  TempDir dir;
  auto m = std::make_shared<MockBackend>();
  m->on("q", "r");
  {
    Gateway gw(mock_config("m"), m, record_cassette(dir / "good.jsonl"));
    gw.complete(gw.request("q1"));
  }
  const std::string good = read_file(dir / "good.jsonl");
  auto expect_line = [&](const std::string& content, std::size_t line) {
    write_file(dir / "bad.jsonl", content);
    try {
      Cassette::load(dir / "bad.jsonl");
      FAIL() << content;
    } catch (const CassetteError& e) {
      EXPECT_EQ(e.line(), line) << e.what();
    } catch (const DataError&) {
      // malformed JSON is reported by the JSONL reader
    }
  };
  expect_line(good + good, 2);  // duplicate fingerprint
  json tampered = json::parse(good);
  tampered["request"]["user_text"] = "changed";
  expect_line(good + tampered.dump() + "\n", 2);
  json empty = json::parse(good);
  empty["response_text"] = "";
  expect_line(empty.dump() + "\n", 1);
  json noreq = json::parse(good);
  noreq.erase("request");
  expect_line(noreq.dump() + "\n", 1);
  write_file(dir / "junk.jsonl", "{not json\n");
  EXPECT_THROW(Cassette::load(dir / "junk.jsonl"), DataError);
  EXPECT_THROW(Cassette::load(dir / "absent.jsonl"), MissingInputError);
}

TEST(BackendConfigJson, RoundTripAndErrors) {
  const json j{{"backend_id", "gpt"}, {"adapter", "openai"}, {"endpoint", "https://x"}, {"auth_env", "KEY"},
               {"max_concurrent", 3}, {"timeout_ms", 1500},   {"max_attempts", 5},          {"backoff_ms", 20},
               {"max_tokens", 99},   {"sampling", {{"temperature", 0.5}}}};
  const auto c = backend_config_from_json(j);
  EXPECT_EQ(c.max_concurrent, 3u);
  EXPECT_EQ(c.request_timeout, 1500ms);
  EXPECT_EQ(c.max_attempts, 5u);
  EXPECT_DOUBLE_EQ(c.sampling.at("temperature"), 0.5);
  const auto c2 = backend_config_from_json(to_json(c));
  EXPECT_EQ(to_json(c2), to_json(c));
  EXPECT_THROW(backend_config_from_json(json{{"adapter", "openai"}}), SchemaError);
  EXPECT_THROW(backend_config_from_json(json{{"backend_id", 3}}), SchemaError);
  EXPECT_THROW(backend_config_from_json(json{{"backend_id", "x"}, {"sampling", {{"t", "hot"}}}}), SchemaError);
  EXPECT_THROW(backend_config_from_json(json{{"backend_id", "x"}, {"max_attempts", 0}}), InvalidArgumentError);
}

// --- HTTP adapters against a local server ----------------------------------

namespace {

class LocalServer {
 public:
  LocalServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

BackendConfig http_config(const std::string& adapter, const std::string& url) {
  BackendConfig c;
  c.backend_id = adapter + "-model";
  c.adapter = adapter;
  c.endpoint = url;
  c.auth_env = "CPG_TEST_KEY";
  c.request_timeout = 5000ms;
  c.sampling["temperature"] = 0.25;
  return c;
}

}  // namespace

TEST(Wire, SplitEndpoint) {
  EXPECT_EQ(wire::split_endpoint("https://api.x.com").origin, "https://api.x.com");
  EXPECT_EQ(wire::split_endpoint("https://api.x.com/v2/chat").path, "/v2/chat");
  EXPECT_EQ(wire::split_endpoint("http://h:81/").path, "");
  EXPECT_THROW(wire::split_endpoint("no-scheme"), InvalidArgumentError);
}

TEST(Wire, ResponseShapes) {
  EXPECT_EQ(wire::openai_text(json::parse(R"({"choices":[{"message":{"content":"hi"}}]})")), "hi");
  EXPECT_THROW(wire::openai_text(json::parse(R"({"choices":[]})")), TransportError);
  EXPECT_EQ(wire::anthropic_text(json::parse(
                R"({"content":[{"type":"text","text":"a"},{"type":"tool_use"},{"type":"text","text":"b"}]})")),
            "ab");
  EXPECT_THROW(wire::anthropic_text(json::parse(R"({"error":{}})")), TransportError);
}

TEST(Http, OpenAiAdapter) {
  LocalServer srv;
  json seen;
  std::string auth;
  srv.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    auth = req.get_header_value("Authorization");
    res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"Hello there"}}]})", "application/json");
  });
  ::setenv("CPG_TEST_KEY", "sk-test", 1);
  const auto cfg = http_config("openai", srv.url());
  Gateway gw(cfg, std::make_shared<HttpBackend>(cfg));
  EXPECT_EQ(gw.complete(gw.request("Say hi", 0, "You are terse.")).text, "Hello there");
  EXPECT_EQ(auth, "Bearer sk-test");
  EXPECT_EQ(seen["model"], "openai-model");
  EXPECT_DOUBLE_EQ(seen["temperature"].get<double>(), 0.25);
  ASSERT_EQ(seen["messages"].size(), 2u);
  EXPECT_EQ(seen["messages"][0]["role"], "system");
  EXPECT_EQ(seen["messages"][1]["content"], "Say hi");
  EXPECT_FALSE(seen.contains("sample_index"));
}

TEST(Http, AnthropicAdapter) {
  LocalServer srv;
  json seen;
  httplib::Headers headers;
  srv.server().Post("/v1/messages", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    headers = req.headers;
    res.set_content(R"({"content":[{"type":"text","text":"Alignment Score: 5"}]})", "application/json");
  });
  ::setenv("CPG_TEST_KEY", "ak-test", 1);
  const auto cfg = http_config("anthropic", srv.url());
  Gateway gw(cfg, std::make_shared<HttpBackend>(cfg));
  EXPECT_EQ(gw.complete(gw.request("Rate it", 0, "Judge.")).text, "Alignment Score: 5");
  EXPECT_EQ(headers.find("x-api-key")->second, "ak-test");
  EXPECT_EQ(headers.find("anthropic-version")->second, "2023-06-01");
  EXPECT_EQ(seen["system"], "Judge.");
  EXPECT_EQ(seen["max_tokens"], 2048);
}

TEST(Http, UnauthorizedIsAuthError) {
  LocalServer srv;
  std::atomic<int> hits{0};
  srv.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 401;
  });
  ::setenv("CPG_TEST_KEY", "bad", 1);
  const auto cfg = http_config("openai", srv.url());
  Gateway gw(cfg, std::make_shared<HttpBackend>(cfg), nullptr, [](auto) {});
  EXPECT_THROW(gw.complete(gw.request("x")), AuthError);
  EXPECT_EQ(hits, 1);
}

TEST(Http, RateLimitRetriesThenSucceeds) {
  LocalServer srv;
  std::atomic<int> hits{0};
  srv.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    if (++hits < 3) {
      res.status = 429;
      return;
    }
    res.set_content(R"({"choices":[{"message":{"content":"finally"}}]})", "application/json");
  });
  ::setenv("CPG_TEST_KEY", "k", 1);
  auto cfg = http_config("openai", srv.url());
  cfg.max_attempts = 3;
  FakeSleeper sleeper;
  Gateway gw(cfg, std::make_shared<HttpBackend>(cfg), nullptr, sleeper.fn());
  const auto r = gw.complete(gw.request("x"));
  EXPECT_EQ(r.text, "finally");
  EXPECT_EQ(r.attempts, 3u);
  EXPECT_EQ(hits, 3);
}

TEST(Http, MissingCredentialNeverConnects) {
  ::unsetenv("CPG_UNSET_KEY");
  auto cfg = http_config("openai", "http://127.0.0.1:1");
  cfg.auth_env = "CPG_UNSET_KEY";
  Gateway gw(cfg, std::make_shared<HttpBackend>(cfg));
  EXPECT_THROW(gw.complete(gw.request("x")), AuthError);
}

TEST(Http, UnreachableHostIsTransportError) {
  ::setenv("CPG_TEST_KEY", "k", 1);
  auto cfg = http_config("openai", "http://127.0.0.1:1");
  cfg.max_attempts = 2;
  Gateway gw(cfg, std::make_shared<HttpBackend>(cfg), nullptr, [](auto) {});
  EXPECT_THROW(gw.complete(gw.request("x")), TransportError);
}

TEST(Http, AdapterValidation) {
  auto cfg = http_config("openai", "");
  EXPECT_THROW(HttpBackend{cfg}, InvalidArgumentError);
  cfg = http_config("mock", "http://x");
  EXPECT_THROW(HttpBackend{cfg}, InvalidArgumentError);
}
