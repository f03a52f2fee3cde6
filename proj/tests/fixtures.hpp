// Copyright 2026 The cpg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures for the unit and acceptance tests.

#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "cpg/config.hpp"
#include "cpg/curriculum.hpp"
#include "cpg/gateway.hpp"
#include "cpg/io.hpp"
#include "cpg/pipeline.hpp"

namespace cpg::testing {

inline std::filesystem::path source_dir() { return CPG_SOURCE_DIR; }
inline std::filesystem::path templates_dir() { return source_dir() / "templates"; }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "cpg") {
    static std::atomic<unsigned> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// 29 concepts over four domains, 79 core ideas, one outcome per core idea,
// grades cycling 1..5.
inline json ngss_shaped_catalog_json() {
  static const char* kDomains[] = {"PS", "LS", "ESS", "ETS"};
  json doc{{"standard", "NGSS-shaped fixture"}, {"domains", json::array()}, {"concepts", json::array()}};
  for (const char* d : kDomains) doc["domains"].push_back({{"code", d}, {"name", std::string(d) + " domain"}});
  int idea_no = 0;
  for (int c = 0; c < 29; ++c) {
    const std::string cid = "C" + std::to_string(c + 10);
    json concept_json{{"id", cid}, {"domain", kDomains[c % 4]}, {"name", "Concept " + std::to_string(c)},
                      {"core_ideas", json::array()}};
    const int ideas = c < 21 ? 3 : 2;  // 21*3 + 8*2 = 79
    for (int i = 0; i < ideas; ++i, ++idea_no) {
      const std::string iid = cid + "." + static_cast<char>('A' + i);
      const int grade = idea_no % 5 + 1;
      json idea{{"id", iid},
                {"text", "Core idea " + std::to_string(idea_no) + " about topic " + std::to_string(c)},
                {"outcomes", json::array()}};
      idea["outcomes"].push_back({{"id", std::to_string(grade) + "-" + iid + "-1"},
                                  {"text", "Explain core idea " + std::to_string(idea_no)},
                                  {"grade", grade}});
      concept_json["core_ideas"].push_back(std::move(idea));
    }
    doc["concepts"].push_back(std::move(concept_json));
  }
  return doc;
}

// One concept, one core idea, outcomes at the given grades.
inline json small_catalog_json(const std::vector<int>& grades) {
  json outcomes = json::array();
  for (std::size_t i = 0; i < grades.size(); ++i) {
    outcomes.push_back({{"id", "O" + std::to_string(i + 1)},
                        {"text", "Learning outcome number " + std::to_string(i + 1)},
                        {"grade", grades[i]}});
  }
  return json{{"standard", "small"},
              {"domains", {{{"code", "LS"}, {"name", "Life Sciences"}}}},
              {"concepts",
               {{{"id", "LS1"},
                 {"domain", "LS"},
                 {"name", "Plant structures"},
                 {"core_ideas", {{{"id", "LS1.A"}, {"text", "Plants have parts"}, {"outcomes", outcomes}}}}}}}};
}

inline const char* kTopicList =
    "1. Why do roots grow down?\n2. How do leaves catch light?\n3. What do stems carry?\n"
    "4. Why are some leaves wide?\n5. How do seeds travel?\n";

// Answers every prompt shape with fixed, well-formed output.
inline std::shared_ptr<MockBackend> scripted_backend(const std::string& alignment = "Alignment Score: 4") {
  auto m = std::make_shared<MockBackend>();
  m->on("[Curriculum Item Categories]", "Predicted Type: A")
      .on("[Comprehensibility Aspects]", "Readability: 5, Correctness: 5, Coherence: 4, Engagement: 4")
      .on("[Curriculum Information]", alignment)
      .on(contains("=== Wonder Topic ==="),
          [](const ChatRequest& r) {
            return "Plants are alive. Roots hold them. Sample " + std::to_string(r.sample_index) + " of " +
                   r.backend_id + " " + cpg::sha256_hex(r.user_text).substr(0, 8) + ".";
          })
      .on("=== Science Concept ===", kTopicList);
  return m;
}

inline BackendConfig mock_config(const std::string& id, std::size_t max_concurrent = 1) {
  BackendConfig c;
  c.backend_id = id;
  c.adapter = "mock";
  c.max_concurrent = max_concurrent;
  c.backoff_base = std::chrono::milliseconds(0);
  return c;
}

// A run config rooted in `dir` that uses the repo templates.
inline RunConfig mock_run_config(const std::filesystem::path& dir, const json& catalog,
                                 std::vector<std::string> backend_ids) {
  write_file(dir / "catalog.json", catalog.dump(2));
  RunConfig c;
  c.base_dir = dir;
  c.catalog = dir / "catalog.json";
  c.templates = templates_dir();
  c.run_root = dir / "runs";
  c.seed = 42;
  for (const auto& id : backend_ids) c.backends.push_back(mock_config(id, 4));
  c.topic_backend = backend_ids.front();
  c.judge = mock_config("judge", 4);
  c.parallel_reference = false;
  return c;
}

// Every backend id gets its own scripted mock, shared across calls.
inline BackendFactory mock_factory(std::function<std::shared_ptr<Backend>(const BackendConfig&)> make = {}) {
  auto made = std::make_shared<std::map<std::string, std::shared_ptr<Backend>>>();
  auto mu = std::make_shared<std::mutex>();
  return [make, made, mu](const BackendConfig& c) -> std::shared_ptr<Backend> {
    std::lock_guard lock(*mu);
    auto& slot = (*made)[c.backend_id];
    if (!slot) slot = make ? make(c) : scripted_backend();
    return slot;
  };
}

enum class VerdictParser { kAlignment, kCategory, kComprehensibility };

struct AdversarialVerdict {
  VerdictParser parser;
  const char* text;
};

// Malformed judge outputs; every one must be rejected. Category strings are
// parsed against the labels A..G.
inline const std::vector<AdversarialVerdict>& adversarial_verdicts() {
  using P = VerdictParser;
  static const std::vector<AdversarialVerdict> v = {
      {P::kAlignment, ""},
      {P::kAlignment, "Score: high"},
      {P::kAlignment, "Alignment Score:"},
      {P::kAlignment, "Alignment Score: 0"},
      {P::kAlignment, "Alignment Score: 6"},
      {P::kAlignment, "Alignment Score: 4.5"},
      {P::kAlignment, "Alignment Score: five"},
      {P::kAlignment, "Alignment Score 5"},
      {P::kAlignment, "Misalignment Score: 5"},
      {P::kAlignment, "Alignment Score: 3. On reflection, Alignment Score: 7"},
      {P::kAlignment, "Alignment Score: \xEF\xBC\x95"},
      {P::kAlignment, "Alignment Score: 4 Alignment Score:"},
      {P::kCategory, "Predicted Type: Z"},
      {P::kCategory, "The answer is Type B."},
      {P::kCategory, "Predicted Type:"},
      {P::kCategory, "Predicted Type: AB"},
      {P::kComprehensibility, "Readability: 5"},
      {P::kComprehensibility, "Readability: 5, Correctness: 5, Coherence: 5"},
      {P::kComprehensibility, "Readability: 5, Correctness: 6, Coherence: 5, Engagement: 5"},
      {P::kComprehensibility, "Readability: 5, Correctness: 5, Coherence: 5, Engagement: high"},
  };
  return v;
}

}  // namespace cpg::testing
