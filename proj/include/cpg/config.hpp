// Copyright 2026 The cpg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "cpg/error.hpp"
#include "cpg/gateway.hpp"
#include "cpg/io.hpp"
#include "cpg/promptkit.hpp"

namespace cpg {

enum class JudgeTask { kAlignment, kCategorize, kComprehensibility };

inline constexpr std::array<JudgeTask, 3> kAllJudgeTasks = {
    JudgeTask::kAlignment, JudgeTask::kCategorize, JudgeTask::kComprehensibility};

constexpr std::string_view to_string(JudgeTask t) noexcept {
  switch (t) {
    case JudgeTask::kAlignment: return "alignment";
    case JudgeTask::kCategorize: return "categorize";
    case JudgeTask::kComprehensibility: return "comprehensibility";
  }
  return "";
}

inline JudgeTask parse_judge_task(std::string_view s) {
  for (JudgeTask t : kAllJudgeTasks) {
    if (s == to_string(t)) return t;
  }
  throw SchemaError("judge_tasks", "unknown judge task '" + std::string(s) + "'");
}

struct RunConfig {
  std::filesystem::path base_dir;  // relative paths resolve against this
  std::string run_id = "run";
  std::filesystem::path catalog;
  std::filesystem::path templates;
  std::filesystem::path run_root = "runs";
  std::filesystem::path cassette;  // empty: no recording or replay file
  std::filesystem::path corpus;    // empty: no reference corpus
  std::uint64_t seed = 0;
  std::size_t topics_generated = 5;
  std::size_t topics_per_item = 3;
  std::size_t passages_per_topic = 1;
  unsigned topic_max_reasks = 2;
  std::vector<GenerationMode> modes = {GenerationMode::kBase, GenerationMode::kCogent};
  std::vector<BackendConfig> backends;
  std::string topic_backend;  // defaults to the first backend
  std::optional<BackendConfig> judge;
  std::set<JudgeTask> judge_tasks = {kAllJudgeTasks.begin(), kAllJudgeTasks.end()};
  unsigned judge_repetitions = 1;
  unsigned judge_max_reasks = 2;
  double grade_margin = 1.0;
  // Bonferroni family sizes; default to the pairwise test count per metric.
  std::optional<std::size_t> table2_m;
  std::optional<std::size_t> table3_m;
  // Also generate one passage set per reference-corpus topic.
  bool parallel_reference = true;

  std::filesystem::path run_dir() const { return run_root / run_id; }

  const BackendConfig* find_backend(std::string_view id) const {
    for (const auto& b : backends) {
      if (b.backend_id == id) return &b;
    }
    if (judge && judge->backend_id == id) return &*judge;
    return nullptr;
  }

  void validate() const {
    if (run_id.empty() || run_id.find_first_of("/\\") != std::string::npos || run_id == "." || run_id == "..") {
      throw SchemaError("run_id", "must be a nonempty plain name");
    }
    if (catalog.empty()) throw SchemaError("catalog", "missing field");
    if (templates.empty()) throw SchemaError("templates", "missing field");
    if (backends.empty()) throw SchemaError("backends", "at least one generation backend is required");
    std::set<std::string> ids;
    for (const auto& b : backends) {
      if (!ids.insert(b.backend_id).second) throw SchemaError("backends", "duplicate backend_id '" + b.backend_id + "'");
    }
    if (!ids.count(topic_backend)) throw SchemaError("topic_backend", "unknown backend '" + topic_backend + "'");
    if (topics_generated < 1) throw SchemaError("topics_generated", "must be >= 1");
    if (topics_per_item < 1 || topics_per_item > topics_generated) {
      throw SchemaError("topics_per_item", "must be between 1 and topics_generated");
    }
    if (passages_per_topic < 1) throw SchemaError("passages_per_topic", "must be >= 1");
    if (modes.empty()) throw SchemaError("modes", "at least one generation mode is required");
    if (!judge_tasks.empty() && !judge) throw SchemaError("judge", "judge tasks configured without a judge backend");
    if (judge_repetitions < 1) throw SchemaError("judge_repetitions", "must be >= 1");
    if (grade_margin < 0) throw SchemaError("grade_margin", "must be non-negative");
    if (table2_m && *table2_m < 1) throw SchemaError("bonferroni.table2_m", "must be >= 1");
    if (table3_m && *table3_m < 3) throw SchemaError("bonferroni.table3_m", "must be >= 3");
  }
};

namespace config_detail {

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

inline std::string relative_to(const std::filesystem::path& base, const std::filesystem::path& p) {
  if (p.empty()) return "";
  return p.lexically_relative(base).generic_string();
}

template <class T>
T number(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number()) throw SchemaError(key, "expected a number");
  if constexpr (std::is_unsigned_v<T>) {
    if (!it->is_number_unsigned()) throw SchemaError(key, "expected a non-negative integer");
  }
  return it->get<T>();
}

inline std::string string(const json& j, const char* key, std::string fallback = {}) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_string()) throw SchemaError(key, "expected a string");
  return it->get<std::string>();
}

}  // namespace config_detail

inline RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  using namespace config_detail;
  if (!j.is_object()) throw SchemaError("config", "expected an object");
  RunConfig c;
  c.base_dir = base_dir;
  c.run_id = string(j, "run_id", "run");
  c.catalog = resolve(base_dir, string(j, "catalog"));
  c.templates = resolve(base_dir, string(j, "templates"));
  c.run_root = resolve(base_dir, string(j, "run_dir", "runs"));
  c.cassette = resolve(base_dir, string(j, "cassette"));
  c.corpus = resolve(base_dir, string(j, "corpus"));
  c.seed = number<std::uint64_t>(j, "seed", 0);
  c.topics_generated = number<std::size_t>(j, "topics_generated", 5);
  c.topics_per_item = number<std::size_t>(j, "topics_per_item", 3);
  c.passages_per_topic = number<std::size_t>(j, "passages_per_topic", 1);
  c.topic_max_reasks = number<unsigned>(j, "topic_max_reasks", 2);
  c.judge_repetitions = number<unsigned>(j, "judge_repetitions", 1);
  c.judge_max_reasks = number<unsigned>(j, "judge_max_reasks", 2);
  c.grade_margin = number<double>(j, "grade_margin", 1.0);
  c.parallel_reference = j.value("parallel_reference", true);

  if (auto it = j.find("modes"); it != j.end()) {
    if (!it->is_array()) throw SchemaError("modes", "expected an array");
    c.modes.clear();
    for (const auto& m : *it) c.modes.push_back(parse_generation_mode(m.get<std::string>()));
  }
  if (auto it = j.find("backends"); it != j.end()) {
    if (!it->is_array()) throw SchemaError("backends", "expected an array");
    for (const auto& b : *it) c.backends.push_back(backend_config_from_json(b));
  }
  c.topic_backend = string(j, "topic_backend", c.backends.empty() ? "" : c.backends.front().backend_id);
  if (auto it = j.find("judge"); it != j.end() && !it->is_null()) c.judge = backend_config_from_json(*it);
  if (auto it = j.find("judge_tasks"); it != j.end()) {
    if (!it->is_array()) throw SchemaError("judge_tasks", "expected an array");
    c.judge_tasks.clear();
    for (const auto& t : *it) c.judge_tasks.insert(parse_judge_task(t.get<std::string>()));
  }
  if (auto it = j.find("bonferroni"); it != j.end()) {
    if (!it->is_object()) throw SchemaError("bonferroni", "expected an object");
    if (it->contains("table2_m")) c.table2_m = number<std::size_t>(*it, "table2_m", 1);
    if (it->contains("table3_m")) c.table3_m = number<std::size_t>(*it, "table3_m", 3);
  }
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw SchemaError("config", "'" + path.string() + "' is not valid JSON");
  const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  return run_config_from_json(j, base);
}

// Snapshot for manifests: paths relative to the config directory, no secrets.
inline json to_json(const RunConfig& c) {
  using config_detail::relative_to;
  json backends = json::array();
  for (const auto& b : c.backends) backends.push_back(to_json(b));
  json modes = json::array();
  for (auto m : c.modes) modes.push_back(to_string(m));
  json tasks = json::array();
  for (auto t : c.judge_tasks) tasks.push_back(to_string(t));
  return json{{"run_id", c.run_id},
              {"catalog", relative_to(c.base_dir, c.catalog)},
              {"templates", relative_to(c.base_dir, c.templates)},
              {"corpus", relative_to(c.base_dir, c.corpus)},
              {"seed", c.seed},
              {"topics_generated", c.topics_generated},
              {"topics_per_item", c.topics_per_item},
              {"passages_per_topic", c.passages_per_topic},
              {"topic_max_reasks", c.topic_max_reasks},
              {"modes", modes},
              {"backends", backends},
              {"topic_backend", c.topic_backend},
              {"judge", c.judge ? to_json(*c.judge) : json(nullptr)},
              {"judge_tasks", tasks},
              {"judge_repetitions", c.judge_repetitions},
              {"judge_max_reasks", c.judge_max_reasks},
              {"grade_margin", c.grade_margin},
              {"parallel_reference", c.parallel_reference}};
}

}  // namespace cpg
