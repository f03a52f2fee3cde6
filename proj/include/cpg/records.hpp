// Copyright 2026 The cpg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "cpg/curriculum.hpp"
#include "cpg/io.hpp"
#include "cpg/promptkit.hpp"
#include "cpg/textmetrics.hpp"

namespace cpg {

enum class PassageMode { kBase, kCogent, kHuman };

constexpr std::string_view to_string(PassageMode m) noexcept {
  switch (m) {
    case PassageMode::kBase: return "BASE";
    case PassageMode::kCogent: return "COGENT";
    case PassageMode::kHuman: return "HUMAN";
  }
  return "";
}

inline PassageMode parse_passage_mode(std::string_view s) {
  if (s == "BASE") return PassageMode::kBase;
  if (s == "COGENT") return PassageMode::kCogent;
  if (s == "HUMAN") return PassageMode::kHuman;
  throw SchemaError("mode", "unknown passage mode '" + std::string(s) + "'");
}

constexpr PassageMode to_passage_mode(GenerationMode m) noexcept {
  return m == GenerationMode::kBase ? PassageMode::kBase : PassageMode::kCogent;
}

inline constexpr std::string_view kHumanBackend = "human";

struct PassageRecord {
  std::string passage_id;
  PassageMode mode = PassageMode::kCogent;
  std::string backend_id;  // "human" for reference passages
  int grade = kMinGrade;
  ItemRef item_ref;
  std::string topic;
  std::string text;
  std::size_t word_count = 0;
  std::size_t word_target = 0;
  std::uint32_t sample_index = 0;
  // "topics" for selected wonder topics, "reference" for passages written
  // against a reference-corpus topic, "corpus" for the reference texts.
  std::string source = "topics";
  std::string created;
  bool operator==(const PassageRecord&) const = default;
};

// Content-hash id. Reference passages hash their text only, so identical
// reference texts collapse to one id.
inline std::string passage_id_for(const PassageRecord& r) {
  if (r.mode == PassageMode::kHuman) return sha256_hex(r.text).substr(0, 16);
  json identity{{"mode", to_string(r.mode)}, {"backend_id", r.backend_id},
                {"item_ref", to_json(r.item_ref)}, {"topic", r.topic},
                {"sample_index", r.sample_index}, {"source", r.source}, {"text", r.text}};
  return sha256_hex(identity.dump()).substr(0, 16);
}

// Fills word_count and passage_id from the text.
inline PassageRecord finalize(PassageRecord r) {
  r.word_count = tokenize(r.text).word_count;
  r.passage_id = passage_id_for(r);
  return r;
}

inline json to_json(const PassageRecord& r) {
  return json{{"status", "ok"},
              {"passage_id", r.passage_id},
              {"mode", to_string(r.mode)},
              {"backend_id", r.backend_id},
              {"grade", r.grade},
              {"item_ref", to_json(r.item_ref)},
              {"topic", r.topic},
              {"text", r.text},
              {"word_count", r.word_count},
              {"word_target", r.word_target},
              {"sample_index", r.sample_index},
              {"source", r.source},
              {"created", r.created}};
}

inline PassageRecord passage_from_json(const json& j) {
  PassageRecord r;
  r.passage_id = detail::require_string(j, "passage_id", "passage", true);
  r.mode = parse_passage_mode(detail::require_string(j, "mode", "passage", true));
  r.backend_id = detail::require_string(j, "backend_id", "passage", true);
  r.grade = detail::require_field(j, "grade", "passage").get<int>();
  if (!valid_grade(r.grade)) throw GradeRangeError(r.passage_id, r.grade);
  r.item_ref = parse_item_ref(detail::require_field(j, "item_ref", "passage"), "passage.item_ref");
  r.topic = detail::require_string(j, "topic", "passage", false);
  r.text = detail::require_string(j, "text", "passage", false);
  r.word_count = j.value("word_count", std::size_t{0});
  r.word_target = j.value("word_target", std::size_t{0});
  r.sample_index = j.value("sample_index", std::uint32_t{0});
  r.source = j.value("source", std::string("topics"));
  r.created = j.value("created", std::string{});
  return r;
}

}  // namespace cpg
