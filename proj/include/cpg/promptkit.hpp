// Copyright 2026 The cpg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cctype>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cpg/curriculum.hpp"
#include "cpg/error.hpp"
#include "cpg/io.hpp"

namespace cpg {

enum class PromptKind {
  kWonderTopics,
  kBase,
  kCogent,
  kJudgeAlignment,
  kJudgeCategorize,
  kJudgeComprehensibility,
};

inline constexpr std::array<PromptKind, 6> kAllPromptKinds = {
    PromptKind::kWonderTopics,   PromptKind::kBase,
    PromptKind::kCogent,         PromptKind::kJudgeAlignment,
    PromptKind::kJudgeCategorize, PromptKind::kJudgeComprehensibility};

// File stem under the template directory.
constexpr std::string_view template_name(PromptKind kind) noexcept {
  switch (kind) {
    case PromptKind::kWonderTopics: return "wonder";
    case PromptKind::kBase: return "base";
    case PromptKind::kCogent: return "cogent";
    case PromptKind::kJudgeAlignment: return "judge_alignment";
    case PromptKind::kJudgeCategorize: return "judge_categorize";
    case PromptKind::kJudgeComprehensibility: return "judge_comprehensibility";
  }
  return "";
}

enum class GenerationMode { kBase, kCogent };

constexpr std::string_view to_string(GenerationMode m) noexcept {
  return m == GenerationMode::kBase ? "BASE" : "COGENT";
}

inline GenerationMode parse_generation_mode(std::string_view s) {
  std::string up;
  for (char c : s) up.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (up == "BASE") return GenerationMode::kBase;
  if (up == "COGENT") return GenerationMode::kCogent;
  throw InvalidArgumentError("unknown generation mode '" + std::string(s) + "'");
}

struct RenderedPrompt {
  PromptKind kind;
  std::string text;
  std::map<std::string, std::string> placeholders_resolved;
};

inline constexpr std::string_view kDefaultReadabilityTarget = "Flesch Kincaid Grade Level";

struct GenerationSpec {
  CurriculumItem item;
  GenerationMode mode = GenerationMode::kCogent;
  std::string topic;
  std::size_t word_target = 0;
  std::string readability_target{kDefaultReadabilityTarget};
};

// Words requested per passage: grade x 100.
inline std::size_t word_target(int grade) {
  if (!valid_grade(grade)) throw GradeRangeError("", grade);
  return static_cast<std::size_t>(grade) * 100;
}

inline GenerationSpec make_generation_spec(const CurriculumItem& item, GenerationMode mode,
                                           std::string topic) {
  return {item, mode, std::move(topic), word_target(item.grade),
          std::string(kDefaultReadabilityTarget)};
}

// Substitutes {{name}} markers. Every marker must have a value; leftovers or
// unterminated markers raise TemplateError.
inline std::string render_template(std::string_view tmpl,
                                   const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size() + 256);
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    const std::size_t close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) throw TemplateError("unterminated placeholder in template");
    out.append(tmpl.substr(pos, open - pos));
    const std::string name(tmpl.substr(open + 2, close - open - 2));
    auto it = values.find(name);
    if (it == values.end()) throw TemplateError("unresolved placeholder '{{" + name + "}}'");
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

// The six prompt templates, loaded verbatim from `<dir>/<name>.txt`.
class TemplateSet {
 public:
  static TemplateSet load(const std::filesystem::path& dir) {
    TemplateSet set;
    for (PromptKind kind : kAllPromptKinds) {
      const auto path = dir / (std::string(template_name(kind)) + ".txt");
      std::string text = read_file(path);
      if (!text.empty() && text.back() == '\n') text.pop_back();
      if (!text.empty() && text.back() == '\r') text.pop_back();
      set.texts_[static_cast<std::size_t>(kind)] = std::move(text);
    }
    return set;
  }

  static TemplateSet from_texts(const std::map<PromptKind, std::string>& texts) {
    TemplateSet set;
    for (const auto& [kind, text] : texts) set.texts_[static_cast<std::size_t>(kind)] = text;
    return set;
  }

  const std::string& text(PromptKind kind) const {
    return texts_[static_cast<std::size_t>(kind)];
  }

  // name -> sha256 of the template text, for run manifests.
  std::map<std::string, std::string> digests() const {
    std::map<std::string, std::string> out;
    for (PromptKind kind : kAllPromptKinds) out[std::string(template_name(kind))] = sha256_hex(text(kind));
    return out;
  }

  RenderedPrompt render(PromptKind kind, std::map<std::string, std::string> values) const {
    RenderedPrompt p{kind, render_template(text(kind), values), std::move(values)};
    return p;
  }

 private:
  std::array<std::string, kAllPromptKinds.size()> texts_;
};

inline RenderedPrompt render_wonder_topics_prompt(const TemplateSet& templates,
                                                  const CurriculumItem& item,
                                                  std::size_t n_topics) {
  if (n_topics < 1) throw InvalidArgumentError("n_topics must be at least 1");
  return templates.render(PromptKind::kWonderTopics,
                          {{"grade", std::to_string(item.grade)},
                           {"n_topics", std::to_string(n_topics)},
                           {"readability_target", std::string(kDefaultReadabilityTarget)},
                           {"concept", item.science_concept.name},
                           {"core_ideas", item.core_idea.text},
                           {"learning_outcomes", item.outcome.text}});
}

namespace prompt_detail {
inline void check_passage_spec(const GenerationSpec& spec) {
  if (spec.word_target == 0) throw InvalidArgumentError("word_target must be positive");
  if (spec.topic.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw InvalidArgumentError("topic must be nonempty");
  }
}
}  // namespace prompt_detail

inline RenderedPrompt render_base_prompt(const TemplateSet& templates, const GenerationSpec& spec) {
  if (spec.mode != GenerationMode::kBase) throw ModeMismatchError("render_base_prompt: spec mode is COGENT");
  prompt_detail::check_passage_spec(spec);
  return templates.render(PromptKind::kBase,
                          {{"grade", std::to_string(spec.item.grade)},
                           {"word_target", std::to_string(spec.word_target)},
                           {"topic", spec.topic}});
}

inline RenderedPrompt render_cogent_prompt(const TemplateSet& templates, const GenerationSpec& spec) {
  if (spec.mode != GenerationMode::kCogent) throw ModeMismatchError("render_cogent_prompt: spec mode is BASE");
  prompt_detail::check_passage_spec(spec);
  return templates.render(PromptKind::kCogent,
                          {{"grade", std::to_string(spec.item.grade)},
                           {"word_target", std::to_string(spec.word_target)},
                           {"readability_target", spec.readability_target},
                           {"topic", spec.topic},
                           {"concept", spec.item.science_concept.name},
                           {"core_ideas", spec.item.core_idea.text},
                           {"learning_outcomes", spec.item.outcome.text}});
}

inline RenderedPrompt render_passage_prompt(const TemplateSet& templates, const GenerationSpec& spec) {
  return spec.mode == GenerationMode::kBase ? render_base_prompt(templates, spec)
                                            : render_cogent_prompt(templates, spec);
}

// Extracts numbered-list items ("1. ...", "2) ...") in order, numerals stripped.
inline std::vector<std::string> parse_topics(std::string_view response, std::size_t n_expected) {
  std::vector<std::string> topics;
  std::size_t pos = 0;
  while (pos <= response.size()) {
    std::size_t end = response.find('\n', pos);
    if (end == std::string_view::npos) end = response.size();
    std::string_view line = response.substr(pos, end - pos);
    pos = end + 1;

    std::size_t i = line.find_first_not_of(" \t*-");
    if (i == std::string_view::npos) continue;
    const std::size_t digits = i;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i == digits || i >= line.size() || (line[i] != '.' && line[i] != ')')) continue;
    ++i;
    std::string_view rest = line.substr(i);
    const std::size_t b = rest.find_first_not_of(" \t");
    if (b == std::string_view::npos) continue;
    const std::size_t e = rest.find_last_not_of(" \t\r\\");
    std::string topic(rest.substr(b, e - b + 1));
    // Bold markdown wrappers are common in chat output.
    while (topic.size() >= 4 && topic.starts_with("**") && topic.ends_with("**")) {
      topic = topic.substr(2, topic.size() - 4);
    }
    if (!topic.empty()) topics.push_back(std::move(topic));
  }
  if (topics.size() < n_expected) {
    throw MalformedResponseError("expected " + std::to_string(n_expected) + " topics, parsed " +
                                     std::to_string(topics.size()),
                                 std::string(response));
  }
  return topics;
}

}  // namespace cpg
